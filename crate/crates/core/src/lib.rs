//! Digital evolution of self-replicating programs written in an evolvable
//! meta-language.
//!
//! Genomes are 6144-byte files. Their meta-code region holds one-byte
//! codons which are expanded through the genome's own alphabet into
//! micro-code, then run by the [`vm`] inside a virtual [`world`] that
//! provides files, processes and selection.

pub mod analysis;
pub mod assembler;
pub mod chemistry;
pub mod mutation;
pub mod par;
pub mod translator;
pub mod vm;
pub mod world;

pub use chemistry::{default_alphabet, Alphabet, Mnemonic, MicroOp, Reg};
pub use translator::{translate, Genome, GenomeError, MicroProgram, Region};
pub use vm::{Fault, FaultKind, Host, ProcessState, RunOutcome, Step};
