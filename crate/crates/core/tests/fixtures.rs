//! Golden files under `fixtures/`. Run with `RPW_BLESS=1` to rewrite them
//! after an intentional change.

use std::path::PathBuf;

use rpw_core::assembler::{ancestor_source, assemble, build_ancestor, disassemble_genome};
use rpw_core::chemistry::{codon_table_listing, default_alphabet};
use rpw_core::translator::Genome;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn golden(name: &str, actual: &[u8]) {
    let path = fixture(name);
    if std::env::var_os("RPW_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}; run with RPW_BLESS=1", path.display()));
    assert!(expected == actual, "{name} is stale; rerun with RPW_BLESS=1 if the change is intended");
}

#[test]
fn default_alphabet_bytes() {
    golden("default_alphabet.bin", default_alphabet().as_bytes());
}

#[test]
fn codon_table() {
    golden("codon_table.txt", codon_table_listing().as_bytes());
}

#[test]
fn ancestor_listing() {
    golden("ancestor.s", ancestor_source().as_bytes());
}

#[test]
fn ancestor_genome() {
    golden("ancestor.rpw", &build_ancestor().to_bytes());
}

#[test]
fn ancestor_listing_assembles_to_the_genome() {
    let src = std::fs::read_to_string(fixture("ancestor.s")).unwrap();
    let g = assemble(&src).unwrap().to_genome().unwrap();
    assert_eq!(g, build_ancestor());
}

#[test]
fn disassembly_reassembles() {
    let g = Genome::parse(&std::fs::read(fixture("ancestor.rpw")).unwrap()).unwrap();
    let listing = disassemble_genome(&g);
    let again = assemble(&listing).unwrap().to_genome().unwrap();
    assert_eq!(again, g);
}
