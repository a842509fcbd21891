//! The generation-0 organism.
//!
//! It reseeds its generator from the clock, then five times: draws an
//! eight-letter name, copies its own file there, maps the copy and walks
//! one interval of it byte by byte, flipping a random bit of each byte with
//! that offspring's probability, and finally starts the copy.
//!
//! Register use: RegB holds the generator state throughout. Control flow is
//! built from `getEIP` arithmetic; loop heads push their own address, and the
//! byte loop keeps its exit address on the stack and its head in BA2.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::chemistry::Mnemonic::{self, *};
use crate::translator::{Genome, GENOME_LEN, HEADER_LEN, META_CODE_LEN};

use super::{assemble, expand_addnumber, AsmOptions, FILL_CODON};

/// Initial `RandomNumber`.
pub const ANCESTOR_SEED: u32 = 0;
pub const LCG_MULTIPLIER: u32 = 1_103_515_245;
pub const LCG_INCREMENT: u32 = 12_345;

/// Data-segment offsets. Everything below `0x100` is stored in the genome;
/// the rest is scratch memory that exists only while running.
pub mod var {
    pub const MULTIPLIER: u32 = 0x00;
    pub const RANDOM_NUMBER: u32 = 0x04;
    pub const SUFFIX: u32 = 0x08;
    pub const INCREMENT: u32 = 0x10;
    pub const HIGH_WORD: u32 = 0x14;
    pub const THRESHOLD: u32 = 0x40;
    pub const TABLE: u32 = 0x80;
    pub const BYTES_LEFT: u32 = 0x100;
    pub const TABLE_PTR: u32 = 0x104;
    pub const BASE: u32 = 0x108;
    pub const OFFSPRING_LEFT: u32 = 0x110;
    pub const NAME_PTR: u32 = 0x114;
    pub const CHARS_LEFT: u32 = 0x118;
    pub const FILE_HANDLE: u32 = 0x11C;
    pub const MAP_HANDLE: u32 = 0x120;
    pub const VIEW: u32 = 0x124;
    pub const NAME: u32 = 0x180;
}

/// One row of the offspring table: which bytes of the copy are exposed to
/// mutation, and how often.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffspringClass {
    pub start: u32,
    pub len: u32,
    /// Per-byte mutation probability is `1 / p_bit_inverse`.
    pub p_bit_inverse: u32,
}

impl OffspringClass {
    pub fn p_bit(&self) -> f64 {
        1.0 / self.p_bit_inverse as f64
    }

    /// The 16-bit threshold compared against the generator's high word.
    pub fn threshold(&self) -> u32 {
        (65536.0 / self.p_bit_inverse as f64).round() as u32
    }
}

const CODE_START: u32 = HEADER_LEN as u32;
const CODE_AND_ALPHABET: u32 = (META_CODE_LEN + crate::chemistry::ALPHABET_BYTES) as u32;

pub const OFFSPRING_CLASSES: [OffspringClass; 5] = [
    OffspringClass { start: CODE_START, len: META_CODE_LEN as u32, p_bit_inverse: 900 },
    OffspringClass { start: CODE_START, len: CODE_AND_ALPHABET, p_bit_inverse: 1800 },
    OffspringClass { start: 0, len: GENOME_LEN as u32, p_bit_inverse: 2666 },
    OffspringClass { start: CODE_START, len: META_CODE_LEN as u32, p_bit_inverse: 1500 },
    OffspringClass { start: CODE_START, len: META_CODE_LEN as u32, p_bit_inverse: 1820 },
];

#[derive(Debug, Clone)]
enum Item {
    Op(Mnemonic),
    AddNumber(u32),
    Label(&'static str),
    /// `getEIP; addnumber d` leaving the label's address in BC1.
    AddressOf(&'static str),
    Comment(String),
}

/// Straight-line meta-code with labels, resolved into plain `getEIP`
/// arithmetic when rendered.
#[derive(Debug, Default, Clone)]
pub struct AncestorBuilder {
    items: Vec<Item>,
}

impl AncestorBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(&mut self, m: Mnemonic) -> &mut Self {
        self.items.push(Item::Op(m));
        self
    }

    pub fn ops(&mut self, ms: &[Mnemonic]) -> &mut Self {
        self.items.extend(ms.iter().map(|&m| Item::Op(m)));
        self
    }

    pub fn add(&mut self, v: u32) -> &mut Self {
        if v != 0 {
            self.items.push(Item::AddNumber(v));
        }
        self
    }

    pub fn label(&mut self, name: &'static str) -> &mut Self {
        self.items.push(Item::Label(name));
        self
    }

    pub fn address_of(&mut self, name: &'static str) -> &mut Self {
        self.items.push(Item::AddressOf(name));
        self
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.items.push(Item::Comment(text.to_string()));
        self
    }

    /// BC1 = data offset + `off`.
    pub fn addr(&mut self, off: u32) -> &mut Self {
        self.op(GetDO).add(off)
    }

    /// BC1 = dword at data offset + `off`.
    pub fn load(&mut self, off: u32) -> &mut Self {
        self.addr(off).op(GetData)
    }

    /// BA1 = data offset + `off`.
    pub fn target(&mut self, off: u32) -> &mut Self {
        self.addr(off).op(SaveWrtOff)
    }

    /// RegB = RegB * multiplier + increment; BC1 = new RegB.
    pub fn lcg(&mut self) -> &mut Self {
        self.ops(&[NopsB, NopdA])
            .load(var::MULTIPLIER)
            .op(Mul)
            .load(var::INCREMENT)
            .ops(&[Save, NopsA, AddSaved, NopdB])
    }

    /// Loop head: pushes its own slot address for a later `pop; saveJmpOff; JnzUp`.
    pub fn loop_head(&mut self, name: &'static str) -> &mut Self {
        self.label(name).ops(&[GetEIP, Sub0001, Push])
    }

    fn expansion(v: u32) -> Vec<Mnemonic> {
        expand_addnumber(v, &AsmOptions::default()).expect("composite expansion always fits")
    }

    /// Resolves each `AddressOf` to `(delta, fill)`. A delta's expansion
    /// length moves the labels after it, so slot reservations only ever grow
    /// and shorter expansions are topped up with `fill` unassigned codons.
    fn resolve(&self) -> Vec<Option<(u32, usize)>> {
        let mut reserved: Vec<usize> = vec![1; self.items.len()];
        loop {
            let mut slot = 0u32;
            let mut labels = HashMap::new();
            let mut sites = Vec::new();
            for (i, item) in self.items.iter().enumerate() {
                match item {
                    Item::Op(_) => slot += 1,
                    Item::AddNumber(v) => slot += Self::expansion(*v).len() as u32,
                    Item::Label(name) => {
                        assert!(labels.insert(*name, slot).is_none(), "duplicate label {name}");
                    }
                    Item::AddressOf(name) => {
                        sites.push((i, slot, *name));
                        slot += reserved[i] as u32;
                    }
                    Item::Comment(_) => {}
                }
            }
            let mut out = vec![None; self.items.len()];
            let mut grew = false;
            for (i, get_eip_slot, name) in sites {
                let target = *labels.get(name).unwrap_or_else(|| panic!("unknown label {name}"));
                // getEIP yields the address just past its one-byte GETIP.
                let delta = (8 * target).wrapping_sub(8 * get_eip_slot + 1);
                let needed = 1 + Self::expansion(delta).len();
                if needed > reserved[i] {
                    reserved[i] = needed;
                    grew = true;
                }
                out[i] = Some((delta, reserved[i] - needed));
            }
            if !grew {
                return out;
            }
        }
    }

    /// Assembler source with every label turned into `getEIP; addnumber`.
    pub fn source(&self, data: &[(&str, u32)]) -> String {
        let deltas = self.resolve();
        let mut s = String::new();
        s.push_str(".data\nDataOffset:\n");
        for (name, v) in data {
            let _ = writeln!(s, "    {name:<16} dd {v:#010x}");
        }
        s.push_str(".end\n\n.code\n");
        for (item, delta) in self.items.iter().zip(deltas) {
            match item {
                Item::Op(m) => {
                    let _ = writeln!(s, "    {m}");
                }
                Item::AddNumber(v) => {
                    let _ = writeln!(s, "    addnumber {v}");
                }
                Item::Label(name) => {
                    let _ = writeln!(s, "{name}:");
                }
                Item::AddressOf(name) => {
                    let (delta, fill) = delta.unwrap();
                    let _ = writeln!(s, "    getEIP");
                    let _ = writeln!(s, "    addnumber {delta}    ; {name}");
                    for _ in 0..fill {
                        let _ = writeln!(s, "    .db {FILL_CODON:02x}");
                    }
                }
                Item::Comment(text) => {
                    let _ = writeln!(s, "\n    ; {text}");
                }
            }
        }
        s.push_str(".end\n");
        s
    }
}

fn data_words() -> Vec<(&'static str, u32)> {
    let mut words: Vec<(&'static str, u32)> = vec![("", 0); (var::TABLE as usize / 4) + 3 * OFFSPRING_CLASSES.len()];
    let mut set = |off: u32, name: &'static str, v: u32| words[off as usize / 4] = (name, v);
    set(var::MULTIPLIER, "Multiplier", LCG_MULTIPLIER);
    set(var::RANDOM_NUMBER, "RandomNumber", ANCESTOR_SEED);
    set(var::SUFFIX, "Suffix", u32::from_le_bytes(*b".rpw"));
    set(var::INCREMENT, "Increment", LCG_INCREMENT);
    set(var::HIGH_WORD, "HighWord", 0x10000);
    for (i, class) in OFFSPRING_CLASSES.iter().enumerate() {
        let at = var::TABLE + 12 * i as u32;
        set(at, "Start", class.start);
        set(at + 4, "Length", class.len);
        set(at + 8, "Threshold", class.threshold() << 16);
    }
    words
}

fn program() -> AncestorBuilder {
    use var::*;
    let mut b = AncestorBuilder::new();
    b.comment("mix the stored seed with the clock");
    b.load(RANDOM_NUMBER).op(Save).op(CallApiGetTickCounter).ops(&[Xor, NopdB]);
    b.target(OFFSPRING_LEFT).op(Zer0).add(OFFSPRING_CLASSES.len() as u32).op(WriteDWord);
    b.target(TABLE_PTR).addr(TABLE).op(WriteDWord);

    b.comment("one pass per offspring");
    b.loop_head("next_offspring");
    b.target(NAME_PTR).addr(NAME).op(WriteDWord);
    b.target(CHARS_LEFT).op(Zer0).add(8).op(WriteDWord);

    b.comment("name letter: 'a' + (x >> 16) mod 26");
    b.loop_head("next_char");
    b.lcg();
    b.ops(&[NopdA, Zer0, NopdD]).load(HIGH_WORD).op(Div);
    b.ops(&[Zer0, NopdD]).add(26).op(Div);
    b.load(NAME_PTR).ops(&[SaveWrtOff, Add0001, Push]);
    b.op(NopsD).add(b'a' as u32).op(WriteByte);
    b.target(NAME_PTR).ops(&[Pop, WriteDWord]);
    b.target(CHARS_LEFT).ops(&[GetData, Sub0001, WriteDWord]);
    b.ops(&[Pop, SaveJmpOff, JnzUp]);
    b.load(NAME_PTR).op(SaveWrtOff).load(SUFFIX).op(WriteDWord);

    b.comment("copy self and map the copy");
    b.addr(NAME).ops(&[Push, CallApiGetCommandLine, Push, CallApiCopyFile]);
    b.target(FILE_HANDLE).addr(NAME).ops(&[Push, CallApiCreateFile, WriteDWord]);
    b.load(FILE_HANDLE).ops(&[Push, CallApiGetFileSize]);
    b.target(MAP_HANDLE).load(FILE_HANDLE).ops(&[Push, CallApiCreateFileMapping, WriteDWord]);
    b.target(VIEW).load(MAP_HANDLE).ops(&[Push, CallApiMapViewOfFile, WriteDWord]);

    b.comment("this offspring's interval and threshold");
    b.target(BASE).load(TABLE_PTR).ops(&[GetData, Save]).load(VIEW).ops(&[AddSaved, Sub0001, WriteDWord]);
    b.target(BYTES_LEFT).load(TABLE_PTR).ops(&[Add0004, GetData, Add0001, WriteDWord]);
    b.target(THRESHOLD).load(TABLE_PTR).add(8).ops(&[GetData, WriteDWord]);
    b.target(TABLE_PTR).op(GetData).add(12).op(WriteDWord);

    b.comment("walk the interval from its last byte down");
    b.address_of("bytes_done").op(Push);
    b.address_of("next_byte").op(SaveJmpOff);
    b.label("next_byte");
    b.target(BYTES_LEFT).ops(&[GetData, Sub0001, WriteDWord]);
    b.op(JnzDown);
    b.ops(&[Ret, NopsA, NopsA, NopsA]);
    b.lcg();
    b.comment("x / threshold is zero exactly when x is below it");
    b.ops(&[NopdA, Zer0, NopdD]).load(THRESHOLD).ops(&[Div, NopsA, Save, And]);
    b.op(JnzUp);
    b.comment("flip bit ((x >> 16) & 7) of the current byte");
    b.lcg();
    b.ops(&[Zer0, Add0010, Save, NopsB, Shr]);
    b.ops(&[Save, Zer0]).add(7).op(And);
    b.ops(&[Save, Zer0, Add0001, Shl, Push]);
    b.load(BASE).op(Save).load(BYTES_LEFT).op(AddSaved);
    b.ops(&[SaveWrtOff, GetData, Save, Pop, Xor, WriteByte]);
    b.ops(&[Zer0, Add0001, JnzUp]);
    b.label("bytes_done");

    b.comment("release the copy and start it");
    b.load(VIEW).ops(&[Push, CallApiUnmapViewOfFile]);
    b.load(MAP_HANDLE).ops(&[Push, CallApiCloseHandle]);
    b.load(FILE_HANDLE).ops(&[Push, CallApiCloseHandle]);
    b.addr(NAME).ops(&[Push, CallApiCreateProcess]);
    b.target(OFFSPRING_LEFT).ops(&[GetData, Sub0001, WriteDWord]);
    b.ops(&[Pop, SaveJmpOff, JnzUp]);

    b.comment("done");
    b.ops(&[Zer0, Add0400, Push, CallApiSleep, Ret]);
    b
}

/// Listing of the ancestor, the same text as the shipped fixture.
pub fn ancestor_source() -> String {
    let mut s = String::from("; Generation-0 organism. Generated by build_ancestor; do not edit.\n\n");
    s.push_str(&program().source(&data_words()));
    s
}

pub fn build_ancestor() -> Genome {
    assemble(&ancestor_source())
        .and_then(|a| a.to_genome())
        .expect("ancestor assembles")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::translator::{translate, Region};
    use crate::vm::NullHost;

    #[test]
    fn thresholds_round_to_nearest() {
        let t: Vec<u32> = OFFSPRING_CLASSES.iter().map(|c| c.threshold()).collect();
        assert_eq!(t, vec![73, 36, 25, 44, 36]);
    }

    #[test]
    fn intervals_fit_the_file() {
        for c in OFFSPRING_CLASSES {
            assert!((c.start + c.len) as usize <= GENOME_LEN);
        }
        assert_eq!(OFFSPRING_CLASSES[1].len, 4148);
    }

    #[test]
    fn fits_and_keeps_data_layout() {
        let g = build_ancestor();
        let used = g.meta_code().iter().rposition(|&c| c != 0xFF).unwrap() + 1;
        assert!(used < META_CODE_LEN, "{used} codons");
        let data = g.region(Region::Data);
        let word = |off: u32| u32::from_le_bytes(data[off as usize..off as usize + 4].try_into().unwrap());
        assert_eq!(word(var::RANDOM_NUMBER), ANCESTOR_SEED);
        assert_eq!(word(var::MULTIPLIER), LCG_MULTIPLIER);
        assert_eq!(word(var::TABLE + 8), 73 << 16);
        assert_eq!(&data[var::SUFFIX as usize..var::SUFFIX as usize + 4], b".rpw");
    }

    #[test]
    fn name_modulus_site_is_literal() {
        let src = ancestor_source();
        assert!(src.contains("    zer0\n    nopdD\n    addnumber 26\n    div\n"));
    }

    #[test]
    fn address_deltas_point_at_labels() {
        let src = ancestor_source();
        let code = assemble(&src).unwrap().code;
        // Every `getEIP; addnumber d` pair lands on a slot boundary.
        let lines: Vec<&str> = src.lines().map(str::trim).collect();
        for w in lines.windows(2) {
            if w[0] == "getEIP" && w[1].starts_with("addnumber") {
                let d: u32 = w[1].split_whitespace().nth(1).unwrap().parse().unwrap();
                assert_eq!(d.wrapping_add(1) % 8, 0);
            }
        }
        assert!(code.len() < META_CODE_LEN);
    }

    #[test]
    fn translates_and_starts_cleanly() {
        let g = build_ancestor();
        let mut p = translate(&g).load().unwrap();
        assert_eq!((p.ip, p.sp), (0, 0xFFFC));
        // Without a world the copy fails, but the first name is still drawn.
        let out = p.run(&mut NullHost::default(), 20_000);
        assert!(!matches!(out, crate::vm::RunOutcome::Fault(_)), "{out:?}");
    }
}
