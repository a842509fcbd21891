//! Text assembler and disassembler for the meta-language.
//!
//! Source grammar, one statement per line:
//!
//! ```text
//! ; comment to end of line
//! .data                     switch to the data section
//! Label:                    ignored (data labels are documentation only)
//! Name dd <num>             32-bit little-endian data word
//! Name db <num>             one data byte
//! .code                     switch to the code section
//! <mnemonic>                one codon, case-insensitive
//! addnumber <num>           codons adding <num> to BC1
//! .db <hex>                 one raw codon
//! macro ...                 ignored
//! .end [...]                end of the current section
//! ```
//!
//! Numbers are decimal or `0x` hexadecimal.

mod ancestor;

pub use ancestor::{
    ancestor_source, build_ancestor, var as ancestor_var, AncestorBuilder, OffspringClass, ANCESTOR_SEED, OFFSPRING_CLASSES,
};

use thiserror::Error;

use crate::chemistry::{Alphabet, Mnemonic, ADD_IMMEDIATES};
use crate::translator::{Genome, GenomeError, Region, DATA_LEN, META_CODE_LEN, PADDING_LEN};

/// Codon used to fill the unused tail of the meta-code region.
pub const FILL_CODON: u8 = 0xFF;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{name}`")]
    UnknownMnemonic { line: usize, name: String },
    #[error("line {line}: bad number `{text}`")]
    BadNumber { line: usize, text: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: addnumber {value:#x} needs more than {bound} add/sub codons")]
    AddNumberTooLong { line: usize, value: u32, bound: usize },
    #[error("code is {0} codons, the meta-code region holds {META_CODE_LEN}")]
    CodeTooLong(usize),
    #[error("data is {0} bytes, the data region holds {DATA_LEN}")]
    DataTooLong(usize),
    #[error(transparent)]
    Genome(#[from] GenomeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AsmOptions {
    /// Longest additive `addnumber` expansion accepted.
    pub addnumber_bound: usize,
    /// Fall back to a shift-based expansion when the additive one is too long.
    /// The fallback uses one stack slot and clobbers BC2.
    pub allow_composite: bool,
}

impl Default for AsmOptions {
    fn default() -> Self {
        AsmOptions {
            addnumber_bound: 64,
            allow_composite: true,
        }
    }
}

/// Assembled code and data, before region padding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assembly {
    pub code: Vec<u8>,
    pub data: Vec<u8>,
}

impl Assembly {
    /// Pads into a full genome with the default alphabet and a zero padding region.
    pub fn to_genome(&self) -> Result<Genome, AsmError> {
        self.to_genome_with(&crate::chemistry::default_alphabet())
    }

    pub fn to_genome_with(&self, alphabet: &Alphabet) -> Result<Genome, AsmError> {
        if self.code.len() > META_CODE_LEN {
            return Err(AsmError::CodeTooLong(self.code.len()));
        }
        if self.data.len() > DATA_LEN {
            return Err(AsmError::DataTooLong(self.data.len()));
        }
        let mut meta = self.code.clone();
        meta.resize(META_CODE_LEN, FILL_CODON);
        let mut data = self.data.clone();
        data.resize(DATA_LEN, 0);
        Ok(Genome::from_regions(&meta, alphabet, &data, &[0; PADDING_LEN])?)
    }
}

fn greedy_digits(mut x: u32, out: &mut Vec<Mnemonic>) {
    for (m, step) in ADD_IMMEDIATES {
        let n = if step == 0x4000 { x / step } else { (x / step) % 4 };
        out.extend(std::iter::repeat(m).take(n as usize));
        x -= n * step;
    }
}

fn greedy_cost(x: u32) -> u64 {
    ADD_IMMEDIATES
        .iter()
        .fold((0u64, x), |(cost, rest), &(_, step)| {
            let n = if step == 0x4000 { rest / step } else { (rest / step) % 4 };
            (cost + n as u64, rest - n * step)
        })
        .0
}

/// Shortest `addNNNN`/`sub0001` sequence adding `v` (mod 2^32) to BC1, if it
/// fits in `bound` codons.
///
/// Overshoots by `s` with the greedy powers-of-four digits, then steps back
/// with `s` × `sub0001`; the best `s` in `0..=bound` wins, smaller `s` on ties.
pub fn additive_expansion(v: u32, bound: usize) -> Option<Vec<Mnemonic>> {
    let (cost, s) = (0..=bound as u32)
        .map(|s| (s as u64 + greedy_cost(v.wrapping_add(s)), s))
        .min()?;
    if cost > bound as u64 {
        return None;
    }
    let mut out = Vec::with_capacity(cost as usize);
    greedy_digits(v.wrapping_add(s), &mut out);
    out.extend(std::iter::repeat(Mnemonic::Sub0001).take(s as usize));
    Some(out)
}

/// Expansion of `addnumber v` under `opts`.
///
/// When the additive form is too long, builds `v` from its 16-bit halves:
/// `push; zer0; add0010; save; zer0; <hi>; shl; <lo>; save; pop; addsaved`.
pub fn expand_addnumber(v: u32, opts: &AsmOptions) -> Option<Vec<Mnemonic>> {
    if let Some(seq) = additive_expansion(v, opts.addnumber_bound) {
        return Some(seq);
    }
    if !opts.allow_composite {
        return None;
    }
    use Mnemonic::*;
    let hi = additive_expansion(v >> 16, opts.addnumber_bound)?;
    let lo = additive_expansion(v & 0xFFFF, opts.addnumber_bound)?;
    let mut out = vec![Push, Zer0, Add0010, Save, Zer0];
    out.extend(hi);
    out.push(Shl);
    out.extend(lo);
    out.extend([Save, Pop, AddSaved]);
    Some(out)
}

pub fn parse_number(text: &str) -> Option<u32> {
    let t = text.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else {
        t.parse().ok()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Code,
    Data,
}

pub fn assemble(source: &str) -> Result<Assembly, AsmError> {
    assemble_with(source, &AsmOptions::default())
}

pub fn assemble_with(source: &str, opts: &AsmOptions) -> Result<Assembly, AsmError> {
    let mut out = Assembly::default();
    // Bare instructions before any directive are code.
    let mut section = Section::None;
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.split(';').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut words = text.split_whitespace();
        let head = words.next().unwrap_or_default();
        let syntax = |message: &str| AsmError::Syntax {
            line,
            message: message.to_string(),
        };
        let number = |w: Option<&str>| -> Result<u32, AsmError> {
            let w = w.ok_or_else(|| syntax("missing operand"))?;
            parse_number(w).ok_or_else(|| AsmError::BadNumber {
                line,
                text: w.to_string(),
            })
        };
        match head.to_ascii_lowercase().as_str() {
            ".data" => section = Section::Data,
            ".code" => section = Section::Code,
            ".end" => section = Section::None,
            "macro" => {}
            _ if head.ends_with(':') && words.clone().next().is_none() => {}
            ".db" if section != Section::Data => {
                let w = words.next().ok_or_else(|| syntax("missing operand"))?;
                let w = w.trim_start_matches("0x");
                let b = u8::from_str_radix(w, 16).map_err(|_| AsmError::BadNumber {
                    line,
                    text: w.to_string(),
                })?;
                out.code.push(b);
            }
            "addnumber" if section != Section::Data => {
                let v = number(words.next())?;
                let seq = expand_addnumber(v, opts).ok_or(AsmError::AddNumberTooLong {
                    line,
                    value: v,
                    bound: opts.addnumber_bound,
                })?;
                out.code.extend(seq.iter().map(|m| m.codon()));
            }
            _ if section == Section::Data => {
                // `[Name] dd|db <num>`
                let (kind, operand) = match head.to_ascii_lowercase().as_str() {
                    "dd" | "db" => (head.to_ascii_lowercase(), words.next()),
                    _ => match words.next() {
                        Some(k) => (k.to_ascii_lowercase(), words.next()),
                        None => return Err(syntax("expected `dd` or `db`")),
                    },
                };
                let v = number(operand)?;
                match kind.as_str() {
                    "dd" => out.data.extend(v.to_le_bytes()),
                    "db" => out.data.push(u8::try_from(v).map_err(|_| AsmError::BadNumber {
                        line,
                        text: v.to_string(),
                    })?),
                    _ => return Err(syntax("expected `dd` or `db`")),
                }
            }
            _ => {
                let m: Mnemonic = head.parse().map_err(|_| AsmError::UnknownMnemonic {
                    line,
                    name: head.to_string(),
                })?;
                if words.next().is_some() {
                    return Err(syntax("mnemonics take no operands"));
                }
                out.code.push(m.codon());
            }
        }
        if words.next().is_some() && !matches!(head, ".end" | "macro") && !head.starts_with('.') {
            return Err(syntax("trailing tokens"));
        }
    }
    Ok(out)
}

/// One line per codon: its mnemonic when the alphabet slot is the canonical
/// one for an assigned codon, `.db xx` otherwise.
pub fn disassemble(codons: &[u8], alphabet: &Alphabet) -> String {
    let mut s = String::new();
    for &c in codons {
        match alphabet.mnemonic(c) {
            Some(m) => s.push_str(m.name()),
            None => s.push_str(&format!(".db {c:02x}")),
        }
        s.push('\n');
    }
    s
}

/// Full listing of a genome: code without the fill tail, then the data words.
pub fn disassemble_genome(genome: &Genome) -> String {
    let meta = genome.meta_code();
    let used = meta.iter().rposition(|&c| c != FILL_CODON).map_or(0, |i| i + 1);
    let mut s = String::from(".code\n");
    for line in disassemble(&meta[..used], &genome.alphabet()).lines() {
        s.push_str("    ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(".end\n");
    let data = genome.region(Region::Data);
    let words = data
        .chunks(4)
        .map(|w| u32::from_le_bytes([w[0], w[1], w[2], w[3]]))
        .collect::<Vec<_>>();
    let used = words.iter().rposition(|&w| w != 0).map_or(0, |i| i + 1);
    if used > 0 {
        s.push_str(".data\n");
        for (i, w) in words[..used].iter().enumerate() {
            s.push_str(&format!("    d{:02x} dd {w:#010x}\n", i * 4));
        }
        s.push_str(".end\n");
    }
    s
}
