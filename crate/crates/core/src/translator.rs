//! Genome file layout and codon-to-micro-code translation.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemistry::{Alphabet, ALPHABET_BYTES, ENTRY_BYTES};
use crate::vm::{LoadError, ProcessState};

pub const GENOME_LEN: usize = 6144;
pub const HEADER_LEN: usize = 32;
pub const META_CODE_LEN: usize = 2100;
pub const DATA_LEN: usize = 256;
pub const PADDING_LEN: usize = GENOME_LEN - HEADER_LEN - META_CODE_LEN - ALPHABET_BYTES - DATA_LEN;
pub const PROGRAM_LEN: usize = META_CODE_LEN * ENTRY_BYTES;
pub const MAGIC: [u8; 4] = *b"RPW1";
pub const FORMAT_VERSION: u16 = 1;

const REGION_TABLE_AT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Header,
    MetaCode,
    Alphabet,
    Data,
    Padding,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::Header,
        Region::MetaCode,
        Region::Alphabet,
        Region::Data,
        Region::Padding,
    ];

    pub fn range(self) -> Range<usize> {
        let meta = HEADER_LEN;
        let alphabet = meta + META_CODE_LEN;
        let data = alphabet + ALPHABET_BYTES;
        let padding = data + DATA_LEN;
        match self {
            Region::Header => 0..meta,
            Region::MetaCode => meta..alphabet,
            Region::Alphabet => alphabet..data,
            Region::Data => data..padding,
            Region::Padding => padding..GENOME_LEN,
        }
    }

    pub fn len(self) -> usize {
        self.range().len()
    }

    /// Region containing a genome byte offset.
    pub fn of_offset(offset: usize) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.range().contains(&offset))
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Header => "header",
            Region::MetaCode => "meta-code",
            Region::Alphabet => "alphabet",
            Region::Data => "data",
            Region::Padding => "padding",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Region {
    type Err = GenomeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::ALL
            .into_iter()
            .find(|r| r.name() == s || (s == "meta" && *r == Region::MetaCode))
            .ok_or_else(|| GenomeError::UnknownRegion(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenomeError {
    #[error("genome must be {GENOME_LEN} bytes, got {0}")]
    Length(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("region table does not describe the standard layout")]
    BadRegionTable,
    #[error("{region} must be {expected} bytes, got {got}")]
    RegionLength {
        region: Region,
        expected: usize,
        got: usize,
    },
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
}

/// A validated 6144-byte genome. Stores the raw bytes, so emitting is exact.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    bytes: Box<[u8; GENOME_LEN]>,
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome({} bytes)", GENOME_LEN)
    }
}

fn region_table() -> [(u16, u16); 4] {
    [Region::MetaCode, Region::Alphabet, Region::Data, Region::Padding]
        .map(|r| (r.range().start as u16, r.len() as u16))
}

/// The canonical 32-byte header.
pub fn standard_header() -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (i, (off, len)) in region_table().into_iter().enumerate() {
        let at = REGION_TABLE_AT + 4 * i;
        h[at..at + 2].copy_from_slice(&off.to_le_bytes());
        h[at + 2..at + 4].copy_from_slice(&len.to_le_bytes());
    }
    h
}

impl Genome {
    pub fn parse(bytes: &[u8]) -> Result<Genome, GenomeError> {
        let bytes: [u8; GENOME_LEN] = bytes
            .try_into()
            .map_err(|_| GenomeError::Length(bytes.len()))?;
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if magic != MAGIC {
            return Err(GenomeError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(GenomeError::BadVersion(version));
        }
        let std = standard_header();
        if bytes[REGION_TABLE_AT..REGION_TABLE_AT + 16] != std[REGION_TABLE_AT..REGION_TABLE_AT + 16] {
            return Err(GenomeError::BadRegionTable);
        }
        Ok(Genome {
            bytes: Box::new(bytes),
        })
    }

    /// Assembles a genome from exact-size regions under the standard header.
    pub fn from_regions(
        meta_code: &[u8],
        alphabet: &Alphabet,
        data: &[u8],
        padding: &[u8],
    ) -> Result<Genome, GenomeError> {
        let mut bytes = Box::new([0u8; GENOME_LEN]);
        bytes[..HEADER_LEN].copy_from_slice(&standard_header());
        for (region, src) in [
            (Region::MetaCode, meta_code),
            (Region::Alphabet, alphabet.as_bytes()),
            (Region::Data, data),
            (Region::Padding, padding),
        ] {
            if src.len() != region.len() {
                return Err(GenomeError::RegionLength {
                    region,
                    expected: region.len(),
                    got: src.len(),
                });
            }
            bytes[region.range()].copy_from_slice(src);
        }
        Ok(Genome { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes[..]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bytes.to_vec()
    }

    pub fn region(&self, region: Region) -> &[u8] {
        &self.bytes[region.range()]
    }

    pub fn meta_code(&self) -> &[u8] {
        self.region(Region::MetaCode)
    }

    pub fn data(&self) -> &[u8] {
        self.region(Region::Data)
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::from_bytes(self.region(Region::Alphabet)).expect("alphabet region is 2048 bytes")
    }

    /// Mutable access to a body region. The header is not exposed, so a
    /// `Genome` always stays parseable.
    pub fn region_mut(&mut self, region: Region) -> Option<&mut [u8]> {
        (region != Region::Header).then(|| &mut self.bytes[region.range()])
    }
}

/// Translated executable image plus its data segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicroProgram {
    pub code: Vec<u8>,
    pub data: Vec<u8>,
}

impl MicroProgram {
    pub fn load(&self) -> Result<ProcessState, LoadError> {
        ProcessState::load(&self.code, &self.data)
    }
}

/// Expands every codon through the genome's own alphabet.
pub fn translate(genome: &Genome) -> MicroProgram {
    MicroProgram {
        code: translate_codons(genome.meta_code(), genome.region(Region::Alphabet)),
        data: genome.data().to_vec(),
    }
}

/// Parses raw file bytes and translates them; a corrupt header is unviable.
pub fn translate_bytes(bytes: &[u8]) -> Result<MicroProgram, GenomeError> {
    Genome::parse(bytes).map(|g| translate(&g))
}

/// `alphabet[8c..8c+8]` for each codon `c`, concatenated.
pub fn translate_codons(codons: &[u8], alphabet: &[u8]) -> Vec<u8> {
    debug_assert_eq!(alphabet.len(), ALPHABET_BYTES);
    let mut code = Vec::with_capacity(codons.len() * ENTRY_BYTES);
    for &c in codons {
        let at = c as usize * ENTRY_BYTES;
        code.extend_from_slice(&alphabet[at..at + ENTRY_BYTES]);
    }
    code
}
