//! The meta-language instruction set and the micro-ISA it expands to.
//!
//! Every genome codon is one byte. The genome's alphabet maps each of the
//! 256 possible codons to exactly eight bytes of micro-code; this module
//! defines the micro-code encoding, the 49 meta-instructions, their
//! canonical codon numbers and the default alphabet built from them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Base address of the data segment inside process memory.
pub const DATA_OFFSET: u32 = 0x5000;

/// Bytes of micro-code per alphabet entry.
pub const ENTRY_BYTES: usize = 8;
/// Number of alphabet entries (one per codon value).
pub const ALPHABET_ENTRIES: usize = 256;
/// Total alphabet size in bytes.
pub const ALPHABET_BYTES: usize = ENTRY_BYTES * ALPHABET_ENTRIES;

/// Relative skip of the downward jumps: four codon slots past the current one.
pub const DOWN_SKIP_BYTES: usize = 4 * ENTRY_BYTES;

pub mod opcode {
    pub const NOP: u8 = 0x90;
    pub const MOV: u8 = 0x10;
    pub const MOV_IMM: u8 = 0x20;
    pub const ADD_IMM: u8 = 0x21;
    pub const SUB_IMM: u8 = 0x22;
    pub const ADD: u8 = 0x30;
    pub const SUB: u8 = 0x31;
    pub const AND: u8 = 0x32;
    pub const XOR: u8 = 0x33;
    pub const SHL: u8 = 0x34;
    pub const SHR: u8 = 0x35;
    pub const MUL: u8 = 0x36;
    pub const DIV: u8 = 0x37;
    pub const PUSH: u8 = 0x40;
    pub const POP: u8 = 0x41;
    pub const STORE_BYTE: u8 = 0x50;
    pub const STORE_DWORD: u8 = 0x51;
    pub const LOAD_DWORD: u8 = 0x52;
    pub const JZ: u8 = 0x60;
    pub const JNZ: u8 = 0x61;
    pub const JMP_INDIRECT: u8 = 0x62;
    pub const RET: u8 = 0x63;
    pub const GET_IP: u8 = 0x65;
    pub const SYSCALL: u8 = 0x70;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChemistryError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("alphabet must be {ALPHABET_BYTES} bytes, got {0}")]
    AlphabetSize(usize),
}

/// Register operand of a `MOV reg <- reg` micro-op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reg {
    RegA = 0,
    RegB = 1,
    RegD = 2,
    Bc1 = 3,
    Bc2 = 4,
    Ba1 = 5,
    Ba2 = 6,
}

impl Reg {
    pub const ALL: [Reg; 7] = [
        Reg::RegA,
        Reg::RegB,
        Reg::RegD,
        Reg::Bc1,
        Reg::Bc2,
        Reg::Ba1,
        Reg::Ba2,
    ];

    pub fn from_index(i: u8) -> Option<Reg> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Reg::RegA => "RegA",
            Reg::RegB => "RegB",
            Reg::RegD => "RegD",
            Reg::Bc1 => "BC1",
            Reg::Bc2 => "BC2",
            Reg::Ba1 => "BA1",
            Reg::Ba2 => "BA2",
        }
    }
}

/// One decoded micro-instruction.
///
/// Arithmetic forms always target BC1 (and BC2 as the second operand),
/// following the x86 `ebx`/`ecx` register convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MicroOp {
    Nop,
    Mov { dst: Reg, src: Reg },
    MovImm(u32),
    AddImm(u32),
    SubImm(u32),
    Add,
    Sub,
    And,
    Xor,
    Shl,
    Shr,
    Mul,
    Div,
    Push,
    Pop,
    StoreByte,
    StoreDword,
    LoadDword,
    Jz(i8),
    Jnz(i8),
    JmpIndirect,
    Ret,
    GetIp,
    Syscall(u8),
    /// A byte that does not start a well-formed micro-op. Always one byte wide.
    Invalid(u8),
}

/// Operand bytes ran past the end of the available input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncated;

impl MicroOp {
    /// Encoded length in bytes.
    pub fn len(&self) -> usize {
        match self {
            MicroOp::Mov { .. } | MicroOp::Jz(_) | MicroOp::Jnz(_) | MicroOp::Syscall(_) => 2,
            MicroOp::MovImm(_) | MicroOp::AddImm(_) | MicroOp::SubImm(_) => 5,
            _ => 1,
        }
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        use opcode::*;
        match *self {
            MicroOp::Nop => out.push(NOP),
            MicroOp::Mov { dst, src } => out.extend([MOV, (dst.index() << 4) | src.index()]),
            MicroOp::MovImm(v) => {
                out.push(MOV_IMM);
                out.extend(v.to_le_bytes());
            }
            MicroOp::AddImm(v) => {
                out.push(ADD_IMM);
                out.extend(v.to_le_bytes());
            }
            MicroOp::SubImm(v) => {
                out.push(SUB_IMM);
                out.extend(v.to_le_bytes());
            }
            MicroOp::Add => out.push(ADD),
            MicroOp::Sub => out.push(SUB),
            MicroOp::And => out.push(AND),
            MicroOp::Xor => out.push(XOR),
            MicroOp::Shl => out.push(SHL),
            MicroOp::Shr => out.push(SHR),
            MicroOp::Mul => out.push(MUL),
            MicroOp::Div => out.push(DIV),
            MicroOp::Push => out.push(PUSH),
            MicroOp::Pop => out.push(POP),
            MicroOp::StoreByte => out.push(STORE_BYTE),
            MicroOp::StoreDword => out.push(STORE_DWORD),
            MicroOp::LoadDword => out.push(LOAD_DWORD),
            MicroOp::Jz(r) => out.extend([JZ, r as u8]),
            MicroOp::Jnz(r) => out.extend([JNZ, r as u8]),
            MicroOp::JmpIndirect => out.push(JMP_INDIRECT),
            MicroOp::Ret => out.push(RET),
            MicroOp::GetIp => out.push(GET_IP),
            MicroOp::Syscall(n) => out.extend([SYSCALL, n]),
            MicroOp::Invalid(b) => out.push(b),
        }
    }

    /// Decodes the micro-op at the start of `bytes`, returning it with its length.
    ///
    /// Any leading byte is accepted: unassigned opcodes and `MOV` with an
    /// out-of-range register decode as a one-byte [`MicroOp::Invalid`].
    /// Only a well-known opcode whose operands are cut off is an error.
    pub fn decode(bytes: &[u8]) -> Result<(MicroOp, usize), Truncated> {
        use opcode::*;
        let Some(&op) = bytes.first() else {
            return Err(Truncated);
        };
        let operand = |n: usize| -> Result<&[u8], Truncated> { bytes.get(1..1 + n).ok_or(Truncated) };
        let imm = || -> Result<u32, Truncated> {
            let b = operand(4)?;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        let decoded = match op {
            NOP => MicroOp::Nop,
            MOV => {
                let rr = operand(1)?[0];
                match (Reg::from_index(rr >> 4), Reg::from_index(rr & 0x0F)) {
                    (Some(dst), Some(src)) => MicroOp::Mov { dst, src },
                    _ => MicroOp::Invalid(op),
                }
            }
            MOV_IMM => MicroOp::MovImm(imm()?),
            ADD_IMM => MicroOp::AddImm(imm()?),
            SUB_IMM => MicroOp::SubImm(imm()?),
            ADD => MicroOp::Add,
            SUB => MicroOp::Sub,
            AND => MicroOp::And,
            XOR => MicroOp::Xor,
            SHL => MicroOp::Shl,
            SHR => MicroOp::Shr,
            MUL => MicroOp::Mul,
            DIV => MicroOp::Div,
            PUSH => MicroOp::Push,
            POP => MicroOp::Pop,
            STORE_BYTE => MicroOp::StoreByte,
            STORE_DWORD => MicroOp::StoreDword,
            LOAD_DWORD => MicroOp::LoadDword,
            JZ => MicroOp::Jz(operand(1)?[0] as i8),
            JNZ => MicroOp::Jnz(operand(1)?[0] as i8),
            JMP_INDIRECT => MicroOp::JmpIndirect,
            RET => MicroOp::Ret,
            GET_IP => MicroOp::GetIp,
            SYSCALL => MicroOp::Syscall(operand(1)?[0]),
            other => MicroOp::Invalid(other),
        };
        Ok((decoded, decoded.len()))
    }

    /// Whether execution of this op updates the zero flag.
    pub fn sets_zero_flag(&self) -> bool {
        matches!(
            self,
            MicroOp::AddImm(_)
                | MicroOp::SubImm(_)
                | MicroOp::Add
                | MicroOp::Sub
                | MicroOp::And
                | MicroOp::Xor
                | MicroOp::Shl
                | MicroOp::Shr
        )
    }
}

impl fmt::Display for MicroOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MicroOp::Nop => f.write_str("NOP"),
            MicroOp::Mov { dst, src } => write!(f, "MOV {},{}", dst.name(), src.name()),
            MicroOp::MovImm(v) => write!(f, "MOV BC1,{v:#x}"),
            MicroOp::AddImm(v) => write!(f, "ADD BC1,{v:#x}"),
            MicroOp::SubImm(v) => write!(f, "SUB BC1,{v:#x}"),
            MicroOp::Add => f.write_str("ADD BC1,BC2"),
            MicroOp::Sub => f.write_str("SUB BC1,BC2"),
            MicroOp::And => f.write_str("AND BC1,BC2"),
            MicroOp::Xor => f.write_str("XOR BC1,BC2"),
            MicroOp::Shl => f.write_str("SHL BC1,BC2"),
            MicroOp::Shr => f.write_str("SHR BC1,BC2"),
            MicroOp::Mul => f.write_str("MUL BC1"),
            MicroOp::Div => f.write_str("DIV BC1"),
            MicroOp::Push => f.write_str("PUSH BC1"),
            MicroOp::Pop => f.write_str("POP BC1"),
            MicroOp::StoreByte => f.write_str("STOREB [BA1],BC1"),
            MicroOp::StoreDword => f.write_str("STORED [BA1],BC1"),
            MicroOp::LoadDword => f.write_str("LOADD BC1,[BC1]"),
            MicroOp::Jz(r) => write!(f, "JZ {r:+}"),
            MicroOp::Jnz(r) => write!(f, "JNZ {r:+}"),
            MicroOp::JmpIndirect => f.write_str("JMP BA2"),
            MicroOp::Ret => f.write_str("RET"),
            MicroOp::GetIp => f.write_str("GETIP BC1"),
            MicroOp::Syscall(n) => write!(f, "SYSCALL {n}"),
            MicroOp::Invalid(b) => write!(f, "INVALID {b:02x}"),
        }
    }
}

/// Decodes one alphabet entry in full.
///
/// Decoding is total: an op whose operands would run past the slot turns
/// every remaining byte into [`MicroOp::Invalid`], so re-encoding the result
/// always reproduces the entry byte for byte.
pub fn decode_entry(entry: &[u8; ENTRY_BYTES]) -> Vec<MicroOp> {
    let mut ops = Vec::with_capacity(ENTRY_BYTES);
    let mut at = 0;
    while at < ENTRY_BYTES {
        match MicroOp::decode(&entry[at..]) {
            Ok((op, len)) => {
                ops.push(op);
                at += len;
            }
            Err(Truncated) => {
                ops.extend(entry[at..].iter().map(|&b| MicroOp::Invalid(b)));
                break;
            }
        }
    }
    ops
}

pub fn encode_ops(ops: &[MicroOp]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ENTRY_BYTES);
    for op in ops {
        op.encode(&mut out);
    }
    out
}

/// The eleven host calls, numbered by their `SYSCALL` operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Api {
    GetTickCount = 0,
    GetCommandLine = 1,
    CopyFile = 2,
    CreateFile = 3,
    GetFileSize = 4,
    CreateFileMapping = 5,
    MapViewOfFile = 6,
    CreateProcess = 7,
    UnmapViewOfFile = 8,
    CloseHandle = 9,
    Sleep = 10,
}

impl Api {
    pub const ALL: [Api; 11] = [
        Api::GetTickCount,
        Api::GetCommandLine,
        Api::CopyFile,
        Api::CreateFile,
        Api::GetFileSize,
        Api::CreateFileMapping,
        Api::MapViewOfFile,
        Api::CreateProcess,
        Api::UnmapViewOfFile,
        Api::CloseHandle,
        Api::Sleep,
    ];

    pub fn from_number(n: u8) -> Option<Api> {
        Self::ALL.get(n as usize).copied()
    }

    /// Stack arguments consumed by the call.
    pub fn arg_count(self) -> usize {
        match self {
            Api::GetTickCount | Api::GetCommandLine => 0,
            Api::CopyFile => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Api::GetTickCount => "GetTickCount",
            Api::GetCommandLine => "GetCommandLine",
            Api::CopyFile => "CopyFile",
            Api::CreateFile => "CreateFile",
            Api::GetFileSize => "GetFileSize",
            Api::CreateFileMapping => "CreateFileMapping",
            Api::MapViewOfFile => "MapViewOfFile",
            Api::CreateProcess => "CreateProcess",
            Api::UnmapViewOfFile => "UnmapViewOfFile",
            Api::CloseHandle => "CloseHandle",
            Api::Sleep => "Sleep",
        }
    }
}

macro_rules! mnemonics {
    ($($variant:ident => $name:literal,)*) => {
        /// The 49 meta-language instructions, in their canonical listing order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Mnemonic { $($variant,)* }

        impl Mnemonic {
            pub const ALL: [Mnemonic; 49] = [$(Mnemonic::$variant,)*];

            pub fn name(self) -> &'static str {
                match self { $(Mnemonic::$variant => $name,)* }
            }
        }
    };
}

mnemonics! {
    NopsA => "nopsA",
    NopsB => "nopsB",
    NopsD => "nopsD",
    NopdA => "nopdA",
    NopdB => "nopdB",
    NopdD => "nopdD",
    SaveWrtOff => "saveWrtOff",
    SaveJmpOff => "saveJmpOff",
    WriteByte => "writeByte",
    WriteDWord => "writeDWord",
    Save => "save",
    AddSaved => "addsaved",
    SubSaved => "subsaved",
    GetDO => "getDO",
    GetData => "getdata",
    GetEIP => "getEIP",
    Zer0 => "zer0",
    Push => "push",
    Pop => "pop",
    Mul => "mul",
    Div => "div",
    Shl => "shl",
    Shr => "shr",
    And => "and",
    Xor => "xor",
    Add0001 => "add0001",
    Add0004 => "add0004",
    Add0010 => "add0010",
    Add0040 => "add0040",
    Add0100 => "add0100",
    Add0400 => "add0400",
    Add1000 => "add1000",
    Add4000 => "add4000",
    Sub0001 => "sub0001",
    JnzUp => "JnzUp",
    JnzDown => "JnzDown",
    JzDown => "JzDown",
    Ret => "ret",
    CallApiGetTickCounter => "CallAPIGetTickCounter",
    CallApiGetCommandLine => "CallAPIGetCommandLine",
    CallApiCopyFile => "CallAPICopyFile",
    CallApiCreateFile => "CallAPICreateFile",
    CallApiGetFileSize => "CallAPIGetFileSize",
    CallApiCreateFileMapping => "CallAPICreateFileMapping",
    CallApiMapViewOfFile => "CallAPIMapViewOfFile",
    CallApiCreateProcess => "CallAPICreateProcess",
    CallApiUnmapViewOfFile => "CallAPIUnMapViewOfFile",
    CallApiCloseHandle => "CallAPICloseHandle",
    CallApiSleep => "CallAPISleep",
}

/// Codons pinned by the published translation table.
pub const GET_EIP_CODON: u8 = 24;
pub const JNZ_UP_CODON: u8 = 25;

/// The `addNNNN` immediates, largest first.
pub const ADD_IMMEDIATES: [(Mnemonic, u32); 8] = [
    (Mnemonic::Add4000, 0x4000),
    (Mnemonic::Add1000, 0x1000),
    (Mnemonic::Add0400, 0x0400),
    (Mnemonic::Add0100, 0x0100),
    (Mnemonic::Add0040, 0x0040),
    (Mnemonic::Add0010, 0x0010),
    (Mnemonic::Add0004, 0x0004),
    (Mnemonic::Add0001, 0x0001),
];

const fn build_codon_table() -> ([u8; 49], [u8; 256]) {
    const UNASSIGNED: u8 = 0xFF;
    let mut codons = [0u8; 49];
    let mut reverse = [UNASSIGNED; 256];
    let mut next = 0u8;
    let mut i = 0;
    while i < 49 {
        let codon = if i == Mnemonic::GetEIP as usize {
            GET_EIP_CODON
        } else if i == Mnemonic::JnzUp as usize {
            JNZ_UP_CODON
        } else {
            while next == GET_EIP_CODON || next == JNZ_UP_CODON {
                next += 1;
            }
            next += 1;
            next - 1
        };
        codons[i] = codon;
        reverse[codon as usize] = i as u8;
        i += 1;
    }
    (codons, reverse)
}

const CODON_TABLE: ([u8; 49], [u8; 256]) = build_codon_table();

impl Mnemonic {
    /// Canonical codon: listing order, skipping the two pinned slots.
    pub fn codon(self) -> u8 {
        CODON_TABLE.0[self as usize]
    }

    pub fn from_codon(codon: u8) -> Option<Mnemonic> {
        Mnemonic::ALL.get(CODON_TABLE.1[codon as usize] as usize).copied()
    }

    pub fn api(self) -> Option<Api> {
        let first = Mnemonic::CallApiGetTickCounter as usize;
        (self as usize).checked_sub(first).and_then(|i| Api::from_number(i as u8))
    }

    /// The micro-op sequence this instruction stands for.
    pub fn semantics(self) -> Vec<MicroOp> {
        use Mnemonic::*;
        use Reg::*;
        let mov = |dst, src| MicroOp::Mov { dst, src };
        let down = (ENTRY_BYTES - 2 + DOWN_SKIP_BYTES) as i8;
        match self {
            NopsA => vec![mov(Bc1, RegA)],
            NopsB => vec![mov(Bc1, RegB)],
            NopsD => vec![mov(Bc1, RegD)],
            NopdA => vec![mov(RegA, Bc1)],
            NopdB => vec![mov(RegB, Bc1)],
            NopdD => vec![mov(RegD, Bc1)],
            SaveWrtOff => vec![mov(Ba1, Bc1)],
            SaveJmpOff => vec![mov(Ba2, Bc1)],
            WriteByte => vec![MicroOp::StoreByte],
            WriteDWord => vec![MicroOp::StoreDword],
            Save => vec![mov(Bc2, Bc1)],
            AddSaved => vec![MicroOp::Add],
            SubSaved => vec![MicroOp::Sub],
            GetDO => vec![MicroOp::MovImm(DATA_OFFSET)],
            GetData => vec![MicroOp::LoadDword],
            GetEIP => vec![MicroOp::GetIp],
            Zer0 => vec![MicroOp::MovImm(0)],
            Push => vec![MicroOp::Push],
            Pop => vec![MicroOp::Pop],
            Mul => vec![MicroOp::Mul],
            Div => vec![MicroOp::Div],
            Shl => vec![MicroOp::Shl],
            Shr => vec![MicroOp::Shr],
            And => vec![MicroOp::And],
            Xor => vec![MicroOp::Xor],
            Add0001 | Add0004 | Add0010 | Add0040 | Add0100 | Add0400 | Add1000 | Add4000 => {
                let imm = ADD_IMMEDIATES
                    .iter()
                    .find(|(m, _)| *m == self)
                    .map(|&(_, v)| v)
                    .unwrap_or_default();
                vec![MicroOp::AddImm(imm)]
            }
            Sub0001 => vec![MicroOp::SubImm(1)],
            // jz over; jmp BA2; over:
            JnzUp => vec![MicroOp::Jz(1), MicroOp::JmpIndirect],
            JnzDown => vec![MicroOp::Jnz(down)],
            JzDown => vec![MicroOp::Jz(down)],
            Ret => vec![MicroOp::Ret],
            _ => vec![MicroOp::Syscall(self.api().map(|a| a as u8).unwrap_or_default())],
        }
    }

    /// Default alphabet entry: the semantics, NOP-padded to eight bytes.
    pub fn entry(self) -> [u8; ENTRY_BYTES] {
        let mut entry = [opcode::NOP; ENTRY_BYTES];
        let bytes = encode_ops(&self.semantics());
        entry[..bytes.len()].copy_from_slice(&bytes);
        entry
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mnemonic {
    type Err = ChemistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mnemonic::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ChemistryError::UnknownMnemonic(s.to_string()))
    }
}

/// Looks up an instruction's micro-op sequence by name.
pub fn semantics_of(mnemonic: &str) -> Result<Vec<MicroOp>, ChemistryError> {
    Ok(mnemonic.parse::<Mnemonic>()?.semantics())
}

/// Codon to micro-code translation table: 256 entries of 8 bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct Alphabet(Box<[u8; ALPHABET_BYTES]>);

impl Alphabet {
    pub fn from_bytes(bytes: &[u8]) -> Result<Alphabet, ChemistryError> {
        let arr: [u8; ALPHABET_BYTES] = bytes
            .try_into()
            .map_err(|_| ChemistryError::AlphabetSize(bytes.len()))?;
        Ok(Alphabet(Box::new(arr)))
    }

    pub fn entry(&self, codon: u8) -> &[u8; ENTRY_BYTES] {
        let at = codon as usize * ENTRY_BYTES;
        self.0[at..at + ENTRY_BYTES].try_into().expect("entry slice")
    }

    pub fn set_entry(&mut self, codon: u8, entry: [u8; ENTRY_BYTES]) {
        let at = codon as usize * ENTRY_BYTES;
        self.0[at..at + ENTRY_BYTES].copy_from_slice(&entry);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0[..]
    }

    /// The mnemonic a codon denotes here, if its entry is still the canonical one.
    pub fn mnemonic(&self, codon: u8) -> Option<Mnemonic> {
        Mnemonic::from_codon(codon).filter(|m| &m.entry() == self.entry(codon))
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Alphabet").field("bytes", &ALPHABET_BYTES).finish()
    }
}

/// The canonical alphabet. Unassigned codons map to eight NOPs.
pub fn default_alphabet() -> Alphabet {
    let mut alphabet = Alphabet(Box::new([opcode::NOP; ALPHABET_BYTES]));
    for m in Mnemonic::ALL {
        alphabet.set_entry(m.codon(), m.entry());
    }
    alphabet
}

/// Human-readable codon table, one `codon mnemonic hex-entry` line per assigned codon.
pub fn codon_table_listing() -> String {
    let mut rows: Vec<Mnemonic> = Mnemonic::ALL.to_vec();
    rows.sort_by_key(|m| m.codon());
    let mut out = String::from("; codon  mnemonic                  micro-code\n");
    for m in rows {
        let hex: Vec<String> = m.entry().iter().map(|b| format!("{b:02x}")).collect();
        out.push_str(&format!("{:>3}  {:<26}{}\n", m.codon(), m.name(), hex.join(" ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn forty_nine_unique_mnemonics_and_codons() {
        let names: HashSet<_> = Mnemonic::ALL.iter().map(|m| m.name()).collect();
        let codons: HashSet<_> = Mnemonic::ALL.iter().map(|m| m.codon()).collect();
        assert_eq!(names.len(), 49);
        assert_eq!(codons.len(), 49);
        assert!(256 - codons.len() >= 207);
    }

    #[test]
    fn block_sizes() {
        let count = |f: fn(&Mnemonic) -> bool| Mnemonic::ALL.iter().filter(|m| f(m)).count();
        assert_eq!(count(|m| (*m as usize) <= Mnemonic::GetEIP as usize), 16);
        assert_eq!(count(|m| (Mnemonic::Zer0..=Mnemonic::Sub0001).contains(m)), 18);
        assert_eq!(count(|m| (Mnemonic::JnzUp..=Mnemonic::Ret).contains(m)), 4);
        assert_eq!(count(|m| m.api().is_some()), 11);
    }

    #[test]
    fn pinned_codons() {
        assert_eq!(Mnemonic::GetEIP.codon(), 24);
        assert_eq!(Mnemonic::JnzUp.codon(), 25);
        assert_eq!(Mnemonic::NopsA.codon(), 0);
        assert_eq!(Mnemonic::Zer0.codon(), 15);
        assert_eq!(Mnemonic::Add0001.codon(), 26);
        assert_eq!(Mnemonic::CallApiSleep.codon(), 48);
    }

    #[test]
    fn every_entry_fits_its_slot() {
        for m in Mnemonic::ALL {
            assert!(encode_ops(&m.semantics()).len() <= ENTRY_BYTES, "{m}");
        }
    }

    #[test]
    fn get_eip_and_jnz_up_entries() {
        let a = default_alphabet();
        assert_eq!(a.entry(24)[0], opcode::GET_IP);
        assert!(a.entry(24)[1..].iter().all(|&b| b == opcode::NOP));
        assert_eq!(
            decode_entry(a.entry(25))[..2],
            [MicroOp::Jz(1), MicroOp::JmpIndirect]
        );
        assert_eq!(a.entry(25)[3..], [opcode::NOP; 5]);
    }

    #[test]
    fn unassigned_slots_are_nops() {
        let a = default_alphabet();
        for c in 49..=255u8 {
            assert_eq!(a.entry(c), &[opcode::NOP; 8]);
            assert_eq!(decode_entry(a.entry(c)), vec![MicroOp::Nop; 8]);
        }
    }

    #[test]
    fn listed_semantics() {
        let mov = |dst, src| MicroOp::Mov { dst, src };
        assert_eq!(semantics_of("getdata").unwrap(), vec![MicroOp::LoadDword]);
        assert_eq!(semantics_of("zer0").unwrap(), vec![MicroOp::MovImm(0)]);
        assert_eq!(semantics_of("add0400").unwrap(), vec![MicroOp::AddImm(0x400)]);
        assert_eq!(semantics_of("nopsA").unwrap(), vec![mov(Reg::Bc1, Reg::RegA)]);
        assert_eq!(semantics_of("getDO").unwrap(), vec![MicroOp::MovImm(0x5000)]);
        assert_eq!(
            semantics_of("bogus"),
            Err(ChemistryError::UnknownMnemonic("bogus".into()))
        );
        let mut nops_a = decode_entry(&Mnemonic::NopsA.entry());
        assert_eq!(nops_a.remove(0), mov(Reg::Bc1, Reg::RegA));
        assert!(nops_a.iter().all(|op| *op == MicroOp::Nop));
    }

    #[test]
    fn down_jumps_skip_four_slots() {
        // Target = slot end + 32, relative to the end of the 2-byte jump.
        assert_eq!(Mnemonic::JnzDown.semantics(), vec![MicroOp::Jnz(38)]);
        assert_eq!(Mnemonic::JzDown.semantics(), vec![MicroOp::Jz(38)]);
    }

    #[test]
    fn truncated_tail_is_invalid() {
        let mut entry = [opcode::NOP; 8];
        entry[7] = opcode::JNZ;
        let ops = decode_entry(&entry);
        assert_eq!(ops.len(), 8);
        assert_eq!(ops[7], MicroOp::Invalid(opcode::JNZ));

        let mut entry = [opcode::NOP; 8];
        entry[5] = opcode::MOV_IMM;
        let ops = decode_entry(&entry);
        assert_eq!(ops[5..], [MicroOp::Invalid(0x20), MicroOp::Invalid(0x90), MicroOp::Invalid(0x90)]);
    }

    #[test]
    fn bad_register_is_invalid() {
        assert_eq!(MicroOp::decode(&[0x10, 0x7F]), Ok((MicroOp::Invalid(0x10), 1)));
        assert_eq!(MicroOp::decode(&[0xFF]), Ok((MicroOp::Invalid(0xFF), 1)));
    }

    #[test]
    fn default_entries_round_trip() {
        let a = default_alphabet();
        for c in 0..=255u8 {
            assert_eq!(&encode_ops(&decode_entry(a.entry(c)))[..], &a.entry(c)[..]);
        }
    }

    #[test]
    fn alphabet_size() {
        assert_eq!(default_alphabet().as_bytes().len(), 2048);
        assert!(Alphabet::from_bytes(&[0; 2047]).is_err());
    }

    #[test]
    fn mnemonic_parse_is_case_insensitive() {
        assert_eq!("JNZUP".parse::<Mnemonic>().unwrap(), Mnemonic::JnzUp);
        assert_eq!("callapisleep".parse::<Mnemonic>().unwrap(), Mnemonic::CallApiSleep);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_op() -> impl Strategy<Value = MicroOp> {
            let reg = (0u8..7).prop_map(|i| Reg::from_index(i).unwrap());
            prop_oneof![
                Just(MicroOp::Nop),
                (reg.clone(), reg).prop_map(|(dst, src)| MicroOp::Mov { dst, src }),
                any::<u32>().prop_map(MicroOp::MovImm),
                any::<u32>().prop_map(MicroOp::AddImm),
                any::<u32>().prop_map(MicroOp::SubImm),
                any::<i8>().prop_map(MicroOp::Jz),
                any::<i8>().prop_map(MicroOp::Jnz),
                any::<u8>().prop_map(MicroOp::Syscall),
                prop::sample::select(vec![
                    MicroOp::Add, MicroOp::Sub, MicroOp::And, MicroOp::Xor, MicroOp::Shl,
                    MicroOp::Shr, MicroOp::Mul, MicroOp::Div, MicroOp::Push, MicroOp::Pop,
                    MicroOp::StoreByte, MicroOp::StoreDword, MicroOp::LoadDword,
                    MicroOp::JmpIndirect, MicroOp::Ret, MicroOp::GetIp,
                ]),
            ]
        }

        proptest! {
            #[test]
            fn encode_then_decode_is_identity(op in any_op()) {
                let bytes = encode_ops(&[op]);
                prop_assert_eq!(bytes.len(), op.len());
                prop_assert_eq!(MicroOp::decode(&bytes), Ok((op, op.len())));
            }

            #[test]
            fn any_entry_reencodes_exactly(entry in any::<[u8; 8]>()) {
                let ops = decode_entry(&entry);
                prop_assert_eq!(encode_ops(&ops), entry.to_vec());
            }
        }
    }
}
