//! Micro-code interpreter with a 64 KiB sandbox and the host-call layer.
//!
//! Memory map:
//!
//! | range             | use                                   |
//! |-------------------|---------------------------------------|
//! | `0x0000..0x5000`  | translated program                    |
//! | `0x5000..0x6000`  | data segment (`getDO` base), scratch  |
//! | `0x5F00..0x6000`  | own filename, NUL terminated          |
//! | `0x6000..0x8000`  | file-mapping window                   |
//! | `0x8000..0x10000` | stack, top at `0xFFFC`                |

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemistry::{Api, MicroOp, Reg, Truncated, DATA_OFFSET};

pub const MEMORY_SIZE: usize = 0x10000;
pub const MAX_PROGRAM: usize = 0x5000;
pub const MAX_DATA: usize = 0x1000;
pub const COMMAND_LINE: u32 = 0x5F00;
pub const MAX_COMMAND_LINE: usize = 0xFF;
pub const MAP_WINDOW: u32 = 0x6000;
pub const MAP_WINDOW_SIZE: usize = 0x2000;
pub const STACK_FLOOR: u32 = MAP_WINDOW + MAP_WINDOW_SIZE as u32;
pub const STACK_TOP: u32 = 0xFFFC;
/// Return address planted under the first stack frame; `RET` to it exits.
pub const SENTINEL: u32 = 0xFFFF_FFFF;
/// Longest filename a syscall will read from memory.
pub const MAX_NAME: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("program image of {0} bytes exceeds {MAX_PROGRAM}")]
    ProgramTooLarge(usize),
    #[error("data segment of {0} bytes exceeds {MAX_DATA}")]
    DataTooLarge(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterFile {
    pub reg_a: u32,
    pub reg_b: u32,
    pub reg_d: u32,
    pub bc1: u32,
    pub bc2: u32,
    pub ba1: u32,
    pub ba2: u32,
    pub zf: bool,
}

impl RegisterFile {
    pub fn get(&self, r: Reg) -> u32 {
        match r {
            Reg::RegA => self.reg_a,
            Reg::RegB => self.reg_b,
            Reg::RegD => self.reg_d,
            Reg::Bc1 => self.bc1,
            Reg::Bc2 => self.bc2,
            Reg::Ba1 => self.ba1,
            Reg::Ba2 => self.ba2,
        }
    }

    pub fn set(&mut self, r: Reg, v: u32) {
        match r {
            Reg::RegA => self.reg_a = v,
            Reg::RegB => self.reg_b = v,
            Reg::RegD => self.reg_d = v,
            Reg::Bc1 => self.bc1 = v,
            Reg::Bc2 => self.bc2 = v,
            Reg::Ba1 => self.ba1 = v,
            Reg::Ba2 => self.ba2 = v,
        }
    }

    fn set_bc1_flagged(&mut self, v: u32) {
        self.bc1 = v;
        self.zf = v == 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    InvalidOpcode,
    MemoryOutOfBounds,
    DivideByZero,
    StackOverflow,
    StackUnderflow,
    BudgetExhausted,
    BadSyscallArgs,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::InvalidOpcode => "invalid-opcode",
            FaultKind::MemoryOutOfBounds => "memory-out-of-bounds",
            FaultKind::DivideByZero => "divide-by-zero",
            FaultKind::StackOverflow => "stack-overflow",
            FaultKind::StackUnderflow => "stack-underflow",
            FaultKind::BudgetExhausted => "budget-exhausted",
            FaultKind::BadSyscallArgs => "bad-syscall-args",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub kind: FaultKind,
    pub ip: u32,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:#06x}", self.kind, self.ip)
    }
}

/// Result of executing one micro-op.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Running,
    Exited,
    Fault(Fault),
    /// The process asked to sleep for this many virtual milliseconds.
    Sleep(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Exited,
    Fault(Fault),
    /// The step budget handed to [`ProcessState::run`] ran out.
    BudgetExhausted,
    Sleep(u32),
}

/// What the sandbox may do to the outside world.
///
/// Implemented by the world's virtual filesystem and scheduler; every
/// effect a process can have beyond its own memory goes through here.
pub trait Host {
    fn now_ms(&self) -> u64;
    fn file(&self, name: &str) -> Option<&[u8]>;
    fn copy_file(&mut self, src: &str, dst: &str) -> bool;
    /// Overwrites an existing file. Fails for executing files.
    fn write_file(&mut self, name: &str, bytes: &[u8]) -> bool;
    fn create_process(&mut self, name: &str) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "file", rename_all = "kebab-case")]
pub enum Handle {
    File(String),
    Mapping(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub file: String,
    pub len: u32,
}

/// A loaded, possibly running, organism.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessState {
    pub regs: RegisterFile,
    /// Always [`MEMORY_SIZE`] bytes; persisted out of band by snapshots.
    #[serde(skip)]
    pub memory: Vec<u8>,
    pub ip: u32,
    pub sp: u32,
    pub instructions_executed: u64,
    pub birth_time: u64,
    pub owning_file: String,
    pub handles: BTreeMap<u32, Handle>,
    pub next_handle: u32,
    pub view: Option<View>,
    pub syscall_counts: [u64; 11],
}

impl fmt::Debug for ProcessState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessState")
            .field("regs", &self.regs)
            .field("ip", &format_args!("{:#06x}", self.ip))
            .field("sp", &format_args!("{:#06x}", self.sp))
            .field("instructions_executed", &self.instructions_executed)
            .field("owning_file", &self.owning_file)
            .finish_non_exhaustive()
    }
}

const FIRST_HANDLE: u32 = 0x10;

impl ProcessState {
    /// Places a program at `0x0000` and its data at the data offset, with an
    /// empty stack holding only the exit sentinel.
    pub fn load(program: &[u8], data: &[u8]) -> Result<ProcessState, LoadError> {
        if program.len() > MAX_PROGRAM {
            return Err(LoadError::ProgramTooLarge(program.len()));
        }
        if data.len() > MAX_DATA {
            return Err(LoadError::DataTooLarge(data.len()));
        }
        let mut memory = vec![0u8; MEMORY_SIZE];
        memory[..program.len()].copy_from_slice(program);
        let d = DATA_OFFSET as usize;
        memory[d..d + data.len()].copy_from_slice(data);
        let mut state = ProcessState {
            regs: RegisterFile::default(),
            memory,
            ip: 0,
            sp: STACK_TOP,
            instructions_executed: 0,
            birth_time: 0,
            owning_file: String::new(),
            handles: BTreeMap::new(),
            next_handle: FIRST_HANDLE,
            view: None,
            syscall_counts: [0; 11],
        };
        state.write32(STACK_TOP, SENTINEL).expect("stack top in bounds");
        Ok(state)
    }

    /// Records the owning file and writes its name where `GetCommandLine` points.
    pub fn set_command_line(&mut self, name: &str) {
        let at = COMMAND_LINE as usize;
        let bytes = &name.as_bytes()[..name.len().min(MAX_COMMAND_LINE)];
        self.memory[at..at + MAX_COMMAND_LINE + 1].fill(0);
        self.memory[at..at + bytes.len()].copy_from_slice(bytes);
        self.owning_file = name.to_string();
    }

    /// Restarts execution at `0x0000` with a fresh stack, keeping memory and registers.
    pub fn rewind(&mut self) {
        self.ip = 0;
        self.sp = STACK_TOP;
        self.write32(STACK_TOP, SENTINEL).expect("stack top in bounds");
    }

    pub fn read32(&self, addr: u32) -> Result<u32, FaultKind> {
        let a = addr as usize;
        match self.memory.get(a..a.wrapping_add(4)) {
            Some(b) if a <= MEMORY_SIZE - 4 => Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            _ => Err(FaultKind::MemoryOutOfBounds),
        }
    }

    pub fn write32(&mut self, addr: u32, v: u32) -> Result<(), FaultKind> {
        let a = addr as usize;
        if a > MEMORY_SIZE - 4 {
            return Err(FaultKind::MemoryOutOfBounds);
        }
        self.memory[a..a + 4].copy_from_slice(&v.to_le_bytes());
        Ok(())
    }

    /// Micro-op at the instruction pointer, if it decodes within memory.
    pub fn current_op(&self) -> Option<MicroOp> {
        self.memory
            .get(self.ip as usize..)
            .and_then(|m| MicroOp::decode(m).ok())
            .map(|(op, _)| op)
    }

    /// One trace line describing the state before the next micro-op runs.
    pub fn trace_line(&self) -> String {
        let op = self
            .current_op()
            .map(|op| op.to_string())
            .unwrap_or_else(|| "<truncated>".into());
        let r = &self.regs;
        format!(
            "{:04x} {:<20} A={:08x} B={:08x} D={:08x} BC1={:08x} BC2={:08x} BA1={:08x} BA2={:08x} SP={:04x} ZF={}",
            self.ip, op, r.reg_a, r.reg_b, r.reg_d, r.bc1, r.bc2, r.ba1, r.ba2, self.sp, r.zf as u8
        )
    }

    fn push(&mut self, v: u32) -> Result<(), FaultKind> {
        if self.sp < STACK_FLOOR + 4 {
            return Err(FaultKind::StackOverflow);
        }
        self.sp -= 4;
        self.write32(self.sp, v)
    }

    fn pop(&mut self) -> Result<u32, FaultKind> {
        if self.sp >= STACK_TOP {
            return Err(FaultKind::StackUnderflow);
        }
        let v = self.read32(self.sp)?;
        self.sp += 4;
        Ok(v)
    }

    fn jump(&mut self, target: i64) -> Result<(), FaultKind> {
        if (0..MEMORY_SIZE as i64).contains(&target) {
            self.ip = target as u32;
            Ok(())
        } else {
            Err(FaultKind::MemoryOutOfBounds)
        }
    }

    /// Executes exactly one micro-op.
    pub fn step<H: Host + ?Sized>(&mut self, host: &mut H) -> Step {
        let ip = self.ip;
        match self.exec(host) {
            Ok(step) => step,
            Err(kind) => Step::Fault(Fault { kind, ip }),
        }
    }

    fn exec<H: Host + ?Sized>(&mut self, host: &mut H) -> Result<Step, FaultKind> {
        let (op, len) = match MicroOp::decode(&self.memory[self.ip as usize..]) {
            Ok(decoded) => decoded,
            Err(Truncated) => return Err(FaultKind::MemoryOutOfBounds),
        };
        self.instructions_executed += 1;
        let next = self.ip + len as u32;
        let r = &mut self.regs;
        match op {
            MicroOp::Nop => {}
            MicroOp::Mov { dst, src } => {
                let v = r.get(src);
                r.set(dst, v);
            }
            MicroOp::MovImm(v) => r.bc1 = v,
            MicroOp::AddImm(v) => r.set_bc1_flagged(r.bc1.wrapping_add(v)),
            MicroOp::SubImm(v) => r.set_bc1_flagged(r.bc1.wrapping_sub(v)),
            MicroOp::Add => r.set_bc1_flagged(r.bc1.wrapping_add(r.bc2)),
            MicroOp::Sub => r.set_bc1_flagged(r.bc1.wrapping_sub(r.bc2)),
            MicroOp::And => r.set_bc1_flagged(r.bc1 & r.bc2),
            MicroOp::Xor => r.set_bc1_flagged(r.bc1 ^ r.bc2),
            MicroOp::Shl => r.set_bc1_flagged(r.bc1 << (r.bc2 & 0x1F)),
            MicroOp::Shr => r.set_bc1_flagged(r.bc1 >> (r.bc2 & 0x1F)),
            MicroOp::Mul => {
                let product = r.reg_a as u64 * r.bc1 as u64;
                r.reg_a = product as u32;
                r.reg_d = (product >> 32) as u32;
            }
            MicroOp::Div => {
                if r.bc1 == 0 {
                    return Err(FaultKind::DivideByZero);
                }
                let dividend = ((r.reg_d as u64) << 32) | r.reg_a as u64;
                let quotient = dividend / r.bc1 as u64;
                // Quotient overflow raises the same divide error as x86.
                let quotient = u32::try_from(quotient).map_err(|_| FaultKind::DivideByZero)?;
                r.reg_d = (dividend % r.bc1 as u64) as u32;
                r.reg_a = quotient;
            }
            MicroOp::Push => {
                let v = r.bc1;
                self.push(v)?;
            }
            MicroOp::Pop => self.regs.bc1 = self.pop()?,
            MicroOp::StoreByte => {
                let a = r.ba1 as usize;
                let v = r.bc1 as u8;
                *self.memory.get_mut(a).ok_or(FaultKind::MemoryOutOfBounds)? = v;
            }
            MicroOp::StoreDword => {
                let (a, v) = (r.ba1, r.bc1);
                self.write32(a, v)?;
            }
            MicroOp::LoadDword => self.regs.bc1 = self.read32(self.regs.bc1)?,
            MicroOp::Jz(rel) | MicroOp::Jnz(rel) => {
                let taken = matches!(op, MicroOp::Jz(_)) == r.zf;
                let target = if taken { next as i64 + rel as i64 } else { next as i64 };
                self.jump(target)?;
                return Ok(Step::Running);
            }
            MicroOp::JmpIndirect => {
                let target = r.ba2 as i64;
                self.jump(target)?;
                return Ok(Step::Running);
            }
            MicroOp::Ret => {
                let top = self.read32(self.sp)?;
                if top == SENTINEL {
                    return Ok(Step::Exited);
                }
                let target = self.pop()?;
                self.jump(target as i64)?;
                return Ok(Step::Running);
            }
            MicroOp::GetIp => r.bc1 = next,
            MicroOp::Syscall(n) => {
                let api = Api::from_number(n).ok_or(FaultKind::InvalidOpcode)?;
                let step = self.syscall(host, api)?;
                self.ip = next;
                return Ok(step);
            }
            MicroOp::Invalid(_) => return Err(FaultKind::InvalidOpcode),
        }
        self.ip = next;
        Ok(Step::Running)
    }

    /// Reads a NUL-terminated filename out of process memory.
    fn read_name(&self, addr: u32) -> Option<String> {
        let start = addr as usize;
        let window = self.memory.get(start..(start + MAX_NAME + 1).min(MEMORY_SIZE))?;
        let end = window.iter().position(|&b| b == 0)?;
        let name = std::str::from_utf8(&window[..end]).ok()?;
        valid_file_name(name).then(|| name.to_string())
    }

    fn new_handle(&mut self, h: Handle) -> u32 {
        let id = self.next_handle;
        self.next_handle = self.next_handle.wrapping_add(4).max(FIRST_HANDLE);
        self.handles.insert(id, h);
        id
    }

    /// Executes a host call. Arguments are popped callee-side, the result lands in BC1.
    pub fn syscall<H: Host + ?Sized>(&mut self, host: &mut H, api: Api) -> Result<Step, FaultKind> {
        let n = api.arg_count();
        let available = ((STACK_TOP - self.sp.min(STACK_TOP)) / 4) as usize;
        if available < n {
            return Err(FaultKind::BadSyscallArgs);
        }
        let mut args = [0u32; 2];
        for slot in args.iter_mut().take(n) {
            *slot = self.pop()?;
        }
        self.syscall_counts[api as usize] += 1;
        let mut step = Step::Running;
        let ret: u32 = match api {
            Api::GetTickCount => host.now_ms() as u32,
            Api::GetCommandLine => COMMAND_LINE,
            Api::CopyFile => match (self.read_name(args[0]), self.read_name(args[1])) {
                (Some(src), Some(dst)) => host.copy_file(&src, &dst) as u32,
                _ => 0,
            },
            Api::CreateFile => match self.read_name(args[0]) {
                Some(name) if host.file(&name).is_some() => self.new_handle(Handle::File(name)),
                _ => 0,
            },
            Api::GetFileSize => match self.handles.get(&args[0]) {
                Some(Handle::File(name)) => host.file(name).map_or(u32::MAX, |b| b.len() as u32),
                _ => u32::MAX,
            },
            Api::CreateFileMapping => match self.handles.get(&args[0]) {
                Some(Handle::File(name)) if host.file(name).is_some() => {
                    let name = name.clone();
                    self.new_handle(Handle::Mapping(name))
                }
                _ => 0,
            },
            Api::MapViewOfFile => self.map_view(host, args[0]),
            Api::CreateProcess => match self.read_name(args[0]) {
                Some(name) => host.create_process(&name) as u32,
                None => 0,
            },
            Api::UnmapViewOfFile => match self.view.take() {
                Some(view) if args[0] == MAP_WINDOW => {
                    let w = MAP_WINDOW as usize;
                    host.write_file(&view.file, &self.memory[w..w + view.len as usize]) as u32
                }
                other => {
                    self.view = other;
                    0
                }
            },
            Api::CloseHandle => self.handles.remove(&args[0]).is_some() as u32,
            Api::Sleep => {
                if args[0] > 0 {
                    step = Step::Sleep(args[0]);
                }
                0
            }
        };
        self.regs.bc1 = ret;
        Ok(step)
    }

    fn map_view<H: Host + ?Sized>(&mut self, host: &mut H, handle: u32) -> u32 {
        if self.view.is_some() {
            return 0;
        }
        let Some(Handle::Mapping(name)) = self.handles.get(&handle) else {
            return 0;
        };
        let Some(bytes) = host.file(name) else {
            return 0;
        };
        if bytes.len() > MAP_WINDOW_SIZE {
            return 0;
        }
        let w = MAP_WINDOW as usize;
        self.memory[w..w + bytes.len()].copy_from_slice(bytes);
        self.view = Some(View {
            file: name.clone(),
            len: bytes.len() as u32,
        });
        MAP_WINDOW
    }

    /// Steps until the process exits, faults, sleeps, or `budget` micro-ops have run.
    pub fn run<H: Host + ?Sized>(&mut self, host: &mut H, budget: u64) -> RunOutcome {
        for _ in 0..budget {
            match self.step(host) {
                Step::Running => {}
                Step::Exited => return RunOutcome::Exited,
                Step::Fault(f) => return RunOutcome::Fault(f),
                Step::Sleep(ms) => return RunOutcome::Sleep(ms),
            }
        }
        RunOutcome::BudgetExhausted
    }

    /// [`run`](Self::run), writing one [`trace_line`](Self::trace_line) per micro-op.
    pub fn run_traced<H: Host + ?Sized, W: Write>(
        &mut self,
        host: &mut H,
        budget: u64,
        out: &mut W,
    ) -> io::Result<RunOutcome> {
        for _ in 0..budget {
            writeln!(out, "{}", self.trace_line())?;
            match self.step(host) {
                Step::Running => {}
                Step::Exited => return Ok(RunOutcome::Exited),
                Step::Fault(f) => return Ok(RunOutcome::Fault(f)),
                Step::Sleep(ms) => return Ok(RunOutcome::Sleep(ms)),
            }
        }
        Ok(RunOutcome::BudgetExhausted)
    }
}

/// Names organisms may create: printable ASCII without path separators.
pub fn valid_file_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= MAX_NAME
        && name != "."
        && name != ".."
        && name.bytes().all(|b| (0x21..=0x7E).contains(&b) && b != b'/' && b != b'\\')
}

/// A host with no files and a frozen clock. Every call that needs the world fails.
#[derive(Debug, Default, Clone)]
pub struct NullHost {
    pub now_ms: u64,
}

impl Host for NullHost {
    fn now_ms(&self) -> u64 {
        self.now_ms
    }
    fn file(&self, _: &str) -> Option<&[u8]> {
        None
    }
    fn copy_file(&mut self, _: &str, _: &str) -> bool {
        false
    }
    fn write_file(&mut self, _: &str, _: &[u8]) -> bool {
        false
    }
    fn create_process(&mut self, _: &str) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemistry::{decode_entry, default_alphabet, encode_ops, Mnemonic};

    fn program(ops: &[MicroOp]) -> ProcessState {
        ProcessState::load(&encode_ops(ops), &[]).unwrap()
    }

    fn run_ops(ops: &[MicroOp], regs: RegisterFile) -> (ProcessState, RunOutcome) {
        let mut p = program(ops);
        p.regs = regs;
        let out = p.run(&mut NullHost::default(), 1000);
        (p, out)
    }

    #[test]
    fn load_layout() {
        let p = ProcessState::load(&[0x63], &[1, 2, 3, 4]).unwrap();
        assert_eq!(p.ip, 0);
        assert_eq!(p.sp, 0xFFFC);
        assert_eq!(p.read32(0xFFFC), Ok(SENTINEL));
        assert_eq!(p.read32(0x5000), Ok(0x04030201));
        assert_eq!(p.memory.len(), 0x10000);
        assert!(matches!(
            ProcessState::load(&vec![0; 0x5001], &[]),
            Err(LoadError::ProgramTooLarge(0x5001))
        ));
        assert!(matches!(
            ProcessState::load(&[], &vec![0; 0x1001]),
            Err(LoadError::DataTooLarge(_))
        ));
    }

    #[test]
    fn empty_program_walks_into_zeroed_memory() {
        // 0x00 is not an opcode: an empty image faults on its first step.
        let mut p = ProcessState::load(&[], &[]).unwrap();
        assert!(matches!(
            p.step(&mut NullHost::default()),
            Step::Fault(Fault { kind: FaultKind::InvalidOpcode, ip: 0 })
        ));
    }

    #[test]
    fn ret_on_sentinel_exits() {
        let (p, out) = run_ops(&[MicroOp::Ret], RegisterFile::default());
        assert_eq!(out, RunOutcome::Exited);
        assert_eq!(p.instructions_executed, 1);
    }

    #[test]
    fn self_jump_exhausts_budget() {
        let regs = RegisterFile { ba2: 0, ..Default::default() };
        let (p, out) = run_ops(&[MicroOp::JmpIndirect], regs);
        assert_eq!(out, RunOutcome::BudgetExhausted);
        assert_eq!(p.instructions_executed, 1000);
    }

    #[test]
    fn mul_and_div_use_wide_registers() {
        let (p, _) = run_ops(
            &[MicroOp::Mul, MicroOp::Ret],
            RegisterFile { reg_a: 2, bc1: 3, ..Default::default() },
        );
        assert_eq!((p.regs.reg_a, p.regs.reg_d), (6, 0));

        let (p, _) = run_ops(
            &[MicroOp::Mul, MicroOp::Ret],
            RegisterFile { reg_a: 0x8000_0000, bc1: 2, ..Default::default() },
        );
        assert_eq!((p.regs.reg_a, p.regs.reg_d), (0, 1));

        let (p, _) = run_ops(
            &[MicroOp::Div, MicroOp::Ret],
            RegisterFile { reg_a: 7, reg_d: 0, bc1: 2, ..Default::default() },
        );
        assert_eq!((p.regs.reg_a, p.regs.reg_d), (3, 1));

        let (_, out) = run_ops(&[MicroOp::Div], RegisterFile { reg_a: 7, ..Default::default() });
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::DivideByZero, .. })));

        // 2^32 / 1 does not fit in RegA.
        let (_, out) = run_ops(&[MicroOp::Div], RegisterFile { reg_d: 1, bc1: 1, ..Default::default() });
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::DivideByZero, .. })));
    }

    #[test]
    fn flags_follow_arithmetic_only() {
        let (p, _) = run_ops(
            &[MicroOp::MovImm(1), MicroOp::SubImm(1), MicroOp::MovImm(5), MicroOp::Ret],
            RegisterFile::default(),
        );
        assert!(p.regs.zf, "MOV must not clear ZF");
        let (p, _) = run_ops(
            &[MicroOp::MovImm(0xFFFF_FFFF), MicroOp::AddImm(1), MicroOp::Ret],
            RegisterFile::default(),
        );
        assert_eq!(p.regs.bc1, 0);
        assert!(p.regs.zf);
    }

    #[test]
    fn shifts_mask_to_five_bits() {
        let (p, _) = run_ops(
            &[MicroOp::Shl, MicroOp::Ret],
            RegisterFile { bc1: 1, bc2: 33, ..Default::default() },
        );
        assert_eq!(p.regs.bc1, 2);
        let (p, _) = run_ops(
            &[MicroOp::Shr, MicroOp::Ret],
            RegisterFile { bc1: 0x8000_0000, bc2: 31, ..Default::default() },
        );
        assert_eq!(p.regs.bc1, 1);
    }

    #[test]
    fn stack_faults() {
        let (_, out) = run_ops(&[MicroOp::Pop], RegisterFile::default());
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::StackUnderflow, .. })));

        // PUSH forever until the stack runs into the mapping window.
        let mut p = program(&[MicroOp::Push, MicroOp::JmpIndirect]);
        let out = p.run(&mut NullHost::default(), 1_000_000);
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::StackOverflow, .. })));
        assert_eq!(p.sp, STACK_FLOOR);
    }

    #[test]
    fn memory_bounds() {
        let (_, out) = run_ops(
            &[MicroOp::LoadDword],
            RegisterFile { bc1: 0xFFFD, ..Default::default() },
        );
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::MemoryOutOfBounds, .. })));
        let (_, out) = run_ops(&[MicroOp::StoreByte], RegisterFile { ba1: 0x10000, ..Default::default() });
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::MemoryOutOfBounds, .. })));
        let (_, out) = run_ops(&[MicroOp::JmpIndirect], RegisterFile { ba2: 0x10000, ..Default::default() });
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::MemoryOutOfBounds, .. })));
    }

    #[test]
    fn truncated_op_at_end_of_memory_faults() {
        let mut p = program(&[]);
        p.memory[0xFFFF] = 0x20;
        p.ip = 0xFFFF;
        assert!(matches!(
            p.step(&mut NullHost::default()),
            Step::Fault(Fault { kind: FaultKind::MemoryOutOfBounds, ip: 0xFFFF })
        ));
    }

    #[test]
    fn every_opcode_byte_is_handled() {
        for b in 0..=255u8 {
            let mut p = program(&[]);
            p.memory[0] = b;
            p.regs.bc1 = 0x5000;
            p.regs.bc2 = 1;
            p.regs.ba1 = 0x5100;
            p.regs.ba2 = 8;
            // Must not panic; either a defined effect or a fault.
            let _ = p.step(&mut NullHost::default());
        }
    }

    #[test]
    fn get_ip_points_past_itself() {
        let (p, _) = run_ops(&[MicroOp::Nop, MicroOp::GetIp, MicroOp::Ret], RegisterFile::default());
        assert_eq!(p.regs.bc1, 2);
    }

    #[test]
    fn jnz_up_loops_until_zero() {
        // BC1 = 3; loop: SUB 1; JZ over; JMP BA2; over: RET
        let a = default_alphabet();
        let mut code = encode_ops(&[MicroOp::MovImm(3)]);
        code.resize(8, 0x90);
        code.extend(a.entry(Mnemonic::Sub0001.codon()));
        code.extend(a.entry(Mnemonic::JnzUp.codon()));
        code.extend(a.entry(Mnemonic::Ret.codon()));
        let mut p = ProcessState::load(&code, &[]).unwrap();
        p.regs.ba2 = 8;
        assert_eq!(p.run(&mut NullHost::default(), 1000), RunOutcome::Exited);
        assert_eq!(p.regs.bc1, 0);
    }

    #[test]
    fn down_jump_lands_four_slots_later() {
        let a = default_alphabet();
        let mut code = Vec::new();
        code.extend(a.entry(Mnemonic::Zer0.codon()));
        code.extend(a.entry(Mnemonic::Add0001.codon())); // ZF = 0
        code.extend(a.entry(Mnemonic::JnzDown.codon()));
        for _ in 0..4 {
            code.extend(a.entry(Mnemonic::Add0004.codon()));
        }
        code.extend(a.entry(Mnemonic::Ret.codon()));
        let mut p = ProcessState::load(&code, &[]).unwrap();
        assert_eq!(p.run(&mut NullHost::default(), 1000), RunOutcome::Exited);
        assert_eq!(p.regs.bc1, 1);

        code[0..8].copy_from_slice(a.entry(Mnemonic::Sub0001.codon()));
        code[8..16].copy_from_slice(a.entry(Mnemonic::Add0001.codon())); // 0 -> ZF = 1
        let mut p = ProcessState::load(&code, &[]).unwrap();
        assert_eq!(p.run(&mut NullHost::default(), 1000), RunOutcome::Exited);
        assert_eq!(p.regs.bc1, 16);
    }

    #[test]
    fn entry_execution_matches_semantics() {
        // Running a default alphabet slot and running the bare semantics
        // produce the same register file.
        let a = default_alphabet();
        let seed = RegisterFile {
            reg_a: 0x1234_5678,
            reg_b: 7,
            reg_d: 0,
            bc1: 0x5000,
            bc2: 3,
            ba1: 0x5100,
            ba2: 0x40,
            zf: false,
        };
        for m in Mnemonic::ALL {
            if m.api().is_some() || matches!(m, Mnemonic::Ret | Mnemonic::JnzUp) {
                continue;
            }
            let mut slot = ProcessState::load(a.entry(m.codon()), &[0xAA; 16]).unwrap();
            slot.regs = seed;
            slot.push(0x1234).unwrap();
            for _ in 0..decode_entry(a.entry(m.codon())).len() {
                if slot.ip >= 8 {
                    break;
                }
                assert_eq!(slot.step(&mut NullHost::default()), Step::Running, "{m}");
            }
            let mut bare = ProcessState::load(&encode_ops(&m.semantics()), &[0xAA; 16]).unwrap();
            bare.regs = seed;
            bare.push(0x1234).unwrap();
            for _ in 0..m.semantics().len() {
                bare.step(&mut NullHost::default());
            }
            assert_eq!(slot.regs, bare.regs, "{m}");
            assert!(slot.memory[0x100..] == bare.memory[0x100..], "{m}");
        }
    }

    #[test]
    fn syscall_arg_underflow_faults() {
        let (_, out) = run_ops(&[MicroOp::Syscall(Api::CopyFile as u8)], RegisterFile::default());
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::BadSyscallArgs, .. })));
        let (_, out) = run_ops(&[MicroOp::Syscall(11)], RegisterFile::default());
        assert!(matches!(out, RunOutcome::Fault(Fault { kind: FaultKind::InvalidOpcode, .. })));
    }

    #[test]
    fn sleep_zero_is_a_no_op() {
        let (p, out) = run_ops(
            &[MicroOp::MovImm(0), MicroOp::Push, MicroOp::Syscall(Api::Sleep as u8), MicroOp::Ret],
            RegisterFile::default(),
        );
        assert_eq!(out, RunOutcome::Exited);
        assert_eq!(p.sp, STACK_TOP);
        let (_, out) = run_ops(
            &[MicroOp::MovImm(5), MicroOp::Push, MicroOp::Syscall(Api::Sleep as u8), MicroOp::Ret],
            RegisterFile::default(),
        );
        assert_eq!(out, RunOutcome::Sleep(5));
    }

    #[test]
    fn failed_calls_return_zero() {
        let mut p = program(&[
            MicroOp::MovImm(0x5F00),
            MicroOp::Push,
            MicroOp::Syscall(Api::CreateFile as u8),
            MicroOp::Ret,
        ]);
        p.set_command_line("self.rpw");
        p.regs.bc1 = 99;
        assert_eq!(p.run(&mut NullHost::default(), 100), RunOutcome::Exited);
        assert_eq!(p.regs.bc1, 0);
    }

    #[test]
    fn trace_line_format() {
        let p = program(&[MicroOp::MovImm(0x5000)]);
        let line = p.trace_line();
        assert!(line.starts_with("0000 MOV BC1,0x5000"), "{line}");
        assert!(line.ends_with("SP=fffc ZF=0"), "{line}");
    }

    #[test]
    fn file_names() {
        assert!(valid_file_name("abcdefgh.rpw"));
        assert!(valid_file_name("ab{|}efg.rpw"));
        assert!(!valid_file_name(""));
        assert!(!valid_file_name("a/b"));
        assert!(!valid_file_name(".."));
        assert!(!valid_file_name("with space"));
    }
}
