//! A single organism in a private filesystem, with no scheduler or guards.
//! Used by `run` and by robustness scans.

use std::collections::BTreeMap;
use std::io::{self, Write};

use super::{Event, FileMeta, SpawnRequest, SyscallContext, VirtualFile, Vfs};
use crate::translator::{translate_bytes, GenomeError};
use crate::vm::{FaultKind, ProcessState, RunOutcome};

/// Name the organism runs under.
pub const ISOLATE_FILE: &str = "organism.rpw";

const CHUNK: u64 = 10_000;
/// Instructions per virtual millisecond, matching the default world quantum.
const OPS_PER_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IsolateOutcome {
    Exited,
    Fault { kind: FaultKind, ip: u32 },
    BudgetExhausted,
    /// Stopped early because the organism became viable.
    Viable,
}

impl IsolateOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            IsolateOutcome::Exited => "exited",
            IsolateOutcome::Fault { kind, .. } => kind.as_str(),
            IsolateOutcome::BudgetExhausted => "budget",
            IsolateOutcome::Viable => "viable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolateReport {
    pub outcome: IsolateOutcome,
    pub instructions: u64,
    pub clock_ms: u64,
    /// Names passed to successful `CreateProcess` calls, other than its own.
    pub spawned: Vec<String>,
    /// Files written by `CopyFile`.
    pub files_created: Vec<String>,
    pub syscall_counts: [u64; 11],
    pub events: Vec<Event>,
}

impl IsolateReport {
    pub fn viable(&self) -> bool {
        !self.spawned.is_empty()
    }

    pub fn offspring_count(&self) -> usize {
        self.spawned.len()
    }
}

pub struct Isolate {
    vfs: Vfs,
    state: ProcessState,
    /// Stop as soon as the first offspring is started.
    pub stop_when_viable: bool,
}

impl Isolate {
    pub fn new(genome: &[u8]) -> Result<Isolate, GenomeError> {
        let program = translate_bytes(genome)?;
        let state = program.load().expect("translated programs fit in memory");
        Ok(Isolate::from_state(genome, state))
    }

    /// Runs an already-built process image whose file contents are `genome`.
    pub fn from_state(genome: &[u8], mut state: ProcessState) -> Isolate {
        state.set_command_line(ISOLATE_FILE);
        let mut vfs = Vfs::new();
        vfs.insert(
            ISOLATE_FILE,
            VirtualFile {
                bytes: genome.to_vec(),
                meta: FileMeta {
                    created_at: 0,
                    parent: None,
                    generation: 0,
                    running: 1,
                },
            },
        );
        Isolate {
            vfs,
            state,
            stop_when_viable: false,
        }
    }

    pub fn vfs(&self) -> &Vfs {
        &self.vfs
    }

    pub fn state(&self) -> &ProcessState {
        &self.state
    }

    /// Runs for at most `budget` instructions. `Sleep` advances the virtual
    /// clock without costing instructions.
    pub fn run(&mut self, budget: u64) -> IsolateReport {
        self.run_inner(budget, None).expect("no trace output to fail")
    }

    /// [`run`](Self::run), writing one trace line per micro-op to `out`.
    pub fn run_traced(&mut self, budget: u64, out: &mut dyn Write) -> io::Result<IsolateReport> {
        self.run_inner(budget, Some(out))
    }

    fn run_inner(&mut self, budget: u64, mut trace: Option<&mut dyn Write>) -> io::Result<IsolateReport> {
        let mut spawns: Vec<SpawnRequest> = Vec::new();
        let mut events = Vec::new();
        let mut copies = 0u32;
        let mut slept = 0u64;
        let mut spawned = Vec::new();
        let outcome = loop {
            let done = self.state.instructions_executed;
            if done >= budget {
                break IsolateOutcome::BudgetExhausted;
            }
            let mut ctx = SyscallContext {
                vfs: &mut self.vfs,
                now_ms: slept + done / OPS_PER_MS,
                tick: 0,
                pid: 1,
                copies_made: &mut copies,
                spawns: &mut spawns,
                events: &mut events,
            };
            let chunk = (budget - done).min(CHUNK);
            let out = match trace.as_mut() {
                Some(w) => self.state.run_traced(&mut ctx, chunk, w)?,
                None => self.state.run(&mut ctx, chunk),
            };
            spawned.extend(spawns.drain(..).map(|s| s.file).filter(|f| f != ISOLATE_FILE));
            match out {
                RunOutcome::Exited => break IsolateOutcome::Exited,
                RunOutcome::Fault(f) => break IsolateOutcome::Fault { kind: f.kind, ip: f.ip },
                RunOutcome::Sleep(ms) => slept += ms as u64,
                RunOutcome::BudgetExhausted => {}
            }
            if self.stop_when_viable && !spawned.is_empty() {
                break IsolateOutcome::Viable;
            }
        };
        let mut created = BTreeMap::new();
        for e in &events {
            if let Event::FileCreated { file, .. } | Event::FileReplaced { file, .. } = e {
                created.insert(file.clone(), ());
            }
        }
        Ok(IsolateReport {
            outcome,
            instructions: self.state.instructions_executed,
            clock_ms: slept + self.state.instructions_executed / OPS_PER_MS,
            spawned,
            files_created: created.into_keys().collect(),
            syscall_counts: self.state.syscall_counts,
            events,
        })
    }
}
