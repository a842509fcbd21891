//! The virtual ecosystem: files, processes, a clock, and the guards that
//! provide selection.
//!
//! Each [`World::tick`] advances the clock, gives every awake process one
//! quantum, starts the processes requested during the tick and then sweeps
//! the guards in a fixed order: multiple instances, clones, reapers.

mod config;
mod events;
mod evolve;
mod isolate;
mod snapshot;
mod vfs;

pub use config::{ConfigError, GuardConfig};
pub use events::{cause, Event};
pub use evolve::{evolve, summary, EvolveError, EvolveOptions, EvolveSummary};
pub use isolate::{Isolate, IsolateOutcome, IsolateReport, ISOLATE_FILE};
pub use snapshot::SnapshotError;
pub use vfs::{FileMeta, SpawnRequest, SyscallContext, VirtualFile, Vfs};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::translator::translate_bytes;
use crate::vm::{ProcessState, RunOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Process {
    pub pid: u64,
    pub parent: Option<u64>,
    pub state: ProcessState,
    /// Virtual milliseconds until which the process sleeps.
    pub sleep_until: u64,
    pub copies_made: u32,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    config: GuardConfig,
    seed: u64,
    tick: u64,
    clock_ms: u64,
    next_pid: u64,
    total_instructions: u64,
    rng: ChaCha8Rng,
    vfs: Vfs,
    processes: Vec<Process>,
    /// Spawns requested for a future tick, e.g. a staggered bootstrap.
    scheduled: BTreeMap<u64, Vec<String>>,
    events: Vec<Event>,
}

impl World {
    pub fn new(seed: u64, config: GuardConfig) -> World {
        World {
            config,
            seed,
            tick: 0,
            clock_ms: 0,
            next_pid: 1,
            total_instructions: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            vfs: Vfs::new(),
            processes: Vec::new(),
            scheduled: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &GuardConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    /// Instructions executed by all processes so far, dead ones included.
    pub fn total_instructions(&self) -> u64 {
        self.total_instructions
    }

    pub fn vfs(&self) -> &Vfs {
        &self.vfs
    }

    pub fn processes(&self) -> &[Process] {
        &self.processes
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Takes the log accumulated since the last drain.
    pub fn drain_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Adds a generation-0 file from outside the simulation.
    pub fn add_file(&mut self, name: &str, bytes: Vec<u8>) {
        let meta = FileMeta {
            created_at: self.clock_ms,
            parent: None,
            generation: 0,
            running: self.vfs.get(name).map_or(0, |f| f.meta.running),
        };
        let (tick, file) = (self.tick, name.to_string());
        self.events.push(if self.vfs.contains(name) {
            Event::FileReplaced { tick, pid: None, file, parent: None, generation: 0 }
        } else {
            Event::FileCreated { tick, pid: None, file, parent: None, generation: 0 }
        });
        self.vfs.insert(name, VirtualFile { bytes, meta });
    }

    /// Starts `file` at the start of tick `at`, or now if `at` is not in the future.
    pub fn schedule_spawn(&mut self, at: u64, file: &str) {
        if at <= self.tick {
            self.spawn(file, None);
        } else {
            self.scheduled.entry(at).or_default().push(file.to_string());
        }
    }

    /// Writes `k` copies of `genome`, each with its own stored seed so they
    /// are not clones, and starts copy `i` on tick `i`.
    pub fn bootstrap(&mut self, genome: &[u8], k: usize) -> Vec<String> {
        use crate::assembler::ancestor_var::RANDOM_NUMBER;
        use crate::translator::Region;
        let at = Region::Data.range().start + RANDOM_NUMBER as usize;
        (0..k)
            .map(|i| {
                let name = format!("ancestor{i:02}.rpw");
                let mut bytes = genome.to_vec();
                if bytes.len() >= at + 4 {
                    let seed = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
                    bytes[at..at + 4].copy_from_slice(&seed.wrapping_add(i as u32).to_le_bytes());
                }
                self.add_file(&name, bytes);
                self.schedule_spawn(self.tick + i as u64, &name);
                name
            })
            .collect()
    }

    /// Loads `file` as a new process. Returns its pid, or `None` if the file
    /// is missing or does not parse (logged as an immediate death).
    pub fn spawn(&mut self, file: &str, parent: Option<u64>) -> Option<u64> {
        let bytes = &self.vfs.get(file)?.bytes;
        let pid = self.next_pid;
        self.next_pid += 1;
        self.events.push(Event::Spawn {
            tick: self.tick,
            pid,
            file: file.to_string(),
            parent,
        });
        let state = translate_bytes(bytes).ok().and_then(|p| p.load().ok());
        let Some(mut state) = state else {
            self.events.push(Event::Death {
                tick: self.tick,
                pid,
                file: file.to_string(),
                cause: cause::BAD_GENOME.to_string(),
            });
            return None;
        };
        state.set_command_line(file);
        state.birth_time = self.clock_ms;
        if let Some(f) = self.vfs.get_mut(file) {
            f.meta.running += 1;
        }
        self.processes.push(Process {
            pid,
            parent,
            state,
            sleep_until: 0,
            copies_made: 0,
            exhausted: false,
        });
        Some(pid)
    }

    fn kill_at(&mut self, index: usize, cause: &str) {
        let p = self.processes.remove(index);
        log::debug!("tick {}: pid {} ({}) died: {cause}", self.tick, p.pid, p.state.owning_file);
        if let Some(f) = self.vfs.get_mut(&p.state.owning_file) {
            f.meta.running = f.meta.running.saturating_sub(1);
        }
        self.events.push(Event::Death {
            tick: self.tick,
            pid: p.pid,
            file: p.state.owning_file,
            cause: cause.to_string(),
        });
    }

    fn kill_pids(&mut self, pids: &[u64], cause: &str) {
        for pid in pids {
            if let Some(i) = self.processes.iter().position(|p| p.pid == *pid) {
                self.kill_at(i, cause);
            }
        }
    }

    fn delete_file(&mut self, name: &str, cause: &str) {
        if self.vfs.remove(name).is_some() {
            self.events.push(Event::FileDeleted {
                tick: self.tick,
                file: name.to_string(),
                cause: cause.to_string(),
            });
        }
    }

    /// How many more processes guards may remove.
    fn guard_allowance(&self) -> usize {
        self.processes.len().saturating_sub(self.config.guard_floor)
    }

    pub fn tick(&mut self) {
        self.tick += 1;
        self.clock_ms += self.config.ms_per_tick;
        if let Some(due) = self.scheduled.remove(&self.tick) {
            for file in due {
                self.spawn(&file, None);
            }
        }
        let mut spawns = Vec::new();
        let mut dead = Vec::new();
        for (i, p) in self.processes.iter_mut().enumerate() {
            if p.exhausted || p.sleep_until > self.clock_ms {
                continue;
            }
            let left = self.config.instruction_budget.saturating_sub(p.state.instructions_executed);
            if left == 0 {
                p.exhausted = true;
                continue;
            }
            let mut ctx = SyscallContext {
                vfs: &mut self.vfs,
                now_ms: self.clock_ms,
                tick: self.tick,
                pid: p.pid,
                copies_made: &mut p.copies_made,
                spawns: &mut spawns,
                events: &mut self.events,
            };
            let before = p.state.instructions_executed;
            let outcome = p.state.run(&mut ctx, left.min(self.config.quantum));
            self.total_instructions += p.state.instructions_executed - before;
            match outcome {
                RunOutcome::Exited => dead.push((i, cause::EXITED.to_string())),
                RunOutcome::Fault(f) => dead.push((i, f.kind.as_str().to_string())),
                RunOutcome::Sleep(ms) => p.sleep_until = self.clock_ms + ms as u64,
                RunOutcome::BudgetExhausted => {
                    if p.state.instructions_executed >= self.config.instruction_budget {
                        p.exhausted = true;
                    }
                }
            }
        }
        for (i, cause) in dead.into_iter().rev() {
            self.kill_at(i, &cause);
        }
        for s in spawns {
            self.spawn(&s.file, s.parent);
        }
        self.guard_sweep();
    }

    pub fn run_ticks(&mut self, n: u64) {
        for _ in 0..n {
            self.tick();
        }
    }

    pub fn guard_sweep(&mut self) {
        self.guard_multiple_instances();
        self.guard_clones();
        self.guard_reapers();
    }

    /// Keeps only the eldest process of each file.
    pub fn guard_multiple_instances(&mut self) {
        let mut eldest: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
        for p in &self.processes {
            let key = (p.state.birth_time, p.pid);
            eldest
                .entry(p.state.owning_file.as_str())
                .and_modify(|e| *e = (*e).min(key))
                .or_insert(key);
        }
        let mut victims: Vec<u64> = self
            .processes
            .iter()
            .filter(|p| eldest[p.state.owning_file.as_str()].1 != p.pid)
            .map(|p| p.pid)
            .collect();
        victims.truncate(self.guard_allowance());
        self.kill_pids(&victims, cause::MULTIPLE_INSTANCES);
    }

    /// Each process is checked with the configured probability; running files
    /// byte-identical to a checked one are killed and deleted.
    /// Returns whether any clone was found.
    pub fn guard_clones(&mut self) -> bool {
        let p_check = self.config.clone_check_probability;
        let pids: Vec<u64> = self.processes.iter().map(|p| p.pid).collect();
        let mut found = false;
        for pid in pids {
            if !self.rng.gen_bool(p_check) {
                continue;
            }
            let Some(me) = self.processes.iter().find(|p| p.pid == pid) else {
                continue;
            };
            let my_file = me.state.owning_file.clone();
            let Some(mine) = self.vfs.get(&my_file).map(|f| f.bytes.clone()) else {
                continue;
            };
            let mut files: Vec<String> = self
                .processes
                .iter()
                .map(|p| &p.state.owning_file)
                .filter(|f| **f != my_file && self.vfs.get(f).is_some_and(|v| v.bytes == mine))
                .cloned()
                .collect();
            files.sort();
            files.dedup();
            for file in files {
                let victims: Vec<u64> = self
                    .processes
                    .iter()
                    .filter(|p| p.state.owning_file == file)
                    .map(|p| p.pid)
                    .collect();
                if victims.len() > self.guard_allowance() {
                    continue;
                }
                found = true;
                self.kill_pids(&victims, cause::CLONE);
                self.delete_file(&file, cause::CLONE);
            }
        }
        found
    }

    /// Removes old idle files, old and exhausted processes, and thins an
    /// overfull process table.
    pub fn guard_reapers(&mut self) {
        let now = self.clock_ms as f64;
        let corpses: Vec<String> = self
            .vfs
            .iter()
            .filter(|(_, f)| f.meta.running == 0 && now - f.meta.created_at as f64 > self.config.corpse_age_limit_ms())
            .map(|(n, _)| n.clone())
            .collect();
        for name in corpses {
            self.delete_file(&name, cause::CORPSE);
        }

        let exhausted: Vec<u64> = self.processes.iter().filter(|p| p.exhausted).map(|p| p.pid).collect();
        self.kill_pids(&exhausted, cause::BUDGET);

        let mut old: Vec<u64> = self
            .processes
            .iter()
            .filter(|p| now - p.state.birth_time as f64 > self.config.process_age_limit_ms())
            .map(|p| p.pid)
            .collect();
        old.truncate(self.guard_allowance());
        self.kill_pids(&old, cause::PROCESS_AGE);

        let n = self.processes.len();
        if n > self.config.max_processes {
            let fraction = (n as f64 * self.config.overflow_kill_fraction).floor() as usize;
            let kills = fraction.max(n - self.config.max_processes).min(self.guard_allowance());
            let mut chosen = sample(&mut self.rng, n, kills).into_vec();
            chosen.sort_unstable();
            let victims: Vec<u64> = chosen.iter().map(|&i| self.processes[i].pid).collect();
            self.kill_pids(&victims, cause::OVERFLOW);
        }
    }

    /// Copies a random `fraction` of the files into `dir`, choosing with a
    /// generator derived from the seed and tick so the world's own stream is untouched.
    pub fn export_sample(&self, dir: &Path, fraction: f64) -> std::io::Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let names: Vec<&String> = self.vfs.iter().map(|(n, _)| n).collect();
        let k = ((names.len() as f64 * fraction).round() as usize).min(names.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.tick.rotate_left(32));
        let mut picked: Vec<usize> = sample(&mut rng, names.len(), k).into_vec();
        picked.sort_unstable();
        let mut out = Vec::with_capacity(k);
        for i in picked {
            let name = names[i];
            std::fs::write(dir.join(name), &self.vfs.get(name).unwrap().bytes)?;
            out.push(name.clone());
        }
        Ok(out)
    }

    /// Writes every file into `dir`.
    pub fn export_population(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, f) in self.vfs.iter() {
            std::fs::write(dir.join(name), &f.bytes)?;
        }
        Ok(())
    }
}
