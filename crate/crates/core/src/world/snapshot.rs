//! Directory snapshots: `manifest.json`, `files/<name>` and `processes/<pid>.mem`.
//!
//! The event buffer is not part of a snapshot; a restored world starts with
//! an empty one.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FileMeta, GuardConfig, Process, VirtualFile, Vfs, World};
use crate::vm::MEMORY_SIZE;

const MANIFEST: &str = "manifest.json";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("process {pid}: memory image is {got} bytes, expected {MEMORY_SIZE}")]
    Memory { pid: u64, got: usize },
    #[error("bad file name `{0}` in manifest")]
    FileName(String),
    #[error(transparent)]
    Config(#[from] super::ConfigError),
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    seed: u64,
    tick: u64,
    clock_ms: u64,
    next_pid: u64,
    total_instructions: u64,
    rng: ChaCha8Rng,
    config: GuardConfig,
    files: BTreeMap<String, FileMeta>,
    processes: Vec<Process>,
    scheduled: BTreeMap<u64, Vec<String>>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SnapshotError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read(path: &Path) -> Result<Vec<u8>, SnapshotError> {
    fs::read(path).map_err(io_err(path))
}

fn safe_name(name: &str) -> bool {
    crate::vm::valid_file_name(name) && !name.contains(['/', '\\']) && name != "." && name != ".."
}

impl World {
    /// Writes the complete world state into `dir`, creating it if needed.
    pub fn snapshot(&self, dir: &Path) -> Result<(), SnapshotError> {
        let files_dir = dir.join("files");
        let procs_dir = dir.join("processes");
        fs::create_dir_all(&files_dir).map_err(io_err(&files_dir))?;
        fs::create_dir_all(&procs_dir).map_err(io_err(&procs_dir))?;
        let mut files = BTreeMap::new();
        for (name, f) in self.vfs.iter() {
            write(&files_dir.join(name), &f.bytes)?;
            files.insert(name.clone(), f.meta.clone());
        }
        for p in &self.processes {
            write(&procs_dir.join(format!("{}.mem", p.pid)), &p.state.memory)?;
        }
        let manifest = Manifest {
            version: SNAPSHOT_VERSION,
            seed: self.seed,
            tick: self.tick,
            clock_ms: self.clock_ms,
            next_pid: self.next_pid,
            total_instructions: self.total_instructions,
            rng: self.rng.clone(),
            config: self.config.clone(),
            files,
            processes: self.processes.clone(),
            scheduled: self.scheduled.clone(),
        };
        write(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }

    pub fn restore(dir: &Path) -> Result<World, SnapshotError> {
        let text = read(&dir.join(MANIFEST))?;
        let m: Manifest = serde_json::from_slice(&text)?;
        if m.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version(m.version));
        }
        m.config.validate()?;
        let mut vfs = Vfs::new();
        for (name, meta) in m.files {
            if !safe_name(&name) {
                return Err(SnapshotError::FileName(name));
            }
            let bytes = read(&dir.join("files").join(&name))?;
            vfs.insert(&name, VirtualFile { bytes, meta });
        }
        let mut processes = m.processes;
        for p in &mut processes {
            let memory = read(&dir.join("processes").join(format!("{}.mem", p.pid)))?;
            if memory.len() != MEMORY_SIZE {
                return Err(SnapshotError::Memory {
                    pid: p.pid,
                    got: memory.len(),
                });
            }
            p.state.memory = memory;
        }
        Ok(World {
            config: m.config,
            seed: m.seed,
            tick: m.tick,
            clock_ms: m.clock_ms,
            next_pid: m.next_pid,
            total_instructions: m.total_instructions,
            rng: m.rng,
            vfs,
            processes,
            scheduled: m.scheduled,
            events: Vec::new(),
        })
    }
}
