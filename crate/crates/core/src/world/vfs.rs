use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::events::Event;
use crate::vm::{valid_file_name, Host};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileMeta {
    /// Virtual milliseconds at creation or last overwrite.
    pub created_at: u64,
    pub parent: Option<String>,
    pub generation: u32,
    /// Live processes running this file. Nonzero means write-protected.
    pub running: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualFile {
    pub bytes: Vec<u8>,
    pub meta: FileMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vfs {
    files: BTreeMap<String, VirtualFile>,
}

impl Vfs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&VirtualFile> {
        self.files.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut VirtualFile> {
        self.files.get_mut(name)
    }

    pub fn insert(&mut self, name: &str, file: VirtualFile) {
        self.files.insert(name.to_string(), file);
    }

    pub fn remove(&mut self, name: &str) -> Option<VirtualFile> {
        self.files.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.files.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &VirtualFile)> {
        self.files.iter()
    }

    pub fn is_executing(&self, name: &str) -> bool {
        self.files.get(name).is_some_and(|f| f.meta.running > 0)
    }
}

/// A request made by `CreateProcess`, honoured by the world at the end of the tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpawnRequest {
    pub file: String,
    pub parent: Option<u64>,
}

/// The syscall-facing view of the world for one running process.
pub struct SyscallContext<'a> {
    pub vfs: &'a mut Vfs,
    pub now_ms: u64,
    pub tick: u64,
    pub pid: u64,
    /// Copies made so far by this process; labels mutation records.
    pub copies_made: &'a mut u32,
    pub spawns: &'a mut Vec<SpawnRequest>,
    pub events: &'a mut Vec<Event>,
}

impl Host for SyscallContext<'_> {
    fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn file(&self, name: &str) -> Option<&[u8]> {
        self.vfs.get(name).map(|f| f.bytes.as_slice())
    }

    fn copy_file(&mut self, src: &str, dst: &str) -> bool {
        if src == dst || !valid_file_name(dst) || self.vfs.is_executing(dst) {
            return false;
        }
        let Some(source) = self.vfs.get(src) else {
            return false;
        };
        let bytes = source.bytes.clone();
        let generation = source.meta.generation + 1;
        let replaced = self.vfs.contains(dst);
        self.vfs.insert(
            dst,
            VirtualFile {
                bytes,
                meta: FileMeta {
                    created_at: self.now_ms,
                    parent: Some(src.to_string()),
                    generation,
                    running: 0,
                },
            },
        );
        *self.copies_made += 1;
        let (tick, pid, file, parent) = (self.tick, Some(self.pid), dst.to_string(), Some(src.to_string()));
        self.events.push(if replaced {
            Event::FileReplaced { tick, pid, file, parent, generation }
        } else {
            Event::FileCreated { tick, pid, file, parent, generation }
        });
        true
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> bool {
        let Some(file) = self.vfs.get_mut(name) else {
            return false;
        };
        if file.meta.running > 0 {
            return false;
        }
        let interval = self.copies_made.checked_sub(1);
        for (offset, (old, new)) in file.bytes.iter().zip(bytes).enumerate() {
            let diff = old ^ new;
            for bit in 0..8u8 {
                if diff & (1 << bit) != 0 {
                    self.events.push(Event::Mutation {
                        tick: self.tick,
                        pid: self.pid,
                        file: name.to_string(),
                        offset: offset as u32,
                        bit,
                        interval,
                    });
                }
            }
        }
        file.bytes.clear();
        file.bytes.extend_from_slice(bytes);
        true
    }

    fn create_process(&mut self, name: &str) -> bool {
        if !self.vfs.contains(name) {
            return false;
        }
        self.spawns.push(SpawnRequest {
            file: name.to_string(),
            parent: Some(self.pid),
        });
        true
    }
}
