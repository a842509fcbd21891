//! The long-running experiment loop shared by the CLI and tests.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::{SnapshotError, World};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("writing event log: {0}")]
    Log(#[source] io::Error),
    #[error("{path}: {source}")]
    Export { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, Default)]
pub struct EvolveOptions {
    pub ticks: u64,
    /// Ticks between full snapshots; 0 disables them.
    pub snapshot_every: u64,
    /// Root for `snapshots/`, `exports/` and `population/`. Without it only
    /// the log is written.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvolveSummary {
    pub tick: u64,
    pub processes: usize,
    pub files: usize,
    pub max_generation: u32,
    pub total_instructions: u64,
}

pub fn summary(world: &World) -> EvolveSummary {
    EvolveSummary {
        tick: world.tick_count(),
        processes: world.processes().len(),
        files: world.vfs().len(),
        max_generation: world.vfs().iter().map(|(_, f)| f.meta.generation).max().unwrap_or(0),
        total_instructions: world.total_instructions(),
    }
}

fn tick_dir(root: &Path, kind: &str, tick: u64) -> PathBuf {
    root.join(kind).join(format!("tick-{tick:010}"))
}

/// Advances `world` by `opts.ticks`, streaming events to `log` as JSON lines.
pub fn evolve<W: Write>(world: &mut World, opts: &EvolveOptions, log: &mut W) -> Result<EvolveSummary, EvolveError> {
    write_events(world, log)?;
    let export_every = world.config().export_every_ticks;
    for _ in 0..opts.ticks {
        world.tick();
        write_events(world, log)?;
        let t = world.tick_count();
        let Some(root) = &opts.out_dir else { continue };
        if opts.snapshot_every > 0 && t % opts.snapshot_every == 0 {
            log::info!("tick {t}: {} processes, {} files", world.processes().len(), world.vfs().len());
            world.snapshot(&tick_dir(root, "snapshots", t))?;
        }
        if export_every > 0 && t % export_every == 0 {
            let dir = tick_dir(root, "exports", t);
            let fraction = world.config().export_fraction;
            world
                .export_sample(&dir, fraction)
                .map_err(|source| EvolveError::Export { path: dir, source })?;
        }
    }
    if let Some(root) = &opts.out_dir {
        let dir = root.join("population");
        world
            .export_population(&dir)
            .map_err(|source| EvolveError::Export { path: dir, source })?;
        world.snapshot(&root.join("final"))?;
    }
    log.flush().map_err(EvolveError::Log)?;
    Ok(summary(world))
}

fn write_events<W: Write>(world: &mut World, log: &mut W) -> Result<(), EvolveError> {
    for e in world.drain_events() {
        writeln!(log, "{}", e.to_json_line()).map_err(EvolveError::Log)?;
    }
    Ok(())
}
