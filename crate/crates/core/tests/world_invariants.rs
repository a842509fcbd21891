use proptest::prelude::*;

use rpw_core::assembler::build_ancestor;
use rpw_core::world::{cause, Event, GuardConfig, World};

/// Guard kills that respect the floor. Budget exhaustion is a fault analog and does not.
const GUARD_CAUSES: [&str; 4] = [cause::MULTIPLE_INSTANCES, cause::CLONE, cause::PROCESS_AGE, cause::OVERFLOW];

fn small_world(seed: u64, max_processes: usize) -> World {
    let config = GuardConfig {
        max_processes,
        quantum: 500,
        ..GuardConfig::default()
    };
    let mut w = World::new(seed, config);
    w.bootstrap(&build_ancestor().to_bytes(), 10);
    w
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn bookkeeping_holds_every_tick(seed in 0u64..1000, max in 4usize..20) {
        let mut w = small_world(seed, max);
        let mut files = 0i64;
        let mut live = 0i64;
        for e in w.drain_events() {
            match e {
                Event::FileCreated { .. } => files += 1,
                Event::Spawn { .. } => live += 1,
                _ => {}
            }
        }
        for _ in 0..20_000 {
            w.tick();
            let events = w.drain_events();
            let mut last_death = None;
            for e in &events {
                match e {
                    Event::FileCreated { .. } => files += 1,
                    Event::FileDeleted { .. } => files -= 1,
                    Event::Spawn { .. } => live += 1,
                    Event::Death { cause, .. } => {
                        live -= 1;
                        last_death = Some(cause.clone());
                    }
                    _ => {}
                }
            }
            prop_assert_eq!(files, w.vfs().len() as i64);
            prop_assert_eq!(live, w.processes().len() as i64);
            prop_assert!(w.processes().len() <= max);
            if w.processes().is_empty() {
                if let Some(c) = last_death {
                    prop_assert!(!GUARD_CAUSES.contains(&c.as_str()), "guards emptied the world: {}", c);
                }
            }
            for p in w.processes() {
                let f = w.vfs().get(&p.state.owning_file);
                prop_assert!(f.is_some_and(|f| f.meta.running > 0), "process {} runs a missing file", p.pid);
            }
        }
    }
}

#[test]
fn running_counts_match_the_process_table() {
    let mut w = small_world(9, 12);
    for _ in 0..30 {
        w.run_ticks(500);
        for (name, f) in w.vfs().iter() {
            let n = w.processes().iter().filter(|p| &p.state.owning_file == name).count();
            assert_eq!(f.meta.running as usize, n, "{name}");
        }
    }
}

#[test]
fn population_turns_over() {
    let mut w = small_world(1, 40);
    w.run_ticks(60_000);
    let deaths: Vec<String> = w
        .events()
        .iter()
        .filter_map(|e| match e {
            Event::Death { cause, .. } => Some(cause.clone()),
            _ => None,
        })
        .collect();
    assert!(!w.processes().is_empty());
    assert!(deaths.iter().any(|c| c == cause::OVERFLOW));
    let max_generation = w.vfs().iter().map(|(_, f)| f.meta.generation).max().unwrap();
    assert!(max_generation >= 3, "{max_generation}");
}
