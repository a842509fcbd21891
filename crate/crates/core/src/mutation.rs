//! Point mutation on the host side and exhaustive single-bit robustness scans.

use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::translator::{translate_bytes, Genome, Region};
use crate::world::{Isolate, IsolateOutcome, IsolateReport};

#[derive(Debug, Error, PartialEq)]
pub enum MutationError {
    #[error("interval {start}..{end} exceeds genome length {len}")]
    Interval { start: usize, end: usize, len: usize },
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
}

/// Probability that `n` independent byte trials at `p_bit` flip at least once.
pub fn at_least_one_probability(n: u64, p_bit: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // ln_1p keeps precision for small p.
    -(n as f64 * (-p_bit).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MutationRecord {
    pub offset: usize,
    pub bit: u8,
}

impl MutationRecord {
    pub fn apply(&self, bytes: &mut [u8]) {
        bytes[self.offset] ^= 1 << self.bit;
    }
}

/// Each byte of `interval` flips one uniformly chosen bit with probability `p_bit`.
pub fn mutate<R: Rng + ?Sized>(
    bytes: &[u8],
    interval: Range<usize>,
    p_bit: f64,
    rng: &mut R,
) -> Result<(Vec<u8>, Vec<MutationRecord>), MutationError> {
    if interval.start > interval.end || interval.end > bytes.len() {
        return Err(MutationError::Interval {
            start: interval.start,
            end: interval.end,
            len: bytes.len(),
        });
    }
    if !(0.0..=1.0).contains(&p_bit) {
        return Err(MutationError::Probability(p_bit));
    }
    let mut out = bytes.to_vec();
    let mut records = Vec::new();
    for offset in interval {
        if rng.gen_bool(p_bit) {
            let r = MutationRecord {
                offset,
                bit: rng.gen_range(0..8),
            };
            r.apply(&mut out);
            records.push(r);
        }
    }
    Ok((out, records))
}

/// Applies every record; since flips are XORs this also undoes them.
pub fn apply_records(bytes: &mut [u8], records: &[MutationRecord]) {
    for r in records {
        r.apply(bytes);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanOptions {
    /// Instruction budget per mutant.
    pub budget: u64,
    /// Stop each mutant at its first offspring instead of running it out.
    pub stop_at_first_offspring: bool,
    pub parallel: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            budget: 5_000_000,
            stop_at_first_offspring: true,
            parallel: par::PARALLEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanRow {
    /// Byte offset within the scanned buffer (genome or micro-code).
    pub offset: usize,
    pub bit: u8,
    pub region: String,
    /// `viable`, a fault kind, `budget`, `exited` or `bad-header`.
    pub outcome: String,
    pub offspring_count: usize,
}

impl ScanRow {
    pub fn viable(&self) -> bool {
        self.outcome == "viable"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
}

impl ScanReport {
    pub fn total(&self) -> usize {
        self.rows.len()
    }

    pub fn viable(&self) -> usize {
        self.rows.iter().filter(|r| r.viable()).count()
    }

    /// Viable fraction; 0 for an empty scan.
    pub fn robustness(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.viable() as f64 / self.total() as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("offset,bit,region,outcome,offspring_count\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.offset, r.bit, r.region, r.outcome, r.offspring_count);
        }
        s
    }

    /// Outcome label → count, sorted by label.
    pub fn outcome_counts(&self) -> Vec<(String, usize)> {
        let mut m = std::collections::BTreeMap::new();
        for r in &self.rows {
            *m.entry(r.outcome.clone()).or_insert(0) += 1;
        }
        m.into_iter().collect()
    }
}

fn classify(report: &IsolateReport) -> String {
    if report.viable() {
        "viable".into()
    } else {
        match &report.outcome {
            IsolateOutcome::BudgetExhausted => "budget".into(),
            other => other.label().into(),
        }
    }
}

fn run_isolate(mut iso: Isolate, opts: &ScanOptions) -> (String, usize) {
    iso.stop_when_viable = opts.stop_at_first_offspring;
    let report = iso.run(opts.budget);
    (classify(&report), report.offspring_count())
}

/// Runs one mutant file alone.
pub fn evaluate(bytes: &[u8], opts: &ScanOptions) -> (String, usize) {
    match Isolate::new(bytes) {
        Ok(iso) => run_isolate(iso, opts),
        Err(_) => ("bad-header".into(), 0),
    }
}

/// Every single-bit mutant of `region`, each run alone.
pub fn robustness_scan(genome: &Genome, region: Region, opts: &ScanOptions) -> ScanReport {
    let range = region.range();
    let base = genome.to_bytes();
    let name = region.name().to_string();
    let rows = par::map_with(opts.parallel, range.len() * 8, |i| {
        let offset = range.start + i / 8;
        let bit = (i % 8) as u8;
        let mut bytes = base.clone();
        bytes[offset] ^= 1 << bit;
        let (outcome, offspring_count) = evaluate(&bytes, opts);
        ScanRow {
            offset,
            bit,
            region: name.clone(),
            outcome,
            offspring_count,
        }
    });
    ScanReport { rows }
}

/// Region label used for micro-code control rows.
pub const MICRO_REGION: &str = "micro-code";

/// Control scan on the translated program: mutant `j` flips bit `j mod 8` of
/// micro-code byte `j`, so there is one mutant per micro byte, the same count
/// as a full meta-code scan. The file on disk is left unmutated.
pub fn micro_control_scan(genome: &Genome, opts: &ScanOptions) -> ScanReport {
    let bytes = genome.to_bytes();
    let program = translate_bytes(&bytes).expect("parsed genome translates");
    let rows = par::map_with(opts.parallel, program.code.len(), |j| {
        let bit = (j % 8) as u8;
        let mut p = program.clone();
        p.code[j] ^= 1 << bit;
        let state = p.load().expect("same size as the original");
        let (outcome, offspring_count) = run_isolate(Isolate::from_state(&bytes, state), opts);
        ScanRow {
            offset: j,
            bit,
            region: MICRO_REGION.into(),
            outcome,
            offspring_count,
        }
    });
    ScanReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::{assemble, build_ancestor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probability_edges() {
        assert_eq!(at_least_one_probability(0, 0.5), 0.0);
        assert_eq!(at_least_one_probability(10, 0.0), 0.0);
        assert_eq!(at_least_one_probability(1, 1.0), 1.0);
        assert!((at_least_one_probability(2, 0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_is_identity() {
        let g = vec![0xAB; 100];
        let (out, recs) = mutate(&g, 0..100, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out, g);
        assert!(recs.is_empty());
    }

    #[test]
    fn unit_rate_on_one_byte() {
        let g = vec![0; 10];
        let (out, recs) = mutate(&g, 4..5, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].offset, 4);
        assert_eq!(out[4], 1 << recs[0].bit);
    }

    #[test]
    fn bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(mutate(&[0; 4], 2..5, 0.1, &mut rng), Err(MutationError::Interval { .. })));
        assert_eq!(mutate(&[0; 4], 0..4, 1.5, &mut rng), Err(MutationError::Probability(1.5)));
    }

    #[test]
    fn padding_scan_is_fully_viable() {
        let g = build_ancestor();
        let opts = ScanOptions::default();
        // A slice of the padding keeps the unit test fast; the full scan is an acceptance check.
        let base = g.to_bytes();
        for offset in Region::Padding.range().step_by(211) {
            let mut b = base.clone();
            b[offset] ^= 0x10;
            assert_eq!(evaluate(&b, &opts).0, "viable");
        }
    }

    #[test]
    fn header_magic_mutants_are_bad_headers() {
        let mut b = build_ancestor().to_bytes();
        b[1] ^= 4;
        assert_eq!(evaluate(&b, &ScanOptions::default()), ("bad-header".to_string(), 0));
    }

    #[test]
    fn scan_of_a_non_replicator() {
        let g = assemble("ret").unwrap().to_genome().unwrap();
        let r = robustness_scan(&g, Region::Data, &ScanOptions { budget: 1000, ..Default::default() });
        assert_eq!(r.total(), 256 * 8);
        assert_eq!(r.viable(), 0);
        assert!(r.to_csv().starts_with("offset,bit,region,outcome,offspring_count\n4180,0,data,exited,0\n"));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let g = build_ancestor();
        let seq = ScanOptions {
            budget: 200_000,
            parallel: false,
            ..Default::default()
        };
        let par = ScanOptions { parallel: true, ..seq };
        assert_eq!(robustness_scan(&g, Region::Data, &seq), robustness_scan(&g, Region::Data, &par));
    }

    proptest! {
        #[test]
        fn records_replay_the_mutant(seed: u64, p in 0.0f64..0.2, g in proptest::collection::vec(any::<u8>(), 512)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mutant, recs) = mutate(&g, 0..512, p, &mut rng).unwrap();
            let mut replay = g.clone();
            apply_records(&mut replay, &recs);
            prop_assert_eq!(&replay, &mutant);
            apply_records(&mut replay, &recs);
            prop_assert_eq!(replay, g);
        }

        #[test]
        fn probability_is_monotone(n in 0u64..10_000, dn in 0u64..1000, p in 0.0f64..1.0, dp in 0.0f64..0.5) {
            let q = (p + dp).min(1.0);
            prop_assert!(at_least_one_probability(n, p) <= at_least_one_probability(n + dn, p));
            prop_assert!(at_least_one_probability(n, p) <= at_least_one_probability(n, q));
        }
    }
}
