//! Population statistics over genome files: distances, shared mutations and
//! per-region mutation densities.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::par;
use crate::translator::{Genome, GenomeError, Region};

/// Default "non-minor" cut-off: a mutation must appear in more files than this.
pub const NON_MINOR_THRESHOLD: usize = 50;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1} bytes")]
    LengthMismatch(usize, usize),
    #[error("standard deviation needs at least two values, got {0}")]
    TooFewValues(usize),
    #[error("padding density is zero, so robustness ratios are undefined")]
    ZeroPaddingDensity,
    #[error("no region named `{0}`")]
    MissingRegion(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{name}: {source}")]
    Genome { name: String, source: GenomeError },
}

/// Number of byte positions where `a` and `b` differ.
pub fn hamming(a: &[u8], b: &[u8]) -> Result<usize, AnalysisError> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Number of differing bits.
pub fn hamming_bits(a: &[u8], b: &[u8]) -> Result<usize, AnalysisError> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum())
}

fn check_len(a: &[u8], b: &[u8]) -> Result<(), AnalysisError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(AnalysisError::LengthMismatch(a.len(), b.len()))
    }
}

/// Named genomes compared against a reference, usually the ancestor.
#[derive(Debug, Clone)]
pub struct Sample {
    pub members: Vec<(String, Vec<u8>)>,
    pub reference: Vec<u8>,
}

impl Sample {
    /// Every member must parse as a genome.
    pub fn new(members: Vec<(String, Vec<u8>)>, reference: Vec<u8>) -> Result<Sample, AnalysisError> {
        for (name, bytes) in &members {
            Genome::parse(bytes).map_err(|source| AnalysisError::Genome {
                name: name.clone(),
                source,
            })?;
        }
        Ok(Sample { members, reference })
    }

    /// Loads every regular file in `dir`, sorted by name.
    pub fn load_dir(dir: &Path, reference: Vec<u8>) -> Result<Sample, AnalysisError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AnalysisError::Io { path, source }
        };
        let mut members = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io(dir))? {
            let path = entry.map_err(io(dir))?.path();
            if path.is_file() {
                let bytes = std::fs::read(&path).map_err(io(&path))?;
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                members.push((name, bytes));
            }
        }
        members.sort();
        Sample::new(members, reference)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Hamming distance of each member to the reference.
    pub fn distances_to_reference(&self) -> Result<Vec<usize>, AnalysisError> {
        self.members.iter().map(|(_, g)| hamming(g, &self.reference)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KinshipMatrix {
    pub names: Vec<String>,
    pub distances: Vec<Vec<usize>>,
    pub to_reference: Vec<usize>,
}

impl KinshipMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",ancestor\n");
        for (i, n) in self.names.iter().enumerate() {
            s.push_str(n);
            for d in &self.distances[i] {
                let _ = write!(s, ",{d}");
            }
            let _ = writeln!(s, ",{}", self.to_reference[i]);
        }
        s
    }
}

/// Pairwise distances plus each member's distance to the reference.
pub fn kinship_matrix(sample: &Sample, bits: bool) -> Result<KinshipMatrix, AnalysisError> {
    let metric = if bits { hamming_bits } else { hamming };
    let n = sample.len();
    let rows = par::map_indexed(n, |i| {
        (0..n)
            .map(|j| metric(&sample.members[i].1, &sample.members[j].1))
            .collect::<Result<Vec<_>, _>>()
    });
    Ok(KinshipMatrix {
        names: sample.members.iter().map(|(n, _)| n.clone()).collect(),
        distances: rows.into_iter().collect::<Result<_, _>>()?,
        to_reference: sample
            .members
            .iter()
            .map(|(_, g)| metric(g, &sample.reference))
            .collect::<Result<_, _>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OffsetCount {
    pub offset: usize,
    pub count: usize,
}

/// For each byte offset differing from the reference in some member, how many
/// members differ there. Sorted by count descending, then offset ascending.
pub fn mutation_distribution(sample: &Sample) -> Result<Vec<OffsetCount>, AnalysisError> {
    let mut counts = BTreeMap::new();
    for (_, g) in &sample.members {
        check_len(g, &sample.reference)?;
        for (offset, (a, b)) in g.iter().zip(&sample.reference).enumerate() {
            if a != b {
                *counts.entry(offset).or_insert(0) += 1;
            }
        }
    }
    let mut out: Vec<OffsetCount> = counts
        .into_iter()
        .map(|(offset, count)| OffsetCount { offset, count })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(a.offset.cmp(&b.offset)));
    Ok(out)
}

/// One `offset: count` line per entry, offsets in hex.
pub fn distribution_text(dist: &[OffsetCount]) -> String {
    dist.iter().map(|d| format!("{:x}: {}\n", d.offset, d.count)).collect()
}

pub fn distribution_csv(dist: &[OffsetCount]) -> String {
    let mut s = String::from("offset,count\n");
    for d in dist {
        let _ = writeln!(s, "{:#x},{}", d.offset, d.count);
    }
    s
}

/// Offsets shared by more than `threshold` members.
pub fn non_minor(dist: &[OffsetCount], threshold: usize) -> Vec<usize> {
    dist.iter().filter(|d| d.count > threshold).map(|d| d.offset).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    /// Sample standard deviation, normalized by n - 1.
    pub stddev: f64,
}

pub fn count_moments(values: &[usize]) -> Result<Moments, AnalysisError> {
    let n = values.len();
    if n < 2 {
        return Err(AnalysisError::TooFewValues(n));
    }
    let mean = values.iter().sum::<usize>() as f64 / n as f64;
    let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    Ok(Moments {
        mean,
        stddev: (ss / (n - 1) as f64).sqrt(),
    })
}

/// A named byte range for density accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayoutRegion {
    pub name: String,
    pub range: Range<usize>,
}

impl LayoutRegion {
    pub fn new(name: &str, range: Range<usize>) -> Self {
        LayoutRegion {
            name: name.to_string(),
            range,
        }
    }
}

/// The genome's own regions, header included.
pub fn genome_layout() -> Vec<LayoutRegion> {
    Region::ALL
        .iter()
        .map(|r| LayoutRegion::new(r.name(), r.range()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionDensity {
    pub region: String,
    pub mutations: usize,
    pub size: usize,
    pub density: f64,
}

/// Mutations per byte. An empty region has density 0.
pub fn density(mutations: usize, size: usize) -> f64 {
    if size == 0 {
        0.0
    } else {
        mutations as f64 / size as f64
    }
}

/// Counts `offsets` per layout region. Offsets outside every region are ignored.
pub fn region_density(offsets: &[usize], layout: &[LayoutRegion]) -> Vec<RegionDensity> {
    layout
        .iter()
        .map(|r| {
            let mutations = offsets.iter().filter(|o| r.range.contains(o)).count();
            RegionDensity {
                region: r.name.clone(),
                mutations,
                size: r.range.len(),
                density: density(mutations, r.range.len()),
            }
        })
        .collect()
}

/// Density relative to the padding density.
pub fn robustness_ratio(density: f64, padding_density: f64) -> Result<f64, AnalysisError> {
    if padding_density == 0.0 {
        Err(AnalysisError::ZeroPaddingDensity)
    } else {
        Ok(density / padding_density)
    }
}

/// Each region's density divided by that of the region named `padding`.
pub fn region_robustness(densities: &[RegionDensity], padding: &str) -> Result<Vec<(String, f64)>, AnalysisError> {
    let pad = densities
        .iter()
        .find(|d| d.region == padding)
        .ok_or_else(|| AnalysisError::MissingRegion(padding.to_string()))?
        .density;
    densities
        .iter()
        .map(|d| Ok((d.region.clone(), robustness_ratio(d.density, pad)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::build_ancestor;
    use crate::mutation::MutationRecord;
    use proptest::prelude::*;

    #[test]
    fn hamming_basics() {
        assert_eq!(hamming(b"abcdef", b"abcdef").unwrap(), 0);
        assert_eq!(hamming(b"abcdef", b"xbcyez").unwrap(), 3);
        assert_eq!(hamming_bits(&[0xFF, 0], &[0, 1]).unwrap(), 9);
        assert!(matches!(hamming(b"ab", b"abc"), Err(AnalysisError::LengthMismatch(2, 3))));
    }

    #[test]
    fn single_bit_mutant_is_at_distance_one() {
        let a = build_ancestor().to_bytes();
        let mut m = a.clone();
        MutationRecord { offset: 100, bit: 3 }.apply(&mut m);
        assert_eq!(hamming(&a, &m).unwrap(), 1);
    }

    fn sample_of(members: Vec<Vec<u8>>, reference: Vec<u8>) -> Sample {
        let members = members
            .into_iter()
            .enumerate()
            .map(|(i, g)| (format!("m{i}"), g))
            .collect();
        Sample::new(members, reference).unwrap()
    }

    #[test]
    fn clones_have_zero_kinship() {
        let a = build_ancestor().to_bytes();
        let s = sample_of(vec![a.clone(); 4], a);
        let k = kinship_matrix(&s, false).unwrap();
        assert!(k.distances.iter().flatten().all(|&d| d == 0));
        assert!(k.to_csv().starts_with("name,m0,m1,m2,m3,ancestor\nm0,0,0,0,0,0\n"));
    }

    #[test]
    fn distribution_counts_and_order() {
        let a = build_ancestor().to_bytes();
        let mut x = a.clone();
        x[0x527] ^= 1;
        let mut y = x.clone();
        y[0x100] ^= 1;
        let s = sample_of(vec![x.clone(), y, x], a);
        let d = mutation_distribution(&s).unwrap();
        assert_eq!(
            d,
            vec![OffsetCount { offset: 0x527, count: 3 }, OffsetCount { offset: 0x100, count: 1 }]
        );
        assert_eq!(distribution_text(&d), "527: 3\n100: 1\n");
        assert_eq!(non_minor(&d, 2), vec![0x527]);
    }

    #[test]
    fn disjoint_halves() {
        let a = build_ancestor().to_bytes();
        let mut x = a.clone();
        x[40] ^= 2;
        let mut y = a.clone();
        y[41] ^= 2;
        let s = sample_of(vec![x.clone(), x.clone(), x, y.clone(), y.clone(), y], a);
        let d = mutation_distribution(&s).unwrap();
        assert_eq!(d.iter().map(|d| d.count).collect::<Vec<_>>(), vec![3, 3]);
    }

    #[test]
    fn invalid_members_are_rejected() {
        let r = Sample::new(vec![("junk".into(), vec![0; 6144])], vec![0; 6144]);
        assert!(matches!(r, Err(AnalysisError::Genome { .. })));
    }

    #[test]
    fn moments() {
        let m = count_moments(&[7, 7, 7]).unwrap();
        assert_eq!((m.mean, m.stddev), (7.0, 0.0));
        let m = count_moments(&[190, 194]).unwrap();
        assert_eq!(m.mean, 192.0);
        // Two points at mean +-2: sum of squares 8, divided by n - 1 = 1.
        assert!((m.stddev - 8f64.sqrt()).abs() < 1e-12);
        assert!(matches!(count_moments(&[5]), Err(AnalysisError::TooFewValues(1))));
    }

    #[test]
    fn densities_and_ratios() {
        let z = region_density(&[], &genome_layout());
        assert!(z.iter().all(|d| d.density == 0.0));
        assert!(matches!(region_robustness(&z, "padding"), Err(AnalysisError::ZeroPaddingDensity)));
        let layout = genome_layout();
        let pad = Region::Padding.range().start;
        let d = region_density(&[pad, pad + 1, 40], &layout);
        let r = region_robustness(&d, "padding").unwrap();
        let get = |n: &str| r.iter().find(|(k, _)| k == n).unwrap().1;
        assert_eq!(get("padding"), 1.0);
        assert!((get("meta-code") - (1.0 / 2100.0) / (2.0 / 1708.0)).abs() < 1e-12);
        assert!(matches!(region_robustness(&d, "nope"), Err(AnalysisError::MissingRegion(_))));
    }

    proptest! {
        #[test]
        fn densities_partition_the_count(offsets in proptest::collection::vec(0usize..6144, 0..400)) {
            let d = region_density(&offsets, &genome_layout());
            let total: f64 = d.iter().map(|r| r.density * r.size as f64).sum();
            prop_assert!((total - offsets.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn distribution_counts_bounded_by_sample(flips in proptest::collection::vec((32usize..6144, 0u8..8), 1..20)) {
            let a = build_ancestor().to_bytes();
            let members: Vec<Vec<u8>> = flips
                .iter()
                .map(|&(o, b)| { let mut g = a.clone(); g[o] ^= 1 << b; g })
                .collect();
            let n = members.len();
            let s = sample_of(members, a);
            for d in mutation_distribution(&s).unwrap() {
                prop_assert!(d.count >= 1 && d.count <= n);
            }
        }
    }
}
