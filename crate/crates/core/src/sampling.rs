//! Observation masks over a block partition: diagonal blocks are always
//! fully sampled, admissible blocks are subsampled by Bernoulli draws, a
//! fixed per-block count, or the theorem-style budget
//! `ceil(C * r * s^(6/5) * ln s)` for a block of side `s`.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hpartition::{Block, BlockPartition};
use crate::{Error, Result};

/// Per-admissible-block sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BudgetRule {
    /// Independent inclusion of each entry with probability `p`.
    Bernoulli { p: f64 },
    /// Exactly `m` entries per block, uniform without replacement.
    UniformM { m: usize },
    /// `m = ceil(c * r * s^(6/5) * ln s)` entries for a block of side `s`.
    /// `beta` only enters the success-probability accounting `s^(-beta)`.
    TheoremBudget { c: f64, r: usize, beta: f64 },
}

impl BudgetRule {
    fn validate(&self) -> Result<()> {
        match *self {
            BudgetRule::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidConfig(format!("bernoulli p={p} not in [0,1]")));
                }
            }
            BudgetRule::UniformM { .. } => {}
            BudgetRule::TheoremBudget { c, r, beta } => {
                if c <= 0.0 || r == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "theorem budget needs c > 0 and r >= 1 (got c={c}, r={r})"
                    )));
                }
                if beta <= 2.0 {
                    return Err(Error::InvalidConfig(format!(
                        "theorem budget exponent beta must exceed 2 (got {beta})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Theorem-style per-block sample count for a square block of side `s`.
pub fn theorem_budget_count(c: f64, r: usize, side: usize) -> usize {
    if side < 2 {
        return side * side;
    }
    let s = side as f64;
    (c * r as f64 * s.powf(1.2) * s.ln()).ceil() as usize
}

/// How one block was sampled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSamples {
    pub block: Block,
    /// Samples requested by the rule (before clamping).
    pub requested: usize,
    /// Samples actually placed in the block.
    pub count: usize,
    /// Theorem budget exceeded the block area and was clamped to full.
    pub clamped: bool,
}

/// Set of observed matrix indices plus per-block bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingMask {
    n: usize,
    seed: u64,
    rule: BudgetRule,
    /// Sorted, duplicate-free (row, col) pairs.
    entries: Vec<(u32, u32)>,
    per_block: Vec<BlockSamples>,
}

impl SamplingMask {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn per_block(&self) -> &[BlockSamples] {
        &self.per_block
    }

    pub fn rule(&self) -> &BudgetRule {
        &self.rule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// CSV body of `(i, j)` pairs.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j\n");
        for &(i, j) in &self.entries {
            s.push_str(&format!("{i},{j}\n"));
        }
        s
    }

    /// JSON sidecar describing how the mask was generated.
    pub fn sidecar_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            n: usize,
            seed: u64,
            rule: &'a BudgetRule,
            total: usize,
            per_block: &'a [BlockSamples],
        }
        serde_json::to_string_pretty(&Sidecar {
            n: self.n,
            seed: self.seed,
            rule: &self.rule,
            total: self.entries.len(),
            per_block: &self.per_block,
        })
        .expect("sidecar serialization")
    }
}

impl SamplingMask {
    /// Wrap an explicit entry list (deduplicated, sorted) as a mask, e.g.
    /// when loading a mask file. No per-block bookkeeping is attached.
    pub fn from_entries(n: usize, mut entries: Vec<(u32, u32)>) -> Result<Self> {
        entries.sort_unstable();
        entries.dedup();
        if let Some(&(i, j)) = entries.iter().find(|&&(i, j)| i as usize >= n || j as usize >= n) {
            return Err(Error::DimensionMismatch {
                context: "mask entry vs matrix dimension",
                expected: n,
                got: i.max(j) as usize,
            });
        }
        Ok(Self {
            n,
            seed: 0,
            rule: BudgetRule::Bernoulli { p: f64::NAN },
            entries,
            per_block: Vec::new(),
        })
    }
}

fn block_rng(seed: u64, block_index: usize) -> ChaCha8Rng {
    // Independent stream per block so the mask does not depend on block
    // iteration order.
    ChaCha8Rng::seed_from_u64(seed ^ (block_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generate the observation mask for a partition: diagonal blocks complete,
/// admissible blocks subsampled per `rule`. Deterministic given `seed`.
pub fn build_mask(partition: &BlockPartition, rule: &BudgetRule, seed: u64) -> Result<SamplingMask> {
    rule.validate()?;
    let mut entries: Vec<(u32, u32)> = Vec::new();
    let mut per_block = Vec::with_capacity(partition.blocks().len());

    for (bi, block) in partition.blocks().iter().enumerate() {
        let area = block.area();
        let mut count = 0usize;
        let mut requested = area;
        let mut clamped = false;
        if block.is_diagonal() {
            for r in 0..block.row_len {
                for c in 0..block.col_len {
                    entries.push(((block.row_start + r) as u32, (block.col_start + c) as u32));
                }
            }
            count = area;
        } else {
            let mut rng = block_rng(seed, bi);
            match *rule {
                BudgetRule::Bernoulli { p } => {
                    requested = (p * area as f64).round() as usize;
                    for r in 0..block.row_len {
                        for c in 0..block.col_len {
                            if rng.gen::<f64>() < p {
                                entries.push((
                                    (block.row_start + r) as u32,
                                    (block.col_start + c) as u32,
                                ));
                                count += 1;
                            }
                        }
                    }
                }
                BudgetRule::UniformM { m } => {
                    if m > area {
                        return Err(Error::InvalidConfig(format!(
                            "uniform-m count {m} exceeds block area {area}"
                        )));
                    }
                    requested = m;
                    for flat in rand::seq::index::sample(&mut rng, area, m) {
                        let r = flat / block.col_len;
                        let c = flat % block.col_len;
                        entries.push((
                            (block.row_start + r) as u32,
                            (block.col_start + c) as u32,
                        ));
                    }
                    count = m;
                }
                BudgetRule::TheoremBudget { c, r, .. } => {
                    requested = theorem_budget_count(c, r, block.row_len.min(block.col_len));
                    let m = if requested >= area {
                        clamped = true;
                        area
                    } else {
                        requested
                    };
                    for flat in rand::seq::index::sample(&mut rng, area, m) {
                        let rr = flat / block.col_len;
                        let cc = flat % block.col_len;
                        entries.push((
                            (block.row_start + rr) as u32,
                            (block.col_start + cc) as u32,
                        ));
                    }
                    count = m;
                }
            }
        }
        per_block.push(BlockSamples {
            block: *block,
            requested,
            count,
            clamped,
        });
    }

    entries.sort_unstable();
    entries.dedup();
    Ok(SamplingMask {
        n: partition.n(),
        seed,
        rule: *rule,
        entries,
        per_block,
    })
}

/// Per-block and global fill ratios of a mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    pub global: f64,
    pub per_block: Vec<(Block, f64)>,
}

pub fn mask_density(mask: &SamplingMask, partition: &BlockPartition) -> Result<DensityReport> {
    if mask.n() != partition.n() {
        return Err(Error::DimensionMismatch {
            context: "mask vs partition dimension",
            expected: partition.n(),
            got: mask.n(),
        });
    }
    let per_block = mask
        .per_block()
        .iter()
        .map(|bs| (bs.block, bs.count as f64 / bs.block.area() as f64))
        .collect();
    Ok(DensityReport {
        global: mask.len() as f64 / (partition.n() * partition.n()) as f64,
        per_block,
    })
}

/// A mask together with the observed values, aligned entry for entry.
#[derive(Debug, Clone)]
pub struct MaskedMatrix {
    pub mask: SamplingMask,
    pub values: Vec<f64>,
}

impl MaskedMatrix {
    /// Observe a full matrix through a mask.
    pub fn observe(matrix: &nalgebra::DMatrix<f64>, mask: SamplingMask) -> Result<Self> {
        if matrix.nrows() != mask.n() || matrix.ncols() != mask.n() {
            return Err(Error::DimensionMismatch {
                context: "matrix vs mask dimension",
                expected: mask.n(),
                got: matrix.nrows(),
            });
        }
        let values = mask
            .entries()
            .iter()
            .map(|&(i, j)| matrix[(i as usize, j as usize)])
            .collect();
        Ok(Self { mask, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpartition::{build_partition, Admissibility};

    #[test]
    fn bernoulli_extremes() {
        let p = build_partition(16, Admissibility::Weak, 4).unwrap();
        let empty = build_mask(&p, &BudgetRule::Bernoulli { p: 0.0 }, 1).unwrap();
        let diag_area: usize = p.diagonal_blocks().map(|b| b.area()).sum();
        assert_eq!(empty.len(), diag_area);

        let full = build_mask(&p, &BudgetRule::Bernoulli { p: 1.0 }, 1).unwrap();
        assert_eq!(full.len(), 16 * 16);
    }

    #[test]
    fn masks_are_deterministic_in_the_seed() {
        let p = build_partition(32, Admissibility::StrongPeriodic, 8).unwrap();
        let rule = BudgetRule::Bernoulli { p: 0.37 };
        let a = build_mask(&p, &rule, 99).unwrap();
        let b = build_mask(&p, &rule, 99).unwrap();
        assert_eq!(a.entries(), b.entries());
        let c = build_mask(&p, &rule, 100).unwrap();
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn diagonal_blocks_always_fully_observed() {
        let p = build_partition(32, Admissibility::StrongPeriodic, 8).unwrap();
        let mask = build_mask(&p, &BudgetRule::Bernoulli { p: 0.1 }, 5).unwrap();
        use std::collections::HashSet;
        let set: HashSet<(u32, u32)> = mask.entries().iter().copied().collect();
        for b in p.diagonal_blocks() {
            for r in 0..b.row_len {
                for c in 0..b.col_len {
                    assert!(set.contains(&((b.row_start + r) as u32, (b.col_start + c) as u32)));
                }
            }
        }
    }

    #[test]
    fn theorem_budget_matches_formula_and_clamps() {
        // ceil(5 * 512^(6/5) * ln 512) for a side-512 block.
        let expect = (5.0 * 512f64.powf(1.2) * 512f64.ln()).ceil() as usize;
        assert_eq!(theorem_budget_count(1.0, 5, 512), expect);

        // Small blocks exceed their area and are clamped to full sampling.
        let p = build_partition(32, Admissibility::Weak, 8).unwrap();
        let rule = BudgetRule::TheoremBudget { c: 1.0, r: 5, beta: 2.1 };
        let mask = build_mask(&p, &rule, 3).unwrap();
        for bs in mask.per_block() {
            if !bs.block.is_diagonal() {
                assert!(bs.clamped, "block {:?}", bs.block);
                assert_eq!(bs.count, bs.block.area());
            }
        }
    }

    #[test]
    fn total_theorem_budget_scales_like_the_bound() {
        // Sum over a weak partition stays within a constant multiple of
        // r * n^(6/5) * ln n as n grows.
        let r = 5usize;
        let mut ratios = Vec::new();
        for log_n in [8u32, 9, 10, 11] {
            let n = 1usize << log_n;
            let p = build_partition(n, Admissibility::Weak, 8).unwrap();
            let total: usize = p
                .admissible_blocks()
                .map(|b| theorem_budget_count(1.0, r, b.row_len).min(b.area()))
                .sum();
            let bound = r as f64 * (n as f64).powf(1.2) * (n as f64).ln();
            ratios.push(total as f64 / bound);
        }
        for &q in &ratios {
            assert!(q < 8.0, "ratio {q} exploded");
        }
        // Non-exploding across the range: later ratios do not exceed the
        // first by more than a mild factor.
        assert!(ratios.last().unwrap() / ratios.first().unwrap() < 1.5, "{ratios:?}");
    }

    #[test]
    fn uniform_m_per_entry_inclusion_frequency() {
        // Fixed probe entries stay within 3 sigma of m/area over many draws.
        let p = build_partition(16, Admissibility::Weak, 8).unwrap();
        let block = *p.admissible_blocks().next().unwrap();
        let area = block.area();
        let m = 20usize;
        let q = m as f64 / area as f64;
        let draws = 10_000usize;
        let probes = [(0usize, 0usize), (3, 5), (7, 7), (2, 6), (5, 1)];
        let mut hits = [0usize; 5];
        for seed in 0..draws {
            let mask = build_mask(&p, &BudgetRule::UniformM { m }, seed as u64).unwrap();
            use std::collections::HashSet;
            let set: HashSet<(u32, u32)> = mask.entries().iter().copied().collect();
            for (k, &(r, c)) in probes.iter().enumerate() {
                if set.contains(&((block.row_start + r) as u32, (block.col_start + c) as u32)) {
                    hits[k] += 1;
                }
            }
        }
        let sigma = (q * (1.0 - q) / draws as f64).sqrt();
        for (k, &h) in hits.iter().enumerate() {
            let freq = h as f64 / draws as f64;
            assert!(
                (freq - q).abs() <= 3.0 * sigma,
                "probe {k}: freq {freq} vs q {q} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn density_report_for_diagonal_only_mask() {
        // Four 4x4 diagonal blocks of the n=16 weak partition: 64/256.
        let p = build_partition(16, Admissibility::Weak, 4).unwrap();
        let mask = build_mask(&p, &BudgetRule::Bernoulli { p: 0.0 }, 0).unwrap();
        let d = mask_density(&mask, &p).unwrap();
        assert_eq!(d.global, 64.0 / 256.0);
        for (b, ratio) in &d.per_block {
            if b.is_diagonal() {
                assert_eq!(*ratio, 1.0);
            } else {
                assert_eq!(*ratio, 0.0);
            }
        }
    }

    #[test]
    fn theorem_mask_is_denser_near_the_diagonal() {
        // Deeper levels sit closer to the diagonal and get a larger fill
        // ratio under the theorem budget.
        let p = build_partition(512, Admissibility::StrongPeriodic, 8).unwrap();
        let rule = BudgetRule::TheoremBudget { c: 0.5, r: 5, beta: 2.1 };
        let mask = build_mask(&p, &rule, 11).unwrap();
        let d = mask_density(&mask, &p).unwrap();
        let mut by_level: std::collections::BTreeMap<u32, (f64, usize)> = Default::default();
        for (b, ratio) in &d.per_block {
            if !b.is_diagonal() {
                let e = by_level.entry(b.level).or_insert((0.0, 0));
                e.0 += ratio;
                e.1 += 1;
            }
        }
        let means: Vec<f64> = by_level.values().map(|(s, c)| s / *c as f64).collect();
        for w in means.windows(2) {
            assert!(w[0] <= w[1] + 1e-12, "per-level densities {means:?}");
        }
    }

    #[test]
    fn invalid_rules_are_rejected() {
        let p = build_partition(16, Admissibility::Weak, 4).unwrap();
        assert!(build_mask(&p, &BudgetRule::Bernoulli { p: 1.5 }, 0).is_err());
        assert!(build_mask(&p, &BudgetRule::UniformM { m: 1000 }, 0).is_err());
        assert!(
            build_mask(&p, &BudgetRule::TheoremBudget { c: 1.0, r: 5, beta: 1.0 }, 0).is_err()
        );
    }
}
