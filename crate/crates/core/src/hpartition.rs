//! Dyadic hierarchical partitioning of the cyclic boundary index set into
//! diagonal (full-rank) and admissible (low-rank) blocks, plus epsilon-rank
//! diagnostics over a partitioned matrix.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lowrank;
use crate::{Error, Result};

/// Rule deciding which blocks are treated as low-rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Admissibility {
    /// HODLR: every off-diagonal sibling block is admissible.
    Weak,
    /// Blocks are admissible when their periodic index distance is at least
    /// the block span; wrap-around neighbors on the closed boundary curve
    /// stay diagonal.
    StrongPeriodic,
}

impl std::fmt::Display for Admissibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Admissibility::Weak => write!(f, "weak"),
            Admissibility::StrongPeriodic => write!(f, "strong-periodic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockTag {
    Diagonal,
    Admissible,
}

/// One block of the partition. Index ranges are contiguous; cyclic
/// adjacency only enters through the admissibility rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub level: u32,
    pub row_start: usize,
    pub row_len: usize,
    pub col_start: usize,
    pub col_len: usize,
    pub tag: BlockTag,
}

impl Block {
    pub fn area(&self) -> usize {
        self.row_len * self.col_len
    }

    pub fn is_diagonal(&self) -> bool {
        self.tag == BlockTag::Diagonal
    }

    pub fn extract(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.view((self.row_start, self.col_start), (self.row_len, self.col_len))
            .clone_owned()
    }
}

/// Hierarchical block partition of an `n x n` matrix over cyclic indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockPartition {
    n: usize,
    min_block: usize,
    admissibility: Admissibility,
    levels: u32,
    blocks: Vec<Block>,
}

pub const DEFAULT_MIN_BLOCK: usize = 8;

/// Build the dyadic partition. `n` must be `min_block * 2^L`.
pub fn build_partition(
    n: usize,
    admissibility: Admissibility,
    min_block: usize,
) -> Result<BlockPartition> {
    if min_block < 2 {
        return Err(Error::BadMinBlock(min_block));
    }
    if n < min_block || n % min_block != 0 || !(n / min_block).is_power_of_two() {
        return Err(Error::BadPartitionSize { n, min_block });
    }
    let levels = (n / min_block).trailing_zeros();
    let mut blocks = Vec::new();
    match admissibility {
        Admissibility::Weak => weak_recurse(0, n, 0, min_block, &mut blocks),
        Admissibility::StrongPeriodic => {
            strong_recurse(0, 0, 0, n, min_block, &mut blocks);
        }
    }
    blocks.sort_unstable_by_key(|b| (b.level, b.row_start, b.col_start));
    Ok(BlockPartition {
        n,
        min_block,
        admissibility,
        levels,
        blocks,
    })
}

fn weak_recurse(start: usize, size: usize, level: u32, min_block: usize, out: &mut Vec<Block>) {
    if size <= min_block {
        out.push(Block {
            level,
            row_start: start,
            row_len: size,
            col_start: start,
            col_len: size,
            tag: BlockTag::Diagonal,
        });
        return;
    }
    let half = size / 2;
    for (rs, cs) in [(start, start + half), (start + half, start)] {
        out.push(Block {
            level: level + 1,
            row_start: rs,
            row_len: half,
            col_start: cs,
            col_len: half,
            tag: BlockTag::Admissible,
        });
    }
    weak_recurse(start, half, level + 1, min_block, out);
    weak_recurse(start + half, half, level + 1, min_block, out);
}

fn strong_recurse(
    row_i: usize,
    col_i: usize,
    level: u32,
    n: usize,
    min_block: usize,
    out: &mut Vec<Block>,
) {
    let m = 1usize << level; // intervals at this level
    let size = n / m;
    // Cyclic interval distance in units of the interval size.
    let fwd = (col_i + m - row_i) % m;
    let d = fwd.min(m - fwd);
    if m >= 4 && d >= 2 {
        out.push(Block {
            level,
            row_start: row_i * size,
            row_len: size,
            col_start: col_i * size,
            col_len: size,
            tag: BlockTag::Admissible,
        });
        return;
    }
    if size <= min_block {
        out.push(Block {
            level,
            row_start: row_i * size,
            row_len: size,
            col_start: col_i * size,
            col_len: size,
            tag: BlockTag::Diagonal,
        });
        return;
    }
    for dr in 0..2 {
        for dc in 0..2 {
            strong_recurse(2 * row_i + dr, 2 * col_i + dc, level + 1, n, min_block, out);
        }
    }
}

impl BlockPartition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn min_block(&self) -> usize {
        self.min_block
    }

    pub fn admissibility(&self) -> Admissibility {
        self.admissibility
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn diagonal_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| b.is_diagonal())
    }

    pub fn admissible_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| !b.is_diagonal())
    }

    /// CSV rows `(level, row_start, row_len, col_start, col_len, tag)`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,row_start,row_len,col_start,col_len,tag\n");
        for b in &self.blocks {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.level,
                b.row_start,
                b.row_len,
                b.col_start,
                b.col_len,
                match b.tag {
                    BlockTag::Diagonal => "diagonal",
                    BlockTag::Admissible => "admissible",
                }
            ));
        }
        s
    }
}

/// Number of singular values strictly greater than the absolute threshold.
pub fn epsilon_rank(block: &DMatrix<f64>, eps: f64) -> usize {
    lowrank::singular_values(block)
        .iter()
        .take_while(|&&s| s > eps)
        .count()
}

/// Per-block epsilon-rank of one partitioned matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub eps: f64,
    pub entries: Vec<(Block, usize)>,
}

pub const DEFAULT_EPS_RANK: f64 = 1e-6;

/// Apply [`epsilon_rank`] to every block of the partition.
pub fn rank_survey(m: &DMatrix<f64>, p: &BlockPartition, eps: f64) -> Result<RankReport> {
    if m.nrows() != p.n() || m.ncols() != p.n() {
        return Err(Error::DimensionMismatch {
            context: "matrix vs partition dimension",
            expected: p.n(),
            got: m.nrows(),
        });
    }
    let entries: Vec<(Block, usize)> = p
        .blocks()
        .par_iter()
        .map(|b| (*b, epsilon_rank(&b.extract(m), eps)))
        .collect();
    Ok(RankReport { eps, entries })
}

impl RankReport {
    pub fn max_admissible_rank(&self) -> usize {
        self.entries
            .iter()
            .filter(|(b, _)| !b.is_diagonal())
            .map(|&(_, r)| r)
            .max()
            .unwrap_or(0)
    }

    /// CSV rows `(level, row_start, row_len, col_start, col_len, tag, eps_rank)`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,row_start,row_len,col_start,col_len,tag,eps_rank\n");
        for (b, r) in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                b.level,
                b.row_start,
                b.row_len,
                b.col_start,
                b.col_len,
                match b.tag {
                    BlockTag::Diagonal => "diagonal",
                    BlockTag::Admissible => "admissible",
                },
                r
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_exact_tiling(p: &BlockPartition) {
        let n = p.n();
        let mut cover = vec![0u8; n * n];
        for b in p.blocks() {
            for r in b.row_start..b.row_start + b.row_len {
                for c in b.col_start..b.col_start + b.col_len {
                    cover[r * n + c] += 1;
                }
            }
        }
        assert!(cover.iter().all(|&c| c == 1), "tiling is not exact");
    }

    #[test]
    fn weak_partition_is_hodlr() {
        let p = build_partition(16, Admissibility::Weak, 4).unwrap();
        assert_exact_tiling(&p);
        let diag: Vec<_> = p.diagonal_blocks().collect();
        assert_eq!(diag.len(), 4);
        assert!(diag.iter().all(|b| b.row_len == 4));
        // 2^l off-diagonal blocks of side n/2^l at level l.
        for level in 1..=2u32 {
            let at: Vec<_> = p
                .admissible_blocks()
                .filter(|b| b.level == level)
                .collect();
            assert_eq!(at.len(), 1 << level);
            assert!(at.iter().all(|b| b.row_len == 16 >> level));
        }
    }

    #[test]
    fn degenerate_tree_is_a_single_diagonal_block() {
        let p = build_partition(8, Admissibility::Weak, 8).unwrap();
        assert_eq!(p.blocks().len(), 1);
        assert!(p.blocks()[0].is_diagonal());
        assert_eq!(p.levels(), 0);
    }

    #[test]
    fn strong_periodic_tags_wraparound_neighbors_diagonal() {
        let p = build_partition(32, Admissibility::StrongPeriodic, 8).unwrap();
        assert_exact_tiling(&p);
        let wrap = p
            .blocks()
            .iter()
            .find(|b| b.row_start == 0 && b.row_len == 8 && b.col_start == 24)
            .expect("wrap block present");
        assert_eq!(wrap.tag, BlockTag::Diagonal);
    }

    #[test]
    fn strong_periodic_is_rotation_invariant_by_quarter() {
        let p = build_partition(64, Admissibility::StrongPeriodic, 8).unwrap();
        let n = p.n();
        let mut set: Vec<(usize, usize, usize, usize, BlockTag)> = p
            .blocks()
            .iter()
            .map(|b| (b.row_start, b.row_len, b.col_start, b.col_len, b.tag))
            .collect();
        set.sort_unstable_by_key(|t| (t.0, t.2));
        let mut rotated: Vec<(usize, usize, usize, usize, BlockTag)> = p
            .blocks()
            .iter()
            .map(|b| {
                (
                    (b.row_start + n / 4) % n,
                    b.row_len,
                    (b.col_start + n / 4) % n,
                    b.col_len,
                    b.tag,
                )
            })
            .collect();
        rotated.sort_unstable_by_key(|t| (t.0, t.2));
        assert_eq!(set, rotated);
    }

    #[test]
    fn bad_sizes_are_rejected() {
        assert!(build_partition(24, Admissibility::Weak, 8).is_err());
        assert!(build_partition(4, Admissibility::Weak, 8).is_err());
        assert!(build_partition(16, Admissibility::Weak, 1).is_err());
    }

    #[test]
    fn epsilon_rank_on_trivial_matrices() {
        let zero = DMatrix::<f64>::zeros(10, 10);
        assert_eq!(epsilon_rank(&zero, 1e-6), 0);
        let id = DMatrix::<f64>::identity(10, 10);
        assert_eq!(epsilon_rank(&id, 1e-6), 10);
    }

    #[test]
    fn rank_survey_of_identity() {
        let n = 32;
        let id = DMatrix::<f64>::identity(n, n);
        for adm in [Admissibility::Weak, Admissibility::StrongPeriodic] {
            let p = build_partition(n, adm, 8).unwrap();
            let report = rank_survey(&id, &p, 1e-6).unwrap();
            for (b, r) in &report.entries {
                if b.is_diagonal() && b.row_start == b.col_start {
                    assert_eq!(*r, b.row_len);
                } else {
                    assert_eq!(*r, 0, "block {b:?}");
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tiling_is_always_exact(
            log_n in 4u32..7,
            min_block in prop::sample::select(vec![4usize, 8]),
            strong in proptest::bool::ANY,
        ) {
            let n = 1usize << log_n;
            prop_assume!(n >= min_block);
            let adm = if strong { Admissibility::StrongPeriodic } else { Admissibility::Weak };
            let p = build_partition(n, adm, min_block).unwrap();
            assert_exact_tiling(&p);
            let area: usize = p.blocks().iter().map(|b| b.area()).sum();
            prop_assert_eq!(area, n * n);
        }

        #[test]
        fn epsilon_rank_is_antitone_in_eps(seed in 0u64..1000) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(12, 12, |_, _| rng.gen::<f64>() - 0.5);
            let eps: Vec<f64> = vec![1e-8, 1e-4, 1e-2, 1e-1, 1.0, 10.0];
            let ranks: Vec<usize> = eps.iter().map(|&e| epsilon_rank(&m, e)).collect();
            for w in ranks.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
