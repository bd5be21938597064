//! Singular-value helpers: exact spectra for diagnostics and a randomized
//! partial SVD used inside the completion solver's thresholding step.
//!
//! Diagnostics (epsilon-ranks, coherence) always use the exact SVD; the
//! randomized path is only an accelerator for soft-thresholding large
//! blocks, where the iterates are numerically low-rank.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Blocks at or below this side length use the exact SVD inside the solver.
pub const EXACT_SVD_LIMIT: usize = 48;

/// Exact singular values, sorted descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Exact thin SVD with vectors, singular values descending.
pub fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    (u, sv, v)
}

/// Result of one soft-thresholding step `X = U (S - tau)_+ V^T`.
pub struct SvtOutcome {
    pub x: DMatrix<f64>,
    /// Number of singular values above `tau`.
    pub rank: usize,
    /// Nuclear norm of the thresholded matrix, `sum (s_i - tau)_+`.
    pub nuclear: f64,
    /// Right singular basis of the kept part, for warm-starting the next
    /// sketch.
    pub v: DMatrix<f64>,
}

/// Exact singular-value soft-thresholding.
pub fn svt_exact(w: &DMatrix<f64>, tau: f64) -> SvtOutcome {
    let (u, sv, v) = thin_svd(w);
    let rank = sv.iter().take_while(|&&s| s > tau).count();
    assemble_svt(w.nrows(), w.ncols(), &u, &sv, &v, tau, rank)
}

fn assemble_svt(
    nr: usize,
    nc: usize,
    u: &DMatrix<f64>,
    sv: &[f64],
    v: &DMatrix<f64>,
    tau: f64,
    rank: usize,
) -> SvtOutcome {
    if rank == 0 {
        return SvtOutcome {
            x: DMatrix::zeros(nr, nc),
            rank: 0,
            nuclear: 0.0,
            v: DMatrix::zeros(nc, 0),
        };
    }
    let mut us = u.columns(0, rank).clone_owned();
    for (k, mut col) in us.column_iter_mut().enumerate() {
        col *= sv[k] - tau;
    }
    let vr = v.columns(0, rank).clone_owned();
    let x = &us * vr.transpose();
    let nuclear = sv[..rank].iter().map(|s| s - tau).sum();
    SvtOutcome {
        x,
        rank,
        nuclear,
        v: vr,
    }
}

/// Randomized soft-thresholding for large blocks: subspace iteration with
/// an adaptive sketch size, grown until the sketch captures every singular
/// value above `tau`.
///
/// `warm` carries the right singular basis of the previous iterate; seeding
/// the sketch with it makes the thresholding deterministic once the outer
/// iteration settles, which the solver's stopping test relies on.
pub fn svt_randomized(
    w: &DMatrix<f64>,
    tau: f64,
    warm: Option<&DMatrix<f64>>,
    rng: &mut ChaCha8Rng,
) -> SvtOutcome {
    let (nr, nc) = (w.nrows(), w.ncols());
    let min_dim = nr.min(nc);
    if min_dim <= EXACT_SVD_LIMIT {
        return svt_exact(w, tau);
    }
    let base = warm.map_or(0, |m| m.ncols());
    let mut k = (base + 8).clamp(8, min_dim);
    loop {
        let mut sketch = DMatrix::<f64>::zeros(nc, k);
        let keep = base.min(k);
        if let Some(wv) = warm {
            sketch.columns_mut(0, keep).copy_from(&wv.columns(0, keep));
        }
        for j in keep..k {
            for i in 0..nc {
                sketch[(i, j)] = rng.gen::<f64>() - 0.5;
            }
        }
        let mut q = orthonormalize(w * sketch);
        // Two power iterations sharpen the split around tau.
        for _ in 0..2 {
            let z = orthonormalize(w.tr_mul(&q));
            q = orthonormalize(w * z);
        }
        let b = q.tr_mul(w); // k x nc
        let (ub, sv, vb) = thin_svd(&b);
        let captured = sv.iter().take_while(|&&s| s > tau).count();
        // If the whole sketch sits above the threshold the true rank may be
        // larger; enlarge and retry.
        if captured == k && k < min_dim {
            k = (2 * k).min(min_dim);
            continue;
        }
        let u = &q * ub.columns(0, captured.max(1));
        return assemble_svt(nr, nc, &u, &sv, &vb, tau, captured);
    }
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}
