//! Reconstruction of the piecewise-constant conductivity from a DtN matrix
//! (exact, completed, or raw-subsampled) by Levenberg-Marquardt damped
//! Gauss-Newton on the Frobenius misfit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::fem::{assemble_dtn, assemble_dtn_and_jacobian, DtnJacobian};
use crate::grid::{ConductivityField, GridSpec};
use crate::sampling::MaskedMatrix;
use crate::{Error, Result};

/// Gauss-Newton settings. The quadratic prior weight `reg_alpha` is a hook
/// and defaults to zero; `reg_beta` (extra regularizer) is accepted only at
/// zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InversionConfig {
    /// Constant initial guess value.
    pub init_value: f64,
    /// Stop when the misfit gradient norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Initial Levenberg-Marquardt damping.
    pub lambda0: f64,
    /// Damping multiplier on rejection / divisor on acceptance.
    pub lambda_step: f64,
    /// Damping above this counts as stagnation.
    pub lambda_max: f64,
    /// Lower clamp keeping the coefficient positive.
    pub positivity_floor: f64,
    /// Optimize log-conductivity instead of clamping.
    pub log_param: bool,
    /// Pixels per dimension of the reconstruction grid.
    pub param_resolution: usize,
    /// Accepted steps shrinking the misfit by less than this relative
    /// amount count toward stagnation.
    pub stall_rel: f64,
    /// Stop after this many consecutive stalled accepted steps.
    pub stall_iters: usize,
    pub reg_alpha: f64,
    pub reg_beta: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            init_value: 1.0,
            grad_tol: 1e-9,
            max_iter: 10_000,
            lambda0: 1e-3,
            lambda_step: 10.0,
            lambda_max: 1e12,
            positivity_floor: 1e-3,
            log_param: false,
            param_resolution: 16,
            stall_rel: 1e-8,
            stall_iters: 6,
            reg_alpha: 0.0,
            reg_beta: 0.0,
        }
    }
}

impl InversionConfig {
    fn validate(&self) -> Result<()> {
        if self.grad_tol <= 0.0 || self.positivity_floor <= 0.0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig(
                "gauss-newton needs positive tolerances and max_iter >= 1".into(),
            ));
        }
        if self.reg_alpha < 0.0 || self.reg_beta < 0.0 {
            return Err(Error::InvalidConfig("regularization weights must be >= 0".into()));
        }
        if self.reg_beta > 0.0 {
            return Err(Error::InvalidConfig(
                "the beta regularization term is a hook; only beta = 0 is supported".into(),
            ));
        }
        Ok(())
    }
}

/// What the misfit compares against: a complete matrix or a masked entry
/// set.
pub enum MisfitTarget<'a> {
    Full(&'a DMatrix<f64>),
    Masked(&'a MaskedMatrix),
}

impl MisfitTarget<'_> {
    pub fn dim(&self) -> usize {
        match self {
            MisfitTarget::Full(m) => m.nrows(),
            MisfitTarget::Masked(mm) => mm.mask.n(),
        }
    }
}

/// Sum of squared entry residuals between the DtN matrix of `a` and the
/// target (over the mask in masked mode), with the gradient assembled from
/// the coefficient Jacobian by the chain rule.
pub fn misfit(
    a: &ConductivityField,
    target: &MisfitTarget,
    grid: &GridSpec,
) -> Result<(f64, Vec<f64>)> {
    if target.dim() != grid.boundary_count() {
        return Err(Error::DimensionMismatch {
            context: "misfit target vs boundary count",
            expected: grid.boundary_count(),
            got: target.dim(),
        });
    }
    let (dtn, jac) = assemble_dtn_and_jacobian(grid, a)?;
    let (value, grad) = misfit_with_jacobian(&dtn.entries, &jac, target);
    Ok((value, grad))
}

/// Residuals in a fixed row-major entry order so that masked mode with a
/// full mask reproduces full mode bit for bit.
fn residuals(entries: &DMatrix<f64>, target: &MisfitTarget) -> (Vec<(u32, u32)>, Vec<f64>) {
    match target {
        MisfitTarget::Full(t) => {
            let n = entries.nrows();
            let mut idx = Vec::with_capacity(n * n);
            let mut r = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    idx.push((i as u32, j as u32));
                    r.push(entries[(i, j)] - t[(i, j)]);
                }
            }
            (idx, r)
        }
        MisfitTarget::Masked(mm) => {
            let idx: Vec<(u32, u32)> = mm.mask.entries().to_vec();
            let r = idx
                .iter()
                .zip(&mm.values)
                .map(|(&(i, j), &v)| entries[(i as usize, j as usize)] - v)
                .collect();
            (idx, r)
        }
    }
}

fn misfit_with_jacobian(
    entries: &DMatrix<f64>,
    jac: &DtnJacobian,
    target: &MisfitTarget,
) -> (f64, Vec<f64>) {
    let (idx, r) = residuals(entries, target);
    let value: f64 = r.iter().map(|x| x * x).sum();
    let n = jac.n_boundary();
    let mut grad = vec![0.0; jac.n_params()];
    for k in 0..jac.n_params() {
        let slab = jac.pixel_slab(k);
        let mut g = 0.0;
        for (&(i, j), &ri) in idx.iter().zip(&r) {
            g += slab[j as usize * n + i as usize] * ri;
        }
        grad[k] = 2.0 * g;
    }
    (value, grad)
}

fn misfit_value_only(
    a: &ConductivityField,
    target: &MisfitTarget,
    grid: &GridSpec,
) -> Result<f64> {
    let dtn = assemble_dtn(grid, a)?;
    let (_, r) = residuals(&dtn.entries, target);
    Ok(r.iter().map(|x| x * x).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GnStatus {
    Converged,
    MaxIter,
    Stagnated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnIterRecord {
    pub iter: usize,
    pub misfit: f64,
    pub grad_norm: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnTrace {
    pub status: GnStatus,
    pub records: Vec<GnIterRecord>,
}

impl GnTrace {
    /// CSV rows `(iter, misfit, grad_norm, lambda, accepted)`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,misfit,grad_norm,lambda,accepted\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.iter, r.misfit, r.grad_norm, r.lambda, r.accepted
            ));
        }
        s
    }
}

/// Damped Gauss-Newton on the entry residual vector. The normal equations
/// carry a Levenberg-Marquardt shift that grows on rejected steps; the
/// coefficient stays above `positivity_floor` by clamping (or by log
/// parameterization when configured).
pub fn gauss_newton(
    target: &MisfitTarget,
    cfg: &InversionConfig,
    grid: &GridSpec,
) -> Result<(ConductivityField, GnTrace)> {
    cfg.validate()?;
    if grid.cells_per_dim() % cfg.param_resolution != 0 {
        return Err(Error::IncompatibleParamGrid {
            param: cfg.param_resolution,
            cells: grid.cells_per_dim(),
        });
    }
    let res = cfg.param_resolution;
    let k_params = res * res;
    let a0 = vec![cfg.init_value; k_params];
    let mut a = a0.clone();
    let mut lambda = cfg.lambda0;
    let mut records = Vec::new();
    let mut status = GnStatus::MaxIter;
    let mut stalled = 0usize;

    let mut field = ConductivityField::new(res, a.clone())?;
    let (dtn, mut jac) = assemble_dtn_and_jacobian(grid, &field)?;
    let mut entries = dtn.entries;

    for iter in 0..cfg.max_iter {
        let (idx, r) = residuals(&entries, target);
        let mut value: f64 = r.iter().map(|x| x * x).sum();
        let n = jac.n_boundary();

        // J as (#entries x k) with the chain-rule scaling for log
        // parameterization. In full-matrix mode the residual ordering is
        // row-major, so the column-major slabs are gathered per entry; the
        // masked path gathers the same way over its entry list.
        let mut jmat = DMatrix::<f64>::zeros(idx.len(), k_params);
        for k in 0..k_params {
            let slab = jac.pixel_slab(k);
            let scale = if cfg.log_param { a[k] } else { 1.0 };
            let col = &mut jmat.column_mut(k);
            for (row, &(i, j)) in idx.iter().enumerate() {
                col[row] = scale * slab[j as usize * n + i as usize];
            }
        }
        let rv = DVector::from_column_slice(&r);
        let mut grad = jmat.tr_mul(&rv) * 2.0;
        if cfg.reg_alpha > 0.0 {
            for k in 0..k_params {
                value += cfg.reg_alpha * (a[k] - a0[k]).powi(2);
                grad[k] += 2.0 * cfg.reg_alpha * (a[k] - a0[k]);
            }
        }
        let grad_norm = grad.norm();
        if grad_norm <= cfg.grad_tol {
            status = GnStatus::Converged;
            records.push(GnIterRecord {
                iter,
                misfit: value,
                grad_norm,
                lambda,
                accepted: true,
            });
            break;
        }

        let mut normal = jmat.tr_mul(&jmat);
        if cfg.reg_alpha > 0.0 {
            for k in 0..k_params {
                normal[(k, k)] += cfg.reg_alpha;
            }
        }

        // Inner damping loop: retry the solve with a larger shift until a
        // step decreases the misfit.
        let mut accepted = false;
        while lambda <= cfg.lambda_max {
            let mut shifted = normal.clone();
            for k in 0..k_params {
                shifted[(k, k)] += lambda;
            }
            let rhs = grad.clone() * -0.5;
            let step = match shifted.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    lambda *= cfg.lambda_step;
                    continue;
                }
            };
            let mut a_try = a.clone();
            for k in 0..k_params {
                if cfg.log_param {
                    a_try[k] = (a[k].ln() + step[k]).exp();
                }
                if !cfg.log_param {
                    a_try[k] = a[k] + step[k];
                }
                a_try[k] = a_try[k].max(cfg.positivity_floor);
            }
            let field_try = ConductivityField::new(res, a_try.clone())?;
            let mut value_try = misfit_value_only(&field_try, target, grid)?;
            if cfg.reg_alpha > 0.0 {
                for k in 0..k_params {
                    value_try += cfg.reg_alpha * (a_try[k] - a0[k]).powi(2);
                }
            }
            if value_try < value {
                if value - value_try <= cfg.stall_rel * value.max(1e-300) {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                a = a_try;
                field = field_try;
                lambda = (lambda / cfg.lambda_step).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= cfg.lambda_step;
        }

        records.push(GnIterRecord {
            iter,
            misfit: value,
            grad_norm,
            lambda,
            accepted,
        });
        if !accepted || stalled >= cfg.stall_iters {
            status = GnStatus::Stagnated;
            break;
        }

        let (dtn_new, jac_new) = assemble_dtn_and_jacobian(grid, &field)?;
        entries = dtn_new.entries;
        jac = jac_new;
    }

    Ok((field, GnTrace { status, records }))
}

/// Relative L2 and absolute L-infinity distances between two fields on the
/// same pixel grid. The L2 distance is normalized by the first argument.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldDistance {
    pub relative_l2: f64,
    pub l_inf: f64,
}

pub fn compare_reconstructions(
    a1: &ConductivityField,
    a2: &ConductivityField,
) -> Result<FieldDistance> {
    if a1.resolution() != a2.resolution() {
        return Err(Error::DimensionMismatch {
            context: "field resolutions",
            expected: a1.resolution(),
            got: a2.resolution(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut linf = 0.0f64;
    for (x, y) in a1.values().iter().zip(a2.values()) {
        num += (x - y).powi(2);
        den += x * x;
        linf = linf.max((x - y).abs());
    }
    Ok(FieldDistance {
        relative_l2: (num / den).sqrt(),
        l_inf: linf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpartition::{build_partition, Admissibility};
    use crate::sampling::{build_mask, BudgetRule};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn misfit_vanishes_at_the_generating_field() {
        let grid = GridSpec::new(3).unwrap();
        let a = ConductivityField::from_fn(4, |x, y| 1.0 + 0.3 * x + 0.2 * y).unwrap();
        let target_m = assemble_dtn(&grid, &a).unwrap().entries;
        let (value, grad) = misfit(&a, &MisfitTarget::Full(&target_m), &grid).unwrap();
        assert!(value <= 1e-20, "value {value:e}");
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(gn <= 1e-10, "grad norm {gn:e}");
    }

    #[test]
    fn misfit_gradient_matches_central_differences() {
        // Oracle: central finite differences with step 1e-6.
        let grid = GridSpec::new(3).unwrap();
        let res = 4usize;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a_vals: Vec<f64> = (0..res * res).map(|_| 0.8 + rng.gen::<f64>()).collect();
        let a = ConductivityField::new(res, a_vals.clone()).unwrap();
        let truth = crate::grid::smooth_bump_conductivity(res);
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        let target = MisfitTarget::Full(&target_m);

        let (_, grad) = misfit(&a, &target, &grid).unwrap();
        let step = 1e-6;
        let mut fd = vec![0.0; res * res];
        for k in 0..res * res {
            let mut up = a_vals.clone();
            up[k] += step;
            let mut dn = a_vals.clone();
            dn[k] -= step;
            let vu = misfit_value_only(&ConductivityField::new(res, up).unwrap(), &target, &grid)
                .unwrap();
            let vd = misfit_value_only(&ConductivityField::new(res, dn).unwrap(), &target, &grid)
                .unwrap();
            fd[k] = (vu - vd) / (2.0 * step);
        }
        let num: f64 = grad
            .iter()
            .zip(&fd)
            .map(|(g, f)| (g - f).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
        assert!(num / den <= 1e-5, "relative gradient error {:e}", num / den);
    }

    #[test]
    fn masked_mode_with_full_mask_equals_full_mode() {
        let grid = GridSpec::new(3).unwrap();
        let n = grid.boundary_count();
        let truth = crate::grid::smooth_bump_conductivity(8);
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        let partition = build_partition(n, Admissibility::Weak, 8).unwrap();
        let mask = build_mask(&partition, &BudgetRule::Bernoulli { p: 1.0 }, 1).unwrap();
        let masked = MaskedMatrix::observe(&target_m, mask).unwrap();

        let a = ConductivityField::from_fn(4, |x, _| 1.0 + 0.1 * x).unwrap();
        let (v_full, g_full) = misfit(&a, &MisfitTarget::Full(&target_m), &grid).unwrap();
        let (v_mask, g_mask) = misfit(&a, &MisfitTarget::Masked(&masked), &grid).unwrap();
        assert_eq!(v_full, v_mask);
        assert_eq!(g_full, g_mask);
    }

    #[test]
    fn recovers_a_constant_field() {
        // Oracle: the generating value.
        let grid = GridSpec::new(3).unwrap();
        let truth = ConductivityField::constant(4, 1.5).unwrap();
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        let cfg = InversionConfig {
            param_resolution: 4,
            max_iter: 60,
            ..Default::default()
        };
        let (recon, trace) = gauss_newton(&MisfitTarget::Full(&target_m), &cfg, &grid).unwrap();
        assert!(
            recon.values().iter().all(|&v| (v - 1.5).abs() <= 1e-6),
            "reconstruction {:?} (status {:?})",
            &recon.values()[..4],
            trace.status
        );
    }

    #[test]
    fn initializing_at_the_truth_terminates_at_zero_misfit() {
        let grid = GridSpec::new(3).unwrap();
        let truth = ConductivityField::constant(4, 1.25).unwrap();
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        let cfg = InversionConfig {
            init_value: 1.25,
            param_resolution: 4,
            ..Default::default()
        };
        let (_, trace) = gauss_newton(&MisfitTarget::Full(&target_m), &cfg, &grid).unwrap();
        assert_eq!(trace.status, GnStatus::Converged);
        assert_eq!(trace.records.len(), 1);
        assert!(trace.records[0].misfit <= 1e-20);
    }

    #[test]
    fn accepted_steps_decrease_the_misfit() {
        let grid = GridSpec::new(3).unwrap();
        let truth = crate::grid::two_blob_conductivity(4);
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        let cfg = InversionConfig {
            param_resolution: 4,
            max_iter: 25,
            ..Default::default()
        };
        let (_, trace) = gauss_newton(&MisfitTarget::Full(&target_m), &cfg, &grid).unwrap();
        let accepted: Vec<f64> = trace
            .records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.misfit)
            .collect();
        assert!(accepted.len() >= 2);
        for w in accepted.windows(2) {
            assert!(w[1] <= w[0], "misfit rose along accepted steps: {w:?}");
        }
    }

    #[test]
    fn log_parameterization_also_recovers() {
        let grid = GridSpec::new(3).unwrap();
        let truth = ConductivityField::constant(4, 1.5).unwrap();
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        let cfg = InversionConfig {
            param_resolution: 4,
            log_param: true,
            max_iter: 60,
            ..Default::default()
        };
        let (recon, _) = gauss_newton(&MisfitTarget::Full(&target_m), &cfg, &grid).unwrap();
        assert!(recon.values().iter().all(|&v| (v - 1.5).abs() <= 1e-6));
    }

    #[test]
    fn field_distances_on_trivial_pairs() {
        let a = ConductivityField::from_fn(8, |x, y| 1.0 + x + y).unwrap();
        let same = compare_reconstructions(&a, &a).unwrap();
        assert_eq!(same.relative_l2, 0.0);
        assert_eq!(same.l_inf, 0.0);

        let doubled = a.scaled(2.0).unwrap();
        let d = compare_reconstructions(&a, &doubled).unwrap();
        assert!((d.relative_l2 - 1.0).abs() <= 1e-14);
        let max_a = a.values().iter().cloned().fold(0.0f64, f64::max);
        assert!((d.l_inf - max_a).abs() <= 1e-14);

        let b = ConductivityField::constant(4, 1.0).unwrap();
        assert!(compare_reconstructions(&a, &b).is_err());
    }

    #[test]
    fn beta_regularizer_is_rejected() {
        let cfg = InversionConfig {
            reg_beta: 0.1,
            ..Default::default()
        };
        let grid = GridSpec::new(3).unwrap();
        let truth = ConductivityField::constant(4, 1.0).unwrap();
        let target_m = assemble_dtn(&grid, &truth).unwrap().entries;
        assert!(gauss_newton(&MisfitTarget::Full(&target_m), &cfg, &grid).is_err());
    }
}
