//! Scratch calibration: DtN block scales, ranks, coherence across levels.
use itomc_core::fem::dtn_block;
use itomc_core::grid::{shepp_logan_conductivity, GridSpec};
use itomc_core::hpartition::{build_partition, epsilon_rank, rank_survey, Admissibility};
use itomc_core::lowrank::{singular_values, thin_svd};
use itomc_core::fem::assemble_dtn;
use std::time::Instant;

fn main() {
    // Coherence & scale of blocks a, b across levels 5..8
    for level in 5..=8u32 {
        let grid = GridSpec::new(level).unwrap();
        let n = grid.boundary_count();
        let a = shepp_logan_conductivity(grid.cells_per_dim());
        let t0 = Instant::now();
        // block a: rows [0, n/4), cols [n/2, 3n/4); block b: rows [0, n/8), cols [n/4, 3n/8)
        let ba = dtn_block(&grid, &a, 0..n / 4, n / 2..3 * n / 4).unwrap();
        let bb = dtn_block(&grid, &a, 0..n / 8, n / 4..3 * n / 8).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        for (name, b) in [("a", &ba), ("b", &bb)] {
            let sv = singular_values(b);
            let r = sv.iter().take_while(|&&s| s > 1e-6).count();
            let (u, _s, v) = thin_svd(b);
            let nb = b.nrows();
            let rr = r.max(1);
            // paper-verbatim coherence mu = n * max_i ||row_i(U_r)||
            let mu_u = (0..nb).map(|i| (0..rr).map(|k| u[(i,k)].powi(2)).sum::<f64>().sqrt()).fold(0.0f64, f64::max) * nb as f64;
            let mu_v = (0..nb).map(|i| (0..rr).map(|k| v[(i,k)].powi(2)).sum::<f64>().sqrt()).fold(0.0f64, f64::max) * nb as f64;
            // max |U_r V_r^T|
            let uv = &u.columns(0, rr) * v.columns(0, rr).transpose();
            let max_uv = uv.amax();
            let fro = b.norm();
            println!("l={level} block {name}: n_b={nb} maxabs={:.3e} fro={:.3e} s0={:.3e} eps_rank={r} mu_u={mu_u:.2} mu_v={mu_v:.2} max_uv={max_uv:.3e}  ({dt:.1}s)", b.amax(), fro, sv[0]);
        }
    }
    // Rank survey at l=6 both modes
    for level in 6..=7u32 {
        let grid = GridSpec::new(level).unwrap();
        let a = shepp_logan_conductivity(grid.cells_per_dim());
        let t0 = Instant::now();
        let dtn = assemble_dtn(&grid, &a).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        for adm in [Admissibility::Weak, Admissibility::StrongPeriodic] {
            let p = build_partition(grid.boundary_count(), adm, 8).unwrap();
            let rep = rank_survey(&dtn.entries, &p, 1e-6).unwrap();
            println!("l={level} {adm}: max admissible eps-rank = {} (assembled {dt:.1}s)", rep.max_admissible_rank());
        }
        // full-rank check of diag
        let pd = build_partition(grid.boundary_count(), Admissibility::StrongPeriodic, 8).unwrap();
        let first_diag = pd.diagonal_blocks().next().unwrap();
        println!("  sample diag block eps-rank {} of side {}", epsilon_rank(&first_diag.extract(&dtn.entries), 1e-6), first_diag.row_len);
    }
}
