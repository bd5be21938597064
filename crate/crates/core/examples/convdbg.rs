use itomc_core::completion::{complete_block, CompletionConfig, ObservedBlock};
use itomc_core::fem::dtn_block;
use itomc_core::grid::{shepp_logan_conductivity, GridSpec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let grid = GridSpec::new(6).unwrap();
    let n = grid.boundary_count();
    let a = shepp_logan_conductivity(grid.cells_per_dim());
    let b = dtn_block(&grid, &a, 0..n / 4, n / 2..3 * n / 4).unwrap();
    let dim = b.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mask: Vec<(u32, u32)> = (0..dim as u32)
        .flat_map(|i| (0..dim as u32).map(move |j| (i, j)))
        .filter(|_| rng.gen::<f64>() < 0.5)
        .collect();
    let obs = ObservedBlock::from_matrix(&b, &mask).unwrap();
    for max_iter in [200usize, 500, 1000, 2000, 5000, 10000] {
        let cfg = CompletionConfig { max_iter, ..Default::default() };
        let (x, info) = complete_block(&obs, &cfg).unwrap();
        println!(
            "iters={:5} conv={} feas={:.2e} rel={:.2e} rank={} err={:.2e}",
            info.iterations, info.converged, info.feas_residual, info.rel_change, info.rank, (&x - &b).norm()
        );
        if info.converged { break; }
    }
}
