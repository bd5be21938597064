use itomc_core::completion::{success_ratio_sweep, CompletionConfig};
use itomc_core::fem::dtn_block;
use itomc_core::grid::{shepp_logan_conductivity, GridSpec};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("small");
    let cfg = CompletionConfig::default();
    match which {
        "small" => {
            // levels 5,6,7 -> block a sizes 32,64,128
            let mut blocks = Vec::new();
            for level in [5u32, 6, 7] {
                let grid = GridSpec::new(level).unwrap();
                let n = grid.boundary_count();
                let a = shepp_logan_conductivity(grid.cells_per_dim());
                let t0 = Instant::now();
                let b = dtn_block(&grid, &a, 0..n / 4, n / 2..3 * n / 4).unwrap();
                println!("level {level}: block {}x{} fro={:.3e} ({:.1}s)", b.nrows(), b.ncols(), b.norm(), t0.elapsed().as_secs_f64());
                blocks.push((level, b));
            }
            let p_grid = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8];
            
            let t0 = Instant::now();
            let cells = success_ratio_sweep(&blocks, &p_grid, 20, 1e-4, &cfg, 2024);
            println!("sweep took {:.1}s", t0.elapsed().as_secs_f64());
            for c in &cells {
                println!("l={} dim={} p={:.2} ratio={:.2} mean_err={:.2e} maxiter={}", c.level, c.block_dim, c.p, c.ratio, c.mean_err, c.max_iter_hits);
            }
        }
        "big" => {
            let level = 9u32;
            let grid = GridSpec::new(level).unwrap();
            let n = grid.boundary_count();
            let a = shepp_logan_conductivity(grid.cells_per_dim());
            let t0 = Instant::now();
            let b = dtn_block(&grid, &a, 0..n / 4, n / 2..3 * n / 4).unwrap();
            println!("level 9 block {}x{} fro={:.3e} assembled in {:.1}s", b.nrows(), b.ncols(), b.norm(), t0.elapsed().as_secs_f64());
            let t0 = Instant::now();
            let cells = success_ratio_sweep(&[(level, b)], &[0.03, 0.05, 0.1], 10, 1e-4, &cfg, 2024);
            println!("sweep took {:.1}s", t0.elapsed().as_secs_f64());
            for c in &cells {
                println!("l={} dim={} p={:.2} ratio={:.2} mean_err={:.2e} maxiter={}", c.level, c.block_dim, c.p, c.ratio, c.mean_err, c.max_iter_hits);
            }
        }
        _ => eprintln!("small|big"),
    }
}
