use itomc_core::completion::CompletionConfig;
use itomc_core::lowrank::singular_values;
use itomc_core::rte::{assemble_albedo, rte_success_sweep, RteProblem};
use std::time::Instant;

fn main() {
    for (n, q, sig) in [(16usize, 96usize, 4.0f64), (16, 64, 4.0)] {
        let problem = RteProblem::constant_sigma(sig, 0.03125, n, q).unwrap();
        let albedo = assemble_albedo(&problem).unwrap();
        let dim = albedo.dim();
        let t1 = Instant::now();
        let sv = singular_values(&albedo.entries);
        let g = sv.iter().take_while(|&&s| s > 1e-6).count();
        println!("N={n:2} q={q:3} sigma={sig}: dim={dim:4} global={g:3} ({:.1}%) [svd {:.1}s]", 100.0 * g as f64 / dim as f64, t1.elapsed().as_secs_f64());
    }
    // Ballistic-config sweep: refinement 0 = (8,8), refinement 1 = (16,16), sigma 12, Kn 1
    let problems = vec![
        (0u32, RteProblem::constant_sigma(12.0, 1.0, 8, 8).unwrap()),
        (1u32, RteProblem::constant_sigma(12.0, 1.0, 16, 16).unwrap()),
    ];
    for (lvl, pb) in &problems {
        let alb = assemble_albedo(pb).unwrap();
        let d = alb.dim();
        let blk = alb.entries.view((0, d / 2), (d / 4, d / 4)).clone_owned();
        println!("r={lvl} dim={d}: block {}x{} fro={:.2e} max={:.2e}", blk.nrows(), blk.ncols(), blk.norm(), blk.amax());
    }
    let cfg = CompletionConfig { max_iter: 2500, ..Default::default() };
    let t0 = Instant::now();
    let cells = rte_success_sweep(&problems, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.7], 20, 1e-4, &cfg, 777).unwrap();
    println!("sweep took {:.1}s", t0.elapsed().as_secs_f64());
    for c in &cells {
        println!("r={} dim={} p={:.2} ratio={:.2} mean_err={:.2e}", c.level, c.block_dim, c.p, c.ratio, c.mean_err);
    }
}
