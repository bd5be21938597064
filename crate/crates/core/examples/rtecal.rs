use itomc_core::completion::CompletionConfig;
use itomc_core::hpartition::{build_partition, epsilon_rank, rank_survey, Admissibility};
use itomc_core::rte::{assemble_albedo, rte_success_sweep, RteProblem};
use std::time::Instant;

fn main() {
    // Rank structure at Kn = 2^-5 and Kn = 1 (criterion 10 pieces)
    for kn in [0.03125f64, 1.0] {
        let problem = RteProblem::constant_sigma(1.0, kn, 16, 16).unwrap();
        let t0 = Instant::now();
        let albedo = assemble_albedo(&problem).unwrap();
        let dim = albedo.dim();
        let g = epsilon_rank(&albedo.entries, 1e-6);
        let p = build_partition(dim, Admissibility::StrongPeriodic, 8).unwrap();
        let rep = rank_survey(&albedo.entries, &p, 1e-6).unwrap();
        println!("Kn={kn}: dim={dim} global eps-rank={g} ({:.0}%) max admissible block rank={} ({:.1}s)",
            100.0 * g as f64 / dim as f64, rep.max_admissible_rank(), t0.elapsed().as_secs_f64());
        println!("  entry max={:.2e} fro={:.2e}", albedo.entries.amax(), albedo.entries.norm());
    }
    // Success sweep across refinements at Kn=1
    let problems = vec![
        (0u32, RteProblem::constant_sigma(1.0, 1.0, 8, 8).unwrap()),
        (1u32, RteProblem::constant_sigma(1.0, 1.0, 16, 16).unwrap()),
    ];
    let cfg = CompletionConfig { max_iter: 2500, ..Default::default() };
    let t0 = Instant::now();
    let cells = rte_success_sweep(&problems, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8], 20, 1e-4, &cfg, 777).unwrap();
    println!("sweep took {:.1}s", t0.elapsed().as_secs_f64());
    for c in &cells {
        println!("r={} dim={} p={:.2} ratio={:.2} mean_err={:.2e}", c.level, c.block_dim, c.p, c.ratio, c.mean_err);
    }
}
