use itomc_core::rte::{assemble_albedo, RteProblem, TransportSolver};
use std::time::Instant;

fn main() {
    for (n, q) in [(8usize, 8usize), (16, 8), (16, 16)] {
        let problem = RteProblem::constant_sigma(1.0, 1.0, n, q).unwrap();
        let t0 = Instant::now();
        let mut solver = TransportSolver::new(problem.clone());
        solver.prepare_reduced();
        let t_prep = t0.elapsed().as_secs_f64();
        let dim = problem.boundary_dim();
        let inflow = vec![1.0; dim];
        let t1 = Instant::now();
        let _ = solver.solve(&inflow).unwrap();
        let t_solve = t1.elapsed().as_secs_f64();
        println!("N={n} q={q}: prep {t_prep:.2}s, one solve {t_solve:.4}s, dim={dim}");
        let t2 = Instant::now();
        let _ = assemble_albedo(&problem).unwrap();
        println!("  albedo total {:.2}s", t2.elapsed().as_secs_f64());
    }
}
