use itomc_core::hpartition::{build_partition, rank_survey, Admissibility};
use itomc_core::rte::{assemble_albedo, RteProblem};
use std::time::Instant;

fn main() {
    let problem = RteProblem::constant_sigma(1.0, 0.03125, 16, 16).unwrap();
    let albedo = assemble_albedo(&problem).unwrap();
    let p = build_partition(512, Admissibility::StrongPeriodic, 8).unwrap();
    let t0 = Instant::now();
    let rep = rank_survey(&albedo.entries, &p, 1e-6).unwrap();
    println!("rank_survey (rayon) done in {:.1}s, max admissible {}", t0.elapsed().as_secs_f64(), rep.max_admissible_rank());
    let t1 = Instant::now();
    let g = itomc_core::hpartition::epsilon_rank(&albedo.entries, 1e-6);
    println!("global rank {g} in {:.1}s", t1.elapsed().as_secs_f64());
}
