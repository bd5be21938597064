use itomc_core::experiments::{inversion_compare, ExperimentConfig, ExperimentId};
use itomc_core::sampling::BudgetRule;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let p: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let mb: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let mut cfg = ExperimentConfig::new(ExperimentId::InversionCompare, 2024);
    cfg.levels = vec![6];
    cfg.budget = BudgetRule::Bernoulli { p };
    cfg.min_block = mb;
    let t0 = Instant::now();
    let (_, summary) = inversion_compare(&cfg).unwrap();
    println!(
        "p={p} mb={mb}: completed_vs_exact={:.4e} raw_vs_exact={:.4e} separation={:.1}x blocks_ok={} ({:.0}s)",
        summary.completed_vs_exact_l2,
        summary.raw_vs_exact_l2,
        summary.separation,
        summary.all_blocks_success,
        t0.elapsed().as_secs_f64()
    );
}
