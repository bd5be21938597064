use itomc_core::completion::{complete_block, CompletionConfig, ObservedBlock};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let n = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = nalgebra::DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let v = nalgebra::DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let m = u * v.transpose();
    let mut rng2 = ChaCha8Rng::seed_from_u64(9);
    let cnt = ((n * n) as f64 * 0.6) as usize;
    let mask: Vec<(u32, u32)> = rand::seq::index::sample(&mut rng2, n * n, cnt)
        .iter().map(|f| ((f / n) as u32, (f % n) as u32)).collect();
    let obs = ObservedBlock::from_matrix(&m, &mask).unwrap();
    let cfg = CompletionConfig { track_objective: true, ..Default::default() };
    let (_, info) = complete_block(&obs, &cfg).unwrap();
    println!("iters={} conv={}", info.iterations, info.converged);
    let t = &info.objective_trace;
    for (i, w) in t.windows(2).enumerate() {
        if w[1] > w[0] + 1e-8 * w[0].max(1.0) {
            println!("rise at {i}: {:.9} -> {:.9} (+{:.2e})", w[0], w[1], w[1]-w[0]);
        }
    }
    println!("first 10: {:?}", &t[..10.min(t.len())]);
    println!("last 5: {:?}", &t[t.len().saturating_sub(5)..]);
}
