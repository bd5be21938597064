use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [32usize, 64, 96, 128, 256, 512] {
        let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let reps = if n <= 128 { 50 } else { 5 };
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = m.clone().svd(true, true);
        }
        let per = t0.elapsed().as_secs_f64() / reps as f64;
        println!("full svd {n}: {:.2} ms", per * 1e3);
    }
    // randomized svt cost at 128/512 with rank ~ 8
    for n in [128usize, 512] {
        let u = DMatrix::<f64>::from_fn(n, 6, |_, _| rng.gen::<f64>() - 0.5);
        let v = DMatrix::<f64>::from_fn(n, 6, |_, _| rng.gen::<f64>() - 0.5);
        let m = &u * v.transpose();
        let mut srng = ChaCha8Rng::seed_from_u64(2);
        let reps = 50;
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = itomc_core::lowrank::svt_randomized(&m, 1e-3, None, &mut srng);
        }
        let per = t0.elapsed().as_secs_f64() / reps as f64;
        println!("randomized svt {n} (rank 6): {:.2} ms", per * 1e3);
    }
}
