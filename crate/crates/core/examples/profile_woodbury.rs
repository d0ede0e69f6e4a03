use sqsk_core::kernels::{structured_solve, BlockDiag, BlockDiagPlusLowRank, DiagBlock};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(n_pairs, j) in &[(100usize, 27usize), (600, 27)] {
        let dim = 2 * n_pairs + 2;
        let mut blocks: Vec<DiagBlock> = (0..n_pairs)
            .map(|_| DiagBlock::Pair { a: 2.0 + rng.random::<f64>(), b: -0.9, d: 2.0 + rng.random::<f64>() })
            .collect();
        blocks.push(DiagBlock::Scalar(-1.2));
        blocks.push(DiagBlock::Scalar(-0.7));
        let mut factor = DMatrix::<f64>::from_fn(dim, j, |_, _| rng.sample::<f64,_>(StandardNormal) * 0.3);
        factor.column_mut(0)[dim-2] += 3.0;
        factor.column_mut(1)[dim-1] += 3.0;
        let h = BlockDiagPlusLowRank::new(BlockDiag::new(blocks), factor, vec![1.0; j]).unwrap();
        let rhs = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let _ = structured_solve(&h, &rhs).unwrap();
        let t = Instant::now();
        let reps = 300;
        for _ in 0..reps {
            let x = structured_solve(&h, &rhs).unwrap();
            std::hint::black_box(&x);
        }
        println!("dim={dim} j={j}: {:.1} µs/solve", t.elapsed().as_secs_f64() * 1e6 / reps as f64);
    }
}
