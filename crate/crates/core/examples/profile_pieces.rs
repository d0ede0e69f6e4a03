use sqsk_core::data::synthetic;
use sqsk_core::reduction;
use sqsk_core::sketch::power_sketch;
use sqsk_core::solver::{self, SolverConfig};
use std::time::Instant;

fn main() {
    let n = 100; let m = 500;
    let data = synthetic::iid_gaussian(n, m, 3);
    let sk = power_sketch(&data.x, 25, 4, 3).unwrap();
    let rp = reduction::reduce(&sk, &data.y).unwrap();
    let cfg = SolverConfig { tol: 1e-6, ..Default::default() };
    // per-solve repeated timing
    let _ = solver::solve_reduced(&rp, 1.0, 1.0, &cfg).unwrap();
    for (eps, lam) in [(1.0, 1.0), (0.5, 2.0)] {
        let t = Instant::now();
        let reps = 30;
        let mut iters = 0;
        for _ in 0..reps {
            let s = solver::solve_reduced(&rp, eps, lam, &cfg).unwrap();
            iters += s.iterations;
        }
        println!("eps={eps} lam={lam}: {:.2} ms/solve, {:.1} µs/iter", t.elapsed().as_secs_f64()*1e3/reps as f64, t.elapsed().as_secs_f64()*1e6/iters as f64);
    }
}
