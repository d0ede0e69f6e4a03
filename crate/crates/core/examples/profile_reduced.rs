use sqsk_core::data::synthetic;
use sqsk_core::reduction;
use sqsk_core::sketch::{power_sketch, sketch_error};
use sqsk_core::solver::{self, SolverConfig};
use std::time::Instant;

fn main() {
    for &n in &[100usize, 300, 600] {
        let m = 5 * n;
        let data = synthetic::iid_gaussian(n, m, 3);
        let t0 = Instant::now();
        let sk = power_sketch(&data.x, 25, 4, 3).unwrap();
        let t_sk = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (eps, _) = sketch_error(&data.x, &sk, 20, 3).unwrap();
        let t_err = t1.elapsed().as_secs_f64();
        let rp = reduction::reduce(&sk, &data.y).unwrap();
        let dense = data.x.to_dense();
        let lam = 0.1 * (0..n).map(|i| dense.row(i).norm()).fold(0.0f64, f64::max);
        let cfg = SolverConfig { tol: 1e-6, ..Default::default() };
        let t2 = Instant::now();
        let sol = solver::solve_reduced(&rp, eps, lam, &cfg).unwrap();
        let t_solve = t2.elapsed().as_secs_f64();
        println!(
            "n={n:4}: sketch {:.2}ms err {:.2}ms solve {:.2}ms iters {} ({:.1} µs/iter)",
            t_sk * 1e3, t_err * 1e3, t_solve * 1e3,
            sol.iterations, t_solve * 1e6 / sol.iterations as f64
        );
    }
}
