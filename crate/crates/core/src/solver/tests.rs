use super::barrier::{minimize, Design};
use super::*;
use crate::reduction::ReducedProblem;
use approx::assert_relative_eq;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_mat(seed: u64, r: usize, c: usize) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn random_vec(seed: u64, len: usize) -> Vec64 {
    random_mat(seed, len, 1).column(0).into_owned()
}

fn reduced_instance(seed: u64, n: usize, k: usize) -> ReducedProblem {
    let r = random_mat(seed, n, k);
    let c = random_vec(seed ^ 0xabc, k);
    ReducedProblem {
        n_features: n,
        r,
        c,
        s: 0.6,
        kept: None,
        rank_deficient: false,
    }
}

/// Random strictly interior flat point for the probe.
fn interior_point(probe: &BarrierProbe, rp: &ReducedProblem, eps: f64, lam: f64, seed: u64) -> Vec64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rp.n_features;
    let dim = probe.dim(n);
    let split = lam > 0.0;
    let mut flat = Vec64::zeros(dim);
    let mut w = Vec64::zeros(n);
    if split {
        for i in 0..n {
            let p = 0.4 + rng.random::<f64>();
            let q = 0.4 + rng.random::<f64>();
            flat[2 * i] = p;
            flat[2 * i + 1] = q;
            w[i] = p - q;
        }
    } else {
        for i in 0..n {
            w[i] = rng.sample::<f64, _>(StandardNormal) * 0.5;
            flat[i] = w[i];
        }
    }
    let fit = &rp.c - rp.r.tr_mul(&w);
    let rsq = fit.norm_squared() + rp.s * rp.s;
    let sigma = rsq.sqrt() * (1.2 + 0.5 * rng.random::<f64>()) + 0.3;
    let tau = w.norm() * 1.5 + 0.5 + rng.random::<f64>();
    if split {
        flat[2 * n] = sigma;
        if eps > 0.0 {
            flat[2 * n + 1] = tau;
        }
    } else {
        flat[n] = sigma;
        flat[n + 1] = tau;
    }
    flat
}

#[test]
fn barrier_gradient_matches_finite_differences() {
    let configs = [(0.3, 0.4), (0.0, 0.4), (0.3, 0.0)];
    for (case, &(eps, lam)) in configs.iter().enumerate() {
        for trial in 0..7 {
            let seed = 1000 + 17 * case as u64 + trial;
            let rp = reduced_instance(seed, 4 + (trial as usize % 3) * 3, 3);
            let gamma = [1.0, 10.0, 100.0][trial as usize % 3];
            let probe = BarrierProbe::reduced(&rp.r, &rp.c, rp.s, eps, lam, gamma);
            let flat = interior_point(&probe, &rp, eps, lam, seed ^ 0x77);
            let grad = probe.gradient(&flat);
            let h = 1e-5;
            let mut fd = Vec64::zeros(flat.len());
            for i in 0..flat.len() {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[i] += h;
                minus[i] -= h;
                let fp = probe.value(&plus).expect("plus point interior");
                let fm = probe.value(&minus).expect("minus point interior");
                fd[i] = (fp - fm) / (2.0 * h);
            }
            let rel = (&grad - &fd).norm() / grad.norm().max(fd.norm()).max(1e-8);
            assert!(
                rel <= 1e-4,
                "case {case} trial {trial}: gradient FD mismatch {rel:.3e}"
            );
        }
    }
}

#[test]
fn barrier_hessian_vec_matches_finite_differences() {
    let configs = [(0.3, 0.4), (0.0, 0.4), (0.3, 0.0)];
    for (case, &(eps, lam)) in configs.iter().enumerate() {
        for trial in 0..7 {
            let seed = 2000 + 23 * case as u64 + trial;
            let n = 4 + (trial as usize % 4) * 4;
            let rp = reduced_instance(seed, n, 3);
            let gamma = [1.0, 10.0, 1000.0][trial as usize % 3];
            let probe = BarrierProbe::reduced(&rp.r, &rp.c, rp.s, eps, lam, gamma);
            let flat = interior_point(&probe, &rp, eps, lam, seed ^ 0x99);
            let dir = random_vec(seed ^ 0x1234, flat.len());
            let dir = &dir / dir.norm();
            let hv = probe.hessian_vec(&flat, &dir);
            let h = 1e-5;
            let plus = &flat + &dir * h;
            let minus = &flat - &dir * h;
            let gp = probe.gradient(&plus);
            let gm = probe.gradient(&minus);
            let fd = (gp - gm) / (2.0 * h);
            let rel = (&hv - &fd).norm() / hv.norm().max(fd.norm()).max(1e-8);
            assert!(
                rel <= 1e-4,
                "case {case} trial {trial}: hessian FD mismatch {rel:.3e}"
            );
        }
    }
}

#[test]
fn barrier_descends_monotonically_per_stage() {
    for trial in 0..6 {
        let rp = reduced_instance(3000 + trial, 12, 3);
        let design = Design::Stacked {
            r: &rp.r,
            c: &rp.c,
            s: rp.s,
        };
        let cfg = SolverConfig::default();
        let outcome = minimize(&design, 0.15, 0.25, &cfg).unwrap();
        assert!(outcome.converged, "trial {trial} failed to converge");
        for stage in &outcome.trace {
            for pair in stage.phi.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-10 * (1.0 + pair[0].abs()),
                    "φ increased within stage γ={}: {} -> {}",
                    stage.gamma,
                    pair[0],
                    pair[1]
                );
            }
        }
    }
}

#[test]
fn all_rows_screened_gives_zero_weight() {
    // Row norms below λ − ε force w = 0 and objective ‖(c, s)‖₂.
    let mut rp = reduced_instance(4000, 10, 3);
    rp.r *= 0.05; // all row norms tiny
    let eps = 0.1;
    let lam = 1.0;
    let cfg = SolverConfig::with_tol(1e-10);
    let sol = solve_reduced(&rp, eps, lam, &cfg).unwrap();
    let expect = (rp.c.norm_squared() + rp.s * rp.s).sqrt();
    assert!(sol.support.is_empty(), "support {:?}", sol.support);
    assert_relative_eq!(sol.objective, expect, epsilon = 1e-8);
    assert_eq!(sol.status, SolveStatus::Converged);
}

#[test]
fn unregularized_full_row_rank_reaches_floor() {
    // ε = λ = 0 with R of full row rank: the fit term can be zeroed and only
    // s remains.
    let rp = reduced_instance(4100, 9, 3);
    let sol = solve_reduced(&rp, 0.0, 0.0, &SolverConfig::default()).unwrap();
    assert_relative_eq!(sol.objective, rp.s, epsilon = 1e-9);
    assert!(sol.gap <= 1e-8);
}

#[test]
fn reduced_matches_reference_oracle() {
    for trial in 0..5 {
        let rp = reduced_instance(4200 + trial, 15, 3);
        let (eps, lam) = (0.1, 0.2);
        let cfg = SolverConfig::with_tol(1e-9);
        let sol = solve_reduced(&rp, eps, lam, &cfg).unwrap();
        let inst = GeneralizedInstance::from_reduced(&rp, eps, lam);
        let reference = reference_solve(&inst, 400_000, 7 + trial);
        assert!(
            (sol.objective - reference.objective).abs() <= 1e-4 * (1.0 + sol.objective),
            "trial {trial}: ip {} vs subgradient {}",
            sol.objective,
            reference.objective
        );
    }
}

#[test]
fn reduced_layouts_match_reference_oracle() {
    // λ = 0 (free layout) and ε = 0 (no-τ layout) paths.
    for (trial, &(eps, lam)) in [(0.25, 0.0), (0.0, 0.3)].iter().enumerate() {
        let rp = reduced_instance(4300 + trial as u64, 12, 3);
        let sol = solve_reduced(&rp, eps, lam, &SolverConfig::with_tol(1e-9)).unwrap();
        let inst = GeneralizedInstance::from_reduced(&rp, eps, lam);
        let reference = reference_solve(&inst, 400_000, 11 + trial as u64);
        assert!(
            (sol.objective - reference.objective).abs() <= 1e-4 * (1.0 + sol.objective),
            "case {trial}: ip {} vs subgradient {}",
            sol.objective,
            reference.objective
        );
    }
}

#[test]
fn gram_and_woodbury_backends_agree() {
    // ε = 0 reduced instance doubles as a full instance with X = [R 0].
    for trial in 0..4 {
        let rp = reduced_instance(4400 + trial, 14, 4);
        let lam = 0.3;
        let cfg = SolverConfig::with_tol(1e-10);
        let woodbury = solve_reduced(&rp, 0.0, lam, &cfg).unwrap();
        let mut x = Mat::zeros(14, 5);
        x.view_mut((0, 0), (14, 4)).copy_from(&rp.r);
        let mut y = Vec64::zeros(5);
        for l in 0..4 {
            y[l] = rp.c[l];
        }
        y[4] = rp.s;
        let gram = solve_full(&x, &y, lam, &cfg).unwrap();
        assert!(
            (woodbury.objective - gram.objective).abs() <= 1e-7 * (1.0 + woodbury.objective),
            "trial {trial}: woodbury {} vs gram {}",
            woodbury.objective,
            gram.objective
        );
        assert!((woodbury.w - gram.w).norm() <= 1e-5 * (1.0 + 1.0));
    }
}

#[test]
fn full_solver_screens_everything_at_large_lambda() {
    let x = random_mat(4500, 8, 20);
    let y = random_vec(4501, 20);
    let max_row_norm = (0..8).map(|i| x.row(i).norm()).fold(0.0f64, f64::max);
    let sol = solve_full(&x, &y, max_row_norm * 1.05, &SolverConfig::with_tol(1e-10)).unwrap();
    assert!(sol.support.is_empty());
    assert_relative_eq!(sol.objective, y.norm(), epsilon = 1e-8);
}

#[test]
fn full_solver_interpolates_identity() {
    let x = Mat::identity(4, 4);
    let mut y = Vec64::zeros(4);
    y[0] = 1.0;
    let sol = solve_full(&x, &y, 0.0, &SolverConfig::default()).unwrap();
    assert_relative_eq!(sol.w[0], 1.0, epsilon = 1e-10);
    assert!(sol.objective <= 1e-10);
}

#[test]
fn full_matches_reference_oracle() {
    for trial in 0..3 {
        let x = random_mat(4600 + trial, 10, 25);
        let y = random_vec(4700 + trial, 25);
        let lam = 0.3;
        let sol = solve_full(&x, &y, lam, &SolverConfig::with_tol(1e-9)).unwrap();
        let inst = GeneralizedInstance {
            a: x.transpose(),
            b: y.clone(),
            eps: 0.0,
            lam,
        };
        let reference = reference_solve(&inst, 400_000, 3 + trial);
        assert!(
            (sol.objective - reference.objective).abs() <= 1e-4 * (1.0 + sol.objective),
            "trial {trial}: ip {} vs subgradient {}",
            sol.objective,
            reference.objective
        );
    }
}

#[test]
fn reference_dominant_penalty_zeroes_w() {
    let inst = GeneralizedInstance {
        a: random_mat(4800, 6, 10),
        b: random_vec(4801, 6),
        eps: 0.0,
        lam: 1e6,
    };
    let sol = reference_solve(&inst, 20_000, 0);
    assert!(sol.w.amax() <= 1e-6);
    assert_relative_eq!(sol.objective, inst.b.norm(), epsilon = 1e-4);
}

#[test]
fn reference_identity_design() {
    let inst = GeneralizedInstance {
        a: Mat::identity(2, 2),
        b: Vec64::from_vec(vec![1.0, 0.0]),
        eps: 0.0,
        lam: 0.0,
    };
    let sol = reference_solve(&inst, 200_000, 1);
    assert!((sol.w[0] - 1.0).abs() <= 1e-3);
    assert!(sol.objective <= 1e-3);
}

#[test]
fn cross_agreement_on_random_small_instances() {
    // Both directions: the interior-point result is never much worse than the
    // subgradient incumbent and vice versa.
    for trial in 0..20 {
        let n = 6 + (trial as usize % 5) * 2;
        let k = 2 + (trial as usize % 3);
        let rp = reduced_instance(5000 + trial, n, k);
        let eps = 0.05 + 0.1 * ((trial % 4) as f64);
        let lam = 0.1 + 0.07 * ((trial % 5) as f64);
        let sol = solve_reduced(&rp, eps, lam, &SolverConfig::with_tol(1e-9)).unwrap();
        let inst = GeneralizedInstance::from_reduced(&rp, eps, lam);
        let reference = reference_solve(&inst, 150_000, trial);
        assert!(
            (sol.objective - reference.objective).abs() <= 1e-3 * (1.0 + sol.objective),
            "trial {trial}: ip {} vs subgradient {}",
            sol.objective,
            reference.objective
        );
        // The subgradient point must never beat the certified optimum by more
        // than its own tolerance.
        assert!(reference.objective >= sol.objective - 1e-3 * (1.0 + sol.objective));
    }
}

#[test]
fn objective_recomputation_is_exact() {
    let rp = reduced_instance(5100, 12, 3);
    let (eps, lam) = (0.15, 0.2);
    let sol = solve_reduced(&rp, eps, lam, &SolverConfig::default()).unwrap();
    let inst = GeneralizedInstance::from_reduced(&rp, eps, lam);
    let direct = inst.objective(&sol.w);
    assert!((sol.objective - direct).abs() <= 1e-10 * (1.0 + direct));
}

#[test]
fn dual_certificate_is_feasible_and_tight() {
    for trial in 0..8 {
        let n = 8 + (trial as usize % 4) * 3;
        let rp = reduced_instance(5200 + trial, n, 3);
        let eps = if trial % 3 == 0 { 0.0 } else { 0.12 };
        let lam = if trial % 4 == 0 { 0.0 } else { 0.25 };
        let tol = 1e-8;
        let (sol, dual) =
            solve_reduced_certified(&rp, eps, lam, &SolverConfig::with_tol(tol)).unwrap();
        assert!(dual.feasible, "trial {trial}: dual certificate infeasible");
        assert!(dual.u.norm() <= 1.0 + 1e-9);
        assert!(
            sol.gap <= 10.0 * tol * (1.0 + sol.objective),
            "trial {trial}: gap {} too large (obj {})",
            sol.gap,
            sol.objective
        );
        // Weak duality between the certificate and the primal value.
        assert!(dual.value <= sol.objective + 1e-9 * (1.0 + sol.objective));
    }
}

#[test]
fn random_feasible_duals_stay_below_primal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5300);
    for trial in 0..10 {
        let rp = reduced_instance(5301 + trial, 10, 3);
        let (eps, lam) = (0.2, 0.3);
        let sol = solve_reduced(&rp, eps, lam, &SolverConfig::with_tol(1e-9)).unwrap();
        let mut checked = 0;
        while checked < 25 {
            let raw = Vec64::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let u = &raw * (rng.random::<f64>() / raw.norm().max(1e-12));
            let (feasible, _, _) = reduction::dual_feasible(&u, &rp, eps, lam);
            if feasible {
                let value = reduction::dual_value(&u, &rp).unwrap();
                assert!(
                    value <= sol.objective + 1e-6,
                    "trial {trial}: dual {} above primal {}",
                    value,
                    sol.objective
                );
                checked += 1;
            } else {
                checked += 1;
            }
        }
    }
}

#[test]
fn empty_feature_set_is_handled() {
    let rp = ReducedProblem {
        r: Mat::zeros(0, 3),
        c: Vec64::from_vec(vec![0.6, 0.0, 0.0]),
        s: 0.8,
        n_features: 0,
        kept: None,
        rank_deficient: false,
    };
    let sol = solve_reduced(&rp, 0.1, 0.5, &SolverConfig::default()).unwrap();
    assert_eq!(sol.w.len(), 0);
    assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-12);
    assert!(sol.gap <= 1e-9);
}

#[test]
fn screened_solve_matches_unscreened() {
    for trial in 0..10 {
        let n = 12 + (trial as usize % 4) * 4;
        let k = 2 + (trial as usize % 4);
        let mut rp = reduced_instance(5400 + trial, n, k);
        // Shrink a random subset of rows below the screening threshold.
        let mut rng = ChaCha8Rng::seed_from_u64(5500 + trial);
        for i in 0..n {
            if rng.random::<f64>() < 0.4 {
                let scale = 0.02 / rp.r.row(i).norm().max(1e-12);
                let mut row = rp.r.row_mut(i);
                row *= scale;
            }
        }
        let (eps, lam) = (0.1, 0.45);
        let cfg = SolverConfig::with_tol(1e-10);
        let full = solve_reduced(&rp, eps, lam, &cfg).unwrap();
        let kept = reduction::screen(&rp, eps, lam);
        let restricted = rp.restrict(&kept);
        let small = solve_reduced(&restricted, eps, lam, &cfg).unwrap();
        let padded = reduction::scatter_solution(&small.w, restricted.kept.as_deref(), n);
        let padded_obj = rp.objective(&padded, eps, lam);
        assert!(
            (full.objective - small.objective).abs() <= 1e-6 * (1.0 + full.objective),
            "trial {trial}: screened {} vs full {}",
            small.objective,
            full.objective
        );
        assert!((padded_obj - full.objective).abs() <= 1e-6 * (1.0 + full.objective));
    }
}
