use cavi_core::analysis::{
    analyze_run, bound_is_global, gauss_mean_prec_local_bound, gcorr_bound, gcorr_empirical, kappa, rho_hat_diagnostic,
    schedule_kappa, spectral_radius_mean_dynamics, two_stage_contraction, verify_contraction, EmpiricalOptions,
    Verdict, DEFAULT_OMEGA,
};
use cavi_core::divergences::BlockDensity;
use cavi_core::models::{fixed_point, generate_data, perturbed_init, DataSpec, MeanFieldState, ModelSpec};
use cavi_core::scheduler::{run, DiagnosticRow, RunOptions, RunOutcome, Schedule, Trajectory};
use cavi_core::{CaviError, Execution};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn gaussian(rho: f64) -> ModelSpec {
    ModelSpec::GaussianBlocks {
        theta0: vec![0.0, 0.0],
        q: DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
        partition: vec![1, 1],
        n_scale: 1.0,
    }
}

fn probit(n: usize, p: usize, orthogonal: bool, seed: u64) -> ModelSpec {
    generate_data(
        &DataSpec::Probit {
            n,
            p,
            beta_true: None,
            kappa: 1.0,
            orthogonal,
        },
        seed,
    )
    .unwrap()
}

fn gauss_mean_prec(n: usize, seed: u64) -> ModelSpec {
    generate_data(
        &DataSpec::GaussMeanPrec {
            n,
            mu_true: 1.0,
            tau_true: 2.0,
            kappa: 1.0,
            a0: 1.0,
            b0: 1.0,
        },
        seed,
    )
    .unwrap()
}

fn trajectory(totals: &[f64], outcome: RunOutcome) -> Trajectory {
    let rows = totals
        .iter()
        .enumerate()
        .map(|(t, &d)| DiagnosticRow {
            iter: t,
            d_half_blocks: vec![d],
            d_half_total: d,
            ratio: (t > 0).then(|| d / totals[t - 1]),
            objective_gap: None,
        })
        .collect();
    Trajectory {
        states: Vec::new(),
        rows,
        stop_tol: 1e-12,
        outcome,
        note: None,
    }
}

#[test]
fn kappa_examples() {
    assert!(close(kappa(1.0, 2).unwrap(), 0.25, 1e-15));
    assert!(close(kappa(1.0, 3).unwrap(), 0.5, 1e-15));
    assert!(close(kappa(0.8, 5).unwrap(), 0.64, 1e-15));
    assert!(kappa(1.0, 1).is_err());
    assert!(kappa(-0.1, 2).is_err());
    assert!(kappa(f64::NAN, 2).is_err());
    assert!(kappa(f64::INFINITY, 2).is_err());
}

#[test]
fn schedule_kappa_rules() {
    assert_eq!(schedule_kappa(0.5, &Schedule::Parallel), Some(0.5));
    assert_eq!(schedule_kappa(0.5, &Schedule::sequential()), Some(0.75));
    assert_eq!(schedule_kappa(0.5, &Schedule::Randomized { seed: 1 }), None);
    let lazy = Schedule::Lazy {
        base: Box::new(Schedule::Parallel),
        alpha: 0.5,
    };
    assert_eq!(schedule_kappa(0.5, &lazy), None);
}

#[test]
fn gcorr_bound_examples() {
    assert!(close(gcorr_bound(&gaussian(0.5)).unwrap().unwrap(), 1.0, 1e-12));
    let gc = gcorr_bound(&ModelSpec::GaussConditionals).unwrap().unwrap();
    assert!(close(gc, 4.0 / (1.0 + 5f64.sqrt()), 1e-15));
    for p in [0.1, 0.5, 0.7, 0.95] {
        let g = gcorr_bound(&ModelSpec::Discrete2d { p }).unwrap().unwrap();
        assert!(close(g, (p / (1.0 - p)).ln().abs(), 1e-12));
    }
    for (d, rho) in [(3, 0.2), (5, 0.1), (10, -0.05)] {
        let g = gcorr_bound(&ModelSpec::CompoundSymmetry { d, rho }).unwrap().unwrap();
        assert!(close(g, 2.0 * f64::abs(rho) * ((d - 1) as f64).sqrt(), 1e-12));
    }
    let model = gmm2();
    assert_eq!(gcorr_bound(&model).unwrap(), None);
    assert!(!bound_is_global(&model));
    assert!(!bound_is_global(&gauss_mean_prec(30, 1)));
    assert!(bound_is_global(&gaussian(0.3)));
}

#[test]
fn probit_orthogonal_bound_is_closed_form() {
    for (n, p) in [(40, 2), (200, 5), (64, 8)] {
        let model = probit(n, p, true, 3);
        let g = gcorr_bound(&model).unwrap().unwrap();
        let expected = 2.0 * (n as f64 / (n as f64 + 1.0)).sqrt();
        assert!(close(g, expected, 1e-10), "n={n} p={p}: {g} vs {expected}");
    }
}

#[test]
fn probit_bound_is_below_two() {
    for seed in 0..5 {
        let g = gcorr_bound(&probit(50, 4, false, seed)).unwrap().unwrap();
        assert!(g > 0.0 && g < 2.0, "{g}");
    }
}

#[test]
fn spectral_radius_examples() {
    assert!(close(spectral_radius_mean_dynamics(&gaussian(0.5)).unwrap(), 0.25, 1e-12));
    assert!(close(
        spectral_radius_mean_dynamics(&ModelSpec::CompoundSymmetry { d: 3, rho: 0.4 }).unwrap(),
        0.8,
        1e-15
    ));
    for rho in [-0.7, 0.2, 0.9] {
        let r = spectral_radius_mean_dynamics(&ModelSpec::CompoundSymmetry { d: 2, rho }).unwrap();
        assert!(close(r, f64::abs(rho), 1e-15));
    }
    assert!(spectral_radius_mean_dynamics(&ModelSpec::GaussConditionals).is_err());
}

#[test]
fn compound_symmetry_kappa_is_squared_spectral_radius() {
    for (d, rho) in [(3, 0.2), (5, 0.15), (10, 0.1), (4, -0.3)] {
        let model = ModelSpec::CompoundSymmetry { d, rho };
        let k = kappa(gcorr_bound(&model).unwrap().unwrap(), d).unwrap();
        let r = spectral_radius_mean_dynamics(&model).unwrap();
        assert!(close(k, r * r, 1e-12), "d={d} rho={rho}: {k} vs {}", r * r);
    }
}

#[test]
fn multi_block_gaussian_matches_compound_symmetry() {
    let d = 4;
    let rho = 0.2;
    let q = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
    let blocks = ModelSpec::GaussianBlocks {
        theta0: vec![0.0; d],
        q,
        partition: vec![1; d],
        n_scale: 1.0,
    };
    let cs = ModelSpec::CompoundSymmetry { d, rho };
    assert!(close(gcorr_bound(&blocks).unwrap().unwrap(), gcorr_bound(&cs).unwrap().unwrap(), 1e-12));
    assert!(close(
        spectral_radius_mean_dynamics(&blocks).unwrap(),
        spectral_radius_mean_dynamics(&cs).unwrap(),
        1e-12
    ));
}

#[test]
fn rho_hat_examples() {
    let r = rho_hat_diagnostic(&DMatrix::identity(2, 2)).unwrap();
    assert_eq!(r.rho_hat, 0.0);
    assert!(r.certified);
    assert_eq!(r.kappa_onesided, Some(0.0));
    let r = rho_hat_diagnostic(&DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
    assert!(close(r.rho_hat, 0.5, 1e-15));
    assert!(close(r.gamma, 1.0, 1e-15));
    assert!(!r.certified);
    let r = rho_hat_diagnostic(&DMatrix::from_row_slice(2, 2, &[1.0, 0.99, 0.99, 1.0])).unwrap();
    assert!(!r.certified);
    assert_eq!(r.kappa_onesided, None);
    let r = rho_hat_diagnostic(&DMatrix::from_row_slice(2, 2, &[4.0, -0.4, -0.4, 1.0])).unwrap();
    assert!(close(r.rho_hat, 0.2, 1e-15));
    assert!(close(r.kappa_onesided.unwrap(), 0.4 / 1.6, 1e-15));
}

#[test]
fn rho_hat_rejects_bad_input() {
    let bad = [
        DMatrix::identity(3, 3),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]),
    ];
    for m in bad {
        assert!(rho_hat_diagnostic(&m).is_err(), "{m}");
    }
}

#[test]
fn verdict_rules() {
    let conv = trajectory(&[1.0, 0.5, 0.25, 1e-13], RunOutcome::Converged);
    assert_eq!(verify_contraction(&conv, Some(0.5)).unwrap().verdict, Verdict::Converged);
    assert_eq!(verify_contraction(&conv, Some(0.4)).unwrap().verdict, Verdict::Inconclusive);
    assert_eq!(verify_contraction(&conv, Some(1.5)).unwrap().verdict, Verdict::Converged);
    assert_eq!(verify_contraction(&conv, None).unwrap().verdict, Verdict::Converged);
    let slack = trajectory(&[1.0, 0.5 + 5e-10, 1e-13], RunOutcome::Converged);
    assert_eq!(verify_contraction(&slack, Some(0.5)).unwrap().verdict, Verdict::Converged);
    let div = trajectory(&[1.0, 2.0, 4.0], RunOutcome::Diverged);
    assert_eq!(verify_contraction(&div, Some(0.5)).unwrap().verdict, Verdict::Diverged);
    let stuck = trajectory(&[1.0, 0.9, 0.81], RunOutcome::MaxIter);
    let report = verify_contraction(&stuck, None).unwrap();
    assert_eq!(report.verdict, Verdict::Inconclusive);
    assert!(!report.notes.is_empty());
    assert!(close(report.empirical_max_ratio, 0.9, 1e-15));
    assert_eq!(report.iterations, 2);
}

#[test]
fn degenerate_trajectories_are_errors() {
    let empty = Trajectory {
        states: Vec::new(),
        rows: Vec::new(),
        stop_tol: 0.0,
        outcome: RunOutcome::MaxIter,
        note: None,
    };
    assert!(matches!(verify_contraction(&empty, None), Err(CaviError::DegenerateTrajectory(_))));
    let flat = trajectory(&[0.0, 0.0], RunOutcome::MaxIter);
    let mut flat = flat;
    flat.rows[1].ratio = None;
    assert!(matches!(verify_contraction(&flat, None), Err(CaviError::DegenerateTrajectory(_))));
}

#[test]
fn analyze_run_fills_model_fields() {
    let model = ModelSpec::CompoundSymmetry { d: 5, rho: 0.2 };
    let qstar = fixed_point(&model).unwrap();
    let init = perturbed_init(&model, &qstar, 1.0).unwrap();
    let traj = run(&model, &Schedule::Parallel, &init, &qstar, &RunOptions::default()).unwrap();
    let report = analyze_run(&model, &Schedule::Parallel, &traj).unwrap();
    assert_eq!(report.verdict, Verdict::Converged);
    assert_eq!(report.model.as_deref(), Some("compound_symmetry"));
    assert_eq!(report.schedule.as_deref(), Some("parallel"));
    assert!(close(report.kappa.unwrap(), 0.64, 1e-12));
    assert_eq!(report.kappa_checked, report.kappa);
    assert!(close(report.spectral_radius.unwrap(), 0.8, 1e-12));
    let json = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<cavi_core::analysis::ContractionReport>(&json).unwrap(), report);

    let gmp = gauss_mean_prec(40, 3);
    let qstar = fixed_point(&gmp).unwrap();
    let init = perturbed_init(&gmp, &qstar, 1.0).unwrap();
    let traj = run(&gmp, &Schedule::Parallel, &init, &qstar, &RunOptions::default()).unwrap();
    let report = analyze_run(&gmp, &Schedule::Parallel, &traj).unwrap();
    assert!(report.kappa.is_some());
    assert_eq!(report.kappa_checked, None);
}

#[test]
fn empirical_search_rejects_bad_options() {
    let model = gaussian(0.5);
    let qstar = fixed_point(&model).unwrap();
    let base = EmpiricalOptions {
        budget: 100,
        ..EmpiricalOptions::default()
    };
    let cases = [
        EmpiricalOptions { budget: 0, ..base.clone() },
        EmpiricalOptions { r0: 0.0, ..base.clone() },
        EmpiricalOptions {
            alpha_grid: vec![],
            ..base.clone()
        },
        EmpiricalOptions {
            alpha_grid: vec![0.5, 1.2],
            ..base.clone()
        },
    ];
    for opts in cases {
        assert!(gcorr_empirical(&model, &qstar, &opts, Execution::Sequential).is_err());
    }
}

#[test]
fn empirical_search_is_execution_independent() {
    let model = ModelSpec::CompoundSymmetry { d: 3, rho: 0.3 };
    let qstar = fixed_point(&model).unwrap();
    let opts = EmpiricalOptions {
        budget: 600,
        seed: 5,
        ..EmpiricalOptions::default()
    };
    let a = gcorr_empirical(&model, &qstar, &opts, Execution::Parallel).unwrap();
    let b = gcorr_empirical(&model, &qstar, &opts, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert!(a.evaluations > 0);
}

#[test]
fn empirical_search_approaches_gaussian_bound() {
    let model = gaussian(0.5);
    let qstar = fixed_point(&model).unwrap();
    let opts = EmpiricalOptions {
        budget: 4000,
        ..EmpiricalOptions::default()
    };
    let emp = gcorr_empirical(&model, &qstar, &opts, Execution::default()).unwrap();
    assert!(emp.value <= 1.0 + 1e-6);
    assert!(emp.value >= 0.9, "{}", emp.value);
}

#[test]
fn gauss_mean_prec_local_bound_dominates_observed_ratios() {
    let model = gauss_mean_prec(200, 4);
    let qstar = fixed_point(&model).unwrap();
    let local = gauss_mean_prec_local_bound(&model, &qstar, DEFAULT_OMEGA).unwrap();
    assert!(local.r0 > 0.0 && local.s_min > 0.0 && local.b_min > 0.0);
    assert_eq!(local.gcorr_bound, local.location_term.max(local.scale_term));
    assert!(local.gcorr_bound < 2.0);
    let opts = EmpiricalOptions {
        r0: local.r0,
        budget: 2000,
        seed: 1,
        ..EmpiricalOptions::default()
    };
    let emp = gcorr_empirical(&model, &qstar, &opts, Execution::default()).unwrap();
    assert!(emp.value <= local.gcorr_bound + 1e-6, "{} vs {}", emp.value, local.gcorr_bound);
    let k = kappa(local.gcorr_bound, 2).unwrap();
    let init = perturbed_init(&model, &qstar, 0.1).unwrap();
    let traj = run(&model, &Schedule::Parallel, &init, &qstar, &RunOptions::default()).unwrap();
    assert_eq!(traj.outcome, RunOutcome::Converged);
    for r in traj.ratios() {
        assert!(r <= k + 1e-9, "{r} vs {k}");
    }
}

fn gmm2() -> ModelSpec {
    generate_data(
        &DataSpec::Gmm2 {
            n: 500,
            mu_true: 4.0,
            tau0: 1.0,
            truncate: Some(0.5),
        },
        7,
    )
    .unwrap()
}

#[test]
fn mixture_two_stage_contraction() {
    let model = gmm2();
    let qstar = fixed_point(&model).unwrap();
    let init = MeanFieldState::new(vec![BlockDensity::uni_normal(3.0, 500.0).unwrap(), qstar.blocks[1].clone()]);
    let traj = run(&model, &Schedule::sequential(), &init, &qstar, &RunOptions::default()).unwrap();
    let report = two_stage_contraction(&model, &traj).unwrap();
    assert!(report.product < 1.0, "{}", report.product);
    assert!(close(report.product, report.kappa1 * report.kappa2, 1e-15));
    for (t, r) in report.location_ratios.iter().enumerate().skip(1) {
        assert!(*r <= report.product + 1e-6, "epoch {t}: {r} vs {}", report.product);
    }
    assert!(two_stage_contraction(&gaussian(0.3), &traj).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn empirical_gaussian_gcorr_never_exceeds_bound(rho in -0.9f64..0.9, seed in 0u64..1000) {
        let model = gaussian(rho);
        let qstar = fixed_point(&model).unwrap();
        let opts = EmpiricalOptions { budget: 400, seed, ..EmpiricalOptions::default() };
        let emp = gcorr_empirical(&model, &qstar, &opts, Execution::default()).unwrap();
        let bound = gcorr_bound(&model).unwrap().unwrap();
        prop_assert!(emp.value <= bound + 1e-6, "{} vs {}", emp.value, bound);
    }

    #[test]
    fn empirical_discrete_gcorr_never_exceeds_bound(p in 0.05f64..0.95, seed in 0u64..1000) {
        let model = ModelSpec::Discrete2d { p };
        let qstar = fixed_point(&model).unwrap();
        let opts = EmpiricalOptions { budget: 400, seed, ..EmpiricalOptions::default() };
        let emp = gcorr_empirical(&model, &qstar, &opts, Execution::default()).unwrap();
        let bound = gcorr_bound(&model).unwrap().unwrap();
        prop_assert!(emp.value <= bound + 1e-6, "{} vs {}", emp.value, bound);
    }

    #[test]
    fn kappa_is_monotone_in_gcorr(a in 0.0f64..3.0, b in 0.0f64..3.0, d in 2usize..12) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(kappa(lo, d).unwrap() <= kappa(hi, d).unwrap());
    }
}
