use cavi_core::divergences::{d_half, kl, BlockDensity, Side};
use cavi_core::models::{
    block_update, default_start, delta_block_vs_rest, delta_n, fixed_point, generate_data, objective_gap,
    perturbed_init, DataSpec, MeanFieldState, ModelSpec,
};
use cavi_core::CaviError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const GOLDEN: f64 = 1.618_033_988_749_895;

fn uni(m: f64, t: f64) -> BlockDensity {
    BlockDensity::uni_normal(m, t).unwrap()
}

fn two_point(u: f64) -> BlockDensity {
    BlockDensity::two_point(u).unwrap()
}

fn gaussian_half() -> ModelSpec {
    ModelSpec::GaussianBlocks {
        theta0: vec![0.0, 0.0],
        q: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        partition: vec![1, 1],
        n_scale: 1.0,
    }
}

fn probit() -> ModelSpec {
    generate_data(
        &DataSpec::Probit {
            n: 60,
            p: 3,
            beta_true: None,
            kappa: 1.0,
            orthogonal: false,
        },
        5,
    )
    .unwrap()
}

fn gauss_mean_prec() -> ModelSpec {
    generate_data(
        &DataSpec::GaussMeanPrec {
            n: 40,
            mu_true: 1.0,
            tau_true: 2.0,
            kappa: 1.0,
            a0: 1.0,
            b0: 1.0,
        },
        9,
    )
    .unwrap()
}

fn gmm2() -> ModelSpec {
    generate_data(
        &DataSpec::Gmm2 {
            n: 80,
            mu_true: 4.0,
            tau0: 1.0,
            truncate: Some(0.5),
        },
        2,
    )
    .unwrap()
}

fn all_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Discrete2d { p: 0.7 },
        gaussian_half(),
        ModelSpec::GaussConditionals,
        probit(),
        gauss_mean_prec(),
        gmm2(),
        ModelSpec::CompoundSymmetry { d: 4, rho: 0.2 },
    ]
}

#[test]
fn gauss_conditionals_update_example() {
    let state = MeanFieldState::new(vec![uni(0.0, 3.0), uni(0.0, 1.0)]);
    assert_eq!(block_update(&ModelSpec::GaussConditionals, &state, 0).unwrap(), uni(0.0, 2.0));
}

#[test]
fn independent_discrete_target_gives_uniform_blocks() {
    let m = ModelSpec::Discrete2d { p: 0.5 };
    let state = MeanFieldState::new(vec![two_point(0.9), two_point(0.2)]);
    for j in 0..2 {
        assert_eq!(block_update(&m, &state, j).unwrap(), two_point(0.5));
    }
}

#[test]
fn compound_symmetry_update_example() {
    let m = ModelSpec::CompoundSymmetry { d: 3, rho: 0.2 };
    let state = MeanFieldState::new(vec![uni(1.0, 1.0); 3]);
    let b = block_update(&m, &state, 0).unwrap();
    let BlockDensity::UniNormal { mean, precision } = b else { panic!("{b:?}") };
    assert!((mean + 0.4).abs() < 1e-15);
    assert_eq!(precision, 1.0);
}

#[test]
fn block_index_out_of_range() {
    let m = gaussian_half();
    let s = fixed_point(&m).unwrap();
    assert!(matches!(block_update(&m, &s, 2), Err(CaviError::BlockIndex { .. })));
}

#[test]
fn family_mismatch_is_reported() {
    let m = ModelSpec::Discrete2d { p: 0.7 };
    let s = MeanFieldState::new(vec![uni(0.0, 1.0), two_point(0.5)]);
    assert!(matches!(block_update(&m, &s, 1), Err(CaviError::FamilyMismatch { .. })));
}

#[test]
fn closed_form_fixed_points() {
    let gc = fixed_point(&ModelSpec::GaussConditionals).unwrap();
    for b in &gc.blocks {
        let BlockDensity::UniNormal { mean, precision } = b else { panic!() };
        assert_eq!(*mean, 0.0);
        assert!((precision - GOLDEN).abs() < 1e-14);
    }
    assert_eq!(fixed_point(&gaussian_half()).unwrap().blocks, vec![uni(0.0, 1.0), uni(0.0, 1.0)]);
    assert_eq!(
        fixed_point(&ModelSpec::Discrete2d { p: 0.7 }).unwrap().blocks,
        vec![two_point(0.5), two_point(0.5)]
    );
}

#[test]
fn gaussian_fixed_point_scales_with_n() {
    let m = ModelSpec::GaussianBlocks {
        theta0: vec![1.0, -2.0, 0.5],
        q: DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]),
        partition: vec![1, 2],
        n_scale: 10.0,
    };
    let s = fixed_point(&m).unwrap();
    assert_eq!(s.blocks[0], uni(1.0, 20.0));
    let BlockDensity::MvNormal { mean, precision } = &s.blocks[1] else { panic!() };
    assert_eq!(mean.as_slice(), &[-2.0, 0.5]);
    assert_eq!(precision, &DMatrix::from_row_slice(2, 2, &[10.0, 2.0, 2.0, 15.0]));
}

#[test]
fn every_fixed_point_is_stationary() {
    for m in all_models() {
        let s = fixed_point(&m).unwrap();
        for j in 0..m.num_blocks() {
            let b = block_update(&m, &s, j).unwrap();
            let d = d_half(&b, &s.blocks[j]).unwrap();
            assert!(d <= 1e-10, "{} block {j}: {d:e}", m.name());
        }
    }
}

#[test]
fn updates_stay_in_family() {
    for m in all_models() {
        let qs = fixed_point(&m).unwrap();
        let s = perturbed_init(&m, &qs, 2.0).unwrap();
        for j in 0..m.num_blocks() {
            let b = block_update(&m, &s, j).unwrap();
            assert_eq!(b.family_name(), s.blocks[j].family_name(), "{}", m.name());
            assert_eq!(b.dim(), s.blocks[j].dim());
        }
    }
}

#[test]
fn probit_precision_never_changes() {
    let m = probit();
    let qs = fixed_point(&m).unwrap();
    let BlockDensity::MvNormal { precision: fixed, .. } = &qs.blocks[0] else { panic!() };
    let mut s = perturbed_init(&m, &qs, 3.0).unwrap();
    for _ in 0..5 {
        let b = block_update(&m, &s, 0).unwrap();
        let BlockDensity::MvNormal { precision, .. } = &b else { panic!() };
        assert_eq!(precision, fixed);
        s.blocks[0] = b;
        s.blocks[1] = block_update(&m, &s, 1).unwrap();
    }
}

#[test]
fn delta_examples() {
    let m = gaussian_half();
    let qs = fixed_point(&m).unwrap();
    let q = MeanFieldState::new(vec![uni(1.0, 1.0), uni(1.0, 1.0)]);
    assert!((delta_n(&m, &q, &qs).unwrap() + 0.5).abs() < 1e-15);
    assert!((objective_gap(&m, &q, &qs).unwrap() - 1.5).abs() < 1e-15);
    assert!((delta_block_vs_rest(&m, &q, &qs, 0).unwrap() + 0.5).abs() < 1e-15);

    let d = ModelSpec::Discrete2d { p: 0.7 };
    let q = MeanFieldState::new(vec![two_point(0.4), two_point(0.4)]);
    let want = 0.02 * (3.0f64 / 7.0).ln();
    assert!((delta_n(&d, &q, &fixed_point(&d).unwrap()).unwrap() - want).abs() < 1e-15);

    let gc = ModelSpec::GaussConditionals;
    let qs = fixed_point(&gc).unwrap();
    let q = MeanFieldState::new(vec![uni(0.0, 2.0), uni(0.0, 2.0)]);
    let want = -0.5 * (0.5 - 1.0 / GOLDEN).powi(2);
    assert!((delta_n(&gc, &q, &qs).unwrap() - want).abs() < 1e-15);
}

#[test]
fn delta_at_optimum_is_zero() {
    for m in all_models().into_iter().filter(|m| m.num_blocks() == 2) {
        let qs = fixed_point(&m).unwrap();
        assert_eq!(delta_n(&m, &qs, &qs).unwrap(), 0.0, "{}", m.name());
        assert_eq!(objective_gap(&m, &qs, &qs).unwrap(), 0.0);
    }
}

#[test]
fn delta_n_needs_two_blocks() {
    let m = ModelSpec::CompoundSymmetry { d: 3, rho: 0.1 };
    let qs = fixed_point(&m).unwrap();
    assert!(matches!(delta_n(&m, &qs, &qs), Err(CaviError::NotTwoBlock(_))));
}

#[test]
fn objective_gap_with_one_block_at_optimum_is_its_kl() {
    for m in all_models().into_iter().filter(|m| m.num_blocks() == 2) {
        let qs = fixed_point(&m).unwrap();
        let moved = perturbed_init(&m, &qs, 1.5).unwrap();
        for j in 0..2 {
            let mut s = qs.clone();
            s.blocks[j] = moved.blocks[j].clone();
            let gap = objective_gap(&m, &s, &qs).unwrap();
            let want = kl(&s.blocks[j], &qs.blocks[j]).unwrap();
            assert!((gap - want).abs() <= 1e-12 * want.max(1.0), "{} block {j}: {gap} vs {want}", m.name());
        }
    }
}

#[test]
fn generate_data_is_deterministic() {
    let spec = DataSpec::Gmm2 {
        n: 30,
        mu_true: 3.0,
        tau0: 1.0,
        truncate: None,
    };
    assert_eq!(generate_data(&spec, 4).unwrap(), generate_data(&spec, 4).unwrap());
    assert_ne!(generate_data(&spec, 4).unwrap(), generate_data(&spec, 5).unwrap());
}

#[test]
fn probit_null_coefficients_give_balanced_labels() {
    let m = generate_data(
        &DataSpec::Probit {
            n: 200,
            p: 5,
            beta_true: Some(vec![0.0; 5]),
            kappa: 1.0,
            orthogonal: false,
        },
        3,
    )
    .unwrap();
    let ModelSpec::Probit { y, .. } = m else { panic!() };
    let mean = y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
    assert!((0.4..=0.6).contains(&mean), "{mean}");
}

#[test]
fn orthogonal_probit_design() {
    let m = generate_data(
        &DataSpec::Probit {
            n: 50,
            p: 4,
            beta_true: None,
            kappa: 1.0,
            orthogonal: true,
        },
        8,
    )
    .unwrap();
    let ModelSpec::Probit { x, .. } = m else { panic!() };
    let gram = x.transpose() * &x;
    assert!((gram - DMatrix::identity(4, 4) * 50.0).amax() < 1e-10);
}

#[test]
fn gauss_mean_prec_sample_mean() {
    let m = generate_data(
        &DataSpec::GaussMeanPrec {
            n: 500,
            mu_true: 2.0,
            tau_true: 1.0,
            kappa: 1.0,
            a0: 1.0,
            b0: 1.0,
        },
        1,
    )
    .unwrap();
    let ModelSpec::GaussMeanPrec { x, .. } = m else { panic!() };
    let mean = x.iter().sum::<f64>() / 500.0;
    assert!((mean - 2.0).abs() <= 3.0 / 500f64.sqrt());
}

#[test]
fn truncated_mixture_noise() {
    let ModelSpec::Gmm2 { x, .. } = gmm2() else { panic!() };
    assert!(x.iter().all(|&v| v.abs() <= 0.5 || (v - 4.0).abs() <= 0.5));
}

#[test]
fn model_validation() {
    assert!(ModelSpec::Discrete2d { p: 1.0 }.validate().is_err());
    assert!(ModelSpec::CompoundSymmetry { d: 4, rho: -0.4 }.validate().is_err());
    assert!(ModelSpec::CompoundSymmetry { d: 1, rho: 0.0 }.validate().is_err());
    assert!(ModelSpec::CompoundSymmetry { d: 4, rho: 0.9 }.validate().is_ok());
    let bad_partition = ModelSpec::GaussianBlocks {
        theta0: vec![0.0, 0.0],
        q: DMatrix::identity(2, 2),
        partition: vec![1, 2],
        n_scale: 1.0,
    };
    assert!(bad_partition.validate().is_err());
    let not_pd = ModelSpec::GaussianBlocks {
        theta0: vec![0.0, 0.0],
        q: DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]),
        partition: vec![1, 1],
        n_scale: 1.0,
    };
    assert!(not_pd.validate().is_err());
    let labels = ModelSpec::Probit {
        x: DMatrix::identity(2, 2),
        y: vec![0, 2],
        kappa: 1.0,
    };
    assert!(labels.validate().is_err());
}

#[test]
fn with_param_updates_and_validates() {
    let m = ModelSpec::CompoundSymmetry { d: 3, rho: 0.1 };
    assert_eq!(m.with_param("rho", 0.3).unwrap(), ModelSpec::CompoundSymmetry { d: 3, rho: 0.3 });
    assert_eq!(m.with_param("d", 6.0).unwrap(), ModelSpec::CompoundSymmetry { d: 6, rho: 0.1 });
    assert!(m.with_param("rho", 2.0).is_err());
    assert!(m.with_param("p", 0.5).is_err());
    let d = ModelSpec::Discrete2d { p: 0.3 };
    assert_eq!(d.with_param("p", 0.8).unwrap(), ModelSpec::Discrete2d { p: 0.8 });
}

#[test]
fn model_json_round_trip() {
    for m in all_models() {
        let text = serde_json::to_string(&m).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
    let parsed: ModelSpec =
        serde_json::from_str(r#"{"type":"gaussian_blocks","theta0":[0,0],"q":[[1,0.5],[0.5,1]],"partition":[1,1]}"#)
            .unwrap();
    assert_eq!(parsed, gaussian_half());
}

#[test]
fn perturbed_init_moves_means_by_standard_deviations() {
    let m = gaussian_half();
    let qs = fixed_point(&m).unwrap();
    let s = perturbed_init(&m, &qs, 5.0).unwrap();
    assert_eq!(s.blocks, vec![uni(5.0, 1.0), uni(5.0, 1.0)]);
    assert_eq!(perturbed_init(&m, &qs, 0.0).unwrap(), qs);
    assert!(perturbed_init(&m, &qs, f64::NAN).is_err());
}

#[test]
fn default_starts_are_valid() {
    for m in all_models() {
        let s = default_start(&m).unwrap();
        m.check_state(&s).unwrap();
    }
}

#[test]
fn probit_sides_must_match_labels() {
    let m = ModelSpec::Probit {
        x: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        y: vec![1, 0],
        kappa: 1.0,
    };
    let beta = BlockDensity::mv_normal(DVector::zeros(2), DMatrix::identity(2, 2) * 2.0).unwrap();
    let wrong = BlockDensity::product_trunc_normal(vec![0.0, 0.0], vec![Side::Negative, Side::Positive]).unwrap();
    assert!(m.check_state(&MeanFieldState::new(vec![beta, wrong])).is_err());
}

fn block_strategy(model: &ModelSpec, j: usize) -> BoxedStrategy<BlockDensity> {
    match (model, j) {
        (ModelSpec::Discrete2d { .. }, _) => (0.01..0.99f64).prop_map(two_point).boxed(),
        (ModelSpec::GaussianBlocks { .. }, _) => (-4.0..4.0f64).prop_map(|m| uni(m, 1.0)).boxed(),
        (ModelSpec::GaussConditionals, _) => (-2.0..2.0f64, 0.2..5.0f64).prop_map(|(m, t)| uni(m, t)).boxed(),
        (ModelSpec::Probit { x, .. }, 0) => {
            let k = x.ncols();
            prop::collection::vec(-2.0..2.0f64, k)
                .prop_map(move |v| {
                    BlockDensity::mv_normal(DVector::from_vec(v), DMatrix::identity(k, k) * 3.0).unwrap()
                })
                .boxed()
        }
        (ModelSpec::Probit { y, .. }, _) => {
            let sides: Vec<Side> = y.iter().map(|&v| if v == 1 { Side::Positive } else { Side::Negative }).collect();
            prop::collection::vec(-3.0..3.0f64, y.len())
                .prop_map(move |a| BlockDensity::product_trunc_normal(a, sides.clone()).unwrap())
                .boxed()
        }
        (ModelSpec::GaussMeanPrec { .. }, 0) => (-1.0..3.0f64, 1.0..100.0f64).prop_map(|(m, s)| uni(m, s)).boxed(),
        (ModelSpec::GaussMeanPrec { x, a0, .. }, _) => {
            let shape = 0.5 * x.len() as f64 + a0;
            (0.1..10.0f64).prop_map(move |r| BlockDensity::gamma(shape, r * shape).unwrap()).boxed()
        }
        (ModelSpec::Gmm2 { .. }, 0) => (2.0..6.0f64, 5.0..80.0f64).prop_map(|(m, t)| uni(m, t)).boxed(),
        (ModelSpec::Gmm2 { x, .. }, _) => prop::collection::vec(0.01..0.99f64, x.len())
            .prop_map(|p| BlockDensity::product_two_point(p).unwrap())
            .boxed(),
        _ => unreachable!(),
    }
}

fn two_block_case() -> impl Strategy<Value = (ModelSpec, BlockDensity, usize)> {
    let models = vec![
        ModelSpec::Discrete2d { p: 0.8 },
        gaussian_half(),
        ModelSpec::GaussConditionals,
        probit(),
        gauss_mean_prec(),
        gmm2(),
    ];
    (prop::sample::select(models), 0..2usize).prop_flat_map(|(m, j)| {
        let other = block_strategy(&m, 1 - j);
        (Just(m), other, Just(j))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Updating one block against an arbitrary partner gives
    /// `KL(q_j' || q_j*) + KL(q_j* || q_j') = Δ`.
    #[test]
    fn block_update_identity((m, other, j) in two_block_case()) {
        let qs = fixed_point(&m).unwrap();
        let mut s = qs.clone();
        s.blocks[1 - j] = other;
        s.blocks[j] = block_update(&m, &s, j).unwrap();
        let lhs = 2.0 * d_half(&s.blocks[j], &qs.blocks[j]).unwrap();
        let rhs = delta_n(&m, &s, &qs).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-6), "{}: {lhs} vs {rhs}", m.name());
    }

    #[test]
    fn objective_gap_is_non_negative_for_convex_targets(
        (m, a, b) in prop::sample::select(vec![
            ModelSpec::Discrete2d { p: 0.8 },
            ModelSpec::Discrete2d { p: 0.15 },
            gaussian_half(),
            ModelSpec::GaussConditionals,
            probit(),
        ])
        .prop_flat_map(|m| {
            let (s0, s1) = (block_strategy(&m, 0), block_strategy(&m, 1));
            (Just(m), s0, s1)
        })
    ) {
        let qs = fixed_point(&m).unwrap();
        let s = MeanFieldState::new(vec![a, b]);
        prop_assert!(objective_gap(&m, &s, &qs).unwrap() >= -1e-12);
    }
}
