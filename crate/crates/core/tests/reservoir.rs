use ndarray::{s, Array2, Array3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reskit_core::kernel::{build_gram_train, RkConfig, WindowSet};
use reskit_core::learning::predict_batch;
use reskit_core::{concat_state, init_weights, ridge_fit, ridge_fit_dual, run, Activation, Backend, Reservoir, ReservoirParams};

fn inputs(k: usize, len: usize, d: usize, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    Array3::from_shape_simple_fn((k, len, d), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    })
}

/// Final-state Gram of `k` series driven through one shared reservoir.
fn reservoir_gram(params: ReservoirParams, series: &Array3<f64>) -> Array2<f64> {
    let (k, len, _) = series.dim();
    let mut res = Reservoir::new(params).unwrap();
    let mut states = Array2::zeros((k, res.state_len()));
    for t in 0..len {
        res.step_batch(states.view_mut(), series.slice(s![.., t, ..]), t).unwrap();
    }
    states.dot(&states.t())
}

fn kernel_gram(cfg: &RkConfig, series: &Array3<f64>) -> Array2<f64> {
    let (k, len, d) = series.dim();
    let frames = series.to_shape((k * len, d)).unwrap().to_owned();
    let ends = (0..k).map(|j| j * len + len - 1).collect();
    build_gram_train(&WindowSet::new(frames, ends, len).unwrap(), cfg).unwrap()
}

fn rms(a: &Array2<f64>) -> f64 {
    a.mapv(|v| v * v).mean().unwrap().sqrt()
}

#[test]
fn dense_and_structured_grams_agree_within_the_limit_error() {
    let series = inputs(20, 10, 50, 3);
    let params = ReservoirParams::new(4096, 50, Activation::Erf).with_sigmas(0.5, 1.0, 0.0).with_seed(8);
    let dense = reservoir_gram(params.clone(), &series);
    let structured = reservoir_gram(params.with_backend(Backend::Structured), &series);
    let rk = kernel_gram(&RkConfig::new(reskit_core::KernelKind::ArcsineErf, 0.25, 1.0, 0.0), &series);
    let gap = rms(&(&dense - &structured));
    let limit = rms(&(&dense - &rk));
    assert!(gap <= 3.0 * limit, "dense/structured {gap}, dense/limit {limit}");
}

#[test]
fn pair_inner_product_error_shrinks_like_one_over_n() {
    // two input series, five steps, fresh weights per seed
    let series = inputs(2, 5, 20, 4);
    let rk = kernel_gram(&RkConfig::new(reskit_core::KernelKind::ArcsineErf, 0.25, 1.0, 0.0), &series)[[0, 1]];
    let mse = |n: usize| {
        (0..24u64)
            .map(|seed| {
                let p = ReservoirParams::new(n, 20, Activation::Erf)
                    .with_sigmas(0.5, 1.0, 0.0)
                    .with_backend(Backend::Structured)
                    .with_seed(seed);
                (reservoir_gram(p, &series)[[0, 1]] - rk).powi(2)
            })
            .sum::<f64>()
            / 24.0
    };
    let small = mse(1024);
    let large = mse(16384);
    assert!(large <= 3.0 * small * 1024.0 / 16384.0, "{small} at 1024, {large} at 16384");
}

#[test]
fn run_is_deterministic_and_trims_warmup() {
    let params = ReservoirParams::new(64, 3, Activation::Tanh).with_seed(2);
    let w = init_weights(&params).unwrap();
    let series = inputs(1, 12, 3, 1).slice(s![0, .., ..]).to_owned();
    let a = run(series.view(), &params, &w, 4).unwrap();
    let b = run(series.view(), &params, &w, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
    assert!(run(series.view(), &params, &w, 12).unwrap().is_empty());
}

#[test]
fn readout_on_wide_reservoir_tracks_the_kernel_readout() {
    // train-set predictions G(G + αI)⁻¹Y differ by at most ‖ΔG‖‖Y‖/α
    let series = inputs(30, 6, 8, 12);
    let y = inputs(1, 30, 2, 13).slice(s![0, .., ..]).to_owned();
    let params = ReservoirParams::new(8192, 8, Activation::Erf)
        .with_sigmas(0.6, 1.0, 0.3)
        .with_backend(Backend::Structured)
        .with_seed(5);
    let (k, len, _) = series.dim();
    let mut res = Reservoir::new(params).unwrap();
    let mut states = Array2::zeros((k, res.state_len()));
    for t in 0..len {
        res.step_batch(states.view_mut(), series.slice(s![.., t, ..]), t).unwrap();
    }
    let alpha = 0.1;
    let primal = ridge_fit(states.view(), y.view(), alpha).unwrap();
    let rc_pred = predict_batch(&primal, states.view()).unwrap();
    let g_rk = kernel_gram(&RkConfig::new(reskit_core::KernelKind::ArcsineErf, 0.36, 1.0, 0.09), &series);
    let dual = ridge_fit_dual(g_rk.view(), y.view(), alpha, 0.0).unwrap();
    let rk_pred = g_rk.dot(&dual.weights.t());
    let dg = &states.dot(&states.t()) - &g_rk;
    let frob = |a: &Array2<f64>| a.mapv(|v| v * v).sum().sqrt();
    let bound = frob(&dg) * frob(&y) / alpha;
    assert!(frob(&(&rc_pred - &rk_pred)) <= bound);
    assert!(rms(&dg) < 0.01, "Gram deviation {}", rms(&dg));
}

fn bounded_activation() -> impl Strategy<Value = Activation> {
    prop::sample::select(vec![Activation::Erf, Activation::Tanh, Activation::Sign, Activation::Heaviside, Activation::Rff])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounded_states_stay_in_the_unit_ball(
        act in bounded_activation(),
        sr in 0.0f64..3.0,
        si in 0.0f64..3.0,
        sb in 0.0f64..1.0,
        structured in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let backend = if structured { Backend::Structured } else { Backend::Dense };
        let params = ReservoirParams::new(48, 5, act).with_sigmas(sr, si, sb).with_backend(backend).with_seed(seed);
        let mut res = Reservoir::new(params).unwrap();
        let mut x = vec![0.0; res.state_len()];
        let series = inputs(1, 15, 5, seed ^ 1);
        for t in 0..15 {
            let i = series.slice(s![0, t, ..]).to_vec();
            res.step_in_place(&mut x, &i, t).unwrap();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= 1.0 + 1e-12);
            if act == Activation::Rff {
                prop_assert!((norm - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn concatenation_is_orthogonal(
        x in proptest::collection::vec(-1.0f64..1.0, 1..20),
        i in proptest::collection::vec(-5.0f64..5.0, 1..10),
        r in 0.0f64..3.0,
    ) {
        let f = concat_state(&x, &i, r);
        prop_assert_eq!(f.len(), x.len() + i.len());
        let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let want = sq(&x) + r * r * sq(&i);
        prop_assert!((sq(&f) - want).abs() <= 1e-12 * want.max(1.0));
    }
}
