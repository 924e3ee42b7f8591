use reskit::experiments::Experiment;
use reskit_core::learning::nmse_curve;

/// A small forecasting configuration on a short in-process KS run.
fn tiny(exp: Experiment) -> reskit::config::Config {
    let mut c = exp.default_config();
    for (k, v) in [
        ("n", "64"),
        ("n_train", "400"),
        ("train_chunks", "4"),
        ("warmup", "20"),
        ("test_len", "200"),
        ("starts", "3"),
        ("seeds", "0,1"),
        ("ks_grid", "32"),
        ("ks_transient", "1000"),
        ("ks_steps", "700"),
        ("lyap_probes", "1"),
        ("lyap_horizon", "500"),
    ] {
        c.set(k, v).unwrap();
    }
    c
}

#[test]
fn zero_horizon_gives_empty_curves() {
    let mut c = tiny(Experiment::Predict);
    c.set("horizon", "0").unwrap();
    c.set("algorithms", "rc,src,rk").unwrap();
    c.set("tau", "5").unwrap();
    c.set("rk_windows", "50").unwrap();
    let rec = Experiment::Predict.run(&c).unwrap();
    assert!(rec.results.rows.is_empty());
    assert!(rec.curves.iter().all(|t| t.rows.is_empty()));
}

#[test]
fn truth_scores_zero() {
    let truth = ndarray::Array2::from_shape_fn((5, 3), |(t, j)| (t as f64).sin() + j as f64);
    let c = nmse_curve(truth.view(), truth.view(), &[0.7; 5]).unwrap();
    assert!(c.iter().all(|&v| v == 0.0));
}

#[test]
fn one_step_horizon_makes_strategies_coincide() {
    let mut c = tiny(Experiment::RecDirect);
    c.set("horizon", "1").unwrap();
    c.set("lt_marks", "0.001").unwrap();
    let rec = Experiment::RecDirect.run(&c).unwrap();
    let curves = &rec.curves[0];
    let pick = |s: &str| curves.values("nmse", &[("strategy", s)]);
    let (a, b) = (pick("closed_loop"), pick("direct"));
    assert!(!a.is_empty() && a.len() == b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12), "{a:?} vs {b:?}");
    }
}

#[test]
fn predict_is_reproducible_apart_from_timing() {
    let mut c = tiny(Experiment::Predict);
    c.set("horizon", "30").unwrap();
    c.set("algorithms", "src").unwrap();
    c.set("lt_marks", "0.1,0.2").unwrap();
    let a = Experiment::Predict.run(&c).unwrap();
    let b = Experiment::Predict.run(&c).unwrap();
    let strip = |r: &reskit::experiments::ResultRecord| {
        let mut buf = Vec::new();
        r.curves[0].write_csv(&r.config_hash, &mut buf).unwrap();
        buf
    };
    assert_eq!(strip(&a), strip(&b));
    let nmse = |r: &reskit::experiments::ResultRecord| r.results.values("nmse", &[]);
    assert_eq!(nmse(&a), nmse(&b));
}

#[test]
fn stability_separates_contracting_and_chaotic_reservoirs() {
    let mut c = Experiment::Stability.default_config();
    for (k, v) in [("n", "400"), ("seeds", "0..4"), ("ks_grid", "32"), ("ks_steps", "600"), ("ks_transient", "1000"),
        ("lyap_probes", "1"), ("lyap_horizon", "200"), ("rk_windows", "10"), ("ks_l", "22")] {
        c.set(k, v).unwrap();
    }
    let rec = Experiment::Stability.run(&c).unwrap();
    let mean = |m: &str, s: &str| {
        let v = rec.results.values("distance", &[("machine", m), ("sigma_r2", s)]);
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean("rc", "0.49") < 1e-4);
    assert!(mean("rc", "2.25") > 0.1);
    assert!(mean("rk", "1.0") < 1e-8);
}
