use std::fs;

use reskit::dataset::{decode, export_csv, load_dataset, read_series_csv, save_dataset, FormatError};
use reskit::ks::{estimate_lyapunov, simulate_from, simulate_ks, KsConfig, LyapunovOptions};
use reskit_core::windowize;

fn small_chaotic() -> KsConfig {
    KsConfig {
        l: 22.0,
        grid: 64,
        transient: 2000,
        ..KsConfig::default()
    }
}

#[test]
fn zero_field_stays_exactly_zero() {
    let cfg = KsConfig { transient: 0, ..KsConfig::default() };
    let ds = simulate_from(&cfg, &vec![0.0; 100], 200).unwrap();
    assert!(ds.series.data.iter().all(|&v| v == 0.0));
}

#[test]
fn sub_critical_domain_decays() {
    // every admitted wavenumber q = 2πk/L has q > 1, so q² − q⁴ < 0
    let cfg = KsConfig {
        l: 2.0 * std::f64::consts::PI * 0.9,
        grid: 32,
        transient: 0,
        ..KsConfig::default()
    };
    let u0: Vec<f64> = (0..32).map(|j| 0.05 * (2.0 * std::f64::consts::PI * j as f64 / 32.0).sin()).collect();
    let ds = simulate_from(&cfg, &u0, 400).unwrap();
    let norm = |t: usize| ds.series.data.row(t).iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm(399) < 1e-3 * norm(0));
    let est = estimate_lyapunov(&cfg, &LyapunovOptions { horizon: 400, probes: 2, ..LyapunovOptions::default() }).unwrap();
    assert!(est.lambda < 0.0 && est.decaying);
}

#[test]
fn spatial_mean_is_conserved() {
    let cfg = KsConfig { transient: 0, ..small_chaotic() };
    let u0: Vec<f64> = (0..64).map(|j| 0.3 + 0.1 * ((j * 7 % 13) as f64 - 6.0) / 6.0).collect();
    let mean0 = u0.iter().sum::<f64>() / 64.0;
    let ds = simulate_from(&cfg, &u0, 1000).unwrap();
    let mean = ds.series.data.row(999).mean().unwrap();
    assert!((mean - mean0).abs() < 1e-8, "{mean0} → {mean}");
}

#[test]
fn statistics_are_stationary_after_transient() {
    let ds = simulate_ks(&small_chaotic(), 8000).unwrap();
    let half = |a: usize, b: usize| {
        let s = ds.series.data.slice(ndarray::s![a..b, ..]);
        let m = s.mean().unwrap();
        s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64
    };
    let (v1, v2) = (half(0, 4000), half(4000, 8000));
    assert!((v1 / v2 - 1.0).abs() < 0.2, "{v1} vs {v2}");
}

#[test]
fn generation_is_deterministic() {
    let cfg = small_chaotic();
    assert_eq!(simulate_ks(&cfg, 50).unwrap(), simulate_ks(&cfg, 50).unwrap());
}

#[test]
fn exponent_does_not_depend_on_perturbation_size() {
    let cfg = small_chaotic();
    let opts = LyapunovOptions { probes: 4, horizon: 3000, ..LyapunovOptions::default() };
    let a = estimate_lyapunov(&cfg, &opts).unwrap().lambda;
    let b = estimate_lyapunov(&cfg, &LyapunovOptions { perturbation: 2e-8, ..opts }).unwrap().lambda;
    assert!(a > 0.0);
    assert!((a - b).abs() <= 0.1 * a, "{a} vs {b}");
}

#[test]
fn binary_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ks.rskd");
    let mut ds = simulate_ks(&small_chaotic(), 40).unwrap();
    ds.lyapunov = Some(0.0471);
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, ds);
    let a: Vec<u64> = ds.series.data.iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = back.series.data.iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);

    let bytes = fs::read(&path).unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode(&bad), Err(FormatError::Magic)));
}

#[test]
fn csv_export_keeps_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = simulate_ks(&small_chaotic(), 3).unwrap();
    ds.series.data = ds.series.data.slice(ndarray::s![.., ..2]).to_owned();
    let path = dir.path().join("ks.csv");
    export_csv(&ds, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x0,x1");
    let back = read_series_csv(&text).unwrap();
    assert_eq!(back, ds.series.data);
}

#[test]
fn windows_pair_with_the_next_frame() {
    let series = ndarray::Array2::from_shape_fn((12, 2), |(t, j)| (10 * t + j) as f64);
    let w = windowize(series.view(), 3, 1).unwrap();
    assert_eq!(w.windows.len(), 9);
    let targets = w.targets.unwrap();
    for k in 0..9 {
        assert_eq!(w.windows.ends()[k], k + 2);
        assert_eq!(targets.row(k), series.row(k + 3));
    }
}
