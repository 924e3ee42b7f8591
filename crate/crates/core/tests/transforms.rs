use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reskit_core::{fwht_in_place, structured_matvec, StructuredOperator};

/// Orthonormal Sylvester-Hadamard matrix, row-major.
fn sylvester(p: usize) -> Vec<f64> {
    let mut h = vec![1.0];
    let mut k = 1;
    while k < p {
        let mut next = vec![0.0; 4 * k * k];
        for r in 0..k {
            for c in 0..k {
                let v = h[r * k + c];
                next[r * 2 * k + c] = v;
                next[r * 2 * k + c + k] = v;
                next[(r + k) * 2 * k + c] = v;
                next[(r + k) * 2 * k + c + k] = -v;
            }
        }
        h = next;
        k *= 2;
    }
    let norm = 1.0 / (p as f64).sqrt();
    h.iter().map(|v| v * norm).collect()
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let p = v.len();
    (0..p).map(|r| (0..p).map(|c| m[r * p + c] * v[c]).sum()).collect()
}

fn uniform_vec(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn fwht_matches_sylvester_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 1..=10 {
        let p = 1 << k;
        let h = sylvester(p);
        let v = uniform_vec(&mut rng, p);
        let want = matvec(&h, &v);
        let mut got = v.clone();
        fwht_in_place(&mut got).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10, "p={p}: {a} vs {b}");
        }
    }
}

#[test]
fn structured_matches_explicit_triple_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in [1, 4, 7, 10] {
        let p = 1 << k;
        let op = StructuredOperator::new(p, 3.0, 99, k as u64).unwrap();
        let h = sylvester(p);
        let v = uniform_vec(&mut rng, p);
        let [d1, d2, d3] = op.signs();
        let mut want: Vec<f64> = v.iter().zip(d3).map(|(a, s)| a * s).collect();
        want = matvec(&h, &want);
        want = want.iter().zip(d2).map(|(a, s)| a * s).collect();
        want = matvec(&h, &want);
        want = want.iter().zip(d1).map(|(a, s)| a * s).collect();
        want = matvec(&h, &want);
        let got = structured_matvec(&op, &v).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - 3.0 * b).abs() <= 1e-10, "p={p}");
        }
    }
}

#[test]
fn materialized_operator_has_scaled_orthogonal_rows() {
    let op = StructuredOperator::new(64, 2.5, 3, 0).unwrap();
    let m = op.materialize();
    let g = m.dot(&m.t());
    for r in 0..64 {
        for c in 0..64 {
            let want = if r == c { 2.5 * 2.5 } else { 0.0 };
            assert!((g[[r, c]] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn signs_are_exactly_plus_minus_one() {
    let op = StructuredOperator::new(256, 1.0, 8, 2).unwrap();
    for d in op.signs() {
        assert!(d.iter().all(|&s| s == 1.0 || s == -1.0));
    }
}

fn pow2_vec() -> impl Strategy<Value = Vec<f64>> {
    (0u32..=10).prop_flat_map(|k| proptest::collection::vec(-1e3f64..1e3, 1usize << k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn fwht_is_an_isometric_involution(v in pow2_vec()) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut w = v.clone();
        fwht_in_place(&mut w).unwrap();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - nw).abs() <= 1e-12 * norm.max(f64::MIN_POSITIVE));
        fwht_in_place(&mut w).unwrap();
        for (a, b) in v.iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-12 * norm.max(1.0));
        }
    }
}
