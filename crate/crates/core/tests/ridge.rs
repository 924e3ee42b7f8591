use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reskit_core::learning::predict_batch;
use reskit_core::{ridge_fit, ridge_fit_dual, RidgeModel};

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.sample(StandardNormal))
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[[r, c]])
}

fn max_abs_diff(a: &Array2<f64>, b: &DMatrix<f64>) -> f64 {
    a.indexed_iter().map(|((r, c), v)| (v - b[(r, c)]).abs()).fold(0.0, f64::max)
}

/// `(AᵀA + αI)⁺ AᵀY` through an SVD pseudo-inverse, transposed to `c × F`.
fn pinv_oracle(a: &Array2<f64>, y: &Array2<f64>, alpha: f64) -> DMatrix<f64> {
    let (a, y) = (to_na(a), to_na(y));
    let f = a.ncols();
    let normal = a.transpose() * &a + DMatrix::identity(f, f) * alpha;
    let pinv = normal.pseudo_inverse(1e-14).unwrap();
    (pinv * a.transpose() * y).transpose()
}

/// Least squares on `[A; √α I] W = [Y; 0]` by Householder QR.
fn qr_oracle(a: &Array2<f64>, y: &Array2<f64>, alpha: f64) -> DMatrix<f64> {
    let (n, f) = a.dim();
    let c = y.ncols();
    let mut big = DMatrix::zeros(n + f, f);
    let mut rhs = DMatrix::zeros(n + f, c);
    for r in 0..n {
        for k in 0..f {
            big[(r, k)] = a[[r, k]];
        }
        for k in 0..c {
            rhs[(r, k)] = y[[r, k]];
        }
    }
    for k in 0..f {
        big[(n + k, k)] = alpha.sqrt();
    }
    let qr = big.qr();
    let qty = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qty).unwrap().transpose()
}

#[test]
fn primal_matches_dense_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let f = rng.random_range(1..=200);
        let c = rng.random_range(1..=4);
        let alpha = 10f64.powf(rng.random_range(-2.0..1.0));
        let a = random_matrix(&mut rng, n, f);
        let y = random_matrix(&mut rng, n, c);
        let model = ridge_fit(a.view(), y.view(), alpha).unwrap();
        assert!(!model.jittered());
        let scale = model.weights.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let e1 = max_abs_diff(&model.weights, &pinv_oracle(&a, &y, alpha));
        let e2 = max_abs_diff(&model.weights, &qr_oracle(&a, &y, alpha));
        assert!(e1 <= 1e-8 * scale && e2 <= 1e-8 * scale, "case {case} ({n}×{f}, α={alpha}): {e1} {e2}");
    }
}

#[test]
fn dual_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..30 {
        let n = rng.random_range(1..=120);
        let x = random_matrix(&mut rng, n, 7);
        let g = x.dot(&x.t());
        let y = random_matrix(&mut rng, n, 2);
        let alpha = 0.05;
        let model = ridge_fit_dual(g.view(), y.view(), alpha, 1.0).unwrap();
        let shifted = to_na(&g) + DMatrix::identity(n, n) * alpha;
        let want = shifted.lu().solve(&to_na(&y)).unwrap().transpose();
        let scale = model.weights.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs_diff(&model.weights, &want) <= 1e-8 * scale);
    }
}

fn objective(model: &RidgeModel, w: &Array2<f64>, a: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let probe = RidgeModel { weights: w.clone(), ..model.clone() };
    let resid = predict_batch(&probe, a.view()).unwrap() - y;
    resid.mapv(|v| v * v).sum() + model.alpha * w.mapv(|v| v * v).sum()
}

#[test]
fn perturbing_the_solution_never_lowers_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let a = random_matrix(&mut rng, 60, 25);
    let y = random_matrix(&mut rng, 60, 3);
    let model = ridge_fit(a.view(), y.view(), 0.3).unwrap();
    let best = objective(&model, &model.weights, &a, &y);
    for _ in 0..100 {
        let dir = random_matrix(&mut rng, 3, 25);
        let dir = &dir / dir.mapv(|v| v * v).sum().sqrt();
        let moved = &model.weights + &(dir * 1e-3);
        assert!(objective(&model, &moved, &a, &y) >= best);
    }
}
