//! Oracles and property checks shared by the integration tests.
//!
//! The oracles deliberately avoid the code paths under test: singular values
//! come from a one-sided Jacobi iteration and regularized solves from a
//! Cholesky factorization of the normal equations.

#![allow(dead_code)]

use pinvnet_core::numerics::{self, filter_factors, tikhonov_solve, Lambda, Matrix, TruncationPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

/// Gaussian-ish entries (sum of uniforms) from a seed.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| {
        (0..4).map(|_| rng.random::<f64>() - 0.5).sum::<f64>()
    })
}

/// Random `rows x cols` matrix of rank at most `rank`.
pub fn random_low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Matrix {
    random_matrix(rows, rank, seed) * random_matrix(rank, cols, seed ^ 0x9e37_79b9)
}

/// Singular values by one-sided Jacobi rotations, sorted descending.
pub fn jacobi_singular_values(a: &Matrix) -> Vec<f64> {
    let mut a = if a.nrows() >= a.ncols() { a.clone() } else { a.transpose() };
    let n = a.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = a.column(p).norm_squared();
                let beta: f64 = a.column(q).norm_squared();
                let gamma: f64 = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..a.nrows() {
                    let ap = a[(i, p)];
                    let aq = a[(i, q)];
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `(H^T H + lambda I)^{-1} H^T T` via Cholesky.
pub fn normal_equations_solve(h: &Matrix, t: &Matrix, lambda: f64) -> Matrix {
    let m = h.ncols();
    let gram = h.transpose() * h + Matrix::identity(m, m) * lambda;
    let rhs = h.transpose() * t;
    gram.cholesky().expect("regularized Gram matrix is positive definite").solve(&rhs)
}

fn rel(a: f64, b: f64) -> f64 {
    a / b.max(f64::MIN_POSITIVE)
}

pub fn check_svd_reconstruction(h: &Matrix) -> Check {
    let f = numerics::svd(h).map_err(|e| e.to_string())?;
    let p = h.nrows().min(h.ncols());
    if f.u.shape() != (h.nrows(), p) || f.v.shape() != (h.ncols(), p) || f.sigma.len() != p {
        return Err(format!("thin shapes wrong for {:?}", h.shape()));
    }
    let recon = &f.u * Matrix::from_diagonal(&f.sigma) * f.v.transpose();
    let err = rel((recon - h).norm(), h.norm());
    if err > 1e-12 * (p as f64).max(1.0) {
        return Err(format!("reconstruction error {err:e}"));
    }
    let eye = Matrix::identity(p, p);
    let ortho_u = (f.u.transpose() * &f.u - &eye).norm();
    let ortho_v = (f.v.transpose() * &f.v - &eye).norm();
    if ortho_u > 1e-12 * p as f64 || ortho_v > 1e-12 * p as f64 {
        return Err(format!("orthogonality loss U {ortho_u:e}, V {ortho_v:e}"));
    }
    if f.sigma.iter().any(|&s| s < 0.0) || f.sigma.as_slice().windows(2).any(|w| w[0] < w[1]) {
        return Err("singular values not nonnegative and descending".into());
    }
    let oracle = jacobi_singular_values(h);
    for (i, (a, b)) in f.sigma.iter().zip(&oracle).enumerate() {
        if (a - b).abs() > 1e-11 * f.largest().max(1e-300) {
            return Err(format!("sigma[{i}] = {a:e} but Jacobi gives {b:e}"));
        }
    }
    Ok(())
}

/// The four Moore-Penrose conditions, with tolerances scaled by the
/// conditioning of the retained spectrum.
pub fn check_penrose(h: &Matrix) -> Check {
    let f = numerics::svd(h).map_err(|e| e.to_string())?;
    let x = f.pseudoinverse(TruncationPolicy::DefaultThreshold).map_err(|e| e.to_string())?;
    let tau = f.default_threshold();
    let r = f.rank(tau);
    if r == 0 {
        return if x.norm() == 0.0 { Ok(()) } else { Err("zero matrix must give zero pseudoinverse".into()) };
    }
    let kappa = f.largest() / f.sigma[r - 1];
    let tol = 1e-12 * kappa * (h.nrows().max(h.ncols()) as f64);
    let hx = h * &x;
    let xh = &x * h;
    let conds = [
        ("H X H = H", rel((&hx * h - h).norm(), h.norm())),
        ("X H X = X", rel((&xh * &x - &x).norm(), x.norm())),
        ("(H X)^T = H X", rel((hx.transpose() - &hx).norm(), hx.norm())),
        ("(X H)^T = X H", rel((xh.transpose() - &xh).norm(), xh.norm())),
    ];
    for (name, err) in conds {
        if err > tol {
            return Err(format!("{name}: relative residual {err:e} > {tol:e} (rank {r}, kappa {kappa:e})"));
        }
    }
    Ok(())
}

/// `tikhonov_solve` against the normal-equations oracle at relative 1e-6.
/// `log_scale` in `[-6, 0]` places lambda relative to `sigma_1^2`.
pub fn check_tikhonov_oracle(h: &Matrix, t: &Matrix, log_scale: f64) -> Check {
    let s1 = numerics::svd(h).map_err(|e| e.to_string())?.largest();
    let lambda = 10f64.powf(log_scale) * s1 * s1;
    let ours = tikhonov_solve(h, t, Lambda::new(lambda).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let oracle = normal_equations_solve(h, t, lambda);
    let err = rel((&ours - &oracle).norm(), oracle.norm());
    if err > 1e-6 {
        return Err(format!("lambda {lambda:e}: relative difference {err:e}"));
    }
    Ok(())
}

/// `D(sigma) = sigma / (sigma^2 + lambda)` rises up to `sqrt(lambda)`, falls
/// after it, and never exceeds `1 / (2 sqrt(lambda))`.
pub fn check_filter_shape(lambda: f64, sigmas: &[f64]) -> Check {
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let factors = numerics::SvdFactors {
        u: Matrix::zeros(0, sorted.len()),
        sigma: sorted.iter().copied().collect::<Vec<_>>().into(),
        v: Matrix::zeros(0, sorted.len()),
    };
    let d = filter_factors(&factors, Lambda::new(lambda).map_err(|e| e.to_string())?).values;
    let bound = 1.0 / (2.0 * lambda.sqrt());
    let peak = lambda.sqrt();
    for i in 0..sorted.len() {
        if d[i] > bound * (1.0 + 1e-12) {
            return Err(format!("D({:e}) = {:e} exceeds bound {bound:e}", sorted[i], d[i]));
        }
        if i > 0 {
            let slack = 1e-12 * d[i].max(d[i - 1]);
            if sorted[i] <= peak && d[i] + slack < d[i - 1] {
                return Err(format!("D decreased below sqrt(lambda) at sigma {:e}", sorted[i]));
            }
            if sorted[i - 1] >= peak && d[i] > d[i - 1] + slack {
                return Err(format!("D increased above sqrt(lambda) at sigma {:e}", sorted[i]));
            }
        }
    }
    Ok(())
}

/// `||W(lambda)||_F` is non-increasing along an ascending lambda grid.
pub fn check_shrinkage(h: &Matrix, t: &Matrix) -> Check {
    let f = numerics::svd(h).map_err(|e| e.to_string())?;
    let mut prev = f64::INFINITY;
    for k in -14..=2 {
        let lambda = 10f64.powi(k);
        let w = f.solve_filtered(t, Lambda::new(lambda).unwrap()).map_err(|e| e.to_string())?;
        let norm = w.norm();
        if norm > prev * (1.0 + 1e-12) {
            return Err(format!("norm grew from {prev:e} to {norm:e} at lambda {lambda:e}"));
        }
        prev = norm;
    }
    Ok(())
}

/// Truncating by threshold and by the matching rank give the same solve.
pub fn check_truncation_consistency(h: &Matrix, t: &Matrix) -> Check {
    let f = numerics::svd(h).map_err(|e| e.to_string())?;
    let tau = f.default_threshold();
    let r = f.rank(tau);
    let by_tau = f.solve_truncated(t, TruncationPolicy::Threshold(tau)).map_err(|e| e.to_string())?;
    let by_rank = f.solve_truncated(t, TruncationPolicy::Rank(r)).map_err(|e| e.to_string())?;
    let by_default = f.solve_truncated(t, TruncationPolicy::DefaultThreshold).map_err(|e| e.to_string())?;
    if by_tau != by_rank || by_tau != by_default {
        return Err(format!("threshold, rank {r} and default solves differ"));
    }
    Ok(())
}

use pinvnet_core::data::{CategoricalEncoding, Dataset, FeatureEncoder, FeatureKind, RawFeature, TargetEncoder};
use pinvnet_core::TaskKind;

fn numeric_encoder(p: usize) -> FeatureEncoder {
    FeatureEncoder {
        features: (0..p)
            .map(|j| RawFeature {
                name: format!("x{j}"),
                kind: FeatureKind::Numeric,
            })
            .collect(),
        encoding: CategoricalEncoding::Ordinal,
    }
}

/// Raw (unnormalized) dataset from a feature matrix and targets.
pub fn regression_dataset(name: &str, x: Matrix, t: Matrix) -> Dataset {
    let p = x.ncols();
    Dataset {
        name: name.into(),
        x,
        t,
        task: TaskKind::Regression,
        labels: None,
        class_names: Vec::new(),
        encoder: numeric_encoder(p),
        feature_ranges: None,
    }
}

pub fn classification_dataset(name: &str, x: Matrix, labels: Vec<usize>, num_classes: usize) -> Dataset {
    let p = x.ncols();
    Dataset {
        name: name.into(),
        t: TargetEncoder::new(num_classes).unwrap().encode(&labels).unwrap(),
        x,
        task: TaskKind::Classification { num_classes },
        labels: Some(labels),
        class_names: (0..num_classes).map(|c| format!("c{c}")).collect(),
        encoder: numeric_encoder(p),
        feature_ranges: None,
    }
}

/// Smooth noisy regression target on `n x p` uniform inputs.
pub fn noisy_regression(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(n, p, |_, _| rng.random::<f64>() * 4.0 - 2.0);
    let t = Matrix::from_fn(n, 1, |i, _| {
        let s: f64 = (0..p).map(|j| (x[(i, j)] * (j + 1) as f64).sin()).sum();
        s + 0.1 * (rng.random::<f64>() - 0.5)
    });
    regression_dataset("noisy", x, t)
}

/// Three Gaussian-ish blobs in `p` dimensions.
pub fn blobs(n_per_class: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 * n_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / n_per_class).collect();
    let x = Matrix::from_fn(n, p, |i, j| {
        let center = if j % 3 == labels[i] { 1.5 } else { 0.0 };
        center + (0..4).map(|_| rng.random::<f64>() - 0.5).sum::<f64>()
    });
    classification_dataset("blobs", x, labels, 3)
}
