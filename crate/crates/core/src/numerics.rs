//! Dense linear-algebra kernel: thin SVD, thresholded pseudoinverse solves
//! and Tikhonov-filtered least squares.
//!
//! Everything works in `f64`. The SVD is always thin: for an `N x M` input
//! with `p = min(N, M)`, `U` is `N x p`, `V` is `M x p` and `sigma` holds `p`
//! values sorted in descending order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Iteration cap handed to the bidiagonal QR sweep.
const MAX_SVD_ITERATIONS: usize = 10_000;

/// Convergence tolerance for the bidiagonal sweep.
const SVD_EPS: f64 = 5.0 * f64::EPSILON;

/// Accepted residuals of a computed factorization of the `p x p` triangle,
/// relative to `||R||` (reconstruction) or one (orthogonality), per unit of `p`.
const SVD_CHECK_TOL: f64 = 1e3 * f64::EPSILON;

/// Sweep cap for the Jacobi fallback; it converges quadratically, so real
/// inputs finish in well under 20.
const MAX_JACOBI_SWEEPS: usize = 60;

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

fn ensure_nonempty(m: &Matrix, what: &'static str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::param(what, format!("empty matrix {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Thin singular value decomposition `H = U diag(sigma) V^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

/// How small singular values are discarded before inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    /// `max(N, M) * eps * sigma_1`, the conventional rank tolerance.
    DefaultThreshold,
    /// Invert only singular values strictly greater than the given value.
    Threshold(f64),
    /// Keep the leading `k` singular directions.
    Rank(usize),
}

/// Nonnegative Tikhonov parameter for the penalty `lambda * ||W||^2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Lambda(f64);

impl Lambda {
    pub const ZERO: Lambda = Lambda(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {value}")));
        }
        Ok(Lambda(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-direction damping coefficients `sigma_i / (sigma_i^2 + lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFactors {
    pub values: Vector,
    /// Indices where `lambda == 0` met `sigma_i == 0`; those factors are set
    /// to zero, as truncation would.
    pub zeroed: Vec<usize>,
}

/// Computes the thin SVD of `h`.
///
/// Tall inputs go through a Householder QR first so the iterative part only
/// ever sees a `p x p` triangle; wide inputs are handled via the transpose.
pub fn svd(h: &Matrix) -> Result<SvdFactors> {
    ensure_nonempty(h, "h")?;
    ensure_finite(h, "h")?;
    if h.nrows() >= h.ncols() {
        tall_svd(h)
    } else {
        let f = tall_svd(&h.transpose())?;
        Ok(SvdFactors {
            u: f.v,
            sigma: f.sigma,
            v: f.u,
        })
    }
}

fn tall_svd(h: &Matrix) -> Result<SvdFactors> {
    let (rows, cols) = h.shape();
    let (q, r) = if rows > cols {
        let qr = h.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, h.clone())
    };

    // The bidiagonal sweep is fast but occasionally returns factors that do
    // not reproduce a rank-deficient triangle, so every result is checked and
    // the (slower, very accurate) Jacobi method takes over on failure.
    let (u_r, sigma, v) = match bidiagonal_svd(&r).filter(|(u, s, v)| is_valid_svd(&r, u, s, v)) {
        Some(f) => f,
        None => {
            log::debug!("bidiagonal SVD of a {cols}x{cols} triangle failed its check; using Jacobi");
            let f = jacobi_svd(&r).ok_or(Error::SvdNoConvergence { rows, cols })?;
            if !is_valid_svd(&r, &f.0, &f.1, &f.2) {
                return Err(Error::SvdNoConvergence { rows, cols });
            }
            f
        }
    };
    let u = match q {
        Some(q) => q * u_r,
        None => u_r,
    };
    Ok(SvdFactors { u, sigma, v })
}

/// Factors of a square matrix, sorted by descending singular value.
type SquareSvd = (Matrix, Vector, Matrix);

fn sorted_factors(u: &Matrix, sigma: &[f64], v: &Matrix) -> SquareSvd {
    let p = sigma.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    (
        Matrix::from_fn(u.nrows(), p, |i, j| u[(i, order[j])]),
        Vector::from_iterator(p, order.iter().map(|&i| sigma[i])),
        Matrix::from_fn(v.nrows(), p, |i, j| v[(i, order[j])]),
    )
}

fn bidiagonal_svd(r: &Matrix) -> Option<SquareSvd> {
    let dec = r.clone().try_svd(true, true, SVD_EPS, MAX_SVD_ITERATIONS)?;
    let sigma: Vec<f64> = dec.singular_values.iter().map(|s| s.abs()).collect();
    let v = dec.v_t?.transpose();
    Some(sorted_factors(&dec.u?, &sigma, &v))
}

fn is_valid_svd(r: &Matrix, u: &Matrix, sigma: &Vector, v: &Matrix) -> bool {
    let p = r.ncols();
    if !sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
        return false;
    }
    let tol = SVD_CHECK_TOL * p as f64;
    let eye = Matrix::identity(p, p);
    let scaled_v = Matrix::from_fn(p, p, |i, j| v[(i, j)] * sigma[j]);
    (u * scaled_v.transpose() - r).norm() <= tol * r.norm()
        && (u.tr_mul(u) - &eye).norm() <= tol
        && (v.tr_mul(v) - &eye).norm() <= tol
}

/// One-sided Jacobi SVD of a square matrix: rotates column pairs of `A` (and
/// accumulates the rotations in `V`) until all columns are orthogonal; the
/// column norms are then the singular values.
fn jacobi_svd(r: &Matrix) -> Option<SquareSvd> {
    let p = r.ncols();
    let mut a: Vec<f64> = r.as_slice().to_vec();
    let mut v: Vec<f64> = Matrix::identity(p, p).as_slice().to_vec();
    let tol = f64::EPSILON * p as f64;
    // Columns below this norm are numerically zero: rounding noise from their
    // partners would keep them from ever converging, and they sit below the
    // rank threshold anyway (`eps ||R||_F <= sqrt(p) eps sigma_1 <= tau`).
    let negligible = f64::EPSILON * r.norm();
    let negligible_sq = negligible * negligible;

    let rotate = |m: &mut [f64], cp: usize, cq: usize, c: f64, s: f64| {
        for i in 0..p {
            let x = m[cp * p + i];
            let y = m[cq * p + i];
            m[cp * p + i] = c * x - s * y;
            m[cq * p + i] = s * x + c * y;
        }
    };

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for cp in 0..p {
            for cq in cp + 1..p {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..p {
                    let x = a[cp * p + i];
                    let y = a[cq * p + i];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() || alpha.min(beta) <= negligible_sq {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, cp, cq, c, s);
                rotate(&mut v, cp, cq, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }

    let a = Matrix::from_vec(p, p, a);
    let v = Matrix::from_vec(p, p, v);
    let sigma: Vec<f64> = (0..p)
        .map(|j| a.column(j).norm())
        .map(|s| if s <= negligible { 0.0 } else { s })
        .collect();
    let (mut u, sigma, v) = sorted_factors(&a, &sigma, &v);
    complete_left_vectors(&mut u, &sigma);
    Some((u, sigma, v))
}

/// Normalizes the columns of `A V` into `U`; exactly-zero columns are replaced
/// by unit vectors orthogonal to the others.
fn complete_left_vectors(u: &mut Matrix, sigma: &Vector) {
    let p = u.ncols();
    for j in 0..p {
        if sigma[j] > 0.0 {
            let mut col = u.column_mut(j);
            col /= sigma[j];
        }
    }
    for j in 0..p {
        if sigma[j] > 0.0 {
            continue;
        }
        for e in 0..u.nrows() {
            let mut cand = Vector::zeros(u.nrows());
            cand[e] = 1.0;
            for _ in 0..2 {
                for k in 0..p {
                    if k != j && (sigma[k] > 0.0 || k < j) {
                        let proj = u.column(k).dot(&cand);
                        cand.axpy(-proj, &u.column(k), 1.0);
                    }
                }
            }
            let norm = cand.norm();
            if norm > 0.5 {
                u.set_column(j, &(cand / norm));
                break;
            }
        }
    }
}

/// Rank tolerance `max(rows, cols) * eps * sigma_1`, with `eps = 2^-52`.
pub fn default_threshold(f: &SvdFactors, rows: usize, cols: usize) -> f64 {
    let largest = f.largest();
    if largest == 0.0 {
        return 0.0;
    }
    rows.max(cols) as f64 * f64::EPSILON * largest
}

/// Ratio of the smallest singular value to `tau`. Values below one mean the
/// smallest direction would be discarded as numerically zero.
pub fn min_sigma_ratio(f: &SvdFactors, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::UndefinedRatio { tau });
    }
    Ok(f.smallest() / tau)
}

pub fn filter_factors(f: &SvdFactors, lambda: Lambda) -> FilterFactors {
    let lam = lambda.value();
    let mut zeroed = Vec::new();
    let values = Vector::from_iterator(
        f.sigma.len(),
        f.sigma.iter().enumerate().map(|(i, &s)| {
            let denom = s * s + lam;
            if denom == 0.0 {
                zeroed.push(i);
                0.0
            } else {
                s / denom
            }
        }),
    );
    FilterFactors { values, zeroed }
}

impl SvdFactors {
    pub fn largest(&self) -> f64 {
        self.sigma.iter().copied().next().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.sigma.iter().copied().last().unwrap_or(0.0)
    }

    /// Rows and columns of the factored matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    pub fn default_threshold(&self) -> f64 {
        let (rows, cols) = self.shape();
        default_threshold(self, rows, cols)
    }

    /// Number of singular values strictly above `tau`.
    pub fn rank(&self, tau: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > tau).count()
    }

    /// Diagonal of `Sigma^+` under `policy`.
    pub fn inverted_sigma(&self, policy: TruncationPolicy) -> Result<Vector> {
        let p = self.sigma.len();
        let keep: Box<dyn Fn(usize, f64) -> bool> = match policy {
            TruncationPolicy::DefaultThreshold => {
                let tau = self.default_threshold();
                Box::new(move |_, s| s > tau)
            }
            TruncationPolicy::Threshold(tau) => {
                if !(tau >= 0.0) || !tau.is_finite() {
                    return Err(Error::param("threshold", format!("must be finite and >= 0, got {tau}")));
                }
                Box::new(move |_, s| s > tau)
            }
            TruncationPolicy::Rank(k) => {
                if k > p {
                    return Err(Error::param("rank", format!("{k} exceeds min(N, M) = {p}")));
                }
                Box::new(move |i, s| i < k && s > 0.0)
            }
        };
        Ok(Vector::from_iterator(
            p,
            self.sigma
                .iter()
                .enumerate()
                .map(|(i, &s)| if keep(i, s) { 1.0 / s } else { 0.0 }),
        ))
    }

    fn check_targets(&self, t: &Matrix) -> Result<()> {
        if t.nrows() != self.u.nrows() {
            return Err(Error::shape(
                "targets",
                format!("{} rows", self.u.nrows()),
                format!("{} rows", t.nrows()),
            ));
        }
        ensure_finite(t, "targets")
    }

    /// `V diag(d) U^T T` for an arbitrary diagonal `d`.
    pub fn apply_diagonal(&self, d: &Vector, t: &Matrix) -> Result<Matrix> {
        self.check_targets(t)?;
        let projected = self.u.tr_mul(t);
        Ok(self.apply_diagonal_projected(d, &projected))
    }

    /// Same as [`apply_diagonal`](Self::apply_diagonal) with `U^T T` already
    /// computed, so many diagonals can share one projection.
    pub fn apply_diagonal_projected(&self, d: &Vector, projected: &Matrix) -> Matrix {
        let mut scaled = projected.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= d[i];
        }
        &self.v * scaled
    }

    pub fn solve_truncated(&self, t: &Matrix, policy: TruncationPolicy) -> Result<Matrix> {
        let d = self.inverted_sigma(policy)?;
        self.apply_diagonal(&d, t)
    }

    pub fn solve_filtered(&self, t: &Matrix, lambda: Lambda) -> Result<Matrix> {
        let d = filter_factors(self, lambda).values;
        self.apply_diagonal(&d, t)
    }

    /// Explicit `V Sigma^+ U^T`.
    pub fn pseudoinverse(&self, policy: TruncationPolicy) -> Result<Matrix> {
        let d = self.inverted_sigma(policy)?;
        let mut vd = self.v.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= d[j];
        }
        Ok(vd * self.u.transpose())
    }
}

fn check_system(h: &Matrix, t: &Matrix) -> Result<()> {
    if h.nrows() != t.nrows() {
        return Err(Error::shape(
            "linear system H W = T",
            format!("T with {} rows", h.nrows()),
            format!("T with {} rows", t.nrows()),
        ));
    }
    ensure_nonempty(t, "t")
}

/// Minimum-norm least-squares solution `H^+ T`, where `H^+` inverts only the
/// singular values kept by `policy`.
pub fn pseudoinverse_solve(h: &Matrix, t: &Matrix, policy: TruncationPolicy) -> Result<Matrix> {
    check_system(h, t)?;
    svd(h)?.solve_truncated(t, policy)
}

/// Tikhonov-regularized solution `V D U^T T`, `D_i = sigma_i / (sigma_i^2 + lambda)`.
pub fn tikhonov_solve(h: &Matrix, t: &Matrix, lambda: Lambda) -> Result<Matrix> {
    check_system(h, t)?;
    svd(h)?.solve_filtered(t, lambda)
}

pub fn pseudoinverse(h: &Matrix, policy: TruncationPolicy) -> Result<Matrix> {
    svd(h)?.pseudoinverse(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_abs(m: &Matrix) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn jacobi_fallback_factors_rank_deficient_triangle() {
        let r = Matrix::from_row_slice(
            4,
            4,
            &[
                1.896, 4.306e-2, -1.111, -8.660e-1, 0.0, 1.172e-17, -3.380e-16, -3.562e-16, 0.0, 0.0, 1.475e-16,
                7.366e-17, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        let (u, s, v) = jacobi_svd(&r).unwrap();
        assert!(is_valid_svd(&r, &u, &s, &v));
        assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(s[3], 0.0);
    }

    #[test]
    fn jacobi_matches_known_values() {
        let r = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 5.0]);
        let (u, s, v) = jacobi_svd(&r).unwrap();
        assert_relative_eq!(s[0], 45f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(s[1], 5f64.sqrt(), epsilon = 1e-14);
        assert!(is_valid_svd(&r, &u, &s, &v));
    }

    #[test]
    fn identity_svd() {
        let f = svd(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(f.sigma.as_slice(), &[1.0, 1.0, 1.0]);
        let recon = &f.u * Matrix::from_diagonal(&f.sigma) * f.v.transpose();
        assert!(max_abs(&(recon - Matrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn diagonal_svd_sorted() {
        let h = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let f = svd(&h).unwrap();
        assert_relative_eq!(f.sigma[0], 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.sigma[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn wide_matrix_factors_have_thin_shapes() {
        let h = Matrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64).sin());
        let f = svd(&h).unwrap();
        assert_eq!(f.u.shape(), (3, 3));
        assert_eq!(f.v.shape(), (7, 3));
        let recon = &f.u * Matrix::from_diagonal(&f.sigma) * f.v.transpose();
        assert!(max_abs(&(recon - &h)) <= 1e-12 * f.sigma[0]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut h = Matrix::identity(2, 2);
        h[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&h), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn threshold_of_zero_matrix() {
        let f = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(default_threshold(&f, 3, 2), 0.0);
    }

    #[test]
    fn threshold_formula() {
        let f = SvdFactors {
            u: Matrix::identity(1, 1),
            sigma: Vector::from_element(1, 1.0),
            v: Matrix::identity(1, 1),
        };
        assert_eq!(default_threshold(&f, 4177, 100), 4177.0 * f64::EPSILON);
    }

    #[test]
    fn numerical_rank_under_threshold() {
        let f = SvdFactors {
            u: Matrix::identity(3, 3),
            sigma: Vector::from_row_slice(&[2.0, 1.0, 1e-20]),
            v: Matrix::identity(3, 3),
        };
        let tau = default_threshold(&f, 3, 3);
        assert_eq!(f.rank(tau), 2);
    }

    #[test]
    fn identity_system_returns_targets() {
        let t = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 3.5, 0.0, 7.0, 1e-3]);
        let w = pseudoinverse_solve(&Matrix::identity(3, 3), &t, TruncationPolicy::DefaultThreshold).unwrap();
        assert!(max_abs(&(w - &t)) < 1e-15);
    }

    #[test]
    fn tiny_singular_value_is_truncated() {
        let h = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1e-300]);
        let t = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let w = pseudoinverse_solve(&h, &t, TruncationPolicy::DefaultThreshold).unwrap();
        assert_eq!(w[(0, 0)], 0.5);
        assert_eq!(w[(1, 0)], 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let h = Matrix::identity(3, 3);
        let t = Matrix::zeros(2, 1);
        assert!(matches!(
            pseudoinverse_solve(&h, &t, TruncationPolicy::DefaultThreshold),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(tikhonov_solve(&h, &t, Lambda::ZERO), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn rank_policy_bounds() {
        let f = svd(&Matrix::identity(2, 2)).unwrap();
        assert!(f.inverted_sigma(TruncationPolicy::Rank(3)).is_err());
        assert!(f.inverted_sigma(TruncationPolicy::Threshold(-1.0)).is_err());
        let d = f.inverted_sigma(TruncationPolicy::Rank(1)).unwrap();
        assert_eq!(d.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn scalar_tikhonov() {
        let h = Matrix::from_element(1, 1, 1.0);
        let t = Matrix::from_element(1, 1, 1.0);
        let w = tikhonov_solve(&h, &t, Lambda::new(1.0).unwrap()).unwrap();
        assert_eq!(w[(0, 0)], 0.5);
    }

    #[test]
    fn filter_factor_examples() {
        let one = |s: f64, lam: f64| {
            let f = SvdFactors {
                u: Matrix::identity(1, 1),
                sigma: Vector::from_element(1, s),
                v: Matrix::identity(1, 1),
            };
            filter_factors(&f, Lambda::new(lam).unwrap())
        };
        assert_eq!(one(2.0, 0.0).values[0], 0.5);
        assert_eq!(one(1.0, 1.0).values[0], 0.5);
        let d = one(1e-8, 1e-11).values[0];
        // 1e-8 / (1e-16 + 1e-11)
        assert_relative_eq!(d, 1e-8 / (1e-16 + 1e-11), max_relative = 1e-15);
        assert!(d > 990.0 && d < 1000.0);
        let z = one(0.0, 0.0);
        assert_eq!(z.values[0], 0.0);
        assert_eq!(z.zeroed, vec![0]);
    }

    #[test]
    fn ratio_examples() {
        let f = |s: &[f64]| SvdFactors {
            u: Matrix::identity(s.len(), s.len()),
            sigma: Vector::from_row_slice(s),
            v: Matrix::identity(s.len(), s.len()),
        };
        assert_eq!(min_sigma_ratio(&f(&[1.0, 0.5]), 0.25).unwrap(), 2.0);
        assert_relative_eq!(min_sigma_ratio(&f(&[1.0, 1e-18]), 1e-15).unwrap(), 1e-3, max_relative = 1e-12);
        assert_relative_eq!(min_sigma_ratio(&f(&[1.0]), 1e-15).unwrap(), 1e15, max_relative = 1e-12);
        assert!(matches!(min_sigma_ratio(&f(&[1.0]), 0.0), Err(Error::UndefinedRatio { .. })));
    }

    #[test]
    fn lambda_validation() {
        assert!(Lambda::new(-1e-12).is_err());
        assert!(Lambda::new(f64::INFINITY).is_err());
        assert!(Lambda::new(0.0).is_ok());
    }
}
