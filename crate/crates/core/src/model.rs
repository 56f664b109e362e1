//! Single-hidden-layer feedforward network with random input weights and
//! linear output units.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, ensure_finite, Lambda, Matrix, SvdFactors, TruncationPolicy};

/// Identifier of the generator behind every seeded draw in this crate.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9/seed_from_u64";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" | "sigm" => Ok(Activation::Sigmoid),
            "tanh" | "hypt" => Ok(Activation::Tanh),
            other => Err(Error::param("activation", format!("unknown activation {other:?}"))),
        }
    }
}

/// Distribution of the input weights and hidden biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitRegime {
    /// Uniform on `(-a, a)` regardless of the hidden size.
    FixedInterval { half_width: f64 },
    /// Uniform on `(-1/sqrt(M), 1/sqrt(M))`; biases use the same interval.
    Scaled,
}

impl InitRegime {
    pub fn half_width(&self, hidden: usize) -> f64 {
        match *self {
            InitRegime::FixedInterval { half_width } => half_width,
            InitRegime::Scaled => 1.0 / (hidden as f64).sqrt(),
        }
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed and a path of counters,
/// e.g. `(base, [m, trial])`. Adding counters never perturbs other paths.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base), |acc, &k| mix(acc ^ mix(k)))
}

/// `(p + 1) x m` input-weight matrix; the last row holds the hidden biases.
pub fn init_weights(p: usize, m: usize, regime: InitRegime, seed: u64) -> Result<Matrix> {
    if p == 0 || m == 0 {
        return Err(Error::param("shape", format!("need p >= 1 and m >= 1, got p={p}, m={m}")));
    }
    let a = regime.half_width(m);
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::param("half_width", format!("must be positive, got {a}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || loop {
        let v = a * (2.0 * rng.random::<f64>() - 1.0);
        if v.abs() < a {
            return v;
        }
    };
    let mut c = Matrix::zeros(p + 1, m);
    for i in 0..=p {
        for j in 0..m {
            c[(i, j)] = draw();
        }
    }
    Ok(c)
}

/// How output weights are obtained from the hidden output matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    Pseudoinverse(TruncationPolicy),
    Tikhonov(Lambda),
}

impl Solver {
    /// `None` or a zero lambda select plain pseudoinversion with the default
    /// threshold.
    pub fn from_lambda(lambda: Option<f64>) -> Result<Self> {
        match lambda {
            None => Ok(Solver::Pseudoinverse(TruncationPolicy::DefaultThreshold)),
            Some(v) => {
                let lam = Lambda::new(v)?;
                if lam.value() == 0.0 {
                    Ok(Solver::Pseudoinverse(TruncationPolicy::DefaultThreshold))
                } else {
                    Ok(Solver::Tikhonov(lam))
                }
            }
        }
    }

    pub fn solve(&self, f: &SvdFactors, t: &Matrix) -> Result<Matrix> {
        match *self {
            Solver::Pseudoinverse(policy) => f.solve_truncated(t, policy),
            Solver::Tikhonov(lambda) => f.solve_filtered(t, lambda),
        }
    }
}

/// Singular-value diagnostics of the training hidden matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub threshold: f64,
    /// `sigma_min / threshold`; infinite when the threshold is zero.
    pub min_ratio: f64,
    pub rank: usize,
}

impl TrainReport {
    pub fn from_factors(f: &SvdFactors) -> Self {
        let tau = f.default_threshold();
        let min_ratio = numerics::min_sigma_ratio(f, tau).unwrap_or(f64::INFINITY);
        TrainReport {
            sigma_max: f.largest(),
            sigma_min: f.smallest(),
            threshold: tau,
            min_ratio,
            rank: f.rank(tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slfn {
    input_weights: Matrix,
    activation: Activation,
    output_weights: Option<Matrix>,
}

impl Slfn {
    pub fn new(input_weights: Matrix, activation: Activation) -> Result<Self> {
        if input_weights.nrows() < 2 || input_weights.ncols() == 0 {
            return Err(Error::shape(
                "input weights",
                "(P+1) x M with P >= 1, M >= 1",
                format!("{}x{}", input_weights.nrows(), input_weights.ncols()),
            ));
        }
        ensure_finite(&input_weights, "input weights")?;
        Ok(Slfn {
            input_weights,
            activation,
            output_weights: None,
        })
    }

    pub fn random(p: usize, m: usize, activation: Activation, regime: InitRegime, seed: u64) -> Result<Self> {
        Slfn::new(init_weights(p, m, regime, seed)?, activation)
    }

    pub fn with_output_weights(mut self, w: Matrix) -> Result<Self> {
        if w.nrows() != self.hidden_dim() {
            return Err(Error::shape(
                "output weights",
                format!("{} rows", self.hidden_dim()),
                format!("{} rows", w.nrows()),
            ));
        }
        ensure_finite(&w, "output weights")?;
        self.output_weights = Some(w);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.nrows() - 1
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.output_weights.as_ref().map(|w| w.ncols())
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_weights(&self) -> &Matrix {
        &self.input_weights
    }

    pub fn output_weights(&self) -> Option<&Matrix> {
        self.output_weights.as_ref()
    }

    /// `H = phi(X C + b)`, one row per sample.
    pub fn hidden_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let p = self.input_dim();
        if x.ncols() != p {
            return Err(Error::shape("inputs", format!("{p} columns"), format!("{} columns", x.ncols())));
        }
        let weights = self.input_weights.rows(0, p);
        let bias = self.input_weights.row(p);
        let mut h = x * weights;
        for mut row in h.row_iter_mut() {
            row += &bias;
        }
        let act = self.activation;
        h.apply(|v| *v = act.apply(*v));
        Ok(h)
    }

    /// Linear output layer applied to the hidden activations.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let w = self.output_weights.as_ref().ok_or(Error::MissingWeights)?;
        Ok(self.hidden_matrix(x)? * w)
    }

    pub fn train(&mut self, x: &Matrix, t: &Matrix, solver: &Solver) -> Result<TrainReport> {
        if x.nrows() != t.nrows() {
            return Err(Error::shape("training targets", format!("{} rows", x.nrows()), format!("{} rows", t.nrows())));
        }
        let h = self.hidden_matrix(x)?;
        let f = numerics::svd(&h)?;
        let w = solver.solve(&f, t)?;
        ensure_finite(&w, "output weights")?;
        self.output_weights = Some(w);
        Ok(TrainReport::from_factors(&f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scaled_regime_bounds() {
        let c = init_weights(8, 100, InitRegime::Scaled, 1).unwrap();
        assert_eq!(c.shape(), (9, 100));
        assert!(c.iter().all(|v| v.abs() < 0.1));
        let c = init_weights(4, 9, InitRegime::Scaled, 2).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1.0 / 3.0));
        let c = init_weights(4, 50, InitRegime::FixedInterval { half_width: 1.0 }, 3).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1.0));
        // Spread actually uses the interval.
        assert!(c.iter().any(|v| v.abs() > 0.9));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_weights(3, 7, InitRegime::Scaled, 42).unwrap();
        let b = init_weights(3, 7, InitRegime::Scaled, 42).unwrap();
        let c = init_weights(3, 7, InitRegime::Scaled, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_rejects_empty_shapes() {
        assert!(init_weights(0, 3, InitRegime::Scaled, 0).is_err());
        assert!(init_weights(3, 0, InitRegime::Scaled, 0).is_err());
    }

    #[test]
    fn derived_seeds_differ_per_path() {
        let a = derive_seed(7, &[10, 0]);
        assert_eq!(a, derive_seed(7, &[10, 0]));
        assert_ne!(a, derive_seed(7, &[10, 1]));
        assert_ne!(a, derive_seed(7, &[0, 10]));
        assert_ne!(a, derive_seed(8, &[10, 0]));
    }

    fn zero_net(p: usize, m: usize, act: Activation) -> Slfn {
        Slfn::new(Matrix::zeros(p + 1, m), act).unwrap()
    }

    #[test]
    fn hidden_matrix_at_origin() {
        let x = Matrix::zeros(4, 3);
        let h = zero_net(3, 5, Activation::Sigmoid).hidden_matrix(&x).unwrap();
        assert!(h.iter().all(|&v| v == 0.5));
        let h = zero_net(3, 5, Activation::Tanh).hidden_matrix(&x).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_matrix_scalar() {
        let net = Slfn::new(Matrix::from_column_slice(2, 1, &[1.0, 0.0]), Activation::Tanh).unwrap();
        let h = net.hidden_matrix(&Matrix::from_element(1, 1, 1.0)).unwrap();
        assert_relative_eq!(h[(0, 0)], 1f64.tanh());
        assert!((h[(0, 0)] - 0.7616).abs() < 1e-4);
    }

    #[test]
    fn hidden_matrix_shape_mismatch() {
        let net = zero_net(3, 2, Activation::Tanh);
        assert!(matches!(net.hidden_matrix(&Matrix::zeros(2, 4)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-700.0) > 0.0);
        assert!(sigmoid(-30.0) > 0.0 && sigmoid(30.0) < 1.0);
    }

    #[test]
    fn forward_requires_weights() {
        let net = zero_net(2, 3, Activation::Tanh);
        assert!(matches!(net.forward(&Matrix::zeros(1, 2)), Err(Error::MissingWeights)));
    }

    #[test]
    fn forward_with_zero_and_selector_weights() {
        let net = Slfn::random(2, 4, Activation::Sigmoid, InitRegime::Scaled, 5).unwrap();
        let x = Matrix::from_row_slice(3, 2, &[0.1, -0.5, 0.9, 0.2, -1.0, 1.0]);
        let zero = net.clone().with_output_weights(Matrix::zeros(4, 2)).unwrap();
        assert!(zero.forward(&x).unwrap().iter().all(|&v| v == 0.0));

        let mut e = Matrix::zeros(4, 1);
        e[(2, 0)] = 1.0;
        let sel = net.clone().with_output_weights(e).unwrap();
        let h = net.hidden_matrix(&x).unwrap();
        assert_eq!(sel.forward(&x).unwrap().column(0), h.column(2));
    }

    #[test]
    fn training_reproduces_consistent_targets() {
        let mut net = Slfn::random(3, 6, Activation::Tanh, InitRegime::FixedInterval { half_width: 1.0 }, 11).unwrap();
        let x = Matrix::from_fn(40, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let w_star = Matrix::from_fn(6, 2, |i, j| (i as f64) - 2.0 * j as f64);
        let t = net.hidden_matrix(&x).unwrap() * &w_star;
        let report = net.train(&x, &t, &Solver::from_lambda(None).unwrap()).unwrap();
        assert!(report.min_ratio > 1.0);
        let y = net.forward(&x).unwrap();
        assert!((y - t).amax() < 1e-9);
    }

    #[test]
    fn zero_lambda_selects_pseudoinverse() {
        assert_eq!(Solver::from_lambda(Some(0.0)).unwrap(), Solver::from_lambda(None).unwrap());
        assert!(matches!(Solver::from_lambda(Some(1e-3)).unwrap(), Solver::Tikhonov(_)));
        assert!(Solver::from_lambda(Some(-1.0)).is_err());
    }

    #[test]
    fn activation_parsing() {
        assert_eq!("HypT".parse::<Activation>().unwrap(), Activation::Tanh);
        assert_eq!("sigmoid".parse::<Activation>().unwrap(), Activation::Sigmoid);
        assert!("relu".parse::<Activation>().is_err());
    }
}
