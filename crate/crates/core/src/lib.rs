//! Single-hidden-layer feedforward networks whose output weights are found
//! by SVD pseudoinversion, optionally with Tikhonov filtering.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: thin SVD, thresholded pseudoinverse and filtered solves.
//! - [`model`]: random input weights, activations, hidden matrix, training.
//! - [`data`]: delimited-file loading, scaling to `[-1, 1]`, splits.
//! - [`stats`]: summaries and two-sample t-tests.
//! - [`experiment`]: multi-trial sweeps over the hidden size, detection of
//!   the size where `sigma_min` falls under the rank threshold, and tuning of
//!   the regularization parameter around it.
//! - [`persist`]: the text format for trained models.
//!
//! ```
//! use pinvnet_core::model::{Activation, InitRegime, Slfn, Solver};
//! use pinvnet_core::numerics::Matrix;
//!
//! let x = Matrix::from_fn(50, 2, |i, j| ((i + 3 * j) as f64 * 0.1).sin());
//! let t = Matrix::from_fn(50, 1, |i, _| x[(i, 0)] - 0.5 * x[(i, 1)]);
//! let mut net = Slfn::random(2, 10, Activation::Tanh, InitRegime::Scaled, 7)?;
//! let report = net.train(&x, &t, &Solver::from_lambda(Some(1e-8))?)?;
//! assert!(report.min_ratio > 1.0);
//! let y = net.forward(&x)?;
//! assert_eq!(y.shape(), (50, 1));
//! # Ok::<(), pinvnet_core::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod persist;
pub mod stats;

pub use data::{Dataset, Split, TaskKind};
pub use error::{Error, Result};
pub use experiment::{MethodConfig, MethodLabel, SweepRecord};
pub use model::{Activation, InitRegime, Slfn, Solver};
pub use numerics::{Lambda, Matrix, SvdFactors, TruncationPolicy};
