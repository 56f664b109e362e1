//! Deterministic fixtures shared by the benchmarks.
//!
//! Inputs come from a closed-form scrambled sequence rather than an RNG so
//! that every benchmark run sees exactly the same matrices.

use pinvnet_core::data::{CategoricalEncoding, Dataset, FeatureEncoder, FeatureKind, RawFeature};
use pinvnet_core::experiment::SplitData;
use pinvnet_core::{Activation, InitRegime, Matrix, Slfn, TaskKind};

/// Values in `[-1, 1]` that look unstructured to an SVD.
pub fn inputs(n: usize, p: usize) -> Matrix {
    Matrix::from_fn(n, p, |i, j| ((i * 7919 + j * 104_729) as f64 * 0.618_033_988_749_895).sin())
}

/// Training hidden matrix of a random network, as used by one trial.
pub fn hidden_matrix(n: usize, p: usize, m: usize, activation: Activation, seed: u64) -> Matrix {
    Slfn::random(p, m, activation, InitRegime::Scaled, seed)
        .and_then(|net| net.hidden_matrix(&inputs(n, p)))
        .expect("fixture network")
}

/// Targets for `h`: a smooth function of its row index.
pub fn targets(rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, k| (i as f64 * 0.05 + k as f64).cos())
}

/// A regression problem of `n` samples and `p` features, split 50/25/25
/// and normalized, shaped like the mid-sized benchmarks.
pub fn regression_split(n: usize, p: usize) -> SplitData {
    let x = inputs(n, p);
    let t = Matrix::from_fn(n, 1, |i, _| (0..p).map(|j| (2.0 * x[(i, j)]).sin()).sum::<f64>());
    let raw = Dataset {
        name: "bench".into(),
        x,
        t,
        task: TaskKind::Regression,
        labels: None,
        class_names: Vec::new(),
        encoder: FeatureEncoder {
            features: (0..p)
                .map(|j| RawFeature {
                    name: format!("x{j}"),
                    kind: FeatureKind::Numeric,
                })
                .collect(),
            encoding: CategoricalEncoding::Ordinal,
        },
        feature_ranges: None,
    };
    let split = raw.split([0.5, 0.25, 0.25], 1).expect("fixture split");
    SplitData::prepare(&raw, &split).expect("fixture data")
}
