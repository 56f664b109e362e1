//! Deterministic train/validation/test splitting.
//!
//! Part sizes use largest-remainder rounding of `n * fraction` (ties go to
//! the earlier part). Classification splits are stratified: each class is
//! apportioned so that its count in every part is the floor or ceiling of
//! its exact share, while part totals still match the unstratified sizes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PART_NAMES: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Split {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.validation, &self.test]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }
}

pub fn validate_fractions(fractions: &[f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::param("fractions", format!("all parts must be positive, got {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::param("fractions", format!("must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` items.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        sizes[k] += 1;
    }
    sizes
}

/// Splits `n` samples. With `labels`, the split is stratified by class.
pub fn split_indices(n: usize, labels: Option<&[usize]>, fractions: [f64; 3], seed: u64) -> Result<Split> {
    validate_fractions(&fractions)?;
    let totals = apportion(n, &fractions);
    if let Some(k) = totals.iter().position(|&s| s == 0) {
        return Err(Error::param(
            "fractions",
            format!("{} part would be empty with {n} samples", PART_NAMES[k]),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();

    match labels {
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut it = idx.into_iter();
            for (part, &size) in parts.iter_mut().zip(&totals) {
                part.extend(it.by_ref().take(size));
            }
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::shape("labels", n, labels.len()));
            }
            let num_classes = labels.iter().max().map_or(0, |m| m + 1);
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
            for (i, &l) in labels.iter().enumerate() {
                by_class[l].push(i);
            }
            let present: Vec<usize> = (0..num_classes).filter(|&c| !by_class[c].is_empty()).collect();
            let counts: Vec<usize> = present.iter().map(|&c| by_class[c].len()).collect();
            let alloc = stratified_allocation(&counts, &fractions, &totals)?;
            for (row, &c) in present.iter().enumerate() {
                for (k, &a) in alloc[row].iter().enumerate() {
                    if a == 0 {
                        return Err(Error::Stratification(format!(
                            "class {c} has no samples in the {} part",
                            PART_NAMES[k]
                        )));
                    }
                }
                let idx = &mut by_class[c];
                idx.shuffle(&mut rng);
                let mut it = idx.iter().copied();
                for (part, &a) in parts.iter_mut().zip(&alloc[row]) {
                    part.extend(it.by_ref().take(a));
                }
            }
        }
    }

    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(Split {
        train,
        validation,
        test,
        fractions,
        seed,
    })
}

/// Integer `classes x parts` table with row sums `counts`, column sums
/// `totals`, and every cell equal to the floor or ceiling of
/// `counts[c] * fractions[k]`.
fn stratified_allocation(counts: &[usize], fractions: &[f64; 3], totals: &[usize]) -> Result<Vec<[usize; 3]>> {
    let classes = counts.len();
    let mut table = vec![[0usize; 3]; classes];
    let mut frac = vec![[0f64; 3]; classes];
    let mut row_need = vec![0usize; classes];
    let mut col_need = [0usize; 3];
    for (c, &n_c) in counts.iter().enumerate() {
        for k in 0..3 {
            let exact = n_c as f64 * fractions[k];
            // Absorb rounding in products that are mathematically integral.
            let floor = (exact + 1e-9).floor();
            table[c][k] = floor as usize;
            frac[c][k] = (exact - floor).max(0.0);
        }
        row_need[c] = n_c - table[c].iter().sum::<usize>();
    }
    for k in 0..3 {
        let used: usize = table.iter().map(|r| r[k]).sum();
        col_need[k] = totals[k].checked_sub(used).ok_or_else(|| {
            Error::Stratification(format!("{} part cannot hold the per-class floors", PART_NAMES[k]))
        })?;
    }

    // Max-flow on source -> class (row_need) -> part (one unit per cell with
    // a fractional share) -> sink (col_need). Cells are offered in order of
    // decreasing remainder, so large remainders win when there is a choice.
    let mut cells: Vec<(usize, usize)> = (0..classes)
        .flat_map(|c| (0..3).map(move |k| (c, k)))
        .filter(|&(c, k)| frac[c][k] > 1e-9)
        .collect();
    cells.sort_by(|a, b| frac[b.0][b.1].total_cmp(&frac[a.0][a.1]).then(a.cmp(b)));

    let mut bumped = vec![[false; 3]; classes];
    for c in 0..classes {
        while row_need[c] > 0 {
            let mut seen_parts = [false; 3];
            if !augment(c, &cells, &mut bumped, &mut col_need, &mut seen_parts) {
                return Err(Error::Stratification("no consistent per-class apportionment".into()));
            }
            row_need[c] -= 1;
        }
    }
    for c in 0..classes {
        for k in 0..3 {
            if bumped[c][k] {
                table[c][k] += 1;
            }
        }
    }
    Ok(table)
}

/// Routes one more unit from class `c` to some part, possibly moving the
/// unit another class holds in that part to a different part.
fn augment(
    c: usize,
    cells: &[(usize, usize)],
    bumped: &mut [[bool; 3]],
    col_need: &mut [usize; 3],
    seen_parts: &mut [bool; 3],
) -> bool {
    for &(cc, k) in cells {
        if cc != c || bumped[c][k] || seen_parts[k] {
            continue;
        }
        seen_parts[k] = true;
        if col_need[k] > 0 {
            col_need[k] -= 1;
            bumped[c][k] = true;
            return true;
        }
        // Part k is full: try to push one of its holders elsewhere.
        for other in 0..bumped.len() {
            if other != c && bumped[other][k] {
                bumped[other][k] = false;
                if augment(other, cells, bumped, col_need, seen_parts) {
                    bumped[c][k] = true;
                    return true;
                }
                bumped[other][k] = true;
            }
        }
    }
    false
}
