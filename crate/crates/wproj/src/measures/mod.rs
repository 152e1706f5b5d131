//! Finitely supported probability measures and their ingestion paths.
//!
//! [`DiscreteMeasure`] is the universal representation of targets, controls,
//! projections and counterfactuals: an `n × d` support matrix of atom
//! locations plus a length-`n` vector of strictly positive weights summing
//! to one. Constructors validate the invariants once; afterwards the value
//! is immutable and all operations are pure.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::{Error, Result, WEIGHT_TOL};

mod csv_load;
mod img;
pub mod pgm;

pub use csv_load::{load_csv, measure_from_csv_reader, CsvSchema, IngestReport};
pub use img::{
    image_to_measure, measure_from_image_bytes, measure_from_image_path, render_to_grid,
    write_grid_image,
};

/// Per-variable ingestion transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableTransform {
    /// Keep the raw value.
    Identity,
    /// Natural log; rows with nonpositive values in this column are dropped
    /// and counted.
    Log,
}

/// A finitely supported probability measure on ℝᵈ.
///
/// Invariants, enforced at construction:
/// - every support entry is finite;
/// - every weight is strictly positive (zero-mass atoms are disallowed so
///   that plan disintegrations never divide by zero);
/// - the weights sum to one within [`WEIGHT_TOL`];
/// - the weight length equals the support row count.
///
/// Duplicate support points are legal; transport solvers tolerate zero-cost
/// pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    support: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from an explicit support and weight vector.
    pub fn new(support: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if support.nrows() == 0 {
            return Err(Error::EmptyInput("support"));
        }
        if support.ncols() == 0 {
            return Err(Error::EmptyInput("support columns"));
        }
        if support.nrows() != weights.len() {
            return Err(Error::LengthMismatch {
                rows: support.nrows(),
                weights: weights.len(),
            });
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("support"));
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite("weights"));
            }
            if w <= 0.0 {
                return Err(Error::NonPositiveWeight { index: i, value: w });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::WeightSum {
                sum,
                tol: WEIGHT_TOL,
            });
        }
        Ok(Self { support, weights })
    }

    /// Empirical measure: uniform weights `1/n` on the given sample rows.
    pub fn from_samples(samples: Array2<f64>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::EmptyInput("samples"));
        }
        let n = samples.nrows();
        let w = Array1::from_elem(n, 1.0 / n as f64);
        Self::new(samples, w)
    }

    /// Point mass at `point`.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        let support = Array2::from_shape_vec((1, point.len()), point.to_vec())
            .expect("shape follows from input length");
        Self::new(support, Array1::from_elem(1, 1.0))
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.support.nrows()
    }

    /// True when the measure has a single atom.
    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    /// Ambient dimension d.
    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    /// Atom locations, one row per atom.
    pub fn support(&self) -> &Array2<f64> {
        &self.support
    }

    /// Atom masses.
    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    /// i-th atom location.
    pub fn atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.support.row(i)
    }

    /// Second moment Σᵢ wᵢ |xᵢ|².
    pub fn second_moment(&self) -> f64 {
        let mut acc = 0.0;
        for (row, &w) in self.support.rows().into_iter().zip(self.weights.iter()) {
            let mut sq = 0.0;
            for &x in row {
                sq += x * x;
            }
            acc += w * sq;
        }
        acc
    }

    /// Weighted per-coordinate mean.
    pub fn mean(&self) -> Array1<f64> {
        let mut m = Array1::zeros(self.dim());
        for (row, &w) in self.support.rows().into_iter().zip(self.weights.iter()) {
            for (k, &x) in row.iter().enumerate() {
                m[k] += w * x;
            }
        }
        m
    }

    /// Deterministic subsample of `n` atoms (without replacement, uniform
    /// over atoms), re-normalizing the retained weights. Returns the measure
    /// unchanged when it has at most `n` atoms.
    pub fn subsample(&self, n: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("subsample size"));
        }
        if self.len() <= n {
            return Ok(self.clone());
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        // Partial Fisher-Yates: only the first n positions are needed.
        for i in 0..n {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx.sort_unstable();
        let mut support = Array2::zeros((n, self.dim()));
        let mut weights = Array1::zeros(n);
        for (r, &i) in idx.iter().enumerate() {
            support.row_mut(r).assign(&self.support.row(i));
            weights[r] = self.weights[i];
        }
        let total: f64 = weights.sum();
        weights.mapv_inplace(|w| w / total);
        Self::new(support, weights)
    }
}

/// Mixture of measures: concatenated supports with weights scaled by the
/// mixture coefficients.
///
/// `mix_weights` defaults to uniform `1/J`. Parts receiving zero mixture
/// weight are omitted entirely, so `pool(parts, e_j)` returns exactly
/// `parts[j]`'s atoms and weights.
pub fn pool(parts: &[DiscreteMeasure], mix_weights: Option<&[f64]>) -> Result<DiscreteMeasure> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("pool parts"));
    }
    let d = parts[0].dim();
    for p in parts {
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                left: d,
                right: p.dim(),
            });
        }
    }
    let uniform;
    let mix: &[f64] = match mix_weights {
        Some(m) => m,
        None => {
            uniform = vec![1.0 / parts.len() as f64; parts.len()];
            &uniform
        }
    };
    if mix.len() != parts.len() {
        return Err(Error::BadMixWeights(format!(
            "{} mixture weights for {} parts",
            mix.len(),
            parts.len()
        )));
    }
    let mut sum = 0.0;
    for &m in mix {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::BadMixWeights(format!("weight {m} is negative")));
        }
        sum += m;
    }
    if (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::BadMixWeights(format!(
            "weights sum to {sum}, expected 1"
        )));
    }

    let total_atoms: usize = parts
        .iter()
        .zip(mix)
        .filter(|(_, &m)| m > 0.0)
        .map(|(p, _)| p.len())
        .sum();
    let mut support = Array2::zeros((total_atoms, d));
    let mut weights = Array1::zeros(total_atoms);
    let mut row = 0;
    for (part, &m) in parts.iter().zip(mix) {
        if m == 0.0 {
            continue;
        }
        for (r, &w) in part.support().rows().into_iter().zip(part.weights()) {
            support.row_mut(row).assign(&r);
            weights[row] = m * w;
            row += 1;
        }
    }
    DiscreteMeasure::new(support, weights)
}

/// Per-unit panel of samples keyed by period label.
///
/// All period matrices share the column count `variable_names.len()`;
/// transforms have already been applied at ingestion.
#[derive(Debug, Clone)]
pub struct UnitPanel {
    pub unit_id: String,
    pub periods: BTreeMap<String, Array2<f64>>,
    pub variable_names: Vec<String>,
    pub variable_transforms: Vec<VariableTransform>,
    /// Optional per-row weights aligned with each period matrix.
    pub period_weights: BTreeMap<String, Array1<f64>>,
}

impl UnitPanel {
    /// Samples for one period, if present.
    pub fn period(&self, label: &str) -> Option<&Array2<f64>> {
        self.periods.get(label)
    }

    /// Measure for one period: weighted atoms when a weight column was
    /// ingested, uniform otherwise.
    pub fn period_measure(&self, label: &str) -> Result<DiscreteMeasure> {
        let samples = self
            .periods
            .get(label)
            .ok_or_else(|| Error::MissingPeriodData {
                unit: self.unit_id.clone(),
                period: label.to_string(),
            })?;
        match self.period_weights.get(label) {
            Some(w) => {
                let total = w.sum();
                DiscreteMeasure::new(samples.clone(), w.mapv(|x| x / total))
            }
            None => DiscreteMeasure::from_samples(samples.clone()),
        }
    }

    /// Concatenates the named periods row-wise in the given order.
    pub fn stack_periods(&self, labels: &[String]) -> Result<(Array2<f64>, Option<Array1<f64>>)> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("period labels"));
        }
        let d = self.variable_names.len();
        let mut rows = 0;
        for label in labels {
            let m = self
                .periods
                .get(label)
                .ok_or_else(|| Error::MissingPeriodData {
                    unit: self.unit_id.clone(),
                    period: label.clone(),
                })?;
            rows += m.nrows();
        }
        let mut out = Array2::zeros((rows, d));
        let weighted = labels.iter().any(|l| self.period_weights.contains_key(l));
        let mut weights = if weighted {
            Some(Array1::zeros(rows))
        } else {
            None
        };
        let mut at = 0;
        for label in labels {
            let m = &self.periods[label];
            out.slice_mut(ndarray::s![at..at + m.nrows(), ..])
                .assign(m);
            if let Some(w) = weights.as_mut() {
                match self.period_weights.get(label) {
                    Some(pw) => w.slice_mut(ndarray::s![at..at + m.nrows()]).assign(pw),
                    None => w
                        .slice_mut(ndarray::s![at..at + m.nrows()])
                        .fill(1.0),
                }
            }
            at += m.nrows();
        }
        Ok((out, weights))
    }
}

/// Weighted per-coordinate mean of raw sample rows (used in reports).
pub fn column_means(samples: &Array2<f64>) -> Array1<f64> {
    samples
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(samples.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn from_samples_uniform_weights() {
        let m = DiscreteMeasure::from_samples(array![[0.0], [2.0]]).unwrap();
        assert_eq!(m.support(), &array![[0.0], [2.0]]);
        assert_eq!(m.weights(), &array![0.5, 0.5]);
    }

    #[test]
    fn from_samples_single_atom() {
        let m = DiscreteMeasure::from_samples(array![[1.0, 1.0]]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.weights()[0], 1.0);
    }

    #[test]
    fn from_samples_rejects_empty_and_nonfinite() {
        assert!(matches!(
            DiscreteMeasure::from_samples(Array2::zeros((0, 2))),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            DiscreteMeasure::from_samples(array![[f64::NAN]]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            DiscreteMeasure::from_samples(array![[f64::INFINITY]]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn new_rejects_bad_weights() {
        let s = array![[0.0], [1.0]];
        assert!(matches!(
            DiscreteMeasure::new(s.clone(), array![0.5, 0.6]),
            Err(Error::WeightSum { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(s.clone(), array![1.0, 0.0]),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(s, array![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn second_moment_examples() {
        let dirac0 = DiscreteMeasure::dirac(&[0.0]).unwrap();
        assert_eq!(dirac0.second_moment(), 0.0);

        let pm1 = DiscreteMeasure::from_samples(array![[-1.0], [1.0]]).unwrap();
        assert_abs_diff_eq!(pm1.second_moment(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn second_moment_matches_naive_oracle() {
        // 50 x 3 pseudo-random measure; oracle is the direct double loop.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let support = Array2::from_shape_fn((50, 3), |_| next());
        let raw: Vec<f64> = (0..50).map(|_| next().abs() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let weights = Array1::from_vec(raw.iter().map(|w| w / total).collect());
        let m = DiscreteMeasure::new(support.clone(), weights.clone()).unwrap();

        let mut oracle = 0.0;
        for i in 0..50 {
            let mut sq = 0.0;
            for k in 0..3 {
                sq += support[[i, k]] * support[[i, k]];
            }
            oracle += weights[i] * sq;
        }
        assert_abs_diff_eq!(m.second_moment(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn pool_identity() {
        let p = DiscreteMeasure::from_samples(array![[1.0], [3.0]]).unwrap();
        let pooled = pool(std::slice::from_ref(&p), Some(&[1.0])).unwrap();
        assert_eq!(&pooled, &p);
    }

    #[test]
    fn pool_two_diracs() {
        let d0 = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let d1 = DiscreteMeasure::dirac(&[1.0]).unwrap();
        let m = pool(&[d0, d1], Some(&[0.3, 0.7])).unwrap();
        assert_eq!(m.support(), &array![[0.0], [1.0]]);
        assert_abs_diff_eq!(m.weights()[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.weights()[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn pool_unit_vector_recovers_part() {
        let a = DiscreteMeasure::from_samples(array![[0.0], [1.0]]).unwrap();
        let b = DiscreteMeasure::from_samples(array![[5.0], [6.0], [7.0]]).unwrap();
        let m = pool(&[a, b.clone()], Some(&[0.0, 1.0])).unwrap();
        assert_eq!(&m, &b);
    }

    #[test]
    fn pool_rejects_bad_inputs() {
        let a = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            pool(&[a.clone(), b], None),
            Err(Error::DimensionMismatch { .. })
        ));
        let c = DiscreteMeasure::dirac(&[1.0]).unwrap();
        assert!(matches!(
            pool(&[a.clone(), c.clone()], Some(&[-0.1, 1.1])),
            Err(Error::BadMixWeights(_))
        ));
        assert!(matches!(
            pool(&[a, c], Some(&[0.4, 0.4])),
            Err(Error::BadMixWeights(_))
        ));
    }

    #[test]
    fn pool_associative_in_distribution() {
        // pool([pool([A,B],[a',b']), C],[a+b, c]) with a'=a/(a+b) etc. yields
        // the same atom/weight multiset as pool([A,B,C],[a,b,c]).
        let a = DiscreteMeasure::from_samples(array![[0.0], [1.0]]).unwrap();
        let b = DiscreteMeasure::from_samples(array![[2.0]]).unwrap();
        let c = DiscreteMeasure::from_samples(array![[3.0], [4.0], [5.0]]).unwrap();
        let (wa, wb, wc) = (0.2, 0.3, 0.5);

        let inner = pool(
            &[a.clone(), b.clone()],
            Some(&[wa / (wa + wb), wb / (wa + wb)]),
        )
        .unwrap();
        let nested = pool(&[inner, c.clone()], Some(&[wa + wb, wc])).unwrap();
        let flat = pool(&[a, b, c], Some(&[wa, wb, wc])).unwrap();

        let mut lhs: Vec<(i64, i64)> = nested
            .support()
            .column(0)
            .iter()
            .zip(nested.weights())
            .map(|(&x, &w)| ((x * 1e9) as i64, (w * 1e12).round() as i64))
            .collect();
        let mut rhs: Vec<(i64, i64)> = flat
            .support()
            .column(0)
            .iter()
            .zip(flat.weights())
            .map(|(&x, &w)| ((x * 1e9) as i64, (w * 1e12).round() as i64))
            .collect();
        lhs.sort_unstable();
        rhs.sort_unstable();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn subsample_is_deterministic_and_normalized() {
        use rand::SeedableRng;
        let m = DiscreteMeasure::from_samples(Array2::from_shape_fn((100, 2), |(i, j)| {
            (i * 2 + j) as f64
        }))
        .unwrap();
        let mut rng1 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s1 = m.subsample(10, &mut rng1).unwrap();
        let s2 = m.subsample(10, &mut rng2).unwrap();
        assert_eq!(s1.support(), s2.support());
        assert_abs_diff_eq!(s1.weights().sum(), 1.0, epsilon = 1e-12);
    }
}
