//! Tangent-space lifts at the target measure.
//!
//! A transport plan from the target `P₀` to a control `P_j` is collapsed to
//! a map by barycentric projection — the conditional mean of the plan's
//! disintegration over each target atom. The map minus the identity is a
//! displacement field in `L²(P₀)`; these fields are the coordinates in
//! which the projection weights are solved. When the plan is induced by a
//! map (a permutation coupling between equal-size uniform measures), the
//! barycentric projection reproduces that map exactly.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::measures::DiscreteMeasure;
use crate::ot::{EntropicPotentials, PlanMethod, TransportPlan};
use crate::{Error, Result};

/// A map on the target support together with its displacement field.
///
/// `map_values − displacement` equals the base support exactly: the
/// displacement is stored as computed (`map − support`) and the identity is
/// validated at construction, which catches downstream drift.
#[derive(Debug, Clone)]
pub struct TangentField {
    base_support: Array2<f64>,
    base_weights: Array1<f64>,
    map_values: Array2<f64>,
    displacement: Array2<f64>,
    source_method: PlanMethod,
}

impl TangentField {
    fn from_map(base: &DiscreteMeasure, map_values: Array2<f64>, method: PlanMethod) -> Result<Self> {
        if map_values.dim() != base.support().dim() {
            return Err(Error::BaseMismatch);
        }
        if map_values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tangent map values"));
        }
        let displacement = &map_values - base.support();
        Ok(Self {
            base_support: base.support().clone(),
            base_weights: base.weights().clone(),
            map_values,
            displacement,
            source_method: method,
        })
    }

    /// Number of target atoms.
    pub fn len(&self) -> usize {
        self.base_support.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.base_support.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.base_support.ncols()
    }

    /// b(xᵢ), one row per target atom.
    pub fn map_values(&self) -> &Array2<f64> {
        &self.map_values
    }

    /// b(xᵢ) − xᵢ.
    pub fn displacement(&self) -> &Array2<f64> {
        &self.displacement
    }

    pub fn base_support(&self) -> &Array2<f64> {
        &self.base_support
    }

    pub fn base_weights(&self) -> &Array1<f64> {
        &self.base_weights
    }

    pub fn source_method(&self) -> PlanMethod {
        self.source_method
    }

    /// Squared L²(P₀) norm of the displacement field:
    /// `Σᵢ wᵢ |b(xᵢ) − xᵢ|²`.
    pub fn displacement_norm2(&self) -> f64 {
        let mut acc = 0.0;
        for (row, &w) in self
            .displacement
            .rows()
            .into_iter()
            .zip(self.base_weights.iter())
        {
            let mut sq = 0.0;
            for &x in row {
                sq += x * x;
            }
            acc += w * sq;
        }
        acc
    }

    /// True when `other` shares this field's base measure (same support
    /// atoms and weights, compared exactly).
    pub fn same_base(&self, other: &TangentField) -> bool {
        self.base_support == other.base_support && self.base_weights == other.base_weights
    }

    fn base_matches(&self, p0: &DiscreteMeasure) -> bool {
        &self.base_support == p0.support() && &self.base_weights == p0.weights()
    }
}

/// Barycentric projection of a plan coupling `p0` (rows) to `pj` (columns):
/// `b(xᵢ) = Σⱼ γᵢⱼ yⱼ / Σⱼ γᵢⱼ`.
pub fn barycentric_projection(
    plan: &TransportPlan,
    p0: &DiscreteMeasure,
    pj: &DiscreteMeasure,
) -> Result<TangentField> {
    if plan.n0() != p0.len() || plan.n1() != pj.len() {
        return Err(Error::BaseMismatch);
    }
    if p0.dim() != pj.dim() {
        return Err(Error::DimensionMismatch {
            left: p0.dim(),
            right: pj.dim(),
        });
    }
    let map_values = plan.row_conditional_means(pj)?;
    TangentField::from_map(p0, map_values, plan.method())
}

/// Barycentric projection of the entropic plan encoded by dual potentials,
/// streamed row-by-row without materializing the coupling. The potential
/// `f` cancels in the conditional mean, so each row is a softmax over
/// `(g_j − C_ij)/ε` — computed with a per-row max shift and immune to
/// underflow.
pub fn barycentric_from_potentials(
    p0: &DiscreteMeasure,
    pj: &DiscreteMeasure,
    pots: &EntropicPotentials,
) -> Result<TangentField> {
    if pots.f.len() != p0.len() || pots.g.len() != pj.len() {
        return Err(Error::BaseMismatch);
    }
    if p0.dim() != pj.dim() {
        return Err(Error::DimensionMismatch {
            left: p0.dim(),
            right: pj.dim(),
        });
    }
    let d = p0.dim();
    let n = pj.len();
    let xs = p0.support();
    let ys = pj.support();
    let y2: Vec<f64> = ys
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    let g = pots.g.as_slice().expect("contiguous");
    let eps = pots.epsilon;

    let rows: Vec<Vec<f64>> = (0..p0.len())
        .into_par_iter()
        .map(|i| {
            let xi = xs.row(i);
            let x2: f64 = xi.iter().map(|v| v * v).sum();
            let logit = |j: usize| -> f64 {
                let yj = ys.row(j);
                let mut dot = 0.0;
                for k in 0..d {
                    dot += xi[k] * yj[k];
                }
                let c = (x2 + y2[j] - 2.0 * dot).max(0.0);
                (g[j] - c) / eps
            };
            let mut mx = f64::NEG_INFINITY;
            for j in 0..n {
                mx = mx.max(logit(j));
            }
            let mut mass = 0.0;
            let mut acc = vec![0.0; d];
            for j in 0..n {
                let w = (logit(j) - mx).exp();
                if w > 0.0 {
                    mass += w;
                    let yj = ys.row(j);
                    for k in 0..d {
                        acc[k] += w * yj[k];
                    }
                }
            }
            for a in acc.iter_mut() {
                *a /= mass;
            }
            acc
        })
        .collect();

    let mut map_values = Array2::zeros((p0.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for k in 0..d {
            map_values[[i, k]] = row[k];
        }
    }
    TangentField::from_map(
        p0,
        map_values,
        PlanMethod::Entropic {
            epsilon: pots.epsilon,
        },
    )
}

/// Pushforward of `p0` along `t` times the displacement field:
/// atoms move to `xᵢ + t·(b(xᵢ) − xᵢ)`, weights are copied bitwise.
/// `t` interpolates the generalized geodesic and must lie in `[0, 1]`.
pub fn exp_map(p0: &DiscreteMeasure, field: &TangentField, t: f64) -> Result<DiscreteMeasure> {
    if !field.base_matches(p0) {
        return Err(Error::BaseMismatch);
    }
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(Error::InvalidInterpolation { t });
    }
    // Endpoints are exact: t = 0 returns the base, t = 1 the pushforward
    // through the map itself.
    let support = if t == 0.0 {
        p0.support().clone()
    } else if t == 1.0 {
        field.map_values().clone()
    } else {
        p0.support() + &(field.displacement() * t)
    };
    DiscreteMeasure::new(support, p0.weights().clone())
}

/// Pushforward of `p0` through the λ-combination of the fields' maps:
/// `x ↦ Σⱼ λⱼ bⱼ(x)`. Equals `exp_map` of the combined displacement at
/// `t = 1` since the weights sum to one.
pub fn hull_point(
    p0: &DiscreteMeasure,
    fields: &[TangentField],
    lambda: &[f64],
) -> Result<DiscreteMeasure> {
    if fields.is_empty() {
        return Err(Error::EmptyInput("tangent fields"));
    }
    if lambda.len() != fields.len() {
        return Err(Error::BadWeights(format!(
            "{} weights for {} fields",
            lambda.len(),
            fields.len()
        )));
    }
    let mut sum = 0.0;
    for &l in lambda {
        if !l.is_finite() || l < -crate::WEIGHT_TOL {
            return Err(Error::BadWeights(format!("weight {l} is negative")));
        }
        sum += l;
    }
    if (sum - 1.0).abs() > crate::WEIGHT_TOL {
        return Err(Error::BadWeights(format!("weights sum to {sum}")));
    }
    for f in fields {
        if !f.base_matches(p0) {
            return Err(Error::BaseMismatch);
        }
    }
    let mut support = Array2::zeros(p0.support().dim());
    for (f, &l) in fields.iter().zip(lambda) {
        if l != 0.0 {
            support.scaled_add(l, f.map_values());
        }
    }
    DiscreteMeasure::new(support, p0.weights().clone())
}

/// Combined displacement `Σⱼ λⱼ (bⱼ − id)` evaluated on the base support.
pub(crate) fn combined_displacement(fields: &[TangentField], lambda: &[f64]) -> Array2<f64> {
    let mut disp = Array2::zeros(fields[0].displacement().dim());
    for (f, &l) in fields.iter().zip(lambda) {
        if l != 0.0 {
            disp.scaled_add(l, f.displacement());
        }
    }
    disp
}

/// Weighted squared L²(P₀) norm of a field given as rows on the support.
pub(crate) fn weighted_norm2(rows: &Array2<f64>, weights: &Array1<f64>) -> f64 {
    let mut acc = 0.0;
    for (row, &w) in rows.rows().into_iter().zip(weights.iter()) {
        let mut sq = 0.0;
        for &x in row {
            sq += x * x;
        }
        acc += w * sq;
    }
    acc
}
