//! Discrete optimal transport with squared-Euclidean ground cost.
//!
//! Two solver routes share the [`TransportPlan`] output: [`solve_exact`]
//! runs a network simplex on the dense transportation polytope and returns
//! the exact minimizer; [`solve_entropic`] runs log-stabilized Sinkhorn
//! iterations and returns the entropic plan together with its unregularized
//! cost. [`oracle::brute_force_assignment`] enumerates permutation couplings
//! on tiny uniform instances and exists to check the other two.

use ndarray::Array2;

use crate::measures::DiscreteMeasure;
use crate::{Error, Result};

mod entropic;
mod exact;
pub mod oracle;

pub(crate) use entropic::cost_from_potentials as entropic_cost_from_potentials;
pub use entropic::{
    plan_from_potentials, sinkhorn_potentials, solve_entropic, EntropicPotentials, SinkhornParams,
};
pub use exact::{solve_exact, ExactOptions};

/// Default cap on dense problem size, in matrix entries.
pub const DEFAULT_SIZE_BUDGET: u128 = 500_000_000;

/// Squared Euclidean distances between the supports of two measures.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    values: Array2<f64>,
}

impl CostMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn source_n(&self) -> usize {
        self.values.nrows()
    }

    pub fn target_n(&self) -> usize {
        self.values.ncols()
    }

    /// Maximum entry; zero for a single coincident pair of Diracs.
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Median entry, computed on a deterministic stride subsample of at
    /// most ~2^20 entries for large matrices.
    pub fn median_subsampled(&self) -> f64 {
        let (m, n) = self.values.dim();
        let cap = 1usize << 20;
        let total = m * n;
        let stride = total.div_ceil(cap).max(1);
        let mut vals: Vec<f64> = self.values.iter().cloned().step_by(stride).collect();
        if vals.is_empty() {
            return 0.0;
        }
        let mid = vals.len() / 2;
        vals.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        vals[mid]
    }
}

/// `values[i][j] = |xᵢ − yⱼ|²`, checked against the `n₀·n₁ ≤ budget` cap.
pub fn cost_matrix_with_budget(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    budget: u128,
) -> Result<CostMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let entries = a.len() as u128 * b.len() as u128;
    if entries > budget {
        return Err(Error::SizeBudgetExceeded { entries, budget });
    }
    let d = a.dim();
    let (xs, ys) = (a.support(), b.support());
    let mut values = Array2::zeros((a.len(), b.len()));
    for (i, x) in xs.rows().into_iter().enumerate() {
        let mut row = values.row_mut(i);
        for (j, y) in ys.rows().into_iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = x[k] - y[k];
                acc += diff * diff;
            }
            row[j] = acc;
        }
    }
    Ok(CostMatrix { values })
}

/// Cost matrix under the default size budget.
pub fn cost_matrix(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<CostMatrix> {
    cost_matrix_with_budget(a, b, DEFAULT_SIZE_BUDGET)
}

/// How a plan was produced.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlanMethod {
    Exact,
    Entropic { epsilon: f64 },
    Oracle,
}

impl PlanMethod {
    pub fn is_entropic(&self) -> bool {
        matches!(self, PlanMethod::Entropic { .. })
    }
}

/// One nonzero coupling entry.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PlanEntry {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

#[derive(Debug, Clone)]
enum Coupling {
    /// Row-major sorted triplets (exact and oracle plans: at most
    /// `n₀ + n₁ − 1` of them).
    Sparse(Vec<PlanEntry>),
    /// Full matrix (entropic plans are dense by nature).
    Dense(Array2<f64>),
}

/// A coupling between two discrete measures, with its transport cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    coupling: Coupling,
    n0: usize,
    n1: usize,
    cost: f64,
    method: PlanMethod,
    marginal_residual: f64,
    converged: bool,
}

impl TransportPlan {
    pub(crate) fn from_sparse(
        mut entries: Vec<PlanEntry>,
        n0: usize,
        n1: usize,
        cost: f64,
        method: PlanMethod,
        source: &DiscreteMeasure,
        target: &DiscreteMeasure,
    ) -> Self {
        entries.sort_unstable_by_key(|e| (e.row, e.col));
        let mut plan = Self {
            coupling: Coupling::Sparse(entries),
            n0,
            n1,
            cost,
            method,
            marginal_residual: 0.0,
            converged: true,
        };
        plan.marginal_residual = plan.compute_marginal_residual(source, target);
        plan
    }

    pub(crate) fn from_dense(
        coupling: Array2<f64>,
        cost: f64,
        method: PlanMethod,
        converged: bool,
        source: &DiscreteMeasure,
        target: &DiscreteMeasure,
    ) -> Self {
        let (n0, n1) = coupling.dim();
        let mut plan = Self {
            coupling: Coupling::Dense(coupling),
            n0,
            n1,
            cost,
            method,
            marginal_residual: 0.0,
            converged,
        };
        plan.marginal_residual = plan.compute_marginal_residual(source, target);
        plan
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Transport cost ⟨coupling, cost matrix⟩ — for entropic plans the
    /// unregularized cost of the returned coupling.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn method(&self) -> PlanMethod {
        self.method
    }

    /// Max deviation of row/column sums from the source/target weights.
    pub fn marginal_residual(&self) -> f64 {
        self.marginal_residual
    }

    /// False when an iterative solver hit its iteration cap; the plan is
    /// then the best iterate.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Nonzero entries in row-major order.
    pub fn entries(&self) -> Vec<PlanEntry> {
        match &self.coupling {
            Coupling::Sparse(e) => e.clone(),
            Coupling::Dense(m) => {
                let mut out = Vec::new();
                for ((i, j), &v) in m.indexed_iter() {
                    if v > 0.0 {
                        out.push(PlanEntry {
                            row: i,
                            col: j,
                            mass: v,
                        });
                    }
                }
                out
            }
        }
    }

    /// Full coupling matrix (allocates for sparse plans).
    pub fn coupling_dense(&self) -> Array2<f64> {
        match &self.coupling {
            Coupling::Dense(m) => m.clone(),
            Coupling::Sparse(entries) => {
                let mut m = Array2::zeros((self.n0, self.n1));
                for e in entries {
                    m[[e.row, e.col]] += e.mass;
                }
                m
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n0];
        match &self.coupling {
            Coupling::Sparse(entries) => {
                for e in entries {
                    sums[e.row] += e.mass;
                }
            }
            Coupling::Dense(m) => {
                for (i, row) in m.rows().into_iter().enumerate() {
                    sums[i] = row.sum();
                }
            }
        }
        sums
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n1];
        match &self.coupling {
            Coupling::Sparse(entries) => {
                for e in entries {
                    sums[e.col] += e.mass;
                }
            }
            Coupling::Dense(m) => {
                for (j, col) in m.columns().into_iter().enumerate() {
                    sums[j] = col.sum();
                }
            }
        }
        sums
    }

    fn compute_marginal_residual(
        &self,
        source: &DiscreteMeasure,
        target: &DiscreteMeasure,
    ) -> f64 {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let mut res: f64 = 0.0;
        for (r, &w) in rows.iter().zip(source.weights()) {
            res = res.max((r - w).abs());
        }
        for (c, &w) in cols.iter().zip(target.weights()) {
            res = res.max((c - w).abs());
        }
        res
    }

    /// Conditional means of the disintegration: `b(xᵢ) = Σⱼ γᵢⱼ yⱼ / Σⱼ γᵢⱼ`.
    /// Rows of the result are indexed like the source support. Rows whose
    /// disintegration is a single atom copy that atom exactly, so plans
    /// induced by maps collapse to the map without roundoff.
    pub(crate) fn row_conditional_means(&self, target: &DiscreteMeasure) -> Result<Array2<f64>> {
        let d = target.dim();
        let ys = target.support();
        let mut out = Array2::zeros((self.n0, d));
        let mut mass = vec![0.0; self.n0];
        // Column of the row's sole support atom; multi-atom rows get None.
        let mut sole: Vec<Option<usize>> = vec![None; self.n0];
        let mut counts = vec![0u32; self.n0];
        match &self.coupling {
            Coupling::Sparse(entries) => {
                for e in entries {
                    mass[e.row] += e.mass;
                    counts[e.row] += 1;
                    sole[e.row] = Some(e.col);
                    let y = ys.row(e.col);
                    let mut row = out.row_mut(e.row);
                    for k in 0..d {
                        row[k] += e.mass * y[k];
                    }
                }
            }
            Coupling::Dense(m) => {
                for (i, grow) in m.rows().into_iter().enumerate() {
                    let mut row = out.row_mut(i);
                    for (j, &g) in grow.iter().enumerate() {
                        if g > 0.0 {
                            mass[i] += g;
                            counts[i] += 1;
                            sole[i] = Some(j);
                            let y = ys.row(j);
                            for k in 0..d {
                                row[k] += g * y[k];
                            }
                        }
                    }
                }
            }
        }
        for (i, &m) in mass.iter().enumerate() {
            if m <= 0.0 {
                return Err(Error::ZeroRowMass { row: i });
            }
            let mut row = out.row_mut(i);
            if counts[i] == 1 {
                let y = ys.row(sole[i].expect("count 1 implies a column"));
                for k in 0..d {
                    row[k] = y[k];
                }
            } else {
                for k in 0..d {
                    row[k] /= m;
                }
            }
        }
        Ok(out)
    }
}

/// W₂ distance from an exact (or oracle) plan: `sqrt(cost)`.
///
/// Entropic plans are rejected with [`Error::ApproximatePlan`]; their cost
/// only upper-bounds the squared distance. Use [`w2_upper_bound`] for those.
pub fn w2_distance(plan: &TransportPlan) -> Result<f64> {
    if plan.method.is_entropic() {
        return Err(Error::ApproximatePlan);
    }
    Ok(plan.cost.max(0.0).sqrt())
}

/// `sqrt(cost)` for any plan; an upper bound on W₂ for feasible couplings.
pub fn w2_upper_bound(plan: &TransportPlan) -> f64 {
    plan.cost.max(0.0).sqrt()
}
