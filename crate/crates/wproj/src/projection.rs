//! The projection estimator: Gram assembly, the simplex-constrained
//! quadratic program for the optimal weights, and the orchestrator that
//! runs the full pipeline target → plans → fields → weights → projected
//! measure.
//!
//! The objective ‖Σⱼ λⱼ (bⱼ − id)‖²_{L²(P₀)} equals λᵀGλ where
//! `G[j][k] = Σᵢ wᵢ ⟨bⱼ(xᵢ) − xᵢ, bₖ(xᵢ) − xᵢ⟩`, so the weights solve a
//! QP over the probability simplex. Displacements are rescaled by a
//! stabilizing constant before assembly; a positive rescaling multiplies G
//! by a constant and leaves the argmin unchanged, so reported objectives
//! are converted back to original units.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::measures::DiscreteMeasure;
use crate::ot::{
    sinkhorn_potentials, solve_exact, w2_upper_bound, ExactOptions, SinkhornParams,
};
use crate::tangent::{
    barycentric_from_potentials, barycentric_projection, combined_displacement, hull_point,
    weighted_norm2, TangentField,
};
use crate::{Error, Result};

/// The J×J system of L²(P₀) inner products of (scaled) displacement fields.
#[derive(Debug, Clone)]
pub struct GramSystem {
    g: Array2<f64>,
    scale: f64,
}

impl GramSystem {
    /// The scaled Gram matrix.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.g
    }

    /// Stabilizing factor applied to displacements before assembly.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn j(&self) -> usize {
        self.g.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.g.nrows()).map(|i| self.g[[i, i]]).sum()
    }

    /// Objective value in original (unscaled) units for a given λ:
    /// `‖Σⱼ λⱼ (bⱼ − id)‖_{L²(P₀)} = sqrt(λᵀGλ) / scale`.
    pub fn objective_unscaled(&self, lambda: &[f64]) -> f64 {
        let q = quad_form(&self.g, lambda);
        q.max(0.0).sqrt() / self.scale
    }
}

/// Assembles the Gram system from displacement fields sharing a base.
///
/// The stabilizing constant is `1 / max(1, maxⱼ ‖bⱼ − id‖_{L²(P₀)})`: it
/// conditions the QP for measures with large coordinates (where squared
/// norms overflow the comfortable f64 range) without changing the argmin.
pub fn assemble_gram(fields: &[TangentField]) -> Result<GramSystem> {
    if fields.is_empty() {
        return Err(Error::EmptyInput("tangent fields"));
    }
    let first = &fields[0];
    for f in &fields[1..] {
        if !f.same_base(first) {
            return Err(Error::BaseMismatch);
        }
    }
    let j = fields.len();
    let weights = first.base_weights();

    let max_norm = fields
        .iter()
        .map(|f| f.displacement_norm2().sqrt())
        .fold(0.0f64, f64::max);
    let scale = 1.0 / max_norm.max(1.0);
    let s2 = scale * scale;

    let mut g = Array2::zeros((j, j));
    for a in 0..j {
        let da = fields[a].displacement();
        for b in a..j {
            let db = fields[b].displacement();
            let mut acc = 0.0;
            for ((ra, rb), &w) in da
                .rows()
                .into_iter()
                .zip(db.rows())
                .zip(weights.iter())
            {
                let mut dot = 0.0;
                for (x, y) in ra.iter().zip(rb.iter()) {
                    dot += x * y;
                }
                acc += w * dot;
            }
            g[[a, b]] = s2 * acc;
            g[[b, a]] = s2 * acc;
        }
    }
    Ok(GramSystem { g, scale })
}

fn quad_form(g: &Array2<f64>, lambda: &[f64]) -> f64 {
    let j = g.nrows();
    let mut acc = 0.0;
    for a in 0..j {
        let mut row = 0.0;
        for b in 0..j {
            row += g[[a, b]] * lambda[b];
        }
        acc += lambda[a] * row;
    }
    acc
}

fn mat_vec(g: &Array2<f64>, lambda: &[f64]) -> Vec<f64> {
    let j = g.nrows();
    (0..j)
        .map(|a| (0..j).map(|b| g[[a, b]] * lambda[b]).sum())
        .collect()
}

/// Options for the simplex QP solver.
#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// KKT-gap tolerance as a multiple of trace(G).
    pub tol_factor: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol_factor: 1e-9,
            max_iter: 100_000,
        }
    }
}

/// Output of the simplex QP.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub lambda: Vec<f64>,
    /// λᵀGλ − minₖ (Gλ)ₖ; zero certifies optimality over the simplex.
    pub kkt_gap: f64,
    pub converged: bool,
    /// False when the optimal face has dimension > 0 (G singular along it),
    /// i.e. the weights are not pinned down even though the projection is.
    pub unique: bool,
    pub iterations: usize,
}

/// Minimizes λᵀGλ over the probability simplex by fully-corrective
/// Frank–Wolfe with away steps.
///
/// Iterates stay in the simplex exactly. Vertex selection breaks ties
/// toward the lowest index; every few iterations the current support is
/// re-optimized exactly by an equality-constrained KKT solve (the
/// fully-corrective step), which drives the certificate gap to machine
/// precision once the optimal face is identified. Deterministic:
/// initialization at the barycenter, no randomness.
pub fn solve_simplex_qp(gram: &Array2<f64>, opts: &QpOptions) -> QpSolution {
    let j = gram.nrows();
    assert_eq!(j, gram.ncols(), "Gram matrix must be square");
    if j == 1 {
        return QpSolution {
            lambda: vec![1.0],
            kkt_gap: 0.0,
            converged: true,
            unique: true,
            iterations: 0,
        };
    }
    let trace = (0..j).map(|i| gram[[i, i]]).sum::<f64>();
    let tol = (opts.tol_factor * trace).max(f64::MIN_POSITIVE);

    let mut lambda = vec![1.0 / j as f64; j];
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;

        let q = mat_vec(gram, &lambda);
        let obj = lambda.iter().zip(&q).map(|(l, qk)| l * qk).sum::<f64>();

        // Frank-Wolfe vertex: most negative directional derivative.
        let mut fw = 0usize;
        for k in 1..j {
            if q[k] < q[fw] {
                fw = k;
            }
        }
        let gap = obj - q[fw];
        if gap <= tol {
            converged = true;
            break;
        }

        // Away vertex: worst direction currently in the support.
        let mut away = None;
        for k in 0..j {
            if lambda[k] > 0.0 && away.map_or(true, |a: usize| q[k] > q[a]) {
                away = Some(k);
            }
        }
        let away = away.expect("simplex iterate has nonempty support");

        let away_gap = q[away] - obj;
        let (dir_from, dir_to, gamma_max, is_away) = if away_gap > gap && lambda[away] < 1.0 {
            // Away step: move mass off the `away` vertex.
            let gm = lambda[away] / (1.0 - lambda[away]);
            (away, usize::MAX, gm, true)
        } else {
            (usize::MAX, fw, 1.0, false)
        };

        // Exact line search for the quadratic along d:
        //   FW:   d = e_fw − λ;   away: d = λ − e_away.
        // γ* = −(λᵀGd)/(dᵀGd), clipped to [0, γmax].
        let d: Vec<f64> = (0..j)
            .map(|k| {
                if is_away {
                    lambda[k] - if k == dir_from { 1.0 } else { 0.0 }
                } else {
                    (if k == dir_to { 1.0 } else { 0.0 }) - lambda[k]
                }
            })
            .collect();
        let gd = mat_vec(gram, &d);
        let num: f64 = lambda.iter().zip(&gd).map(|(l, v)| l * v).sum();
        let den: f64 = d.iter().zip(&gd).map(|(x, v)| x * v).sum();
        let gamma = if den > 0.0 {
            (-num / den).clamp(0.0, gamma_max)
        } else {
            gamma_max
        };

        for k in 0..j {
            lambda[k] += gamma * d[k];
        }
        if is_away && (gamma - gamma_max).abs() <= f64::EPSILON * gamma_max.max(1.0) {
            lambda[dir_from] = 0.0; // drop step
        }
        // Clean tiny negatives from roundoff and renormalize.
        let mut sum = 0.0;
        for l in lambda.iter_mut() {
            if *l < 0.0 {
                *l = 0.0;
            }
            sum += *l;
        }
        for l in lambda.iter_mut() {
            *l /= sum;
        }

        // Fully-corrective step: exact solve on the current support.
        if iterations % 8 == 0 {
            correct_on_support(gram, &mut lambda);
        }
    }

    correct_on_support(gram, &mut lambda);
    let q = mat_vec(gram, &lambda);
    let obj = lambda.iter().zip(&q).map(|(l, qk)| l * qk).sum::<f64>();
    let min_q = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let kkt_gap = (obj - min_q).max(0.0);
    if kkt_gap <= tol {
        converged = true;
    }

    let unique = optimum_is_unique(gram, &q, obj, trace, tol);

    QpSolution {
        lambda,
        kkt_gap,
        converged,
        unique,
        iterations,
    }
}

/// Re-optimizes λ exactly over its current support face: minimize λᵀGλ
/// subject to Σλ = 1 on the support, via the KKT system
/// `[2G_SS 1; 1ᵀ 0][λ; ν] = [0; 1]`. If the unconstrained face optimum
/// leaves the simplex, steps to the boundary, drops the blocking index and
/// repeats (at most |S| times).
fn correct_on_support(gram: &Array2<f64>, lambda: &mut [f64]) {
    let j = lambda.len();
    let mut support: Vec<usize> = (0..j).filter(|&k| lambda[k] > 0.0).collect();
    loop {
        if support.len() <= 1 {
            for l in lambda.iter_mut() {
                *l = 0.0;
            }
            lambda[support[0]] = 1.0;
            return;
        }
        let s = support.len();
        // KKT system over the face.
        let mut m = vec![vec![0.0; s + 1]; s + 1];
        let mut rhs = vec![0.0; s + 1];
        for (a, &ia) in support.iter().enumerate() {
            for (b, &ib) in support.iter().enumerate() {
                m[a][b] = 2.0 * gram[[ia, ib]];
            }
            m[a][s] = 1.0;
            m[s][a] = 1.0;
        }
        rhs[s] = 1.0;
        let Some(sol) = solve_dense(&mut m, &mut rhs) else {
            return; // singular face; keep the FW iterate
        };

        // Feasible on the face?
        if sol[..s].iter().all(|&x| x >= -1e-12) {
            for l in lambda.iter_mut() {
                *l = 0.0;
            }
            let mut total = 0.0;
            for (a, &ia) in support.iter().enumerate() {
                lambda[ia] = sol[a].max(0.0);
                total += lambda[ia];
            }
            for l in lambda.iter_mut() {
                *l /= total;
            }
            return;
        }

        // Step from the current point toward the face optimum until the
        // first coordinate hits zero; drop it and re-solve.
        let mut t_max = 1.0f64;
        let mut drop = None;
        for (a, &ia) in support.iter().enumerate() {
            let from = lambda[ia];
            let to = sol[a];
            if to < from {
                let t = from / (from - to);
                if t < t_max {
                    t_max = t;
                    drop = Some(a);
                }
            }
        }
        let Some(drop) = drop else {
            return;
        };
        for (a, &ia) in support.iter().enumerate() {
            lambda[ia] += t_max * (sol[a] - lambda[ia]);
            if lambda[ia] < 0.0 {
                lambda[ia] = 0.0;
            }
        }
        lambda[support[drop]] = 0.0;
        support.remove(drop);
        let total: f64 = lambda.iter().sum();
        for l in lambda.iter_mut() {
            *l /= total;
        }
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(m: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col].abs() <= 1e-300 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let diag = m[col][col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[r][col] / diag;
            if factor != 0.0 {
                for c in col..n {
                    m[r][c] -= factor * m[col][c];
                }
                rhs[r] -= factor * rhs[col];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

/// Uniqueness of the QP minimizer: the optimal face is spanned by the
/// vertices whose gradient ties the optimum; λ* is unique iff G is positive
/// definite on that face's affine-hull directions. Detected via the
/// smallest eigenvalue of the reduced Hessian.
fn optimum_is_unique(gram: &Array2<f64>, q: &[f64], obj: f64, trace: f64, tol: f64) -> bool {
    let j = q.len();
    let face_tol = tol.max(1e-12 * trace.max(1.0));
    let face: Vec<usize> = (0..j).filter(|&k| q[k] - obj <= face_tol).collect();
    if face.len() <= 1 {
        return true;
    }
    // Reduced Hessian on directions e_{s0} − e_{st}, t = 1..|S|-1.
    let s0 = face[0];
    let r = face.len() - 1;
    let mut h = Array2::zeros((r, r));
    for a in 0..r {
        for b in 0..r {
            let sa = face[a + 1];
            let sb = face[b + 1];
            h[[a, b]] =
                gram[[s0, s0]] - gram[[s0, sb]] - gram[[sa, s0]] + gram[[sa, sb]];
        }
    }
    let min_eig = smallest_eigenvalue_symmetric(&h);
    min_eig > 1e-10 * trace.max(1e-300)
}

/// Smallest eigenvalue of a small symmetric matrix by cyclic Jacobi.
fn smallest_eigenvalue_symmetric(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off <= 1e-30 * (1.0 + a.iter().map(|x| x * x).sum::<f64>()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).fold(f64::INFINITY, f64::min)
}

/// Exhaustive simplex grid search at the given step; verification oracle
/// for small J.
pub fn grid_search_simplex_qp(gram: &Array2<f64>, step: f64) -> (Vec<f64>, f64) {
    let j = gram.nrows();
    let ticks = (1.0 / step).round() as usize;
    let mut best = vec![0.0; j];
    best[0] = 1.0;
    let mut best_val = quad_form(gram, &best);
    let mut current = vec![0.0; j];
    fn recurse(
        gram: &Array2<f64>,
        ticks: usize,
        left: usize,
        pos: usize,
        current: &mut Vec<f64>,
        best: &mut Vec<f64>,
        best_val: &mut f64,
    ) {
        let j = current.len();
        if pos == j - 1 {
            current[pos] = left as f64 / ticks as f64;
            let val = quad_form(gram, current);
            if val < *best_val {
                *best_val = val;
                best.copy_from_slice(current);
            }
            return;
        }
        for take in 0..=left {
            current[pos] = take as f64 / ticks as f64;
            recurse(gram, ticks, left - take, pos + 1, current, best, best_val);
        }
    }
    recurse(
        gram,
        ticks,
        ticks,
        0,
        &mut current,
        &mut best,
        &mut best_val,
    );
    (best, best_val)
}

/// Which transport backend feeds the tangent lift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Exact,
    Entropic,
}

/// Options for [`project`].
#[derive(Debug, Clone)]
pub struct ProjectOptions {
    pub solver: SolverKind,
    pub sinkhorn: SinkhornParams,
    pub exact: ExactOptions,
    pub qp: QpOptions,
    /// Solve the per-control transport problems in parallel.
    pub parallel: bool,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            solver: SolverKind::Exact,
            sinkhorn: SinkhornParams::default(),
            exact: ExactOptions::default(),
            qp: QpOptions::default(),
            parallel: true,
        }
    }
}

/// Result of a projection run.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// Optimal simplex weights, one per control.
    pub lambda: Vec<f64>,
    /// Residual norm ‖Σ λ*ⱼ (bⱼ − id)‖_{L²(P₀)} in original units.
    pub objective: f64,
    /// Pushforward of the target through Σ λ*ⱼ bⱼ.
    pub projected: DiscreteMeasure,
    pub kkt_gap: f64,
    /// `sqrt(cost)` of each target↔control plan: the W₂ distance for exact
    /// plans, an entropic upper bound otherwise.
    pub per_control_w2: Vec<f64>,
    pub unique: bool,
    /// False when the QP or any Sinkhorn subproblem hit its iteration cap.
    pub converged: bool,
    pub method: String,
    pub n0: usize,
    pub j: usize,
    /// Tangent fields kept for diagnostics (variational-inequality checks).
    pub fields: Vec<TangentField>,
    pub gram: GramSystem,
}

/// Machine-readable view of a [`ProjectionResult`] (`weights.json`).
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionSummary {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub kkt_gap: f64,
    pub unique: bool,
    pub converged: bool,
    pub per_control_w2: Vec<f64>,
    pub n0: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProjectionResult {
    pub fn summary(&self, seed: Option<u64>) -> ProjectionSummary {
        ProjectionSummary {
            lambda: self.lambda.clone(),
            objective: self.objective,
            kkt_gap: self.kkt_gap,
            unique: self.unique,
            converged: self.converged,
            per_control_w2: self.per_control_w2.clone(),
            n0: self.n0,
            j: self.j,
            method: self.method.clone(),
            seed,
        }
    }

    /// Weights with entries below `1e-6` displayed as exact zeros
    /// (sparsity presentation; machine output keeps full precision).
    pub fn lambda_display(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .map(|&l| if l < 1e-6 { 0.0 } else { l })
            .collect()
    }
}

/// Runs the full projection pipeline.
pub fn project(
    p0: &DiscreteMeasure,
    controls: &[DiscreteMeasure],
    opts: &ProjectOptions,
) -> Result<ProjectionResult> {
    if controls.is_empty() {
        return Err(Error::EmptyInput("controls"));
    }
    for c in controls {
        if c.dim() != p0.dim() {
            return Err(Error::DimensionMismatch {
                left: p0.dim(),
                right: c.dim(),
            });
        }
    }

    let lift = |(idx, pj): (usize, &DiscreteMeasure)| -> Result<(TangentField, f64, bool)> {
        let wrap = |e: Error| Error::PartialFailure {
            index: idx,
            source: Box::new(e),
        };
        match opts.solver {
            SolverKind::Exact => {
                let plan = solve_exact(p0, pj, &opts.exact).map_err(wrap)?;
                let w2 = w2_upper_bound(&plan);
                let field = barycentric_projection(&plan, p0, pj).map_err(wrap)?;
                Ok((field, w2, true))
            }
            SolverKind::Entropic => {
                let pots = sinkhorn_potentials(p0, pj, &opts.sinkhorn).map_err(wrap)?;
                let cost = crate::ot::entropic_cost_from_potentials(p0, pj, &pots);
                let field = barycentric_from_potentials(p0, pj, &pots).map_err(wrap)?;
                Ok((field, cost.max(0.0).sqrt(), pots.converged))
            }
        }
    };

    let lifted: Vec<(TangentField, f64, bool)> = if opts.parallel {
        controls
            .par_iter()
            .enumerate()
            .map(lift)
            .collect::<Result<_>>()?
    } else {
        controls.iter().enumerate().map(lift).collect::<Result<_>>()?
    };

    let fields: Vec<TangentField> = lifted.iter().map(|(f, _, _)| f.clone()).collect();
    let per_control_w2: Vec<f64> = lifted.iter().map(|(_, w, _)| *w).collect();
    let transport_converged = lifted.iter().all(|(_, _, c)| *c);

    let gram = assemble_gram(&fields)?;
    let qp = solve_simplex_qp(gram.matrix(), &opts.qp);

    let projected = hull_point(p0, &fields, &qp.lambda)?;
    // Objective from the fields directly (original units); equals
    // sqrt(λᵀGλ)/scale up to roundoff, which the tests pin down.
    let disp = combined_displacement(&fields, &qp.lambda);
    let objective = weighted_norm2(&disp, fields[0].base_weights()).max(0.0).sqrt();

    Ok(ProjectionResult {
        lambda: qp.lambda,
        objective,
        projected,
        kkt_gap: qp.kkt_gap,
        per_control_w2,
        unique: qp.unique,
        converged: qp.converged && transport_converged,
        method: match opts.solver {
            SolverKind::Exact => "exact".to_string(),
            SolverKind::Entropic => "entropic".to_string(),
        },
        n0: p0.len(),
        j: controls.len(),
        fields,
        gram,
    })
}

/// Per-vertex report of the variational inequality
/// ⟨id − f*, bₖ − f*⟩_{L²(P₀)} ≤ tol, where f* = Σⱼ λⱼ bⱼ.
///
/// Nonpositive slacks at every vertex certify that f* is the metric
/// projection of the identity onto the convex hull of the maps; the check
/// is computed from the fields directly and therefore cross-checks the
/// Gram/QP route.
#[derive(Debug, Clone, Serialize)]
pub struct ViReport {
    pub slacks: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

pub fn variational_inequality_check(
    fields: &[TangentField],
    lambda: &[f64],
    tol: f64,
) -> Result<ViReport> {
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
    let weights = fields[0].base_weights();
    let r = combined_displacement(fields, lambda); // f* − id on atoms
    let r_norm2 = weighted_norm2(&r, weights);

    // slack_k = ⟨id − f*, b_k − f*⟩ = ‖r‖² − ⟨r, d_k⟩.
    let slacks: Vec<f64> = fields
        .iter()
        .map(|f| {
            let mut dot = 0.0;
            for ((rr, dd), &w) in r
                .rows()
                .into_iter()
                .zip(f.displacement().rows())
                .zip(weights.iter())
            {
                let mut acc = 0.0;
                for (a, b) in rr.iter().zip(dd.iter()) {
                    acc += a * b;
                }
                dot += w * acc;
            }
            r_norm2 - dot
        })
        .collect();
    let pass = slacks.iter().all(|&s| s <= tol);
    Ok(ViReport { slacks, tol, pass })
}
