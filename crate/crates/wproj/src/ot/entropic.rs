//! Entropy-regularized optimal transport via Sinkhorn iterations.
//!
//! The implementation keeps dual potentials `(f, g)` in the log domain and
//! iterates linear-domain scaling vectors `(u, v)` against a cached kernel
//! `K̃ᵢⱼ = exp((fᵢ + gⱼ − Cᵢⱼ)/ε)`. Whenever a scaling vector leaves a safe
//! magnitude window — or a kernel row/column sum underflows to zero — the
//! scalings are absorbed into the potentials and the kernel is rebuilt
//! ("stabilized scaling"). This keeps iterations at matrix-vector speed
//! while preventing the under/overflow that plagues plain matrix scaling at
//! small ε. The ground cost is never materialized; kernel entries are
//! computed from the supports on the fly.
//!
//! Results are deterministic for fixed inputs and parameters: parallelism
//! is over fixed-size row chunks whose partial results are combined in
//! chunk order, independent of thread count.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::{PlanMethod, TransportPlan, DEFAULT_SIZE_BUDGET};
use crate::measures::DiscreteMeasure;
use crate::{Error, Result};

/// |ln u| threshold that triggers absorption into the potentials.
const ABSORB_THRESHOLD: f64 = 150.0;
/// Iterations between convergence checks (each check costs one matvec).
const CHECK_EVERY: usize = 5;
/// Rows per parallel work unit; fixed so results do not depend on the
/// number of worker threads.
const ROW_CHUNK: usize = 256;

/// Parameters for the Sinkhorn solver.
#[derive(Debug, Clone, Copy)]
pub struct SinkhornParams {
    /// Regularization strength; `None` selects `0.05 · median(cost)`,
    /// with the median taken over a deterministic subsample for large
    /// problems.
    pub epsilon: Option<f64>,
    /// Iteration cap. On hitting it the best iterate is returned with
    /// `converged = false`.
    pub max_iter: usize,
    /// Convergence threshold on the max marginal residual.
    pub tol: f64,
    /// Cap on `n₀ · n₁` for the dense kernel.
    pub size_budget: u128,
    /// Warm-start annealing: when the target ε is far below the cost
    /// scale, run short stages at geometrically decreasing ε before
    /// polishing at the target. Deterministic schedule; the fixed point at
    /// the target ε is unchanged.
    pub epsilon_scaling: bool,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            epsilon: None,
            max_iter: 10_000,
            tol: 1e-9,
            size_budget: DEFAULT_SIZE_BUDGET,
            epsilon_scaling: true,
        }
    }
}

/// Converged dual state of an entropic solve.
#[derive(Debug, Clone)]
pub struct EntropicPotentials {
    /// Potential on source atoms (scalings fully absorbed).
    pub f: Array1<f64>,
    /// Potential on target atoms.
    pub g: Array1<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_residual: f64,
}

struct Problem<'a> {
    xs: &'a Array2<f64>,
    ys: &'a Array2<f64>,
    x2: Vec<f64>,
    y2: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(a: &'a DiscreteMeasure, b: &'a DiscreteMeasure) -> Self {
        let sq = |m: &Array2<f64>| -> Vec<f64> {
            m.rows()
                .into_iter()
                .map(|r| r.iter().map(|x| x * x).sum())
                .collect()
        };
        Self {
            xs: a.support(),
            ys: b.support(),
            x2: sq(a.support()),
            y2: sq(b.support()),
        }
    }

    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        let xi = self.xs.row(i);
        let yj = self.ys.row(j);
        let mut dot = 0.0;
        for k in 0..xi.len() {
            dot += xi[k] * yj[k];
        }
        (self.x2[i] + self.y2[j] - 2.0 * dot).max(0.0)
    }

    /// Deterministic subsampled median of the cost matrix.
    fn median_cost(&self, m: usize, n: usize) -> f64 {
        let cap = 1usize << 20;
        let total = m.saturating_mul(n);
        let stride = total.div_ceil(cap).max(1);
        let mut vals = Vec::with_capacity(total.div_ceil(stride));
        let mut idx = 0usize;
        while idx < total {
            vals.push(self.cost(idx / n, idx % n));
            idx += stride;
        }
        if vals.is_empty() {
            return 0.0;
        }
        let mid = vals.len() / 2;
        vals.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        vals[mid]
    }

    fn fill_kernel(&self, kernel: &mut Array2<f64>, f: &[f64], g: &[f64], eps: f64) {
        let n = g.len();
        let rows: Vec<(usize, &mut [f64])> = kernel
            .as_slice_mut()
            .expect("kernel is contiguous")
            .chunks_mut(n)
            .enumerate()
            .collect();
        rows.into_par_iter().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = ((f[i] + g[j] - self.cost(i, j)) / eps).exp();
            }
        });
    }
}

/// `out[i] = Σ_j K[i,j] v[j]`, parallel over fixed row chunks.
fn kernel_times(kernel: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let k = kernel.as_slice().expect("contiguous");
    out.par_chunks_mut(ROW_CHUNK)
        .enumerate()
        .for_each(|(chunk_idx, chunk)| {
            let base = chunk_idx * ROW_CHUNK;
            for (off, slot) in chunk.iter_mut().enumerate() {
                let row = &k[(base + off) * n..(base + off + 1) * n];
                let mut acc = 0.0;
                for j in 0..n {
                    acc += row[j] * v[j];
                }
                *slot = acc;
            }
        });
}

/// `out[j] = Σ_i K[i,j] u[i]`; row chunks accumulate privately and are
/// combined in chunk order.
fn kernel_transpose_times(kernel: &Array2<f64>, u: &[f64], out: &mut [f64]) {
    let (m, n) = kernel.dim();
    let k = kernel.as_slice().expect("contiguous");
    let partials: Vec<Vec<f64>> = (0..m.div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|chunk_idx| {
            let lo = chunk_idx * ROW_CHUNK;
            let hi = (lo + ROW_CHUNK).min(m);
            let mut acc = vec![0.0; n];
            for i in lo..hi {
                let ui = u[i];
                if ui == 0.0 {
                    continue;
                }
                let row = &k[i * n..(i + 1) * n];
                for j in 0..n {
                    acc[j] += ui * row[j];
                }
            }
            acc
        })
        .collect();
    out.iter_mut().for_each(|x| *x = 0.0);
    for acc in partials {
        for j in 0..n {
            out[j] += acc[j];
        }
    }
}

/// Runs stabilized Sinkhorn and returns the dual potentials.
pub fn sinkhorn_potentials(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    params: &SinkhornParams,
) -> Result<EntropicPotentials> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (m, n) = (a.len(), b.len());
    let entries = m as u128 * n as u128;
    if entries > params.size_budget {
        return Err(Error::SizeBudgetExceeded {
            entries,
            budget: params.size_budget,
        });
    }
    let prob = Problem::new(a, b);
    let eps = match params.epsilon {
        Some(e) => {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidOption(format!("epsilon {e} must be > 0")));
            }
            e
        }
        None => {
            let med = prob.median_cost(m, n);
            if med > 0.0 {
                0.05 * med
            } else {
                // Degenerate geometry (all costs zero); any ε works.
                1e-9
            }
        }
    };

    let aw = a.weights().as_slice().expect("contiguous");
    let bw = b.weights().as_slice().expect("contiguous");

    let mut state = State {
        f: vec![0.0f64; m],
        g: vec![0.0f64; n],
        kernel: Array2::zeros((m, n)),
    };

    // Annealing schedule: geometric descent from the cost scale down to
    // the target ε, a fixed number of iterations per stage.
    let mut iterations = 0usize;
    if params.epsilon_scaling {
        let start = 0.5 * prob.median_cost(m, n);
        if start > eps {
            let mut stage_eps = start;
            while stage_eps > eps && iterations + STAGE_ITERS < params.max_iter {
                let (used, _res, _conv) = run_stage(
                    &prob,
                    &mut state,
                    aw,
                    bw,
                    stage_eps,
                    STAGE_ITERS,
                    0.0, // never "converges" early; fixed-length stage
                );
                iterations += used;
                stage_eps *= 0.25;
            }
        }
    }

    let budget = params.max_iter.saturating_sub(iterations).max(1);
    let (used, residual, converged) =
        run_stage(&prob, &mut state, aw, bw, eps, budget, params.tol);
    iterations += used;

    Ok(EntropicPotentials {
        f: Array1::from_vec(state.f),
        g: Array1::from_vec(state.g),
        epsilon: eps,
        iterations,
        converged,
        marginal_residual: residual,
    })
}

/// Iterations per annealing stage.
const STAGE_ITERS: usize = 12;

struct State {
    f: Vec<f64>,
    g: Vec<f64>,
    kernel: Array2<f64>,
}

/// Runs scaling iterations at a fixed ε until the marginal residual drops
/// below `tol` or `max_iters` is exhausted. Scalings are absorbed into the
/// potentials on exit, so `state.f/g` always describe the current iterate.
fn run_stage(
    prob: &Problem,
    state: &mut State,
    aw: &[f64],
    bw: &[f64],
    eps: f64,
    max_iters: usize,
    tol: f64,
) -> (usize, f64, bool) {
    let m = aw.len();
    let n = bw.len();
    let mut u = vec![1.0f64; m];
    let mut v = vec![1.0f64; n];
    let mut kv = vec![0.0f64; m];
    let mut ktu = vec![0.0f64; n];
    prob.fill_kernel(&mut state.kernel, &state.f, &state.g, eps);

    let absorb = |state: &mut State, u: &mut [f64], v: &mut [f64]| {
        for (fi, ui) in state.f.iter_mut().zip(u.iter_mut()) {
            *fi += eps * ui.ln();
            *ui = 1.0;
        }
        for (gj, vj) in state.g.iter_mut().zip(v.iter_mut()) {
            *gj += eps * vj.ln();
            *vj = 1.0;
        }
    };

    let mut iterations = 0usize;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    'outer: while iterations < max_iters {
        iterations += 1;

        kernel_times(&state.kernel, &v, &mut kv);
        if kv.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            // The cached kernel lost the mass of some row; fold the current
            // scalings in and redo this row update at full precision.
            absorb(state, &mut u, &mut v);
            stabilize_rows(prob, &mut state.f, &state.g, aw, eps);
            prob.fill_kernel(&mut state.kernel, &state.f, &state.g, eps);
            kernel_times(&state.kernel, &v, &mut kv);
            if kv.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                break; // hopeless row; keep best iterate
            }
        }
        for i in 0..m {
            u[i] = aw[i] / kv[i];
        }

        kernel_transpose_times(&state.kernel, &u, &mut ktu);
        if ktu.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
            absorb(state, &mut u, &mut v);
            stabilize_cols(prob, &state.f, &mut state.g, bw, eps);
            prob.fill_kernel(&mut state.kernel, &state.f, &state.g, eps);
            continue 'outer;
        }
        for j in 0..n {
            v[j] = bw[j] / ktu[j];
        }

        let max_log = u
            .iter()
            .chain(v.iter())
            .fold(0.0f64, |acc, &x| acc.max(x.ln().abs()));
        if max_log > ABSORB_THRESHOLD {
            absorb(state, &mut u, &mut v);
            prob.fill_kernel(&mut state.kernel, &state.f, &state.g, eps);
        }

        if tol > 0.0 && (iterations % CHECK_EVERY == 0 || iterations == max_iters) {
            kernel_times(&state.kernel, &v, &mut kv);
            let mut res = 0.0f64;
            for i in 0..m {
                res = res.max((u[i] * kv[i] - aw[i]).abs());
            }
            // Column marginals match b exactly right after the v-update.
            residual = res;
            if res <= tol {
                converged = true;
                break;
            }
        }
    }

    absorb(&mut *state, &mut u, &mut v);
    (iterations, residual, converged)
}

/// Direct log-domain row update: f_i = ε ln a_i − ε LSE_j((g_j − C_ij)/ε).
fn stabilize_rows(prob: &Problem, f: &mut [f64], g: &[f64], aw: &[f64], eps: f64) {
    let n = g.len();
    let updated: Vec<f64> = (0..f.len())
        .into_par_iter()
        .map(|i| {
            let mut mx = f64::NEG_INFINITY;
            for j in 0..n {
                mx = mx.max((g[j] - prob.cost(i, j)) / eps);
            }
            let mut s = 0.0;
            for j in 0..n {
                s += ((g[j] - prob.cost(i, j)) / eps - mx).exp();
            }
            eps * (aw[i].ln() - mx - s.ln())
        })
        .collect();
    f.copy_from_slice(&updated);
}

/// Direct log-domain column update, mirroring [`stabilize_rows`].
fn stabilize_cols(prob: &Problem, f: &[f64], g: &mut [f64], bw: &[f64], eps: f64) {
    let m = f.len();
    let updated: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|j| {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..m {
                mx = mx.max((f[i] - prob.cost(i, j)) / eps);
            }
            let mut s = 0.0;
            for i in 0..m {
                s += ((f[i] - prob.cost(i, j)) / eps - mx).exp();
            }
            eps * (bw[j].ln() - mx - s.ln())
        })
        .collect();
    g.copy_from_slice(&updated);
}

/// Entropic transport plan with its unregularized cost.
pub fn solve_entropic(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    params: &SinkhornParams,
) -> Result<TransportPlan> {
    let pots = sinkhorn_potentials(a, b, params)?;
    let plan = plan_from_potentials(a, b, &pots);
    Ok(plan)
}

/// Materializes the dense coupling `exp((f_i + g_j − C_ij)/ε)` and its
/// transport cost.
pub fn plan_from_potentials(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    pots: &EntropicPotentials,
) -> TransportPlan {
    let prob = Problem::new(a, b);
    let (m, n) = (a.len(), b.len());
    let mut coupling = Array2::zeros((m, n));
    prob.fill_kernel(
        &mut coupling,
        pots.f.as_slice().expect("contiguous"),
        pots.g.as_slice().expect("contiguous"),
        pots.epsilon,
    );
    let mut cost = 0.0;
    for i in 0..m {
        let row = coupling.row(i);
        for j in 0..n {
            if row[j] > 0.0 {
                cost += row[j] * prob.cost(i, j);
            }
        }
    }
    TransportPlan::from_dense(
        coupling,
        cost,
        PlanMethod::Entropic {
            epsilon: pots.epsilon,
        },
        pots.converged,
        a,
        b,
    )
}

/// Transport cost of the row-normalized entropic coupling, streamed from
/// the potentials without materializing the plan. Used for diagnostics on
/// problems too large to hold a dense coupling.
pub(crate) fn cost_from_potentials(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    pots: &EntropicPotentials,
) -> f64 {
    let prob = Problem::new(a, b);
    let (m, n) = (a.len(), b.len());
    let g = pots.g.as_slice().expect("contiguous");
    let eps = pots.epsilon;
    let aw = a.weights();
    let per_row: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut mx = f64::NEG_INFINITY;
            for j in 0..n {
                mx = mx.max((g[j] - prob.cost(i, j)) / eps);
            }
            let mut mass = 0.0;
            let mut acc = 0.0;
            for j in 0..n {
                let c = prob.cost(i, j);
                let w = ((g[j] - c) / eps - mx).exp();
                mass += w;
                acc += w * c;
            }
            if mass > 0.0 {
                aw[i] * acc / mass
            } else {
                0.0
            }
        })
        .collect();
    per_row.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{solve_exact, ExactOptions};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identical_diracs_zero_cost() {
        let a = DiscreteMeasure::dirac(&[1.5, -2.0]).unwrap();
        for eps in [1e-3, 1.0, 1e3] {
            let plan = solve_entropic(
                &a,
                &a,
                &SinkhornParams {
                    epsilon: Some(eps),
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(plan.cost() <= 1e-12, "eps={eps}: cost {}", plan.cost());
        }
    }

    #[test]
    fn small_epsilon_close_to_exact() {
        // Fixed 6-point instance; ε = 1e-3 · median cost.
        let xs = array![
            [0.1, 0.2, 0.3],
            [1.0, -0.5, 0.2],
            [-0.7, 0.9, 0.1],
            [0.4, 0.4, -1.2],
            [2.0, 0.1, 0.6],
            [-1.1, -0.3, 0.8]
        ];
        let ys = array![
            [0.9, 0.1, -0.2],
            [-0.3, 1.2, 0.5],
            [1.4, -1.0, 0.0],
            [0.0, 0.7, 0.7],
            [-0.8, -0.9, 0.4],
            [1.9, 1.1, -0.5]
        ];
        let a = DiscreteMeasure::from_samples(xs).unwrap();
        let b = DiscreteMeasure::from_samples(ys).unwrap();
        let exact = solve_exact(&a, &b, &ExactOptions::default()).unwrap();
        let med = crate::ot::cost_matrix(&a, &b).unwrap().median_subsampled();
        let ent = solve_entropic(
            &a,
            &b,
            &SinkhornParams {
                epsilon: Some(1e-3 * med),
                max_iter: 500_000,
                tol: 1e-10,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(ent.converged());
        let rel = (ent.cost() - exact.cost()).abs() / exact.cost();
        assert!(rel <= 0.02, "relative gap {rel}");
        assert!(ent.cost() >= exact.cost() - 1e-9, "entropic below exact");
    }

    #[test]
    fn huge_epsilon_independent_coupling() {
        let a = DiscreteMeasure::new(
            array![[0.0], [1.0], [3.0]],
            ndarray::Array1::from_vec(vec![0.2, 0.3, 0.5]),
        )
        .unwrap();
        let b = DiscreteMeasure::new(
            array![[-1.0], [2.0]],
            ndarray::Array1::from_vec(vec![0.6, 0.4]),
        )
        .unwrap();
        let max_cost = crate::ot::cost_matrix(&a, &b).unwrap().max();
        let plan = solve_entropic(
            &a,
            &b,
            &SinkhornParams {
                epsilon: Some(1e3 * max_cost),
                ..Default::default()
            },
        )
        .unwrap();
        let dense = plan.coupling_dense();
        for i in 0..3 {
            for j in 0..2 {
                let prod = a.weights()[i] * b.weights()[j];
                assert!(
                    (dense[[i, j]] - prod).abs() <= 1e-3,
                    "({i},{j}): {} vs {}",
                    dense[[i, j]],
                    prod
                );
            }
        }
    }

    #[test]
    fn cost_nonincreasing_as_epsilon_decreases() {
        let xs = array![[0.0, 0.0], [1.0, 0.5], [0.3, 2.0], [-1.0, 1.0]];
        let ys = array![[0.5, 0.5], [2.0, -0.5], [-0.2, 1.4], [1.1, 1.1]];
        let a = DiscreteMeasure::from_samples(xs).unwrap();
        let b = DiscreteMeasure::from_samples(ys).unwrap();
        let med = crate::ot::cost_matrix(&a, &b).unwrap().median_subsampled();
        let mut last = f64::INFINITY;
        for scale in [1.0, 0.1, 0.01] {
            let plan = solve_entropic(
                &a,
                &b,
                &SinkhornParams {
                    epsilon: Some(scale * med),
                    max_iter: 200_000,
                    tol: 1e-10,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(
                plan.cost() <= last + 1e-6,
                "cost increased as epsilon decreased"
            );
            last = plan.cost();
        }
    }

    #[test]
    fn marginal_residual_reported_and_small() {
        let a = DiscreteMeasure::from_samples(array![[0.0], [2.0], [5.0]]).unwrap();
        let b = DiscreteMeasure::from_samples(array![[1.0], [4.0]]).unwrap();
        let plan = solve_entropic(&a, &b, &SinkhornParams::default()).unwrap();
        assert!(plan.converged());
        assert!(plan.marginal_residual() <= 1e-8);
    }

    #[test]
    fn not_converged_flag_on_tiny_budget() {
        let a = DiscreteMeasure::from_samples(array![[0.0], [1.0]]).unwrap();
        let b = DiscreteMeasure::from_samples(array![[10.0], [11.0]]).unwrap();
        let plan = solve_entropic(
            &a,
            &b,
            &SinkhornParams {
                epsilon: Some(1e-6),
                max_iter: 2,
                tol: 1e-15,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!plan.converged());
    }

    #[test]
    fn potentials_match_materialized_plan_cost() {
        let a = DiscreteMeasure::from_samples(array![[0.0], [1.0], [2.0]]).unwrap();
        let b = DiscreteMeasure::from_samples(array![[0.5], [1.5], [2.5]]).unwrap();
        let params = SinkhornParams {
            epsilon: Some(0.05),
            tol: 1e-12,
            max_iter: 100_000,
            ..Default::default()
        };
        let pots = sinkhorn_potentials(&a, &b, &params).unwrap();
        let plan = plan_from_potentials(&a, &b, &pots);
        let streamed = cost_from_potentials(&a, &b, &pots);
        assert_abs_diff_eq!(plan.cost(), streamed, epsilon = 1e-6);
    }
}
