//! Verification oracles: independent routes to quantities the solvers
//! produce. They trade generality for obviousness and are exercised by the
//! test suites and the CLI's `oracle-check` command.

use super::{cost_matrix, PlanEntry, PlanMethod, TransportPlan};
use crate::measures::DiscreteMeasure;
use crate::{Error, Result};

/// Largest instance the permutation oracle accepts.
pub const ORACLE_MAX_N: usize = 8;

fn is_uniform(m: &DiscreteMeasure) -> bool {
    let w0 = 1.0 / m.len() as f64;
    m.weights().iter().all(|&w| (w - w0).abs() <= 1e-12)
}

/// Exhaustive minimum over the n! permutation couplings of two equal-size
/// uniform measures. For such instances a permutation matrix attains the
/// optimum of the transport LP (Birkhoff), so this is an exact oracle.
pub fn brute_force_assignment(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
) -> Result<TransportPlan> {
    let n = a.len();
    if n != b.len() || n > ORACLE_MAX_N {
        return Err(Error::OracleSizeExceeded {
            n0: a.len(),
            n1: b.len(),
            limit: ORACLE_MAX_N,
        });
    }
    if !is_uniform(a) || !is_uniform(b) {
        return Err(Error::OracleRequiresUniform);
    }
    let cost = cost_matrix(a, b)?;
    let c = cost.values();

    // Heap's algorithm over target indices; deterministic enumeration
    // order, ties resolved toward the first permutation found.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    let eval = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum() };
    let mut best_perm = perm.clone();
    let mut best = eval(&perm);
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let val = eval(&perm);
            if val < best {
                best = val;
                best_perm.copy_from_slice(&perm);
            }
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }

    let mass = 1.0 / n as f64;
    let entries: Vec<PlanEntry> = best_perm
        .iter()
        .enumerate()
        .map(|(i, &j)| PlanEntry {
            row: i,
            col: j,
            mass,
        })
        .collect();
    Ok(TransportPlan::from_sparse(
        entries,
        n,
        n,
        best * mass,
        PlanMethod::Oracle,
        a,
        b,
    ))
}

/// 1-d W₂ via the quantile-function L² distance: merge the two CDFs and
/// integrate `|F_a⁻¹ − F_b⁻¹|²` over the shared quantile grid. Exact for
/// discrete measures on the real line.
pub fn w2_1d(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let sorted = |m: &DiscreteMeasure| -> Vec<(f64, f64)> {
        let mut atoms: Vec<(f64, f64)> = m
            .support()
            .column(0)
            .iter()
            .cloned()
            .zip(m.weights().iter().cloned())
            .collect();
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        atoms
    };
    let xa = sorted(a);
    let xb = sorted(b);

    let mut cost = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (xa[0].1, xb[0].1);
    loop {
        let q = ra.min(rb);
        let diff = xa[i].0 - xb[j].0;
        cost += q * diff * diff;
        ra -= q;
        rb -= q;
        if ra <= 1e-15 {
            i += 1;
            if i >= xa.len() {
                break;
            }
            ra = xa[i].1;
        }
        if rb <= 1e-15 {
            j += 1;
            if j >= xb.len() {
                break;
            }
            rb = xb[j].1;
        }
    }
    Ok(cost.max(0.0).sqrt())
}
