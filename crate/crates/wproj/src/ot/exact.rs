//! Exact discrete optimal transport via the network simplex, specialized to
//! the dense transportation polytope.
//!
//! The basis is a spanning tree on the bipartite node set (sources ∪ sinks).
//! The initial basis is the northwest-corner staircase, which is
//! deterministic given input order. Entering arcs are found by a cyclic
//! block search (most negative reduced cost within the block, lowest index
//! on ties); after a run of consecutive degenerate pivots the search drops
//! to Bland's rule (first negative arc in row-major order) until a
//! nondegenerate pivot occurs, which prevents cycling. Leaving arcs are the
//! minimum-ratio arcs with lowest row-major index on ties.
//!
//! The whole procedure is deterministic: equal inputs produce bit-equal
//! plans regardless of thread count (the solver is single-threaded).

use ndarray::Array2;

use super::{cost_matrix_with_budget, PlanEntry, PlanMethod, TransportPlan, DEFAULT_SIZE_BUDGET};
use crate::measures::DiscreteMeasure;
use crate::{Error, Result};

/// Options for [`solve_exact`].
#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    /// Cap on `n₀ · n₁`; dense structures are allocated at this size.
    pub size_budget: u128,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            size_budget: DEFAULT_SIZE_BUDGET,
        }
    }
}

/// Exact optimal transport between two discrete measures.
pub fn solve_exact(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    opts: &ExactOptions,
) -> Result<TransportPlan> {
    let cost = cost_matrix_with_budget(a, b, opts.size_budget)?;
    let (entries, total) = solve_transportation(
        cost.values(),
        a.weights().as_slice().expect("contiguous"),
        b.weights().as_slice().expect("contiguous"),
    )?;
    Ok(TransportPlan::from_sparse(
        entries,
        a.len(),
        b.len(),
        total,
        PlanMethod::Exact,
        a,
        b,
    ))
}

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 48;

const NO_NODE: u32 = u32::MAX;

/// Core solver over raw supplies/demands. Returns the positive-flow entries
/// and the objective value.
pub(crate) fn solve_transportation(
    cost: &Array2<f64>,
    supplies: &[f64],
    demands: &[f64],
) -> Result<(Vec<PlanEntry>, f64)> {
    let m = supplies.len();
    let n = demands.len();
    debug_assert_eq!(cost.dim(), (m, n));
    let n_nodes = m + n;
    let n_arcs = m * n;
    let cost = cost.as_slice().expect("cost matrix is row-major contiguous");

    // Scale-aware tolerance for "negative" reduced costs.
    let cost_scale = cost.iter().cloned().fold(0.0f64, f64::max).max(1.0);
    let tol = 1e-11 * cost_scale;

    // Northwest-corner initial basis: exactly m + n - 1 arcs forming a
    // staircase spanning tree.
    let mut flow = vec![0.0f64; n_arcs];
    let mut in_tree = vec![false; n_arcs];
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];
    {
        let mut rs = supplies.to_vec();
        let mut rd = demands.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let q = rs[i].min(rd[j]).max(0.0);
            let arc = i * n + j;
            flow[arc] = q;
            in_tree[arc] = true;
            adj[i].push((m + j) as u32);
            adj[m + j].push(i as u32);
            rs[i] -= q;
            rd[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if (rs[i] <= rd[j] && i < m - 1) || j == n - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let mut parent = vec![NO_NODE; n_nodes];
    let mut depth = vec![0u32; n_nodes];
    let mut order = vec![0u32; n_nodes]; // BFS queue storage
    let mut potential = vec![0.0f64; n_nodes];

    // Rebuilds parent/depth/potential from the adjacency lists by BFS from
    // the root node 0. O(m + n). Basic arcs satisfy C[i][j] = u_i + v_j.
    let rebuild = |adj: &[Vec<u32>],
                   parent: &mut [u32],
                   depth: &mut [u32],
                   order: &mut [u32],
                   pot: &mut [f64]| {
        for p in parent.iter_mut() {
            *p = NO_NODE;
        }
        depth[0] = 0;
        pot[0] = 0.0;
        order[0] = 0;
        let mut head = 0usize;
        let mut tail = 1usize;
        while head < tail {
            let u = order[head] as usize;
            head += 1;
            for &v in &adj[u] {
                let v = v as usize;
                if v == 0 || parent[v] != NO_NODE {
                    continue; // already visited
                }
                parent[v] = u as u32;
                depth[v] = depth[u] + 1;
                let c = if u < m {
                    cost[u * n + (v - m)]
                } else {
                    cost[v * n + (u - m)]
                };
                pot[v] = c - pot[u];
                order[tail] = v as u32;
                tail += 1;
            }
        }
        debug_assert_eq!(tail, parent.len());
    };

    rebuild(&adj, &mut parent, &mut depth, &mut order, &mut potential);

    // Arc id of the tree arc between `node` and its parent.
    let tree_arc = |node: usize, parent: &[u32]| -> usize {
        let p = parent[node] as usize;
        if node < m {
            node * n + (p - m)
        } else {
            p * n + (node - m)
        }
    };

    let block = ((n_arcs as f64).sqrt() as usize).max(64).min(n_arcs).max(1);
    let mut cursor = 0usize;
    let mut degenerate_run = 0usize;
    let mut bland = false;
    // Generous pivot budget; network simplex on transportation instances
    // pivots O(n log n)-ish in practice.
    let max_pivots = 1_000 + 200 * n_nodes * ((n_arcs as f64).log2() as usize + 1);

    let mut path_a: Vec<usize> = Vec::new();
    let mut path_b: Vec<usize> = Vec::new();

    for pivot in 0.. {
        if pivot > max_pivots {
            return Err(Error::SolverStalled { pivots: pivot });
        }

        // Entering arc.
        let mut entering: Option<usize> = None;
        if bland {
            for arc in 0..n_arcs {
                if in_tree[arc] {
                    continue;
                }
                let i = arc / n;
                let j = arc % n;
                if cost[arc] - potential[i] - potential[m + j] < -tol {
                    entering = Some(arc);
                    break;
                }
            }
        } else {
            let mut scanned = 0usize;
            while scanned < n_arcs {
                let hi = (cursor + block).min(n_arcs);
                let mut best = -tol;
                for arc in cursor..hi {
                    if in_tree[arc] {
                        continue;
                    }
                    let i = arc / n;
                    let j = arc % n;
                    let r = cost[arc] - potential[i] - potential[m + j];
                    if r < best {
                        best = r;
                        entering = Some(arc);
                    }
                }
                scanned += hi - cursor;
                cursor = if hi == n_arcs { 0 } else { hi };
                if entering.is_some() {
                    break;
                }
            }
        }
        let Some(entering) = entering else {
            break; // optimal
        };

        let ei = entering / n;
        let ej = entering % n;
        let (mut a_node, mut b_node) = (ei, m + ej);

        // Tree path between the entering arc's endpoints: lift to equal
        // depth, then lift both to the least common ancestor.
        path_a.clear();
        path_b.clear();
        while depth[a_node] > depth[b_node] {
            path_a.push(a_node);
            a_node = parent[a_node] as usize;
        }
        while depth[b_node] > depth[a_node] {
            path_b.push(b_node);
            b_node = parent[b_node] as usize;
        }
        while a_node != b_node {
            path_a.push(a_node);
            a_node = parent[a_node] as usize;
            path_b.push(b_node);
            b_node = parent[b_node] as usize;
        }

        // Cycle arc sequence: entering (+θ), then the b-side walk upward,
        // then the a-side walk downward. The bipartite structure alternates
        // arc orientation, so signs alternate with position parity.
        // Position 0 is the entering arc.
        let mut theta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        {
            let consider = |arc: usize, theta: &mut f64, leaving: &mut Option<usize>| {
                let f = flow[arc];
                if f < *theta || (f == *theta && leaving.map_or(true, |l| arc < l)) {
                    *theta = f;
                    *leaving = Some(arc);
                }
            };
            let mut pos = 1usize;
            for &node in &path_b {
                if pos % 2 == 1 {
                    consider(tree_arc(node, &parent), &mut theta, &mut leaving);
                }
                pos += 1;
            }
            for &node in path_a.iter().rev() {
                if pos % 2 == 1 {
                    consider(tree_arc(node, &parent), &mut theta, &mut leaving);
                }
                pos += 1;
            }
        }
        let leaving = leaving.expect("cycle always contains a reverse arc");
        let theta = theta.max(0.0);

        // Apply the flow change around the cycle.
        flow[entering] += theta;
        {
            let mut pos = 1usize;
            for &node in &path_b {
                let arc = tree_arc(node, &parent);
                if pos % 2 == 1 {
                    flow[arc] -= theta;
                } else {
                    flow[arc] += theta;
                }
                pos += 1;
            }
            for &node in path_a.iter().rev() {
                let arc = tree_arc(node, &parent);
                if pos % 2 == 1 {
                    flow[arc] -= theta;
                } else {
                    flow[arc] += theta;
                }
                pos += 1;
            }
        }
        flow[leaving] = 0.0;

        // Swap basis membership and tree adjacency.
        in_tree[leaving] = false;
        in_tree[entering] = true;
        let (li, lj) = (leaving / n, m + leaving % n);
        adj[li].retain(|&x| x as usize != lj);
        adj[lj].retain(|&x| x as usize != li);
        adj[ei].push((m + ej) as u32);
        adj[m + ej].push(ei as u32);

        rebuild(&adj, &mut parent, &mut depth, &mut order, &mut potential);

        if theta > 0.0 {
            degenerate_run = 0;
            bland = false;
        } else {
            degenerate_run += 1;
            if degenerate_run >= DEGENERATE_LIMIT {
                bland = true;
            }
        }
    }

    let mut entries = Vec::new();
    let mut total = 0.0;
    for arc in 0..n_arcs {
        if in_tree[arc] && flow[arc] > 0.0 {
            let (i, j) = (arc / n, arc % n);
            entries.push(PlanEntry {
                row: i,
                col: j,
                mass: flow[arc],
            });
            total += flow[arc] * cost[arc];
        }
    }
    Ok((entries, total))
}
