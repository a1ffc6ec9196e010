//! Network simplex for the transportation problem.
//!
//! The basis is a spanning tree over the m + n row and column nodes. Costs are
//! evaluated on demand, so no dense cost matrix is ever stored. Pricing uses
//! block search; after a long run of degenerate pivots the entering rule falls
//! back to the first eligible cell in scan order.

use crate::costs::GroundCost;
use crate::error::{Error, Result};

/// Reduced costs above `-PIVOT_TOLERANCE * max(1, cost scale)` count as nonnegative.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

pub(crate) struct Solution {
    /// (row, col, mass) for every basic cell, including zero-mass ones.
    pub basis: Vec<(usize, usize, f64)>,
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
    pub pivots: usize,
}

#[derive(Clone, Copy)]
struct Edge {
    row: usize,
    col: usize,
    flow: f64,
    cost: f64,
}

struct Tree {
    m: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn endpoints(&self, e: usize) -> (usize, usize) {
        (self.edges[e].row, self.m + self.edges[e].col)
    }

    /// Assign parents, depths and potentials below `start`, whose own fields are set.
    fn relabel_from(&mut self, start: usize, stack: &mut Vec<usize>) {
        stack.clear();
        stack.push(start);
        while let Some(s) = stack.pop() {
            for k in 0..self.adj[s].len() {
                let e = self.adj[s][k];
                if e == self.parent_edge[s] {
                    continue;
                }
                let (r, c) = self.endpoints(e);
                let t = if r == s { c } else { r };
                self.parent[t] = s;
                self.parent_edge[t] = e;
                self.depth[t] = self.depth[s] + 1;
                self.pot[t] = self.edges[e].cost - self.pot[s];
                stack.push(t);
            }
        }
    }

    fn is_descendant(&self, mut node: usize, ancestor: usize) -> bool {
        while self.depth[node] > self.depth[ancestor] {
            node = self.parent[node];
        }
        node == ancestor
    }
}

/// Solve min Σ c(xᵢ, yⱼ) πᵢⱼ over couplings of `a` and `b`.
///
/// `xs` and `ys` are flat coordinate buffers of dimension `dim`. When
/// `dim == 1` the initial basis is the monotone (north-west corner on sorted
/// atoms) coupling, which is already optimal for convex costs of |x − y|.
pub(crate) fn solve<C: GroundCost + ?Sized>(
    xs: &[f64],
    a: &[f64],
    ys: &[f64],
    b: &[f64],
    dim: usize,
    cost: &C,
) -> Result<Solution> {
    let m = a.len();
    let n = b.len();
    let c = |i: usize, j: usize| cost.cost(&xs[i * dim..(i + 1) * dim], &ys[j * dim..(j + 1) * dim]);

    let mut row_order: Vec<usize> = (0..m).collect();
    let mut col_order: Vec<usize> = (0..n).collect();
    if dim == 1 {
        row_order.sort_by(|&i, &k| xs[i].total_cmp(&xs[k]));
        col_order.sort_by(|&j, &k| ys[j].total_cmp(&ys[k]));
    }

    // north-west corner: a staircase of exactly m + n - 1 cells
    let mut edges = Vec::with_capacity(m + n - 1);
    let (mut p, mut q) = (0usize, 0usize);
    let mut ra = a[row_order[0]];
    let mut rb = b[col_order[0]];
    loop {
        let (i, j) = (row_order[p], col_order[q]);
        let f = ra.min(rb);
        edges.push(Edge { row: i, col: j, flow: f, cost: c(i, j) });
        if p == m - 1 && q == n - 1 {
            break;
        }
        if (ra <= rb && p < m - 1) || q == n - 1 {
            rb -= f;
            p += 1;
            ra = a[row_order[p]];
        } else {
            ra -= f;
            q += 1;
            rb = b[col_order[q]];
        }
        rb = rb.max(0.0);
        ra = ra.max(0.0);
    }

    let scale = edges.iter().map(|e| e.cost.abs()).fold(c(0, n - 1).abs().max(c(m - 1, 0).abs()), f64::max);
    let eps = PIVOT_TOLERANCE * scale.max(1.0);

    let nodes = m + n;
    let mut tree = Tree {
        m,
        edges,
        adj: vec![Vec::new(); nodes],
        parent: vec![NONE; nodes],
        parent_edge: vec![NONE; nodes],
        depth: vec![0; nodes],
        pot: vec![0.0; nodes],
    };
    for e in 0..tree.edges.len() {
        let (r, cn) = tree.endpoints(e);
        tree.adj[r].push(e);
        tree.adj[cn].push(e);
    }
    let mut stack = Vec::new();
    tree.relabel_from(0, &mut stack);

    let cells = m * n;
    let block = ((cells as f64).sqrt().ceil() as usize).clamp(1, cells);
    let mut next = 0usize;
    let mut degenerate_run = 0usize;
    let bland_after = 2 * nodes + 16;
    let max_pivots = 200usize.saturating_mul(nodes).saturating_mul(nodes.min(2000)).max(10_000);
    let mut pivots = 0usize;
    let mut path_a = Vec::new();
    let mut path_b = Vec::new();
    let mut cycle = Vec::new();

    loop {
        // pricing
        let bland = degenerate_run > bland_after;
        let mut entering = None;
        if bland {
            'scan: for i in 0..m {
                for j in 0..n {
                    let cij = c(i, j);
                    if cij - tree.pot[i] - tree.pot[m + j] < -eps {
                        entering = Some((i, j, cij));
                        break 'scan;
                    }
                }
            }
        } else {
            let mut scanned = 0usize;
            let mut best = -eps;
            while scanned < cells {
                let end = (scanned + block).min(cells);
                while scanned < end {
                    let (i, j) = (next / n, next % n);
                    let cij = c(i, j);
                    let rc = cij - tree.pot[i] - tree.pot[m + j];
                    if rc < best {
                        best = rc;
                        entering = Some((i, j, cij));
                    }
                    next += 1;
                    if next == cells {
                        next = 0;
                    }
                    scanned += 1;
                }
                if entering.is_some() {
                    break;
                }
            }
        }
        let Some((ei, ej, ecost)) = entering else { break };
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NoConvergence(max_pivots));
        }

        // cycle through the tree path from column node back to row node
        let (u, w) = (ei, m + ej);
        path_a.clear();
        path_b.clear();
        let (mut x, mut y) = (u, w);
        while tree.depth[x] > tree.depth[y] {
            path_a.push(tree.parent_edge[x]);
            x = tree.parent[x];
        }
        while tree.depth[y] > tree.depth[x] {
            path_b.push(tree.parent_edge[y]);
            y = tree.parent[y];
        }
        while x != y {
            path_a.push(tree.parent_edge[x]);
            x = tree.parent[x];
            path_b.push(tree.parent_edge[y]);
            y = tree.parent[y];
        }
        cycle.clear();
        cycle.extend_from_slice(&path_b);
        cycle.extend(path_a.iter().rev());

        let mut theta = f64::INFINITY;
        let mut leaving = NONE;
        for k in (0..cycle.len()).step_by(2) {
            let f = tree.edges[cycle[k]].flow;
            if f <= theta {
                theta = f;
                leaving = cycle[k];
            }
        }
        for (k, &e) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                tree.edges[e].flow -= theta;
            } else {
                tree.edges[e].flow += theta;
            }
        }
        tree.edges[leaving].flow = 0.0;
        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }

        // detach the subtree hanging below the leaving edge
        let (lr, lc) = tree.endpoints(leaving);
        let child = if tree.parent_edge[lr] == leaving { lr } else { lc };
        let (inside, outside) = if tree.is_descendant(u, child) { (u, w) } else { (w, u) };
        for node in [lr, lc] {
            let pos = tree.adj[node].iter().position(|&e| e == leaving).expect("tree edge");
            tree.adj[node].swap_remove(pos);
        }
        tree.edges[leaving] = Edge { row: ei, col: ej, flow: theta, cost: ecost };
        tree.adj[u].push(leaving);
        tree.adj[w].push(leaving);
        tree.parent[inside] = outside;
        tree.parent_edge[inside] = leaving;
        tree.depth[inside] = tree.depth[outside] + 1;
        tree.pot[inside] = ecost - tree.pot[outside];
        tree.relabel_from(inside, &mut stack);
    }

    Ok(Solution {
        basis: tree.edges.iter().map(|e| (e.row, e.col, e.flow.max(0.0))).collect(),
        row_potentials: tree.pot[..m].to_vec(),
        col_potentials: tree.pot[m..].to_vec(),
        pivots,
    })
}
