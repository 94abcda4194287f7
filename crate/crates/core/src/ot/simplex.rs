//! Primal network simplex for the balanced transportation problem.
//!
//! Sources `0..m` and sinks `m..m+n` are joined to an artificial root by
//! big-M arcs that carry the initial flow. The spanning tree is kept
//! strongly feasible (every zero-flow tree arc points away from the root)
//! by choosing the last blocking arc of each pivot cycle, which rules out
//! cycling under degeneracy.

use std::collections::VecDeque;

use crate::error::{CotError, Result};

struct Network<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    shift: f64,
    art_cost: f64,
}

impl Network<'_> {
    fn real_arcs(&self) -> usize {
        self.m * self.n
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    #[inline]
    fn ends(&self, arc: usize) -> (usize, usize) {
        let e = self.real_arcs();
        if arc < e {
            (arc / self.n, self.m + arc % self.n)
        } else {
            let k = arc - e;
            if k < self.m {
                (k, self.root())
            } else {
                (self.root(), k)
            }
        }
    }

    #[inline]
    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.real_arcs() {
            self.cost[arc] - self.shift
        } else {
            self.art_cost
        }
    }
}

struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Tree {
    fn new(nodes: usize) -> Self {
        Self {
            parent: vec![usize::MAX; nodes],
            pred: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            pot: vec![0.0; nodes],
            adj: vec![Vec::new(); nodes],
        }
    }

    /// Recomputes parents, depths and node potentials from the arc list.
    fn rebuild(&mut self, net: &Network<'_>, arcs: &[usize]) {
        for a in &mut self.adj {
            a.clear();
        }
        for &arc in arcs {
            let (u, w) = net.ends(arc);
            self.adj[u].push(arc);
            self.adj[w].push(arc);
        }
        let root = net.root();
        self.parent[root] = usize::MAX;
        self.pred[root] = usize::MAX;
        self.depth[root] = 0;
        self.pot[root] = 0.0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for k in 0..self.adj[v].len() {
                let arc = self.adj[v][k];
                if arc == self.pred[v] {
                    continue;
                }
                let (u, w) = net.ends(arc);
                let (child, pot) = if u == v {
                    (w, self.pot[v] + net.arc_cost(arc))
                } else {
                    (u, self.pot[v] - net.arc_cost(arc))
                };
                self.parent[child] = v;
                self.pred[child] = arc;
                self.depth[child] = self.depth[v] + 1;
                self.pot[child] = pot;
                queue.push_back(child);
            }
        }
    }
}

/// Returns the positive entries `(i, j, mass)` of an optimal plan. Supplies
/// and demands must be positive with (numerically) equal totals.
pub(super) fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Result<Vec<(usize, usize, f64)>> {
    let (m, n) = (supply.len(), demand.len());
    debug_assert_eq!(cost.len(), m * n);
    let (lo, hi) = cost
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let span = hi - lo;
    let net = Network {
        m,
        n,
        cost,
        shift: lo,
        art_cost: (span + 1.0) * (m + n + 1) as f64,
    };
    let real = net.real_arcs();
    let eps = 1e-12 * span.max(1.0);

    let mut flow = vec![0.0; real + m + n];
    flow[real..real + m].copy_from_slice(supply);
    flow[real + m..].copy_from_slice(demand);
    let mut tree_arcs: Vec<usize> = (real..real + m + n).collect();
    let mut slot_of = vec![usize::MAX; real + m + n];
    for (s, &a) in tree_arcs.iter().enumerate() {
        slot_of[a] = s;
    }

    let mut tree = Tree::new(m + n + 1);
    let block = ((real as f64).sqrt().ceil() as usize).max(10).min(real);
    let mut next_arc = 0usize;
    let max_pivots = 1000 + 50 * (m + n) * (m + n).max(16);
    let mut path_s: Vec<usize> = Vec::new();
    let mut path_t: Vec<usize> = Vec::new();

    for _ in 0..max_pivots {
        tree.rebuild(&net, &tree_arcs);

        // Block pricing over real arcs.
        let mut entering = None;
        let mut best = -eps;
        let mut scanned = 0;
        let mut in_block = 0;
        while scanned < real {
            let arc = next_arc;
            next_arc = if next_arc + 1 == real { 0 } else { next_arc + 1 };
            scanned += 1;
            in_block += 1;
            let (u, w) = net.ends(arc);
            let rc = net.arc_cost(arc) + tree.pot[u] - tree.pot[w];
            if rc < best {
                best = rc;
                entering = Some(arc);
            }
            if in_block == block {
                if entering.is_some() {
                    break;
                }
                in_block = 0;
            }
        }
        let Some(entering) = entering else {
            return finish(&net, &flow, supply, demand);
        };

        let (u, w) = net.ends(entering);
        path_s.clear();
        path_t.clear();
        let (mut a, mut b) = (u, w);
        while a != b {
            if tree.depth[a] >= tree.depth[b] {
                path_s.push(a);
                a = tree.parent[a];
            } else {
                path_t.push(b);
                b = tree.parent[b];
            }
        }

        // Blocking arcs are those whose flow decreases around the cycle
        // u -> w -> ... -> apex -> ... -> u.
        let s_blocking = |v: usize| net.ends(tree.pred[v]).0 == v;
        let t_blocking = |v: usize| net.ends(tree.pred[v]).0 != v;
        let mut theta = f64::INFINITY;
        for &v in &path_s {
            if s_blocking(v) {
                theta = theta.min(flow[tree.pred[v]]);
            }
        }
        for &v in &path_t {
            if t_blocking(v) {
                theta = theta.min(flow[tree.pred[v]]);
            }
        }
        if !theta.is_finite() {
            return Err(CotError::Numerical("unbounded transport pivot".into()));
        }
        let leaving = path_t
            .iter()
            .rev()
            .find(|&&v| t_blocking(v) && flow[tree.pred[v]] == theta)
            .or_else(|| {
                path_s
                    .iter()
                    .find(|&&v| s_blocking(v) && flow[tree.pred[v]] == theta)
            })
            .map(|&v| tree.pred[v])
            .expect("a blocking arc attains the minimum");

        if theta > 0.0 {
            for &v in &path_s {
                let arc = tree.pred[v];
                if s_blocking(v) {
                    flow[arc] -= theta;
                } else {
                    flow[arc] += theta;
                }
            }
            for &v in &path_t {
                let arc = tree.pred[v];
                if t_blocking(v) {
                    flow[arc] -= theta;
                } else {
                    flow[arc] += theta;
                }
            }
            flow[entering] += theta;
        }
        flow[leaving] = 0.0;
        let slot = slot_of[leaving];
        tree_arcs[slot] = entering;
        slot_of[entering] = slot;
        slot_of[leaving] = usize::MAX;
    }
    Err(CotError::Numerical(format!(
        "network simplex exceeded {max_pivots} pivots on a {m}x{n} problem"
    )))
}

fn finish(
    net: &Network<'_>,
    flow: &[f64],
    supply: &[f64],
    demand: &[f64],
) -> Result<Vec<(usize, usize, f64)>> {
    let real = net.real_arcs();
    let residual = flow[real..].iter().fold(0.0_f64, |acc, f| acc.max(*f));
    let imbalance = (supply.iter().sum::<f64>() - demand.iter().sum::<f64>()).abs();
    if residual > 1e-9 + imbalance {
        return Err(CotError::Numerical(format!(
            "transport left {residual:e} mass on artificial arcs"
        )));
    }
    Ok(flow[..real]
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(arc, &f)| (arc / net.n, arc % net.n, f))
        .collect())
}
