//! Uncapacitated min-cost flow via the network simplex method.
//!
//! This is the exact engine beneath every transport value in the crate: the
//! primal Wasserstein solver runs it on a complete bipartite network, and the
//! penalized-marginal solver adds a hub node for total-variation penalties.
//!
//! Design notes, in the order they matter for correctness:
//!
//! * **No artificial arcs.** The caller supplies an initial spanning tree
//!   (the northwest-corner rule provides one for bipartite problems), so the
//!   basis never contains big-M arcs and the node potentials returned are
//!   exact duals of the real problem, fit for c-transforms.
//! * **Entering rule.** Most-negative reduced cost within a rotating block
//!   (block size ~ sqrt of the arc count), ties broken by lowest arc index.
//!   After a long run of degenerate pivots the solver switches to Bland's
//!   rule (lowest-index entering and leaving arcs), which cannot cycle, and
//!   switches back on the next real progress.
//! * **Flows live on tree edges.** Uncapacitated nonbasic arcs carry zero
//!   flow, so the flow vector is indexed by node (each non-root node owns the
//!   edge to its parent). The returned solution lists only positive arcs.
//! * **Determinism.** Identical inputs pivot identically; nothing depends on
//!   hashing or thread interleavings.
//!
//! Arc sets come in two shapes: a dense bipartite set addressed implicitly
//! as `k = i * sinks + j` (no per-arc storage beyond the cost matrix), and an
//! explicit arc list for gadget networks.

use crate::error::{Error, Result};
use crate::space::CostMatrix;
use crate::util::sum_comp;

/// One directed arc of an explicit network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitArc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

/// The arc set of a flow problem.
#[derive(Debug, Clone)]
pub enum Arcs<'a> {
    /// Complete bipartite arcs: sources `0..sources` to sinks
    /// `sources..sources+sinks`, arc `k = i * sinks + j` with cost
    /// `cost[i][j]`. Nothing per-arc is materialized.
    Bipartite {
        sources: usize,
        sinks: usize,
        cost: &'a CostMatrix,
    },
    /// An explicit arc list.
    Explicit(&'a [ExplicitArc]),
}

impl Arcs<'_> {
    #[inline]
    fn len(&self) -> usize {
        match self {
            Arcs::Bipartite { sources, sinks, .. } => sources * sinks,
            Arcs::Explicit(list) => list.len(),
        }
    }

    #[inline]
    fn endpoints(&self, k: usize) -> (usize, usize) {
        match self {
            Arcs::Bipartite {
                sources: _, sinks, ..
            } => (k / sinks, k % sinks + self.source_count()),
            Arcs::Explicit(list) => (list[k].from, list[k].to),
        }
    }

    #[inline]
    fn cost(&self, k: usize) -> f64 {
        match self {
            Arcs::Bipartite { sinks, cost, .. } => cost.get(k / sinks, k % sinks),
            Arcs::Explicit(list) => list[k].cost,
        }
    }

    #[inline]
    fn source_count(&self) -> usize {
        match self {
            Arcs::Bipartite { sources, .. } => *sources,
            Arcs::Explicit(_) => 0,
        }
    }

    fn max_abs_cost(&self) -> f64 {
        match self {
            Arcs::Bipartite { cost, .. } => cost.max_value().abs(),
            Arcs::Explicit(list) => list.iter().map(|a| a.cost.abs()).fold(0.0, f64::max),
        }
    }
}

/// A balanced uncapacitated min-cost flow problem with a starting basis.
#[derive(Debug)]
pub struct FlowProblem<'a> {
    /// Node count; node indices are `0..num_nodes`.
    pub num_nodes: usize,
    /// Net supply per node (positive supplies, negative demands); must sum
    /// to zero within 1e-9.
    pub balances: Vec<f64>,
    /// The arc set.
    pub arcs: Arcs<'a>,
    /// Arc indices forming a spanning tree whose implied flows are
    /// nonnegative (a feasible starting basis).
    pub initial_tree: Vec<usize>,
}

/// An optimal flow with its certifying duals.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    /// Total cost of the optimal flow.
    pub value: f64,
    /// Node potentials: every arc satisfies
    /// `cost(k) + pot[from] - pot[to] >= -eps`, and basic arcs are tight.
    pub potentials: Vec<f64>,
    /// Arcs carrying positive flow, as `(arc index, flow)` pairs sorted by
    /// arc index.
    pub arc_flows: Vec<(usize, f64)>,
    /// Pivot count, for diagnostics.
    pub pivots: usize,
}

/// Reduced costs above `-eps` count as nonnegative; scaled by the largest
/// cost magnitude at solve time.
const PIVOT_EPS: f64 = 1e-12;

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 256;

const NO_NODE: usize = usize::MAX;
const NO_ARC: usize = usize::MAX;

/// Arc indices of a feasible spanning tree for a bipartite problem with the
/// given supplies and demands, by the northwest-corner rule. The tree has
/// exactly `n + m - 1` arcs (`k = i * m + j`), and the flows it implies are
/// nonnegative.
pub fn northwest_tree(supplies: &[f64], demands: &[f64]) -> Vec<usize> {
    let (n, m) = (supplies.len(), demands.len());
    assert!(n > 0 && m > 0);
    let mut tree = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0usize, 0usize);
    let mut s = supplies[0];
    let mut d = demands[0];
    loop {
        tree.push(i * m + j);
        if i == n - 1 && j == m - 1 {
            break;
        }
        if (s <= d && i < n - 1) || j == m - 1 {
            d -= s;
            i += 1;
            s = supplies[i];
        } else {
            s -= d;
            j += 1;
            d = demands[j];
        }
    }
    tree
}

struct Simplex<'a> {
    arcs: &'a Arcs<'a>,
    num_nodes: usize,
    parent: Vec<usize>,
    /// Arc index of the edge joining a node to its parent.
    pred: Vec<usize>,
    /// True when that arc is oriented parent -> node.
    pred_down: Vec<bool>,
    /// Flow on the edge to the parent.
    flow: Vec<f64>,
    depth: Vec<u32>,
    pot: Vec<f64>,
    enter_eps: f64,
    /// Rotating cursor for the block entering search.
    cursor: usize,
    block: usize,
}

/// Solve to optimality. Errors: inconsistent shapes or an infeasible
/// starting tree report invalid input; a detectable negative-cost cycle in
/// an unbounded direction reports a numeric failure; exceeding the pivot
/// budget reports non-convergence.
pub fn min_cost_flow(problem: &FlowProblem) -> Result<FlowSolution> {
    let n = problem.num_nodes;
    if n == 0 {
        return Err(Error::InvalidConfig("flow problem has no nodes".into()));
    }
    if problem.balances.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: problem.balances.len(),
        });
    }
    let imbalance = sum_comp(problem.balances.iter().copied());
    if imbalance.abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "flow problem is unbalanced: net supply {imbalance:e}"
        )));
    }
    if let Arcs::Bipartite {
        sources,
        sinks,
        cost,
    } = &problem.arcs
    {
        if cost.rows() != *sources || cost.cols() != *sinks || sources + sinks != n {
            return Err(Error::CostShape {
                rows: cost.rows(),
                cols: cost.cols(),
                expected: format!("{sources}x{sinks} over {n} nodes"),
            });
        }
    }
    let num_arcs = problem.arcs.len();
    for &k in &problem.initial_tree {
        if k >= num_arcs {
            return Err(Error::IndexOutOfBounds {
                index: k,
                len: num_arcs,
            });
        }
    }
    if problem.initial_tree.len() != n - 1 {
        return Err(Error::InvalidConfig(format!(
            "initial tree must have {} arcs, got {}",
            n - 1,
            problem.initial_tree.len()
        )));
    }

    let mut sx = Simplex::init(problem)?;
    let pivots = sx.run()?;
    Ok(sx.extract(pivots))
}

impl<'a> Simplex<'a> {
    fn init(problem: &'a FlowProblem<'a>) -> Result<Self> {
        let n = problem.num_nodes;
        let arcs = &problem.arcs;

        // Orient the spanning tree away from node 0 by breadth-first search.
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &k in &problem.initial_tree {
            let (u, v) = arcs.endpoints(k);
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidConfig(format!(
                    "tree arc {k} has bad endpoints"
                )));
            }
            adj[u].push((v, k));
            adj[v].push((u, k));
        }
        let mut parent = vec![NO_NODE; n];
        let mut pred = vec![NO_ARC; n];
        let mut pred_down = vec![false; n];
        let mut depth = vec![0u32; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        seen[0] = true;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, k) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = u;
                    pred[v] = k;
                    pred_down[v] = arcs.endpoints(k).0 == u;
                    depth[v] = depth[u] + 1;
                    order.push(v);
                }
            }
        }
        if order.len() != n {
            return Err(Error::InvalidConfig(
                "initial tree does not span all nodes".into(),
            ));
        }

        // Flows by leaf elimination: each edge carries its subtree's excess.
        let mut excess = problem.balances.clone();
        let mut flow = vec![0.0; n];
        for &v in order.iter().rev() {
            if v == 0 {
                continue;
            }
            let e = excess[v];
            // Excess leaves the subtree toward the parent.
            let f = if pred_down[v] { -e } else { e };
            if f < -1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "initial tree is infeasible: edge into node {v} needs flow {f:e}"
                )));
            }
            flow[v] = f.max(0.0);
            excess[parent[v]] += e;
        }

        // Potentials: basic arcs have zero reduced cost.
        let mut pot = vec![0.0; n];
        for &v in &order {
            if v == 0 {
                continue;
            }
            let c = arcs.cost(pred[v]);
            pot[v] = if pred_down[v] {
                pot[parent[v]] + c
            } else {
                pot[parent[v]] - c
            };
        }

        let num_arcs = arcs.len();
        let block = ((num_arcs as f64).sqrt().ceil() as usize)
            .max(64)
            .min(num_arcs.max(1));
        Ok(Simplex {
            arcs,
            num_nodes: n,
            parent,
            pred,
            pred_down,
            flow,
            depth,
            pot,
            enter_eps: PIVOT_EPS * (1.0 + arcs.max_abs_cost()),
            cursor: 0,
            block,
        })
    }

    #[inline]
    fn reduced_cost(&self, k: usize) -> f64 {
        let (u, v) = self.arcs.endpoints(k);
        self.arcs.cost(k) + self.pot[u] - self.pot[v]
    }

    /// Most negative reduced cost in rotating blocks; `None` means optimal.
    fn enter_block(&mut self) -> Option<usize> {
        let num_arcs = self.arcs.len();
        let mut scanned = 0;
        let mut best = NO_ARC;
        let mut best_rc = -self.enter_eps;
        while scanned < num_arcs {
            let stop = (self.cursor + self.block).min(num_arcs);
            for k in self.cursor..stop {
                let rc = self.reduced_cost(k);
                if rc < best_rc {
                    best_rc = rc;
                    best = k;
                }
            }
            scanned += stop - self.cursor;
            self.cursor = if stop == num_arcs { 0 } else { stop };
            if best != NO_ARC {
                return Some(best);
            }
        }
        None
    }

    /// Lowest-index arc with negative reduced cost (Bland's rule).
    fn enter_bland(&self) -> Option<usize> {
        (0..self.arcs.len()).find(|&k| self.reduced_cost(k) < -self.enter_eps)
    }

    fn run(&mut self) -> Result<usize> {
        let max_pivots = 200 * self.num_nodes + 100_000;
        let mut pivots = 0usize;
        let mut stall = 0usize;
        loop {
            let bland = stall >= STALL_LIMIT;
            let entering = if bland {
                self.enter_bland()
            } else {
                self.enter_block()
            };
            let Some(k) = entering else { return Ok(pivots) };
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::NonConvergence {
                    what: "network simplex pivot budget",
                    iters: pivots,
                    residual: -self.reduced_cost(k),
                });
            }
            let theta = self.pivot(k, bland)?;
            if theta > 0.0 {
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }

    /// Execute one pivot on entering arc `k`; returns the flow change.
    fn pivot(&mut self, k: usize, bland: bool) -> Result<f64> {
        let (eu, ev) = self.arcs.endpoints(k);

        // Walk both endpoints to their common ancestor, recording the
        // blocking candidate: pushing flow along u -> v circulates v -> apex
        // -> u through the tree. On the v side the circulation runs child to
        // parent; on the u side, parent to child.
        let mut theta = f64::INFINITY;
        let mut leave = NO_NODE;
        let mut leave_arc = NO_ARC;
        let mut leave_on_v_side = false;
        {
            let (mut a, mut b) = (eu, ev);
            // Decrease happens on v-side edges stored down, u-side edges stored up.
            let consider = |node: usize,
                            on_v_side: bool,
                            sx: &Simplex,
                            theta: &mut f64,
                            leave: &mut usize,
                            leave_arc: &mut usize,
                            leave_side: &mut bool| {
                let decreases = sx.pred_down[node] == on_v_side;
                if decreases {
                    let f = sx.flow[node];
                    let tighter = f < *theta
                        || (bland
                            && f == *theta
                            && *leave != NO_NODE
                            && sx.pred[node] < *leave_arc);
                    if tighter {
                        *theta = f;
                        *leave = node;
                        *leave_arc = sx.pred[node];
                        *leave_side = on_v_side;
                    }
                }
            };
            while a != b {
                if self.depth[a] >= self.depth[b] {
                    consider(
                        a,
                        false,
                        self,
                        &mut theta,
                        &mut leave,
                        &mut leave_arc,
                        &mut leave_on_v_side,
                    );
                    a = self.parent[a];
                } else {
                    consider(
                        b,
                        true,
                        self,
                        &mut theta,
                        &mut leave,
                        &mut leave_arc,
                        &mut leave_on_v_side,
                    );
                    b = self.parent[b];
                }
            }
        }
        if leave == NO_NODE {
            return Err(Error::NumericFailure(
                "network is unbounded along a negative cycle".into(),
            ));
        }

        // Apply the flow change around the cycle.
        if theta > 0.0 {
            let (mut a, mut b) = (eu, ev);
            while a != b {
                if self.depth[a] >= self.depth[b] {
                    // u side: circulation parent -> child.
                    self.flow[a] += if self.pred_down[a] { theta } else { -theta };
                    a = self.parent[a];
                } else {
                    // v side: circulation child -> parent.
                    self.flow[b] += if self.pred_down[b] { -theta } else { theta };
                    b = self.parent[b];
                }
            }
        }

        // Re-hang: the leaving edge sits above `leave`; the entering arc
        // reconnects the severed subtree through whichever endpoint it holds.
        let (s, t) = if leave_on_v_side { (ev, eu) } else { (eu, ev) };
        let mut node = s;
        let mut carry_parent = t;
        // Entering arc as the new pred edge of s: oriented t -> s exactly
        // when s is the arc's head.
        let mut carry_arc = k;
        let mut carry_down = s == ev;
        let mut carry_flow = theta;
        loop {
            let old_parent = self.parent[node];
            let old_arc = self.pred[node];
            let old_down = self.pred_down[node];
            let old_flow = self.flow[node];
            self.parent[node] = carry_parent;
            self.pred[node] = carry_arc;
            self.pred_down[node] = carry_down;
            self.flow[node] = carry_flow;
            if node == leave {
                break;
            }
            carry_parent = node;
            carry_arc = old_arc;
            carry_down = !old_down;
            carry_flow = old_flow;
            node = old_parent;
        }

        self.refresh();
        Ok(theta)
    }

    /// Recompute depths and potentials from the parent structure alone, by
    /// memoized parent-chasing; linear in the node count.
    fn refresh(&mut self) {
        let n = self.num_nodes;
        let mut done = vec![false; n];
        done[0] = true;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        let mut stack = Vec::new();
        for start in 0..n {
            let mut v = start;
            while !done[v] {
                stack.push(v);
                v = self.parent[v];
            }
            while let Some(w) = stack.pop() {
                let p = self.parent[w];
                self.depth[w] = self.depth[p] + 1;
                let c = self.arcs.cost(self.pred[w]);
                self.pot[w] = if self.pred_down[w] {
                    self.pot[p] + c
                } else {
                    self.pot[p] - c
                };
                done[w] = true;
            }
        }
    }

    fn extract(&self, pivots: usize) -> FlowSolution {
        let mut arc_flows: Vec<(usize, f64)> = (0..self.num_nodes)
            .filter(|&v| v != 0 && self.flow[v] > 0.0)
            .map(|v| (self.pred[v], self.flow[v]))
            .collect();
        arc_flows.sort_unstable_by_key(|&(k, _)| k);
        let value = sum_comp(
            (0..self.num_nodes)
                .filter(|&v| v != 0)
                .map(|v| self.flow[v] * self.arcs.cost(self.pred[v])),
        );
        FlowSolution {
            value,
            potentials: self.pot.clone(),
            arc_flows,
            pivots,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::CostMatrix;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn bipartite_problem<'a>(
        supplies: &[f64],
        demands: &[f64],
        cost: &'a CostMatrix,
    ) -> FlowProblem<'a> {
        let mut balances = supplies.to_vec();
        balances.extend(demands.iter().map(|d| -d));
        FlowProblem {
            num_nodes: supplies.len() + demands.len(),
            balances,
            arcs: Arcs::Bipartite {
                sources: supplies.len(),
                sinks: demands.len(),
                cost,
            },
            initial_tree: northwest_tree(supplies, demands),
        }
    }

    /// Independent check that the solution is optimal: feasible duals plus a
    /// matching dual objective pin the value from both sides.
    fn assert_certified(
        supplies: &[f64],
        demands: &[f64],
        cost: &CostMatrix,
        sol: &FlowSolution,
        tol: f64,
    ) {
        let n = supplies.len();
        // Dual feasibility of every arc.
        for i in 0..n {
            for j in 0..demands.len() {
                let rc = cost.get(i, j) + sol.potentials[i] - sol.potentials[n + j];
                assert!(rc >= -1e-9, "arc ({i},{j}) has reduced cost {rc}");
            }
        }
        // Dual objective equals the primal value.
        let dual: f64 = demands
            .iter()
            .enumerate()
            .map(|(j, &d)| d * sol.potentials[n + j])
            .sum::<f64>()
            - supplies
                .iter()
                .enumerate()
                .map(|(i, &s)| s * sol.potentials[i])
                .sum::<f64>();
        assert!(
            (dual - sol.value).abs() <= tol,
            "duality gap: primal {} vs dual {}",
            sol.value,
            dual
        );
        // Primal feasibility: marginals match.
        let mut row = vec![0.0; n];
        let mut col = vec![0.0; demands.len()];
        for &(k, f) in &sol.arc_flows {
            assert!(f >= 0.0);
            row[k / demands.len()] += f;
            col[k % demands.len()] += f;
        }
        for i in 0..n {
            assert!((row[i] - supplies[i]).abs() <= 1e-9, "row {i} marginal");
        }
        for j in 0..demands.len() {
            assert!((col[j] - demands[j]).abs() <= 1e-9, "col {j} marginal");
        }
    }

    #[test]
    fn northwest_tree_shape() {
        let t = northwest_tree(&[0.5, 0.5], &[0.3, 0.3, 0.4]);
        assert_eq!(t.len(), 4);
        assert_eq!(t, vec![0, 1, 4, 5]);
    }

    #[test]
    fn two_by_two_hand_instance() {
        // Sending across costs 10, staying costs 1; optimum keeps mass home.
        let cost = CostMatrix::from_values(2, 2, vec![1.0, 10.0, 10.0, 1.0]).unwrap();
        let p = [0.5, 0.5];
        let q = [0.5, 0.5];
        let sol = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert_certified(&p, &q, &cost, &sol, 1e-9);
    }

    #[test]
    fn transport_moves_excess_across() {
        // Two points at distance 1: cost is the mass that must move.
        let cost = CostMatrix::from_values(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let p = [0.7, 0.3];
        let q = [0.4, 0.6];
        let sol = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
        assert!((sol.value - 0.3).abs() < 1e-12);
        assert_certified(&p, &q, &cost, &sol, 1e-9);
    }

    /// Closed-form 1-D optimal transport: the area between the two
    /// cumulative distribution functions, evaluated between consecutive
    /// support points. Entirely independent of the simplex machinery.
    fn line_transport_oracle(xs: &[f64], p: &[f64], q: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut cdf_gap: f64 = 0.0;
        for i in 0..xs.len() - 1 {
            cdf_gap += p[i] - q[i];
            total += cdf_gap.abs() * (xs[i + 1] - xs[i]);
        }
        total
    }

    #[test]
    fn matches_line_oracle_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for trial in 0..30 {
            let n = 2 + trial % 14;
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let n = xs.len();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|w| w / s).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|w| w / s).collect();

            let vals: Vec<f64> = xs
                .iter()
                .flat_map(|a| xs.iter().map(move |b| (a - b).abs()))
                .collect();
            let cost = CostMatrix::from_values(n, n, vals).unwrap();
            let sol = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
            let oracle = line_transport_oracle(&xs, &p, &q);
            assert!(
                (sol.value - oracle).abs() <= 1e-10,
                "trial {trial}: simplex {} vs cdf formula {}",
                sol.value,
                oracle
            );
            assert_certified(&p, &q, &cost, &sol, 1e-9);
        }
    }

    #[test]
    fn certificate_holds_on_random_dense_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(9001);
        for trial in 0..60 {
            let n = 1 + trial % 12;
            let m = 1 + (trial * 7 + 3) % 12;
            let vals: Vec<f64> = (0..n * m).map(|_| rng.gen::<f64>() * 4.0 - 1.0).collect();
            let cost = CostMatrix::from_values(n, m, vals).unwrap();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|w| w / s).collect();
            let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|w| w / s).collect();
            let sol = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
            assert_certified(&p, &q, &cost, &sol, 1e-9);
        }
    }

    #[test]
    fn degenerate_masses_with_zeros_solve_cleanly() {
        let cost = CostMatrix::from_values(3, 3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0])
            .unwrap();
        let p = [0.5, 0.0, 0.5];
        let q = [0.0, 1.0, 0.0];
        let sol = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert_certified(&p, &q, &cost, &sol, 1e-9);
    }

    #[test]
    fn explicit_hub_network_routes_imbalance() {
        // Two sources, two sinks, and a hub that absorbs or supplies mass at
        // unit price 0.25: moving 0.3 of mass from sink 0's account to sink
        // 1's through the hub costs 0.15, cheaper than transporting at cost 1.
        let arcs = vec![
            ExplicitArc {
                from: 0,
                to: 2,
                cost: 0.0,
            },
            ExplicitArc {
                from: 0,
                to: 3,
                cost: 1.0,
            },
            ExplicitArc {
                from: 1,
                to: 2,
                cost: 1.0,
            },
            ExplicitArc {
                from: 1,
                to: 3,
                cost: 0.0,
            },
            ExplicitArc {
                from: 2,
                to: 4,
                cost: 0.25,
            },
            ExplicitArc {
                from: 4,
                to: 2,
                cost: 0.25,
            },
            ExplicitArc {
                from: 3,
                to: 4,
                cost: 0.25,
            },
            ExplicitArc {
                from: 4,
                to: 3,
                cost: 0.25,
            },
        ];
        let problem = FlowProblem {
            num_nodes: 5,
            balances: vec![0.7, 0.3, -0.4, -0.6, 0.0],
            arcs: Arcs::Explicit(&arcs),
            initial_tree: vec![0, 1, 3, 6],
        };
        let sol = min_cost_flow(&problem).unwrap();
        // Keep 0.4 at sink 0 free, 0.3 at sink 1 free; surplus 0.3 at sink 0
        // goes through the hub for 0.3 * 0.5 = 0.15.
        assert!((sol.value - 0.15).abs() < 1e-12, "value {}", sol.value);
    }

    #[test]
    fn unbalanced_problem_is_rejected() {
        let cost = CostMatrix::from_values(1, 1, vec![1.0]).unwrap();
        let problem = FlowProblem {
            num_nodes: 2,
            balances: vec![1.0, -0.5],
            arcs: Arcs::Bipartite {
                sources: 1,
                sinks: 1,
                cost: &cost,
            },
            initial_tree: vec![0],
        };
        assert!(matches!(
            min_cost_flow(&problem),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn negative_cycle_is_reported() {
        let arcs = vec![
            ExplicitArc {
                from: 0,
                to: 1,
                cost: -1.0,
            },
            ExplicitArc {
                from: 1,
                to: 0,
                cost: -1.0,
            },
        ];
        let problem = FlowProblem {
            num_nodes: 2,
            balances: vec![0.0, 0.0],
            arcs: Arcs::Explicit(&arcs),
            initial_tree: vec![0],
        };
        assert!(matches!(
            min_cost_flow(&problem),
            Err(Error::NumericFailure(_))
        ));
    }

    #[test]
    fn disconnected_tree_is_rejected() {
        let cost = CostMatrix::from_values(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let problem = FlowProblem {
            num_nodes: 4,
            balances: vec![0.5, 0.5, -0.5, -0.5],
            arcs: Arcs::Bipartite {
                sources: 2,
                sinks: 2,
                cost: &cost,
            },
            // Arcs 0 and 2 both touch sink 0 only; sink 1 is unreached.
            initial_tree: vec![0, 2, 0],
        };
        assert!(min_cost_flow(&problem).is_err());
    }

    #[test]
    fn point_masses_pay_the_direct_cost() {
        let cost = CostMatrix::from_values(1, 1, vec![5.0]).unwrap();
        let sol = min_cost_flow(&bipartite_problem(&[1.0], &[1.0], &cost)).unwrap();
        assert_eq!(sol.value, 5.0);
        assert_eq!(sol.arc_flows, vec![(0, 1.0)]);
    }

    #[test]
    fn identical_inputs_pivot_identically() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 9;
        let vals: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let cost = CostMatrix::from_values(n, n, vals).unwrap();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|w| w / s).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.01).collect();
        let s: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|w| w / s).collect();
        let a = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
        let b = min_cost_flow(&bipartite_problem(&p, &q, &cost)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.arc_flows, b.arc_flows);
        assert_eq!(a.pivots, b.pivots);
    }
}
