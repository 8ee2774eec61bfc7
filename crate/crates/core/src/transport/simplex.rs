//! Primal network simplex for the uncapacitated bipartite transportation
//! problem.
//!
//! The spanning-tree bookkeeping (thread/rev-thread lists, successor counts,
//! strongly feasible initial tree, block-search pricing) follows the classic
//! LEMON layout. Arcs are implicit: arc `e < n*m` joins source `e / m` to
//! sink `e % m`; arcs `n*m + u` are the artificial arcs to the root. Flow is
//! stored per node on its tree arc, since every non-tree arc carries zero.

use crate::error::{Error, Result};

const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Source of arc costs for a solve.
pub trait CostSource: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn cost(&self, i: usize, j: usize) -> f64;
}

/// Precomputed row-major cost matrix.
pub struct DenseCosts {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl CostSource for DenseCosts {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }
}

struct Scaled<'a, C: CostSource> {
    inner: &'a C,
    inv_scale: f64,
}

impl<C: CostSource> Scaled<'_, C> {
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        self.inner.cost(i, j) * self.inv_scale
    }
}

/// Optimal flow on the arcs `(i, j)` carrying positive mass.
pub fn solve<C: CostSource>(supply: &[f64], demand: &[f64], costs: &C) -> Result<Vec<(usize, usize, f64)>> {
    Ok(solve_with_potentials(supply, demand, costs)?.flows)
}

/// Optimal flow together with dual potentials `u_i + v_j ≤ c(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub flows: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn solve_with_potentials<C: CostSource>(supply: &[f64], demand: &[f64], costs: &C) -> Result<Solution> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Ok(Solution {
            flows: Vec::new(),
            u: vec![0.0; n],
            v: vec![0.0; m],
        });
    }
    let mut max_cost: f64 = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = costs.cost(i, j);
            if !c.is_finite() || c < 0.0 {
                return Err(Error::Numeric(format!("invalid arc cost {c} at ({i}, {j})")));
            }
            max_cost = max_cost.max(c);
        }
    }
    let scale = if max_cost > 0.0 { max_cost } else { 1.0 };
    let scaled = Scaled {
        inner: costs,
        inv_scale: 1.0 / scale,
    };
    let mut s = Simplex::new(supply, demand, &scaled);
    s.run()?;
    Ok(Solution {
        flows: s.flows(),
        u: s.pi[..n].iter().map(|x| -x * scale).collect(),
        v: s.pi[n..n + m].iter().map(|x| x * scale).collect(),
    })
}

struct Simplex<'a, C: CostSource> {
    n: usize,
    m: usize,
    costs: &'a Scaled<'a, C>,
    real_arcs: usize,
    root: usize,
    art_cost: f64,
    tol: f64,
    /// Artificial arc of node `u` points to the root.
    art_up: Vec<bool>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    flow: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    in_tree: Vec<u64>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

const NONE: usize = usize::MAX;

impl<'a, C: CostSource> Simplex<'a, C> {
    fn new(supply: &[f64], demand: &[f64], costs: &'a Scaled<'a, C>) -> Self {
        let n = supply.len();
        let m = demand.len();
        let node_num = n + m;
        let root = node_num;
        let real_arcs = n * m;
        let art_cost = 2.0 * node_num as f64;
        let mut s = Simplex {
            n,
            m,
            costs,
            real_arcs,
            root,
            art_cost,
            tol: 64.0 * f64::EPSILON * art_cost,
            art_up: vec![false; node_num],
            parent: vec![root; node_num + 1],
            pred: vec![NONE; node_num + 1],
            pred_dir: vec![DIR_UP; node_num + 1],
            flow: vec![0.0; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![1; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pi: vec![0.0; node_num + 1],
            in_tree: vec![0; real_arcs.div_ceil(64)],
            dirty_revs: Vec::new(),
            block_size: ((real_arcs as f64).sqrt() as usize).max(10).min(real_arcs.max(1)),
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };
        s.parent[root] = NONE;
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;
        for u in 0..node_num {
            s.parent[u] = root;
            s.pred[u] = real_arcs + u;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            if u < n {
                s.art_up[u] = true;
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.flow[u] = supply[u];
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.flow[u] = demand[u - n];
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.real_arcs {
            e / self.m
        } else {
            let u = e - self.real_arcs;
            if self.art_up[u] {
                u
            } else {
                self.root
            }
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.real_arcs {
            self.n + e % self.m
        } else {
            let u = e - self.real_arcs;
            if self.art_up[u] {
                self.root
            } else {
                u
            }
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.real_arcs {
            self.costs.cost(e / self.m, e % self.m)
        } else if self.art_up[e - self.real_arcs] {
            0.0
        } else {
            self.art_cost
        }
    }

    #[inline]
    fn tree_bit(&self, e: usize) -> bool {
        self.in_tree[e >> 6] >> (e & 63) & 1 == 1
    }

    #[inline]
    fn set_tree_bit(&mut self, e: usize, on: bool) {
        if e >= self.real_arcs {
            return;
        }
        if on {
            self.in_tree[e >> 6] |= 1 << (e & 63);
        } else {
            self.in_tree[e >> 6] &= !(1 << (e & 63));
        }
    }

    #[inline]
    fn reduced(&self, i: usize, j: usize) -> f64 {
        self.costs.cost(i, j) + self.pi[i] - self.pi[self.n + j]
    }

    fn scan(&self, from: usize, to: usize, min: &mut f64, best: &mut usize, cnt: &mut usize) -> Option<usize> {
        let m = self.m;
        let (mut i, mut j) = (from / m, from % m);
        for e in from..to {
            if !self.tree_bit(e) {
                let c = self.reduced(i, j);
                if c < *min {
                    *min = c;
                    *best = e;
                }
            }
            *cnt -= 1;
            if *cnt == 0 {
                if *min < -self.tol {
                    return Some(e + 1);
                }
                *cnt = self.block_size;
            }
            j += 1;
            if j == m {
                j = 0;
                i += 1;
            }
        }
        None
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = 0.0;
        let mut best = NONE;
        let mut cnt = self.block_size;
        let stop = self
            .scan(self.next_arc, self.real_arcs, &mut min, &mut best, &mut cnt)
            .or_else(|| self.scan(0, self.next_arc, &mut min, &mut best, &mut cnt));
        if min >= -self.tol {
            return false;
        }
        self.in_arc = best;
        self.next_arc = match stop {
            Some(e) if e < self.real_arcs => e,
            _ => 0,
        };
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving_arc(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP && self.flow[u] < self.delta {
                self.delta = self.flow[u];
                self.u_out = u;
                result = 1;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN && self.flow[u] <= self.delta {
                self.delta = self.flow[u];
                self.u_out = u;
                result = 2;
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.flow[u] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                self.flow[u] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }
        let leaving = self.pred[self.u_out];
        self.set_tree_bit(leaving, false);
        self.set_tree_bit(self.in_arc, true);
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let in_dir = if u_in == self.source(self.in_arc) {
            DIR_UP
        } else {
            DIR_DOWN
        };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = self.delta;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                self.flow[u] = self.flow[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = in_dir;
            self.flow[u_in] = self.delta;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in]
            - self.pi[self.u_in]
            - f64::from(self.pred_dir[self.u_in]) * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    fn run(&mut self) -> Result<()> {
        let guard = 1_000_000u64 + 50 * self.real_arcs as u64;
        let mut iterations = 0u64;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Numeric("transport problem reported unbounded".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            iterations += 1;
            if iterations > guard {
                return Err(Error::Numeric(format!(
                    "network simplex exceeded {guard} pivots"
                )));
            }
        }
        Ok(())
    }

    fn flows(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = (0..self.n + self.m)
            .filter(|&u| self.pred[u] < self.real_arcs && self.flow[u] > 0.0)
            .map(|u| {
                let e = self.pred[u];
                (e / self.m, e % self.m, self.flow[u])
            })
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }
}
