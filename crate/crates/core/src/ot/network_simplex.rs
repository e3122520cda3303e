//! Primal network simplex for the dense transportation problem.
//!
//! Follows the LEMON spanning-tree layout (parent / thread / successor
//! counts) with strongly feasible trees and block-search pivoting. All arcs
//! are uncapacitated, so only the LOWER and TREE states occur.

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
const NONE: usize = usize::MAX;

/// Optimal flow and dual potentials of a transportation LP.
#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    /// Row-major `n x m` flow.
    pub flow: Vec<f64>,
    /// Source potentials `phi_i`, sink potentials `psi_j` with
    /// `phi_i + psi_j <= c_ij`, equality on the support.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub cost: f64,
}

struct Simplex<'a> {
    n: usize,
    m: usize,
    node_num: usize,
    arc_num: usize,
    costs: &'a [f64],
    art_cost: f64,
    // arrays over real + artificial arcs
    flow: Vec<f64>,
    state: Vec<i8>,
    // artificial arc endpoints (index u <-> arc arc_num + u)
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    art_cost_of: Vec<f64>,
    // node arrays (root included)
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    dirty_revs: Vec<usize>,
    root: usize,
    // pivot state
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
    next_arc: usize,
    block_size: usize,
    tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(supply: &[f64], demand: &[f64], costs: &'a [f64]) -> Self {
        let n = supply.len();
        let m = demand.len();
        let node_num = n + m;
        let arc_num = n * m;
        let max_cost = costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let art_cost = (max_cost + 1.0) * node_num as f64;
        let root = node_num;

        let mut s = Simplex {
            n,
            m,
            node_num,
            arc_num,
            costs,
            art_cost,
            flow: vec![0.0; arc_num + node_num],
            state: vec![STATE_LOWER; arc_num + node_num],
            art_source: vec![0; node_num],
            art_target: vec![0; node_num],
            art_cost_of: vec![0.0; node_num],
            pi: vec![0.0; node_num + 1],
            parent: vec![NONE; node_num + 1],
            pred: vec![NONE; node_num + 1],
            thread: vec![0; node_num + 1],
            rev_thread: vec![0; node_num + 1],
            succ_num: vec![1; node_num + 1],
            last_succ: vec![0; node_num + 1],
            pred_dir: vec![DIR_UP; node_num + 1],
            dirty_revs: Vec::new(),
            root,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
            next_arc: 0,
            block_size: ((arc_num as f64).sqrt().ceil() as usize).max(10),
            tol: 1e-13 * (max_cost + 1.0),
        };

        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = node_num + 1;
        s.last_succ[root] = root - 1;

        for u in 0..node_num {
            let e = arc_num + u;
            let sup = if u < n { supply[u] } else { -demand[u - n] };
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if sup >= 0.0 {
                s.pred_dir[u] = DIR_UP;
                s.pi[u] = 0.0;
                s.art_source[u] = u;
                s.art_target[u] = root;
                s.flow[e] = sup;
                s.art_cost_of[u] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.pi[u] = art_cost;
                s.art_source[u] = root;
                s.art_target[u] = u;
                s.flow[e] = -sup;
                s.art_cost_of[u] = art_cost;
            }
        }
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.arc_num {
            e / self.m
        } else {
            self.art_source[e - self.arc_num]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.arc_num {
            self.n + e % self.m
        } else {
            self.art_target[e - self.arc_num]
        }
    }

    #[inline]
    fn cost(&self, e: usize) -> f64 {
        if e < self.arc_num {
            self.costs[e]
        } else {
            self.art_cost_of[e - self.arc_num]
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> f64 {
        let i = e / self.m;
        let j = self.n + e % self.m;
        f64::from(self.state[e]) * (self.costs[e] + self.pi[i] - self.pi[j])
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.tol;
        let mut found = false;
        let mut cnt = self.block_size;
        let total = self.arc_num;
        let mut e = self.next_arc;
        for _ in 0..total {
            let c = self.reduced(e);
            if c < min {
                min = c;
                self.in_arc = e;
                found = true;
            }
            e += 1;
            if e == total {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found {
                    self.next_arc = e;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if found {
            self.next_arc = e;
        }
        found
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
        let (first, second) = if self.state[self.in_arc] == STATE_LOWER {
            (self.source(self.in_arc), self.target(self.in_arc))
        } else {
            (self.target(self.in_arc), self.source(self.in_arc))
        };
        self.delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
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
        if self.delta > 0.0 {
            let val = f64::from(self.state[self.in_arc]) * self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let leaving = self.pred[self.u_out];
        self.state[leaving] = STATE_LOWER;
        self.flow[leaving] = 0.0;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };

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
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source(in_arc) { DIR_UP } else { DIR_DOWN };
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
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in]
            - f64::from(self.pred_dir[u_in]) * self.cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Recomputes every potential from the tree, clearing accumulated
    /// rounding from incremental updates.
    fn refresh_potentials(&mut self) {
        self.pi[self.root] = 0.0;
        let mut u = self.thread[self.root];
        while u != self.root {
            let p = self.parent[u];
            let c = self.cost(self.pred[u]);
            self.pi[u] = if self.pred_dir[u] == DIR_UP { self.pi[p] - c } else { self.pi[p] + c };
            u = self.thread[u];
        }
    }

    fn run(&mut self) {
        let refresh_every = 4 * (self.node_num + 16);
        let mut since_refresh = 0;
        loop {
            while self.find_entering_arc() {
                self.find_join_node();
                if !self.find_leaving_arc() {
                    // Uncapacitated bipartite arcs admit no unbounded cycle.
                    unreachable!("transportation LP cannot be unbounded");
                }
                self.change_flow();
                self.update_tree_structure();
                self.update_potential();
                since_refresh += 1;
                if since_refresh >= refresh_every {
                    self.refresh_potentials();
                    since_refresh = 0;
                }
            }
            self.refresh_potentials();
            since_refresh = 0;
            if !self.find_entering_arc() {
                break;
            }
        }
    }
}

/// Solves `min <C, gamma>` over couplings of `supply` and `demand`.
/// `costs` is the row-major `n x m` cost matrix.
pub(crate) fn solve_transport(supply: &[f64], demand: &[f64], costs: &[f64]) -> LpSolution {
    let n = supply.len();
    let m = demand.len();
    debug_assert_eq!(costs.len(), n * m);
    let mut s = Simplex::new(supply, demand, costs);
    s.run();

    let mut flow: Vec<f64> = s.flow[..s.arc_num].iter().map(|f| f.max(0.0)).collect();
    // The artificial arcs only absorb the rounding imbalance of the marginals.
    for f in &mut flow {
        if *f < 1e-300 {
            *f = 0.0;
        }
    }
    let cost = flow.iter().zip(costs).map(|(f, c)| f * c).sum();
    let phi = (0..n).map(|i| -s.pi[i]).collect();
    let psi = (0..m).map(|j| s.pi[n + j]).collect();
    let _ = s.art_cost;
    LpSolution { flow, phi, psi, cost }
}
