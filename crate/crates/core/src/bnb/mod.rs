//! Spatial branch and bound with linearized McCormick lower bounds.
//!
//! Each node solves an LP built from the affine under- and overestimators
//! given by the relaxations' subgradients at the node midpoint (and at the
//! incumbent when it lies in the node). Upper bounds come from Nelder-Mead
//! on the exact problem. Only degrees of freedom are branched on;
//! intermediate variables of full-space problems are re-bounded in every
//! node by forward interval propagation.

pub mod local;
pub mod lp;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::problem::{Problem, RelaxedProblem};
use crate::train::lhs_sample;

pub use local::{nelder_mead, upper_bound_local, LocalSolution};
pub use lp::{simplex_lp, LpFailure, LpOutcome};

#[derive(Clone, Debug)]
pub struct Settings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub feas_tol: f64,
    pub max_time: Duration,
    pub max_iter: usize,
    pub multistart_count: usize,
    pub use_envelopes: bool,
    pub seed: u64,
    /// Evaluation budget of one Nelder-Mead run.
    pub local_max_evals: usize,
    pub log_progress: bool,
    /// Keep the boxes and bounds of nodes fathomed by bound.
    pub record_fathomed: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            abs_tol: 1e-3,
            rel_tol: 1e-3,
            feas_tol: 1e-6,
            max_time: Duration::from_secs(60),
            max_iter: 100_000,
            multistart_count: 20,
            use_envelopes: true,
            seed: 0,
            local_max_evals: 400,
            log_progress: false,
            record_fathomed: false,
        }
    }
}

impl Settings {
    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn converged(&self, lb: f64, ub: f64) -> bool {
        ub - lb <= self.abs_tol || ub - lb <= self.rel_tol * ub.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    TimeLimit,
    IterLimit,
    Infeasible,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::TimeLimit => "time_limit",
            Status::IterLimit => "iter_limit",
            Status::Infeasible => "infeasible",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BnBResult {
    pub status: Status,
    pub ub: f64,
    pub lb: f64,
    /// Full point (degrees of freedom followed by lifted intermediates).
    pub incumbent: Option<Vec<f64>>,
    pub iterations: usize,
    pub wall_time: f64,
    pub time_per_iteration: f64,
    /// Global `(lb, ub)` after every iteration.
    pub history: Vec<(f64, f64)>,
    pub fathomed: Vec<(Vec<Interval>, f64)>,
}

impl BnBResult {
    pub fn gap(&self) -> f64 {
        self.ub - self.lb
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub bounds: Vec<Interval>,
    pub lb: f64,
    pub depth: usize,
    pub id: usize,
}

struct Queued(Node);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // max-heap: lowest bound first, then the older node
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.lb.total_cmp(&self.0.lb).then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Result of bounding one node.
#[derive(Clone, Debug, PartialEq)]
pub enum LowerBound {
    Infeasible,
    Bound { lb: f64, lp_point: Option<Vec<f64>> },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Reference point of a node: the lifted midpoint of its degrees of freedom.
fn reference_point(p: &Problem, bounds: &[Interval]) -> Vec<f64> {
    let mid: Vec<f64> = bounds[..p.n_dof].iter().map(|b| b.midpoint()).collect();
    let mut x = match p.lift(&mid) {
        Ok((x, _)) => x,
        Err(_) => bounds.iter().map(|b| b.midpoint()).collect(),
    };
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = b.clamp(*v);
    }
    x
}

/// LP lower bound of a node from linearizations at `refs`.
pub fn lower_bound(p: &Problem, bounds: &[Interval], refs: &[Vec<f64>], s: &Settings, node_id: usize) -> Result<LowerBound> {
    let n = p.n_vars;
    let mut relaxed: Vec<(&Vec<f64>, RelaxedProblem)> = Vec::with_capacity(refs.len());
    let mut failed = false;
    for r in refs {
        match p.relax_box(bounds, r, s.use_envelopes) {
            Ok(rel) => relaxed.push((r, rel)),
            Err(Error::RootFind { .. }) | Err(Error::Domain(_)) => failed = true,
            Err(e) => return Err(e),
        }
    }
    if relaxed.is_empty() {
        // envelope failure: keep the node with its interval bound
        debug_assert!(failed);
        let (obj, ineq, eq) = p.interval_bounds(bounds)?;
        if ineq.iter().any(|g| g.lo > s.feas_tol) || eq.iter().any(|h| h.lo > s.feas_tol || h.hi < -s.feas_tol) {
            return Ok(LowerBound::Infeasible);
        }
        return Ok(LowerBound::Bound { lb: obj.lo, lp_point: None });
    }

    let first = &relaxed[0].1;
    if first.inequalities.iter().any(|g| g.range.lo > s.feas_tol)
        || first.equalities.iter().any(|h| h.range.lo > s.feas_tol || h.range.hi < -s.feas_tol)
    {
        return Ok(LowerBound::Infeasible);
    }
    let obj_range = first.objective.range;
    let interval_lb = relaxed.iter().map(|(_, r)| r.objective.range.lo).fold(f64::NEG_INFINITY, f64::max);

    // variables: x (n) and the epigraph variable eta
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut push_cut = |sub: &[f64], value: f64, at: &[f64], eta: f64, rhs_slack: f64| {
        if !finite(sub) || !value.is_finite() {
            return;
        }
        let mut a = sub.to_vec();
        a.push(eta);
        rows.push((a, dot(sub, at) - value + rhs_slack));
    };
    for (at, rel) in &relaxed {
        let o = &rel.objective;
        push_cut(&o.cv_sub, o.cv, at, -1.0, 0.0);
        for g in &rel.inequalities {
            push_cut(&g.cv_sub, g.cv, at, 0.0, s.feas_tol);
        }
        for h in &rel.equalities {
            push_cut(&h.cv_sub, h.cv, at, 0.0, s.feas_tol);
            let neg: Vec<f64> = h.cc_sub.iter().map(|v| -v).collect();
            push_cut(&neg, -h.cc, at, 0.0, s.feas_tol);
        }
    }
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut lp_bounds = bounds.to_vec();
    lp_bounds.push(obj_range);
    match simplex_lp(&c, &rows, &lp_bounds) {
        // objective cuts alone cannot be infeasible; treat that as a breakdown
        Ok(LpOutcome::Infeasible) if first.inequalities.is_empty() && first.equalities.is_empty() => {
            Ok(LowerBound::Bound { lb: interval_lb, lp_point: None })
        }
        Ok(LpOutcome::Infeasible) => Ok(LowerBound::Infeasible),
        Ok(LpOutcome::Optimal { x, value }) => {
            Ok(LowerBound::Bound { lb: value.max(interval_lb), lp_point: Some(x[..n].to_vec()) })
        }
        Err(LpFailure(message)) => {
            if s.log_progress {
                eprintln!("{}", Error::LpBreakdown { node: node_id, message });
            }
            Ok(LowerBound::Bound { lb: interval_lb, lp_point: None })
        }
    }
}

/// Splits the degree of freedom with the largest width relative to the
/// root box at its midpoint; `None` if every such width is negligible.
pub fn branch(node: &Node, root: &[Interval], n_dof: usize) -> Option<(Vec<Interval>, Vec<Interval>)> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n_dof {
        let w = node.bounds[i].width();
        if w < 1e-12 {
            continue;
        }
        let rel = if root[i].width() > 0.0 { w / root[i].width() } else { w };
        if best.is_none_or(|(_, r)| rel > r) {
            best = Some((i, rel));
        }
    }
    let (i, _) = best?;
    let b = node.bounds[i];
    let m = b.midpoint();
    let mut left = node.bounds.clone();
    let mut right = node.bounds.clone();
    left[i] = Interval::raw(b.lo, m);
    right[i] = Interval::raw(m, b.hi);
    Some((left, right))
}

struct Incumbent {
    ub: f64,
    x: Option<Vec<f64>>,
}

impl Incumbent {
    fn offer(&mut self, sol: Option<LocalSolution>) -> bool {
        match sol {
            Some(sol) if sol.value < self.ub => {
                self.ub = sol.value;
                self.x = Some(sol.x);
                true
            }
            _ => false,
        }
    }
}

fn in_box(x: &[f64], bounds: &[Interval], n: usize) -> bool {
    x[..n].iter().zip(bounds).all(|(v, b)| b.contains(*v))
}

/// Global minimization of `p` by branch and bound.
pub fn solve(p: &Problem, s: &Settings) -> Result<BnBResult> {
    s.validate()?;
    let start = Instant::now();
    let nd = p.n_dof;
    let root_bounds = p.tighten(&p.bounds)?;
    let dof_root: Vec<Interval> = root_bounds[..nd].to_vec();
    let mut inc = Incumbent { ub: f64::INFINITY, x: None };

    // root upper bounds: midpoint plus Latin hypercube starts
    let mut starts = vec![dof_root.iter().map(|b| b.midpoint()).collect::<Vec<f64>>()];
    if s.multistart_count > 0 {
        starts.extend(lhs_sample(s.multistart_count, &dof_root, s.seed));
    }
    for st in &starts {
        inc.offer(upper_bound_local(p, st, &dof_root, s.feas_tol, s.local_max_evals));
        if start.elapsed() >= s.max_time {
            break;
        }
    }

    let mut iterations = 0usize;
    let mut history = Vec::new();
    let mut fathomed = Vec::new();
    let mut fathomed_lb = f64::INFINITY;
    let mut heap: BinaryHeap<Queued> = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut logged = 0usize;

    let mut bound_node = |bounds: Vec<Interval>, parent_lb: f64, depth: usize, inc: &mut Incumbent, iterations: &mut usize| -> Result<Option<Node>> {
        let id = next_id;
        next_id += 1;
        *iterations += 1;
        let mut refs = vec![reference_point(p, &bounds)];
        if let Some(x) = &inc.x {
            if in_box(x, &bounds, nd) {
                let clamped: Vec<f64> = x.iter().zip(&bounds).map(|(v, b)| b.clamp(*v)).collect();
                refs.push(clamped);
            }
        }
        match lower_bound(p, &bounds, &refs, s, id)? {
            LowerBound::Infeasible => Ok(None),
            LowerBound::Bound { lb, lp_point } => {
                let lb = lb.max(parent_lb);
                if let Some(xl) = lp_point {
                    let dof = xl[..nd].to_vec();
                    if let Ok((_, ev)) = p.lift(&dof) {
                        if ev.objective < inc.ub - s.abs_tol {
                            let dof_box = &bounds[..nd];
                            inc.offer(upper_bound_local(p, &dof, dof_box, s.feas_tol, s.local_max_evals));
                        }
                    }
                }
                Ok(Some(Node { bounds, lb, depth, id }))
            }
        }
    };

    if let Some(root) = bound_node(root_bounds.clone(), f64::NEG_INFINITY, 0, &mut inc, &mut iterations)? {
        heap.push(Queued(root));
    }
    let status = loop {
        let open_lb = heap.peek().map_or(f64::INFINITY, |q| q.0.lb);
        let global_lb = open_lb.min(fathomed_lb);
        history.push((global_lb.min(inc.ub), inc.ub));
        if s.log_progress && iterations / 100 > logged / 100 {
            logged = iterations;
            eprintln!(
                "iter {iterations:>7}  open {:>6}  lb {:>14.6e}  ub {:>14.6e}  gap {:>10.3e}",
                heap.len(),
                global_lb,
                inc.ub,
                inc.ub - global_lb
            );
        }
        if heap.is_empty() {
            break if inc.x.is_some() { Status::Optimal } else { Status::Infeasible };
        }
        if inc.x.is_some() && s.converged(global_lb, inc.ub) {
            break Status::Optimal;
        }
        if start.elapsed() >= s.max_time {
            break Status::TimeLimit;
        }
        if iterations >= s.max_iter {
            break Status::IterLimit;
        }
        let Queued(node) = heap.pop().expect("heap is not empty");
        if inc.x.is_some() && s.converged(node.lb, inc.ub) {
            fathomed_lb = fathomed_lb.min(node.lb);
            if s.record_fathomed {
                fathomed.push((node.bounds.clone(), node.lb));
            }
            continue;
        }
        let Some((left, right)) = branch(&node, &root_bounds, nd) else {
            // exhausted: the box is a point in the degrees of freedom
            fathomed_lb = fathomed_lb.min(node.lb);
            continue;
        };
        for child in [left, right] {
            let child = p.tighten(&child)?;
            if let Some(c) = bound_node(child, node.lb, node.depth + 1, &mut inc, &mut iterations)? {
                heap.push(Queued(c));
            }
        }
    };

    let open_lb = heap.peek().map_or(f64::INFINITY, |q| q.0.lb);
    let lb = match status {
        Status::Infeasible => f64::INFINITY,
        _ => open_lb.min(fathomed_lb).min(inc.ub),
    };
    let wall_time = start.elapsed().as_secs_f64();
    Ok(BnBResult {
        status,
        ub: inc.ub,
        lb,
        incumbent: inc.x,
        iterations,
        wall_time,
        time_per_iteration: if iterations > 0 { wall_time / iterations as f64 } else { 0.0 },
        history,
        fathomed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Dag;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn affine_objective_in_one_iteration() {
        let mut dag = Dag::new();
        let (x, y) = (dag.var(0), dag.var(1));
        let obj = dag.lin(vec![(x, 2.0), (y, -1.0)], 0.5);
        let p = Problem::reduced(dag, vec![iv(-1.0, 1.0), iv(0.0, 3.0)], obj, vec![]).unwrap();
        let r = solve(&p, &Settings::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert_eq!(r.iterations, 1);
        assert!((r.ub - (-4.5)).abs() < 1e-9 && (r.lb - r.ub).abs() < 1e-9);
    }

    #[test]
    fn branching_rule() {
        let root = vec![iv(0.0, 4.0), iv(0.0, 1.0)];
        let node = Node { bounds: root.clone(), lb: 0.0, depth: 0, id: 0 };
        let (l, r) = branch(&node, &root, 2).unwrap();
        assert_eq!((l[0], r[0]), (iv(0.0, 2.0), iv(2.0, 4.0)));
        assert_eq!((l[1], r[1]), (root[1], root[1]));
        let node = Node { bounds: vec![iv(0.0, 2.0), iv(0.0, 0.5)], lb: 0.0, depth: 1, id: 1 };
        let (l, _) = branch(&node, &root, 2).unwrap();
        assert_eq!(l[0], iv(0.0, 1.0));
        let point = Node { bounds: vec![Interval::point(1.0), Interval::point(0.0)], lb: 0.0, depth: 9, id: 2 };
        assert!(branch(&point, &root, 2).is_none());
    }

    #[test]
    fn nonconvex_one_dimensional() {
        // x^4 - 3 x^2 + x on [-2, 2]: global min near x = -1.3008
        let mut dag = Dag::new();
        let x = dag.var(0);
        let x2 = dag.sqr(x);
        let x4 = dag.sqr(x2);
        let obj = dag.lin(vec![(x4, 1.0), (x2, -3.0), (x, 1.0)], 0.0);
        let p = Problem::reduced(dag, vec![iv(-2.0, 2.0)], obj, vec![]).unwrap();
        let s = Settings { multistart_count: 0, ..Settings::default() };
        let r = solve(&p, &s).unwrap();
        let f = |x: f64| x.powi(4) - 3.0 * x * x + x;
        let oracle = (0..=400_000).map(|i| f(-2.0 + 4.0 * i as f64 / 400_000.0)).fold(f64::INFINITY, f64::min);
        assert_eq!(r.status, Status::Optimal);
        assert!(r.ub - oracle <= 1e-3 + 1e-3 * oracle.abs());
        assert!(r.lb <= oracle + 1e-9);
        assert!(r.history.windows(2).all(|w| w[1].0 >= w[0].0 - 1e-12 && w[1].1 <= w[0].1));
    }

    #[test]
    fn infeasible_constraint() {
        // x^2 + 1 <= 0
        let mut dag = Dag::new();
        let x = dag.var(0);
        let x2 = dag.sqr(x);
        let g = dag.lin(vec![(x2, 1.0)], 1.0);
        let p = Problem::reduced(dag, vec![iv(-1.0, 1.0)], x, vec![g]).unwrap();
        let r = solve(&p, &Settings::default()).unwrap();
        assert_eq!(r.status, Status::Infeasible);
        assert!(r.incumbent.is_none());
    }

    #[test]
    fn lower_bound_detects_violated_interval_bounds() {
        let mut dag = Dag::new();
        let x = dag.var(0);
        let g = dag.lin(vec![(x, -1.0)], 2.0); // 2 - x <= 0 on [0, 1]
        let p = Problem::reduced(dag, vec![iv(0.0, 1.0)], x, vec![g]).unwrap();
        let lb = lower_bound(&p, &p.bounds, &[vec![0.5]], &Settings::default(), 0).unwrap();
        assert_eq!(lb, LowerBound::Infeasible);
    }

    #[test]
    fn limits_produce_statuses() {
        let mut dag = Dag::new();
        let x = dag.var(0);
        let x2 = dag.sqr(x);
        let x4 = dag.sqr(x2);
        let obj = dag.lin(vec![(x4, 1.0), (x2, -3.0), (x, 1.0)], 0.0);
        let p = Problem::reduced(dag, vec![iv(-2.0, 2.0)], obj, vec![]).unwrap();
        let st = Settings { max_iter: 3, abs_tol: 1e-9, rel_tol: 1e-9, ..Settings::default() };
        let r = solve(&p, &st).unwrap();
        assert_eq!(r.status, Status::IterLimit);
        assert!(r.lb <= r.ub);
        let st = Settings { max_time: Duration::ZERO, ..Settings::default() };
        assert_eq!(solve(&p, &st).unwrap().status, Status::TimeLimit);
        assert!(solve(&p, &Settings { abs_tol: 0.0, ..Settings::default() }).is_err());
    }
}
