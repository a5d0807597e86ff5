//! Derivative-free local search for upper bounds.

use crate::interval::Interval;
use crate::problem::Problem;

/// Bounded Nelder-Mead; trial points are projected onto the box.
pub fn nelder_mead<F>(f: F, start: &[f64], bounds: &[Interval], max_evals: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let project = |x: &mut Vec<f64>| {
        for (v, b) in x.iter_mut().zip(bounds) {
            *v = b.clamp(*v);
        }
    };
    let mut x0 = start.to_vec();
    project(&mut x0);
    if n == 0 {
        let v = f(&x0);
        return (x0, v);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = f(&x0);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut x = x0.clone();
        let w = bounds[i].width();
        let step = if w > 0.0 { 0.05 * w } else { 0.0 };
        x[i] = if x[i] + step <= bounds[i].hi { x[i] + step } else { x[i] - step };
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;
    let scale: Vec<f64> = bounds.iter().map(|b| b.width().max(1e-300)).collect();

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).zip(&scale).map(|((a, b), s)| ((a - b) / s).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-14 * (1.0 + best.abs()) && diameter <= 1e-9 || diameter <= 1e-12 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut x);
            x
        };
        let xr = along(1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex[1..].iter_mut() {
                    for (a, b) in x.iter_mut().zip(&x_best) {
                        *a = b + 0.5 * (*a - b);
                    }
                    *v = f(x);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Local search outcome: objective value, degrees of freedom and the lifted point.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSolution {
    pub value: f64,
    pub dof: Vec<f64>,
    pub x: Vec<f64>,
}

const PENALTY_START: f64 = 1e3;
const PENALTY_ESCALATIONS: usize = 5;

/// Exact objective and violation at a degree-of-freedom point; `None` on
/// evaluation errors.
fn evaluate(p: &Problem, dof: &[f64]) -> Option<(f64, f64, Vec<f64>)> {
    let (x, ev) = p.lift(dof).ok()?;
    if !ev.objective.is_finite() {
        return None;
    }
    let viol = ev.violation();
    Some((ev.objective, viol, x))
}

/// Nelder-Mead on the exact problem with a quadratic penalty, escalated
/// tenfold until the iterate is feasible to `feas_tol`. Returns only
/// feasible points.
pub fn upper_bound_local(
    p: &Problem,
    start: &[f64],
    dof_box: &[Interval],
    feas_tol: f64,
    max_evals: usize,
) -> Option<LocalSolution> {
    let constrained = !p.inequalities.is_empty() || (p.definitions.is_empty() && !p.equalities.is_empty());
    let best_feasible = std::cell::RefCell::new(None::<LocalSolution>);
    let record = |value: f64, viol: f64, dof: &[f64], x: Vec<f64>| {
        if viol <= feas_tol {
            let mut b = best_feasible.borrow_mut();
            if b.as_ref().is_none_or(|s| value < s.value) {
                *b = Some(LocalSolution { value, dof: dof.to_vec(), x });
            }
        }
    };

    let mut current = start.to_vec();
    let mut rho = PENALTY_START;
    let mut last_infeasible: Option<Vec<f64>> = None;
    for _ in 0..=PENALTY_ESCALATIONS {
        let merit = |d: &[f64]| -> f64 {
            match evaluate(p, d) {
                Some((f, viol, x)) => {
                    record(f, viol, d, x);
                    if constrained {
                        f + rho * penalty(p, d)
                    } else {
                        f
                    }
                }
                None => f64::INFINITY,
            }
        };
        let (x, _) = nelder_mead(merit, &current, dof_box, max_evals);
        current = x;
        match evaluate(p, &current) {
            Some((_, viol, _)) if viol <= feas_tol => {
                last_infeasible = None;
                break;
            }
            Some(_) => last_infeasible = Some(current.clone()),
            None => break,
        }
        if !constrained {
            break;
        }
        rho *= 10.0;
    }

    // restore feasibility along the segment to the best feasible point seen
    if let (Some(bad), Some(good)) = (last_infeasible, best_feasible.borrow().clone()) {
        if let Some(r) = restore(p, &bad, &good.dof, feas_tol) {
            record(r.value, 0.0, &r.dof, r.x);
        }
    }
    best_feasible.into_inner()
}

/// Sum of squared constraint violations. Equalities that define lifted
/// intermediates hold by construction and are skipped.
fn penalty(p: &Problem, dof: &[f64]) -> f64 {
    match p.lift(dof) {
        Ok((_, ev)) => {
            ev.inequalities.iter().map(|g| g.max(0.0).powi(2)).sum::<f64>()
                + if p.definitions.is_empty() { ev.equalities.iter().map(|h| h * h).sum::<f64>() } else { 0.0 }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Bisection between an infeasible and a feasible point for the feasible
/// point closest to the infeasible one.
fn restore(p: &Problem, bad: &[f64], good: &[f64], feas_tol: f64) -> Option<LocalSolution> {
    let at = |t: f64| -> Vec<f64> { bad.iter().zip(good).map(|(b, g)| b + t * (g - b)).collect() };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match evaluate(p, &at(mid)) {
            Some((_, viol, _)) if viol <= feas_tol => hi = mid,
            _ => lo = mid,
        }
    }
    let dof = at(hi);
    let (value, viol, x) = evaluate(p, &dof)?;
    (viol <= feas_tol).then_some(LocalSolution { value, dof, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Dag;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn convex_quadratic() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.7).powi(2);
        let (x, v) = nelder_mead(f, &[1.5, 1.5], &[iv(-2.0, 2.0), iv(-2.0, 2.0)], 2000);
        assert!((x[0] - 0.3).abs() < 1e-6 && (x[1] + 0.7).abs() < 1e-6 && v < 1e-12);
        // minimizer on the boundary
        let (x, _) = nelder_mead(|x: &[f64]| x[0], &[0.5], &[iv(0.0, 1.0)], 500);
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn optimal_start_is_kept() {
        let f = |x: &[f64]| x[0] * x[0];
        let (x, v) = nelder_mead(f, &[0.0], &[iv(-1.0, 1.0)], 500);
        assert_eq!((x[0], v), (0.0, 0.0));
    }

    #[test]
    fn penalty_returns_only_feasible_points() {
        // min -x - y s.t. x^2 + y^2 - 1 <= 0
        let mut dag = Dag::new();
        let (x, y) = (dag.var(0), dag.var(1));
        let obj = dag.lin(vec![(x, -1.0), (y, -1.0)], 0.0);
        let (x2, y2) = (dag.sqr(x), dag.sqr(y));
        let g = dag.lin(vec![(x2, 1.0), (y2, 1.0)], -1.0);
        let b = vec![iv(-2.0, 2.0), iv(-2.0, 2.0)];
        let p = Problem::reduced(dag, b.clone(), obj, vec![g]).unwrap();
        let s = upper_bound_local(&p, &[0.0, 0.0], &b, 1e-6, 2000).unwrap();
        let ev = p.eval_point(&s.x).unwrap();
        assert!(ev.inequalities[0] <= 1e-6);
        assert!((s.value + 2f64.sqrt()).abs() < 1e-4, "{}", s.value);
    }
}
