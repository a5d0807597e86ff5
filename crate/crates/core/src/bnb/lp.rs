//! Dense two-phase bounded simplex for small linear programs
//! `min c^T x  s.t.  A x <= b,  lo <= x <= hi`.

use crate::interval::Interval;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
}

/// Numerical trouble inside the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct LpFailure(pub String);

#[derive(Clone, Copy, Debug, PartialEq)]
enum At {
    Basic(usize),
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    cols: usize,
    /// `B^{-1} [A | S | R]`, row-major `m x cols`.
    t: Vec<f64>,
    /// Values of the basic variables, one per row.
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<At>,
    upper: Vec<f64>,
    /// Columns that may never enter the basis again.
    frozen: Vec<bool>,
}

impl Tableau {
    fn value_of(&self, j: usize) -> f64 {
        match self.state[j] {
            At::Basic(r) => self.xb[r],
            At::Lower => 0.0,
            At::Upper => self.upper[j],
        }
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.t[r * self.cols..(r + 1) * self.cols];
                for (dj, tj) in d.iter_mut().zip(row) {
                    *dj -= cb * tj;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize, d: &mut [f64]) {
        let cols = self.cols;
        let p = self.t[r * cols + j];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = row[j];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
            }
        }
        let f = d[j];
        if f != 0.0 {
            for (a, b) in d.iter_mut().zip(prow.iter()) {
                *a -= f * b;
            }
        }
        self.basis[r] = j;
        self.state[j] = At::Basic(r);
    }

    /// Runs simplex iterations for `cost` until optimality.
    fn optimize(&mut self, cost: &[f64], max_iter: usize) -> Result<(), LpFailure> {
        let mut d = self.reduced_costs(cost);
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..self.cols {
                if self.frozen[j] {
                    continue;
                }
                let score = match self.state[j] {
                    At::Basic(_) => continue,
                    At::Lower if d[j] < -COST_TOL => -d[j],
                    At::Upper if d[j] > COST_TOL => d[j],
                    _ => continue,
                };
                if bland {
                    enter = Some(j);
                    break;
                }
                if score > best {
                    best = score;
                    enter = Some(j);
                }
            }
            let Some(j) = enter else { return Ok(()) };
            let dir = if self.state[j] == At::Lower { 1.0 } else { -1.0 };

            // ratio test; the entering variable's own bound flip competes
            let mut theta = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            for r in 0..self.m {
                let a = self.t[r * self.cols + j] * dir;
                let b = self.basis[r];
                let cand = if a > PIVOT_TOL {
                    Some(((self.xb[r]).max(0.0) / a, false))
                } else if a < -PIVOT_TOL && self.upper[b].is_finite() {
                    Some(((self.upper[b] - self.xb[r]).max(0.0) / -a, true))
                } else {
                    None
                };
                let Some((c, to_upper)) = cand else { continue };
                let take = if c < theta - 1e-12 {
                    true
                } else if c <= theta + 1e-12 {
                    // ties: a bound flip wins; among rows Bland takes the
                    // smallest basic index, Dantzig the largest pivot
                    match leave {
                        None => false,
                        Some((lr, _)) if bland => b < self.basis[lr],
                        Some((lr, _)) => a.abs() > self.t[lr * self.cols + j].abs(),
                    }
                } else {
                    false
                };
                if take {
                    theta = theta.min(c);
                    leave = Some((r, to_upper));
                }
            }
            if !theta.is_finite() {
                return Err(LpFailure("unbounded direction in a bounded program".into()));
            }
            degenerate = if theta <= 1e-12 { degenerate + 1 } else { 0 };
            for r in 0..self.m {
                self.xb[r] -= dir * theta * self.t[r * self.cols + j];
            }
            match leave {
                None => {
                    self.state[j] = if dir > 0.0 { At::Upper } else { At::Lower };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    let entering_value = if dir > 0.0 { theta } else { self.upper[j] - theta };
                    self.pivot(r, j, &mut d);
                    self.xb[r] = entering_value;
                    self.state[out] = if to_upper { At::Upper } else { At::Lower };
                }
            }
        }
        Err(LpFailure(format!("no convergence within {max_iter} iterations")))
    }
}

/// Solves `min c^T x` subject to `rows: a^T x <= b` and the box.
pub fn simplex_lp(c: &[f64], rows: &[(Vec<f64>, f64)], bounds: &[Interval]) -> Result<LpOutcome, LpFailure> {
    let n = c.len();
    assert_eq!(bounds.len(), n);
    // shift to y = x - lo and normalize each row
    let mut a_rows = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        assert_eq!(a.len(), n);
        let shifted = b - a.iter().zip(bounds).map(|(ai, bi)| ai * bi.lo).sum::<f64>();
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            if shifted < -1e-9 * (1.0 + b.abs()) {
                return Ok(LpOutcome::Infeasible);
            }
            continue;
        }
        a_rows.push((a.iter().map(|v| v / scale).collect::<Vec<f64>>(), shifted / scale));
    }
    let m = a_rows.len();
    let n_art = a_rows.iter().filter(|(_, b)| *b < 0.0).count();
    let cols = n + m + n_art;
    let mut t = vec![0.0; m * cols];
    let mut xb = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut state = vec![At::Lower; cols];
    let mut upper = vec![f64::INFINITY; cols];
    for (j, b) in bounds.iter().enumerate() {
        upper[j] = b.width();
    }
    let mut art = n + m;
    for (r, (a, b)) in a_rows.iter().enumerate() {
        let row = &mut t[r * cols..(r + 1) * cols];
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for (dst, v) in row.iter_mut().zip(a) {
            *dst = sign * v;
        }
        row[n + r] = sign;
        xb[r] = sign * b;
        if *b < 0.0 {
            row[art] = 1.0;
            basis[r] = art;
            state[art] = At::Basic(r);
            art += 1;
        } else {
            basis[r] = n + r;
            state[n + r] = At::Basic(r);
        }
    }
    let mut tab = Tableau { m, cols, t, xb, basis, state, upper, frozen: vec![false; cols] };
    let max_iter = 50 * (cols + m) + 1000;

    if n_art > 0 {
        let mut cost1 = vec![0.0; cols];
        cost1[n + m..].iter_mut().for_each(|v| *v = 1.0);
        tab.optimize(&cost1, max_iter)?;
        let infeas: f64 = (n + m..cols).map(|j| tab.value_of(j)).sum();
        let scale = 1.0 + a_rows.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // drive remaining artificials out of the basis where possible
        let mut dummy = vec![0.0; cols];
        for r in 0..m {
            if tab.basis[r] >= n + m {
                let row = &tab.t[r * cols..(r + 1) * cols];
                if let Some(j) = (0..n + m).filter(|&j| !matches!(tab.state[j], At::Basic(_))).find(|&j| row[j].abs() > 1e-7)
                {
                    let value = tab.value_of(j);
                    let out = tab.basis[r];
                    tab.pivot(r, j, &mut dummy);
                    tab.xb[r] = value;
                    tab.state[out] = At::Lower;
                }
            }
        }
        for j in n + m..cols {
            tab.frozen[j] = true;
            tab.upper[j] = 0.0;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    tab.optimize(&cost, max_iter)?;
    let x: Vec<f64> = (0..n).map(|j| (bounds[j].lo + tab.value_of(j)).clamp(bounds[j].lo, bounds[j].hi)).collect();
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}
