//! Scalar root finding for envelope tangent points.

use crate::error::{Error, Result};
use crate::interval::Interval;

pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_TOL: f64 = 1e-9;
const GOLDEN_MAX_ITER: usize = 300;
const GOLDEN_ACCEPT: f64 = 1e-7;

/// Finds a root of `g` in `bracket`.
///
/// `g` returns the residual and its derivative. Newton's method runs first;
/// if an iterate leaves the bracket, stalls on a zero derivative or does not
/// reach the tolerance, a golden-section search over the bracket is used
/// instead: sign-based interval reduction when the endpoint residuals differ
/// in sign, minimization of `|g|` otherwise.
pub fn newton_1d<G>(g: G, bracket: Interval, start: f64) -> Result<f64>
where
    G: Fn(f64) -> (f64, f64),
{
    let mut x = bracket.clamp(start);
    for _ in 0..NEWTON_MAX_ITER {
        let (v, d) = g(x);
        if !v.is_finite() {
            break;
        }
        if v.abs() <= NEWTON_TOL {
            return Ok(x);
        }
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let next = x - v / d;
        if !bracket.contains(next) {
            break;
        }
        x = next;
    }
    let (glo, ghi) = (g(bracket.lo).0, g(bracket.hi).0);
    if glo.is_finite() && ghi.is_finite() && (glo < 0.0) != (ghi < 0.0) {
        return golden_bracketing(&g, bracket, glo < 0.0);
    }
    golden_section(&g, bracket)
}

/// Shrinks a sign-change bracket at the golden ratio point until the
/// residual meets the Newton tolerance or the bracket collapses.
fn golden_bracketing<G>(g: &G, bracket: Interval, negative_at_lo: bool) -> Result<f64>
where
    G: Fn(f64) -> (f64, f64),
{
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let mut toggle = false;
    for _ in 0..GOLDEN_MAX_ITER {
        // alternate the cut side so both ends shrink geometrically
        let x = if toggle { a + inv_phi * (b - a) } else { b - inv_phi * (b - a) };
        toggle = !toggle;
        let v = g(x).0;
        if v.abs() <= NEWTON_TOL {
            return Ok(x);
        }
        if (v < 0.0) == negative_at_lo {
            a = x;
        } else {
            b = x;
        }
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    let x = 0.5 * (a + b);
    if g(x).0.abs() <= GOLDEN_ACCEPT {
        Ok(x)
    } else {
        Err(Error::RootFind { lo: bracket.lo, hi: bracket.hi })
    }
}

fn golden_section<G>(g: &G, bracket: Interval) -> Result<f64>
where
    G: Fn(f64) -> (f64, f64),
{
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let h = |x: f64| g(x).0.abs();
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..GOLDEN_MAX_ITER {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - inv_phi * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + inv_phi * (b - a);
            hd = h(d);
        }
    }
    let candidates = [a, b, 0.5 * (a + b), bracket.lo, bracket.hi];
    let best = candidates
        .into_iter()
        .map(|x| (x, h(x)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|p, q| p.1.total_cmp(&q.1));
    match best {
        Some((x, v)) if v <= GOLDEN_ACCEPT => Ok(x),
        _ => Err(Error::RootFind { lo: bracket.lo, hi: bracket.hi }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn sqrt_two() {
        let r = newton_1d(|x| (x * x - 2.0, 2.0 * x), iv(1.0, 2.0), 1.5).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn affine_single_step() {
        use std::cell::Cell;
        let calls = Cell::new(0);
        let r = newton_1d(
            |x| {
                calls.set(calls.get() + 1);
                (3.0 * x - 1.0, 3.0)
            },
            iv(0.0, 1.0),
            0.9,
        )
        .unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-12);
        // one step plus the converged check
        assert_eq!(calls.get(), 2);
    }

    fn bisection(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let fa = f(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (f(m) > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn escaping_newton_falls_back_to_golden_section() {
        // atan has a root at 0; Newton from 1.5 overshoots beyond [-2, 2].
        let g = |x: f64| (x.atan() - 0.1, 1.0 / (1.0 + x * x));
        let expected = bisection(|x| x.atan() - 0.1, -2.0, 2.0);
        let r = newton_1d(g, iv(-2.0, 2.0), 1.9).unwrap();
        assert!(iv(-2.0, 2.0).contains(r));
        assert!((r - expected).abs() < 1e-6, "{r} vs {expected}");
    }

    #[test]
    fn flat_tail_residual_uses_bracketing() {
        // residual saturates at -1 over most of the bracket
        let g = |x: f64| ((x + 2.0).tanh() * 30.0 - 28.0).max(-1.0);
        let r = newton_1d(|x| (g(x), 0.0), iv(-40.0, 0.0), -20.0).unwrap();
        assert!(g(r).abs() <= 1e-7);
    }

    #[test]
    fn no_root_is_an_error() {
        let r = newton_1d(|x| (x * x + 1.0, 2.0 * x), iv(-1.0, 1.0), 0.5);
        assert!(matches!(r, Err(Error::RootFind { .. })));
    }
}
