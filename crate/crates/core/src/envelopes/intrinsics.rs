//! Envelopes of elementary intrinsics (exp, square, square root,
//! reciprocal). These are the building blocks for generic McCormick
//! propagation when tailored envelopes are switched off.

use super::{Hull, HullEnvelope, Smooth1D};
use crate::error::{Error, Result};
use crate::interval::Interval;

/// Anchor used for the square-root tangent near zero.
pub const SQRT_ANCHOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct Exp;

impl Smooth1D for Exp {
    fn value(&self, x: f64) -> f64 {
        x.exp()
    }
    fn d1(&self, x: f64) -> f64 {
        x.exp()
    }
    fn d2(&self, x: f64) -> f64 {
        x.exp()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sqr;

impl Smooth1D for Sqr {
    fn value(&self, x: f64) -> f64 {
        x * x
    }
    fn d1(&self, x: f64) -> f64 {
        2.0 * x
    }
    fn d2(&self, _x: f64) -> f64 {
        2.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sqrt;

impl Smooth1D for Sqrt {
    fn value(&self, x: f64) -> f64 {
        x.max(0.0).sqrt()
    }
    fn d1(&self, x: f64) -> f64 {
        0.5 / x.max(SQRT_ANCHOR).sqrt()
    }
    fn d2(&self, x: f64) -> f64 {
        let x = x.max(SQRT_ANCHOR);
        -0.25 / (x * x.sqrt())
    }
    fn support(&self, x: f64) -> (f64, f64) {
        if x < SQRT_ANCHOR {
            let a = SQRT_ANCHOR;
            let s = 0.5 / a.sqrt();
            (a.sqrt() + s * (x - a), s)
        } else {
            (x.sqrt(), 0.5 / x.sqrt())
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Recip;

impl Smooth1D for Recip {
    fn value(&self, x: f64) -> f64 {
        1.0 / x
    }
    fn d1(&self, x: f64) -> f64 {
        -1.0 / (x * x)
    }
    fn d2(&self, x: f64) -> f64 {
        2.0 / (x * x * x)
    }
}

pub type ExpEnvelope = HullEnvelope<Exp>;
pub type SqrEnvelope = HullEnvelope<Sqr>;
pub type SqrtEnvelope = HullEnvelope<Sqrt>;
pub type RecipEnvelope = HullEnvelope<Recip>;

impl ExpEnvelope {
    pub fn new(d: Interval) -> Self {
        HullEnvelope {
            f: Exp,
            domain: d,
            cv_hull: Hull::curve(d.lo, d.hi),
            cc_hull: Hull::chord(&Exp, d.lo, d.hi),
            range: d.exp(),
            argmin: d.lo,
            argmax: d.hi,
        }
    }
}

impl SqrEnvelope {
    pub fn new(d: Interval) -> Self {
        let argmax = if d.lo.abs() >= d.hi.abs() { d.lo } else { d.hi };
        HullEnvelope {
            f: Sqr,
            domain: d,
            cv_hull: Hull::curve(d.lo, d.hi),
            cc_hull: Hull::chord(&Sqr, d.lo, d.hi),
            range: d.sqr(),
            argmin: d.clamp(0.0),
            argmax,
        }
    }
}

impl SqrtEnvelope {
    pub fn new(d: Interval) -> Result<Self> {
        Ok(HullEnvelope {
            f: Sqrt,
            domain: d,
            cv_hull: Hull::chord(&Sqrt, d.lo, d.hi),
            cc_hull: Hull::curve(d.lo, d.hi),
            range: d.sqrt()?,
            argmin: d.lo,
            argmax: d.hi,
        })
    }
}

impl RecipEnvelope {
    /// Reciprocal on a strictly positive interval.
    pub fn new(d: Interval) -> Result<Self> {
        if d.lo <= 0.0 {
            return Err(Error::IntervalDivisionByZero);
        }
        Ok(HullEnvelope {
            f: Recip,
            domain: d,
            cv_hull: Hull::curve(d.lo, d.hi),
            cc_hull: Hull::chord(&Recip, d.lo, d.hi),
            range: Interval::raw(1.0 / d.hi, 1.0 / d.lo),
            argmin: d.hi,
            argmax: d.lo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::testing::check_envelope;
    use crate::mccormick::UnivariateEnvelope;

    #[test]
    fn intrinsic_envelopes_are_valid() {
        for (lo, hi) in [(-2.0, 1.0), (0.0, 3.0), (-3.0, -0.5), (0.5, 0.5)] {
            let d = Interval::new(lo, hi).unwrap();
            check_envelope(&ExpEnvelope::new(d), 200, 1e-12);
            check_envelope(&SqrEnvelope::new(d), 200, 1e-12);
            if lo >= 0.0 {
                check_envelope(&SqrtEnvelope::new(d).unwrap(), 200, 1e-12);
            }
            if lo > 0.0 {
                check_envelope(&RecipEnvelope::new(d).unwrap(), 200, 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_tangent_near_zero_is_finite() {
        let e = SqrtEnvelope::new(Interval::new(0.0, 4.0).unwrap()).unwrap();
        let (v, s) = e.cc(0.0);
        assert!(s.is_finite() && v > 0.0);
        assert!(RecipEnvelope::new(Interval::new(0.0, 1.0).unwrap()).is_err());
    }
}
