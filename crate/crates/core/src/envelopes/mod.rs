//! Convex and concave envelopes of the special functions appearing in
//! Gaussian-process models and Bayesian-optimization acquisition functions.
//!
//! Univariate envelopes are represented as piecewise [`Hull`]s made of
//! pieces that follow the function itself and chords (secants or tangent
//! lines). Tangent points are found with [`newton_1d`].

pub mod acquisition;
pub mod cdf;
pub mod intrinsics;
pub mod kernel;
pub mod pdf;
pub mod root;

pub use acquisition::{
    ei_gradient, ei_relax, ei_value, lcb_relax, pi_relax, pi_value, AcquisitionKind, AcquisitionSpec,
    BivariateRelaxation, BivariateRelaxationResult, EiRelaxation, PiRegime, PiRelaxation,
};
pub use cdf::{erf_cdf_env, norm_cdf, norm_pdf};
pub use kernel::{kernel_env, KernelKind};
pub use pdf::pdf_env;
pub use root::newton_1d;

use crate::error::Result;
use crate::interval::Interval;
use crate::mccormick::UnivariateEnvelope;

/// Twice differentiable scalar function.
pub trait Smooth1D {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;

    /// Value and slope of the supporting line used when a relaxation follows
    /// the function at `x`. Overridden where the slope is unbounded.
    fn support(&self, x: f64) -> (f64, f64) {
        (self.value(x), self.d1(x))
    }
}

/// Affine interpolation between `(box.lo, f_at_lo)` and `(box.hi, f_at_hi)`.
pub fn secant(f_at_lo: f64, f_at_hi: f64, b: Interval, x: f64) -> f64 {
    secant_with_slope(f_at_lo, f_at_hi, b, x).0
}

pub(crate) fn secant_with_slope(f_at_lo: f64, f_at_hi: f64, b: Interval, x: f64) -> (f64, f64) {
    let w = b.width();
    if w <= 0.0 {
        return (f_at_lo, 0.0);
    }
    let slope = (f_at_hi - f_at_lo) / w;
    (f_at_lo + slope * (x - b.lo), slope)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    /// Follows the function on `[lo, hi]`.
    Curve { lo: f64, hi: f64 },
    /// Straight line through two points.
    Chord { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Segment {
    fn hi(&self) -> f64 {
        match *self {
            Segment::Curve { hi, .. } => hi,
            Segment::Chord { x1, .. } => x1,
        }
    }
}

/// Curvature pattern of a function with one inflection point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    ConvexThenConcave,
    ConcaveThenConvex,
}

impl Shape {
    fn flipped(self) -> Shape {
        match self {
            Shape::ConvexThenConcave => Shape::ConcaveThenConvex,
            Shape::ConcaveThenConvex => Shape::ConvexThenConcave,
        }
    }
}

/// Piecewise description of one side (convex or concave) of an envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct Hull {
    pub segments: Vec<Segment>,
}

struct Negated<'a, F: ?Sized>(&'a F);

impl<F: Smooth1D + ?Sized> Smooth1D for Negated<'_, F> {
    fn value(&self, x: f64) -> f64 {
        -self.0.value(x)
    }
    fn d1(&self, x: f64) -> f64 {
        -self.0.d1(x)
    }
    fn d2(&self, x: f64) -> f64 {
        -self.0.d2(x)
    }
}

impl Hull {
    pub fn curve(lo: f64, hi: f64) -> Hull {
        Hull { segments: vec![Segment::Curve { lo, hi }] }
    }

    pub fn chord<F: Smooth1D + ?Sized>(f: &F, lo: f64, hi: f64) -> Hull {
        Hull::line(lo, f.value(lo), hi, f.value(hi))
    }

    pub fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> Hull {
        Hull { segments: vec![Segment::Chord { x0, y0, x1, y1 }] }
    }

    pub fn constant(lo: f64, hi: f64, y: f64) -> Hull {
        Hull::line(lo, y, hi, y)
    }

    pub fn from_segments(segments: Vec<Segment>) -> Hull {
        Hull { segments }
    }

    /// Value and slope at `x`.
    pub fn eval<F: Smooth1D + ?Sized>(&self, f: &F, x: f64) -> (f64, f64) {
        let seg = self
            .segments
            .iter()
            .find(|s| x <= s.hi())
            .or(self.segments.last())
            .expect("hull has at least one segment");
        match *seg {
            Segment::Curve { .. } => f.support(x),
            Segment::Chord { x0, y0, x1, y1 } => {
                if x1 <= x0 {
                    (y0, 0.0)
                } else {
                    let s = (y1 - y0) / (x1 - x0);
                    (y0 + s * (x - x0), s)
                }
            }
        }
    }

    fn negated(mut self) -> Hull {
        for s in &mut self.segments {
            if let Segment::Chord { y0, y1, .. } = s {
                *y0 = -*y0;
                *y1 = -*y1;
            }
        }
        self
    }

    /// Convex envelope on `[lo, hi]` of a function with a single inflection
    /// point `p`.
    pub fn convex_one_inflection<F: Smooth1D + ?Sized>(
        f: &F,
        lo: f64,
        hi: f64,
        p: f64,
        shape: Shape,
    ) -> Result<Hull> {
        if hi <= lo {
            return Ok(Hull::curve(lo, hi));
        }
        match shape {
            Shape::ConvexThenConcave => {
                if hi <= p {
                    return Ok(Hull::curve(lo, hi));
                }
                if lo >= p {
                    return Ok(Hull::chord(f, lo, hi));
                }
                // Tangent at xc passing through (hi, f(hi)), xc in the convex part.
                let fhi = f.value(hi);
                let t = |x: f64| (f.value(x) + f.d1(x) * (hi - x) - fhi, f.d2(x) * (hi - x));
                if t(lo).0 >= 0.0 {
                    return Ok(Hull::chord(f, lo, hi));
                }
                let xc = newton_1d(t, Interval::raw(lo, p), 0.5 * (lo + p))?;
                Ok(Hull::from_segments(vec![
                    Segment::Curve { lo, hi: xc },
                    Segment::Chord { x0: xc, y0: f.value(xc), x1: hi, y1: fhi },
                ]))
            }
            Shape::ConcaveThenConvex => {
                if hi <= p {
                    return Ok(Hull::chord(f, lo, hi));
                }
                if lo >= p {
                    return Ok(Hull::curve(lo, hi));
                }
                // Tangent at xc passing through (lo, f(lo)), xc in the convex part.
                let flo = f.value(lo);
                let t = |x: f64| (f.value(x) + f.d1(x) * (lo - x) - flo, f.d2(x) * (lo - x));
                if t(hi).0 >= 0.0 {
                    return Ok(Hull::chord(f, lo, hi));
                }
                let xc = newton_1d(t, Interval::raw(p, hi), 0.5 * (p + hi))?;
                Ok(Hull::from_segments(vec![
                    Segment::Chord { x0: lo, y0: flo, x1: xc, y1: f.value(xc) },
                    Segment::Curve { lo: xc, hi },
                ]))
            }
        }
    }

    /// Concave envelope on `[lo, hi]` of a function with one inflection point.
    pub fn concave_one_inflection<F: Smooth1D + ?Sized>(
        f: &F,
        lo: f64,
        hi: f64,
        p: f64,
        shape: Shape,
    ) -> Result<Hull> {
        Ok(Hull::convex_one_inflection(&Negated(f), lo, hi, p, shape.flipped())?.negated())
    }
}

/// Univariate envelope assembled from a smooth function and two hulls.
#[derive(Clone, Debug)]
pub struct HullEnvelope<F> {
    pub f: F,
    pub domain: Interval,
    pub cv_hull: Hull,
    pub cc_hull: Hull,
    pub range: Interval,
    pub argmin: f64,
    pub argmax: f64,
}

impl<F: Smooth1D> UnivariateEnvelope for HullEnvelope<F> {
    fn domain(&self) -> Interval {
        self.domain
    }
    fn eval(&self, x: f64) -> f64 {
        self.f.value(x)
    }
    fn cv(&self, x: f64) -> (f64, f64) {
        self.cv_hull.eval(&self.f, x)
    }
    fn cc(&self, x: f64) -> (f64, f64) {
        self.cc_hull.eval(&self.f, x)
    }
    fn range(&self) -> Interval {
        self.range
    }
    fn argmin_cv(&self) -> f64 {
        self.argmin
    }
    fn argmax_cc(&self) -> f64 {
        self.argmax
    }
}

#[cfg(test)]
pub(crate) mod testing {
    //! Shared sampling checks for univariate envelopes.
    use super::*;

    /// Asserts `cv <= f <= cc`, midpoint convexity of `cv`, concavity of
    /// `cc`, and range enclosure at `samples` points of the domain.
    pub fn check_envelope<E: UnivariateEnvelope>(env: &E, samples: usize, tol: f64) {
        check_envelope_on(env, samples, tol, true)
    }

    /// As [`check_envelope`]; `with_lower_end = false` leaves the lower
    /// domain end out of the convexity and linearization samples.
    pub fn check_envelope_on<E: UnivariateEnvelope>(env: &E, samples: usize, tol: f64, with_lower_end: bool) {
        let d = env.domain();
        let lower_end: &[f64] = if with_lower_end { &[d.lo] } else { &[] };
        let xs: Vec<f64> = (0..samples)
            .map(|k| d.lo + d.width() * (k as f64 + 0.5) / samples as f64)
            .chain(lower_end.iter().copied())
            .chain([d.hi])
            .collect();
        let r = env.range();
        for &x in &xs {
            let f = env.eval(x);
            let (cv, _) = env.cv(x);
            let (cc, _) = env.cc(x);
            assert!(cv <= f + tol, "cv {cv} > f {f} at {x} on {d}");
            assert!(f <= cc + tol, "cc {cc} < f {f} at {x} on {d}");
            assert!(r.lo - tol <= f && f <= r.hi + tol, "f {f} outside range {r} at {x}");
        }
        let pairs = (0..xs.len()).step_by(7).flat_map(|i| (i..xs.len()).step_by(11).map(move |j| (i, j)));
        for (i, j) in pairs {
            let (a, b) = (xs[i], xs[j]);
            let m = 0.5 * (a + b);
            let cvm = env.cv(m).0;
            let ccm = env.cc(m).0;
            assert!(cvm <= 0.5 * (env.cv(a).0 + env.cv(b).0) + tol, "cv not convex on [{a},{b}]");
            assert!(ccm >= 0.5 * (env.cc(a).0 + env.cc(b).0) - tol, "cc not concave on [{a},{b}]");
        }
        // supporting lines underestimate / overestimate f everywhere
        for &p in xs.iter().step_by(5) {
            let (cvp, sp) = env.cv(p);
            let (ccp, tp) = env.cc(p);
            for &q in &xs {
                let f = env.eval(q);
                assert!(cvp + sp * (q - p) <= f + tol, "cv linearization at {p} cuts f at {q}");
                assert!(ccp + tp * (q - p) >= f - tol, "cc linearization at {p} cuts f at {q}");
            }
        }
    }
}
