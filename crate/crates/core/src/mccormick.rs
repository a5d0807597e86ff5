//! Point-evaluated McCormick relaxations with subgradients.
//!
//! A [`Relaxation`] carries, for one node of a factorable expression, an
//! interval enclosure of the node over the current box together with the
//! values of a convex underestimator and a concave overestimator at the
//! evaluation point, and one subgradient of each with respect to the
//! independent variables.

use crate::error::{Error, Result};
use crate::interval::Interval;

#[derive(Clone, Debug, PartialEq)]
pub struct Relaxation {
    pub range: Interval,
    pub cv: f64,
    pub cc: f64,
    pub cv_sub: Vec<f64>,
    pub cc_sub: Vec<f64>,
}

/// Convex and concave envelopes of a scalar function over a fixed interval.
///
/// `cv` and `cc` return the relaxation value together with a slope (a
/// subgradient of the convex side, a supergradient of the concave side).
pub trait UnivariateEnvelope {
    fn domain(&self) -> Interval;
    fn eval(&self, x: f64) -> f64;
    fn cv(&self, x: f64) -> (f64, f64);
    fn cc(&self, x: f64) -> (f64, f64);
    /// Exact image of [`domain`](Self::domain).
    fn range(&self) -> Interval;
    fn argmin_cv(&self) -> f64;
    fn argmax_cc(&self) -> f64;
}

/// Median of three values.
#[inline]
pub fn mid(a: f64, b: f64, c: f64) -> f64 {
    if a <= b {
        if c <= a {
            a
        } else if c >= b {
            b
        } else {
            c
        }
    } else if c <= b {
        b
    } else if c >= a {
        a
    } else {
        c
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    if a != 0.0 {
        for (o, v) in out.iter_mut().zip(x) {
            *o += a * v;
        }
    }
}

#[inline]
fn scaled(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

impl Relaxation {
    /// Seed relaxation for independent variable `i`.
    pub fn variable(i: usize, box_i: Interval, point: f64, n: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidInput(format!("variable index {i} >= {n}")));
        }
        if !box_i.contains(point) {
            return Err(Error::PointOutsideBox { index: i, point, lo: box_i.lo, hi: box_i.hi });
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        Ok(Relaxation { range: box_i, cv: point, cc: point, cv_sub: e.clone(), cc_sub: e })
    }

    pub fn constant(c: f64, n: usize) -> Self {
        Relaxation { range: Interval::point(c), cv: c, cc: c, cv_sub: vec![0.0; n], cc_sub: vec![0.0; n] }
    }

    /// Relaxation carrying only interval information: constant bounds.
    pub fn from_range(range: Interval, n: usize) -> Self {
        Relaxation { range, cv: range.lo, cc: range.hi, cv_sub: vec![0.0; n], cc_sub: vec![0.0; n] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.cv_sub.len()
    }

    pub fn is_exact(&self) -> bool {
        self.cv == self.cc
    }

    /// `alpha * self + gamma`.
    pub fn scale_shift(&self, alpha: f64, gamma: f64) -> Relaxation {
        affine(self, None, alpha, 0.0, gamma)
    }

    pub fn neg(&self) -> Relaxation {
        affine(self, None, -1.0, 0.0, 0.0)
    }

    pub fn add(&self, other: &Relaxation) -> Relaxation {
        affine(self, Some(other), 1.0, 1.0, 0.0)
    }

    pub fn sub(&self, other: &Relaxation) -> Relaxation {
        affine(self, Some(other), 1.0, -1.0, 0.0)
    }

    pub fn mul(&self, other: &Relaxation) -> Relaxation {
        product(self, other)
    }

    /// Clips the relaxation values to the interval range.
    pub fn cut(mut self) -> Relaxation {
        if self.cv < self.range.lo {
            self.cv = self.range.lo;
            self.cv_sub.iter_mut().for_each(|v| *v = 0.0);
        }
        if self.cc > self.range.hi {
            self.cc = self.range.hi;
            self.cc_sub.iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }

    /// Tightens the range by intersection with bounds the function is known
    /// to satisfy, then clips both relaxations into the range.
    pub fn restrict(mut self, bounds: Interval) -> Relaxation {
        if let Some(r) = self.range.intersect(&bounds) {
            self.range = r;
        }
        if self.cc < self.range.lo {
            self.cc = self.range.lo;
            self.cc_sub.iter_mut().for_each(|v| *v = 0.0);
        }
        if self.cv > self.range.hi {
            self.cv = self.range.hi;
            self.cv_sub.iter_mut().for_each(|v| *v = 0.0);
        }
        self.cut()
    }

    pub fn compose<E: UnivariateEnvelope + ?Sized>(&self, env: &E) -> Result<Relaxation> {
        compose(self, env)
    }
}

/// `alpha * a + beta * b + gamma`.
pub fn affine(a: &Relaxation, b: Option<&Relaxation>, alpha: f64, beta: f64, gamma: f64) -> Relaxation {
    let mut out = Relaxation::constant(gamma, a.n());
    add_term(&mut out, a, alpha);
    if let Some(b) = b {
        add_term(&mut out, b, beta);
    }
    out
}

/// Affine combination `sum_k w_k * r_k + constant`.
pub fn linear_combination<'a, I>(terms: I, constant: f64, n: usize) -> Relaxation
where
    I: IntoIterator<Item = (&'a Relaxation, f64)>,
{
    let mut out = Relaxation::constant(constant, n);
    for (r, w) in terms {
        add_term(&mut out, r, w);
    }
    out
}

fn add_term(out: &mut Relaxation, r: &Relaxation, w: f64) {
    if w == 0.0 {
        return;
    }
    out.range = out.range.add(&r.range.scale(w));
    if w > 0.0 {
        out.cv += w * r.cv;
        out.cc += w * r.cc;
        axpy(&mut out.cv_sub, w, &r.cv_sub);
        axpy(&mut out.cc_sub, w, &r.cc_sub);
    } else {
        out.cv += w * r.cc;
        out.cc += w * r.cv;
        axpy(&mut out.cv_sub, w, &r.cc_sub);
        axpy(&mut out.cc_sub, w, &r.cv_sub);
    }
}

fn sub_of(r: &Relaxation, use_cv: bool) -> &[f64] {
    if use_cv {
        &r.cv_sub
    } else {
        &r.cc_sub
    }
}

/// Bilinear McCormick product rule.
pub fn product(a: &Relaxation, b: &Relaxation) -> Relaxation {
    let (xl, xu) = (a.range.lo, a.range.hi);
    let (yl, yu) = (b.range.lo, b.range.hi);
    let n = a.n();

    // c * x, picking the relaxation of x that minimises (lower) or maximises (upper) the product.
    let lower = |c: f64, r: &Relaxation| -> (f64, bool) {
        if c >= 0.0 {
            (c * r.cv, true)
        } else {
            (c * r.cc, false)
        }
    };
    let upper = |c: f64, r: &Relaxation| -> (f64, bool) {
        if c >= 0.0 {
            (c * r.cc, false)
        } else {
            (c * r.cv, true)
        }
    };

    let (t1, s1) = lower(yl, a);
    let (t2, s2) = lower(xl, b);
    let cv1 = t1 + t2 - xl * yl;
    let (t3, s3) = lower(yu, a);
    let (t4, s4) = lower(xu, b);
    let cv2 = t3 + t4 - xu * yu;

    let (u1, r1) = upper(yl, a);
    let (u2, r2) = upper(xu, b);
    let cc1 = u1 + u2 - xu * yl;
    let (u3, r3) = upper(yu, a);
    let (u4, r4) = upper(xl, b);
    let cc2 = u3 + u4 - xl * yu;

    let mut cv_sub = vec![0.0; n];
    let cv = if cv1 >= cv2 {
        axpy(&mut cv_sub, yl, sub_of(a, s1));
        axpy(&mut cv_sub, xl, sub_of(b, s2));
        cv1
    } else {
        axpy(&mut cv_sub, yu, sub_of(a, s3));
        axpy(&mut cv_sub, xu, sub_of(b, s4));
        cv2
    };
    let mut cc_sub = vec![0.0; n];
    let cc = if cc1 <= cc2 {
        axpy(&mut cc_sub, yl, sub_of(a, r1));
        axpy(&mut cc_sub, xu, sub_of(b, r2));
        cc1
    } else {
        axpy(&mut cc_sub, yu, sub_of(a, r3));
        axpy(&mut cc_sub, xl, sub_of(b, r4));
        cc2
    };
    Relaxation { range: a.range.mul(&b.range), cv, cc, cv_sub, cc_sub }.cut()
}

/// Univariate McCormick composition `env(inner)`.
pub fn compose<E: UnivariateEnvelope + ?Sized>(inner: &Relaxation, env: &E) -> Result<Relaxation> {
    let dom = env.domain();
    let tol = 1e-12 * (1.0 + dom.lo.abs().max(dom.hi.abs()));
    if inner.range.lo < dom.lo - tol || inner.range.hi > dom.hi + tol {
        return Err(Error::Domain(format!("composition of {} outside envelope domain {}", inner.range, dom)));
    }
    let n = inner.n();
    let clamp = |x: f64| dom.clamp(x);

    let zcv = mid(inner.cv, inner.cc, env.argmin_cv());
    let (cv, slope) = env.cv(clamp(zcv));
    let cv_sub = if zcv == inner.cv {
        scaled(slope, &inner.cv_sub)
    } else if zcv == inner.cc {
        scaled(slope, &inner.cc_sub)
    } else {
        vec![0.0; n]
    };

    let zcc = mid(inner.cv, inner.cc, env.argmax_cc());
    let (cc, slope) = env.cc(clamp(zcc));
    let cc_sub = if zcc == inner.cv {
        scaled(slope, &inner.cv_sub)
    } else if zcc == inner.cc {
        scaled(slope, &inner.cc_sub)
    } else {
        vec![0.0; n]
    };

    Ok(Relaxation { range: env.range(), cv, cc, cv_sub, cc_sub }.cut())
}
