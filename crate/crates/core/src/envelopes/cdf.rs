//! Standard normal density and distribution functions, and the envelope of
//! the distribution function built from the erf representation.

use super::{Hull, HullEnvelope, Shape, Smooth1D};
use crate::error::Result;
use crate::interval::Interval;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `(1 + erf(x / sqrt 2)) / 2`, evaluated through `erfc` so that the lower
/// tail keeps full relative accuracy.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[derive(Clone, Copy, Debug)]
pub struct NormCdf;

impl Smooth1D for NormCdf {
    fn value(&self, x: f64) -> f64 {
        norm_cdf(x)
    }
    fn d1(&self, x: f64) -> f64 {
        norm_pdf(x)
    }
    fn d2(&self, x: f64) -> f64 {
        -x * norm_pdf(x)
    }
}

pub type CdfEnvelope = HullEnvelope<NormCdf>;

/// Envelope of the standard normal CDF on `x_box`. The CDF is an affine
/// image of erf, which is convex on `x <= 0` and concave on `x >= 0`.
pub fn erf_cdf_env(x_box: Interval) -> Result<CdfEnvelope> {
    let (lo, hi) = (x_box.lo, x_box.hi);
    Ok(HullEnvelope {
        f: NormCdf,
        domain: x_box,
        cv_hull: Hull::convex_one_inflection(&NormCdf, lo, hi, 0.0, Shape::ConvexThenConcave)?,
        cc_hull: Hull::concave_one_inflection(&NormCdf, lo, hi, 0.0, Shape::ConvexThenConcave)?,
        range: Interval::raw(norm_cdf(lo), norm_cdf(hi)),
        argmin: lo,
        argmax: hi,
    })
}
