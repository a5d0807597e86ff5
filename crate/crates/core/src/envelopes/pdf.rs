//! Envelopes of the standard normal density.
//!
//! The density is convex on `(-inf, -1]` and `[1, inf)` and concave on
//! `[-1, 1]`. The construction splits on where the box endpoints fall
//! relative to the two inflection points.

use super::cdf::{norm_pdf, INV_SQRT_2PI};
use super::intrinsics::{ExpEnvelope, SqrEnvelope};
use super::{newton_1d, Hull, HullEnvelope, Segment, Shape, Smooth1D};
use crate::error::Result;
use crate::interval::Interval;
use crate::mccormick::Relaxation;

#[derive(Clone, Copy, Debug)]
pub struct NormPdf;

impl Smooth1D for NormPdf {
    fn value(&self, x: f64) -> f64 {
        norm_pdf(x)
    }
    fn d1(&self, x: f64) -> f64 {
        -x * norm_pdf(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (x * x - 1.0) * norm_pdf(x)
    }
}

pub type PdfEnvelope = HullEnvelope<NormPdf>;

/// Residual of "the tangent at `x` passes through `(anchor, phi(anchor))`".
fn tangent_residual(anchor: f64) -> impl Fn(f64) -> (f64, f64) {
    let fa = norm_pdf(anchor);
    move |x: f64| {
        let f = NormPdf;
        (f.value(x) + f.d1(x) * (anchor - x) - fa, f.d2(x) * (anchor - x))
    }
}

fn tangent_point(anchor: f64, lo: f64, hi: f64) -> Result<f64> {
    newton_1d(tangent_residual(anchor), Interval::raw(lo, hi), 0.5 * (lo + hi))
}

/// Convex side when both tails are in the box: a single line from the
/// endpoint with the larger density down to a tangent on the opposite tail.
fn convex_two_tails(lo: f64, hi: f64) -> Result<Hull> {
    let f = NormPdf;
    if lo + hi == 0.0 {
        return Ok(Hull::chord(&f, lo, hi));
    }
    if lo + hi > 0.0 {
        // phi(lo) >= phi(hi): tangent from (lo, phi(lo)) to the right tail.
        if tangent_residual(lo)(hi).0 >= 0.0 {
            return Ok(Hull::chord(&f, lo, hi));
        }
        let xc = tangent_point(lo, 1.0, hi)?;
        Ok(Hull::from_segments(vec![
            Segment::Chord { x0: lo, y0: f.value(lo), x1: xc, y1: f.value(xc) },
            Segment::Curve { lo: xc, hi },
        ]))
    } else {
        if tangent_residual(hi)(lo).0 >= 0.0 {
            return Ok(Hull::chord(&f, lo, hi));
        }
        let xc = tangent_point(hi, lo, -1.0)?;
        Ok(Hull::from_segments(vec![
            Segment::Curve { lo, hi: xc },
            Segment::Chord { x0: xc, y0: f.value(xc), x1: hi, y1: f.value(hi) },
        ]))
    }
}

/// Concave side when the box covers both inflection points: chords from
/// each endpoint to tangent points on the concave middle part.
fn concave_two_tails(lo: f64, hi: f64) -> Result<Hull> {
    let f = NormPdf;
    let xl = tangent_point(lo, -1.0, 0.0)?;
    let xr = tangent_point(hi, 0.0, 1.0)?;
    Ok(Hull::from_segments(vec![
        Segment::Chord { x0: lo, y0: f.value(lo), x1: xl, y1: f.value(xl) },
        Segment::Curve { lo: xl, hi: xr },
        Segment::Chord { x0: xr, y0: f.value(xr), x1: hi, y1: f.value(hi) },
    ]))
}

/// Envelope of the standard normal density on `x_box`.
pub fn pdf_env(x_box: Interval) -> Result<PdfEnvelope> {
    let f = NormPdf;
    let (lo, hi) = (x_box.lo, x_box.hi);
    let (cv_hull, cc_hull) = if hi <= -1.0 || lo >= 1.0 {
        (Hull::curve(lo, hi), Hull::chord(&f, lo, hi))
    } else if lo >= -1.0 && hi <= 1.0 {
        (Hull::chord(&f, lo, hi), Hull::curve(lo, hi))
    } else if lo < -1.0 && hi <= 1.0 {
        (
            Hull::convex_one_inflection(&f, lo, hi, -1.0, Shape::ConvexThenConcave)?,
            Hull::concave_one_inflection(&f, lo, hi, -1.0, Shape::ConvexThenConcave)?,
        )
    } else if lo >= -1.0 && hi > 1.0 {
        (
            Hull::convex_one_inflection(&f, lo, hi, 1.0, Shape::ConcaveThenConvex)?,
            Hull::concave_one_inflection(&f, lo, hi, 1.0, Shape::ConcaveThenConvex)?,
        )
    } else {
        (convex_two_tails(lo, hi)?, concave_two_tails(lo, hi)?)
    };
    let argmin = if lo.abs() >= hi.abs() { lo } else { hi };
    let argmax = x_box.clamp(0.0);
    Ok(HullEnvelope {
        f,
        domain: x_box,
        cv_hull,
        cc_hull,
        range: Interval::raw(norm_pdf(argmin), norm_pdf(argmax)),
        argmin,
        argmax,
    })
}

/// Density relaxation through `exp(-x^2 / 2) / sqrt(2 pi)` with the generic
/// square and exponential rules.
pub fn pdf_generic(x: &Relaxation) -> Result<Relaxation> {
    let sq = x.compose(&SqrEnvelope::new(x.range))?;
    let arg = sq.scale_shift(-0.5, 0.0);
    let e = arg.compose(&ExpEnvelope::new(arg.range))?;
    Ok(e.scale_shift(INV_SQRT_2PI, 0.0))
}
