//! Relaxations of the acquisition functions expected improvement (EI),
//! probability of improvement (PI) and lower confidence bound (LCB) as
//! functions of the posterior mean `mu` and standard deviation `sigma`.
//!
//! EI is jointly convex, so it is its own convex envelope and its concave
//! envelope is polyhedral over the box corners. PI is neither convex nor
//! concave; its relaxations are assembled from univariate envelopes of PI
//! restricted to box facets, using that PI is decreasing in `mu`, decreasing
//! in `sigma` below the target and increasing above it.
//!
//! The bivariate relaxations are composed with inner McCormick relaxations of
//! `mu` and `sigma` piece by piece: every piece is monotone in each argument,
//! so the inner convex or concave relaxation is selected per argument.

use std::f64::consts::SQRT_2;
use std::fmt;

use super::cdf::{erf_cdf_env, norm_cdf, norm_pdf, INV_SQRT_2PI};
use super::intrinsics::RecipEnvelope;
use super::pdf::pdf_generic;
use super::{newton_1d, Hull, Segment, Shape, Smooth1D};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mccormick::{affine, product, Relaxation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcquisitionKind {
    Ei,
    Pi,
    Lcb,
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Pi => "pi",
            AcquisitionKind::Lcb => "lcb",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub f_min: f64,
    pub kappa: f64,
}

impl AcquisitionSpec {
    pub fn ei(f_min: f64) -> Result<Self> {
        Self::with_target(AcquisitionKind::Ei, f_min)
    }

    pub fn pi(f_min: f64) -> Result<Self> {
        Self::with_target(AcquisitionKind::Pi, f_min)
    }

    /// `kappa = 0` is accepted and reduces LCB to the posterior mean.
    pub fn lcb(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::InvalidInput(format!("LCB weight must be finite and non-negative, got {kappa}")));
        }
        Ok(AcquisitionSpec { kind: AcquisitionKind::Lcb, f_min: f64::NAN, kappa })
    }

    fn with_target(kind: AcquisitionKind, f_min: f64) -> Result<Self> {
        if !f_min.is_finite() {
            return Err(Error::InvalidInput(format!("{kind} target must be finite, got {f_min}")));
        }
        Ok(AcquisitionSpec { kind, f_min, kappa: 0.0 })
    }

    /// Acquisition value in its natural sense (EI, PI to be maximized, LCB to
    /// be minimized).
    pub fn value(&self, mu: f64, sigma: f64) -> Result<f64> {
        match self.kind {
            AcquisitionKind::Ei => ei_value(mu, sigma, self.f_min),
            AcquisitionKind::Pi => pi_value(mu, sigma, self.f_min),
            AcquisitionKind::Lcb => Ok(mu - self.kappa * sigma),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma < 0.0 || sigma.is_nan() {
        return Err(Error::Domain(format!("standard deviation {sigma} is negative")));
    }
    Ok(())
}

fn ei_unchecked(mu: f64, sigma: f64, f_min: f64) -> f64 {
    if sigma == 0.0 {
        return (f_min - mu).max(0.0);
    }
    let a = f_min - mu;
    let t = a / sigma;
    (a * norm_cdf(t) + sigma * norm_pdf(t)).max(0.0)
}

fn pi_unchecked(mu: f64, sigma: f64, f_min: f64) -> f64 {
    if sigma == 0.0 {
        return if mu < f_min { 1.0 } else { 0.0 };
    }
    norm_cdf((f_min - mu) / sigma)
}

/// Expected improvement below `f_min`.
pub fn ei_value(mu: f64, sigma: f64, f_min: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(ei_unchecked(mu, sigma, f_min))
}

/// Gradient of EI with respect to `(mu, sigma)`. At `sigma = 0` the one-sided
/// limits are returned; at `(f_min, 0)` the gradient of the positively
/// homogeneous extension, which is a valid subgradient there.
pub fn ei_gradient(mu: f64, sigma: f64, f_min: f64) -> Result<[f64; 2]> {
    check_sigma(sigma)?;
    Ok(ei_gradient_unchecked(mu, sigma, f_min))
}

fn ei_gradient_unchecked(mu: f64, sigma: f64, f_min: f64) -> [f64; 2] {
    if sigma == 0.0 {
        return if mu < f_min {
            [-1.0, 0.0]
        } else if mu > f_min {
            [0.0, 0.0]
        } else {
            [-0.5, INV_SQRT_2PI]
        };
    }
    let t = (f_min - mu) / sigma;
    [-norm_cdf(t), norm_pdf(t)]
}

/// Probability of improvement below `f_min`.
pub fn pi_value(mu: f64, sigma: f64, f_min: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(pi_unchecked(mu, sigma, f_min))
}

/// `mu - kappa * sigma`; exact since it is affine.
pub fn lcb_relax(mu: &Relaxation, sigma: &Relaxation, kappa: f64) -> Relaxation {
    affine(mu, Some(sigma), 1.0, -kappa, 0.0)
}

/// Which construction produced a bivariate relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PiRegime {
    /// Generic McCormick propagation of `Phi((f_min - mu) / sigma)`.
    McCormick,
    /// Facet envelopes combined through monotonicity.
    FacetMonotone,
    /// Corner planes on the componentwise convex (concave) side, facet
    /// envelopes on the other side.
    Componentwise,
    /// Box straddles the target: the affine continuation below the target.
    General,
    /// `sigma = 0` box containing the target in its interior or at its
    /// upper end: PI jumps, relaxations are the constants 0 and 1.
    Discontinuous,
    /// EI: convex function with corner-plane concave envelope.
    Convex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BivariateRelaxationResult {
    pub cv: f64,
    pub cc: f64,
    /// Subgradient of `cv` with respect to `(mu, sigma)`.
    pub cv_sub: [f64; 2],
    pub cc_sub: [f64; 2],
    pub range: Interval,
    pub regime: PiRegime,
}

/// A relaxation of a function of `(mu, sigma)` over a fixed box.
pub trait BivariateRelaxation {
    fn mu_box(&self) -> Interval;
    fn sigma_box(&self) -> Interval;
    fn range(&self) -> Interval;
    fn regime(&self) -> PiRegime;
    fn value(&self, mu: f64, sigma: f64) -> f64;

    /// Composition with inner relaxations whose ranges lie in the box.
    fn compose(&self, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation>;

    /// Relaxation of the function itself at a point of the box.
    fn relax_at(&self, mu: f64, sigma: f64) -> Result<BivariateRelaxationResult> {
        let m = Relaxation::variable(0, self.mu_box(), mu, 2)?;
        let s = Relaxation::variable(1, self.sigma_box(), sigma, 2)?;
        let r = self.compose(&m, &s)?;
        Ok(BivariateRelaxationResult {
            cv: r.cv,
            cc: r.cc,
            cv_sub: [r.cv_sub[0], r.cv_sub[1]],
            cc_sub: [r.cc_sub[0], r.cc_sub[1]],
            range: r.range,
            regime: self.regime(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dir {
    Dec,
    Inc,
    Flat,
}

impl Dir {
    fn of_slope(s: f64) -> Dir {
        if s > 0.0 {
            Dir::Inc
        } else if s < 0.0 {
            Dir::Dec
        } else {
            Dir::Flat
        }
    }

    fn reversed(self) -> Dir {
        match self {
            Dir::Dec => Dir::Inc,
            Dir::Inc => Dir::Dec,
            Dir::Flat => Dir::Flat,
        }
    }
}

/// PI along a `mu` facet at fixed `sigma = s`.
#[derive(Clone, Copy, Debug)]
struct MuFacet {
    f_min: f64,
    s: f64,
}

impl Smooth1D for MuFacet {
    fn value(&self, mu: f64) -> f64 {
        pi_unchecked(mu, self.s, self.f_min)
    }
    fn d1(&self, mu: f64) -> f64 {
        if self.s == 0.0 {
            return 0.0;
        }
        -norm_pdf((self.f_min - mu) / self.s) / self.s
    }
    fn d2(&self, mu: f64) -> f64 {
        if self.s == 0.0 {
            return 0.0;
        }
        let t = (self.f_min - mu) / self.s;
        -t * norm_pdf(t) / (self.s * self.s)
    }
}

/// PI along a `sigma` facet at fixed `mu`, with `a = f_min - mu`.
#[derive(Clone, Copy, Debug)]
struct SigmaFacet {
    a: f64,
}

impl Smooth1D for SigmaFacet {
    fn value(&self, s: f64) -> f64 {
        pi_unchecked(-self.a, s, 0.0)
    }
    fn d1(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let p = norm_pdf(self.a / s);
        if p == 0.0 {
            return 0.0;
        }
        -p * self.a / (s * s)
    }
    fn d2(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let p = norm_pdf(self.a / s);
        if p == 0.0 {
            return 0.0;
        }
        p * self.a * (2.0 * s * s - self.a * self.a) / s.powi(5)
    }
}

#[derive(Clone, Debug)]
enum Piece {
    Mu { f: MuFacet, hull: Hull, dom: Interval },
    Sigma { f: SigmaFacet, hull: Hull, dom: Interval, dir: Dir },
    Plane { a: f64, b: f64, c: f64 },
    Ei { f_min: f64 },
}

impl Piece {
    fn constant(c: f64) -> Piece {
        Piece::Plane { a: 0.0, b: 0.0, c }
    }

    /// Value and gradient at `(mu, sigma)`.
    fn eval(&self, mu: f64, sigma: f64) -> (f64, f64, f64) {
        match self {
            Piece::Mu { f, hull, dom } => {
                let (v, s) = hull.eval(f, dom.clamp(mu));
                (v, s, 0.0)
            }
            Piece::Sigma { f, hull, dom, .. } => {
                let (v, s) = hull.eval(f, dom.clamp(sigma));
                (v, 0.0, s)
            }
            Piece::Plane { a, b, c } => (a * mu + b * sigma + c, *a, *b),
            Piece::Ei { f_min } => {
                let [gm, gs] = ei_gradient_unchecked(mu, sigma, *f_min);
                (ei_unchecked(mu, sigma, *f_min), gm, gs)
            }
        }
    }

    fn dirs(&self) -> (Dir, Dir) {
        match self {
            Piece::Mu { .. } => (Dir::Dec, Dir::Flat),
            Piece::Sigma { dir, .. } => (Dir::Flat, *dir),
            Piece::Plane { a, b, .. } => (Dir::of_slope(*a), Dir::of_slope(*b)),
            Piece::Ei { .. } => (Dir::Dec, Dir::Inc),
        }
    }
}

/// One side of a relaxation: the max (lower side) or min (upper side) of
/// monotone pieces. With `reflect_about = Some(f)`, each piece `p` stands for
/// `1 - p(2 f - mu, sigma)`.
#[derive(Clone, Debug)]
struct Side {
    pieces: Vec<Piece>,
    reflect_about: Option<f64>,
}

impl Side {
    fn direct(pieces: Vec<Piece>) -> Side {
        Side { pieces, reflect_about: None }
    }

    fn reflected(pieces: Vec<Piece>, f: f64) -> Side {
        Side { pieces, reflect_about: Some(f) }
    }

    fn eval_piece(&self, p: &Piece, mu: f64, sigma: f64) -> (f64, f64, f64) {
        match self.reflect_about {
            None => p.eval(mu, sigma),
            Some(f) => {
                let (v, gm, gs) = p.eval(2.0 * f - mu, sigma);
                (1.0 - v, gm, -gs)
            }
        }
    }

    fn piece_dirs(&self, p: &Piece) -> (Dir, Dir) {
        let (dm, ds) = p.dirs();
        match self.reflect_about {
            None => (dm, ds),
            Some(_) => (dm, ds.reversed()),
        }
    }

    /// Composite value and subgradient with inner relaxations.
    fn compose(&self, upper: bool, mu: &Relaxation, sigma: &Relaxation) -> (f64, Vec<f64>) {
        let n = mu.n();
        let pick = |r: &Relaxation, dir: Dir| -> (f64, Vec<f64>) {
            // lower side: decreasing -> concave inner; upper side: the reverse
            let use_cc = match dir {
                Dir::Dec => !upper,
                Dir::Inc => upper,
                Dir::Flat => false,
            };
            if use_cc {
                (r.cc, r.cc_sub.clone())
            } else {
                (r.cv, r.cv_sub.clone())
            }
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for p in &self.pieces {
            let (dm, ds) = self.piece_dirs(p);
            let (m, m_sub) = pick(mu, dm);
            let (s, s_sub) = pick(sigma, ds);
            let (v, gm, gs) = self.eval_piece(p, m, s);
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    if upper {
                        v < *b
                    } else {
                        v > *b
                    }
                }
            };
            if better {
                let sub = (0..n).map(|i| gm * m_sub[i] + gs * s_sub[i]).collect();
                best = Some((v, sub));
            }
        }
        best.expect("side has at least one piece")
    }
}

/// Polyhedral envelope through the four box corners of a componentwise
/// convex (`concave = true`) or componentwise concave function.
fn vertex_planes(value: impl Fn(f64, f64) -> f64, mu: Interval, sigma: Interval, concave: bool) -> Vec<Piece> {
    let (ml, mh, sl, sh) = (mu.lo, mu.hi, sigma.lo, sigma.hi);
    let (wm, ws) = (mu.width(), sigma.width());
    let f00 = value(ml, sl);
    let f10 = value(mh, sl);
    let f01 = value(ml, sh);
    let f11 = value(mh, sh);
    let plane = |a: f64, b: f64, mu0: f64, s0: f64, v0: f64| Piece::Plane { a, b, c: v0 - a * mu0 - b * s0 };
    if wm == 0.0 && ws == 0.0 {
        return vec![Piece::constant(f00)];
    }
    if wm == 0.0 {
        return vec![plane(0.0, (f01 - f00) / ws, ml, sl, f00)];
    }
    if ws == 0.0 {
        return vec![plane((f10 - f00) / wm, 0.0, ml, sl, f00)];
    }
    let main_diagonal = if concave { f00 + f11 >= f10 + f01 } else { f00 + f11 <= f10 + f01 };
    if main_diagonal {
        vec![
            plane((f10 - f00) / wm, (f11 - f10) / ws, ml, sl, f00),
            plane((f11 - f01) / wm, (f01 - f00) / ws, ml, sl, f00),
        ]
    } else {
        vec![
            plane((f10 - f00) / wm, (f01 - f00) / ws, ml, sl, f00),
            plane((f11 - f01) / wm, (f11 - f10) / ws, mh, sh, f11),
        ]
    }
}

/// Exact range of a function decreasing in `mu` and monotone in `sigma` at
/// every fixed `mu`.
fn monotone_range(value: impl Fn(f64, f64) -> f64, mu: Interval, sigma: Interval) -> Interval {
    let lo = value(mu.hi, sigma.lo).min(value(mu.hi, sigma.hi));
    let hi = value(mu.lo, sigma.lo).max(value(mu.lo, sigma.hi));
    Interval::raw(lo, hi)
}

fn check_boxes(mu: Interval, sigma: Interval) -> Result<()> {
    if sigma.lo < 0.0 {
        return Err(Error::Domain(format!("standard deviation box {sigma} has negative lower bound")));
    }
    if !(mu.lo.is_finite() && mu.hi.is_finite() && sigma.hi.is_finite()) {
        return Err(Error::Domain(format!("non-finite acquisition box {mu} x {sigma}")));
    }
    Ok(())
}

/// EI relaxation over a box: EI itself below, corner planes above.
#[derive(Clone, Debug)]
pub struct EiRelaxation {
    f_min: f64,
    mu: Interval,
    sigma: Interval,
    range: Interval,
    upper: Side,
}

impl EiRelaxation {
    pub fn new(f_min: f64, mu: Interval, sigma: Interval) -> Result<Self> {
        check_boxes(mu, sigma)?;
        let value = |m, s| ei_unchecked(m, s, f_min);
        Ok(EiRelaxation {
            f_min,
            mu,
            sigma,
            range: Interval::raw(value(mu.hi, sigma.lo), value(mu.lo, sigma.hi)),
            upper: Side::direct(vertex_planes(value, mu, sigma, true)),
        })
    }
}

impl BivariateRelaxation for EiRelaxation {
    fn mu_box(&self) -> Interval {
        self.mu
    }
    fn sigma_box(&self) -> Interval {
        self.sigma
    }
    fn range(&self) -> Interval {
        self.range
    }
    fn regime(&self) -> PiRegime {
        PiRegime::Convex
    }
    fn value(&self, mu: f64, sigma: f64) -> f64 {
        ei_unchecked(mu, sigma, self.f_min)
    }
    fn compose(&self, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation> {
        let lower = Side::direct(vec![Piece::Ei { f_min: self.f_min }]);
        let (cv, cv_sub) = lower.compose(false, mu, sigma);
        let (cc, cc_sub) = self.upper.compose(true, mu, sigma);
        Ok(Relaxation { range: self.range, cv, cc, cv_sub, cc_sub }.cut())
    }
}

/// EI relaxation at a point of the box `mu x sigma`.
pub fn ei_relax(mu: Interval, sigma: Interval, point: (f64, f64), f_min: f64) -> Result<BivariateRelaxationResult> {
    EiRelaxation::new(f_min, mu, sigma)?.relax_at(point.0, point.1)
}

#[derive(Clone, Debug)]
enum PiSides {
    McCormick,
    Pieces { lower: Side, upper: Side },
}

/// PI relaxation over a box.
#[derive(Clone, Debug)]
pub struct PiRelaxation {
    f_min: f64,
    mu: Interval,
    sigma: Interval,
    range: Interval,
    regime: PiRegime,
    sides: PiSides,
}

/// `mu^U < f_min`, or `mu^U <= f_min` with a positive `sigma^L`: PI is
/// decreasing in `sigma` on the whole box.
fn below_target(f: f64, mu: Interval, sigma: Interval) -> bool {
    mu.hi < f || (mu.hi <= f && sigma.lo > 0.0)
}

/// Convex envelope of PI along a `mu` facet at `sigma = s`.
fn mu_facet_piece(f: f64, s: f64, mu: Interval) -> Result<Piece> {
    let g = MuFacet { f_min: f, s };
    let hull = if s == 0.0 {
        let (vl, vh) = (g.value(mu.lo), g.value(mu.hi));
        if vl == vh {
            Hull::constant(mu.lo, mu.hi, vl)
        } else {
            // step from 1 to 0 at f inside the box: chord down to (f, 0), then 0
            Hull::from_segments(vec![
                Segment::Chord { x0: mu.lo, y0: 1.0, x1: f, y1: 0.0 },
                Segment::Chord { x0: f, y0: 0.0, x1: mu.hi, y1: 0.0 },
            ])
        }
    } else {
        Hull::convex_one_inflection(&g, mu.lo, mu.hi, f, Shape::ConcaveThenConvex)?
    };
    Ok(Piece::Mu { f: g, hull, dom: mu })
}

/// Convex envelope of PI along the `sigma` facet at `mu = m`.
fn sigma_facet_piece(f: f64, m: f64, sigma: Interval) -> Result<Piece> {
    let a = f - m;
    let g = SigmaFacet { a };
    let (hull, dir) = if a == 0.0 {
        let hull = if sigma.lo > 0.0 {
            Hull::constant(sigma.lo, sigma.hi, 0.5)
        } else if sigma.hi == 0.0 {
            Hull::constant(0.0, 0.0, 0.0)
        } else {
            Hull::line(0.0, 0.0, sigma.hi, 0.5)
        };
        (hull, Dir::Inc)
    } else if a > 0.0 {
        let p = a / SQRT_2;
        (Hull::convex_one_inflection(&g, sigma.lo, sigma.hi, p, Shape::ConcaveThenConvex)?, Dir::Dec)
    } else {
        let p = -a / SQRT_2;
        (Hull::convex_one_inflection(&g, sigma.lo, sigma.hi, p, Shape::ConvexThenConcave)?, Dir::Inc)
    };
    Ok(Piece::Sigma { f: g, hull, dom: sigma, dir })
}

/// Affine continuation below the target: the line through
/// `(mu^L, PI(mu^L, sigma^U))` and `(f, PI(f, sigma^L))` for `mu < f`, PI at
/// `sigma^L` above. Requires `mu^L < f`.
pub fn pi_ftilde(f: f64, mu: Interval, sigma: Interval, m: f64) -> f64 {
    let y0 = pi_unchecked(mu.lo, sigma.hi, f);
    let yf = pi_unchecked(f, sigma.lo, f);
    if m >= f {
        pi_unchecked(m, sigma.lo, f)
    } else {
        y0 + (yf - y0) * (m - mu.lo) / (f - mu.lo)
    }
}

/// Convex envelope of the affine continuation on `mu` (general case).
fn ftilde_piece(f: f64, mu: Interval, sigma: Interval) -> Result<Piece> {
    let g = MuFacet { f_min: f, s: sigma.lo };
    let y0 = pi_unchecked(mu.lo, sigma.hi, f);
    let yf = g.value(f);
    let hull = if mu.hi <= f {
        Hull::line(mu.lo, y0, f, yf)
    } else if sigma.lo == 0.0 {
        Hull::from_segments(vec![
            Segment::Chord { x0: mu.lo, y0, x1: f, y1: 0.0 },
            Segment::Chord { x0: f, y0: 0.0, x1: mu.hi, y1: 0.0 },
        ])
    } else {
        let t = |x: f64| (g.value(x) + g.d1(x) * (mu.lo - x) - y0, g.d2(x) * (mu.lo - x));
        if t(f).0 <= 0.0 {
            Hull::from_segments(vec![
                Segment::Chord { x0: mu.lo, y0, x1: f, y1: yf },
                Segment::Curve { lo: f, hi: mu.hi },
            ])
        } else if t(mu.hi).0 >= 0.0 {
            Hull::line(mu.lo, y0, mu.hi, g.value(mu.hi))
        } else {
            let xc = newton_1d(t, Interval::raw(f, mu.hi), 0.5 * (f + mu.hi))?;
            Hull::from_segments(vec![
                Segment::Chord { x0: mu.lo, y0, x1: xc, y1: g.value(xc) },
                Segment::Curve { lo: xc, hi: mu.hi },
            ])
        }
    };
    Ok(Piece::Mu { f: g, hull, dom: mu })
}

/// Pieces of the monotonicity-based convex relaxation of PI on a box.
fn pi_lower_pieces(f: f64, mu: Interval, sigma: Interval) -> Result<(Vec<Piece>, PiRegime)> {
    let b = sigma_facet_piece(f, mu.hi, sigma)?;
    if mu.lo >= f {
        Ok((vec![mu_facet_piece(f, sigma.lo, mu)?, b], PiRegime::FacetMonotone))
    } else if below_target(f, mu, sigma) {
        Ok((vec![mu_facet_piece(f, sigma.hi, mu)?, b], PiRegime::FacetMonotone))
    } else {
        Ok((vec![ftilde_piece(f, mu, sigma)?, b], PiRegime::General))
    }
}

fn reflect(f: f64, mu: Interval) -> Interval {
    Interval::raw(2.0 * f - mu.hi, 2.0 * f - mu.lo)
}

impl PiRelaxation {
    pub fn new(f_min: f64, mu: Interval, sigma: Interval) -> Result<Self> {
        check_boxes(mu, sigma)?;
        let f = f_min;
        let value = |m, s| pi_unchecked(m, s, f);
        let range = monotone_range(value, mu, sigma);
        let make = |regime, sides| PiRelaxation { f_min, mu, sigma, range, regime, sides };

        if sigma.hi == 0.0 && mu.lo < f && f <= mu.hi {
            let sides = PiSides::Pieces {
                lower: Side::direct(vec![Piece::constant(0.0)]),
                upper: Side::direct(vec![Piece::constant(1.0)]),
            };
            return Ok(make(PiRegime::Discontinuous, sides));
        }
        let spread = (mu.lo - f).abs().max((mu.hi - f).abs());
        if sigma.lo > 0.0 && spread <= SQRT_2 * sigma.lo {
            return Ok(make(PiRegime::McCormick, PiSides::McCormick));
        }
        let in_i4 = mu.lo >= f && mu.lo - f >= SQRT_2 * sigma.hi;
        let in_i3 = below_target(f, mu, sigma) && f - mu.hi >= SQRT_2 * sigma.hi;
        let (lower_pieces, lower_regime) = pi_lower_pieces(f, mu, sigma)?;
        let (mirror_pieces, mirror_regime) = pi_lower_pieces(f, reflect(f, mu), sigma)?;
        if in_i4 {
            let sides = PiSides::Pieces {
                lower: Side::direct(lower_pieces),
                upper: Side::direct(vertex_planes(value, mu, sigma, true)),
            };
            return Ok(make(PiRegime::Componentwise, sides));
        }
        if in_i3 {
            let sides = PiSides::Pieces {
                lower: Side::direct(vertex_planes(value, mu, sigma, false)),
                upper: Side::reflected(mirror_pieces, f),
            };
            return Ok(make(PiRegime::Componentwise, sides));
        }
        let regime = if lower_regime == PiRegime::General || mirror_regime == PiRegime::General {
            PiRegime::General
        } else {
            PiRegime::FacetMonotone
        };
        let sides = PiSides::Pieces { lower: Side::direct(lower_pieces), upper: Side::reflected(mirror_pieces, f) };
        Ok(make(regime, sides))
    }

    fn mccormick(&self, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation> {
        let t = product(&mu.scale_shift(-1.0, self.f_min), &sigma.compose(&RecipEnvelope::new(sigma.range)?)?);
        Ok(t.compose(&erf_cdf_env(t.range)?)?.restrict(self.range))
    }
}

impl BivariateRelaxation for PiRelaxation {
    fn mu_box(&self) -> Interval {
        self.mu
    }
    fn sigma_box(&self) -> Interval {
        self.sigma
    }
    fn range(&self) -> Interval {
        self.range
    }
    fn regime(&self) -> PiRegime {
        self.regime
    }
    fn value(&self, mu: f64, sigma: f64) -> f64 {
        pi_unchecked(mu, sigma, self.f_min)
    }
    fn compose(&self, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation> {
        match &self.sides {
            PiSides::McCormick => self.mccormick(mu, sigma),
            PiSides::Pieces { lower, upper } => {
                let (cv, cv_sub) = lower.compose(false, mu, sigma);
                let (cc, cc_sub) = upper.compose(true, mu, sigma);
                Ok(Relaxation { range: self.range, cv, cc, cv_sub, cc_sub }.cut())
            }
        }
    }
}

/// PI relaxation at a point of the box `mu x sigma`.
pub fn pi_relax(mu: Interval, sigma: Interval, point: (f64, f64), f_min: f64) -> Result<BivariateRelaxationResult> {
    PiRelaxation::new(f_min, mu, sigma)?.relax_at(point.0, point.1)
}

/// `(f_min - mu) / sigma` with generic product and reciprocal rules.
fn standardized_generic(f_min: f64, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation> {
    Ok(product(&mu.scale_shift(-1.0, f_min), &sigma.compose(&RecipEnvelope::new(sigma.range)?)?))
}

/// PI through generic McCormick rules. Without a positive lower bound on
/// `sigma` the quotient cannot be relaxed and only the range is returned.
pub fn pi_generic(f_min: f64, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation> {
    check_boxes(mu.range, sigma.range)?;
    let range = monotone_range(|m, s| pi_unchecked(m, s, f_min), mu.range, sigma.range);
    if sigma.range.lo <= 0.0 {
        return Ok(Relaxation::from_range(range, mu.n()));
    }
    let t = standardized_generic(f_min, mu, sigma)?;
    Ok(t.compose(&erf_cdf_env(t.range)?)?.restrict(range))
}

/// EI as `(f_min - mu) Phi(t) + sigma phi(t)` through generic McCormick rules.
pub fn ei_generic(f_min: f64, mu: &Relaxation, sigma: &Relaxation) -> Result<Relaxation> {
    check_boxes(mu.range, sigma.range)?;
    let range = Interval::raw(
        ei_unchecked(mu.range.hi, sigma.range.lo, f_min),
        ei_unchecked(mu.range.lo, sigma.range.hi, f_min),
    );
    if sigma.range.lo <= 0.0 {
        return Ok(Relaxation::from_range(range, mu.n()));
    }
    let t = standardized_generic(f_min, mu, sigma)?;
    let cdf = t.compose(&erf_cdf_env(t.range)?)?;
    let pdf = pdf_generic(&t)?;
    let first = product(&mu.scale_shift(-1.0, f_min), &cdf);
    let second = product(sigma, &pdf);
    Ok(first.add(&second).restrict(range))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    /// `E[max(f_min - Y, 0)]` for `Y ~ N(mu, sigma^2)` by Simpson's rule.
    fn ei_by_quadrature(mu: f64, sigma: f64, f_min: f64) -> f64 {
        let n = 20_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let g = |z: f64| (f_min - (mu + sigma * z)).max(0.0) * norm_pdf(z);
        let mut s = g(lo) + g(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn ei_values() {
        assert_eq!(ei_value(1.0, 0.0, 3.0).unwrap(), 2.0);
        assert_eq!(ei_value(3.0, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(ei_value(4.0, 0.0, 3.0).unwrap(), 0.0);
        let v = ei_value(0.7, 2.0, 0.7).unwrap();
        assert!((v - 2.0 * INV_SQRT_2PI).abs() < 1e-15);
        assert!((v - ei_by_quadrature(0.7, 2.0, 0.7)).abs() < 1e-8);
        for (m, s, f) in [(0.0, 1.0, 0.5), (2.0, 0.3, 1.0), (-1.0, 0.5, 1.0)] {
            assert!((ei_value(m, s, f).unwrap() - ei_by_quadrature(m, s, f)).abs() < 1e-8);
        }
        assert!(ei_value(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn pi_values() {
        assert_eq!(pi_value(1.5, 0.7, 1.5).unwrap(), 0.5);
        assert_eq!(pi_value(2.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(pi_value(1.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(pi_value(0.0, 0.0, 1.0).unwrap(), 1.0);
        assert!(pi_value(0.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn lcb_is_exact() {
        let mu = Relaxation::constant(2.0, 1);
        let sigma = Relaxation::constant(1.0, 1);
        let r = lcb_relax(&mu, &sigma, 1.0);
        assert_eq!((r.cv, r.cc), (1.0, 1.0));
        let m = Relaxation::variable(0, iv(0.0, 4.0), 1.0, 2).unwrap();
        let s = Relaxation::variable(1, iv(0.5, 2.0), 1.5, 2).unwrap();
        let r = lcb_relax(&m, &s, 2.0);
        assert_eq!(r.cv, m.cv - 2.0 * s.cc);
        assert_eq!(r.cv_sub, vec![1.0, -2.0]);
        assert!(AcquisitionSpec::lcb(-1.0).is_err());
        assert!(AcquisitionSpec::ei(f64::NAN).is_err());
    }

    #[test]
    fn ei_corners_and_range() {
        let (mu, sigma, f) = (iv(-1.0, 2.0), iv(0.2, 1.5), 0.3);
        for (m, s) in [(-1.0, 0.2), (2.0, 0.2), (-1.0, 1.5), (2.0, 1.5)] {
            let r = ei_relax(mu, sigma, (m, s), f).unwrap();
            let v = ei_value(m, s, f).unwrap();
            assert!((r.cc - v).abs() < 1e-12 && (r.cv - v).abs() < 1e-12);
        }
        let r = ei_relax(iv(0.0, 1.0), iv(0.0, 0.0), (0.5, 0.0), 0.0).unwrap();
        assert_eq!(r.range.lo, 0.0);
        let r = ei_relax(mu, sigma, (0.5, 0.85), f).unwrap();
        assert!((r.cv - ei_value(0.5, 0.85, f).unwrap()).abs() < 1e-15);
    }

    fn random_box(rng: &mut ChaCha8Rng, f: f64) -> (Interval, Interval) {
        let c = f + rng.random_range(-3.0..3.0);
        let w = rng.random_range(0.0..3.0);
        let s_lo = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.5) };
        let s_w = rng.random_range(0.0..2.0);
        (iv(c - 0.5 * w, c + 0.5 * w), iv(s_lo, s_lo + s_w))
    }

    fn sample_in(rng: &mut ChaCha8Rng, b: Interval) -> f64 {
        if b.width() == 0.0 {
            b.lo
        } else {
            rng.random_range(b.lo..=b.hi)
        }
    }

    fn check_bivariate<R: BivariateRelaxation>(rel: &R, rng: &mut ChaCha8Rng, samples: usize) {
        let (mb, sb) = (rel.mu_box(), rel.sigma_box());
        let pts: Vec<(f64, f64)> = (0..samples).map(|_| (sample_in(rng, mb), sample_in(rng, sb))).collect();
        let rels: Vec<BivariateRelaxationResult> = pts.iter().map(|&(m, s)| rel.relax_at(m, s).unwrap()).collect();
        for (&(m, s), r) in pts.iter().zip(&rels) {
            let v = rel.value(m, s);
            let ctx = format!("{:?} on {mb} x {sb} at ({m}, {s})", rel.regime());
            assert!(r.cv <= v + 1e-9 && v <= r.cc + 1e-9, "cv {} f {v} cc {} {ctx}", r.cv, r.cc);
            assert!(r.range.lo - 1e-12 <= v && v <= r.range.hi + 1e-12, "range {ctx}");
            // linearizations at this point are valid over the sample
            for &(q_m, q_s) in pts.iter().step_by(7) {
                let fq = rel.value(q_m, q_s);
                let lin_cv = r.cv + r.cv_sub[0] * (q_m - m) + r.cv_sub[1] * (q_s - s);
                let lin_cc = r.cc + r.cc_sub[0] * (q_m - m) + r.cc_sub[1] * (q_s - s);
                assert!(lin_cv <= fq + 1e-9, "cv linearization cuts f at ({q_m}, {q_s}) {ctx}");
                assert!(lin_cc >= fq - 1e-9, "cc linearization cuts f at ({q_m}, {q_s}) {ctx}");
            }
        }
        // midpoint convexity / concavity
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
            let (ra, rb, rm) =
                (rel.relax_at(a.0, a.1).unwrap(), rel.relax_at(b.0, b.1).unwrap(), rel.relax_at(mid.0, mid.1).unwrap());
            assert!(rm.cv <= 0.5 * (ra.cv + rb.cv) + 1e-9, "cv not convex {:?}", rel.regime());
            assert!(rm.cc >= 0.5 * (ra.cc + rb.cc) - 1e-9, "cc not concave {:?}", rel.regime());
        }
    }

    #[test]
    fn pi_relaxation_valid_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let f = rng.random_range(-1.0..1.0);
            let (mb, sb) = random_box(&mut rng, f);
            check_bivariate(&PiRelaxation::new(f, mb, sb).unwrap(), &mut rng, 60);
        }
    }

    #[test]
    fn ei_relaxation_valid_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let f = rng.random_range(-1.0..1.0);
            let (mb, sb) = random_box(&mut rng, f);
            check_bivariate(&EiRelaxation::new(f, mb, sb).unwrap(), &mut rng, 60);
        }
    }

    #[test]
    fn pi_regimes() {
        // mu >= f_min + sqrt 2 sigma on the whole box: componentwise convex
        let r = PiRelaxation::new(0.0, iv(2.0, 3.0), iv(0.0, 1.0)).unwrap();
        assert_eq!(r.regime(), PiRegime::Componentwise);
        for (m, s) in [(2.0, 0.0), (3.0, 0.0), (2.0, 1.0), (3.0, 1.0)] {
            let x = r.relax_at(m, s).unwrap();
            assert!((x.cc - pi_value(m, s, 0.0).unwrap()).abs() < 1e-12);
        }
        // the corner (1, 1) has mu - f_min < sqrt 2 sigma
        let r = PiRelaxation::new(0.0, iv(1.0, 2.0), iv(0.0, 1.0)).unwrap();
        assert_eq!(r.regime(), PiRegime::FacetMonotone);
        let r = PiRelaxation::new(0.0, iv(-2.0, 2.0), iv(0.0, 10.0)).unwrap();
        assert_eq!(r.regime(), PiRegime::General);
        let r = PiRelaxation::new(0.0, iv(-3.0, -2.0), iv(0.0, 1.0)).unwrap();
        assert_eq!(r.regime(), PiRegime::Componentwise);
        let r = PiRelaxation::new(0.0, iv(-0.5, 0.5), iv(1.0, 2.0)).unwrap();
        assert_eq!(r.regime(), PiRegime::McCormick);
        let r = PiRelaxation::new(0.0, iv(-0.5, 0.5), iv(0.0, 0.0)).unwrap();
        assert_eq!(r.regime(), PiRegime::Discontinuous);
        assert_eq!(r.range(), iv(0.0, 1.0));
    }

    #[test]
    fn pi_degenerate_box_is_exact() {
        for (m, s) in [(0.3, 0.7), (2.0, 0.5), (-3.0, 0.2), (0.0, 0.0), (1.0, 0.0)] {
            let r = pi_relax(Interval::point(m), Interval::point(s), (m, s), 0.0).unwrap();
            let v = pi_value(m, s, 0.0).unwrap();
            assert!((r.cv - v).abs() < 1e-12 && (r.cc - v).abs() < 1e-12, "({m}, {s})");
        }
    }

    #[test]
    fn pi_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let (m, s, f) = (rng.random_range(-4.0..4.0), rng.random_range(0.01..3.0), 0.2);
            let h = 1e-3;
            assert!(pi_value(m + h, s, f).unwrap() <= pi_value(m, s, f).unwrap());
            let ds = pi_value(m, s + h, f).unwrap() - pi_value(m, s, f).unwrap();
            if m < f {
                assert!(ds <= 0.0);
            } else if m > f {
                assert!(ds >= 0.0);
            }
        }
    }

    #[test]
    fn ftilde_underestimates_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let f = rng.random_range(-1.0..1.0);
            let mb = iv(f - rng.random_range(0.01..3.0), f + rng.random_range(0.0..3.0));
            let s_lo = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
            let sb = iv(s_lo, s_lo + rng.random_range(0.01..2.0));
            for _ in 0..1000 {
                let (m, s) = (sample_in(&mut rng, mb), sample_in(&mut rng, sb));
                assert!(pi_ftilde(f, mb, sb, m) <= pi_value(m, s, f).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn generic_versions_are_valid_and_weaker() {
        let (mb, sb, f) = (iv(-1.0, 1.5), iv(0.3, 1.2), 0.2);
        let n = 2;
        for i in 0..=10 {
            for j in 0..=10 {
                let m = mb.lo + mb.width() * i as f64 / 10.0;
                let s = sb.lo + sb.width() * j as f64 / 10.0;
                let mr = Relaxation::variable(0, mb, m, n).unwrap();
                let sr = Relaxation::variable(1, sb, s, n).unwrap();
                let g = ei_generic(f, &mr, &sr).unwrap();
                let t = EiRelaxation::new(f, mb, sb).unwrap().compose(&mr, &sr).unwrap();
                let v = ei_value(m, s, f).unwrap();
                assert!(g.cv <= v + 1e-9 && v <= g.cc + 1e-9);
                assert!(g.cv <= t.cv + 1e-9);
                let g = pi_generic(f, &mr, &sr).unwrap();
                let v = pi_value(m, s, f).unwrap();
                assert!(g.cv <= v + 1e-9 && v <= g.cc + 1e-9);
            }
        }
        let mr = Relaxation::variable(0, mb, 0.0, 1).unwrap();
        let sr = Relaxation::from_range(iv(0.0, 1.0), 1);
        let g = pi_generic(f, &mr, &sr).unwrap();
        assert_eq!((g.cv, g.cc), (g.range.lo, g.range.hi));
    }

    #[test]
    fn composition_with_inner_relaxations_is_valid() {
        // mu(x) = x^2 - 1 and sigma(x) = exp(-x) on x in [-1, 1]
        use crate::envelopes::intrinsics::{ExpEnvelope, SqrEnvelope};
        let b = iv(-1.0, 1.0);
        for f in [-0.5, 0.0, 0.4] {
            for k in 0..=40 {
                let x = -1.0 + k as f64 / 20.0;
                let xr = Relaxation::variable(0, b, x, 1).unwrap();
                let mu = xr.compose(&SqrEnvelope::new(b)).unwrap().scale_shift(1.0, -1.0);
                let negx = xr.neg();
                let sigma = negx.compose(&ExpEnvelope::new(negx.range)).unwrap();
                let (mv, sv) = (x * x - 1.0, (-x).exp());
                let pi = PiRelaxation::new(f, mu.range, sigma.range).unwrap().compose(&mu, &sigma).unwrap();
                let v = pi_value(mv, sv, f).unwrap();
                assert!(pi.cv <= v + 1e-9 && v <= pi.cc + 1e-9, "PI at {x}");
                let ei = EiRelaxation::new(f, mu.range, sigma.range).unwrap().compose(&mu, &sigma).unwrap();
                let v = ei_value(mv, sv, f).unwrap();
                assert!(ei.cv <= v + 1e-9 && v <= ei.cc + 1e-9, "EI at {x}");
            }
        }
    }
}
