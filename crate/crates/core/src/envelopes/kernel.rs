//! Matérn covariance functions as functions of the weighted squared
//! distance `d >= 0`, and their envelopes.
//!
//! All four kernels are convex and decreasing in `d`, so the convex envelope
//! is the kernel itself and the concave envelope is the secant.

use std::fmt;
use std::str::FromStr;

use super::intrinsics::{ExpEnvelope, SqrtEnvelope};
use super::{Hull, HullEnvelope, Smooth1D};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mccormick::{linear_combination, product, Relaxation};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Threshold below which the `nu = 1/2` kernel has no finite supporting slope.
pub const NU_HALF_FLAT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Matern12,
    Matern32,
    Matern52,
    SquaredExponential,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] =
        [KernelKind::Matern12, KernelKind::Matern32, KernelKind::Matern52, KernelKind::SquaredExponential];

    /// Unit-variance kernel value at weighted squared distance `d`.
    pub fn eval(self, d: f64) -> f64 {
        let d = d.max(0.0);
        match self {
            KernelKind::Matern12 => (-d.sqrt()).exp(),
            KernelKind::Matern32 => {
                let r = SQRT3 * d.sqrt();
                (1.0 + r) * (-r).exp()
            }
            KernelKind::Matern52 => {
                let r = SQRT5 * d.sqrt();
                (1.0 + r + 5.0 / 3.0 * d) * (-r).exp()
            }
            KernelKind::SquaredExponential => (-0.5 * d).exp(),
        }
    }

    /// Derivative with respect to `d`. Unbounded at `d = 0` for `nu = 1/2`.
    pub fn deriv(self, d: f64) -> f64 {
        let d = d.max(0.0);
        match self {
            KernelKind::Matern12 => {
                let r = d.sqrt();
                if r == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -(-r).exp() / (2.0 * r)
                }
            }
            KernelKind::Matern32 => -1.5 * (-SQRT3 * d.sqrt()).exp(),
            KernelKind::Matern52 => {
                let r = SQRT5 * d.sqrt();
                -5.0 / 6.0 * (1.0 + r) * (-r).exp()
            }
            KernelKind::SquaredExponential => -0.5 * (-0.5 * d).exp(),
        }
    }

    /// `d * k'(d)`, finite at zero for every kernel. Used by training gradients.
    pub fn d_times_deriv(self, d: f64) -> f64 {
        if d <= 0.0 {
            0.0
        } else {
            d * self.deriv(d)
        }
    }

    pub fn second_deriv(self, d: f64) -> f64 {
        let d = d.max(0.0);
        match self {
            KernelKind::Matern12 => {
                let r = d.sqrt();
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    (-r).exp() * (r + 1.0) / (4.0 * r * r * r)
                }
            }
            KernelKind::Matern32 => {
                let r = d.sqrt();
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    0.75 * SQRT3 * (-SQRT3 * r).exp() / r
                }
            }
            KernelKind::Matern52 => 25.0 / 12.0 * (-SQRT5 * d.sqrt()).exp(),
            KernelKind::SquaredExponential => 0.25 * (-0.5 * d).exp(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Matern12 => "1/2",
            KernelKind::Matern32 => "3/2",
            KernelKind::Matern52 => "5/2",
            KernelKind::SquaredExponential => "inf",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/2" | "0.5" | "12" => Ok(KernelKind::Matern12),
            "3/2" | "1.5" | "32" => Ok(KernelKind::Matern32),
            "5/2" | "2.5" | "52" => Ok(KernelKind::Matern52),
            "inf" | "se" | "SE" | "infinity" => Ok(KernelKind::SquaredExponential),
            other => Err(Error::InvalidInput(format!("unknown kernel order `{other}`"))),
        }
    }
}

/// Kernel as a smooth function on a particular distance box.
#[derive(Clone, Copy, Debug)]
pub struct KernelFn {
    pub kind: KernelKind,
    box_lo: f64,
    box_hi: f64,
}

impl Smooth1D for KernelFn {
    fn value(&self, d: f64) -> f64 {
        self.kind.eval(d)
    }
    fn d1(&self, d: f64) -> f64 {
        self.kind.deriv(d)
    }
    fn d2(&self, d: f64) -> f64 {
        self.kind.second_deriv(d)
    }
    fn support(&self, d: f64) -> (f64, f64) {
        if self.kind == KernelKind::Matern12 && d <= NU_HALF_FLAT {
            if self.box_lo == 0.0 {
                return (self.kind.eval(self.box_hi), 0.0);
            }
            return (self.kind.eval(d), self.kind.deriv(NU_HALF_FLAT));
        }
        (self.kind.eval(d), self.kind.deriv(d))
    }
}

pub type KernelEnvelope = HullEnvelope<KernelFn>;

/// Envelope of a unit-variance kernel over the distance box `d_box`.
pub fn kernel_env(kind: KernelKind, d_box: Interval) -> Result<KernelEnvelope> {
    if d_box.lo < 0.0 {
        return Err(Error::Domain(format!("kernel distance box {d_box} has negative lower bound")));
    }
    let f = KernelFn { kind, box_lo: d_box.lo, box_hi: d_box.hi };
    Ok(HullEnvelope {
        f,
        domain: d_box,
        cv_hull: Hull::curve(d_box.lo, d_box.hi),
        cc_hull: Hull::chord(&f, d_box.lo, d_box.hi),
        range: Interval::raw(kind.eval(d_box.hi), kind.eval(d_box.lo)),
        argmin: d_box.hi,
        argmax: d_box.lo,
    })
}

/// Kernel relaxation via the generic composition and product rules only,
/// as a factorable expression in `r = sqrt(d)`.
pub fn kernel_generic(kind: KernelKind, d: &Relaxation) -> Result<Relaxation> {
    let n = d.n();
    let exp_of = |arg: Relaxation| -> Result<Relaxation> { arg.compose(&ExpEnvelope::new(arg.range)) };
    match kind {
        KernelKind::SquaredExponential => exp_of(d.scale_shift(-0.5, 0.0)),
        _ => {
            let r = d.compose(&SqrtEnvelope::new(d.range)?)?;
            match kind {
                KernelKind::Matern12 => exp_of(r.neg()),
                KernelKind::Matern32 => {
                    let poly = r.scale_shift(SQRT3, 1.0);
                    let e = exp_of(r.scale_shift(-SQRT3, 0.0))?;
                    Ok(product(&poly, &e))
                }
                KernelKind::Matern52 => {
                    let poly = linear_combination([(&r, SQRT5), (d, 5.0 / 3.0)], 1.0, n);
                    let e = exp_of(r.scale_shift(-SQRT5, 0.0))?;
                    Ok(product(&poly, &e))
                }
                KernelKind::SquaredExponential => unreachable!(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::testing::check_envelope_on;
    use crate::mccormick::UnivariateEnvelope;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(KernelKind::SquaredExponential.eval(0.0), 1.0);
        assert!((KernelKind::Matern12.eval(1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        for k in KernelKind::ALL {
            assert_eq!(k.eval(0.0), 1.0);
        }
    }

    #[test]
    fn secant_overestimates_at_midpoint() {
        let env = kernel_env(KernelKind::SquaredExponential, iv(0.0, 4.0)).unwrap();
        let (cc, _) = env.cc(2.0);
        assert!((cc - 0.567_667_641_618_306_3).abs() < 1e-12);
        assert!((env.eval(2.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(kernel_env(KernelKind::Matern52, iv(-1.0, 1.0)).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for k in KernelKind::ALL {
            for &d in &[0.05, 0.3, 1.0, 2.5, 7.0] {
                let h = 1e-6;
                let fd = (k.eval(d + h) - k.eval(d - h)) / (2.0 * h);
                assert!((fd - k.deriv(d)).abs() < 1e-6 * (1.0 + fd.abs()), "{k} d1 at {d}");
                let fd2 = (k.deriv(d + h) - k.deriv(d - h)) / (2.0 * h);
                assert!((fd2 - k.second_deriv(d)).abs() < 1e-5 * (1.0 + fd2.abs()), "{k} d2 at {d}");
            }
        }
    }

    #[test]
    fn envelopes_valid_and_range_exact() {
        for k in KernelKind::ALL {
            for (lo, hi) in [(0.0, 4.0), (0.3, 0.9), (2.0, 30.0), (1.0, 1.0)] {
                let env = kernel_env(k, iv(lo, hi)).unwrap();
                // nu = 1/2 has a flat support line at d = 0, so its cv values
                // are convex only away from a zero lower end
                let flat_end = k == KernelKind::Matern12 && lo == 0.0;
                check_envelope_on(&env, 300, 1e-12, !flat_end);
                assert_eq!(env.range(), iv(k.eval(hi), k.eval(lo)));
            }
        }
    }

    #[test]
    fn nu_half_flat_support_at_zero() {
        let env = kernel_env(KernelKind::Matern12, iv(0.0, 4.0)).unwrap();
        let (v, s) = env.cv(0.0);
        assert_eq!(s, 0.0);
        assert_eq!(v, KernelKind::Matern12.eval(4.0));
    }

    #[test]
    fn generic_relaxation_is_weaker_but_valid() {
        let d_box = iv(0.2, 3.0);
        for k in [KernelKind::Matern32, KernelKind::Matern52] {
            let env = kernel_env(k, d_box).unwrap();
            for i in 0..=20 {
                let x = d_box.lo + d_box.width() * i as f64 / 20.0;
                let d = Relaxation::variable(0, d_box, x, 1).unwrap();
                let g = kernel_generic(k, &d).unwrap();
                let t = d.compose(&env).unwrap();
                let f = k.eval(x);
                assert!(g.cv <= f + 1e-12 && f <= g.cc + 1e-12);
                assert!(g.cv <= t.cv + 1e-12, "generic cv tighter than envelope for {k}");
                assert!(g.cc >= t.cc - 1e-12);
            }
        }
    }
}
