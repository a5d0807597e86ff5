//! Closed real intervals and their natural extensions.
//!
//! No outward rounding is performed. The solver tolerances (1e-3 optimality,
//! 1e-6 feasibility) are several orders of magnitude above the rounding error
//! accumulated by these operations.

use std::fmt;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` with finite endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Monotone scalar maps with exact interval images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotone {
    Exp,
    /// `d -> exp(-d / 2)`, decreasing.
    ExpNegHalf,
    /// `d -> exp(-sqrt(d))`, decreasing on `d >= 0`.
    ExpNegSqrt,
    /// `x -> x^2` restricted to `x >= 0`.
    SqrNonneg,
    Sqrt,
}

impl Interval {
    /// Checked constructor.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInterval(lo, hi));
        }
        if lo > hi {
            return Err(Error::InvalidInterval(lo, hi));
        }
        Ok(Interval { lo, hi })
    }

    /// Unchecked constructor for internal use where `lo <= hi` is known.
    #[inline]
    pub(crate) fn raw(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || (lo - hi).abs() < 1e-12, "bad interval [{lo}, {hi}]");
        Interval { lo, hi: hi.max(lo) }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Projects `x` onto the interval.
    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn add(&self, b: &Interval) -> Interval {
        Interval { lo: self.lo + b.lo, hi: self.hi + b.hi }
    }

    pub fn sub(&self, b: &Interval) -> Interval {
        Interval { lo: self.lo - b.hi, hi: self.hi - b.lo }
    }

    pub fn mul(&self, b: &Interval) -> Interval {
        let p = [self.lo * b.lo, self.lo * b.hi, self.hi * b.lo, self.hi * b.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval { lo, hi }
    }

    pub fn div(&self, b: &Interval) -> Result<Interval> {
        if b.contains(0.0) {
            return Err(Error::IntervalDivisionByZero);
        }
        Ok(self.mul(&Interval { lo: 1.0 / b.hi, hi: 1.0 / b.lo }))
    }

    pub fn scale(&self, a: f64) -> Interval {
        if a >= 0.0 {
            Interval { lo: a * self.lo, hi: a * self.hi }
        } else {
            Interval { lo: a * self.hi, hi: a * self.lo }
        }
    }

    pub fn shift(&self, c: f64) -> Interval {
        Interval { lo: self.lo + c, hi: self.hi + c }
    }

    pub fn neg(&self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }

    /// Square over the whole real line (not only the nonnegative branch).
    pub fn sqr(&self) -> Interval {
        if self.lo >= 0.0 {
            Interval { lo: self.lo * self.lo, hi: self.hi * self.hi }
        } else if self.hi <= 0.0 {
            Interval { lo: self.hi * self.hi, hi: self.lo * self.lo }
        } else {
            Interval { lo: 0.0, hi: (self.lo * self.lo).max(self.hi * self.hi) }
        }
    }

    pub fn exp(&self) -> Interval {
        Interval { lo: self.lo.exp(), hi: self.hi.exp() }
    }

    pub fn sqrt(&self) -> Result<Interval> {
        self.monotone(Monotone::Sqrt)
    }

    /// Exact image under a monotone map.
    pub fn monotone(&self, f: Monotone) -> Result<Interval> {
        let domain_ok = match f {
            Monotone::Exp | Monotone::ExpNegHalf => true,
            Monotone::ExpNegSqrt | Monotone::SqrNonneg | Monotone::Sqrt => self.lo >= 0.0,
        };
        if !domain_ok {
            return Err(Error::Domain(format!("{f:?} on [{}, {}]", self.lo, self.hi)));
        }
        Ok(match f {
            Monotone::Exp => self.exp(),
            Monotone::ExpNegHalf => Interval { lo: (-0.5 * self.hi).exp(), hi: (-0.5 * self.lo).exp() },
            Monotone::ExpNegSqrt => Interval { lo: (-self.hi.sqrt()).exp(), hi: (-self.lo.sqrt()).exp() },
            Monotone::SqrNonneg => Interval { lo: self.lo * self.lo, hi: self.hi * self.hi },
            Monotone::Sqrt => Interval { lo: self.lo.sqrt(), hi: self.hi.sqrt() },
        })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(iv(1.0, 2.0).add(&iv(3.0, 4.0)), iv(4.0, 6.0));
        assert_eq!(iv(-1.0, 2.0).mul(&iv(3.0, 4.0)), iv(-4.0, 8.0));
        assert_eq!(iv(1.0, 2.0).sub(&iv(1.0, 2.0)), iv(-1.0, 1.0));
        assert!(matches!(iv(1.0, 2.0).div(&iv(-1.0, 1.0)), Err(Error::IntervalDivisionByZero)));
        let q = iv(1.0, 2.0).div(&iv(2.0, 4.0)).unwrap();
        assert_eq!(q, iv(0.25, 1.0));
    }

    #[test]
    fn monotone_examples() {
        let e = iv(0.0, 1.0).monotone(Monotone::Exp).unwrap();
        assert_eq!(e, iv(1.0, std::f64::consts::E));
        assert_eq!(iv(4.0, 9.0).sqrt().unwrap(), iv(2.0, 3.0));
        let k = iv(0.0, 2.0).monotone(Monotone::ExpNegHalf).unwrap();
        assert_eq!(k, iv((-1.0f64).exp(), 1.0));
        assert!(iv(-1.0, 1.0).sqrt().is_err());
        assert!(iv(-1.0, 1.0).monotone(Monotone::SqrNonneg).is_err());
    }

    #[test]
    fn geometry() {
        let a = iv(0.0, 4.0);
        assert_eq!((a.width(), a.midpoint()), (4.0, 2.0));
        let b = iv(1.0, 1.0);
        assert_eq!((b.width(), b.midpoint()), (0.0, 1.0));
        assert!(iv(-3.0, 3.0).contains(3.0));
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 1.0).is_err());
    }

    fn random_interval(rng: &mut ChaCha8Rng, scale: f64) -> Interval {
        let a = rng.random_range(-scale..scale);
        let b = rng.random_range(-scale..scale);
        iv(a.min(b), a.max(b))
    }

    fn pick(rng: &mut ChaCha8Rng, a: &Interval) -> f64 {
        a.lo + rng.random::<f64>() * a.width()
    }

    #[test]
    fn enclosure_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = random_interval(&mut rng, 5.0);
            let b = random_interval(&mut rng, 5.0);
            let (x, y) = (pick(&mut rng, &a), pick(&mut rng, &b));
            assert!(a.add(&b).contains(x + y));
            assert!(a.sub(&b).contains(x - y));
            let m = a.mul(&b);
            assert!(m.lo - 1e-12 <= x * y && x * y <= m.hi + 1e-12);
            if !b.contains(0.0) {
                let q = a.div(&b).unwrap();
                assert!(q.lo - 1e-9 <= x / y && x / y <= q.hi + 1e-9);
            }
            assert!(a.sqr().contains(x * x) || (a.sqr().lo - x * x).abs() < 1e-12);
            let e = a.exp();
            assert!(e.lo <= x.exp() * (1.0 + 1e-15) && x.exp() <= e.hi * (1.0 + 1e-15));
            let p = Interval::raw(a.lo.abs().min(a.hi.abs()), a.lo.abs().max(a.hi.abs()));
            let z = pick(&mut rng, &p);
            let s = p.sqrt().unwrap();
            assert!(s.lo <= z.sqrt() + 1e-15 && z.sqrt() <= s.hi + 1e-15);
            let k = p.monotone(Monotone::ExpNegSqrt).unwrap();
            let kz = (-z.sqrt()).exp();
            assert!(k.lo <= kz + 1e-15 && kz <= k.hi + 1e-15);
        }
    }

    #[test]
    fn exactness_by_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_interval(&mut rng, 3.0);
            let b = random_interval(&mut rng, 3.0);
            let grid = |i: &Interval, k: usize| i.lo + i.width() * k as f64 / 50.0;
            let mut mins = [f64::INFINITY; 3];
            let mut maxs = [f64::NEG_INFINITY; 3];
            for i in 0..=50 {
                for j in 0..=50 {
                    let (x, y) = (grid(&a, i), grid(&b, j));
                    for (k, v) in [x + y, x - y, x * y].into_iter().enumerate() {
                        mins[k] = mins[k].min(v);
                        maxs[k] = maxs[k].max(v);
                    }
                }
            }
            for (k, r) in [a.add(&b), a.sub(&b), a.mul(&b)].iter().enumerate() {
                assert!((r.lo - mins[k]).abs() < 1e-12, "op {k}");
                assert!((r.hi - maxs[k]).abs() < 1e-12, "op {k}");
            }
        }
    }
}
