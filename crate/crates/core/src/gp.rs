//! Trained Gaussian-process models: construction, exact posterior
//! evaluation, McCormick propagation of the posterior, and persistence.
//!
//! Inputs are scaled to the unit box given by the declared input bounds and
//! outputs are standardized. The covariance is `sigma_f^2 k_nu(d)` with
//! `d = sum_j lambda_j^2 (x_j - x'_j)^2`, and the log-hyperparameter vector
//! is `[log lambda_1, .., log lambda_D, log sigma_f, log sigma_n]`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envelopes::intrinsics::SqrEnvelope;
use crate::envelopes::kernel::kernel_generic;
use crate::envelopes::{kernel_env, KernelKind};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::linalg::{cho_solve, cholesky, forward_sub};
use crate::mccormick::{linear_combination, Relaxation};

/// Jitter levels tried, relative to `sigma_f^2`, after a failed factorization.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Relative level below which a computed variance is cancellation noise.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GpModel {
    pub kernel: KernelKind,
    pub dim: usize,
    pub n: usize,
    pub log_theta: Vec<f64>,
    /// `n` rows of `dim` scaled inputs.
    pub x_scaled: Vec<Vec<f64>>,
    pub y_scaled: Vec<f64>,
    /// Lower Cholesky factor, row-major `n x n`.
    chol: Vec<f64>,
    pub alpha: Vec<f64>,
    pub input_bounds: Vec<Interval>,
    pub output_mean: f64,
    pub output_std: f64,
    lambda_sq: Vec<f64>,
    sf2: f64,
}

/// Posterior relaxations over a box.
#[derive(Clone, Debug)]
pub struct PosteriorRelaxation {
    pub mean: Relaxation,
    pub variance: Relaxation,
}

fn validate_theta(log_theta: &[f64], dim: usize) -> Result<()> {
    if log_theta.len() != dim + 2 {
        return Err(Error::InvalidInput(format!(
            "expected {} log-hyperparameters, got {}",
            dim + 2,
            log_theta.len()
        )));
    }
    // log sigma_n = -inf encodes a noiseless model
    let noise = log_theta[dim + 1];
    if log_theta[..=dim].iter().any(|v| !v.is_finite()) || noise.is_nan() || noise == f64::INFINITY {
        return Err(Error::InvalidInput("non-finite log-hyperparameter".into()));
    }
    Ok(())
}

/// Maps raw inputs to the unit box of `bounds`. Zero-width bounds map to 0.
pub fn scale_point(bounds: &[Interval], x: &[f64]) -> Vec<f64> {
    bounds.iter().zip(x).map(|(b, &v)| if b.width() > 0.0 { (v - b.lo) / b.width() } else { 0.0 }).collect()
}

fn scale_factor(b: &Interval) -> f64 {
    if b.width() > 0.0 {
        1.0 / b.width()
    } else {
        0.0
    }
}

/// Covariance matrix `sigma_f^2 K + sigma_n^2 I` of scaled inputs.
pub(crate) fn covariance_matrix(kernel: KernelKind, log_theta: &[f64], xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let dim = log_theta.len() - 2;
    let lambda_sq: Vec<f64> = log_theta[..dim].iter().map(|l| (2.0 * l).exp()).collect();
    let sf2 = (2.0 * log_theta[dim]).exp();
    let sn2 = (2.0 * log_theta[dim + 1]).exp();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let d = weighted_sq_dist(&lambda_sq, &xs[i], &xs[j]);
            let v = sf2 * kernel.eval(d);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += sn2;
    }
    k
}

pub(crate) fn weighted_sq_dist(lambda_sq: &[f64], a: &[f64], b: &[f64]) -> f64 {
    lambda_sq.iter().zip(a.iter().zip(b)).map(|(l, (x, y))| l * (x - y) * (x - y)).sum()
}

fn has_duplicate_rows(xs: &[Vec<f64>]) -> bool {
    (0..xs.len()).any(|i| (0..i).any(|j| xs[i] == xs[j]))
}

impl GpModel {
    /// Builds a model from raw training data.
    pub fn build(
        kernel: KernelKind,
        log_theta: Vec<f64>,
        x_raw: &[Vec<f64>],
        y_raw: &[f64],
        input_bounds: Vec<Interval>,
    ) -> Result<Self> {
        let n = x_raw.len();
        if n == 0 {
            return Err(Error::InvalidInput("a GP needs at least one training point".into()));
        }
        if y_raw.len() != n {
            return Err(Error::InvalidInput(format!("{n} inputs but {} outputs", y_raw.len())));
        }
        let dim = input_bounds.len();
        if x_raw.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput(format!("training inputs must have {dim} columns")));
        }
        if y_raw.iter().chain(x_raw.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite training data".into()));
        }
        let (output_mean, output_std) = standardization(y_raw);
        let x_scaled: Vec<Vec<f64>> = x_raw.iter().map(|r| scale_point(&input_bounds, r)).collect();
        let y_scaled: Vec<f64> = y_raw.iter().map(|y| (y - output_mean) / output_std).collect();
        Self::from_scaled(kernel, log_theta, x_scaled, y_scaled, input_bounds, output_mean, output_std)
    }

    /// Builds a model from already scaled data; factorizes the covariance.
    pub fn from_scaled(
        kernel: KernelKind,
        log_theta: Vec<f64>,
        x_scaled: Vec<Vec<f64>>,
        y_scaled: Vec<f64>,
        input_bounds: Vec<Interval>,
        output_mean: f64,
        output_std: f64,
    ) -> Result<Self> {
        let dim = input_bounds.len();
        let n = x_scaled.len();
        if n == 0 {
            return Err(Error::InvalidInput("a GP needs at least one training point".into()));
        }
        validate_theta(&log_theta, dim)?;
        if !(output_std > 0.0 && output_std.is_finite() && output_mean.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid output scaling ({output_mean}, {output_std})")));
        }
        let sf2 = (2.0 * log_theta[dim]).exp();
        let sn2 = (2.0 * log_theta[dim + 1]).exp();
        // exactly repeated inputs without noise make the covariance singular;
        // jitter is meant for near-singularity only
        if sn2 == 0.0 && has_duplicate_rows(&x_scaled) {
            return Err(Error::NotPositiveDefinite);
        }
        let k = covariance_matrix(kernel, &log_theta, &x_scaled);
        let chol = match cholesky(&k, n) {
            Some(l) => l,
            None => {
                let mut jitter = JITTER_START;
                loop {
                    let mut kj = k.clone();
                    for i in 0..n {
                        kj[i * n + i] += jitter * sf2;
                    }
                    if let Some(l) = cholesky(&kj, n) {
                        break l;
                    }
                    jitter *= 10.0;
                    if jitter > JITTER_MAX * (1.0 + 1e-9) {
                        return Err(Error::NotPositiveDefinite);
                    }
                }
            }
        };
        let alpha = cho_solve(&chol, n, &y_scaled);
        let lambda_sq = log_theta[..dim].iter().map(|l| (2.0 * l).exp()).collect();
        Ok(GpModel {
            kernel,
            dim,
            n,
            log_theta,
            x_scaled,
            y_scaled,
            chol,
            alpha,
            input_bounds,
            output_mean,
            output_std,
            lambda_sq,
            sf2,
        })
    }

    /// Squared output scale `sigma_f^2` (scaled units).
    pub fn sf2(&self) -> f64 {
        self.sf2
    }

    pub fn lambda_sq(&self) -> &[f64] {
        &self.lambda_sq
    }

    /// Entry `(i, j)` of the lower Cholesky factor.
    pub fn chol(&self, i: usize, j: usize) -> f64 {
        self.chol[i * self.n + j]
    }

    pub fn scale_input(&self, x: &[f64]) -> Vec<f64> {
        scale_point(&self.input_bounds, x)
    }

    /// `sigma_f^2 k(d(x, x_i))` for all training inputs, at a scaled point.
    pub fn kernel_vector(&self, xs: &[f64]) -> Vec<f64> {
        self.x_scaled.iter().map(|xi| self.sf2 * self.kernel.eval(weighted_sq_dist(&self.lambda_sq, xs, xi))).collect()
    }

    /// Posterior mean in output units.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let k = self.kernel_vector(&self.scale_input(x));
        self.mean_from_kernels(&k)
    }

    pub fn mean_from_kernels(&self, k: &[f64]) -> f64 {
        let s: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        self.output_mean + self.output_std * s
    }

    /// Forward-substitution vector `v = L^{-1} k`.
    pub fn whiten(&self, k: &[f64]) -> Vec<f64> {
        forward_sub(&self.chol, self.n, k)
    }

    /// Posterior variance in squared output units before clamping at zero.
    pub fn predict_variance_unclamped(&self, x: &[f64]) -> f64 {
        let v = self.whiten(&self.kernel_vector(&self.scale_input(x)));
        self.variance_from_whitened(&v)
    }

    pub fn variance_from_whitened(&self, v: &[f64]) -> f64 {
        let s: f64 = v.iter().map(|a| a * a).sum();
        self.output_std * self.output_std * (self.sf2 - s)
    }

    /// Posterior variance (noise-free latent function) in squared output
    /// units. Values within rounding of zero are returned as exactly zero.
    pub fn predict_variance(&self, x: &[f64]) -> f64 {
        let v = self.predict_variance_unclamped(x);
        if v <= VARIANCE_FLOOR * self.output_std * self.output_std * self.sf2 {
            0.0
        } else {
            v
        }
    }

    /// Relaxations of the scaled inputs from raw-input relaxations.
    pub fn scale_relaxations(&self, x: &[Relaxation]) -> Vec<Relaxation> {
        x.iter().zip(&self.input_bounds).map(|(r, b)| r.scale_shift(scale_factor(b), -b.lo * scale_factor(b))).collect()
    }

    /// Relaxations of `sigma_f^2 k(d(x, x_i))` from scaled-input relaxations.
    pub fn relax_kernels(&self, xs: &[Relaxation], use_envelopes: bool) -> Result<Vec<Relaxation>> {
        let n_vars = xs.first().map(|r| r.n()).unwrap_or(0);
        let mut out = Vec::with_capacity(self.n);
        for xi in &self.x_scaled {
            let mut d = Relaxation::constant(0.0, n_vars);
            for ((r, &c), &l2) in xs.iter().zip(xi).zip(&self.lambda_sq) {
                let diff = r.scale_shift(1.0, -c);
                let sq = diff.compose(&SqrEnvelope::new(diff.range))?;
                d = linear_combination([(&d, 1.0), (&sq, l2)], 0.0, n_vars);
            }
            let d = d.restrict(Interval::raw(0.0, f64::INFINITY));
            let k = if use_envelopes {
                d.compose(&kernel_env(self.kernel, d.range)?)?
            } else {
                kernel_generic(self.kernel, &d)?
            };
            out.push(k.scale_shift(self.sf2, 0.0));
        }
        Ok(out)
    }

    /// Interval enclosure of the kernel vector over a box of scaled inputs.
    pub fn kernel_intervals(&self, xs: &[Interval]) -> Vec<Interval> {
        self.x_scaled
            .iter()
            .map(|xi| {
                let mut d = Interval::point(0.0);
                for ((b, &c), &l2) in xs.iter().zip(xi).zip(&self.lambda_sq) {
                    d = d.add(&b.shift(-c).sqr().scale(l2));
                }
                let k = self.kernel;
                Interval::raw(self.sf2 * k.eval(d.hi), self.sf2 * k.eval(d.lo.max(0.0)))
            })
            .collect()
    }

    /// Scaled-input intervals from raw-input intervals.
    pub fn scale_intervals(&self, x: &[Interval]) -> Vec<Interval> {
        x.iter().zip(&self.input_bounds).map(|(r, b)| r.shift(-b.lo).scale(scale_factor(b))).collect()
    }

    /// Interval enclosure of the posterior mean over a box of raw inputs.
    pub fn mean_interval(&self, x: &[Interval]) -> Interval {
        let k = self.kernel_intervals(&self.scale_intervals(x));
        let s = k.iter().zip(&self.alpha).fold(Interval::point(0.0), |acc, (ki, &a)| acc.add(&ki.scale(a)));
        s.scale(self.output_std).shift(self.output_mean)
    }

    /// Interval enclosure of the posterior variance over a box of raw inputs,
    /// by interval forward substitution.
    pub fn variance_interval(&self, x: &[Interval]) -> Interval {
        let k = self.kernel_intervals(&self.scale_intervals(x));
        let sf = self.sf2.sqrt();
        let clip = Interval::raw(-sf, sf);
        let mut v: Vec<Interval> = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let mut acc = k[j];
            for (l, vl) in v.iter().enumerate() {
                acc = acc.sub(&vl.scale(self.chol(j, l)));
            }
            let vj = acc.scale(1.0 / self.chol(j, j));
            v.push(vj.intersect(&clip).unwrap_or(clip));
        }
        let ss = v.iter().fold(Interval::point(0.0), |acc, vj| acc.add(&vj.sqr()));
        let s2 = self.output_std * self.output_std;
        let var = Interval::point(self.sf2).sub(&ss).scale(s2);
        var.intersect(&Interval::raw(0.0, s2 * self.sf2)).unwrap_or(Interval::point(0.0))
    }

    /// Mean relaxation in output units from kernel-vector relaxations.
    pub fn relax_mean_from_kernels(&self, k: &[Relaxation]) -> Relaxation {
        let n_vars = k.first().map(|r| r.n()).unwrap_or(0);
        let terms = k.iter().zip(&self.alpha).map(|(r, &a)| (r, self.output_std * a));
        linear_combination(terms, self.output_mean, n_vars)
    }

    /// Relaxations of the whitened vector `v = L^{-1} k`, each clipped to
    /// `[-sigma_f, sigma_f]`.
    pub fn relax_whitened(&self, k: &[Relaxation]) -> Vec<Relaxation> {
        let n = self.n;
        let n_vars = k.first().map(|r| r.n()).unwrap_or(0);
        let sf = self.sf2.sqrt();
        let mut v: Vec<Relaxation> = Vec::with_capacity(n);
        for j in 0..n {
            let ljj = self.chol(j, j);
            let terms = std::iter::once((&k[j], 1.0 / ljj)).chain((0..j).map(|l| (&v[l], -self.chol(j, l) / ljj)));
            let r = linear_combination(terms, 0.0, n_vars);
            v.push(r.restrict(Interval::raw(-sf, sf)));
        }
        v
    }

    /// Variance relaxation in squared output units from `v` relaxations.
    pub fn relax_variance_from_whitened(&self, v: &[Relaxation]) -> Result<Relaxation> {
        let n_vars = v.first().map(|r| r.n()).unwrap_or(0);
        let mut squares = Vec::with_capacity(v.len());
        for r in v {
            squares.push(r.compose(&SqrEnvelope::new(r.range))?);
        }
        let s2 = self.output_std * self.output_std;
        let terms = squares.iter().map(|r| (r, -s2));
        let var = linear_combination(terms, s2 * self.sf2, n_vars);
        Ok(var.restrict(Interval::raw(0.0, s2 * self.sf2)))
    }

    /// Posterior relaxations from raw-input relaxations.
    pub fn relax_posterior(&self, x: &[Relaxation], use_envelopes: bool) -> Result<PosteriorRelaxation> {
        let k = self.relax_kernels(&self.scale_relaxations(x), use_envelopes)?;
        let mean = self.relax_mean_from_kernels(&k);
        let variance = self.relax_variance_from_whitened(&self.relax_whitened(&k))?;
        Ok(PosteriorRelaxation { mean, variance })
    }

    /// Mean relaxation only.
    pub fn relax_mean(&self, x: &[Relaxation], use_envelopes: bool) -> Result<Relaxation> {
        let k = self.relax_kernels(&self.scale_relaxations(x), use_envelopes)?;
        Ok(self.relax_mean_from_kernels(&k))
    }

    fn to_doc(&self) -> ModelDoc {
        let n = self.n;
        ModelDoc {
            nu: self.kernel.as_str().to_string(),
            d: self.dim,
            n,
            log_theta: self.log_theta.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            x_scaled: self.x_scaled.clone(),
            y_scaled: self.y_scaled.clone(),
            l: (0..n).map(|i| self.chol[i * n..i * n + i + 1].to_vec()).collect(),
            alpha: self.alpha.clone(),
            input_bounds: self.input_bounds.iter().map(|b| [b.lo, b.hi]).collect(),
            output_mean: self.output_mean,
            output_std: self.output_std,
        }
    }

    /// Serializes the model as a JSON document.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
        self.to_doc().serialize(&mut ser).expect("model document serializes");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ModelDoc = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Schema { path, message: e.into_inner().to_string() }
        })?;
        doc.into_model()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Mean and standard deviation used to standardize outputs; a constant
/// output gets unit scale.
pub fn standardization(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

#[allow(non_snake_case)]
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    nu: String,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    /// `null` stands for `-inf` (a noiseless model).
    log_theta: Vec<Option<f64>>,
    #[serde(rename = "X_scaled")]
    x_scaled: Vec<Vec<f64>>,
    y_scaled: Vec<f64>,
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    input_bounds: Vec<[f64; 2]>,
    output_mean: f64,
    output_std: f64,
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema { path: path.to_string(), message: message.into() }
}

impl ModelDoc {
    fn into_model(self) -> Result<GpModel> {
        let kernel: KernelKind = self.nu.parse().map_err(|_| schema("nu", format!("unknown kernel `{}`", self.nu)))?;
        let (d, n) = (self.d, self.n);
        if n == 0 {
            return Err(schema("N", "model must have at least one training point"));
        }
        if self.log_theta.len() != d + 2 {
            return Err(schema("log_theta", format!("expected {} entries", d + 2)));
        }
        if let Some(i) = self.log_theta[..=d].iter().position(|v| v.is_none()) {
            return Err(schema(&format!("log_theta[{i}]"), "only log sigma_n may be null"));
        }
        let log_theta: Vec<f64> = self.log_theta.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        if self.x_scaled.len() != n || self.x_scaled.iter().any(|r| r.len() != d) {
            return Err(schema("X_scaled", format!("expected {n} rows of {d} entries")));
        }
        if self.y_scaled.len() != n {
            return Err(schema("y_scaled", format!("expected {n} entries")));
        }
        if self.alpha.len() != n {
            return Err(schema("alpha", format!("expected {n} entries")));
        }
        if self.input_bounds.len() != d {
            return Err(schema("input_bounds", format!("expected {d} entries")));
        }
        if self.l.len() != n || self.l.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err(schema("L", "expected the lower triangle, row i holding i + 1 entries"));
        }
        let mut chol = vec![0.0; n * n];
        for (i, row) in self.l.iter().enumerate() {
            if !(row[i] > 0.0) {
                return Err(schema(&format!("L[{i}][{i}]"), "diagonal must be positive"));
            }
            chol[i * n..i * n + i + 1].copy_from_slice(row);
        }
        let mut input_bounds = Vec::with_capacity(d);
        for (j, [lo, hi]) in self.input_bounds.iter().enumerate() {
            input_bounds.push(
                Interval::new(*lo, *hi).map_err(|e| schema(&format!("input_bounds[{j}]"), e.to_string()))?,
            );
        }
        if !(self.output_std > 0.0) {
            return Err(schema("output_std", "must be positive"));
        }
        let lambda_sq = log_theta[..d].iter().map(|l| (2.0 * l).exp()).collect();
        let sf2 = (2.0 * log_theta[d]).exp();
        Ok(GpModel {
            kernel,
            dim: d,
            n,
            log_theta,
            x_scaled: self.x_scaled,
            y_scaled: self.y_scaled,
            chol,
            alpha: self.alpha,
            input_bounds,
            output_mean: self.output_mean,
            output_std: self.output_std,
            lambda_sq,
            sf2,
        })
    }
}

/// Compact JSON with every number written with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
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

    fn random_model(rng: &mut ChaCha8Rng, dim: usize, n: usize, kernel: KernelKind, noise: f64) -> GpModel {
        let bounds: Vec<Interval> = (0..dim).map(|j| iv(-1.0 - j as f64, 2.0)).collect();
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| bounds.iter().map(|b| rng.random_range(b.lo..b.hi)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v.sin()).sum::<f64>() + rng.random_range(-0.1..0.1)).collect();
        let mut theta: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.5)).collect();
        theta.push(rng.random_range(-0.5..0.5));
        theta.push(noise.ln());
        GpModel::build(kernel, theta, &x, &y, bounds).unwrap()
    }

    /// Gauss-Jordan inverse as an oracle independent of the Cholesky path.
    fn dense_inverse(a: &[f64], n: usize) -> Vec<f64> {
        let mut m = a.to_vec();
        let mut inv: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
            for k in 0..n {
                m.swap(c * n + k, p * n + k);
                inv.swap(c * n + k, p * n + k);
            }
            let d = m[c * n + c];
            for k in 0..n {
                m[c * n + k] /= d;
                inv[c * n + k] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r * n + c];
                    for k in 0..n {
                        m[r * n + k] -= f * m[c * n + k];
                        inv[r * n + k] -= f * inv[c * n + k];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn scalar_model() {
        let theta = vec![0.0, 0.3_f64.ln() / 1.0, 0.1_f64.ln()];
        let m = GpModel::build(KernelKind::Matern52, theta.clone(), &[vec![0.5]], &[2.0], vec![iv(0.0, 1.0)]).unwrap();
        let sf2 = (2.0 * theta[1]).exp();
        let sn2 = 0.01;
        assert!((m.chol(0, 0) - (sf2 + sn2).sqrt()).abs() < 1e-15);
        assert!((m.alpha[0] - m.y_scaled[0] / (sf2 + sn2)).abs() < 1e-15);
        // N = 1: variance sigma_f^2 - k^2 / (sigma_f^2 + sigma_n^2)
        let x = [0.8];
        let k = sf2 * KernelKind::Matern52.eval(0.09);
        let expected = sf2 - k * k / (sf2 + sn2);
        assert!((m.predict_variance(&x) - expected).abs() < 1e-14);
    }

    #[test]
    fn noiseless_interpolation_and_decay() {
        let x = vec![vec![0.0], vec![0.4], vec![1.0]];
        let y = [1.0, -2.0, 0.5];
        let theta = vec![1.0, 0.0, f64::NEG_INFINITY];
        let m = GpModel::build(KernelKind::SquaredExponential, theta, &x, &y, vec![iv(0.0, 1.0)]).unwrap();
        for (xi, yi) in x.iter().zip(y) {
            assert!((m.predict_mean(xi) - yi).abs() < 1e-8);
            assert!(m.predict_variance(xi) < 1e-8);
        }
        let far = [1e3];
        assert!((m.predict_mean(&far) - m.output_mean).abs() < 1e-12);
        let prior = m.sf2() * m.output_std * m.output_std;
        assert!((m.predict_variance(&far) - prior).abs() < 1e-12);
        let single = GpModel::build(KernelKind::Matern32, vec![0.0, 0.0, f64::NEG_INFINITY], &[vec![3.0]], &[7.0], vec![iv(0.0, 5.0)])
            .unwrap();
        assert_eq!(single.predict_mean(&[3.0]), 7.0);
    }

    #[test]
    fn duplicate_inputs_without_noise_fail() {
        let x = vec![vec![0.2], vec![0.2]];
        let r = GpModel::build(KernelKind::Matern52, vec![0.0, 0.0, f64::NEG_INFINITY], &x, &[1.0, 2.0], vec![iv(0.0, 1.0)]);
        assert!(matches!(r, Err(Error::NotPositiveDefinite)));
        assert!(GpModel::build(KernelKind::Matern52, vec![0.0, 0.0, 0.0], &[], &[], vec![iv(0.0, 1.0)]).is_err());
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &kernel in &KernelKind::ALL {
            for dim in 1..=3 {
                let m = random_model(&mut rng, dim, 20, kernel, 0.05);
                let n = m.n;
                let k = covariance_matrix(kernel, &m.log_theta, &m.x_scaled);
                let inv = dense_inverse(&k, n);
                // L L^T alpha = y
                let resid: f64 = (0..n)
                    .map(|i| ((0..n).map(|j| k[i * n + j] * m.alpha[j]).sum::<f64>() - m.y_scaled[i]).abs())
                    .fold(0.0, f64::max);
                assert!(resid < 1e-8 * (1.0 + m.y_scaled.iter().map(|v| v.abs()).fold(0.0, f64::max)));
                for _ in 0..20 {
                    let x: Vec<f64> = m.input_bounds.iter().map(|b| rng.random_range(b.lo..b.hi)).collect();
                    let kv = m.kernel_vector(&m.scale_input(&x));
                    let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| inv[i * n + j] * kv[j]).sum()).collect();
                    let mean = m.output_mean + m.output_std * (0..n).map(|i| w[i] * m.y_scaled[i]).sum::<f64>();
                    let var = m.output_std.powi(2) * (m.sf2() - (0..n).map(|i| w[i] * kv[i]).sum::<f64>());
                    assert!((m.predict_mean(&x) - mean).abs() <= 1e-8 * (1.0 + mean.abs()));
                    assert!((m.predict_variance_unclamped(&x) - var).abs() <= 1e-8 * (1.0 + var.abs()));
                    assert!(m.predict_variance_unclamped(&x) >= -1e-8);
                }
            }
        }
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_model(&mut rng, 2, 12, KernelKind::Matern32, 0.1);
        let back = GpModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        // rebuilding from the stored scaled data reproduces the factor bitwise
        let rebuilt = GpModel::from_scaled(
            back.kernel,
            back.log_theta.clone(),
            back.x_scaled.clone(),
            back.y_scaled.clone(),
            back.input_bounds.clone(),
            back.output_mean,
            back.output_std,
        )
        .unwrap();
        assert_eq!(rebuilt, m);
    }

    #[test]
    fn noiseless_model_round_trips() {
        let m = GpModel::build(KernelKind::Matern52, vec![0.0, 0.0, f64::NEG_INFINITY], &[vec![0.1], vec![0.7]], &[1.0, 3.0], vec![iv(0.0, 1.0)])
            .unwrap();
        let text = m.to_json();
        assert!(text.contains("null"));
        assert_eq!(GpModel::from_json(&text).unwrap(), m);
    }

    #[test]
    fn json_schema_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_model(&mut rng, 1, 3, KernelKind::Matern12, 0.1);
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("nu");
        let err = GpModel::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("nu"), "{err}");
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["N"] = 0.into();
        assert!(matches!(GpModel::from_json(&v.to_string()), Err(Error::Schema { .. })));
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["alpha"] = serde_json::json!(["x"]);
        let err = GpModel::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    fn random_subbox(rng: &mut ChaCha8Rng, bounds: &[Interval]) -> Vec<Interval> {
        bounds
            .iter()
            .map(|b| {
                let a = rng.random_range(b.lo..b.hi);
                let c = rng.random_range(b.lo..b.hi);
                iv(a.min(c), a.max(c))
            })
            .collect()
    }

    #[test]
    fn posterior_relaxations_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for trial in 0..6 {
            let kernel = KernelKind::ALL[trial % 4];
            let m = random_model(&mut rng, 1 + trial % 3, 5 + 5 * trial, kernel, 0.05);
            for _ in 0..50 {
                let b = random_subbox(&mut rng, &m.input_bounds);
                for _ in 0..50 {
                    let x: Vec<f64> =
                        b.iter().map(|bi| if bi.width() > 0.0 { rng.random_range(bi.lo..=bi.hi) } else { bi.lo }).collect();
                    let xr: Vec<Relaxation> =
                        x.iter().enumerate().map(|(i, &v)| Relaxation::variable(i, b[i], v, m.dim).unwrap()).collect();
                    let p = m.relax_posterior(&xr, true).unwrap();
                    let (mu, var) = (m.predict_mean(&x), m.predict_variance(&x));
                    assert!(p.mean.cv <= mu + 1e-8 && mu <= p.mean.cc + 1e-8);
                    assert!(p.variance.cv <= var + 1e-8 && var <= p.variance.cc + 1e-8);
                    assert!(p.variance.range.lo >= 0.0);
                }
            }
        }
    }

    #[test]
    fn degenerate_box_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_model(&mut rng, 2, 10, KernelKind::Matern52, 0.1);
        let x = [0.3, 1.1];
        let xr: Vec<Relaxation> =
            x.iter().enumerate().map(|(i, &v)| Relaxation::variable(i, Interval::point(v), v, 2).unwrap()).collect();
        let p = m.relax_posterior(&xr, true).unwrap();
        let mu = m.predict_mean(&x);
        assert!((p.mean.cv - mu).abs() < 1e-10 && (p.mean.cc - mu).abs() < 1e-10);
    }

    #[test]
    fn mean_relaxation_exact_at_training_input_corner() {
        // a box whose lower corner is a training input: every kernel term
        // attains its minimum distance there only for that input, so check
        // the single-point model where the whole mean is one kernel term
        let m = GpModel::build(KernelKind::Matern52, vec![0.5, 0.0, -3.0], &[vec![0.2], vec![0.9]], &[1.0, -1.0], vec![iv(0.0, 1.0)])
            .unwrap();
        let b = iv(0.2, 0.5);
        let xr = vec![Relaxation::variable(0, b, 0.2, 1).unwrap()];
        let k = m.relax_kernels(&m.scale_relaxations(&xr), true).unwrap();
        let exact = m.kernel_vector(&m.scale_input(&[0.2]));
        assert!((k[0].cv - exact[0]).abs() < 1e-12 && (k[0].cc - exact[0]).abs() < 1e-12);
    }

    #[test]
    fn distance_intervals_attained_at_corners() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_model(&mut rng, 3, 8, KernelKind::SquaredExponential, 0.1);
        let b = random_subbox(&mut rng, &m.input_bounds);
        let sb: Vec<Interval> = b.iter().zip(&m.input_bounds).map(|(bi, ib)| bi.shift(-ib.lo).scale(1.0 / ib.width())).collect();
        let ki = m.kernel_intervals(&sb);
        for (i, k) in ki.iter().enumerate() {
            // the kernel maximum over the box is at the clamp of the training input,
            // the minimum at the farthest corner
            let near: Vec<f64> = sb.iter().zip(&m.x_scaled[i]).map(|(s, &c)| s.clamp(c)).collect();
            let far: Vec<f64> = sb.iter().zip(&m.x_scaled[i]).map(|(s, &c)| if (c - s.lo).abs() > (c - s.hi).abs() { s.lo } else { s.hi }).collect();
            let kn = m.sf2() * m.kernel.eval(weighted_sq_dist(m.lambda_sq(), &near, &m.x_scaled[i]));
            let kf = m.sf2() * m.kernel.eval(weighted_sq_dist(m.lambda_sq(), &far, &m.x_scaled[i]));
            assert!((k.hi - kn).abs() < 1e-12 && (k.lo - kf).abs() < 1e-12);
            let corner_ds: Vec<f64> = (0..8)
                .map(|mask| {
                    let c: Vec<f64> = sb.iter().enumerate().map(|(j, s)| if mask >> j & 1 == 1 { s.hi } else { s.lo }).collect();
                    weighted_sq_dist(m.lambda_sq(), &c, &m.x_scaled[i])
                })
                .collect();
            let dmax = corner_ds.iter().copied().fold(0.0, f64::max);
            assert!((m.kernel.eval(dmax) * m.sf2() - k.lo).abs() < 1e-12);
        }
    }
}
