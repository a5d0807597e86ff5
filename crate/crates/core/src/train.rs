//! Maximum a posteriori hyperparameter estimation and Latin hypercube designs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::envelopes::KernelKind;
use crate::error::{Error, Result};
use crate::gp::{covariance_matrix, scale_point, standardization, GpModel};
use crate::interval::Interval;
use crate::linalg::{cho_inverse, cho_solve, cholesky};

/// Objective value reported where the covariance is not positive definite.
pub const NOT_PD_PENALTY: f64 = 1e10;

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_ITERS: usize = 200;
const GRAD_TOL: f64 = 1e-6;
/// Largest change of any log-hyperparameter in one step.
const MAX_MOVE: f64 = 1.0;

/// Independent Gaussian priors on the log-hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl PriorSpec {
    /// Weakly informative defaults: `N(0, 4)` on every log length-scale
    /// and on `log sigma_f`, `N(log 1e-2, 1)` on `log sigma_n`.
    pub fn default_for(dim: usize) -> Self {
        let mut mean = vec![0.0; dim + 1];
        mean.push(1e-2_f64.ln());
        let mut var = vec![4.0; dim + 1];
        var.push(1.0);
        PriorSpec { mean, var }
    }

    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::InvalidInput("prior mean and variance lengths differ".into()));
        }
        if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("prior variances must be positive and finite".into()));
        }
        Ok(PriorSpec { mean, var })
    }

    /// Negative log prior density up to its additive constant, with gradient.
    pub fn neg_log_density(&self, log_theta: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let grad = log_theta
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(t, (m, v))| {
                value += (t - m) * (t - m) / (2.0 * v);
                (t - m) / v
            })
            .collect();
        (value, grad)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| Normal::new(*m, v.sqrt()).expect("positive variance").sample(rng))
            .collect()
    }
}

/// Training data in raw units together with the declared input bounds.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub bounds: Vec<Interval>,
}

impl TrainingData {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>, bounds: Vec<Interval>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput(format!("{} inputs and {} outputs", x.len(), y.len())));
        }
        if x.iter().any(|r| r.len() != bounds.len()) {
            return Err(Error::InvalidInput(format!("inputs must have {} columns", bounds.len())));
        }
        if x.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite training data".into()));
        }
        Ok(TrainingData { x, y, bounds })
    }

    /// Bounds taken as the per-column range of the inputs.
    pub fn with_data_bounds(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let dim = x.first().map(|r| r.len()).unwrap_or(0);
        let mut bounds = Vec::with_capacity(dim);
        for j in 0..dim {
            let lo = x.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = x.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            bounds.push(Interval::new(lo, hi)?);
        }
        Self::new(x, y, bounds)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn scaled(&self) -> (Vec<Vec<f64>>, Vec<f64>, f64, f64) {
        let (m, s) = standardization(&self.y);
        let xs = self.x.iter().map(|r| scale_point(&self.bounds, r)).collect();
        let ys = self.y.iter().map(|v| (v - m) / s).collect();
        (xs, ys, m, s)
    }
}

/// Negative log marginal likelihood plus negative log prior on scaled data,
/// with its analytic gradient.
pub fn neg_log_posterior(
    log_theta: &[f64],
    x_scaled: &[Vec<f64>],
    y_scaled: &[f64],
    kernel: KernelKind,
    prior: &PriorSpec,
) -> (f64, Vec<f64>) {
    let p = log_theta.len();
    let dim = p - 2;
    let n = x_scaled.len();
    if log_theta.iter().any(|v| !v.is_finite()) {
        return (NOT_PD_PENALTY, vec![0.0; p]);
    }
    let k = covariance_matrix(kernel, log_theta, x_scaled);
    let Some(l) = cholesky(&k, n) else {
        return (NOT_PD_PENALTY, vec![0.0; p]);
    };
    let alpha = cho_solve(&l, n, y_scaled);
    let log_det: f64 = (0..n).map(|i| l[i * n + i].ln()).sum();
    let fit: f64 = alpha.iter().zip(y_scaled).map(|(a, y)| a * y).sum();
    let nlml = 0.5 * fit + log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // d nlml / d theta = 0.5 tr((K^-1 - alpha alpha^T) dK/dtheta)
    let mut w = cho_inverse(&l, n);
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] -= alpha[i] * alpha[j];
        }
    }
    let lambda_sq: Vec<f64> = log_theta[..dim].iter().map(|t| (2.0 * t).exp()).collect();
    let sf2 = (2.0 * log_theta[dim]).exp();
    let sn2 = (2.0 * log_theta[dim + 1]).exp();
    let mut grad = vec![0.0; p];
    let mut parts = vec![0.0; dim];
    for i in 0..n {
        for j in 0..n {
            let wij = w[i * n + j];
            if i == j {
                grad[dim] += wij * 2.0 * sf2;
                grad[dim + 1] += wij * 2.0 * sn2;
                continue;
            }
            let mut d = 0.0;
            for (q, part) in parts.iter_mut().enumerate() {
                let diff = x_scaled[i][q] - x_scaled[j][q];
                *part = lambda_sq[q] * diff * diff;
                d += *part;
            }
            grad[dim] += wij * 2.0 * sf2 * kernel.eval(d);
            if d > 0.0 {
                let dk = 2.0 * sf2 * kernel.d_times_deriv(d) / d;
                for (q, part) in parts.iter().enumerate() {
                    grad[q] += wij * dk * part;
                }
            }
        }
    }
    grad.iter_mut().for_each(|g| *g *= 0.5);

    let (pv, pg) = prior.neg_log_density(log_theta);
    grad.iter_mut().zip(pg).for_each(|(g, h)| *g += h);
    (nlml + pv, grad)
}

/// Result of one local descent.
#[derive(Clone, Debug)]
pub struct Descent {
    pub log_theta: Vec<f64>,
    pub value: f64,
    pub start_value: f64,
    /// Objective after every accepted step, starting with the start value.
    pub trace: Vec<f64>,
}

/// Gradient descent with Armijo backtracking. Trial steps are capped so no
/// coordinate moves by more than `MAX_MOVE`.
pub fn descend<F>(objective: F, start: Vec<f64>) -> Descent
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = start;
    let (mut f, mut g) = objective(&x);
    let start_value = f;
    let mut trace = vec![f];
    let mut step: f64 = 1.0;
    for _ in 0..MAX_ITERS {
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg.sqrt() <= GRAD_TOL {
            break;
        }
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        step = step.min(MAX_MOVE / gmax);
        let mut accepted = None;
        while step > 1e-14 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let (ft, gt) = objective(&trial);
            if ft <= f - ARMIJO_C * step * gg {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= SHRINK;
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(f);
        step /= SHRINK;
    }
    Descent { log_theta: x, value: f, start_value, trace }
}

/// Outcome of multistart MAP training.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: GpModel,
    pub value: f64,
    pub starts: Vec<Descent>,
}

/// Multistart MAP estimation from prior-sampled starts; deterministic in `seed`.
pub fn map_train(
    data: &TrainingData,
    kernel: KernelKind,
    prior: &PriorSpec,
    restarts: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    if restarts == 0 {
        return Err(Error::InvalidInput("restarts must be at least 1".into()));
    }
    if prior.mean.len() != data.dim() + 2 {
        return Err(Error::InvalidInput(format!("prior must cover {} log-hyperparameters", data.dim() + 2)));
    }
    let (xs, ys, m, s) = data.scaled();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objective = |t: &[f64]| neg_log_posterior(t, &xs, &ys, kernel, prior);
    let starts: Vec<Descent> = (0..restarts).map(|_| descend(objective, prior.sample(&mut rng))).collect();
    let mut order: Vec<usize> = (0..starts.len()).filter(|&i| starts[i].value < NOT_PD_PENALTY).collect();
    order.sort_by(|&a, &b| starts[a].value.total_cmp(&starts[b].value));
    for i in order {
        let d = &starts[i];
        if let Ok(model) =
            GpModel::from_scaled(kernel, d.log_theta.clone(), xs.clone(), ys.clone(), data.bounds.clone(), m, s)
        {
            let value = d.value;
            return Ok(TrainOutcome { model, value, starts });
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Midpoint Latin hypercube design of `n` points in `bounds`.
pub fn lhs_sample(n: usize, bounds: &[Interval], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::with_capacity(bounds.len()); n];
    for b in bounds {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (row, s) in out.iter_mut().zip(strata) {
            row.push(b.lo + b.width() * (s as f64 + 0.5) / n as f64);
        }
    }
    out
}
