//! Expression DAGs and the optimization problems built from trained GPs.
//!
//! A [`Dag`] is an arena of [`Expr`] nodes; children always precede their
//! parents, so every pass is a single sweep in index order. A [`Problem`]
//! names an objective node, inequality (`<= 0`) and equality (`= 0`) nodes,
//! and a box for its variables.
//!
//! Full-space problems carry [`Definition`]s: an intermediate variable `z`
//! defined by an expression of earlier variables, with the equality
//! `z - expr = 0`. Only the leading `n_dof` variables are degrees of
//! freedom; intermediates follow from them by one forward sweep.

use std::fmt;
use std::sync::Arc;

use crate::envelopes::acquisition::{ei_generic, pi_generic};
use crate::envelopes::intrinsics::{ExpEnvelope, RecipEnvelope, SqrEnvelope, SqrtEnvelope};
use crate::envelopes::kernel::kernel_generic;
use crate::envelopes::pdf::pdf_generic;
use crate::envelopes::{
    ei_value, erf_cdf_env, kernel_env, lcb_relax, norm_cdf, norm_pdf, pdf_env, pi_value, AcquisitionKind,
    AcquisitionSpec, BivariateRelaxation, EiRelaxation, KernelKind, PiRelaxation,
};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::interval::Interval;
use crate::mccormick::{linear_combination, product, Relaxation};

pub type NodeId = usize;

/// Slack allowed below zero before a square root argument is a domain error.
const SQRT_SLACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    /// `sum w_k * node_k + constant`.
    Lin { terms: Vec<(NodeId, f64)>, constant: f64 },
    Sqr(NodeId),
    Sqrt(NodeId),
    Exp(NodeId),
    Kernel(KernelKind, NodeId),
    Pdf(NodeId),
    Cdf(NodeId),
    Ei { f_min: f64, mu: NodeId, sigma: NodeId },
    Pi { f_min: f64, mu: NodeId, sigma: NodeId },
    Lcb { kappa: f64, mu: NodeId, sigma: NodeId },
    GpMean { model: usize, inputs: Vec<NodeId> },
    GpVar { model: usize, inputs: Vec<NodeId> },
}

impl Expr {
    fn children(&self) -> Vec<NodeId> {
        match self {
            Expr::Var(_) | Expr::Const(_) => vec![],
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => vec![*a, *b],
            Expr::Neg(a) | Expr::Sqr(a) | Expr::Sqrt(a) | Expr::Exp(a) | Expr::Kernel(_, a) | Expr::Pdf(a) | Expr::Cdf(a) => {
                vec![*a]
            }
            Expr::Lin { terms, .. } => terms.iter().map(|t| t.0).collect(),
            Expr::Ei { mu, sigma, .. } | Expr::Pi { mu, sigma, .. } | Expr::Lcb { mu, sigma, .. } => vec![*mu, *sigma],
            Expr::GpMean { inputs, .. } | Expr::GpVar { inputs, .. } => inputs.clone(),
        }
    }
}

/// Arena of expression nodes plus the GP models they reference.
#[derive(Clone, Debug, Default)]
pub struct Dag {
    nodes: Vec<Expr>,
    models: Vec<Arc<GpModel>>,
}

impl Dag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Expr {
        &self.nodes[id]
    }

    pub fn model(&self, i: usize) -> &GpModel {
        &self.models[i]
    }

    /// Appends a node. Panics if a child does not precede it, which would
    /// break the topological order every pass relies on.
    pub fn push(&mut self, e: Expr) -> NodeId {
        let id = self.nodes.len();
        assert!(e.children().iter().all(|&c| c < id), "child must precede parent");
        if let Expr::GpMean { model, .. } | Expr::GpVar { model, .. } = &e {
            assert!(*model < self.models.len(), "unknown model");
        }
        self.nodes.push(e);
        id
    }

    pub fn add_model(&mut self, m: impl Into<Arc<GpModel>>) -> usize {
        self.models.push(m.into());
        self.models.len() - 1
    }

    pub fn var(&mut self, i: usize) -> NodeId {
        self.push(Expr::Var(i))
    }
    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push(Expr::Const(c))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Expr::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.lin(vec![(a, 1.0), (b, -1.0)], 0.0)
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Expr::Mul(a, b))
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Expr::Div(a, b))
    }
    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Expr::Neg(a))
    }
    pub fn lin(&mut self, terms: Vec<(NodeId, f64)>, constant: f64) -> NodeId {
        self.push(Expr::Lin { terms, constant })
    }
    pub fn sqr(&mut self, a: NodeId) -> NodeId {
        self.push(Expr::Sqr(a))
    }
    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.push(Expr::Sqrt(a))
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Expr::Exp(a))
    }
    pub fn kernel(&mut self, k: KernelKind, d: NodeId) -> NodeId {
        self.push(Expr::Kernel(k, d))
    }
    pub fn pdf(&mut self, a: NodeId) -> NodeId {
        self.push(Expr::Pdf(a))
    }
    pub fn cdf(&mut self, a: NodeId) -> NodeId {
        self.push(Expr::Cdf(a))
    }
    pub fn gp_mean(&mut self, model: usize, inputs: Vec<NodeId>) -> NodeId {
        self.push(Expr::GpMean { model, inputs })
    }
    pub fn gp_var(&mut self, model: usize, inputs: Vec<NodeId>) -> NodeId {
        self.push(Expr::GpVar { model, inputs })
    }

    /// Acquisition node in its natural sense over `(mu, sigma)`.
    pub fn acquisition(&mut self, spec: &AcquisitionSpec, mu: NodeId, sigma: NodeId) -> NodeId {
        match spec.kind {
            AcquisitionKind::Ei => self.push(Expr::Ei { f_min: spec.f_min, mu, sigma }),
            AcquisitionKind::Pi => self.push(Expr::Pi { f_min: spec.f_min, mu, sigma }),
            AcquisitionKind::Lcb => self.push(Expr::Lcb { kappa: spec.kappa, mu, sigma }),
        }
    }

    fn gp_inputs<'a, T>(vals: &'a [T], inputs: &[NodeId]) -> Vec<&'a T> {
        inputs.iter().map(|&i| &vals[i]).collect()
    }

    /// Exact forward evaluation. `defs[node]` names a variable whose value
    /// is assigned from that node as the sweep passes it.
    fn eval_with(&self, x: &mut [f64], defs: &[Option<usize>]) -> Result<Vec<f64>> {
        let mut v: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for (id, e) in self.nodes.iter().enumerate() {
            let val = match e {
                Expr::Var(i) => x[*i],
                Expr::Const(c) => *c,
                Expr::Add(a, b) => v[*a] + v[*b],
                Expr::Mul(a, b) => v[*a] * v[*b],
                Expr::Div(a, b) => {
                    if v[*b] == 0.0 {
                        return Err(Error::Domain(format!("division by zero at node {id}")));
                    }
                    v[*a] / v[*b]
                }
                Expr::Neg(a) => -v[*a],
                Expr::Lin { terms, constant } => terms.iter().map(|&(t, w)| w * v[t]).sum::<f64>() + constant,
                Expr::Sqr(a) => v[*a] * v[*a],
                Expr::Sqrt(a) => {
                    if v[*a] < -SQRT_SLACK {
                        return Err(Error::Domain(format!("square root of {} at node {id}", v[*a])));
                    }
                    v[*a].max(0.0).sqrt()
                }
                Expr::Exp(a) => v[*a].exp(),
                Expr::Kernel(k, a) => k.eval(v[*a]),
                Expr::Pdf(a) => norm_pdf(v[*a]),
                Expr::Cdf(a) => norm_cdf(v[*a]),
                Expr::Ei { f_min, mu, sigma } => ei_value(v[*mu], v[*sigma], *f_min)?,
                Expr::Pi { f_min, mu, sigma } => pi_value(v[*mu], v[*sigma], *f_min)?,
                Expr::Lcb { kappa, mu, sigma } => v[*mu] - kappa * v[*sigma],
                Expr::GpMean { model, inputs } => {
                    let xi: Vec<f64> = Self::gp_inputs(&v, inputs).into_iter().copied().collect();
                    self.models[*model].predict_mean(&xi)
                }
                Expr::GpVar { model, inputs } => {
                    let xi: Vec<f64> = Self::gp_inputs(&v, inputs).into_iter().copied().collect();
                    self.models[*model].predict_variance(&xi)
                }
            };
            if let Some(var) = defs.get(id).copied().flatten() {
                x[var] = val;
            }
            v.push(val);
        }
        Ok(v)
    }

    /// Exact values of every node at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval_with(&mut x.to_vec(), &[])
    }

    /// Natural interval extension; `defs` as in exact evaluation, with the
    /// defined variable's bounds intersected with the node's enclosure.
    fn intervals_with(&self, bounds: &mut [Interval], defs: &[Option<usize>]) -> Result<Vec<Interval>> {
        let mut v: Vec<Interval> = Vec::with_capacity(self.nodes.len());
        for (id, e) in self.nodes.iter().enumerate() {
            let val = match e {
                Expr::Var(i) => bounds[*i],
                Expr::Const(c) => Interval::point(*c),
                Expr::Add(a, b) => v[*a].add(&v[*b]),
                Expr::Mul(a, b) => v[*a].mul(&v[*b]),
                Expr::Div(a, b) => v[*a].div(&v[*b])?,
                Expr::Neg(a) => v[*a].neg(),
                Expr::Lin { terms, constant } => {
                    terms.iter().fold(Interval::point(*constant), |acc, &(t, w)| acc.add(&v[t].scale(w)))
                }
                Expr::Sqr(a) => v[*a].sqr(),
                Expr::Sqrt(a) => sqrt_domain(v[*a], id)?.sqrt()?,
                Expr::Exp(a) => v[*a].exp(),
                Expr::Kernel(k, a) => {
                    let d = nonneg(v[*a]);
                    Interval::raw(k.eval(d.hi), k.eval(d.lo))
                }
                Expr::Pdf(a) => pdf_env(v[*a])?.range,
                Expr::Cdf(a) => Interval::raw(norm_cdf(v[*a].lo), norm_cdf(v[*a].hi)),
                Expr::Ei { f_min, mu, sigma } => EiRelaxation::new(*f_min, v[*mu], nonneg(v[*sigma]))?.range(),
                Expr::Pi { f_min, mu, sigma } => PiRelaxation::new(*f_min, v[*mu], nonneg(v[*sigma]))?.range(),
                Expr::Lcb { kappa, mu, sigma } => v[*mu].sub(&v[*sigma].scale(*kappa)),
                Expr::GpMean { model, inputs } => {
                    let xi: Vec<Interval> = Self::gp_inputs(&v, inputs).into_iter().copied().collect();
                    self.models[*model].mean_interval(&xi)
                }
                Expr::GpVar { model, inputs } => {
                    let xi: Vec<Interval> = Self::gp_inputs(&v, inputs).into_iter().copied().collect();
                    self.models[*model].variance_interval(&xi)
                }
            };
            if let Some(var) = defs.get(id).copied().flatten() {
                // an empty intersection can only come from rounding; the
                // fresh enclosure is valid on its own
                bounds[var] = bounds[var].intersect(&val).unwrap_or(val);
            }
            v.push(val);
        }
        Ok(v)
    }

    /// Interval enclosures of every node over `bounds`.
    pub fn intervals(&self, bounds: &[Interval]) -> Result<Vec<Interval>> {
        self.intervals_with(&mut bounds.to_vec(), &[])
    }

    /// McCormick relaxations of every node over `bounds` at `point`.
    pub fn relax(&self, bounds: &[Interval], point: &[f64], use_envelopes: bool) -> Result<Vec<Relaxation>> {
        let n = bounds.len();
        let mut v: Vec<Relaxation> = Vec::with_capacity(self.nodes.len());
        // kernel vectors shared by mean and variance nodes over the same inputs
        let mut kernel_cache: Vec<(usize, Vec<NodeId>, Vec<Relaxation>)> = Vec::new();
        for (id, e) in self.nodes.iter().enumerate() {
            let val = match e {
                Expr::Var(i) => Relaxation::variable(*i, bounds[*i], bounds[*i].clamp(point[*i]), n)?,
                Expr::Const(c) => Relaxation::constant(*c, n),
                Expr::Add(a, b) => v[*a].add(&v[*b]),
                Expr::Mul(a, b) => product(&v[*a], &v[*b]),
                Expr::Div(a, b) => {
                    let den = &v[*b];
                    if den.range.lo > 0.0 {
                        product(&v[*a], &den.compose(&RecipEnvelope::new(den.range)?)?)
                    } else if den.range.hi < 0.0 {
                        let pos = den.neg();
                        product(&v[*a], &pos.compose(&RecipEnvelope::new(pos.range)?)?).neg()
                    } else {
                        return Err(Error::IntervalDivisionByZero);
                    }
                }
                Expr::Neg(a) => v[*a].neg(),
                Expr::Lin { terms, constant } => linear_combination(terms.iter().map(|&(t, w)| (&v[t], w)), *constant, n),
                Expr::Sqr(a) => v[*a].compose(&SqrEnvelope::new(v[*a].range))?,
                Expr::Sqrt(a) => {
                    let dom = sqrt_domain(v[*a].range, id)?;
                    let arg = v[*a].clone().restrict(dom);
                    arg.compose(&SqrtEnvelope::new(arg.range)?)?
                }
                Expr::Exp(a) => v[*a].compose(&ExpEnvelope::new(v[*a].range))?,
                Expr::Kernel(k, a) => {
                    let d = v[*a].clone().restrict(Interval::raw(0.0, f64::INFINITY));
                    if use_envelopes {
                        d.compose(&kernel_env(*k, d.range)?)?
                    } else {
                        kernel_generic(*k, &d)?
                    }
                }
                Expr::Pdf(a) => {
                    if use_envelopes {
                        v[*a].compose(&pdf_env(v[*a].range)?)?
                    } else {
                        pdf_generic(&v[*a])?
                    }
                }
                Expr::Cdf(a) => v[*a].compose(&erf_cdf_env(v[*a].range)?)?,
                Expr::Ei { f_min, mu, sigma } => {
                    let s = v[*sigma].clone().restrict(Interval::raw(0.0, f64::INFINITY));
                    if use_envelopes {
                        EiRelaxation::new(*f_min, v[*mu].range, s.range)?.compose(&v[*mu], &s)?
                    } else {
                        ei_generic(*f_min, &v[*mu], &s)?
                    }
                }
                Expr::Pi { f_min, mu, sigma } => {
                    let s = v[*sigma].clone().restrict(Interval::raw(0.0, f64::INFINITY));
                    if use_envelopes {
                        PiRelaxation::new(*f_min, v[*mu].range, s.range)?.compose(&v[*mu], &s)?
                    } else {
                        pi_generic(*f_min, &v[*mu], &s)?
                    }
                }
                Expr::Lcb { kappa, mu, sigma } => lcb_relax(&v[*mu], &v[*sigma], *kappa),
                Expr::GpMean { model, inputs } | Expr::GpVar { model, inputs } => {
                    let m = &self.models[*model];
                    let pos = match kernel_cache.iter().position(|(mi, ins, _)| mi == model && ins == inputs) {
                        Some(p) => p,
                        None => {
                            let xi: Vec<Relaxation> = inputs.iter().map(|&i| v[i].clone()).collect();
                            let k = m.relax_kernels(&m.scale_relaxations(&xi), use_envelopes)?;
                            kernel_cache.push((*model, inputs.clone(), k));
                            kernel_cache.len() - 1
                        }
                    };
                    let k = &kernel_cache[pos].2;
                    if matches!(e, Expr::GpMean { .. }) {
                        m.relax_mean_from_kernels(k)
                    } else {
                        m.relax_variance_from_whitened(&m.relax_whitened(k))?
                    }
                }
            };
            v.push(val);
        }
        Ok(v)
    }
}

fn nonneg(i: Interval) -> Interval {
    Interval::raw(i.lo.max(0.0), i.hi.max(0.0))
}

fn sqrt_domain(i: Interval, id: NodeId) -> Result<Interval> {
    if i.hi < -SQRT_SLACK {
        return Err(Error::Domain(format!("square root of {i} at node {id}")));
    }
    Ok(nonneg(i))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Rs,
    Fs,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Rs => "RS",
            Formulation::Fs => "FS",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// Intermediate variable `var` defined by node `expr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Definition {
    pub var: usize,
    pub expr: NodeId,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub dag: Dag,
    pub n_vars: usize,
    /// Leading variables that are degrees of freedom.
    pub n_dof: usize,
    pub bounds: Vec<Interval>,
    pub objective: NodeId,
    pub inequalities: Vec<NodeId>,
    pub equalities: Vec<NodeId>,
    pub definitions: Vec<Definition>,
    pub formulation: Formulation,
    /// `node -> defined variable`, derived from `definitions`.
    def_index: Vec<Option<usize>>,
}

/// Exact evaluation of a problem at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub inequalities: Vec<f64>,
    pub equalities: Vec<f64>,
}

impl Evaluation {
    /// Largest constraint violation.
    pub fn violation(&self) -> f64 {
        let g = self.inequalities.iter().fold(0.0_f64, |m, v| m.max(*v));
        self.equalities.iter().fold(g, |m, v| m.max(v.abs()))
    }
}

/// Relaxations of a problem's functions over a box.
#[derive(Clone, Debug)]
pub struct RelaxedProblem {
    pub objective: Relaxation,
    pub inequalities: Vec<Relaxation>,
    pub equalities: Vec<Relaxation>,
}

impl Problem {
    /// Problem over degrees of freedom only.
    pub fn reduced(dag: Dag, bounds: Vec<Interval>, objective: NodeId, inequalities: Vec<NodeId>) -> Result<Self> {
        let n = bounds.len();
        Self::assemble(dag, n, n, bounds, objective, inequalities, vec![], vec![], Formulation::Rs)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        dag: Dag,
        n_vars: usize,
        n_dof: usize,
        bounds: Vec<Interval>,
        objective: NodeId,
        inequalities: Vec<NodeId>,
        equalities: Vec<NodeId>,
        definitions: Vec<Definition>,
        formulation: Formulation,
    ) -> Result<Self> {
        if bounds.len() != n_vars || n_dof > n_vars {
            return Err(Error::InvalidInput("bounds do not match the variable count".into()));
        }
        if bounds.iter().any(|b| !b.lo.is_finite() || !b.hi.is_finite()) {
            return Err(Error::InvalidInput("variable bounds must be finite".into()));
        }
        let len = dag.len();
        if objective >= len || inequalities.iter().chain(&equalities).any(|&i| i >= len) {
            return Err(Error::InvalidInput("problem refers to a missing node".into()));
        }
        for e in &dag.nodes {
            if let Expr::Var(i) = e {
                if *i >= n_vars {
                    return Err(Error::InvalidInput(format!("variable {i} out of range")));
                }
            }
        }
        let mut def_index = vec![None; len];
        for d in &definitions {
            def_index[d.expr] = Some(d.var);
        }
        Ok(Problem {
            dag,
            n_vars,
            n_dof,
            bounds,
            objective,
            inequalities,
            equalities,
            definitions,
            formulation,
            def_index,
        })
    }

    fn collect(&self, vals: &[f64]) -> Evaluation {
        Evaluation {
            objective: vals[self.objective],
            inequalities: self.inequalities.iter().map(|&i| vals[i]).collect(),
            equalities: self.equalities.iter().map(|&i| vals[i]).collect(),
        }
    }

    /// Exact evaluation at a full point.
    pub fn eval_point(&self, x: &[f64]) -> Result<Evaluation> {
        self.check_dim(x.len(), self.n_vars)?;
        Ok(self.collect(&self.dag.eval(x)?))
    }

    fn check_dim(&self, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::InvalidInput(format!("point has {got} entries, expected {want}")));
        }
        Ok(())
    }

    /// Full point whose intermediates follow from the degrees of freedom,
    /// and the evaluation there.
    pub fn lift(&self, dof: &[f64]) -> Result<(Vec<f64>, Evaluation)> {
        self.check_dim(dof.len(), self.n_dof)?;
        let mut x = vec![0.0; self.n_vars];
        x[..self.n_dof].copy_from_slice(dof);
        let vals = self.dag.eval_with(&mut x, &self.def_index)?;
        let ev = self.collect(&vals);
        Ok((x, ev))
    }

    /// Bounds of the intermediates tightened by forward propagation from
    /// the degree-of-freedom box.
    pub fn tighten(&self, bounds: &[Interval]) -> Result<Vec<Interval>> {
        let mut b = bounds.to_vec();
        if !self.definitions.is_empty() {
            self.dag.intervals_with(&mut b, &self.def_index)?;
        }
        Ok(b)
    }

    /// Interval enclosures of objective and constraints over a box.
    pub fn interval_bounds(&self, bounds: &[Interval]) -> Result<(Interval, Vec<Interval>, Vec<Interval>)> {
        let v = self.dag.intervals(bounds)?;
        Ok((
            v[self.objective],
            self.inequalities.iter().map(|&i| v[i]).collect(),
            self.equalities.iter().map(|&i| v[i]).collect(),
        ))
    }

    /// Relaxations of objective and constraints over `bounds` at `point`.
    pub fn relax_box(&self, bounds: &[Interval], point: &[f64], use_envelopes: bool) -> Result<RelaxedProblem> {
        self.check_dim(bounds.len(), self.n_vars)?;
        self.check_dim(point.len(), self.n_vars)?;
        let v = self.dag.relax(bounds, point, use_envelopes)?;
        Ok(RelaxedProblem {
            objective: v[self.objective].clone(),
            inequalities: self.inequalities.iter().map(|&i| v[i].clone()).collect(),
            equalities: self.equalities.iter().map(|&i| v[i].clone()).collect(),
        })
    }
}

fn signed(sense: Sense) -> f64 {
    match sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    }
}

/// Reduced-space posterior-mean optimization over the model's input box.
pub fn build_rs_mean(model: impl Into<Arc<GpModel>>, sense: Sense) -> Result<Problem> {
    let model = model.into();
    let bounds = model.input_bounds.clone();
    let mut dag = Dag::new();
    let m = dag.add_model(model);
    let xs: Vec<NodeId> = (0..bounds.len()).map(|i| dag.var(i)).collect();
    let mean = dag.gp_mean(m, xs);
    let obj = dag.lin(vec![(mean, signed(sense))], 0.0);
    Problem::reduced(dag, bounds, obj, vec![])
}

/// Full-space posterior-mean optimization. Variables, in order: inputs
/// `x`, scaled inputs, kernel vector `k`, whitened vector `v = L^{-1} k`,
/// the mean and the variance.
pub fn build_fs_mean(model: impl Into<Arc<GpModel>>, sense: Sense) -> Result<Problem> {
    let model: Arc<GpModel> = model.into();
    let (d, n) = (model.dim, model.n);
    let n_vars = 2 * d + 2 * n + 2;
    let xs_at = d;
    let k_at = 2 * d;
    let v_at = 2 * d + n;
    let mean_at = 2 * d + 2 * n;
    let var_at = mean_at + 1;

    let sf2 = model.sf2();
    let sf = sf2.sqrt();
    let s2 = model.output_std * model.output_std;
    let mut hints = vec![Interval::point(0.0); n_vars];
    hints[..d].copy_from_slice(&model.input_bounds);

    let mut dag = Dag::new();
    let mut defs = Vec::with_capacity(d + 2 * n + 2);
    let mut eqs = Vec::with_capacity(d + 2 * n + 2);
    let x: Vec<NodeId> = (0..d).map(|i| dag.var(i)).collect();

    let mut define = |dag: &mut Dag, var: usize, expr: NodeId| -> NodeId {
        defs.push(Definition { var, expr });
        let z = dag.var(var);
        eqs.push(dag.lin(vec![(z, 1.0), (expr, -1.0)], 0.0));
        z
    };

    let mut xs = Vec::with_capacity(d);
    for (j, b) in model.input_bounds.iter().enumerate() {
        let w = if b.width() > 0.0 { 1.0 / b.width() } else { 0.0 };
        let e = dag.lin(vec![(x[j], w)], -b.lo * w);
        hints[xs_at + j] = Interval::raw(0.0, 1.0);
        xs.push(define(&mut dag, xs_at + j, e));
    }

    let mut k = Vec::with_capacity(n);
    for (i, xi) in model.x_scaled.iter().enumerate() {
        let mut terms = Vec::with_capacity(d);
        for j in 0..d {
            let diff = dag.lin(vec![(xs[j], 1.0)], -xi[j]);
            terms.push((dag.sqr(diff), model.lambda_sq()[j]));
        }
        let dist = dag.lin(terms, 0.0);
        let kern = dag.kernel(model.kernel, dist);
        let e = dag.lin(vec![(kern, sf2)], 0.0);
        hints[k_at + i] = Interval::raw(0.0, sf2);
        k.push(define(&mut dag, k_at + i, e));
    }

    let mut v: Vec<NodeId> = Vec::with_capacity(n);
    for j in 0..n {
        let ljj = model.chol(j, j);
        let mut terms = vec![(k[j], 1.0 / ljj)];
        terms.extend((0..j).map(|l| (v[l], -model.chol(j, l) / ljj)));
        let e = dag.lin(terms, 0.0);
        hints[v_at + j] = Interval::raw(-sf, sf);
        v.push(define(&mut dag, v_at + j, e));
    }

    let mean_terms = k.iter().zip(&model.alpha).map(|(&ki, &a)| (ki, model.output_std * a)).collect();
    let mean_expr = dag.lin(mean_terms, model.output_mean);
    let mean_box = model.mean_interval(&model.input_bounds);
    hints[mean_at] = mean_box;
    let mean = define(&mut dag, mean_at, mean_expr);

    let sq: Vec<(NodeId, f64)> = v.iter().map(|&vj| (dag.sqr(vj), -s2)).collect();
    let var_expr = dag.lin(sq, s2 * sf2);
    hints[var_at] = Interval::raw(0.0, s2 * sf2);
    define(&mut dag, var_at, var_expr);

    let obj = dag.lin(vec![(mean, signed(sense))], 0.0);
    let mut p = Problem::assemble(dag, n_vars, d, hints, obj, vec![], eqs, defs, Formulation::Fs)?;
    p.bounds = p.tighten(&p.bounds)?;
    Ok(p)
}

fn same_inputs(a: &GpModel, b: &GpModel) -> Result<()> {
    if a.dim != b.dim || a.input_bounds != b.input_bounds {
        return Err(Error::InvalidInput("models must share input dimension and bounds".into()));
    }
    Ok(())
}

/// Maximize the objective model's mean subject to
/// `mean_con + z * sqrt(var_con) <= c`.
pub fn build_chance_constrained(
    obj_model: impl Into<Arc<GpModel>>,
    con_model: impl Into<Arc<GpModel>>,
    c: f64,
    z: f64,
) -> Result<Problem> {
    let (om, cm) = (obj_model.into(), con_model.into());
    same_inputs(&om, &cm)?;
    if !c.is_finite() || !z.is_finite() {
        return Err(Error::InvalidInput("chance-constraint parameters must be finite".into()));
    }
    let bounds = om.input_bounds.clone();
    let mut dag = Dag::new();
    let (o, cidx) = (dag.add_model(om), dag.add_model(cm));
    let xs: Vec<NodeId> = (0..bounds.len()).map(|i| dag.var(i)).collect();
    let obj_mean = dag.gp_mean(o, xs.clone());
    let obj = dag.lin(vec![(obj_mean, -1.0)], 0.0);
    let m = dag.gp_mean(cidx, xs.clone());
    let var = dag.gp_var(cidx, xs);
    let sd = dag.sqrt(var);
    let g = dag.lin(vec![(m, 1.0), (sd, z)], -c);
    Problem::reduced(dag, bounds, obj, vec![g])
}

/// Acquisition optimization: minimizes `-EI`, `-PI` or `LCB`.
pub fn build_acquisition(model: impl Into<Arc<GpModel>>, spec: &AcquisitionSpec) -> Result<Problem> {
    let model = model.into();
    let bounds = model.input_bounds.clone();
    let mut dag = Dag::new();
    let m = dag.add_model(model);
    let xs: Vec<NodeId> = (0..bounds.len()).map(|i| dag.var(i)).collect();
    let mu = dag.gp_mean(m, xs.clone());
    let var = dag.gp_var(m, xs);
    let sigma = dag.sqrt(var);
    let acq = dag.acquisition(spec, mu, sigma);
    let sign = if spec.kind == AcquisitionKind::Lcb { 1.0 } else { -1.0 };
    let obj = dag.lin(vec![(acq, sign)], 0.0);
    Problem::reduced(dag, bounds, obj, vec![])
}
