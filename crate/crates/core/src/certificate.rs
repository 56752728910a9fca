//! Three-condition spectral certificate for global synchronization of the
//! homogeneous Kuramoto model.
//!
//! With Delta_A = A - p0 J and Delta_L = L + p0 J - n p0 I, the graph is
//! certified when
//!
//! 1. ||Delta_A|| / (n p0) < 1/12,
//! 2. ||Delta_L|| / (n p0) < 1/4,
//! 3. (pi/4) / asin(12 ||Delta_A|| / (n p0)) > log(n/6) / log(n p0 / (2 ||Delta_L||) - 1) + 1.
//!
//! A failed certificate is reported as `inconclusive`: it says nothing about
//! whether the graph synchronizes.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::rng::rng_from_seed;
use crate::spectral::{
    estimator_registry, DeltaA, DeltaL, NormEstimate, NormOptions, SymmetricOperator, DEFAULT_ESTIMATOR,
};

pub const COND1_BOUND: f64 = 1.0 / 12.0;
pub const COND2_BOUND: f64 = 1.0 / 4.0;

/// Norms below this multiple of n p0 are indistinguishable from rounding in
/// the matrix-free products and are treated as exactly zero.
pub const ZERO_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelfLoopConvention {
    /// Zero diagonal.
    Simple,
    /// Every diagonal entry of A set to one.
    Loops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sentinel {
    /// Left side of condition 3 when asin's argument is 0.
    Inf,
    /// Left side of condition 3 when asin's argument exceeds 1.
    Undefined,
    /// Right side of condition 3 when log(n p0 / (2 ||Delta_L||) - 1) <= 0.
    DenominatorNonpositive,
}

/// One side of condition 3: a number or a named sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cond3Value {
    Value(f64),
    Sentinel(Sentinel),
}

impl Cond3Value {
    /// Numeric view used for margins: `inf` is +infinity, other sentinels are NaN.
    pub fn as_f64(self) -> f64 {
        match self {
            Cond3Value::Value(v) => v,
            Cond3Value::Sentinel(Sentinel::Inf) => f64::INFINITY,
            Cond3Value::Sentinel(_) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub n: usize,
    pub p0: f64,
    pub norm_delta_a: f64,
    pub norm_delta_l: f64,
    pub ratio_a: f64,
    pub ratio_l: f64,
    pub cond1: bool,
    pub cond2: bool,
    pub cond3: bool,
    pub cond3_lhs: Cond3Value,
    pub cond3_rhs: Cond3Value,
    pub verdict: Verdict,
    pub selfloop_convention: SelfLoopConvention,
    pub norm_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateOptions {
    pub tol: f64,
    /// Evaluate with every diagonal entry of A set to one.
    pub selfloops: bool,
    /// Registry name of the norm estimator.
    pub estimator: String,
    /// Seed of the estimator's random start vector.
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { tol: 1e-6, selfloops: false, estimator: DEFAULT_ESTIMATOR.to_string(), seed: 0 }
    }
}

/// A norm value together with whether the estimator converged. An
/// unconverged value is only a lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredNorm {
    pub value: f64,
    pub converged: bool,
}

impl MeasuredNorm {
    pub fn exact(value: f64) -> Self {
        Self { value, converged: true }
    }
}

impl CertificateReport {
    /// Evaluates the three conditions from already-computed norms.
    pub fn from_norms(
        n: usize,
        p0: f64,
        norm_a: MeasuredNorm,
        norm_l: MeasuredNorm,
        convention: SelfLoopConvention,
        norm_tolerance: f64,
    ) -> Result<Self> {
        validate(n, p0)?;
        let np0 = n as f64 * p0;
        let snap = |v: f64| if v <= ZERO_NORM_FLOOR * np0 { 0.0 } else { v };
        let norm_delta_a = snap(norm_a.value);
        let norm_delta_l = snap(norm_l.value);
        let ratio_a = norm_delta_a / np0;
        let ratio_l = norm_delta_l / np0;

        // A lower bound can refute a condition but never establish one.
        let cond1 = norm_a.converged && ratio_a < COND1_BOUND;
        let cond2 = norm_l.converged && ratio_l < COND2_BOUND;

        let arg = 12.0 * ratio_a;
        let cond3_lhs = if arg == 0.0 {
            Cond3Value::Sentinel(Sentinel::Inf)
        } else if arg > 1.0 {
            Cond3Value::Sentinel(Sentinel::Undefined)
        } else {
            Cond3Value::Value(FRAC_PI_4 / arg.asin())
        };
        let cond3_rhs = if norm_delta_l == 0.0 {
            Cond3Value::Value(1.0)
        } else {
            let inner = np0 / (2.0 * norm_delta_l) - 1.0;
            if inner <= 1.0 {
                Cond3Value::Sentinel(Sentinel::DenominatorNonpositive)
            } else {
                Cond3Value::Value((n as f64 / 6.0).ln() / inner.ln() + 1.0)
            }
        };
        let cond3 = norm_a.converged
            && norm_l.converged
            && arg < 1.0
            && match (cond3_lhs, cond3_rhs) {
                (Cond3Value::Sentinel(Sentinel::Inf), Cond3Value::Value(_)) => true,
                (Cond3Value::Value(l), Cond3Value::Value(r)) => l > r,
                _ => false,
            };
        let verdict = if cond1 && cond2 && cond3 { Verdict::Certified } else { Verdict::Inconclusive };
        Ok(Self {
            n,
            p0,
            norm_delta_a,
            norm_delta_l,
            ratio_a,
            ratio_l,
            cond1,
            cond2,
            cond3,
            cond3_lhs,
            cond3_rhs,
            verdict,
            selfloop_convention: convention,
            norm_tolerance,
        })
    }

    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn validate(n: usize, p0: f64) -> Result<()> {
    if n <= 6 {
        return Err(invalid(format!("certificate needs n >= 7 so that log(n/6) > 0 (got n = {n})")));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(invalid(format!("reference density p0 = {p0} not in (0, 1]")));
    }
    Ok(())
}

fn measure(op: &dyn SymmetricOperator, opts: &CertificateOptions, stream: u64) -> Result<MeasuredNorm> {
    let registry = estimator_registry();
    let estimator = registry.get(&opts.estimator)?;
    let mut rng = rng_from_seed(crate::rng::derive_seed(opts.seed, &[stream]));
    match estimator.estimate(op, &NormOptions::with_tol(opts.tol), &mut rng) {
        Ok(NormEstimate { value, .. }) => Ok(MeasuredNorm { value, converged: true }),
        Err(Error::ConvergenceFailure { lower_bound, .. }) => Ok(MeasuredNorm { value: lower_bound, converged: false }),
        Err(e) => Err(e),
    }
}

pub fn check_certificate_with(g: &Graph, p0: f64, opts: &CertificateOptions) -> Result<CertificateReport> {
    validate(g.n(), p0)?;
    let looped;
    let graph = if opts.selfloops && !g.self_loops() {
        looped = g.with_self_loops();
        &looped
    } else {
        g
    };
    let convention = if graph.self_loops() { SelfLoopConvention::Loops } else { SelfLoopConvention::Simple };
    let norm_a = measure(&DeltaA::new(graph, p0)?, opts, 0)?;
    let norm_l = measure(&DeltaL::new(graph, p0)?, opts, 1)?;
    CertificateReport::from_norms(g.n(), p0, norm_a, norm_l, convention, opts.tol)
}

/// Certificate with the default estimator and seed.
pub fn check_certificate(g: &Graph, p0: f64, tol: f64) -> Result<CertificateReport> {
    check_certificate_with(g, p0, &CertificateOptions { tol, ..Default::default() })
}

/// Smallest signed slack over the three conditions; negative iff inconclusive
/// (up to ties at exactly zero slack).
pub fn certificate_margin(report: &CertificateReport) -> f64 {
    let slack3 = match (report.cond3_lhs, report.cond3_rhs) {
        (l, Cond3Value::Value(r)) if !l.as_f64().is_nan() => l.as_f64() - r,
        _ => f64::NEG_INFINITY,
    };
    (COND1_BOUND - report.ratio_a).min(COND2_BOUND - report.ratio_l).min(slack3)
}
