//! Monte Carlo checks of the probabilistic estimates behind the
//! high-dimensional synchronization result: adjacency-norm concentration,
//! degree deviations, and the coupled Erdős–Rényi sandwich.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{laplacian_quadratic, subgraph_of, Graph, GraphBuilder};
use crate::models::{model_registry, sample_er_with_diagonal, ModelParams};
use crate::registry::{Named, Registry};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{spectral_norm, DeltaA, NormOptions};

/// Default constant K in `||A - EA|| <= K sqrt(np)`.
pub const DEFAULT_K: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSample {
    pub trial: usize,
    pub seed: u64,
    pub statistic: String,
    /// The normalized statistic compared against `bound`.
    pub observed: f64,
    /// The unnormalized quantity (a norm, a deviation, a mean gap).
    pub raw: f64,
    pub bound: f64,
    pub bound_satisfied: bool,
    pub formula: String,
    pub warning: Option<String>,
}

pub const SAMPLE_CSV_HEADER: &str = "trial,seed,statistic,observed,raw,bound,bound_satisfied,formula,warning";

impl ConcentrationSample {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.seed,
            self.statistic,
            self.observed,
            self.raw,
            self.bound,
            self.bound_satisfied,
            csv_field(&self.formula),
            csv_field(self.warning.as_deref().unwrap_or("")),
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_samples_csv<W: Write>(samples: &[ConcentrationSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SAMPLE_CSV_HEADER}")?;
    for s in samples {
        writeln!(out, "{}", s.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonParams {
    pub n: usize,
    pub p: f64,
    pub d: usize,
    pub c_eps: f64,
    pub c_d: f64,
    pub epsilon: f64,
    /// `epsilon >= c_eps sqrt((np + ln n) ln^4 n / d)`.
    pub side_inequality_holds: bool,
    /// `epsilon >= 1`, where the coupled models degenerate.
    pub vacuous: bool,
}

/// `epsilon = max(c_eps / sqrt(c_d), 6) sqrt(2 / (np))`.
pub fn epsilon_of(n: usize, p: f64, d: usize, c_eps: f64, c_d: f64) -> Result<EpsilonParams> {
    let np = n as f64 * p;
    if !(np > 0.0 && np.is_finite()) {
        return Err(invalid(format!("np must be positive, got {np}")));
    }
    if c_d.is_nan() || c_d <= 0.0 || !c_eps.is_finite() {
        return Err(invalid("C_d must be positive and C_eps finite"));
    }
    if d == 0 {
        return Err(invalid("d must be positive"));
    }
    let epsilon = (c_eps / c_d.sqrt()).max(6.0) * (2.0 / np).sqrt();
    let ln_n = (n as f64).ln();
    let rhs = c_eps * ((np + ln_n) * ln_n.powi(4) / d as f64).sqrt();
    Ok(EpsilonParams { n, p, d, c_eps, c_d, epsilon, side_inequality_holds: epsilon >= rhs, vacuous: epsilon >= 1.0 })
}

/// Per trial: a G(n, p) graph with Bernoulli(p) diagonal, so E A = pJ, and
/// the ratio `||A - pJ|| / sqrt(np)` compared against `k`.
pub fn adjacency_concentration(n: usize, p: f64, trials: usize, k: f64, seed: u64) -> Result<Vec<ConcentrationSample>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("p must lie in (0, 1], got {p}")));
    }
    let np = n as f64 * p;
    let warning = (np <= (n as f64).ln()).then(|| format!("np = {np} <= ln n: outside the regime np > ln n"));
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_seed(seed, &[trial as u64]);
            let mut rng = rng_from_seed(trial_seed);
            let g = sample_er_with_diagonal(n, p, &mut rng)?;
            let norm = spectral_norm(&DeltaA::new(&g, p)?, &NormOptions::default(), &mut rng)?.value;
            let ratio = norm / np.sqrt();
            Ok(ConcentrationSample {
                trial,
                seed: trial_seed,
                statistic: "adjacency_norm_ratio".into(),
                observed: ratio,
                raw: norm,
                bound: k,
                bound_satisfied: ratio <= k,
                formula: format!("||A - pJ|| / sqrt(np) <= K, K = {k}"),
                warning: warning.clone(),
            })
        })
        .collect()
}

/// `max_i |deg_i - np|` against `sqrt(np) ln n`.
pub fn degree_concentration(g: &Graph, p: f64) -> Result<ConcentrationSample> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p must lie in [0, 1], got {p}")));
    }
    let n = g.n();
    if n < 2 {
        return Err(invalid("degree concentration needs n >= 2"));
    }
    let np = n as f64 * p;
    let deviation = g.degrees().iter().map(|&d| (d as f64 - np).abs()).fold(0.0, f64::max);
    let bound = np.sqrt() * (n as f64).ln();
    Ok(ConcentrationSample {
        trial: 0,
        seed: 0,
        statistic: "max_degree_deviation".into(),
        observed: deviation,
        raw: deviation,
        bound,
        bound_satisfied: deviation <= bound,
        formula: "max_i |deg_i - np| <= sqrt(np) ln n".into(),
        warning: None,
    })
}

/// Coupled pair `G(n, p(1 - eps)) ⊆ G(n, p(1 + eps))` driven by one uniform per pair.
pub fn sample_coupled_er<R: Rng + ?Sized>(n: usize, p: f64, eps: f64, rng: &mut R) -> Result<(Graph, Graph)> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&eps) || p * (1.0 + eps) > 1.0 {
        return Err(invalid(format!("need p, eps in [0, 1] and p(1 + eps) <= 1, got p = {p}, eps = {eps}")));
    }
    let (lo, hi) = (p * (1.0 - eps), p * (1.0 + eps));
    let mut minus = GraphBuilder::new(n, false);
    let mut plus = GraphBuilder::new(n, false);
    for i in 0..n {
        for j in i + 1..n {
            let u: f64 = rng.random();
            if u < hi {
                plus.add_edge(i, j);
                if u < lo {
                    minus.add_edge(i, j);
                }
            }
        }
    }
    Ok((minus.build(), plus.build()))
}

/// Checks `v'L⁻v <= v'Lv <= v'L⁺v` on `num_vectors` Gaussian vectors, with a
/// relative slack of 1e-12 for summation rounding.
pub fn sandwich_quadratic_check<R: Rng + ?Sized>(
    g_minus: &Graph,
    g: &Graph,
    g_plus: &Graph,
    num_vectors: usize,
    rng: &mut R,
) -> Result<bool> {
    if !subgraph_of(g_minus, g)? || !subgraph_of(g, g_plus)? {
        return Err(Error::Precondition("graphs are not nested g_minus ⊆ g ⊆ g_plus".into()));
    }
    let slack = |q: f64| 1e-12 * (1.0 + q.abs());
    for _ in 0..num_vectors {
        let v: Vec<f64> = (0..g.n()).map(|_| rng.sample(StandardNormal)).collect();
        let q_minus = laplacian_quadratic(g_minus, &v)?;
        let q = laplacian_quadratic(g, &v)?;
        let q_plus = laplacian_quadratic(g_plus, &v)?;
        if q_minus > q + slack(q) || q > q_plus + slack(q_plus) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `G⁻` plus each edge of `G⁺ \ G⁻` independently with probability 1/2.
pub fn intermediate_graph<R: Rng + ?Sized>(g_minus: &Graph, g_plus: &Graph, rng: &mut R) -> Result<Graph> {
    if !subgraph_of(g_minus, g_plus)? {
        return Err(Error::Precondition("g_minus is not a subgraph of g_plus".into()));
    }
    let mut b = GraphBuilder::new(g_plus.n(), false);
    for (i, j) in g_plus.edges() {
        if g_minus.has_edge(i, j) || rng.random::<bool>() {
            b.add_edge(i, j);
        }
    }
    Ok(b.build())
}

/// Inputs shared by every concentration check; each check reads what it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationParams {
    pub n: usize,
    pub p: f64,
    pub d: Option<usize>,
    pub trials: usize,
    /// Graph model for the degree check.
    pub model: String,
    pub k: f64,
    pub eps: f64,
    pub num_vectors: usize,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        Self { n: 2000, p: 0.1, d: None, trials: 10, model: "er".into(), k: DEFAULT_K, eps: 0.25, num_vectors: 100 }
    }
}

pub trait ConcentrationCheck: Named + Send + Sync {
    fn run(&self, params: &ConcentrationParams, seed: u64) -> Result<Vec<ConcentrationSample>>;
}

pub struct AdjacencyCheck;

impl Named for AdjacencyCheck {
    fn name(&self) -> &'static str {
        "adjacency"
    }
}

impl ConcentrationCheck for AdjacencyCheck {
    fn run(&self, params: &ConcentrationParams, seed: u64) -> Result<Vec<ConcentrationSample>> {
        adjacency_concentration(params.n, params.p, params.trials, params.k, seed)
    }
}

pub struct DegreeCheck;

impl Named for DegreeCheck {
    fn name(&self) -> &'static str {
        "degree"
    }
}

impl ConcentrationCheck for DegreeCheck {
    fn run(&self, params: &ConcentrationParams, seed: u64) -> Result<Vec<ConcentrationSample>> {
        let registry = model_registry();
        let model = registry.get(&params.model)?;
        let model_params = ModelParams { n: params.n, p: params.p, d: params.d };
        (0..params.trials)
            .into_par_iter()
            .map(|trial| {
                let trial_seed = derive_seed(seed, &[trial as u64]);
                let sampled = model.sample(&model_params, trial_seed)?;
                let mut s = degree_concentration(&sampled.graph, params.p)?;
                s.trial = trial;
                s.seed = trial_seed;
                Ok(s)
            })
            .collect()
    }
}

pub struct CoupledCheck;

impl Named for CoupledCheck {
    fn name(&self) -> &'static str {
        "coupled"
    }
}

impl ConcentrationCheck for CoupledCheck {
    /// `bound_satisfied` is the sandwich outcome; `observed` is the mean
    /// degree gap, reported next to its reference value `2 p eps n`.
    fn run(&self, params: &ConcentrationParams, seed: u64) -> Result<Vec<ConcentrationSample>> {
        let (n, p, eps) = (params.n, params.p, params.eps);
        (0..params.trials)
            .into_par_iter()
            .map(|trial| {
                let trial_seed = derive_seed(seed, &[trial as u64]);
                let mut rng = rng_from_seed(trial_seed);
                let (minus, plus) = sample_coupled_er(n, p, eps, &mut rng)?;
                let middle = intermediate_graph(&minus, &plus, &mut rng)?;
                let ok = sandwich_quadratic_check(&minus, &middle, &plus, params.num_vectors, &mut rng)?;
                let gap = mean_degree_gap(&minus, &plus);
                Ok(ConcentrationSample {
                    trial,
                    seed: trial_seed,
                    statistic: "coupled_sandwich".into(),
                    observed: gap,
                    raw: gap,
                    bound: 2.0 * p * eps * n as f64,
                    bound_satisfied: ok,
                    formula: format!(
                        "v'L-v <= v'Lv <= v'L+v on {} Gaussian vectors; observed = mean(deg+ - deg-), bound = 2 p eps n",
                        params.num_vectors
                    ),
                    warning: None,
                })
            })
            .collect()
    }
}

pub fn mean_degree_gap(minus: &Graph, plus: &Graph) -> f64 {
    let total: usize = plus.degrees().iter().zip(minus.degrees()).map(|(a, b)| a - b).sum();
    total as f64 / plus.n().max(1) as f64
}

pub fn concentration_registry() -> Registry<dyn ConcentrationCheck> {
    let mut reg: Registry<dyn ConcentrationCheck> = Registry::new("concentration check");
    reg.register(Box::new(AdjacencyCheck)).register(Box::new(DegreeCheck)).register(Box::new(CoupledCheck));
    reg
}
