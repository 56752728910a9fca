//! Random graph models: Erdős–Rényi G(n, p) and the spherical random
//! geometric graph G(n, p, d), each available as a named [`GraphModel`].

use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::{Graph, GraphBuilder};
use crate::registry::{Named, Registry};
use crate::rng::rng_from_seed;
use crate::sphere::{sample_sphere_points, threshold, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Er,
    Rgg,
    File,
}

/// Where a graph came from; written next to sampled graph files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphProvenance {
    pub model: ModelKind,
    /// Registry name of the sampler that produced the graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    pub n: usize,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl GraphProvenance {
    pub fn file(n: usize) -> Self {
        Self { model: ModelKind::File, sampler: None, n, p: None, d: None, seed: None, threshold: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model == ModelKind::Rgg && !self.d.is_some_and(|d| d >= 2) {
            return Err(invalid("RGG provenance requires d >= 2"));
        }
        Ok(())
    }
}

/// Parameters shared by every model; `d` is ignored by G(n, p).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub p: f64,
    pub d: Option<usize>,
}

pub struct SampledGraph {
    pub graph: Graph,
    pub provenance: GraphProvenance,
    pub cloud: Option<PointCloud>,
}

/// A random graph model that can be sampled deterministically from a seed.
pub trait GraphModel: Named + Send + Sync {
    fn kind(&self) -> ModelKind;
    fn sample(&self, params: &ModelParams, seed: u64) -> Result<SampledGraph>;
}

pub fn sample_er<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    check_er(n, p)?;
    let mut b = GraphBuilder::new(n, false);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                b.add_edge(i, j);
            }
        }
    }
    Ok(b.build())
}

/// G(n, p) whose diagonal entries are also i.i.d. Bernoulli(p), so that
/// E[A] = pJ exactly.
pub fn sample_er_with_diagonal<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    check_er(n, p)?;
    let mut b = GraphBuilder::new(n, true);
    for i in 0..n {
        for j in i..n {
            if rng.random::<f64>() < p {
                b.add_edge(i, j);
            }
        }
    }
    Ok(b.build())
}

fn check_er(n: usize, p: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p = {p} not in [0, 1]")));
    }
    Ok(())
}

fn check_rgg(n: usize, p: f64, d: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p = {p} not in (0, 1)")));
    }
    if d < 2 {
        return Err(invalid(format!("d = {d} must be >= 2")));
    }
    Ok(())
}

fn graph_from_gram(gram: &Array2<f64>, t: f64) -> Graph {
    let n = gram.nrows();
    let mut b = GraphBuilder::new(n, false);
    for i in 0..n {
        for j in i + 1..n {
            if gram[[i, j]] >= t {
                b.add_edge(i, j);
            }
        }
    }
    b.build()
}

/// G(n, p, d): edge {i, j} iff <X_i, X_j> >= t_{p,d}. Returns the latent cloud.
pub fn sample_rgg<R: Rng + ?Sized>(n: usize, p: f64, d: usize, rng: &mut R) -> Result<(Graph, PointCloud)> {
    check_rgg(n, p, d)?;
    let t = threshold(p, d)?.t;
    let cloud = sample_sphere_points(n, d, rng)?;
    let graph = graph_from_gram(&cloud.gram(), t);
    Ok((graph, cloud))
}

/// G(n, p, d) sampled through its Gram matrix instead of explicit points.
///
/// For X an n x d standard Gaussian matrix (d >= n), X X^T = L L^T with L
/// lower triangular, L_ii ~ chi_{d-i} and N(0, 1) entries below the
/// diagonal (Bartlett). Normalizing the rows of L gives n unit vectors in
/// R^n with exactly the joint law of the Gram matrix of n uniform points on
/// S^{d-1}. Cost is O(n^3) rather than O(n^2 d). Falls back to explicit
/// points when d < n.
pub fn sample_rgg_gram<R: Rng + ?Sized>(n: usize, p: f64, d: usize, rng: &mut R) -> Result<Graph> {
    check_rgg(n, p, d)?;
    if d < n {
        return Ok(sample_rgg(n, p, d, rng)?.0);
    }
    let t = threshold(p, d)?.t;
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let chi2 = ChiSquared::new((d - i) as f64).map_err(|e| invalid(e.to_string()))?;
        l[[i, i]] = chi2.sample(rng).sqrt();
        for j in 0..i {
            l[[i, j]] = rng.sample(StandardNormal);
        }
        let mut row = l.row_mut(i);
        let inv = 1.0 / row.dot(&row).sqrt();
        row.mapv_inplace(|x| x * inv);
    }
    let gram = l.dot(&l.t());
    Ok(graph_from_gram(&gram, t))
}

pub struct ErdosRenyi;

impl Named for ErdosRenyi {
    fn name(&self) -> &'static str {
        "er"
    }
}

impl GraphModel for ErdosRenyi {
    fn kind(&self) -> ModelKind {
        ModelKind::Er
    }

    fn sample(&self, params: &ModelParams, seed: u64) -> Result<SampledGraph> {
        let graph = sample_er(params.n, params.p, &mut rng_from_seed(seed))?;
        Ok(SampledGraph {
            graph,
            provenance: GraphProvenance {
                model: ModelKind::Er,
                sampler: Some(self.name().into()),
                n: params.n,
                p: Some(params.p),
                d: None,
                seed: Some(seed),
                threshold: None,
            },
            cloud: None,
        })
    }
}

fn rgg_provenance(name: &str, params: &ModelParams, d: usize, seed: u64) -> Result<GraphProvenance> {
    Ok(GraphProvenance {
        model: ModelKind::Rgg,
        sampler: Some(name.into()),
        n: params.n,
        p: Some(params.p),
        d: Some(d),
        seed: Some(seed),
        threshold: Some(threshold(params.p, d)?.t),
    })
}

fn require_d(params: &ModelParams) -> Result<usize> {
    params.d.ok_or_else(|| invalid("random geometric graph needs a dimension d"))
}

/// Spherical RGG from explicit latent points.
pub struct SphereRgg;

impl Named for SphereRgg {
    fn name(&self) -> &'static str {
        "rgg"
    }
}

impl GraphModel for SphereRgg {
    fn kind(&self) -> ModelKind {
        ModelKind::Rgg
    }

    fn sample(&self, params: &ModelParams, seed: u64) -> Result<SampledGraph> {
        let d = require_d(params)?;
        let (graph, cloud) = sample_rgg(params.n, params.p, d, &mut rng_from_seed(seed))?;
        Ok(SampledGraph { graph, provenance: rgg_provenance(self.name(), params, d, seed)?, cloud: Some(cloud) })
    }
}

/// Spherical RGG through the Bartlett-sampled Gram matrix (fast when d >> n).
pub struct SphereRggGram;

impl Named for SphereRggGram {
    fn name(&self) -> &'static str {
        "rgg-gram"
    }
}

impl GraphModel for SphereRggGram {
    fn kind(&self) -> ModelKind {
        ModelKind::Rgg
    }

    fn sample(&self, params: &ModelParams, seed: u64) -> Result<SampledGraph> {
        let d = require_d(params)?;
        let graph = sample_rgg_gram(params.n, params.p, d, &mut rng_from_seed(seed))?;
        Ok(SampledGraph { graph, provenance: rgg_provenance(self.name(), params, d, seed)?, cloud: None })
    }
}

pub fn model_registry() -> Registry<dyn GraphModel> {
    let mut reg: Registry<dyn GraphModel> = Registry::new("graph model");
    reg.register(Box::new(ErdosRenyi)).register(Box::new(SphereRgg)).register(Box::new(SphereRggGram));
    reg
}
