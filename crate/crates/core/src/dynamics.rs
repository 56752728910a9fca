//! Homogeneous Kuramoto model as a gradient flow.
//!
//! Energy E(theta) = sum over ordered pairs of a_ij (1 - cos(theta_i - theta_j)),
//! so each edge counts twice and dE/dtheta_i = 2 sum_j a_ij sin(theta_i - theta_j).
//! The flow is theta' = -grad E. The usual K/n coupling prefactor only rescales
//! time, which leaves equilibria and basins unchanged.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::graph::Graph;
use crate::rng::stream;

/// Gradient infinity-norm below which a state counts as stationary.
pub const STATIONARY_TOL: f64 = 1e-8;
/// `1 - |rho_1|` below which a stationary state counts as synchronized.
pub const SYNC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    /// Unwrapped phases in radians.
    pub theta: Vec<f64>,
    /// Elapsed flow time.
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowStatus {
    Synchronized,
    Spurious,
    Nonconverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equilibrium {
    Synchronized,
    Spurious,
    Nonstationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub energy: f64,
    pub rho1_abs: f64,
    pub grad_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub final_state: PhaseState,
    pub status: FlowStatus,
    pub steps: usize,
    pub final_energy: f64,
    pub final_grad_inf_norm: f64,
    pub final_rho1_abs: f64,
    pub trajectory: Option<Vec<TrajectorySample>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    /// Fixed step; `None` means `step_scale / (1 + max degree)`.
    pub step: Option<f64>,
    pub step_scale: f64,
    pub t_max: f64,
    pub stop_grad_tol: f64,
    /// Allowed energy increase per accepted step.
    pub energy_slack: f64,
    pub max_halvings: u32,
    /// Record a trajectory sample every this many accepted steps.
    pub record_every: Option<usize>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: None,
            step_scale: 0.01,
            t_max: 1e4,
            stop_grad_tol: STATIONARY_TOL,
            energy_slack: 1e-9,
            max_halvings: 40,
            record_every: None,
        }
    }
}

impl IntegratorConfig {
    pub fn step_for(&self, g: &Graph) -> f64 {
        self.step.unwrap_or_else(|| self.step_scale / (1.0 + g.max_degree() as f64))
    }
}

pub fn energy(g: &Graph, theta: &[f64]) -> Result<f64> {
    check_len(g.n(), theta.len())?;
    Ok(energy_unchecked(g, theta))
}

fn energy_unchecked(g: &Graph, theta: &[f64]) -> f64 {
    Workspace::new(g).energy(theta)
}

/// Scratch buffers plus a CSR copy of the adjacency, built once per flow.
struct Workspace {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    edges: Vec<(u32, u32)>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Workspace {
    /// 1 - cos x = 2 sin^2(x / 2), with sin((a - b) / 2) expanded through
    /// half-angle values so each edge costs two products; two ordered pairs per edge.
    fn energy(&mut self, theta: &[f64]) -> f64 {
        for ((c, s), &th) in self.cos.iter_mut().zip(self.sin.iter_mut()).zip(theta) {
            let (si, co) = (0.5 * th).sin_cos();
            *c = co;
            *s = si;
        }
        4.0 * self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (i, j) = (i as usize, j as usize);
                let s = self.sin[i] * self.cos[j] - self.cos[i] * self.sin[j];
                s * s
            })
            .sum::<f64>()
    }

    fn new(g: &Graph) -> Self {
        let n = g.n();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for i in 0..n {
            targets.extend(g.neighbors(i).map(|j| j as u32));
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            edges: g.edges().map(|(i, j)| (i as u32, j as u32)).collect(),
            cos: vec![0.0; n],
            sin: vec![0.0; n],
        }
    }

    /// sum_j a_ij sin(theta_i - theta_j) = sin(theta_i) (A cos)_i - cos(theta_i) (A sin)_i
    fn grad_into(&mut self, theta: &[f64], out: &mut [f64]) {
        for ((c, s), &th) in self.cos.iter_mut().zip(self.sin.iter_mut()).zip(theta) {
            let (si, co) = th.sin_cos();
            *c = co;
            *s = si;
        }
        for (i, (o, bounds)) in out.iter_mut().zip(self.offsets.windows(2)).enumerate() {
            let (mut ac, mut as_) = (0.0, 0.0);
            for &j in &self.targets[bounds[0]..bounds[1]] {
                ac += self.cos[j as usize];
                as_ += self.sin[j as usize];
            }
            *o = 2.0 * (self.sin[i] * ac - self.cos[i] * as_);
        }
    }
}

pub fn grad(g: &Graph, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(g.n(), theta.len())?;
    let mut out = vec![0.0; theta.len()];
    Workspace::new(g).grad_into(theta, &mut out);
    Ok(out)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// rho_k = (1/n) sum_j exp(i k theta_j).
pub fn order_parameter(theta: &[f64], k: u32) -> Result<Complex64> {
    if theta.is_empty() {
        return Err(invalid("order parameter of an empty phase vector"));
    }
    let k = f64::from(k);
    let sum: Complex64 = theta.iter().map(|&th| Complex64::from_polar(1.0, k * th)).sum();
    Ok(sum / theta.len() as f64)
}

pub fn classify_equilibrium(g: &Graph, theta: &[f64]) -> Result<Equilibrium> {
    let gr = grad(g, theta)?;
    if inf_norm(&gr) >= STATIONARY_TOL {
        return Ok(Equilibrium::Nonstationary);
    }
    Ok(if 1.0 - order_parameter(theta, 1)?.norm() < SYNC_TOL {
        Equilibrium::Synchronized
    } else {
        Equilibrium::Spurious
    })
}

/// I.i.d. uniform phases on [0, 2 pi).
pub fn random_phases<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// theta_j = 2 pi q j / n, a stationary point on the cycle C_n.
pub fn twisted_state(n: usize, q: i64) -> Vec<f64> {
    (0..n).map(|j| TAU * q as f64 * j as f64 / n as f64).collect()
}

/// Classical RK4 on theta' = -grad E with energy-guarded step halving.
pub fn integrate(g: &Graph, theta0: &[f64], cfg: &IntegratorConfig) -> Result<FlowResult> {
    check_len(g.n(), theta0.len())?;
    let n = g.n();
    let mut h = cfg.step_for(g);
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("step size {h} must be positive")));
    }
    if n == 0 {
        return Err(invalid("cannot integrate an empty graph"));
    }

    let mut ws = Workspace::new(g);
    let mut theta = theta0.to_vec();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut next = vec![0.0; n];

    ws.grad_into(&theta, &mut k1);
    let mut e = ws.energy(&theta);
    let mut trajectory = cfg.record_every.map(|_| Vec::new());
    let record = |traj: &mut Option<Vec<TrajectorySample>>, t: f64, e: f64, theta: &[f64], gr: &[f64]| {
        if let Some(v) = traj {
            v.push(TrajectorySample {
                t,
                energy: e,
                rho1_abs: order_parameter(theta, 1).map(|z| z.norm()).unwrap_or(1.0),
                grad_inf: inf_norm(gr),
            });
        }
    };
    record(&mut trajectory, t, e, &theta, &k1);

    let converged = loop {
        if inf_norm(&k1) < cfg.stop_grad_tol {
            break true;
        }
        if t >= cfg.t_max {
            break false;
        }
        let mut halvings = 0;
        loop {
            let dt = h.min(cfg.t_max - t);
            for i in 0..n {
                stage[i] = theta[i] - 0.5 * dt * k1[i];
            }
            ws.grad_into(&stage, &mut k2);
            for i in 0..n {
                stage[i] = theta[i] - 0.5 * dt * k2[i];
            }
            ws.grad_into(&stage, &mut k3);
            for i in 0..n {
                stage[i] = theta[i] - dt * k3[i];
            }
            ws.grad_into(&stage, &mut k4);
            for i in 0..n {
                next[i] = theta[i] - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let e_next = ws.energy(&next);
            if e_next <= e + cfg.energy_slack {
                std::mem::swap(&mut theta, &mut next);
                e = e_next;
                t += dt;
                break;
            }
            halvings += 1;
            if halvings > cfg.max_halvings {
                return Err(Error::IntegrationFailure { t, halvings: cfg.max_halvings });
            }
            h *= 0.5;
        }
        steps += 1;
        ws.grad_into(&theta, &mut k1);
        if let Some(every) = cfg.record_every {
            if steps.is_multiple_of(every.max(1)) {
                record(&mut trajectory, t, e, &theta, &k1);
            }
        }
    };

    let grad_inf = inf_norm(&k1);
    let rho1 = order_parameter(&theta, 1)?.norm();
    let status = if !converged {
        FlowStatus::Nonconverged
    } else if grad_inf < STATIONARY_TOL && 1.0 - rho1 < SYNC_TOL {
        FlowStatus::Synchronized
    } else {
        FlowStatus::Spurious
    };
    Ok(FlowResult {
        final_state: PhaseState { theta, t },
        status,
        steps,
        final_energy: e,
        final_grad_inf_norm: grad_inf,
        final_rho1_abs: rho1,
        trajectory,
    })
}

/// Outcome of running the flow from several random initializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub results: Vec<FlowResult>,
    pub sync_rate: f64,
    pub mean_final_rho1: f64,
}

/// Runs `inits` flows from uniform random phases; init `k` draws its phases
/// from the stream `(seed, k)`.
pub fn simulate(g: &Graph, inits: usize, seed: u64, cfg: &IntegratorConfig) -> Result<SimulationSummary> {
    if inits == 0 {
        return Err(invalid("need at least one initialization"));
    }
    let results: Vec<FlowResult> = (0..inits)
        .into_par_iter()
        .map(|k| {
            let theta0 = random_phases(g.n(), &mut stream(seed, &[k as u64]));
            integrate(g, &theta0, cfg)
        })
        .collect::<Result<_>>()?;
    let synced = results.iter().filter(|r| r.status == FlowStatus::Synchronized).count();
    let mean_final_rho1 = results.iter().map(|r| r.final_rho1_abs).sum::<f64>() / inits as f64;
    Ok(SimulationSummary { sync_rate: synced as f64 / inits as f64, mean_final_rho1, results })
}

/// Trajectory CSV with columns `t,E,rho1_abs,grad_inf`.
pub fn write_trajectory_csv<W: Write>(samples: &[TrajectorySample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,E,rho1_abs,grad_inf")?;
    for s in samples {
        writeln!(out, "{},{},{},{}", s.t, s.energy, s.rho1_abs, s.grad_inf)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::sample_er;
    use crate::rng::{rng_from_seed, stream};
    use std::f64::consts::PI;

    fn naive_energy(g: &Graph, theta: &[f64]) -> f64 {
        let a = g.to_dense();
        let mut e = 0.0;
        for i in 0..g.n() {
            for j in 0..g.n() {
                e += a[i][j] * (1.0 - (theta[i] - theta[j]).cos());
            }
        }
        e
    }

    fn naive_grad(g: &Graph, theta: &[f64]) -> Vec<f64> {
        let a = g.to_dense();
        (0..g.n()).map(|i| 2.0 * (0..g.n()).map(|j| a[i][j] * (theta[i] - theta[j]).sin()).sum::<f64>()).collect()
    }

    #[test]
    fn energy_basics() {
        let g = Graph::cycle(7);
        assert_eq!(energy(&g, &[1.3; 7]).unwrap(), 0.0);
        let single = Graph::from_edges(2, [(0, 1)], false).unwrap();
        assert!((energy(&single, &[0.0, PI]).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(energy(&g, &[0.0; 3]), Err(Error::SizeMismatch { .. })));
        assert!(grad(&g, &[0.0; 3]).is_err());
    }

    #[test]
    fn energy_and_grad_match_naive_oracles() {
        for seed in 0..10u64 {
            let mut rng = stream(400, &[seed]);
            let g = sample_er(20, 0.4, &mut rng).unwrap();
            let theta = random_phases(20, &mut rng);
            assert!((energy(&g, &theta).unwrap() - naive_energy(&g, &theta)).abs() <= 1e-10);
            for (a, b) in grad(&g, &theta).unwrap().iter().zip(naive_grad(&g, &theta)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gradient_sums_to_zero_and_is_rotation_invariant() {
        let mut rng = rng_from_seed(401);
        let g = sample_er(50, 0.3, &mut rng).unwrap();
        let theta = random_phases(50, &mut rng);
        let gr = grad(&g, &theta).unwrap();
        assert!(gr.iter().sum::<f64>().abs() < 1e-12);
        let c: f64 = rng.random_range(-10.0..10.0);
        let shifted: Vec<f64> = theta.iter().map(|x| x + c).collect();
        assert!((energy(&g, &shifted).unwrap() - energy(&g, &theta).unwrap()).abs() <= 1e-12);
        for (a, b) in grad(&g, &shifted).unwrap().iter().zip(&gr) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn periodic_in_each_coordinate() {
        let mut rng = rng_from_seed(402);
        let g = sample_er(15, 0.5, &mut rng).unwrap();
        let theta = random_phases(15, &mut rng);
        let mut wrapped = theta.clone();
        wrapped[3] += TAU;
        wrapped[7] -= 2.0 * TAU;
        assert!((energy(&g, &wrapped).unwrap() - energy(&g, &theta).unwrap()).abs() <= 1e-12);
        for (a, b) in grad(&g, &wrapped).unwrap().iter().zip(grad(&g, &theta).unwrap()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn twisted_states_are_stationary() {
        for n in [5, 8, 12] {
            let gr = grad(&Graph::cycle(n), &twisted_state(n, 1)).unwrap();
            assert!(inf_norm(&gr) <= 1e-12, "n={n}");
        }
    }

    #[test]
    fn order_parameter_cases() {
        let z = order_parameter(&[0.7; 9], 1).unwrap();
        assert!((z - Complex64::from_polar(1.0, 0.7)).norm() < 1e-15);
        assert!(order_parameter(&twisted_state(10, 1), 1).unwrap().norm() < 1e-12);
        assert_eq!(order_parameter(&[0.3, 2.0], 0).unwrap(), Complex64::new(1.0, 0.0));
        let theta = random_phases(30, &mut rng_from_seed(403));
        for k in 0..5 {
            assert!(order_parameter(&theta, k).unwrap().norm() <= 1.0 + 1e-15);
        }
        assert!(order_parameter(&[], 1).is_err());
    }

    #[test]
    fn classification() {
        let c5 = Graph::cycle(5);
        assert_eq!(classify_equilibrium(&c5, &[0.4; 5]).unwrap(), Equilibrium::Synchronized);
        assert_eq!(classify_equilibrium(&c5, &twisted_state(5, 1)).unwrap(), Equilibrium::Spurious);
        let k10 = Graph::complete(10);
        let theta = random_phases(10, &mut rng_from_seed(404));
        assert_eq!(classify_equilibrium(&k10, &theta).unwrap(), Equilibrium::Nonstationary);
    }

    #[test]
    fn random_phases_properties() {
        let one = random_phases(1, &mut rng_from_seed(405));
        assert!((0.0..TAU).contains(&one[0]));
        let many = random_phases(100_000, &mut rng_from_seed(406));
        let mean_cos = many.iter().map(|x| x.cos()).sum::<f64>() / many.len() as f64;
        assert!(mean_cos.abs() < 0.02);
        assert_eq!(random_phases(5, &mut rng_from_seed(7)), random_phases(5, &mut rng_from_seed(7)));
    }

    /// Two coupled oscillators: the gap obeys delta' = -4 sin(delta), so
    /// tan(delta / 2) = tan(delta0 / 2) exp(-4 t).
    fn two_oscillator_gap(delta0: f64, t: f64) -> f64 {
        2.0 * ((0.5 * delta0).tan() * (-4.0 * t).exp()).atan()
    }

    #[test]
    fn two_oscillators_synchronize() {
        let g = Graph::from_edges(2, [(0, 1)], false).unwrap();
        let r = integrate(&g, &[0.0, 3.0], &IntegratorConfig::default()).unwrap();
        assert_eq!(r.status, FlowStatus::Synchronized);
        assert!(r.final_rho1_abs > 1.0 - 1e-12);
        assert!(r.final_grad_inf_norm < 1e-8);
        // Conservation: the mean phase is invariant.
        assert!((r.final_state.theta.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn matches_exact_two_oscillator_solution_and_finer_steps() {
        let g = Graph::from_edges(2, [(0, 1)], false).unwrap();
        let fixed_time = |step: f64| {
            let cfg = IntegratorConfig { step: Some(step), t_max: 0.5, stop_grad_tol: 0.0, ..Default::default() };
            let r = integrate(&g, &[0.0, 3.0], &cfg).unwrap();
            assert!((r.final_state.t - 0.5).abs() < 1e-12);
            r.final_state.theta[1] - r.final_state.theta[0]
        };
        let exact = two_oscillator_gap(3.0, 0.5);
        let coarse = fixed_time(0.01 / 2.0);
        let fine = fixed_time(0.01 / 200.0);
        assert!((coarse - fine).abs() < 1e-8, "{coarse} vs {fine}");
        assert!((fine - exact).abs() < 1e-12, "{fine} vs {exact}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let g = Graph::from_edges(2, [(0, 1)], false).unwrap();
        let err = |step: f64| {
            let cfg = IntegratorConfig { step: Some(step), t_max: 0.4, stop_grad_tol: 0.0, ..Default::default() };
            let r = integrate(&g, &[0.0, 2.5], &cfg).unwrap();
            let gap = r.final_state.theta[1] - r.final_state.theta[0];
            let exact = two_oscillator_gap(2.5, 0.4);
            // Energy along the flow as well: E = 2 (1 - cos gap).
            ((gap - exact).abs(), (r.final_energy - 2.0 * (1.0 - exact.cos())).abs())
        };
        let (g1, e1) = err(0.04);
        let (g2, e2) = err(0.02);
        assert!((g1 / g2 - 16.0).abs() < 2.0, "gap ratio {}", g1 / g2);
        assert!((e1 / e2 - 16.0).abs() < 2.0, "energy ratio {}", e1 / e2);
    }

    #[test]
    fn constant_start_converges_immediately() {
        let g = Graph::complete(6);
        let r = integrate(&g, &[2.0; 6], &IntegratorConfig::default()).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.final_energy, 0.0);
        assert_eq!(r.status, FlowStatus::Synchronized);
    }

    #[test]
    fn perturbed_twisted_state_on_c5_is_spurious() {
        let g = Graph::cycle(5);
        let mut rng = rng_from_seed(407);
        let theta0: Vec<f64> = twisted_state(5, 1).into_iter().map(|x| x + rng.random_range(-0.01..0.01)).collect();
        let r = integrate(&g, &theta0, &IntegratorConfig::default()).unwrap();
        assert_eq!(r.status, FlowStatus::Spurious);
        assert!(r.final_rho1_abs < 1e-6);
        assert_eq!(classify_equilibrium(&g, &r.final_state.theta).unwrap(), Equilibrium::Spurious);
    }

    #[test]
    fn energy_never_increases_along_flow() {
        for seed in 0..10u64 {
            let mut rng = stream(408, &[seed]);
            let g = sample_er(20, 0.3, &mut rng).unwrap();
            let cfg = IntegratorConfig { record_every: Some(1), t_max: 20.0, ..Default::default() };
            let r = integrate(&g, &random_phases(20, &mut rng), &cfg).unwrap();
            let traj = r.trajectory.unwrap();
            assert!(traj.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-9));
        }
    }

    #[test]
    fn oversized_step_is_halved() {
        let g = Graph::complete(10);
        let cfg = IntegratorConfig { step: Some(5.0), ..Default::default() };
        let theta0 = random_phases(10, &mut rng_from_seed(409));
        let r = integrate(&g, &theta0, &cfg).unwrap();
        assert_eq!(r.status, FlowStatus::Synchronized);
    }

    #[test]
    fn synchronized_classification_is_stable_under_tiny_perturbation() {
        let g = Graph::complete(10);
        let cfg = IntegratorConfig { stop_grad_tol: 1e-12, ..Default::default() };
        let r = integrate(&g, &random_phases(10, &mut rng_from_seed(410)), &cfg).unwrap();
        assert_eq!(r.status, FlowStatus::Synchronized);
        let mut rng = rng_from_seed(411);
        let nudged: Vec<f64> = r.final_state.theta.iter().map(|x| x + rng.random_range(-1e-11..1e-11)).collect();
        assert_eq!(classify_equilibrium(&g, &nudged).unwrap(), Equilibrium::Synchronized);
    }

    #[test]
    fn complete_graph_always_synchronizes() {
        let s = simulate(&Graph::complete(10), 20, 412, &IntegratorConfig::default()).unwrap();
        assert_eq!(s.sync_rate, 1.0);
        assert!(s.mean_final_rho1 > 1.0 - 1e-9);
    }

    #[test]
    fn single_vertex_trivially_synchronized() {
        let s = simulate(&Graph::empty(1), 3, 413, &IntegratorConfig::default()).unwrap();
        assert_eq!(s.sync_rate, 1.0);
        assert!(s.results.iter().all(|r| r.steps == 0));
    }

    #[test]
    fn trajectory_csv_layout() {
        let g = Graph::cycle(6);
        let cfg = IntegratorConfig { record_every: Some(10), t_max: 1.0, ..Default::default() };
        let r = integrate(&g, &random_phases(6, &mut rng_from_seed(414)), &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(r.trajectory.as_deref().unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,E,rho1_abs,grad_inf"));
        assert!(lines.all(|l| l.split(',').count() == 4));
    }
}
