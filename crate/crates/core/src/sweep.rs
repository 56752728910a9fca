//! Monte Carlo sweep harness: a grid of (n, p, d) cells, several trials per
//! cell, one CSV row per trial.
//!
//! Trials inside a cell run on a worker pool; cells run in grid order and
//! their rows are flushed as each cell completes. A sidecar state file
//! (`<out>.state`) lists completed cells together with the CSV length at that
//! point, so an interrupted sweep resumes at the first unfinished cell.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::certificate::{check_certificate_with, CertificateOptions, Cond3Value, Verdict};
use crate::dynamics::{simulate, IntegratorConfig};
use crate::error::{invalid, Error, Result};
use crate::graph::is_connected;
use crate::models::{model_registry, ModelKind, ModelParams};
use crate::rng::derive_seed;
use crate::spectral::DEFAULT_ESTIMATOR;

pub const WORKERS_ENV: &str = "KSL_WORKERS";

pub const TRIAL_CSV_HEADER: &str = "model,n,p,d,seed,trial,connected,cert_cond1,cert_cond2,cert_cond3,cert_verdict,\
ratio_a,ratio_l,cond3_lhs,cond3_rhs,sync_rate,mean_final_rho1,runtime_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Certify,
    Simulate,
    Both,
}

impl Mode {
    pub fn certifies(self) -> bool {
        matches!(self, Mode::Certify | Mode::Both)
    }

    pub fn simulates(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Registry name of the graph model.
    pub model: String,
    pub n: Vec<usize>,
    pub p: Vec<f64>,
    /// Empty for G(n, p).
    pub d: Vec<usize>,
    pub trials: usize,
    pub inits: usize,
    pub seed: u64,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub tol: f64,
    pub selfloops: bool,
    pub estimator: String,
    pub integrator: IntegratorConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            model: "er".into(),
            n: Vec::new(),
            p: Vec::new(),
            d: Vec::new(),
            trials: 1,
            inits: 10,
            seed: 0,
            mode: Mode::Both,
            out: None,
            workers: None,
            tol: 1e-6,
            selfloops: false,
            estimator: DEFAULT_ESTIMATOR.into(),
            integrator: IntegratorConfig::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse list element {s:?}")))
        .collect()
}

fn parse_one<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got {value:?}")),
    }
}

impl SweepConfig {
    /// Parses flat `key=value` text. Blank lines and lines starting with `#`
    /// are skipped; list values are comma-separated.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { path: path.to_path_buf(), line: idx + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            let ic = &mut cfg.integrator;
            let outcome = match key {
                "model" => {
                    cfg.model = value.to_string();
                    Ok(())
                }
                "n" => parse_list(value).map(|v| cfg.n = v),
                "p" => parse_list(value).map(|v| cfg.p = v),
                "d" => parse_list(value).map(|v| cfg.d = v),
                "trials" => parse_one(value).map(|v| cfg.trials = v),
                "inits" => parse_one(value).map(|v| cfg.inits = v),
                "seed" => parse_one(value).map(|v| cfg.seed = v),
                "mode" => match value {
                    "certify" => Ok(Mode::Certify),
                    "simulate" => Ok(Mode::Simulate),
                    "both" => Ok(Mode::Both),
                    _ => Err(format!("mode must be certify, simulate or both, got {value:?}")),
                }
                .map(|m| cfg.mode = m),
                "out" => {
                    cfg.out = Some(PathBuf::from(value));
                    Ok(())
                }
                "workers" => parse_one(value).map(|v| cfg.workers = Some(v)),
                "tol" => parse_one(value).map(|v| cfg.tol = v),
                "selfloops" => parse_bool(value).map(|v| cfg.selfloops = v),
                "estimator" => {
                    cfg.estimator = value.to_string();
                    Ok(())
                }
                "step" => parse_one(value).map(|v| ic.step = Some(v)),
                "step_scale" => parse_one(value).map(|v| ic.step_scale = v),
                "t_max" => parse_one(value).map(|v| ic.t_max = v),
                "stop_grad_tol" => parse_one(value).map(|v| ic.stop_grad_tol = v),
                "max_halvings" => parse_one(value).map(|v| ic.max_halvings = v),
                _ => Err(format!("unknown key {key:?}")),
            };
            outcome.map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = model_registry().get(&self.model)?.kind();
        if self.n.is_empty() || self.p.is_empty() {
            return Err(invalid("the n and p grids must be nonempty"));
        }
        match kind {
            ModelKind::Rgg if self.d.is_empty() => return Err(invalid("an RGG sweep needs a nonempty d grid")),
            ModelKind::Er if !self.d.is_empty() => return Err(invalid("d is not a parameter of G(n, p)")),
            _ => {}
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.mode.simulates() && self.inits == 0 {
            return Err(invalid("inits must be at least 1 when simulating"));
        }
        if let Some(&p) = self.p.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(invalid(format!("p values must lie in (0, 1), got {p}")));
        }
        if let Some(&d) = self.d.iter().find(|&&d| d < 2) {
            return Err(invalid(format!("d values must be at least 2, got {d}")));
        }
        let min_n = if self.mode.certifies() { 7 } else { 1 };
        if let Some(&n) = self.n.iter().find(|&&n| n < min_n) {
            return Err(invalid(format!("n values must be at least {min_n}, got {n}")));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(invalid("tol must be positive"));
        }
        crate::spectral::estimator_registry().get(&self.estimator)?;
        Ok(())
    }

    /// Cells in grid order: n outermost, then p, then d.
    pub fn cells(&self) -> Vec<Cell> {
        let ds: Vec<Option<usize>> =
            if self.d.is_empty() { vec![None] } else { self.d.iter().copied().map(Some).collect() };
        let mut out = Vec::new();
        for &n in &self.n {
            for &p in &self.p {
                for &d in &ds {
                    out.push(Cell { model: self.model.clone(), n, p, d });
                }
            }
        }
        out
    }

    /// Everything that influences row contents, used to refuse resuming a
    /// sweep under a different configuration.
    fn fingerprint(&self) -> String {
        let ic = &self.integrator;
        format!(
            "model={} n={:?} p={:?} d={:?} trials={} inits={} seed={} mode={:?} tol={} selfloops={} estimator={} \
             step={:?} step_scale={} t_max={} stop_grad_tol={} max_halvings={}",
            self.model,
            self.n,
            self.p,
            self.d,
            self.trials,
            self.inits,
            self.seed,
            self.mode,
            self.tol,
            self.selfloops,
            self.estimator,
            ic.step,
            ic.step_scale,
            ic.t_max,
            ic.stop_grad_tol,
            ic.max_halvings
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub model: String,
    pub n: usize,
    pub p: f64,
    pub d: Option<usize>,
}

impl Cell {
    pub fn key(&self) -> String {
        match self.d {
            Some(d) => format!("{}|n={}|p={}|d={}", self.model, self.n, self.p, d),
            None => format!("{}|n={}|p={}", self.model, self.n, self.p),
        }
    }

    /// Seed of trial `trial`, a pure function of the cell coordinates.
    pub fn trial_seed(&self, master: u64, trial: usize) -> u64 {
        let model: Vec<u64> = self.model.bytes().map(u64::from).collect();
        derive_seed(
            master,
            &[
                derive_seed(0, &model),
                self.n as u64,
                self.p.to_bits(),
                self.d.map_or(0, |d| d as u64 + 1),
                trial as u64,
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertFields {
    pub cond1: bool,
    pub cond2: bool,
    pub cond3: bool,
    pub verdict: Verdict,
    pub ratio_a: f64,
    pub ratio_l: f64,
    pub cond3_lhs: Cond3Value,
    pub cond3_rhs: Cond3Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub model: String,
    pub n: usize,
    pub p: f64,
    pub d: Option<usize>,
    pub seed: u64,
    pub trial: usize,
    pub connected: bool,
    pub cert: Option<CertFields>,
    pub sync_rate: Option<f64>,
    pub mean_final_rho1: Option<f64>,
    pub runtime_ms: u128,
}

fn cond3_text(v: Cond3Value) -> String {
    match v {
        Cond3Value::Value(x) => x.to_string(),
        Cond3Value::Sentinel(s) => {
            serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrialRecord {
    /// Every column except `runtime_ms`, comma-joined.
    pub fn deterministic_fields(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            self.model,
            self.n,
            self.p,
            opt(self.d),
            self.seed,
            self.trial,
            self.connected
        );
        match &self.cert {
            Some(c) => {
                let verdict = match c.verdict {
                    Verdict::Certified => "certified",
                    Verdict::Inconclusive => "inconclusive",
                };
                let _ = write!(
                    s,
                    ",{},{},{},{},{},{},{},{}",
                    c.cond1,
                    c.cond2,
                    c.cond3,
                    verdict,
                    c.ratio_a,
                    c.ratio_l,
                    cond3_text(c.cond3_lhs),
                    cond3_text(c.cond3_rhs)
                );
            }
            None => s.push_str(",,,,,,,,"),
        }
        let _ = write!(s, ",{},{}", opt(self.sync_rate), opt(self.mean_final_rho1));
        s
    }

    pub fn csv_row(&self) -> String {
        format!("{},{}", self.deterministic_fields(), self.runtime_ms)
    }
}

/// Effective worker count: `KSL_WORKERS`, else `flag`, else the number of
/// available cores.
pub fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    let from_env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    let workers = from_env.or(flag).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(invalid("worker count must be positive"));
    }
    Ok(workers)
}

pub fn run_trial(cfg: &SweepConfig, cell: &Cell, trial: usize) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = cell.trial_seed(cfg.seed, trial);
    let registry = model_registry();
    let sampled = registry.get(&cell.model)?.sample(&ModelParams { n: cell.n, p: cell.p, d: cell.d }, seed)?;
    let g = &sampled.graph;
    let cert = if cfg.mode.certifies() {
        let opts = CertificateOptions {
            tol: cfg.tol,
            selfloops: cfg.selfloops,
            estimator: cfg.estimator.clone(),
            seed: derive_seed(seed, &[1]),
        };
        let r = check_certificate_with(g, cell.p, &opts)?;
        Some(CertFields {
            cond1: r.cond1,
            cond2: r.cond2,
            cond3: r.cond3,
            verdict: r.verdict,
            ratio_a: r.ratio_a,
            ratio_l: r.ratio_l,
            cond3_lhs: r.cond3_lhs,
            cond3_rhs: r.cond3_rhs,
        })
    } else {
        None
    };
    let (sync_rate, mean_final_rho1) = if cfg.mode.simulates() {
        let s = simulate(g, cfg.inits, derive_seed(seed, &[2]), &cfg.integrator)?;
        (Some(s.sync_rate), Some(s.mean_final_rho1))
    } else {
        (None, None)
    };
    Ok(TrialRecord {
        model: cell.model.clone(),
        n: cell.n,
        p: cell.p,
        d: cell.d,
        seed,
        trial,
        connected: is_connected(g),
        cert,
        sync_rate,
        mean_final_rho1,
        runtime_ms: start.elapsed().as_millis(),
    })
}

/// All trials of one cell, in trial order, on the current rayon pool.
pub fn run_cell(cfg: &SweepConfig, cell: &Cell) -> Result<Vec<TrialRecord>> {
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, cell, t)).collect()
}

/// Runs every cell in memory on a pool of `workers` threads.
pub fn run_in_memory(cfg: &SweepConfig, workers: usize) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let pool = build_pool(workers)?;
    pool.install(|| {
        let mut rows = Vec::new();
        for cell in cfg.cells() {
            rows.extend(run_cell(cfg, &cell)?);
        }
        Ok(rows)
    })
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(build_pool(workers)?.install(f))
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSummary {
    pub cells_run: usize,
    pub cells_skipped: usize,
    pub rows_written: usize,
}

pub fn state_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".state");
    PathBuf::from(s)
}

/// Completed cells recorded in a state file, mapped to the CSV length after each.
struct SweepState {
    completed: BTreeMap<String, u64>,
    csv_len: u64,
}

fn read_state(path: &Path, fingerprint: &str) -> Result<Option<SweepState>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut completed = BTreeMap::new();
    let mut csv_len = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let err = |message: String| Error::Parse { path: path.to_path_buf(), line: idx + 1, message };
        if idx == 0 {
            if line.strip_prefix("config ") != Some(fingerprint) {
                return Err(err("state file belongs to a different sweep configuration".into()));
            }
            continue;
        }
        let (key, len) = line.rsplit_once('\t').ok_or_else(|| err("expected <cell key>\\t<csv length>".into()))?;
        csv_len = len.parse().map_err(|_| err(format!("bad length {len:?}")))?;
        completed.insert(key.to_string(), csv_len);
    }
    Ok(Some(SweepState { completed, csv_len }))
}

/// Runs the sweep, writing rows to `out`, resuming from `<out>.state` if present.
pub fn run_sweep(cfg: &SweepConfig, out: &Path, workers: usize) -> Result<SweepSummary> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint();
    let state_file = state_path(out);
    let (mut csv, mut state, completed) = match read_state(&state_file, &fingerprint)? {
        Some(st) => {
            // Drop rows of a cell that was interrupted after its last checkpoint.
            let csv = OpenOptions::new().write(true).open(out)?;
            csv.set_len(st.csv_len)?;
            let state = OpenOptions::new().append(true).open(&state_file)?;
            (csv, state, st.completed)
        }
        None => {
            let mut csv = File::create(out)?;
            writeln!(csv, "{TRIAL_CSV_HEADER}")?;
            csv.sync_data()?;
            let mut state = File::create(&state_file)?;
            writeln!(state, "config {fingerprint}")?;
            (csv, state, BTreeMap::new())
        }
    };
    let mut csv_len = csv.metadata()?.len();
    let pool = build_pool(workers)?;
    let mut summary = SweepSummary { cells_run: 0, cells_skipped: 0, rows_written: 0 };
    for cell in cfg.cells() {
        let key = cell.key();
        if completed.contains_key(&key) {
            summary.cells_skipped += 1;
            continue;
        }
        let rows = pool.install(|| run_cell(cfg, &cell))?;
        let mut block = String::new();
        for r in &rows {
            block.push_str(&r.csv_row());
            block.push('\n');
        }
        csv.seek(SeekFrom::End(0))?;
        csv.write_all(block.as_bytes())?;
        csv.sync_data()?;
        csv_len += block.len() as u64;
        writeln!(state, "{key}\t{csv_len}")?;
        state.sync_data()?;
        summary.cells_run += 1;
        summary.rows_written += rows.len();
    }
    Ok(summary)
}
