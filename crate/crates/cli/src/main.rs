use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksl_core::certificate::{check_certificate_with, CertificateOptions};
use ksl_core::concentration::{concentration_registry, write_samples_csv, ConcentrationParams, DEFAULT_K};
use ksl_core::dynamics::{integrate, random_phases, simulate, write_trajectory_csv, IntegratorConfig};
use ksl_core::graph::Graph;
use ksl_core::models::{model_registry, GraphProvenance, ModelParams};
use ksl_core::rng::stream;
use ksl_core::sphere::threshold;
use ksl_core::sweep::{resolve_workers, run_sweep, with_workers, SweepConfig};
use ksl_core::{Error, Result};

const EXIT_INCONCLUSIVE: u8 = 2;

/// Random graphs on the sphere, the Kuramoto synchronization certificate,
/// and the gradient flow behind it.
#[derive(Parser, Debug)]
#[command(name = "ksl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the inner-product threshold t with P(<x, y> >= t) = p on S^{d-1}
    Threshold {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        d: usize,
    },
    /// Sample a graph and write it as an edge list (plus a provenance sidecar)
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also dump the latent points of an explicit RGG sample
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Evaluate the three-condition certificate and print it as JSON
    Certify {
        #[command(flatten)]
        source: GraphSource,
        /// Reference density; defaults to the sampled p, else the empirical density
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Set every diagonal entry of A to one before evaluating
        #[arg(long)]
        selfloops: bool,
        /// Norm estimator (lanczos or power)
        #[arg(long, default_value = ksl_core::spectral::DEFAULT_ESTIMATOR)]
        norm_method: String,
    },
    /// Run the gradient flow from random initial phases
    Simulate {
        #[command(flatten)]
        source: GraphSource,
        #[arg(long, default_value_t = 10)]
        inits: usize,
        #[command(flatten)]
        integrator: IntegratorArgs,
        #[arg(long)]
        workers: Option<usize>,
        /// Write the trajectory of the first initialization as CSV
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
    },
    /// Run a parameter sweep described by a key=value config file
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `out`
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Monte Carlo concentration checks (adjacency, degree, coupled)
    Concentration {
        which: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        /// Dimension, for the degree check on RGG models
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Graph model for the degree check
        #[arg(long, default_value = "er")]
        model: String,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: f64,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        vectors: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Graph model: er, rgg, or rgg-gram
    #[arg(long, default_value = "er")]
    model: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GraphSource {
    /// Edge-list file; a `<file>.json` provenance sidecar is read if present
    #[arg(long, conflicts_with_all = ["model", "n", "p", "d"])]
    graph: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct IntegratorArgs {
    /// Fixed step; defaults to 0.01 / (1 + max degree)
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 1e4)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-8)]
    stop_grad_tol: f64,
}

impl IntegratorArgs {
    fn config(&self, record_every: Option<usize>) -> IntegratorConfig {
        IntegratorConfig {
            step: self.step,
            t_max: self.t_max,
            stop_grad_tol: self.stop_grad_tol,
            record_every,
            ..IntegratorConfig::default()
        }
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl GraphSource {
    fn resolve(&self) -> Result<(Graph, GraphProvenance)> {
        if let Some(path) = &self.graph {
            let graph = Graph::load(path)?;
            let sidecar = sidecar_path(path);
            let provenance = if sidecar.exists() {
                let prov: GraphProvenance = serde_json::from_reader(File::open(&sidecar)?)?;
                prov.validate()?;
                if prov.n != graph.n() {
                    return Err(Error::SizeMismatch { expected: prov.n, actual: graph.n() });
                }
                prov
            } else {
                GraphProvenance::file(graph.n())
            };
            return Ok((graph, provenance));
        }
        let model = self.model.as_deref().unwrap_or("er");
        let (n, p) = match (self.n, self.p) {
            (Some(n), Some(p)) => (n, p),
            _ => return Err(Error::InvalidArgument("give --graph, or --n and --p for a sampled graph".into())),
        };
        let sampled = model_registry().get(model)?.sample(&ModelParams { n, p, d: self.d }, self.seed)?;
        Ok((sampled.graph, sampled.provenance))
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Threshold { p, d } => {
            println!("{}", threshold(p, d)?.t);
        }
        Command::Sample { model, out, points } => {
            let params = ModelParams { n: model.n, p: model.p, d: model.d };
            let sampled = model_registry().get(&model.model)?.sample(&params, model.seed)?;
            sampled.graph.save(&out)?;
            let mut sidecar = File::create(sidecar_path(&out))?;
            serde_json::to_writer_pretty(&mut sidecar, &sampled.provenance)?;
            writeln!(sidecar)?;
            if let Some(points_path) = points {
                let cloud = sampled.cloud.as_ref().ok_or_else(|| {
                    Error::InvalidArgument(format!("model {} does not produce latent points", model.model))
                })?;
                let mut w = BufWriter::new(File::create(points_path)?);
                cloud.write_to(&mut w)?;
                w.flush()?;
            }
            println!("wrote {} (n = {}, m = {})", out.display(), sampled.graph.n(), sampled.graph.edge_count());
        }
        Command::Certify { source, p0, tol, selfloops, norm_method } => {
            let (graph, provenance) = source.resolve()?;
            let p0 = p0.or(provenance.p).unwrap_or_else(|| graph.density());
            let opts = CertificateOptions { tol, selfloops, estimator: norm_method, seed: source.seed };
            let report = check_certificate_with(&graph, p0, &opts)?;
            println!("{}", report.to_json());
            if !report.certified() {
                return Ok(ExitCode::from(EXIT_INCONCLUSIVE));
            }
        }
        Command::Simulate { source, inits, integrator, workers, trajectory, record_every } => {
            let (graph, _) = source.resolve()?;
            let cfg = integrator.config(None);
            let summary = with_workers(resolve_workers(workers)?, || simulate(&graph, inits, source.seed, &cfg))??;
            let mut out = BufWriter::new(io::stdout().lock());
            writeln!(out, "init,status,steps,t,final_energy,grad_inf,rho1_abs")?;
            for (k, r) in summary.results.iter().enumerate() {
                let status = serde_json::to_value(r.status)?;
                writeln!(
                    out,
                    "{k},{},{},{},{},{},{}",
                    status.as_str().unwrap_or_default(),
                    r.steps,
                    r.final_state.t,
                    r.final_energy,
                    r.final_grad_inf_norm,
                    r.final_rho1_abs
                )?;
            }
            writeln!(out, "sync_rate={}", summary.sync_rate)?;
            writeln!(out, "mean_final_rho1={}", summary.mean_final_rho1)?;
            out.flush()?;
            if let Some(path) = trajectory {
                // Same initial phases as init 0 above.
                let theta0 = random_phases(graph.n(), &mut stream(source.seed, &[0]));
                let r = integrate(&graph, &theta0, &integrator.config(Some(record_every)))?;
                let mut w = BufWriter::new(File::create(path)?);
                write_trajectory_csv(r.trajectory.as_deref().unwrap_or_default(), &mut w)?;
                w.flush()?;
            }
        }
        Command::Sweep { config, out, workers } => {
            let cfg = SweepConfig::load(&config)?;
            let out = out.or_else(|| cfg.out.clone()).ok_or_else(|| {
                Error::InvalidArgument("no output path: set `out` in the config or pass --out".into())
            })?;
            let summary = run_sweep(&cfg, &out, resolve_workers(workers.or(cfg.workers))?)?;
            eprintln!(
                "{} cells run, {} already complete, {} rows written to {}",
                summary.cells_run,
                summary.cells_skipped,
                summary.rows_written,
                out.display()
            );
        }
        Command::Concentration { which, n, p, d, trials, seed, model, k, eps, vectors, out, workers } => {
            let params = ConcentrationParams { n, p, d, trials, model, k, eps, num_vectors: vectors };
            let registry = concentration_registry();
            let check = registry.get(&which)?;
            let samples = with_workers(resolve_workers(workers)?, || check.run(&params, seed))??;
            let mut w = open_out(out.as_deref())?;
            write_samples_csv(&samples, &mut w)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
