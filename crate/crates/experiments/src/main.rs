use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ftc_core::bounds::{self, BoundInputs};
use ftc_core::ftc::{self, validate_mixing, MatrixSequence};
use ftc_core::graph::{metropolis_weights, second_largest_eigenvalue};
use ftc_experiments::config::{Construction, SequenceSpec, TopologySpec};
use ftc_experiments::{load_config, preset, run_experiment, sweep, ExperimentConfig, ExperimentError, SweepAxis};

#[derive(Parser)]
#[command(name = "ftc", about = "Gradient tracking over finite-time consensus sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit a topology as an edge list with its Metropolis mixing rate.
    Graph {
        #[command(flatten)]
        topo: TopoArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build, perturb or truncate a sequence and print its certificate.
    Ftc {
        #[command(flatten)]
        topo: TopoArgs,
        /// auto, hypercube, dyadic-path or laplacian.
        #[arg(long, default_value = "auto")]
        construction: String,
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        truncate: Option<usize>,
        #[arg(long)]
        minimize_prefix: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment.
    Run {
        #[command(flatten)]
        source: Source,
    },
    /// Run an experiment once per axis value.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// eps, tau or mu.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Evaluate the bound constants.
    Bounds {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        tau: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_sq: f64,
        #[arg(long, default_value_t = 0.0)]
        beta_sq: f64,
        #[arg(long, default_value_t = 0.0)]
        zeta_sq: f64,
    },
}

#[derive(Args)]
struct TopoArgs {
    #[arg(long)]
    topology: String,
    #[arg(long)]
    k: usize,
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the Monte-Carlo seed base.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Source {
    fn resolve(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => load_config(p)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(ExperimentError::Validation("one of --config or --preset is required".into())),
        };
        if let Some(s) = self.seed {
            cfg.monte_carlo.seed_base = s;
        }
        if let Some(o) = &self.out {
            cfg.outputs.directory = Some(o.display().to_string());
        }
        Ok(cfg)
    }
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<(), ExperimentError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| ExperimentError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn certificate(seq: &MatrixSequence) -> String {
    let mut s = format!("tau={}\nepsilon={:e}\n", seq.len(), seq.epsilon());
    for (i, r) in validate_mixing(seq, 1e-12).iter().enumerate() {
        s.push_str(&format!(
            "matrix={} symmetry_defect={:e} row_sum_defect={:e} spectral_radius={:e} min_entry={:e} pass={}\n",
            i + 1,
            r.symmetry_defect,
            r.row_sum_defect,
            r.spectral_radius,
            r.min_entry,
            r.pass
        ));
    }
    s
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Graph { topo, out } => {
            let g = TopologySpec { kind: topo.topology, k: topo.k, edges: None }.build()?;
            write_or_print(&g.to_edge_list(), out.as_deref())?;
            let m = metropolis_weights(&g)?;
            eprintln!("diameter={} metropolis_lambda2={:e}", g.diameter(), second_largest_eigenvalue(m.entries())?);
        }
        Command::Ftc { topo, construction, perturb, tol, seed, truncate, minimize_prefix, out } => {
            let g = TopologySpec { kind: topo.topology, k: topo.k, edges: None }.build()?;
            let construction = match construction.as_str() {
                "auto" => Construction::Auto,
                "hypercube" => Construction::Hypercube,
                "dyadic-path" => Construction::DyadicPath,
                "laplacian" => Construction::Laplacian,
                other => return Err(ExperimentError::Validation(format!("unknown construction '{other}'"))),
            };
            let mut seq = SequenceSpec::Exact { construction }.build(&g)?;
            if let Some(t) = truncate {
                if minimize_prefix {
                    seq = ftc::minimize_prefix_epsilon(&seq, t)?;
                }
                seq = ftc::truncate(&seq, t)?;
            }
            if let Some(target) = perturb {
                seq = ftc::perturb_to_target(&seq, target, seed, tol)?;
            }
            print!("{}", certificate(&seq));
            if let Some(p) = out {
                write_or_print(&seq.to_text(), Some(&p))?;
            }
        }
        Command::Run { source } => {
            let cfg = source.resolve()?;
            let result = run_experiment(&cfg)?;
            print!("{}", result.summary_csv());
        }
        Command::Sweep { source, axis, values } => {
            let cfg = source.resolve()?;
            let axis: SweepAxis = axis.parse()?;
            let result = sweep(&cfg, axis, &values)?;
            print!("{}", result.summary_csv());
        }
        Command::Bounds { mu, tau, eps, k, nu, delta, sigma_sq, beta_sq, zeta_sq } => {
            let inputs = BoundInputs { mu, tau, eps, k, nu, delta, sigma_sq, beta_sq, zeta_sq };
            print!("{}", bounds::evaluate(&inputs)?.report());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} message=\"{}\"", e.kind(), msg.replace('"', "'"));
            ExitCode::from(2)
        }
    }
}
