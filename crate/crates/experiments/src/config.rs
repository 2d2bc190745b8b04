//! JSON experiment configuration and the built-in presets.

use std::path::Path;

use ftc_core::ftc::{self, FactorOrdering, MatrixSequence};
use ftc_core::graph::{metropolis_weights, Graph, TopologyKind};
use ftc_core::optimizer::GradientMode;
use serde::{Deserialize, Serialize};

use crate::ExperimentError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// One curve per entry; all curves share the problem and seeds.
    pub series: Vec<SeriesSpec>,
    #[serde(default)]
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub monte_carlo: MonteCarloSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub label: String,
    pub topology: TopologySpec,
    pub sequence: SequenceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    /// `path`, `ring`, `hypercube`, `complete` or `custom`.
    pub kind: String,
    pub k: usize,
    /// Edge list, only for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// Hypercube averaging, power-of-two path schedule, else Laplacian factors.
    #[default]
    Auto,
    Hypercube,
    DyadicPath,
    Laplacian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    Exact {
        #[serde(default)]
        construction: Construction,
    },
    Perturbed {
        target_eps: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_perturb_seed")]
        seed: u64,
        #[serde(default)]
        construction: Construction,
    },
    Truncated {
        tau_prime: usize,
        /// Reorder to the best prefix before truncating.
        #[serde(default)]
        minimize_prefix: bool,
        #[serde(default)]
        construction: Construction,
    },
    Metropolis,
}

fn default_tol() -> f64 {
    0.01
}

fn default_perturb_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
}

fn default_m() -> usize {
    20
}

fn default_n() -> usize {
    30
}

fn default_noise() -> f64 {
    0.1
}

fn default_data_seed() -> u64 {
    1
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self { m: default_m(), n: default_n(), noise_variance: default_noise(), data_seed: default_data_seed() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Stochastic,
    Deterministic,
}

impl From<Mode> for GradientMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Stochastic => GradientMode::Stochastic,
            Mode::Deterministic => GradientMode::Deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub mu: f64,
    pub iterations: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub diagnostics: bool,
    /// Initial model shared by every agent; zero when absent.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed_base: u64,
}

fn default_runs() -> usize {
    1
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self { runs: default_runs(), seed_base: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default = "default_db")]
    pub db: bool,
}

fn default_db() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: None, db: true }
    }
}

impl TopologySpec {
    pub fn new(kind: TopologyKind, k: usize) -> Self {
        Self { kind: kind.to_string(), k, edges: None }
    }

    pub fn build(&self) -> Result<Graph, ExperimentError> {
        let kind: TopologyKind = self.kind.parse().map_err(ExperimentError::Validation)?;
        let g = match kind {
            TopologyKind::Custom => {
                let edges = self
                    .edges
                    .as_ref()
                    .ok_or_else(|| ExperimentError::Validation("custom topology needs an edge list".into()))?;
                Graph::custom(self.k, edges)?
            }
            other => {
                if self.edges.is_some() {
                    return Err(ExperimentError::Validation("edges are only allowed for custom topologies".into()));
                }
                Graph::build(other, self.k)?
            }
        };
        Ok(g)
    }
}

fn exact_for(g: &Graph, c: Construction) -> Result<MatrixSequence, ExperimentError> {
    Ok(match c {
        Construction::Auto => ftc::exact_sequence(g)?,
        Construction::Hypercube => ftc::hypercube_sequence(g)?,
        Construction::DyadicPath => ftc::dyadic_path_sequence(g)?,
        Construction::Laplacian => ftc::laplacian_factorization(g, FactorOrdering::Descending)?,
    })
}

impl SequenceSpec {
    pub fn build(&self, g: &Graph) -> Result<MatrixSequence, ExperimentError> {
        match self {
            SequenceSpec::Exact { construction } => exact_for(g, *construction),
            SequenceSpec::Perturbed { target_eps, tol, seed, construction } => {
                let base = exact_for(g, *construction)?;
                Ok(ftc::perturb_to_target(&base, *target_eps, *seed, *tol)?)
            }
            SequenceSpec::Truncated { tau_prime, minimize_prefix, construction } => {
                let mut base = exact_for(g, *construction)?;
                if *minimize_prefix {
                    base = ftc::minimize_prefix_epsilon(&base, *tau_prime)?;
                }
                Ok(ftc::truncate(&base, *tau_prime)?)
            }
            SequenceSpec::Metropolis => Ok(MatrixSequence::new(vec![metropolis_weights(g)?])?),
        }
    }
}

impl ExperimentConfig {
    /// Structural checks that do not need any heavy computation.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.series.is_empty() {
            return Err(ExperimentError::Validation("at least one series is required".into()));
        }
        let k = self.series[0].topology.k;
        for s in &self.series {
            s.topology.build()?;
            if s.topology.k != k {
                return Err(ExperimentError::Validation(format!(
                    "series '{}' has K={} but the shared problem has K={k}",
                    s.label, s.topology.k
                )));
            }
        }
        if self.monte_carlo.runs == 0 {
            return Err(ExperimentError::Validation("monte_carlo.runs must be at least 1".into()));
        }
        if self.optimizer.iterations == 0 {
            return Err(ExperimentError::Validation("optimizer.iterations must be at least 1".into()));
        }
        if !self.optimizer.mu.is_finite() || self.optimizer.mu < 0.0 {
            return Err(ExperimentError::Validation(format!("optimizer.mu must be nonnegative (got {})", self.optimizer.mu)));
        }
        if let Some(w0) = &self.optimizer.w0 {
            if w0.len() != self.problem.m {
                return Err(ExperimentError::Validation(format!("w0 has {} entries, expected M={}", w0.len(), self.problem.m)));
            }
        }
        if self.problem.m == 0 || self.problem.n == 0 {
            return Err(ExperimentError::Validation("problem.m and problem.n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.series[0].topology.k
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| ExperimentError::Config { line: e.line(), column: e.column(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn series(label: &str, kind: TopologyKind, k: usize, sequence: SequenceSpec) -> SeriesSpec {
    SeriesSpec { label: label.to_string(), topology: TopologySpec::new(kind, k), sequence }
}

fn exact() -> SequenceSpec {
    SequenceSpec::Exact { construction: Construction::Auto }
}

fn perturbed(eps: f64) -> SequenceSpec {
    SequenceSpec::Perturbed { target_eps: eps, tol: default_tol(), seed: 1, construction: Construction::Auto }
}

/// Named presets: `fig2`, `fig3`, `fig4a`, `fig4b`.
pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let stochastic = |mu: f64| OptimizerSpec { mu, iterations: 5000, mode: Mode::Stochastic, diagnostics: false, w0: None };
    let deterministic = |mu: f64| OptimizerSpec { mu, iterations: 2000, mode: Mode::Deterministic, diagnostics: false, w0: None };
    let mc20 = MonteCarloSpec { runs: 20, seed_base: 0 };
    let cfg = match name {
        "fig2" => ExperimentConfig {
            name: "fig2".into(),
            series: vec![
                series("eps=0", TopologyKind::Path, 16, exact()),
                series("eps=0.3", TopologyKind::Path, 16, perturbed(0.3)),
                series("eps=0.6", TopologyKind::Path, 16, perturbed(0.6)),
            ],
            problem: ProblemSpec::default(),
            optimizer: stochastic(8e-3),
            monte_carlo: mc20,
            outputs: OutputSpec::default(),
        },
        "fig3" => ExperimentConfig {
            name: "fig3".into(),
            series: vec![
                series("complete tau=1", TopologyKind::Complete, 16, exact()),
                series("hypercube tau=4", TopologyKind::Hypercube, 16, exact()),
                series("path tau=15", TopologyKind::Path, 16, exact()),
            ],
            problem: ProblemSpec::default(),
            optimizer: stochastic(5e-3),
            monte_carlo: mc20,
            outputs: OutputSpec::default(),
        },
        "fig4a" => ExperimentConfig {
            name: "fig4a".into(),
            series: vec![
                series("hypercube tau=3", TopologyKind::Hypercube, 8, exact()),
                series("metropolis", TopologyKind::Hypercube, 8, SequenceSpec::Metropolis),
            ],
            problem: ProblemSpec::default(),
            optimizer: deterministic(0.01),
            monte_carlo: MonteCarloSpec::default(),
            outputs: OutputSpec::default(),
        },
        "fig4b" => ExperimentConfig {
            name: "fig4b".into(),
            series: vec![
                series("exact tau=7", TopologyKind::Path, 8, exact()),
                series(
                    "truncated tau=3",
                    TopologyKind::Path,
                    8,
                    SequenceSpec::Truncated { tau_prime: 3, minimize_prefix: true, construction: Construction::Auto },
                ),
                series("metropolis", TopologyKind::Path, 8, SequenceSpec::Metropolis),
            ],
            problem: ProblemSpec::default(),
            optimizer: deterministic(0.01),
            monte_carlo: MonteCarloSpec::default(),
            outputs: OutputSpec::default(),
        },
        other => return Err(ExperimentError::Validation(format!("unknown preset '{other}' (expected fig2, fig3, fig4a, fig4b)"))),
    };
    Ok(cfg)
}
