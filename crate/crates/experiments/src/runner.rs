//! Monte-Carlo execution, aggregation, sweeps and file output.

use std::fmt::Write as _;
use std::path::Path;

use ftc_core::bounds::{self, BoundInputs};
use ftc_core::ftc::{validate_mixing, MatrixReport, MatrixSequence};
use ftc_core::optimizer::{self, RunOptions};
use ftc_core::problem::{LeastSquaresProblem, Optima};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SequenceSpec};
use crate::plot;
use crate::ExperimentError;

/// Fraction of the horizon averaged for steady-state summaries.
pub const STEADY_STATE_FRACTION: f64 = 0.2;

/// Pointwise means across runs at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMetrics {
    pub msd: f64,
    pub centroid_err: f64,
    pub consensus_w: f64,
    pub consensus_z: Option<f64>,
    pub equiv_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub tau: usize,
    pub epsilon: f64,
    pub mixing_checks: Vec<MatrixReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub label: String,
    pub mean: Vec<MeanMetrics>,
    /// Steady-state MSD of each completed run, in seed order.
    pub per_run_steady: Vec<f64>,
    /// Seeds of the completed runs, aligned with `per_run_steady`.
    pub seeds: Vec<u64>,
    /// `(seed, iteration)` of runs that produced non-finite values.
    pub diverged: Vec<(u64, usize)>,
    pub certificate: Certificate,
    pub bound_report: String,
    pub steady_state_bound: Option<f64>,
    /// Worst structural defects across runs (tracking, centroid, 1ᵀY, equivalence).
    pub max_tracking_defect: f64,
    pub max_centroid_residual: f64,
    pub max_y_mean_defect: Option<f64>,
    pub max_equiv_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub optima: Optima,
    pub series: Vec<SeriesResult>,
}

/// Mean over the final fraction of a series, starting at `ceil(0.8·iters)`.
pub fn steady_state(values: &[f64]) -> f64 {
    let iters = values.len().saturating_sub(1);
    let start = ((1.0 - STEADY_STATE_FRACTION) * iters as f64).ceil() as usize;
    let tail = &values[start.min(values.len() - 1)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl SeriesResult {
    pub fn steady_state_msd(&self) -> f64 {
        steady_state(&self.mean.iter().map(|m| m.msd).collect::<Vec<_>>())
    }

    /// Standard error of the steady-state MSD across runs.
    pub fn steady_state_se(&self) -> f64 {
        mean_and_se(&self.per_run_steady).1
    }

    /// First iteration whose mean MSD is at or below `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        self.mean.iter().position(|m| m.msd <= threshold)
    }
}

/// Mean and standard error of the per-seed differences `b − a` over shared seeds.
pub fn paired_difference(a: &SeriesResult, b: &SeriesResult) -> (f64, f64) {
    let diffs: Vec<f64> = a
        .seeds
        .iter()
        .zip(&a.per_run_steady)
        .filter_map(|(s, va)| b.seeds.iter().position(|t| t == s).map(|j| b.per_run_steady[j] - va))
        .collect();
    if diffs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    mean_and_se(&diffs)
}

fn bound_for(seq: &MatrixSequence, optima: &Optima, k: usize, mu: f64) -> (String, Option<f64>) {
    let c = &optima.constants;
    let inputs = BoundInputs {
        mu,
        tau: seq.len(),
        eps: seq.epsilon(),
        k,
        nu: c.nu,
        delta: c.delta,
        sigma_sq: c.sigma_sq,
        beta_sq: c.beta_sq,
        zeta_sq: c.zeta_sq,
    };
    let steady = bounds::steady_state_bound(&inputs).ok().map(|s| s.bound);
    let report = match bounds::evaluate(&inputs) {
        Ok(b) => b.report(),
        Err(e) => {
            let mut r = format!("error={e}\n");
            if let Some(s) = steady {
                let _ = writeln!(r, "steady_state_bound={s:e}");
            }
            r
        }
    };
    (report, steady)
}

/// Builds the problem of a configuration and its optima.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<(LeastSquaresProblem, Optima), ExperimentError> {
    let p = &cfg.problem;
    let problem = LeastSquaresProblem::generate(cfg.agents(), p.m, p.n, p.noise_variance, p.data_seed)?;
    let optima = problem.optima_and_constants()?;
    Ok((problem, optima))
}

fn run_series(
    cfg: &ExperimentConfig,
    problem: &LeastSquaresProblem,
    optima: &Optima,
    label: &str,
    seq: &MatrixSequence,
) -> Result<SeriesResult, ExperimentError> {
    let o = &cfg.optimizer;
    let (k, m) = (problem.agents(), problem.dimension());
    let w0 = o.w0.as_ref().map(|v| DMatrix::from_fn(k, m, |_, c| v[c]));
    let seeds: Vec<u64> = (0..cfg.monte_carlo.runs as u64).map(|j| cfg.monte_carlo.seed_base.wrapping_add(j)).collect();
    let runs: Vec<Result<optimizer::Trajectory, ExperimentError>> = seeds
        .par_iter()
        .map(|&seed| {
            let opts = RunOptions { mu: o.mu, iterations: o.iterations, seed, mode: o.mode.into(), diagnostics: o.diagnostics, w0: w0.clone() };
            Ok(optimizer::run(problem, &optima.global, seq, &opts)?)
        })
        .collect();

    let len = o.iterations + 1;
    let mut sums = vec![[0.0f64; 3]; len];
    let mut z_sums: Option<Vec<f64>> = o.diagnostics.then(|| vec![0.0; len]);
    let mut e_sums: Option<Vec<f64>> = o.diagnostics.then(|| vec![0.0; len]);
    let mut per_run_steady = Vec::new();
    let mut kept_seeds = Vec::new();
    let mut diverged = Vec::new();
    let (mut tracking, mut centroid) = (0.0_f64, 0.0_f64);
    let (mut ymean, mut equiv): (Option<f64>, Option<f64>) = (None, None);
    for (seed, r) in seeds.iter().zip(runs) {
        let t = r?;
        tracking = tracking.max(t.diagnostics.tracking_defect);
        centroid = centroid.max(t.diagnostics.centroid_residual);
        if let Some(y) = t.diagnostics.y_mean_defect {
            ymean = Some(ymean.unwrap_or(0.0).max(y));
        }
        if let Some(e) = t.diagnostics.equiv_defect {
            equiv = Some(equiv.unwrap_or(0.0).max(e));
        }
        if let Some(i) = t.diverged_at {
            diverged.push((*seed, i));
            continue;
        }
        for (i, mt) in t.metrics.iter().enumerate() {
            sums[i][0] += mt.msd;
            sums[i][1] += mt.centroid_err;
            sums[i][2] += mt.consensus_w;
            if let (Some(z), Some(v)) = (z_sums.as_mut(), mt.consensus_z) {
                z[i] += v;
            }
        }
        if let Some(e) = e_sums.as_mut() {
            for (i, d) in t.equiv_defect.iter().enumerate() {
                e[i] += d.unwrap_or(0.0);
            }
        }
        per_run_steady.push(steady_state(&t.msd()));
        kept_seeds.push(*seed);
    }
    // no completed run leaves every mean as NaN
    let n = kept_seeds.len() as f64;
    let mean = (0..len)
        .map(|i| MeanMetrics {
            msd: sums[i][0] / n,
            centroid_err: sums[i][1] / n,
            consensus_w: sums[i][2] / n,
            consensus_z: z_sums.as_ref().map(|z| z[i] / n),
            equiv_defect: e_sums.as_ref().map(|e| e[i] / n),
        })
        .collect();
    let (bound_report, steady_state_bound) = bound_for(seq, optima, k, o.mu);
    Ok(SeriesResult {
        label: label.to_string(),
        mean,
        per_run_steady,
        seeds: kept_seeds,
        diverged,
        certificate: Certificate { tau: seq.len(), epsilon: seq.epsilon(), mixing_checks: validate_mixing(seq, 1e-12) },
        bound_report,
        steady_state_bound,
        max_tracking_defect: tracking,
        max_centroid_residual: centroid,
        max_y_mean_defect: ymean,
        max_equiv_defect: equiv,
    })
}

/// Runs every series of the configuration, then writes outputs if a directory
/// is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let (problem, optima) = build_problem(cfg)?;
    let mut series = Vec::with_capacity(cfg.series.len());
    for s in &cfg.series {
        let g = s.topology.build()?;
        let seq = s.sequence.build(&g)?;
        series.push(run_series(cfg, &problem, &optima, &s.label, &seq)?);
    }
    let result = RunResult { config: cfg.clone(), optima, series };
    if let Some(dir) = &cfg.outputs.directory {
        write_outputs(&result, Path::new(dir))?;
    }
    Ok(result)
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn slug(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

impl RunResult {
    /// Per-iteration means of one series. `msd` is per agent and `msd_network`
    /// is the unnormalized sum over agents; the dB column is included when enabled.
    pub fn series_csv(&self, index: usize) -> String {
        let s = &self.series[index];
        let with_db = self.config.outputs.db;
        let agents = self.config.agents() as f64;
        let mut out = String::from("iter,msd");
        if with_db {
            out.push_str(",msd_db");
        }
        out.push_str(",msd_network,centroid_err,consensus_w,consensus_z,equiv_defect\n");
        for (i, m) in s.mean.iter().enumerate() {
            let _ = write!(out, "{i},{:e}", m.msd);
            if with_db {
                let _ = write!(out, ",{:e}", db(m.msd));
            }
            let _ = writeln!(out, ",{:e},{:e},{:e},{},{}", agents * m.msd, m.centroid_err, m.consensus_w, opt(m.consensus_z), opt(m.equiv_defect));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("label,tau,epsilon,steady_state_msd,steady_state_db,std_error,bound,completed_runs,diverged_runs\n");
        for s in &self.series {
            let ss = s.steady_state_msd();
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{},{},{}",
                s.label,
                s.certificate.tau,
                s.certificate.epsilon,
                ss,
                db(ss),
                s.steady_state_se(),
                opt(s.steady_state_bound),
                s.seeds.len(),
                s.diverged.len()
            );
        }
        out
    }

    pub fn bound_reports(&self) -> String {
        let mut out = String::new();
        for s in &self.series {
            let _ = writeln!(out, "[{}]", s.label);
            let _ = writeln!(out, "tau={}", s.certificate.tau);
            let _ = writeln!(out, "measured_eps={:e}", s.certificate.epsilon);
            let flags: Vec<&str> = s.certificate.mixing_checks.iter().map(|r| if r.pass { "pass" } else { "fail" }).collect();
            let _ = writeln!(out, "mixing_checks={}", flags.join(","));
            out.push_str(&s.bound_report);
            out.push('\n');
        }
        out
    }
}

pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<(), ExperimentError> {
    let io = |e: std::io::Error| ExperimentError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = slug(&result.config.name);
    for (i, s) in result.series.iter().enumerate() {
        std::fs::write(dir.join(format!("{name}_{}.csv", slug(&s.label))), result.series_csv(i)).map_err(io)?;
    }
    std::fs::write(dir.join(format!("{name}_summary.csv")), result.summary_csv()).map_err(io)?;
    std::fs::write(dir.join(format!("{name}_bounds.txt")), result.bound_reports()).map_err(io)?;
    std::fs::write(dir.join(format!("{name}_config.json")), result.config.to_json()).map_err(io)?;
    plot::emit_plot(result, &dir.join(format!("{name}.svg")))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Eps,
    Tau,
    Mu,
}

impl std::str::FromStr for SweepAxis {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eps" => Ok(SweepAxis::Eps),
            "tau" => Ok(SweepAxis::Tau),
            "mu" => Ok(SweepAxis::Mu),
            other => Err(ExperimentError::Validation(format!("unknown sweep axis '{other}' (expected eps, tau, mu)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub results: Vec<Result<RunResult, String>>,
}

impl SweepResult {
    /// `value,label,steady_state_msd,std_error,bound`; failed values carry the error.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("value,label,steady_state_msd,std_error,bound,error\n");
        for (v, r) in self.values.iter().zip(&self.results) {
            match r {
                Ok(res) => {
                    for s in &res.series {
                        let _ = writeln!(
                            out,
                            "{v:e},{},{:e},{:e},{},",
                            s.label,
                            s.steady_state_msd(),
                            s.steady_state_se(),
                            opt(s.steady_state_bound)
                        );
                    }
                }
                Err(e) => {
                    let _ = writeln!(out, "{v:e},,,,,{}", e.replace(',', ";"));
                }
            }
        }
        out
    }
}

/// Reruns the configuration once per value, varying the sequence (ε or τ) of
/// every series or the step size. Seeds are shared across values.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepResult, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::Validation("sweep needs at least one value".into()));
    }
    cfg.validate()?;
    let mut results = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        c.outputs.directory = None;
        match axis {
            SweepAxis::Mu => c.optimizer.mu = v,
            SweepAxis::Eps => {
                for s in &mut c.series {
                    s.sequence = if v == 0.0 {
                        SequenceSpec::Exact { construction: Default::default() }
                    } else {
                        SequenceSpec::Perturbed { target_eps: v, tol: 0.01, seed: 1, construction: Default::default() }
                    };
                }
            }
            SweepAxis::Tau => {
                if v < 1.0 || v.fract() != 0.0 {
                    results.push(Err(format!("tau must be a positive integer (got {v})")));
                    continue;
                }
                for s in &mut c.series {
                    s.sequence =
                        SequenceSpec::Truncated { tau_prime: v as usize, minimize_prefix: false, construction: Default::default() };
                }
            }
        }
        results.push(run_experiment(&c).map_err(|e| e.to_string()));
    }
    let out = SweepResult { axis, values: values.to_vec(), results };
    if let Some(dir) = &cfg.outputs.directory {
        let dir = Path::new(dir);
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(e.to_string()))?;
        std::fs::write(dir.join(format!("{}_sweep.csv", slug(&cfg.name))), out.summary_csv())
            .map_err(|e| ExperimentError::Io(e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_window() {
        // 10 iterations: window starts at 8
        let v: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        assert_eq!(steady_state(&v), 9.0);
        assert_eq!(steady_state(&[3.0, 5.0]), 5.0);
    }

    #[test]
    fn standard_error_of_constant_is_zero() {
        assert_eq!(mean_and_se(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }

    #[test]
    fn sweep_axis_parse() {
        assert_eq!("eps".parse::<SweepAxis>().unwrap(), SweepAxis::Eps);
        assert!("x".parse::<SweepAxis>().is_err());
    }
}
