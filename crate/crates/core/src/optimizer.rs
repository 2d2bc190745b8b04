//! Aug-DGM gradient tracking with cyclic combination matrices.
//!
//! Node form, with `A = A_i` chosen by the cycling convention of
//! [`MatrixSequence::matrix_for_iteration`]:
//!
//! ```text
//! W_i = A (W_{i-1} - G_{i-1})
//! G_i = A (G_{i-1} + μ ∇̂J(W_i) - μ ∇̂J(W_{i-1}))
//! ```
//!
//! Each iteration draws one new sample index per agent; the gradient at
//! `W_{i-1}` is the cached draw from the previous iteration. The tracker update
//! is evaluated as `(G - μ∇̂_{i-1}) + μ∇̂_i` so that with a single agent `G` stays
//! exactly `μ∇̂_i` and the run reproduces gradient descent bit for bit.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::ftc::MatrixSequence;
use crate::graph::CombinationMatrix;
use crate::problem::LeastSquaresProblem;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("step size must be finite and nonnegative (got {0})")]
    BadStepSize(f64),
    #[error("non-finite state at iteration {0}")]
    Diverged(usize),
    #[error("noise record has no sample indices for iteration {0}")]
    MissingNoise(usize),
    #[error("iteration count must be at least 1")]
    NoIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Stochastic,
    Deterministic,
}

/// Stacked agent variables, one row per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub w: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub iter: usize,
    /// `∇̂J(W_iter)`, reused by the next tracker update.
    pub last_grad: DMatrix<f64>,
    /// Sample indices behind `last_grad`; `None` for full gradients.
    pub last_samples: Option<Vec<usize>>,
}

/// Sample indices used at each iteration, shared with the transformed recursion.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseRecord {
    Deterministic,
    Samples(Vec<Vec<usize>>),
}

impl NoiseRecord {
    fn samples_at(&self, iter: usize) -> Result<Option<&[usize]>, OptimizerError> {
        match self {
            NoiseRecord::Deterministic => Ok(None),
            NoiseRecord::Samples(s) => s.get(iter).map(|v| Some(v.as_slice())).ok_or(OptimizerError::MissingNoise(iter)),
        }
    }
}

/// `A X` skipping zero weights; each row starts from its first nonzero term
/// rather than from `0.0`, so `[1] x == x` exactly.
pub fn mix(a: &CombinationMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let a = a.entries();
    let (k, m) = x.shape();
    let mut out = DMatrix::zeros(k, m);
    for r in 0..k {
        let mut started = false;
        for l in 0..k {
            let w = a[(r, l)];
            if w == 0.0 {
                continue;
            }
            if started {
                for c in 0..m {
                    out[(r, c)] += w * x[(l, c)];
                }
            } else {
                for c in 0..m {
                    out[(r, c)] = w * x[(l, c)];
                }
                started = true;
            }
        }
    }
    out
}

fn check_dims(problem: &LeastSquaresProblem, seq: &MatrixSequence, w0: &DMatrix<f64>) -> Result<(), OptimizerError> {
    let (k, m) = (problem.agents(), problem.dimension());
    if seq.size() != k {
        return Err(OptimizerError::Dimension(format!("sequence is {}x{}, problem has K={k}", seq.size(), seq.size())));
    }
    if w0.shape() != (k, m) {
        return Err(OptimizerError::Dimension(format!("w0 is {:?}, expected ({k}, {m})", w0.shape())));
    }
    Ok(())
}

fn gradients_at(
    problem: &LeastSquaresProblem,
    w: &DMatrix<f64>,
    samples: Option<&[usize]>,
) -> DMatrix<f64> {
    let (k, m) = w.shape();
    let mut out = DMatrix::zeros(k, m);
    let mut row = vec![0.0; m];
    let mut grad = vec![0.0; m];
    for a in 0..k {
        for (c, v) in row.iter_mut().enumerate() {
            *v = w[(a, c)];
        }
        match samples {
            Some(s) => problem.sample_gradient_into(a, s[a], &row, &mut grad),
            None => problem.full_gradient_into(a, &row, &mut grad),
        }
        for (c, v) in grad.iter().enumerate() {
            out[(a, c)] = *v;
        }
    }
    out
}

fn draw_samples<R: Rng + ?Sized>(problem: &LeastSquaresProblem, mode: GradientMode, rng: &mut R) -> Option<Vec<usize>> {
    match mode {
        GradientMode::Deterministic => None,
        GradientMode::Stochastic => Some((0..problem.agents()).map(|_| problem.draw_index(rng)).collect()),
    }
}

fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `W = w0`, `G = μ∇̂J(w0)` with one draw per agent in stochastic mode.
pub fn init<R: Rng + ?Sized>(
    problem: &LeastSquaresProblem,
    seq: &MatrixSequence,
    mu: f64,
    w0: &DMatrix<f64>,
    mode: GradientMode,
    rng: &mut R,
) -> Result<NetworkState, OptimizerError> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(OptimizerError::BadStepSize(mu));
    }
    check_dims(problem, seq, w0)?;
    let samples = draw_samples(problem, mode, rng);
    let grad = gradients_at(problem, w0, samples.as_deref());
    let g = &grad * mu;
    Ok(NetworkState { w: w0.clone(), g, iter: 0, last_grad: grad, last_samples: samples })
}

/// Advances the state by one iteration.
pub fn step<R: Rng + ?Sized>(
    state: &mut NetworkState,
    problem: &LeastSquaresProblem,
    seq: &MatrixSequence,
    mu: f64,
    mode: GradientMode,
    rng: &mut R,
) -> Result<(), OptimizerError> {
    let i = state.iter + 1;
    let a = seq.matrix_for_iteration(i);
    let w = mix(a, &(&state.w - &state.g));
    let samples = draw_samples(problem, mode, rng);
    let grad = gradients_at(problem, &w, samples.as_deref());
    // (G - μ∇̂_{i-1}) + μ∇̂_i, in this order
    let mut inner = &state.g - &state.last_grad * mu;
    inner += &grad * mu;
    let g = mix(a, &inner);
    state.w = w;
    state.g = g;
    state.iter = i;
    state.last_grad = grad;
    state.last_samples = samples;
    if !all_finite(&state.w) || !all_finite(&state.g) {
        return Err(OptimizerError::Diverged(i));
    }
    Ok(())
}

/// Companion recursion in `(W, Y)` with `Y_i = G_i − μ A_i ∇̂J(W_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub w: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub iter: usize,
}

/// `Y_0 = μ∇̂J(W_0) − μ A_0 ∇̂J(W_0)` where `A_0` is the last matrix of the cycle.
pub fn transformed_init(
    problem: &LeastSquaresProblem,
    seq: &MatrixSequence,
    mu: f64,
    w0: &DMatrix<f64>,
    record: &NoiseRecord,
) -> Result<TransformedState, OptimizerError> {
    check_dims(problem, seq, w0)?;
    let grad = gradients_at(problem, w0, record.samples_at(0)?);
    let g0 = &grad * mu;
    let y = g0 - mix(seq.matrix_for_iteration(0), &grad) * mu;
    Ok(TransformedState { w: w0.clone(), y, iter: 0 })
}

/// ```text
/// W_i = A W − A Y − μ A A_prev ∇̂J(W)
/// Y_i = A Y − μ A (I − A_prev) ∇̂J(W)
/// ```
pub fn transformed_step(
    state: &mut TransformedState,
    problem: &LeastSquaresProblem,
    seq: &MatrixSequence,
    mu: f64,
    record: &NoiseRecord,
) -> Result<(), OptimizerError> {
    let i = state.iter + 1;
    let a = seq.matrix_for_iteration(i);
    let a_prev = seq.matrix_for_iteration(i - 1);
    let grad = gradients_at(problem, &state.w, record.samples_at(i - 1)?);
    let prev_mixed = mix(a_prev, &grad);
    let w = mix(a, &state.w) - mix(a, &state.y) - mix(a, &prev_mixed) * mu;
    let y = mix(a, &state.y) - mix(a, &(&grad - &prev_mixed)) * mu;
    state.w = w;
    state.y = y;
    state.iter = i;
    if !all_finite(&state.w) || !all_finite(&state.y) {
        return Err(OptimizerError::Diverged(i));
    }
    Ok(())
}

/// `Z_i = Y_i + μ A_i ∇J(w̄_i)`, true gradients at the centroid.
pub fn transformed_z(
    state: &TransformedState,
    problem: &LeastSquaresProblem,
    seq: &MatrixSequence,
    mu: f64,
) -> DMatrix<f64> {
    let (k, m) = state.w.shape();
    let centroid = column_mean(&state.w);
    let mut at_centroid = DMatrix::zeros(k, m);
    for r in 0..k {
        at_centroid.row_mut(r).copy_from(&centroid.transpose());
    }
    let grad = gradients_at(problem, &at_centroid, None);
    &state.y + mix(seq.matrix_for_iteration(state.iter), &grad) * mu
}

pub fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let k = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / k))
}

fn spread(x: &DMatrix<f64>) -> f64 {
    let mean = column_mean(x);
    let mut s = 0.0;
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            s += (x[(r, c)] - mean[c]).powi(2);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `(1/K) Σ_k ‖w_k − w^o‖²`.
    pub msd: f64,
    /// `‖w^o − w̄‖²`.
    pub centroid_err: f64,
    /// `Σ_k ‖w_k − w̄‖²`, not normalized by K.
    pub consensus_w: f64,
    pub consensus_z: Option<f64>,
    /// `consensus_w + consensus_z`, or `consensus_w` alone when Z is absent.
    pub consensus_x: f64,
}

impl Metrics {
    pub fn measure(w: &DMatrix<f64>, w_opt: &DVector<f64>, z: Option<&DMatrix<f64>>) -> Self {
        let k = w.nrows();
        let mut msd = 0.0;
        for r in 0..k {
            for c in 0..w.ncols() {
                msd += (w[(r, c)] - w_opt[c]).powi(2);
            }
        }
        msd /= k as f64;
        let centroid_err = (w_opt - column_mean(w)).norm_squared();
        let consensus_w = spread(w);
        let consensus_z = z.map(spread);
        let consensus_x = consensus_w + consensus_z.unwrap_or(0.0);
        Self { msd, centroid_err, consensus_w, consensus_z, consensus_x }
    }

    /// True when `consensus_x` excludes the Z component.
    pub fn partial_consensus(&self) -> bool {
        self.consensus_z.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mu: f64,
    pub iterations: usize,
    pub seed: u64,
    pub mode: GradientMode,
    pub diagnostics: bool,
    /// Initial models; zero when `None`.
    pub w0: Option<DMatrix<f64>>,
}

impl RunOptions {
    pub fn new(mu: f64, iterations: usize, seed: u64) -> Self {
        Self { mu, iterations, seed, mode: GradientMode::Stochastic, diagnostics: false, w0: None }
    }

    pub fn deterministic(mut self) -> Self {
        self.mode = GradientMode::Deterministic;
        self
    }

    pub fn with_diagnostics(mut self) -> Self {
        self.diagnostics = true;
        self
    }
}

/// Worst structural defects seen over a run, each scaled by `max(1, magnitude)`
/// of the quantities compared so that they read as relative rounding error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// `|mean G − μ mean ∇̂J(W)|`.
    pub tracking_defect: f64,
    /// `|w̄_i − w̄_{i−1} + (μ/K) Σ_k ∇̂J_k(w_{k,i−1})|`.
    pub centroid_residual: f64,
    /// `|1ᵀ Y|`, transformed recursion only.
    pub y_mean_defect: Option<f64>,
    /// `max |W_primal − W_transformed|`, transformed recursion only.
    pub equiv_defect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub metrics: Vec<Metrics>,
    /// Per-iteration primal/transformed gap when diagnostics are on.
    pub equiv_defect: Vec<Option<f64>>,
    pub diagnostics: Diagnostics,
    /// Iteration at which non-finite values appeared; the series stops there.
    pub diverged_at: Option<usize>,
    pub final_w: DMatrix<f64>,
}

pub const TRAJECTORY_HEADER: &str = "iter,msd,centroid_err,consensus_w,consensus_z,equiv_defect";

impl Trajectory {
    pub fn msd(&self) -> Vec<f64> {
        self.metrics.iter().map(|m| m.msd).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.metrics.len() * 96);
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for (i, (m, e)) in self.metrics.iter().zip(&self.equiv_defect).enumerate() {
            let z = m.consensus_z.map(|v| format!("{v:e}")).unwrap_or_default();
            let e = e.map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(out, "{i},{:e},{:e},{:e},{z},{e}", m.msd, m.centroid_err, m.consensus_w);
        }
        out
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn scaled(defect: f64, scale: f64) -> f64 {
    defect / scale.max(1.0)
}

/// Runs `iterations` steps from `w0` (zero by default) and records metrics at
/// every iteration including `i = 0`. With diagnostics on, the transformed
/// recursion is replayed on the same sample indices alongside the primal one.
pub fn run(
    problem: &LeastSquaresProblem,
    w_opt: &DVector<f64>,
    seq: &MatrixSequence,
    opts: &RunOptions,
) -> Result<Trajectory, OptimizerError> {
    if opts.iterations == 0 {
        return Err(OptimizerError::NoIterations);
    }
    let (k, m) = (problem.agents(), problem.dimension());
    let w0 = opts.w0.clone().unwrap_or_else(|| DMatrix::zeros(k, m));
    let mu = opts.mu;
    let mut rng = rng::seeded(opts.seed);
    let mut state = init(problem, seq, mu, &w0, opts.mode, &mut rng)?;

    let mut record = match opts.mode {
        GradientMode::Deterministic => NoiseRecord::Deterministic,
        GradientMode::Stochastic => NoiseRecord::Samples(vec![state.last_samples.clone().unwrap_or_default()]),
    };
    let mut companion = if opts.diagnostics { Some(transformed_init(problem, seq, mu, &w0, &record)?) } else { None };

    let mut diag = Diagnostics::default();
    if companion.is_some() {
        diag.y_mean_defect = Some(0.0);
        diag.equiv_defect = Some(0.0);
    }
    let mut metrics = Vec::with_capacity(opts.iterations + 1);
    let mut equiv = Vec::with_capacity(opts.iterations + 1);

    let observe = |state: &NetworkState,
                   companion: Option<&TransformedState>,
                   diag: &mut Diagnostics,
                   metrics: &mut Vec<Metrics>,
                   equiv: &mut Vec<Option<f64>>| {
        let g_mean = column_mean(&state.g);
        let grad_mean = column_mean(&state.last_grad) * mu;
        let t = (&g_mean - &grad_mean).amax();
        diag.tracking_defect = diag.tracking_defect.max(scaled(t, g_mean.amax().max(grad_mean.amax())));
        let (z, e) = match companion {
            Some(c) => {
                let e = max_abs(&(&state.w - &c.w));
                let ysum = column_mean(&c.y) * k as f64;
                let yscale = max_abs(&c.y) * k as f64;
                diag.y_mean_defect = diag.y_mean_defect.map(|d| d.max(scaled(ysum.amax(), yscale)));
                diag.equiv_defect = diag.equiv_defect.map(|d| d.max(scaled(e, max_abs(&state.w))));
                (Some(transformed_z(c, problem, seq, mu)), Some(e))
            }
            None => (None, None),
        };
        metrics.push(Metrics::measure(&state.w, w_opt, z.as_ref()));
        equiv.push(e);
    };

    observe(&state, companion.as_ref(), &mut diag, &mut metrics, &mut equiv);
    let mut diverged_at = None;
    for _ in 0..opts.iterations {
        let prev_centroid = column_mean(&state.w);
        let prev_grad_sum = column_mean(&state.last_grad) * mu;
        if let Err(e) = step(&mut state, problem, seq, mu, opts.mode, &mut rng) {
            match e {
                OptimizerError::Diverged(i) => {
                    diverged_at = Some(i);
                    break;
                }
                other => return Err(other),
            }
        }
        let centroid = column_mean(&state.w);
        let r = (&centroid - &prev_centroid + &prev_grad_sum).amax();
        diag.centroid_residual = diag.centroid_residual.max(scaled(r, prev_centroid.amax().max(centroid.amax())));

        if let NoiseRecord::Samples(s) = &mut record {
            s.push(state.last_samples.clone().unwrap_or_default());
        }
        if let Some(c) = companion.as_mut() {
            if let Err(e) = transformed_step(c, problem, seq, mu, &record) {
                match e {
                    OptimizerError::Diverged(i) => {
                        diverged_at = Some(i);
                        break;
                    }
                    other => return Err(other),
                }
            }
        }
        observe(&state, companion.as_ref(), &mut diag, &mut metrics, &mut equiv);
    }
    Ok(Trajectory { metrics, equiv_defect: equiv, diagnostics: diag, diverged_at, final_w: state.w })
}
