//! Finite-time consensus sequences: construction, truncation, perturbation
//! and certification.
//!
//! A sequence `A_1 … A_τ` is applied cyclically; iteration `i ≥ 1` uses
//! `A_{((i-1) mod τ) + 1}`, so after one full period the accumulated product is
//! `A_τ ⋯ A_1`. Its spectral distance to `(1/K) 1 1ᵀ` is the approximation
//! error `ε`, cached on every sequence and recomputed whenever one is derived.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{CombinationMatrix, Graph, GraphError, TopologyKind, DEFAULT_TOLERANCE};
use crate::linalg;

const MAX_BISECTION_STEPS: usize = 60;
const MAX_PREFIX_CANDIDATES: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FtcError {
    #[error("sequence must contain at least one matrix")]
    Empty,
    #[error("dimension mismatch: expected {expected}x{expected}, matrix {index} is {got}x{got}")]
    DimensionMismatch { expected: usize, got: usize, index: usize },
    #[error("graph is not a hypercube: {0}")]
    NotHypercube(String),
    #[error("graph is not a path on a power-of-two number of nodes: {0}")]
    NotDyadicPath(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("target epsilon {target} must exceed the current epsilon {current}")]
    TargetNotAbove { target: f64, current: f64 },
    #[error("target epsilon must lie in [0, 1) and tolerance must be positive (target {target}, tol {tol})")]
    BadTarget { target: f64, tol: f64 },
    #[error("could not reach epsilon {target} within tolerance; achievable range observed [{low}, {high}]")]
    Unreachable { target: f64, low: f64, high: f64 },
    #[error("truncation length {requested} outside [1, {available}]")]
    TruncationRange { requested: usize, available: usize },
    #[error("too many candidate orderings ({0}) for prefix search")]
    TooManyOrderings(usize),
    #[error("sequence text parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Order in which Laplacian factors `I - L/λ` are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorOrdering {
    /// Largest eigenvalue first.
    #[default]
    Descending,
    Ascending,
    /// Greedy Leja ordering starting from the largest eigenvalue.
    Leja,
}

/// How repeated Laplacian eigenvalues are turned into factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Multiplicity {
    /// One factor per distinct nonzero eigenvalue (clustered at a relative 1e-8).
    #[default]
    Distinct,
    /// One factor per eigenvalue instance.
    PerInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSequence {
    matrices: Vec<CombinationMatrix>,
    epsilon: f64,
    mixing_checks: Vec<bool>,
}

impl MatrixSequence {
    pub fn new(matrices: Vec<CombinationMatrix>) -> Result<Self, FtcError> {
        let epsilon = measure_epsilon(&matrices)?;
        let mixing_checks = matrices.iter().map(|m| check_matrix(m, m.tolerance()).pass).collect();
        Ok(Self { matrices, epsilon, mixing_checks })
    }

    pub fn matrices(&self) -> &[CombinationMatrix] {
        &self.matrices
    }

    /// Sequence length τ.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Number of agents K.
    pub fn size(&self) -> usize {
        self.matrices[0].size()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Per-matrix pass flags at each matrix's own tolerance.
    pub fn mixing_flags(&self) -> &[bool] {
        &self.mixing_checks
    }

    /// Matrix applied at iteration `i`.
    ///
    /// `i = 0` maps to the last matrix of the cycle, which is the convention the
    /// transformed recursion uses for its initial condition.
    pub fn matrix_for_iteration(&self, i: usize) -> &CombinationMatrix {
        let tau = self.len();
        &self.matrices[(i + tau - 1) % tau]
    }

    /// `A_τ ⋯ A_1`.
    pub fn product(&self) -> DMatrix<f64> {
        ordered_product(self.matrices.iter().map(CombinationMatrix::entries))
    }

    pub fn respects(&self, g: &Graph) -> bool {
        self.matrices.iter().all(|m| m.respects(g))
    }

    /// Applies the sequence in the given order; `order` must be a permutation
    /// of a subset of indices (repeats allowed).
    pub fn reordered(&self, order: &[usize]) -> Result<Self, FtcError> {
        let picked = order
            .iter()
            .map(|&i| {
                self.matrices
                    .get(i)
                    .cloned()
                    .ok_or(FtcError::TruncationRange { requested: i + 1, available: self.len() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(picked)
    }

    /// Header `K tau epsilon`, then τ blocks of K rows of K decimals.
    pub fn to_text(&self) -> String {
        let k = self.size();
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {:.16e}", k, self.len(), self.epsilon);
        for m in &self.matrices {
            for row in 0..k {
                let line: Vec<String> = (0..k).map(|c| format!("{:.16e}", m.entries()[(row, c)])).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. ε is recomputed, not trusted.
    pub fn from_text(text: &str) -> Result<Self, FtcError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(FtcError::Parse { line: 1, msg: "empty input".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(FtcError::Parse { line: hline, msg: "expected 'K tau epsilon'".into() });
        }
        let k: usize = parse_field(fields[0], hline)?;
        let tau: usize = parse_field(fields[1], hline)?;
        let _: f64 = parse_field(fields[2], hline)?;
        let mut matrices = Vec::with_capacity(tau);
        for _ in 0..tau {
            let mut m = DMatrix::zeros(k, k);
            for r in 0..k {
                let (line, content) =
                    lines.next().ok_or(FtcError::Parse { line: hline, msg: "truncated matrix block".into() })?;
                let values: Vec<&str> = content.split_whitespace().collect();
                if values.len() != k {
                    return Err(FtcError::Parse { line, msg: format!("expected {k} values, found {}", values.len()) });
                }
                for (c, v) in values.iter().enumerate() {
                    m[(r, c)] = parse_field(v, line)?;
                }
            }
            matrices.push(CombinationMatrix::new(m, DEFAULT_TOLERANCE)?);
        }
        if let Some((line, _)) = lines.next() {
            return Err(FtcError::Parse { line, msg: "unexpected trailing content".into() });
        }
        Self::new(matrices)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, FtcError> {
    s.parse().map_err(|_| FtcError::Parse { line, msg: format!("cannot parse '{s}'") })
}

fn ordered_product<'a>(mats: impl Iterator<Item = &'a DMatrix<f64>>) -> DMatrix<f64> {
    let mut iter = mats;
    let Some(first) = iter.next() else {
        return DMatrix::zeros(0, 0);
    };
    let mut p = first.clone();
    for m in iter {
        p = m * p;
    }
    p
}

fn epsilon_of(mats: &[&DMatrix<f64>]) -> f64 {
    let k = mats[0].nrows();
    let p = ordered_product(mats.iter().copied());
    linalg::spectral_norm(&(p - linalg::averaging_matrix(k)))
}

/// `‖A_τ ⋯ A_1 - (1/K) 1 1ᵀ‖₂`.
pub fn measure_epsilon(seq: &[CombinationMatrix]) -> Result<f64, FtcError> {
    let first = seq.first().ok_or(FtcError::Empty)?;
    let k = first.size();
    for (index, m) in seq.iter().enumerate() {
        if m.size() != k {
            return Err(FtcError::DimensionMismatch { expected: k, got: m.size(), index });
        }
    }
    let mats: Vec<&DMatrix<f64>> = seq.iter().map(CombinationMatrix::entries).collect();
    Ok(epsilon_of(&mats))
}

/// Dimension-wise pairwise averaging `A_j = ½(I + P_j)` on a hypercube.
pub fn hypercube_sequence(g: &Graph) -> Result<MatrixSequence, FtcError> {
    let k = g.node_count();
    if k < 2 || !k.is_power_of_two() {
        return Err(FtcError::NotHypercube(format!("K = {k} is not a power of two ≥ 2")));
    }
    let dims = k.trailing_zeros() as usize;
    if g.edges().len() != dims * k / 2 {
        return Err(FtcError::NotHypercube(format!("expected {} edges, found {}", dims * k / 2, g.edges().len())));
    }
    let mut matrices = Vec::with_capacity(dims);
    for j in 0..dims {
        let mut a = DMatrix::zeros(k, k);
        for u in 0..k {
            let v = u ^ (1 << j);
            if !g.has_edge(u, v) {
                return Err(FtcError::NotHypercube(format!("missing edge ({u}, {v})")));
            }
            a[(u, u)] = 0.5;
            a[(u, v)] = 0.5;
        }
        matrices.push(CombinationMatrix::new(a, DEFAULT_TOLERANCE)?);
    }
    MatrixSequence::new(matrices)
}

/// Factors `I - L/λ` over the nonzero Laplacian eigenvalues.
pub fn laplacian_factorization(g: &Graph, ordering: FactorOrdering) -> Result<MatrixSequence, FtcError> {
    laplacian_factorization_with(g, ordering, Multiplicity::Distinct)
}

pub fn laplacian_factorization_with(
    g: &Graph,
    ordering: FactorOrdering,
    multiplicity: Multiplicity,
) -> Result<MatrixSequence, FtcError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected.into());
    }
    let k = g.node_count();
    let l = g.laplacian();
    let eig = linalg::symmetric_eigenvalues(&l);
    // connected: exactly one zero eigenvalue, the smallest
    let nonzero = &eig[1..];
    let mut roots: Vec<f64> = match multiplicity {
        Multiplicity::PerInstance => nonzero.to_vec(),
        Multiplicity::Distinct => cluster(nonzero),
    };
    roots = match ordering {
        FactorOrdering::Ascending => roots,
        FactorOrdering::Descending => roots.into_iter().rev().collect(),
        FactorOrdering::Leja => leja_order(roots),
    };
    if roots.is_empty() {
        return MatrixSequence::new(vec![CombinationMatrix::identity(k)]);
    }
    let eye = DMatrix::<f64>::identity(k, k);
    let matrices = roots
        .iter()
        .map(|&lam| CombinationMatrix::new(&eye - &l / lam, 1e-10))
        .collect::<Result<Vec<_>, _>>()?;
    MatrixSequence::new(matrices)
}

fn cluster(sorted: &[f64]) -> Vec<f64> {
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for &v in sorted {
        match groups.last_mut() {
            Some(g) if (v - g[0]).abs() <= 1e-8 * v.abs().max(1.0) => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect()
}

fn leja_order(mut roots: Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(roots.len());
    if roots.is_empty() {
        return out;
    }
    roots.sort_by(f64::total_cmp);
    out.push(roots.pop().unwrap_or_default());
    while !roots.is_empty() {
        let score = |x: f64| out.iter().map(|y: &f64| (x - y).abs().max(f64::MIN_POSITIVE).ln()).sum::<f64>();
        let (idx, _) = roots
            .iter()
            .enumerate()
            .max_by(|a, b| score(*a.1).total_cmp(&score(*b.1)))
            .unwrap_or((0, &0.0));
        out.push(roots.remove(idx));
    }
    out
}

/// Exact sequence of length `K - 1` on a path whose node count is a power of
/// two, built from neighbour averaging (weight ½) and neighbour swaps.
///
/// Stage `s` averages the pairs `(2i, 2i+1)`. Between stages, odd–even swaps
/// interleave the two halves of every block of `2^(s+1)` nodes so that nodes
/// holding complementary partial averages become adjacent. Every matrix is a
/// symmetric permutation-or-average with entries in `{0, ½, 1}`, so each one
/// is doubly stochastic with spectral radius one.
pub fn dyadic_path_sequence(g: &Graph) -> Result<MatrixSequence, FtcError> {
    let k = g.node_count();
    if !k.is_power_of_two() {
        return Err(FtcError::NotDyadicPath(format!("K = {k}")));
    }
    let is_path = g.edges().len() + 1 == k && (1..k).all(|v| g.has_edge(v - 1, v));
    if !is_path {
        return Err(FtcError::NotDyadicPath("edges are not (i, i+1)".into()));
    }
    if k == 1 {
        return MatrixSequence::new(vec![CombinationMatrix::identity(1)]);
    }
    let pair_average = || {
        let mut a = DMatrix::zeros(k, k);
        for u in (0..k).step_by(2) {
            a[(u, u)] = 0.5;
            a[(u, u + 1)] = 0.5;
            a[(u + 1, u)] = 0.5;
            a[(u + 1, u + 1)] = 0.5;
        }
        a
    };
    let swaps = |left_ends: &[usize]| {
        let mut a = DMatrix::identity(k, k);
        for &u in left_ends {
            a[(u, u)] = 0.0;
            a[(u + 1, u + 1)] = 0.0;
            a[(u, u + 1)] = 1.0;
            a[(u + 1, u)] = 1.0;
        }
        a
    };
    let dims = k.trailing_zeros() as usize;
    let mut raw = vec![pair_average()];
    for stage in 1..dims {
        let half = 1usize << stage;
        let block = half << 1;
        for step in 0..half - 1 {
            let mut ends = Vec::new();
            for base in (0..k).step_by(block) {
                let mid = base + half;
                let mut t = mid - 1 - step;
                while t < mid + step {
                    ends.push(t);
                    t += 2;
                }
            }
            raw.push(swaps(&ends));
        }
        raw.push(pair_average());
    }
    let matrices = raw
        .into_iter()
        .map(|m| CombinationMatrix::new(m, DEFAULT_TOLERANCE))
        .collect::<Result<Vec<_>, _>>()?;
    MatrixSequence::new(matrices)
}

/// Picks the exact construction that fits the graph best.
///
/// Hypercubes use pairwise dimension averaging, power-of-two paths the
/// averaging/swap schedule, everything else the Laplacian factorization.
pub fn exact_sequence(g: &Graph) -> Result<MatrixSequence, FtcError> {
    match g.kind() {
        TopologyKind::Hypercube => hypercube_sequence(g),
        TopologyKind::Path if g.node_count().is_power_of_two() => dyadic_path_sequence(g),
        _ => laplacian_factorization(g, FactorOrdering::Descending),
    }
}

/// Symmetric noise on every nonzero off-diagonal entry, diagonals absorbing
/// the change, scaled by bisection until ε lands within `tol` of the target.
pub fn perturb_to_target(
    seq: &MatrixSequence,
    target_eps: f64,
    rng_seed: u64,
    tol: f64,
) -> Result<MatrixSequence, FtcError> {
    if !(0.0..1.0).contains(&target_eps) || tol.is_nan() || tol <= 0.0 {
        return Err(FtcError::BadTarget { target: target_eps, tol });
    }
    if target_eps <= seq.epsilon() {
        return Err(FtcError::TargetNotAbove { target: target_eps, current: seq.epsilon() });
    }
    let noise = PerturbationNoise::draw(seq, rng_seed);
    let eps_at = |amp: f64| -> f64 {
        let mats = noise.apply_raw(seq, amp);
        let refs: Vec<&DMatrix<f64>> = mats.iter().collect();
        epsilon_of(&refs)
    };

    let base = seq.epsilon();
    let mut lo = 0.0;
    let scale = seq
        .matrices()
        .iter()
        .map(|m| {
            let e = m.entries();
            let mut off = 0.0_f64;
            for r in 0..e.nrows() {
                for c in 0..e.ncols() {
                    if r != c {
                        off = off.max(e[(r, c)].abs());
                    }
                }
            }
            off
        })
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let mut hi = 1e-3 * scale;
    let mut highest = base;
    let mut hi_eps = eps_at(hi);
    let mut doublings = 0;
    while hi_eps < target_eps {
        highest = highest.max(hi_eps);
        doublings += 1;
        if doublings > MAX_BISECTION_STEPS || !hi_eps.is_finite() {
            return Err(FtcError::Unreachable { target: target_eps, low: base, high: highest });
        }
        lo = hi;
        hi *= 2.0;
        hi_eps = eps_at(hi);
    }
    if (hi_eps - target_eps).abs() <= tol {
        return noise.apply(seq, hi);
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let e = eps_at(mid);
        if (e - target_eps).abs() <= tol {
            return noise.apply(seq, mid);
        }
        if e < target_eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(FtcError::Unreachable { target: target_eps, low: base, high: hi_eps })
}

/// Uniform draws on `[-1, 1]`, one per nonzero upper-triangular off-diagonal
/// entry, in matrix order then row-major order.
#[derive(Debug, Clone)]
pub(crate) struct PerturbationNoise {
    draws: Vec<Vec<(usize, usize, f64)>>,
}

impl PerturbationNoise {
    pub(crate) fn draw(seq: &MatrixSequence, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = seq
            .matrices()
            .iter()
            .map(|m| {
                let e = m.entries();
                let k = e.nrows();
                let mut d = Vec::new();
                for r in 0..k {
                    for c in (r + 1)..k {
                        if e[(r, c)] != 0.0 {
                            d.push((r, c, rng.gen_range(-1.0..=1.0)));
                        }
                    }
                }
                d
            })
            .collect();
        Self { draws }
    }

    fn apply_raw(&self, seq: &MatrixSequence, amplitude: f64) -> Vec<DMatrix<f64>> {
        seq.matrices()
            .iter()
            .zip(&self.draws)
            .map(|(m, draws)| {
                let mut a = m.entries().clone();
                for &(r, c, u) in draws {
                    let delta = amplitude * u;
                    a[(r, c)] += delta;
                    a[(c, r)] += delta;
                    a[(r, r)] -= delta;
                    a[(c, c)] -= delta;
                }
                a
            })
            .collect()
    }

    pub(crate) fn apply(&self, seq: &MatrixSequence, amplitude: f64) -> Result<MatrixSequence, FtcError> {
        let matrices = self
            .apply_raw(seq, amplitude)
            .into_iter()
            .zip(seq.matrices())
            .map(|(a, orig)| CombinationMatrix::new(a, orig.tolerance()))
            .collect::<Result<Vec<_>, _>>()?;
        MatrixSequence::new(matrices)
    }
}

/// The first `tau_prime` matrices; cycling afterwards uses the shorter period.
pub fn truncate(seq: &MatrixSequence, tau_prime: usize) -> Result<MatrixSequence, FtcError> {
    if tau_prime == 0 || tau_prime > seq.len() {
        return Err(FtcError::TruncationRange { requested: tau_prime, available: seq.len() });
    }
    MatrixSequence::new(seq.matrices()[..tau_prime].to_vec())
}

/// Reorders the sequence so that its first `tau_prime` matrices have the
/// smallest product error over all ordered selections; the remaining matrices
/// follow in their original order.
pub fn minimize_prefix_epsilon(seq: &MatrixSequence, tau_prime: usize) -> Result<MatrixSequence, FtcError> {
    let n = seq.len();
    if tau_prime == 0 || tau_prime > n {
        return Err(FtcError::TruncationRange { requested: tau_prime, available: n });
    }
    let candidates = (n - tau_prime + 1..=n).try_fold(1usize, |acc, f| acc.checked_mul(f));
    match candidates {
        Some(c) if c <= MAX_PREFIX_CANDIDATES => {}
        Some(c) => return Err(FtcError::TooManyOrderings(c)),
        None => return Err(FtcError::TooManyOrderings(usize::MAX)),
    }
    let mats: Vec<&DMatrix<f64>> = seq.matrices().iter().map(CombinationMatrix::entries).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = Vec::with_capacity(tau_prime);
    let mut used = vec![false; n];
    search_prefix(&mats, tau_prime, &mut current, &mut used, &mut best);
    let (_, prefix) = best.ok_or(FtcError::Empty)?;
    let mut order = prefix.clone();
    order.extend((0..n).filter(|i| !prefix.contains(i)));
    seq.reordered(&order)
}

fn search_prefix(
    mats: &[&DMatrix<f64>],
    len: usize,
    current: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut Option<(f64, Vec<usize>)>,
) {
    if current.len() == len {
        let picked: Vec<&DMatrix<f64>> = current.iter().map(|&i| mats[i]).collect();
        let e = epsilon_of(&picked);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            *best = Some((e, current.clone()));
        }
        return;
    }
    for i in 0..mats.len() {
        if !used[i] {
            used[i] = true;
            current.push(i);
            search_prefix(mats, len, current, used, best);
            current.pop();
            used[i] = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixReport {
    pub symmetry_defect: f64,
    pub row_sum_defect: f64,
    pub spectral_radius: f64,
    pub min_entry: f64,
    pub pass: bool,
}

fn check_matrix(m: &CombinationMatrix, tol: f64) -> MatrixReport {
    let e = m.entries();
    let symmetry_defect = linalg::symmetry_defect(e);
    let row_sum_defect = linalg::row_sum_defect(e);
    let spectral_radius = linalg::symmetric_spectral_radius(e);
    let min_entry = e.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = symmetry_defect <= tol && row_sum_defect <= tol && spectral_radius <= 1.0 + tol;
    MatrixReport { symmetry_defect, row_sum_defect, spectral_radius, min_entry, pass }
}

/// Symmetry, unit row sums and spectral radius at most one, per matrix.
///
/// Primitivity and per-matrix connectivity are deliberately not checked.
pub fn validate_mixing(seq: &MatrixSequence, tol: f64) -> Vec<MatrixReport> {
    seq.matrices().iter().map(|m| check_matrix(m, tol)).collect()
}
