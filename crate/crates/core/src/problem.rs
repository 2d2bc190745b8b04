//! Decentralized least squares: agent `k` holds `N` samples `(h, γ)` and the
//! local risk `J_k(w) = (1/2N) Σ_n (γ_n − h_nᵀ w)²`.
//!
//! Stochastic gradients pick one sample uniformly; the label noise is drawn
//! once at generation, so the dataset is fixed and only indices are random.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::linalg;
use crate::rng::GaussianStream;

/// Radii used when fitting the noise-growth constant.
pub const PROBE_RADII: [f64; 3] = [0.1, 1.0, 10.0];
pub const PROBE_COUNT: usize = 200;
pub const PROBE_SEED: u64 = 0x5eed_b0b5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("K, M and N must be at least 1 (got K={k}, M={m}, N={n})")]
    EmptyDimension { k: usize, m: usize, n: usize },
    #[error("noise variance must be finite and nonnegative (got {0})")]
    BadVariance(f64),
    #[error("agent index {index} out of range for K={k}")]
    AgentOutOfRange { index: usize, k: usize },
    #[error("sample index {index} out of range for N={n}")]
    SampleOutOfRange { index: usize, n: usize },
    #[error("vector has length {got}, expected M={expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("aggregate Hessian is singular (smallest eigenvalue {0:e})")]
    SingularHessian(f64),
    #[error("problem CSV parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresProblem {
    k: usize,
    m: usize,
    n: usize,
    // row-major per agent: features[k][n*M + j]
    features: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
    w_true: DVector<f64>,
    noise_variance: f64,
}

/// Aggregate constants that feed the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    pub nu: f64,
    pub delta: f64,
    pub zeta_sq: f64,
    pub sigma_sq: f64,
    pub beta_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optima {
    pub global: DVector<f64>,
    pub local: Vec<DVector<f64>>,
    /// True for agents whose local Hessian was singular (minimum-norm solution used).
    pub local_singular: Vec<bool>,
    pub sigma_sq_local: Vec<f64>,
    pub beta_sq_local: Vec<f64>,
    pub constants: ProblemConstants,
}

impl LeastSquaresProblem {
    /// Draw order: `w_true`, then per agent and per sample the `M` features
    /// followed by the label noise.
    pub fn generate(k: usize, m: usize, n: usize, noise_variance: f64, seed: u64) -> Result<Self, ProblemError> {
        if k == 0 || m == 0 || n == 0 {
            return Err(ProblemError::EmptyDimension { k, m, n });
        }
        if !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(ProblemError::BadVariance(noise_variance));
        }
        let mut g = GaussianStream::new(seed);
        let w_true = DVector::from_fn(m, |_, _| g.next_standard());
        let mut features = Vec::with_capacity(k);
        let mut labels = Vec::with_capacity(k);
        let mut noise = Vec::with_capacity(k);
        for _ in 0..k {
            let mut f = Vec::with_capacity(n * m);
            let mut l = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let start = f.len();
                for _ in 0..m {
                    f.push(g.next_standard());
                }
                let e = g.next_normal(noise_variance);
                let dot: f64 = f[start..].iter().zip(w_true.iter()).map(|(a, b)| a * b).sum();
                l.push(dot + e);
                v.push(e);
            }
            features.push(f);
            labels.push(l);
            noise.push(v);
        }
        Ok(Self { k, m, n, features, labels, noise, w_true, noise_variance })
    }

    /// Builds a problem from explicit data; `features[k]` is row-major `N×M`.
    pub fn from_data(
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        m: usize,
        w_true: DVector<f64>,
        noise_variance: f64,
    ) -> Result<Self, ProblemError> {
        let k = features.len();
        let n = labels.first().map_or(0, Vec::len);
        if k == 0 || m == 0 || n == 0 || labels.len() != k {
            return Err(ProblemError::EmptyDimension { k, m, n });
        }
        for (f, l) in features.iter().zip(&labels) {
            if l.len() != n {
                return Err(ProblemError::DimensionMismatch { expected: n, got: l.len() });
            }
            if f.len() != n * m {
                return Err(ProblemError::DimensionMismatch { expected: n * m, got: f.len() });
            }
        }
        if w_true.len() != m {
            return Err(ProblemError::DimensionMismatch { expected: m, got: w_true.len() });
        }
        let noise = features
            .iter()
            .zip(&labels)
            .map(|(f, l)| {
                (0..n)
                    .map(|s| l[s] - f[s * m..(s + 1) * m].iter().zip(w_true.iter()).map(|(a, b)| a * b).sum::<f64>())
                    .collect()
            })
            .collect();
        Ok(Self { k, m, n, features, labels, noise, w_true, noise_variance })
    }

    pub fn agents(&self) -> usize {
        self.k
    }

    pub fn dimension(&self) -> usize {
        self.m
    }

    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn w_true(&self) -> &DVector<f64> {
        &self.w_true
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn feature(&self, k: usize, n: usize) -> &[f64] {
        &self.features[k][n * self.m..(n + 1) * self.m]
    }

    pub fn label(&self, k: usize, n: usize) -> f64 {
        self.labels[k][n]
    }

    /// The label noise recorded for sample `n` of agent `k`.
    pub fn label_noise(&self, k: usize, n: usize) -> f64 {
        self.noise[k][n]
    }

    fn check(&self, k: usize, w: &DVector<f64>) -> Result<(), ProblemError> {
        if k >= self.k {
            return Err(ProblemError::AgentOutOfRange { index: k, k: self.k });
        }
        if w.len() != self.m {
            return Err(ProblemError::DimensionMismatch { expected: self.m, got: w.len() });
        }
        Ok(())
    }

    fn residual(&self, k: usize, n: usize, w: &[f64]) -> f64 {
        let h = self.feature(k, n);
        h.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - self.labels[k][n]
    }

    /// `J_k(w)`.
    pub fn objective(&self, k: usize, w: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check(k, w)?;
        let s: f64 = (0..self.n).map(|n| self.residual(k, n, w.as_slice()).powi(2)).sum();
        Ok(s / (2.0 * self.n as f64))
    }

    /// `(1/N) Σ_n h_n (h_nᵀ w − γ_n)`.
    pub fn full_gradient(&self, k: usize, w: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        self.check(k, w)?;
        let mut out = DVector::zeros(self.m);
        self.full_gradient_into(k, w.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Gradient of the single-sample loss `½(γ_n − h_nᵀ w)²`.
    pub fn sample_gradient(&self, k: usize, n: usize, w: &DVector<f64>) -> Result<DVector<f64>, ProblemError> {
        self.check(k, w)?;
        if n >= self.n {
            return Err(ProblemError::SampleOutOfRange { index: n, n: self.n });
        }
        let mut out = DVector::zeros(self.m);
        self.sample_gradient_into(k, n, w.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// One uniformly drawn sample index, then its gradient.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        k: usize,
        w: &DVector<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>, ProblemError> {
        self.check(k, w)?;
        let n = self.draw_index(rng);
        self.sample_gradient(k, n, w)
    }

    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.n)
    }

    pub(crate) fn sample_gradient_into(&self, k: usize, n: usize, w: &[f64], out: &mut [f64]) {
        let r = self.residual(k, n, w);
        for (o, h) in out.iter_mut().zip(self.feature(k, n)) {
            *o = h * r;
        }
    }

    pub(crate) fn full_gradient_into(&self, k: usize, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for n in 0..self.n {
            let r = self.residual(k, n, w);
            for (o, h) in out.iter_mut().zip(self.feature(k, n)) {
                *o += h * r;
            }
        }
        let inv = 1.0 / self.n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    /// `R_k = (1/N) Σ_n h_n h_nᵀ`.
    pub fn local_hessian(&self, k: usize) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.m, self.m);
        for n in 0..self.n {
            let h = self.feature(k, n);
            for a in 0..self.m {
                for b in 0..self.m {
                    r[(a, b)] += h[a] * h[b];
                }
            }
        }
        r / self.n as f64
    }

    fn local_rhs(&self, k: usize) -> DVector<f64> {
        let mut b = DVector::zeros(self.m);
        for n in 0..self.n {
            let g = self.labels[k][n];
            for (bi, h) in b.iter_mut().zip(self.feature(k, n)) {
                *bi += h * g;
            }
        }
        b / self.n as f64
    }

    /// Mean Hessian `(1/K) Σ_k R_k`.
    pub fn aggregate_hessian(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.m, self.m);
        for k in 0..self.k {
            r += self.local_hessian(k);
        }
        r / self.k as f64
    }

    /// `E‖s‖²` at `w` by enumerating all samples of agent `k`.
    pub fn noise_second_moment(&self, k: usize, w: &DVector<f64>) -> Result<f64, ProblemError> {
        let full = self.full_gradient(k, w)?;
        let mut second = 0.0;
        for n in 0..self.n {
            let h = self.feature(k, n);
            let r = self.residual(k, n, w.as_slice());
            second += h.iter().map(|x| x * x).sum::<f64>() * r * r;
        }
        Ok(second / self.n as f64 - full.norm_squared())
    }

    /// Probe points around `center`: Gaussian directions scaled to the radii in
    /// [`PROBE_RADII`], cycling through them. Agent `k` gets its own stream.
    pub fn probe_points(&self, k: usize, center: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut g = GaussianStream::new(PROBE_SEED ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (0..PROBE_COUNT)
            .map(|j| {
                let mut dir = DVector::from_fn(self.m, |_, _| g.next_standard());
                let norm = dir.norm();
                if norm > 0.0 {
                    dir /= norm;
                } else {
                    dir[0] = 1.0;
                }
                center + dir * PROBE_RADII[j % PROBE_RADII.len()]
            })
            .collect()
    }

    /// Global and local minimizers plus the aggregate constants.
    pub fn optima_and_constants(&self) -> Result<Optima, ProblemError> {
        let agg = self.aggregate_hessian();
        let eig = linalg::symmetric_eigenvalues(&agg);
        let nu = eig[0];
        let top = eig[eig.len() - 1];
        if nu <= 1e-12 * top.max(1e-300) {
            return Err(ProblemError::SingularHessian(nu));
        }
        let mut rhs = DVector::zeros(self.m);
        for k in 0..self.k {
            rhs += self.local_rhs(k);
        }
        rhs /= self.k as f64;
        let global = agg.clone().cholesky().ok_or(ProblemError::SingularHessian(nu))?.solve(&rhs);

        let mut local = Vec::with_capacity(self.k);
        let mut local_singular = Vec::with_capacity(self.k);
        let mut sigma_sq_local = Vec::with_capacity(self.k);
        let mut beta_sq_local = Vec::with_capacity(self.k);
        let mut delta = 0.0_f64;
        for k in 0..self.k {
            let rk = self.local_hessian(k);
            let ek = linalg::symmetric_eigenvalues(&rk);
            let (lo, hi) = (ek[0], ek[ek.len() - 1]);
            delta = delta.max(hi);
            let bk = self.local_rhs(k);
            let singular = lo <= 1e-10 * hi.max(1e-300);
            let wk = if singular {
                let pinv = rk.pseudo_inverse(1e-10 * hi.max(1e-300)).unwrap_or_else(|_| DMatrix::zeros(self.m, self.m));
                pinv * bk
            } else {
                match rk.clone().cholesky() {
                    Some(c) => c.solve(&bk),
                    None => rk.pseudo_inverse(1e-10 * hi).unwrap_or_else(|_| DMatrix::zeros(self.m, self.m)) * bk,
                }
            };
            let sigma_k = self.noise_second_moment(k, &wk)?.max(0.0);
            let mut beta_k = 0.0_f64;
            for p in self.probe_points(k, &wk) {
                let dist = (&wk - &p).norm_squared();
                let excess = self.noise_second_moment(k, &p)? - sigma_k;
                beta_k = beta_k.max(excess / dist);
            }
            local.push(wk);
            local_singular.push(singular);
            sigma_sq_local.push(sigma_k);
            beta_sq_local.push(beta_k);
        }
        let zeta_sq = local.iter().map(|wk| (wk - &global).norm_squared()).sum();
        let constants = ProblemConstants {
            nu,
            delta,
            zeta_sq,
            sigma_sq: sigma_sq_local.iter().sum(),
            beta_sq: beta_sq_local.iter().sum(),
        };
        Ok(Optima { global, local, local_singular, sigma_sq_local, beta_sq_local, constants })
    }

    /// CSV blocks: a `K,M,N,noise_variance` header row, a `w_true` row, then
    /// one `agent,sample,label,noise,h_0..h_{M-1}` row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "K,M,N,noise_variance");
        let _ = writeln!(out, "{},{},{},{:e}", self.k, self.m, self.n, self.noise_variance);
        let wt: Vec<String> = self.w_true.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "w_true,{}", wt.join(","));
        let hcols: Vec<String> = (0..self.m).map(|j| format!("h_{j}")).collect();
        let _ = writeln!(out, "agent,sample,label,noise,{}", hcols.join(","));
        for k in 0..self.k {
            for n in 0..self.n {
                let h: Vec<String> = self.feature(k, n).iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "{k},{n},{:e},{:e},{}", self.labels[k][n], self.noise[k][n], h.join(","));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ProblemError> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, msg: &str| ProblemError::Parse { line, msg: msg.to_string() };
        let num = |s: &str, line: usize| -> Result<f64, ProblemError> {
            s.trim().parse::<f64>().map_err(|_| err(line, &format!("bad number '{s}'")))
        };
        let int = |s: &str, line: usize| -> Result<usize, ProblemError> {
            s.trim().parse::<usize>().map_err(|_| err(line, &format!("bad integer '{s}'")))
        };
        if lines.len() < 4 {
            return Err(err(lines.len(), "missing header blocks"));
        }
        let dims: Vec<&str> = lines[1].split(',').collect();
        if dims.len() != 4 {
            return Err(err(2, "expected K,M,N,noise_variance"));
        }
        let (k, m, n) = (int(dims[0], 2)?, int(dims[1], 2)?, int(dims[2], 2)?);
        let noise_variance = num(dims[3], 2)?;
        let wt: Vec<&str> = lines[2].split(',').collect();
        if wt.first() != Some(&"w_true") || wt.len() != m + 1 {
            return Err(err(3, "expected w_true row with M values"));
        }
        let w_true = DVector::from_iterator(m, wt[1..].iter().map(|s| num(s, 3)).collect::<Result<Vec<_>, _>>()?);
        let body = &lines[4..];
        if body.len() != k * n {
            return Err(err(lines.len(), &format!("expected {} sample rows, found {}", k * n, body.len())));
        }
        let mut features = vec![Vec::with_capacity(n * m); k];
        let mut labels = vec![Vec::with_capacity(n); k];
        let mut noise = vec![Vec::with_capacity(n); k];
        for (i, row) in body.iter().enumerate() {
            let line = i + 5;
            let cells: Vec<&str> = row.split(',').collect();
            if cells.len() != m + 4 {
                return Err(err(line, "wrong number of columns"));
            }
            let (a, s) = (int(cells[0], line)?, int(cells[1], line)?);
            if a != i / n || s != i % n {
                return Err(err(line, "rows out of order"));
            }
            labels[a].push(num(cells[2], line)?);
            noise[a].push(num(cells[3], line)?);
            for c in &cells[4..] {
                features[a].push(num(c, line)?);
            }
        }
        Ok(Self { k, m, n, features, labels, noise, w_true, noise_variance })
    }
}
