//! Stochastic variational inference with a Gaussian factor-covariance
//! approximation.
//!
//! `q_λ(ϑ) = N(μ, BBᵀ + D²)` with `B` a `p_ϑ × K` factor matrix whose leading
//! `K × K` block is lower triangular and `D = diag(d)`. Draws use the
//! reparameterisation `ϑ = μ + Bz + d ∘ ε`, and the single-sample gradient
//! estimate of the ELBO is
//!
//! ```text
//! g      = ∇ log h(ϑ) − ∇ log q_λ(ϑ)
//! ∇_μ    = g,   ∇_B = g zᵀ,   ∇_d = g ∘ ε
//! ```
//!
//! Steps are scaled elementwise by ADADELTA. All solves against the
//! covariance go through the Woodbury identity with a `K × K` Cholesky
//! factor, so `Υ` is never materialised during fitting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::inference::CorrectedCovariance;
use crate::model::{ExpectationEstimator, Heterogeneity, InterceptMode, Model, Observed};
use crate::sampler::{stream_rng, McEstimator, SamplerConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Variational parameters `λ = (μ, B, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    pub mu: Vec<f64>,
    /// Row-major `dim × k` factor loadings.
    pub factor: Vec<f64>,
    pub diag: Vec<f64>,
    pub k: usize,
}

/// Gradient with respect to `λ`, laid out like [`VariationalParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGradient {
    pub mu: Vec<f64>,
    pub factor: Vec<f64>,
    pub diag: Vec<f64>,
}

/// A reparameterised draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
}

impl VariationalParams {
    /// `q` centred at `mu` with zero factors and constant `diag`.
    pub fn new(mu: Vec<f64>, k: usize, diag: f64) -> Self {
        let dim = mu.len();
        let k = k.min(dim).max(1);
        Self {
            factor: vec![0.0; dim * k],
            diag: vec![diag; dim],
            mu,
            k,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn validate(&self) -> Result<()> {
        let p = self.dim();
        if self.diag.len() != p || self.factor.len() != p * self.k {
            return Err(Error::DimensionMismatch {
                what: "variational parameters",
                expected: p * self.k,
                got: self.factor.len(),
            });
        }
        Ok(())
    }

    /// Whether factor entry `(row, col)` is free (not in the fixed upper triangle).
    #[inline]
    pub fn factor_free(&self, row: usize, col: usize) -> bool {
        row >= col
    }

    pub fn factor_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.k, &self.factor)
    }

    /// `ϑ = μ + Bz + d ∘ ε` for given noise.
    pub fn transform(&self, z: &[f64], eps: &[f64]) -> Vec<f64> {
        let k = self.k;
        (0..self.dim())
            .map(|i| {
                let bz: f64 = self.factor[i * k..(i + 1) * k]
                    .iter()
                    .zip(z)
                    .map(|(b, z)| b * z)
                    .sum();
                self.mu[i] + bz + self.diag[i] * eps[i]
            })
            .collect()
    }

    /// Draws `ϑ ~ q_λ` by the reparameterisation trick.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Draw {
        let z: Vec<f64> = (0..self.k).map(|_| rng.sample(StandardNormal)).collect();
        let eps: Vec<f64> = (0..self.dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Draw {
            theta: self.transform(&z, &eps),
            z,
            eps,
        }
    }

    /// Dense covariance `BBᵀ + D²`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let b = self.factor_matrix();
        let mut cov = &b * b.transpose();
        for (i, d) in self.diag.iter().enumerate() {
            cov[(i, i)] += d * d;
        }
        cov
    }

    /// Marginal variance of coordinate `i`.
    pub fn variance(&self, i: usize) -> f64 {
        let row = &self.factor[i * self.k..(i + 1) * self.k];
        row.iter().map(|b| b * b).sum::<f64>() + self.diag[i] * self.diag[i]
    }

    fn woodbury(&self) -> Result<Woodbury> {
        self.validate()?;
        if self.diag.iter().any(|d| *d == 0.0 || !d.is_finite()) {
            return Err(Error::Numerical(
                "variational diagonal has a zero entry".into(),
            ));
        }
        let b = self.factor_matrix();
        let inv_d2 = DVector::from_iterator(self.dim(), self.diag.iter().map(|d| 1.0 / (d * d)));
        // A = I + Bᵀ D⁻² B
        let scaled = DMatrix::from_fn(self.dim(), self.k, |i, j| b[(i, j)] * inv_d2[i]);
        let mut a = b.transpose() * &scaled;
        for j in 0..self.k {
            a[(j, j)] += 1.0;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("Woodbury core is not positive definite".into()))?;
        let log_det = self.diag.iter().map(|d| 2.0 * d.abs().ln()).sum::<f64>()
            + 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Woodbury {
            scaled,
            inv_d2,
            chol,
            log_det,
        })
    }

    /// `log q_λ(ϑ)` and `∇_ϑ log q_λ(ϑ) = −Υ⁻¹(ϑ − μ)`.
    pub fn log_q_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "log q argument",
                expected: self.dim(),
                got: theta.len(),
            });
        }
        let w = self.woodbury()?;
        let x = DVector::from_iterator(self.dim(), theta.iter().zip(&self.mu).map(|(t, m)| t - m));
        let solved = w.solve(&x);
        let quad = x.dot(&solved);
        let log_q = -0.5 * (self.dim() as f64 * LN_2PI + w.log_det + quad);
        Ok((log_q, solved.iter().map(|v| -v).collect()))
    }

    /// `log q_λ(ϑ)`.
    pub fn log_q(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.log_q_and_grad(theta)?.0)
    }

    /// Flattened `(μ, B, d)`.
    fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.mu.len() * (self.k + 2));
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.factor);
        v.extend_from_slice(&self.diag);
        v
    }

    fn apply_step(&mut self, step: &[f64]) {
        let p = self.dim();
        let pk = self.factor.len();
        for (m, s) in self.mu.iter_mut().zip(&step[..p]) {
            *m += s;
        }
        for (f, s) in self.factor.iter_mut().zip(&step[p..p + pk]) {
            *f += s;
        }
        for (d, s) in self.diag.iter_mut().zip(&step[p + pk..]) {
            *d += s;
        }
    }
}

struct Woodbury {
    /// `D⁻² B`
    scaled: DMatrix<f64>,
    inv_d2: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl Woodbury {
    /// `Υ⁻¹ x = D⁻² x − D⁻² B A⁻¹ Bᵀ D⁻² x`
    fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let dx = x.component_mul(&self.inv_d2);
        let inner = self.chol.solve(&(self.scaled.transpose() * x));
        dx - &self.scaled * inner
    }
}

/// Running-average state of ADADELTA.
#[derive(Debug, Clone, PartialEq)]
pub struct Adadelta {
    pub decay: f64,
    pub eps: f64,
    pub mean_sq_grad: Vec<f64>,
    pub mean_sq_step: Vec<f64>,
}

impl Adadelta {
    pub fn new(len: usize, decay: f64, eps: f64) -> Self {
        Self {
            decay,
            eps,
            mean_sq_grad: vec![0.0; len],
            mean_sq_step: vec![0.0; len],
        }
    }

    /// Updates the averages with `grad` and returns the ascent step.
    pub fn update(&mut self, grad: &[f64]) -> Vec<f64> {
        let (rho, eps) = (self.decay, self.eps);
        grad.iter()
            .zip(
                self.mean_sq_grad
                    .iter_mut()
                    .zip(self.mean_sq_step.iter_mut()),
            )
            .map(|(g, (eg2, ed2))| {
                *eg2 = rho * *eg2 + (1.0 - rho) * g * g;
                let step = ((*ed2 + eps).sqrt() / (*eg2 + eps).sqrt()) * g;
                *ed2 = rho * *ed2 + (1.0 - rho) * step * step;
                step
            })
            .collect()
    }
}

/// One single-sample estimate of `∇_λ L`.
#[derive(Debug, Clone)]
pub struct ElboGradientSample {
    pub grad: LambdaGradient,
    pub draw: Draw,
    /// `log p(y|ϑ)κ(θ) + log p(ϑ) − log q(ϑ)` at the draw.
    pub elbo_proxy: f64,
}

/// Reparameterised ELBO gradient at `λ` from one draw.
pub fn grad_elbo_estimate<R: Rng + ?Sized>(
    lambda: &VariationalParams,
    model: &Model,
    obs: &Observed,
    estimator: &mut dyn ExpectationEstimator,
    rng: &mut R,
) -> Result<ElboGradientSample> {
    let draw = lambda.sample(rng);
    grad_elbo_at(lambda, model, obs, estimator, draw)
}

/// ELBO gradient for a given draw (noise fixed by the caller).
pub fn grad_elbo_at(
    lambda: &VariationalParams,
    model: &Model,
    obs: &Observed,
    estimator: &mut dyn ExpectationEstimator,
    draw: Draw,
) -> Result<ElboGradientSample> {
    let gh = model.grad_log_h(&draw.theta, obs, estimator)?;
    let (log_q, gq) = lambda.log_q_and_grad(&draw.theta)?;
    let g: Vec<f64> = gh.iter().zip(&gq).map(|(a, b)| a - b).collect();
    let k = lambda.k;
    let mut factor = vec![0.0; lambda.factor.len()];
    for i in 0..lambda.dim() {
        for c in 0..k {
            if lambda.factor_free(i, c) {
                factor[i * k + c] = g[i] * draw.z[c];
            }
        }
    }
    let diag = g.iter().zip(&draw.eps).map(|(a, e)| a * e).collect();
    let elbo_proxy =
        model.log_unnorm_likelihood(&draw.theta, obs)? + model.log_prior(&draw.theta)? - log_q;
    Ok(ElboGradientSample {
        grad: LambdaGradient {
            mu: g,
            factor,
            diag,
        },
        draw,
        elbo_proxy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Number of factors.
    pub k: usize,
    pub max_iters: usize,
    /// Iterations before the plateau rule may stop the run.
    pub min_iters: usize,
    /// Moving-average window of the stopping rule.
    pub window: usize,
    /// Relative change of the windowed ELBO proxy below which the run stops.
    pub tol: f64,
    pub adadelta_decay: f64,
    pub adadelta_eps: f64,
    /// Initial value of every entry of `d`.
    pub init_diag: f64,
    /// `λ̂` is the average of the iterates over this many final iterations.
    pub average_last: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 20,
            max_iters: 5000,
            min_iters: 0,
            window: 50,
            tol: 1e-3,
            adadelta_decay: 0.95,
            adadelta_eps: 1e-6,
            init_diag: 0.1,
            average_last: 50,
            sampler: SamplerConfig::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        if self.window == 0 || self.max_iters == 0 {
            return Err(Error::InvalidConfig(
                "window and max_iters must be >= 1".into(),
            ));
        }
        if !(self.adadelta_decay > 0.0 && self.adadelta_decay < 1.0) || !(self.adadelta_eps > 0.0) {
            return Err(Error::InvalidConfig("invalid ADADELTA constants".into()));
        }
        if !(self.init_diag > 0.0) {
            return Err(Error::InvalidConfig("init_diag must be > 0".into()));
        }
        self.sampler.validate()
    }
}

/// Natural-scale point estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub beta: Vec<f64>,
    /// `γ`, or `δ` followed by `φ`.
    pub effects: Vec<f64>,
    pub sigma2_beta: f64,
    pub mu_gamma: Option<f64>,
    pub sigma2_gamma: Option<f64>,
    pub sigma2_delta: Option<f64>,
    pub sigma2_phi: Option<f64>,
    pub rho: Option<f64>,
}

/// Point estimates from `λ̂`: means for unconstrained blocks, log-normal
/// means `exp(μ + υ/2)` for variances and `tanh` of the mean for `ρ`.
pub fn point_estimates(lambda: &VariationalParams, model: &Model) -> Result<PointEstimates> {
    let l = model.layout();
    if lambda.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            what: "variational parameters",
            expected: l.dim(),
            got: lambda.dim(),
        });
    }
    let var_of = |i: usize| (lambda.mu[i] + 0.5 * lambda.variance(i)).exp();
    let hs = l.hyper_start();
    let mut out = PointEstimates {
        beta: lambda.mu[l.beta_range()].to_vec(),
        effects: lambda.mu[l.effects_range()].to_vec(),
        sigma2_beta: var_of(hs),
        mu_gamma: None,
        sigma2_gamma: None,
        sigma2_delta: None,
        sigma2_phi: None,
        rho: None,
    };
    match l.heterogeneity {
        Heterogeneity::None => {}
        Heterogeneity::UndirectedGamma => {
            out.mu_gamma = Some(match model.spec().intercept_mode {
                InterceptMode::MuGamma => lambda.mu[hs + 1],
                InterceptMode::EdgeTerm => 0.0,
            });
            out.sigma2_gamma = Some(var_of(hs + 2));
        }
        Heterogeneity::DirectedSenderReceiver => {
            out.sigma2_delta = Some(var_of(hs + 1));
            out.sigma2_phi = Some(var_of(hs + 2));
            out.rho = Some(lambda.mu[hs + 3].tanh());
        }
    }
    Ok(out)
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub lambda_hat: VariationalParams,
    pub point: PointEstimates,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    /// Whether the plateau rule (rather than `max_iters`) ended the run.
    pub converged: bool,
    pub param_names: Vec<String>,
    /// Filled in by [`crate::inference::corrected_covariance`].
    pub corrected: Option<CorrectedCovariance>,
    pub config: FitConfig,
}

/// Fits `q_λ` with expectations from a warm-started tie-no-tie chain that
/// starts at the observed network.
pub fn fit(model: &Model, net: &Network, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let sampler = SamplerConfig {
        seed: cfg.seed,
        ..cfg.sampler.clone()
    };
    let mut estimator = McEstimator::new(sampler, net.clone())?;
    fit_with(model, net, cfg, &mut estimator)
}

/// Fits `q_λ` with a caller-supplied source of expected statistics.
pub fn fit_with(
    model: &Model,
    net: &Network,
    cfg: &FitConfig,
    estimator: &mut dyn ExpectationEstimator,
) -> Result<FitResult> {
    cfg.validate()?;
    let obs = model.observe(net)?;
    let mut lambda = VariationalParams::new(model.initial_params(net), cfg.k, cfg.init_diag);
    let mut opt = Adadelta::new(lambda.flatten().len(), cfg.adadelta_decay, cfg.adadelta_eps);
    let mut rng = stream_rng(cfg.seed, 1);
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let avg_len = cfg.average_last.max(1);
    let mut recent: std::collections::VecDeque<Vec<f64>> =
        std::collections::VecDeque::with_capacity(avg_len);
    let mut converged = false;
    let w = cfg.window;

    for iter in 0..cfg.max_iters {
        let sample = grad_elbo_estimate(&lambda, model, &obs, estimator, &mut rng)?;
        let mut flat = sample.grad.mu;
        flat.extend(sample.grad.factor);
        flat.extend(sample.grad.diag);
        if flat.iter().any(|g| !g.is_finite()) || !sample.elbo_proxy.is_finite() {
            return Err(Error::NonFinite {
                what: "ELBO gradient",
                iteration: iter,
            });
        }
        let step = opt.update(&flat);
        lambda.apply_step(&step);
        trace.push(sample.elbo_proxy);

        if recent.len() == avg_len {
            recent.pop_front();
        }
        recent.push_back(lambda.flatten());

        let t = trace.len();
        if t >= cfg.min_iters.max(2 * w) {
            let now = trace[t - w..].iter().sum::<f64>() / w as f64;
            let before = trace[t - 2 * w..t - w].iter().sum::<f64>() / w as f64;
            if (now - before).abs() < cfg.tol * before.abs() {
                converged = true;
                break;
            }
        }
    }

    let mut avg = vec![0.0; recent[0].len()];
    for v in &recent {
        for (a, x) in avg.iter_mut().zip(v) {
            *a += x;
        }
    }
    let count = recent.len() as f64;
    avg.iter_mut().for_each(|a| *a /= count);
    let p = lambda.dim();
    let pk = lambda.factor.len();
    let lambda_hat = VariationalParams {
        mu: avg[..p].to_vec(),
        factor: avg[p..p + pk].to_vec(),
        diag: avg[p + pk..].to_vec(),
        k: lambda.k,
    };
    let point = point_estimates(&lambda_hat, model)?;
    Ok(FitResult {
        point,
        lambda_hat,
        iterations: trace.len(),
        elbo_trace: trace,
        converged,
        param_names: model.param_names(),
        corrected: None,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lambda(dim: usize, k: usize) -> VariationalParams {
        let mut l =
            VariationalParams::new((0..dim).map(|i| i as f64 * 0.3 - 1.0).collect(), k, 0.5);
        for i in 0..dim {
            for c in 0..l.k {
                if l.factor_free(i, c) {
                    l.factor[i * l.k + c] = ((i * 3 + c * 5) % 7) as f64 / 7.0 - 0.4;
                }
            }
            l.diag[i] = 0.3 + 0.1 * i as f64;
        }
        l
    }

    #[test]
    fn zero_noise_returns_mean() {
        let l = lambda(5, 2);
        assert_eq!(l.transform(&[0.0, 0.0], &[0.0; 5]), l.mu);
    }

    #[test]
    fn log_q_at_mode() {
        let l = lambda(6, 2);
        let (lq, g) = l.log_q_and_grad(&l.mu).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
        let cov = l.covariance();
        let want = -0.5 * (6.0 * LN_2PI + cov.determinant().ln());
        assert!((lq - want).abs() < 1e-10);
    }

    #[test]
    fn diagonal_case_is_elementwise() {
        let l = VariationalParams {
            mu: vec![1.0, -2.0],
            factor: vec![0.0, 0.0],
            diag: vec![0.5, 2.0],
            k: 1,
        };
        let x = [1.5, 0.0];
        let (lq, g) = l.log_q_and_grad(&x).unwrap();
        let mut want = 0.0;
        for i in 0..2 {
            let d = x[i] - l.mu[i];
            let v = l.diag[i] * l.diag[i];
            want += -0.5 * (LN_2PI + v.ln() + d * d / v);
            assert!((g[i] + d / v).abs() < 1e-14);
        }
        assert!((lq - want).abs() < 1e-12);
    }

    #[test]
    fn singular_diag_rejected() {
        let mut l = lambda(3, 1);
        l.diag[1] = 0.0;
        assert!(matches!(l.log_q(&[0.0; 3]), Err(Error::Numerical(_))));
    }

    #[test]
    fn adadelta_first_step() {
        let mut opt = Adadelta::new(3, 0.95, 1e-6);
        let g = [2.0, -0.5, 0.0];
        let step = opt.update(&g);
        for (s, gi) in step.iter().zip(&g) {
            let want = (1e-6f64).sqrt() / (0.05 * gi * gi + 1e-6).sqrt() * gi;
            assert!((s - want).abs() < 1e-15);
            assert!(s.signum() == gi.signum() || *gi == 0.0);
        }
        assert_eq!(step[2], 0.0);
        let before = opt.mean_sq_grad.clone();
        let step = opt.update(&[0.0; 3]);
        assert!(step.iter().all(|s| *s == 0.0));
        for (a, b) in opt.mean_sq_grad.iter().zip(&before) {
            assert!((a - 0.95 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn standard_normal_moments() {
        let l = VariationalParams {
            mu: vec![0.0; 3],
            factor: vec![0.0; 3],
            diag: vec![1.0; 3],
            k: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut m = [0.0; 3];
        let mut v = [0.0; 3];
        for _ in 0..n {
            let d = l.sample(&mut rng);
            for i in 0..3 {
                m[i] += d.theta[i];
                v[i] += d.theta[i] * d.theta[i];
            }
        }
        for i in 0..3 {
            let mean = m[i] / n as f64;
            let var = v[i] / n as f64 - mean * mean;
            // s.e. of the mean 1/√n, of the variance √(2/n)
            assert!(mean.abs() < 3.0 / (n as f64).sqrt());
            assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
        }
    }
}
