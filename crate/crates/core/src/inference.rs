//! Post-fit inference: covariance correction, credible intervals and
//! approximate Bayes factors.
//!
//! The correction rescales the variational covariance of `θ = (β, γ)` so
//! that its marginal variances match the diagonal of an inverse information
//! matrix estimated from networks simulated at `θ̂`, keeping the correlation
//! structure of `Υ̂`:
//!
//! ```text
//! Υ_corr = S^{1/2} Υ̂ S^{1/2},   S_ii = Ṽ_ii / Υ̂_ii
//! ```
//!
//! Normalising-constant ratios `log κ(θ_b) − log κ(θ_a)` are obtained by path
//! sampling along the straight line between the two parameter vectors, with
//! the trapezoid rule over `G + 1` nodes and `M` simulated networks per node.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::model::{Heterogeneity, Model};
use crate::sampler::{mean_stats, simulate_stats, stream_rng, SamplerConfig};
use crate::vi::{FitResult, VariationalParams};

/// Ridge added to the information matrix before inversion.
pub const INFO_RIDGE: f64 = 1e-8;

/// Random stream used for the correction simulations.
const CORRECTION_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedCovariance {
    /// Dimension of `θ`.
    pub dim: usize,
    /// Row-major `dim × dim` corrected covariance.
    pub upsilon_corrected: Vec<f64>,
    /// Diagonal of `S`.
    pub scale: Vec<f64>,
    /// Target variances `Ṽ_ii`.
    pub target_variance: Vec<f64>,
    pub b_sims: usize,
}

impl CorrectedCovariance {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.upsilon_corrected)
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.upsilon_corrected[i * self.dim + i]
    }

    /// Draws `θ ~ N(mean, Υ_corr)`.
    pub fn sampler(&self, mean: &[f64]) -> Result<GaussianSampler> {
        GaussianSampler::new(mean.to_vec(), self.matrix())
    }
}

/// Gaussian draws through a Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    chol: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance",
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?
            .unpack();
        Ok(Self { mean, chol })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.mean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        (0..self.mean.len())
            .map(|i| self.mean[i] + (0..=i).map(|j| self.chol[(i, j)] * z[j]).sum::<f64>())
            .collect()
    }
}

/// `S^{1/2} Υ S^{1/2}` with `S_ii = target_i / Υ_ii`. Returns the rescaled
/// matrix and the diagonal of `S`.
pub fn rescale_covariance(
    upsilon: &DMatrix<f64>,
    target: &[f64],
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = upsilon.nrows();
    if upsilon.ncols() != n || target.len() != n {
        return Err(Error::DimensionMismatch {
            what: "covariance rescaling",
            expected: n,
            got: target.len(),
        });
    }
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = upsilon[(i, i)];
        if !(d > 0.0) || !(target[i] > 0.0) {
            return Err(Error::Numerical(format!(
                "non-positive variance at index {i}"
            )));
        }
        scale.push(target[i] / d);
    }
    let root: Vec<f64> = scale.iter().map(|s| s.sqrt()).collect();
    let mut out = DMatrix::from_fn(n, n, |i, j| (root[i] * root[j]) * upsilon[(i, j)]);
    // diagonal exactly equal to the target
    for i in 0..n {
        out[(i, i)] = target[i];
    }
    Ok((out, scale))
}

/// The `θ` block of the variational covariance.
pub fn theta_covariance(lambda: &VariationalParams, theta_dim: usize) -> DMatrix<f64> {
    let k = lambda.k;
    let b = DMatrix::from_fn(theta_dim, k, |i, j| lambda.factor[i * k + j]);
    let mut cov = &b * b.transpose();
    for i in 0..theta_dim {
        cov[(i, i)] += lambda.diag[i] * lambda.diag[i];
    }
    cov
}

/// Prior precision of `θ` at the hyperparameter point estimates.
fn prior_precision(model: &Model, fit: &FitResult) -> DMatrix<f64> {
    let l = model.layout();
    let q = l.theta_dim();
    let p = l.n_terms;
    let n = l.n_nodes;
    let mut prec = DMatrix::zeros(q, q);
    let pe = &fit.point;
    for k in 0..p {
        prec[(k, k)] = 1.0 / pe.sigma2_beta;
    }
    match l.heterogeneity {
        Heterogeneity::None => {}
        Heterogeneity::UndirectedGamma => {
            let v = pe.sigma2_gamma.unwrap_or(1.0);
            for i in p..q {
                prec[(i, i)] = 1.0 / v;
            }
        }
        Heterogeneity::DirectedSenderReceiver => {
            let sd = pe.sigma2_delta.unwrap_or(1.0);
            let sp = pe.sigma2_phi.unwrap_or(1.0);
            let rho = pe.rho.unwrap_or(0.0);
            // inverse of [[sd, c], [c, sp]] with c = ρ √(sd sp)
            let c = rho * (sd * sp).sqrt();
            let det = sd * sp - c * c;
            for i in 0..n {
                let (a, b) = (p + i, p + n + i);
                prec[(a, a)] = sp / det;
                prec[(b, b)] = sd / det;
                prec[(a, b)] = -c / det;
                prec[(b, a)] = -c / det;
            }
        }
    }
    prec
}

/// Corrected covariance of `θ` from `b_sims` networks simulated at `θ̂`.
///
/// The information matrix is the centred covariance of `(s(y), t(y))` plus
/// the prior precision at the point estimates and a small ridge; without the
/// prior term it is singular whenever a statistic is a linear function of
/// the degrees (for instance edges with sender and receiver effects).
pub fn corrected_covariance(
    fit: &FitResult,
    model: &Model,
    net: &Network,
    b_sims: usize,
    sampler: &SamplerConfig,
) -> Result<CorrectedCovariance> {
    let l = model.layout();
    let q = l.theta_dim();
    if fit.lambda_hat.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            what: "fit and model",
            expected: l.dim(),
            got: fit.lambda_hat.dim(),
        });
    }
    if b_sims < 2 {
        return Err(Error::InvalidConfig(
            "at least two correction simulations are required".into(),
        ));
    }
    let theta_hat = &fit.lambda_hat.mu[..q];
    let cfg = SamplerConfig {
        n_draws: b_sims,
        ..sampler.clone()
    };
    let draws = simulate_stats(net, theta_hat, model, &cfg, CORRECTION_STREAM)?;
    let rows: Vec<Vec<f64>> = draws
        .into_iter()
        .map(|(mut s, t)| {
            s.extend(t);
            s
        })
        .collect();
    let mean: Vec<f64> = (0..q)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / b_sims as f64)
        .collect();
    let mut info = prior_precision(model, fit);
    let denom = (b_sims - 1) as f64;
    for a in 0..q {
        for c in a..q {
            let v: f64 = rows
                .iter()
                .map(|r| (r[a] - mean[a]) * (r[c] - mean[c]))
                .sum::<f64>()
                / denom;
            info[(a, c)] += v;
            if a != c {
                info[(c, a)] += v;
            }
        }
        info[(a, a)] += INFO_RIDGE;
    }
    let inv = info
        .cholesky()
        .ok_or_else(|| {
            Error::Numerical(
                "simulated information matrix is singular; increase the number of simulations"
                    .into(),
            )
        })?
        .inverse();
    let target: Vec<f64> = (0..q).map(|i| inv[(i, i)]).collect();
    let upsilon = theta_covariance(&fit.lambda_hat, q);
    let (corr, scale) = rescale_covariance(&upsilon, &target)?;
    Ok(CorrectedCovariance {
        dim: q,
        upsilon_corrected: corr.as_slice().to_vec(),
        scale,
        target_variance: target,
        b_sims,
    })
}

/// `θ̂_i ± z_{(1+level)/2} √Υ_ii` for every coordinate.
pub fn credible_intervals(
    cc: &CorrectedCovariance,
    theta_hat: &[f64],
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidConfig(format!(
            "credible level {level} outside [0, 1)"
        )));
    }
    if theta_hat.len() != cc.dim {
        return Err(Error::DimensionMismatch {
            what: "point estimate",
            expected: cc.dim,
            got: theta_hat.len(),
        });
    }
    let z = if level == 0.0 {
        0.0
    } else {
        Normal::standard().inverse_cdf(0.5 * (1.0 + level))
    };
    Ok(theta_hat
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let h = z * cc.variance(i).sqrt();
            (m - h, m + h)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Number of trapezoid intervals `G`.
    pub grid: usize,
    /// Simulated networks per node `M`.
    pub draws_per_node: usize,
    /// Burn-in and thinning of each node's chain; `n_draws` is ignored.
    pub sampler: SamplerConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            grid: 20,
            draws_per_node: 20,
            sampler: SamplerConfig::default(),
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `log κ(θ_to) − log κ(θ_from)` within one model by path sampling.
///
/// Both vectors are `θ = (β, γ)` of `model` (the leading `theta_dim`
/// entries of `ϑ` are accepted as well). Node `g` of the grid uses random
/// stream `g`, so the result does not depend on the thread count.
pub fn log_kappa_ratio_nested(
    model: &Model,
    theta_from: &[f64],
    theta_to: &[f64],
    start: &Network,
    cfg: &PathConfig,
) -> Result<Estimate> {
    path_sample(model, theta_from, theta_to, start, cfg, 0)
}

fn path_sample(
    model: &Model,
    from: &[f64],
    to: &[f64],
    start: &Network,
    cfg: &PathConfig,
    stream_offset: u64,
) -> Result<Estimate> {
    let q = model.layout().theta_dim();
    if from.len() < q || to.len() < q {
        return Err(Error::DimensionMismatch {
            what: "path endpoint",
            expected: q,
            got: from.len().min(to.len()),
        });
    }
    if cfg.grid == 0 || cfg.draws_per_node < 2 {
        return Err(Error::InvalidConfig(
            "path sampling needs grid >= 1 and draws_per_node >= 2".into(),
        ));
    }
    let (from, to) = (&from[..q], &to[..q]);
    let diff: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    if diff.iter().all(|d| *d == 0.0) {
        return Ok(Estimate {
            value: 0.0,
            std_error: 0.0,
        });
    }
    let g = cfg.grid;
    let sampler = SamplerConfig {
        n_draws: cfg.draws_per_node,
        ..cfg.sampler.clone()
    };
    let nodes: Vec<(f64, f64)> = (0..=g)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let u = k as f64 / g as f64;
            let theta: Vec<f64> = from.iter().zip(&diff).map(|(a, d)| a + u * d).collect();
            let draws = simulate_stats(start, &theta, model, &sampler, stream_offset + k as u64)?;
            let values: Vec<f64> = draws
                .iter()
                .map(|(s, t)| s.iter().chain(t).zip(&diff).map(|(x, d)| x * d).sum())
                .collect();
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            Ok((mean, var / m))
        })
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut var = 0.0;
    for (k, (mean, v)) in nodes.iter().enumerate() {
        let w = if k == 0 || k == g { 0.5 } else { 1.0 } / g as f64;
        value += w * mean;
        var += w * w * v;
    }
    Ok(Estimate {
        value,
        std_error: var.sqrt(),
    })
}

/// `log κ_2(θ_2) − log κ_1(θ_1)` for two unrelated models, each leg sampled
/// from the null parameter where `κ(0) = 2^D` for both.
pub fn log_kappa_ratio_nonnested(
    model_1: &Model,
    theta_1: &[f64],
    model_2: &Model,
    theta_2: &[f64],
    start: &Network,
    cfg: &PathConfig,
) -> Result<Estimate> {
    let q1 = model_1.layout().theta_dim();
    let q2 = model_2.layout().theta_dim();
    let leg_1 = path_sample(model_1, &vec![0.0; q1], theta_1, start, cfg, 0)?;
    let leg_2 = path_sample(
        model_2,
        &vec![0.0; q2],
        theta_2,
        start,
        cfg,
        (cfg.grid + 1) as u64,
    )?;
    Ok(Estimate {
        value: leg_2.value - leg_1.value,
        std_error: leg_1.std_error.hypot(leg_2.std_error),
    })
}

/// Whether `small` is `large` with some statistics or the random-effect
/// block removed. Returns, for each coordinate of `small`'s `θ`, its index in
/// `large`'s `θ`.
pub fn nested_embedding(small: &Model, large: &Model) -> Option<Vec<usize>> {
    if small.n_nodes() != large.n_nodes() || small.is_directed() != large.is_directed() {
        return None;
    }
    let (ls, ll) = (small.layout(), large.layout());
    if ls.heterogeneity != Heterogeneity::None && ls.heterogeneity != ll.heterogeneity {
        return None;
    }
    if ls.heterogeneity != Heterogeneity::None
        && small.spec().intercept_mode != large.spec().intercept_mode
    {
        return None;
    }
    let mut map = Vec::with_capacity(ls.theta_dim());
    for t in small.terms().terms() {
        map.push(large.terms().terms().iter().position(|u| u == t)?);
    }
    if ls.n_effects() > 0 {
        map.extend(ll.n_terms..ll.n_terms + ll.n_effects());
    }
    Some(map)
}

fn embed(theta: &[f64], map: &[usize], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (v, &k) in theta.iter().zip(map) {
        out[k] = *v;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BfMethod {
    Nested,
    Nonnested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorReport {
    /// `log BF_12`; positive values favour model 1.
    pub log_bf: f64,
    /// `log κ_2(θ̂_2) − log κ_1(θ̂_1)`.
    pub log_kappa_ratio: f64,
    pub log_kappa_std_error: f64,
    /// `s_1ᵀβ̂_1 + tᵀγ̂_1 − s_2ᵀβ̂_2 − tᵀγ̂_2`.
    pub log_lik_diff: f64,
    /// `log p(ϑ̂_1) − log p(ϑ̂_2)`.
    pub log_prior_diff: f64,
    /// `log q_2(ϑ̂_2) − log q_1(ϑ̂_1)`.
    pub log_q_diff: f64,
    pub method: BfMethod,
    pub grid: usize,
    pub draws_per_node: usize,
}

/// Approximate `log BF_12` from two fits on the same network, evaluating
/// every factor at `ϑ̂_k = μ̂_k` on the transformed scale.
pub fn log_bayes_factor(
    fit_1: &FitResult,
    model_1: &Model,
    fit_2: &FitResult,
    model_2: &Model,
    net: &Network,
    cfg: &PathConfig,
) -> Result<BayesFactorReport> {
    if model_1.n_nodes() != net.n_nodes()
        || model_2.n_nodes() != net.n_nodes()
        || model_1.is_directed() != net.is_directed()
        || model_2.is_directed() != net.is_directed()
    {
        return Err(Error::InvalidConfig(
            "both models must describe the given network".into(),
        ));
    }
    for (fit, model) in [(fit_1, model_1), (fit_2, model_2)] {
        if fit.lambda_hat.dim() != model.layout().dim() {
            return Err(Error::DimensionMismatch {
                what: "fit and model",
                expected: model.layout().dim(),
                got: fit.lambda_hat.dim(),
            });
        }
    }
    let v1 = &fit_1.lambda_hat.mu;
    let v2 = &fit_2.lambda_hat.mu;
    let q1 = model_1.layout().theta_dim();
    let q2 = model_2.layout().theta_dim();

    let (kappa, method) = if let Some(map) = nested_embedding(model_1, model_2) {
        let dim = model_2.layout().theta_dim();
        let from = embed(&v1[..q1], &map, dim);
        (
            path_sample(model_2, &from, &v2[..q2], net, cfg, 0)?,
            BfMethod::Nested,
        )
    } else if let Some(map) = nested_embedding(model_2, model_1) {
        let dim = model_1.layout().theta_dim();
        let to = embed(&v2[..q2], &map, dim);
        (
            path_sample(model_1, &v1[..q1], &to, net, cfg, 0)?,
            BfMethod::Nested,
        )
    } else {
        (
            log_kappa_ratio_nonnested(model_1, v1, model_2, v2, net, cfg)?,
            BfMethod::Nonnested,
        )
    };
    let obs_1 = model_1.observe(net)?;
    let obs_2 = model_2.observe(net)?;
    let log_lik_diff =
        model_1.log_unnorm_likelihood(v1, &obs_1)? - model_2.log_unnorm_likelihood(v2, &obs_2)?;
    let log_prior_diff = model_1.log_prior(v1)? - model_2.log_prior(v2)?;
    let log_q_diff = fit_2.lambda_hat.log_q(v2)? - fit_1.lambda_hat.log_q(v1)?;
    let log_bf = kappa.value + log_lik_diff + log_prior_diff + log_q_diff;
    Ok(BayesFactorReport {
        log_bf,
        log_kappa_ratio: kappa.value,
        log_kappa_std_error: kappa.std_error,
        log_lik_diff,
        log_prior_diff,
        log_q_diff,
        method,
        grid: cfg.grid,
        draws_per_node: cfg.draws_per_node,
    })
}

/// Mean of `(s, t)` over `n` draws at `θ`, on stream `stream`.
pub fn expected_stats_at(
    model: &Model,
    theta: &[f64],
    start: &Network,
    sampler: &SamplerConfig,
    stream: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let draws = simulate_stats(start, theta, model, sampler, stream)?;
    Ok(mean_stats(&draws))
}

/// Draws `n` parameter vectors `θ` for posterior prediction: from the
/// corrected covariance when the fit carries one, else from `q_λ̂`.
pub fn posterior_theta_draws(
    fit: &FitResult,
    model: &Model,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let q = model.layout().theta_dim();
    let mut rng = stream_rng(seed, 3);
    let mut out = Vec::with_capacity(n);
    match &fit.corrected {
        Some(cc) => {
            let g = cc.sampler(&fit.lambda_hat.mu[..q])?;
            for _ in 0..n {
                out.push(g.sample(&mut rng));
            }
        }
        None => {
            for _ in 0..n {
                let mut theta = fit.lambda_hat.sample(&mut rng).theta;
                theta.truncate(q);
                out.push(theta);
            }
        }
    }
    Ok(out)
}
