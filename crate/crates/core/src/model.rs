//! The Bayesian mixed ERGM.
//!
//! Likelihood: `p(y | β, γ) ∝ exp(s(y, x)ᵀβ + t(y)ᵀγ)`, with `t(y)` the degree
//! statistics. Priors are placed on an unconstrained parameter vector `ϑ`:
//!
//! | heterogeneity | layout of `ϑ`                                              | length     |
//! |---------------|------------------------------------------------------------|------------|
//! | none          | `β, log σ²_β`                                              | `p + 1`    |
//! | undirected    | `β, γ, log σ²_β, μ_γ, log σ²_γ`                            | `p + N + 3`|
//! | directed      | `β, δ, φ, log σ²_β, log σ²_δ, log σ²_φ, atanh ρ`           | `p + 2N + 5`|
//!
//! Variances carry scale-dependent priors, i.e. Weibull with shape 1/2 and
//! scale `b`, which is equivalent to an exponential prior with mean `√b` on
//! the standard deviation. The sender/receiver correlation `ρ ∈ (-1, 1)`
//! has the prior `(ρ + 1)/2 ~ Beta(a_ρ, b_ρ)`. All densities include the
//! log-Jacobians of the transforms, so [`Model::log_prior`] is a density on
//! the unconstrained scale.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::statistics::{compute_degree_vector, CovariateTable, StatisticTerm, TermSet};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Kind of nodal random effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heterogeneity {
    None,
    /// One sociality effect `γ_i` per node of an undirected network.
    UndirectedGamma,
    /// Sender `δ_i` and receiver `φ_i` effects of a directed network.
    DirectedSenderReceiver,
}

/// How the tie propensity intercept is represented when undirected
/// heterogeneity is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    /// The edge term is excluded from `β`; the prior mean `μ_γ` carries it.
    #[default]
    MuGamma,
    /// The edge term stays in `β` and the prior mean of `γ` is fixed at 0.
    EdgeTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub b_beta: f64,
    pub b_gamma: f64,
    pub b_mu: f64,
    pub b_delta: f64,
    pub b_phi: f64,
    pub a_rho: f64,
    pub b_rho: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            b_beta: 100.0,
            b_gamma: 100.0,
            b_mu: 100.0,
            b_delta: 100.0,
            b_phi: 100.0,
            a_rho: 1.0,
            b_rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub terms: Vec<StatisticTerm>,
    #[serde(default = "default_heterogeneity")]
    pub heterogeneity: Heterogeneity,
    #[serde(default)]
    pub intercept_mode: InterceptMode,
    #[serde(default)]
    pub hyper: Hyperparameters,
}

fn default_heterogeneity() -> Heterogeneity {
    Heterogeneity::None
}

impl ModelSpec {
    pub fn new(terms: Vec<StatisticTerm>, heterogeneity: Heterogeneity) -> Self {
        Self {
            terms,
            heterogeneity,
            intercept_mode: InterceptMode::default(),
            hyper: Hyperparameters::default(),
        }
    }
}

/// Positions of the parameter blocks inside `ϑ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_terms: usize,
    pub n_nodes: usize,
    pub heterogeneity: Heterogeneity,
}

impl ParamLayout {
    /// Number of random effects (`0`, `N` or `2N`).
    pub fn n_effects(&self) -> usize {
        match self.heterogeneity {
            Heterogeneity::None => 0,
            Heterogeneity::UndirectedGamma => self.n_nodes,
            Heterogeneity::DirectedSenderReceiver => 2 * self.n_nodes,
        }
    }

    pub fn n_hyper(&self) -> usize {
        match self.heterogeneity {
            Heterogeneity::None => 1,
            Heterogeneity::UndirectedGamma => 3,
            Heterogeneity::DirectedSenderReceiver => 4,
        }
    }

    /// Length of `θ = (β, γ)`.
    pub fn theta_dim(&self) -> usize {
        self.n_terms + self.n_effects()
    }

    /// Length of `ϑ`.
    pub fn dim(&self) -> usize {
        self.theta_dim() + self.n_hyper()
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        0..self.n_terms
    }

    pub fn effects_range(&self) -> std::ops::Range<usize> {
        self.n_terms..self.theta_dim()
    }

    /// Index of `log σ²_β`; further hyperparameters follow in layout order.
    pub fn hyper_start(&self) -> usize {
        self.theta_dim()
    }

    pub fn unpack(&self, v: &[f64]) -> Result<Params> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.dim(),
                got: v.len(),
            });
        }
        let h = &v[self.hyper_start()..];
        let hyper = match self.heterogeneity {
            Heterogeneity::None => Hyper::None { log_s2_beta: h[0] },
            Heterogeneity::UndirectedGamma => Hyper::Undirected {
                log_s2_beta: h[0],
                mu_gamma: h[1],
                log_s2_gamma: h[2],
            },
            Heterogeneity::DirectedSenderReceiver => Hyper::Directed {
                log_s2_beta: h[0],
                log_s2_delta: h[1],
                log_s2_phi: h[2],
                z_rho: h[3],
            },
        };
        Ok(Params {
            beta: v[self.beta_range()].to_vec(),
            effects: v[self.effects_range()].to_vec(),
            hyper,
        })
    }

    pub fn pack(&self, p: &Params) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&p.beta);
        v.extend_from_slice(&p.effects);
        match p.hyper {
            Hyper::None { log_s2_beta } => v.push(log_s2_beta),
            Hyper::Undirected {
                log_s2_beta,
                mu_gamma,
                log_s2_gamma,
            } => v.extend([log_s2_beta, mu_gamma, log_s2_gamma]),
            Hyper::Directed {
                log_s2_beta,
                log_s2_delta,
                log_s2_phi,
                z_rho,
            } => v.extend([log_s2_beta, log_s2_delta, log_s2_phi, z_rho]),
        }
        v
    }

    /// Indices of `ϑ` holding log-variances.
    pub fn log_variance_indices(&self) -> Vec<usize> {
        let h = self.hyper_start();
        match self.heterogeneity {
            Heterogeneity::None => vec![h],
            Heterogeneity::UndirectedGamma => vec![h, h + 2],
            Heterogeneity::DirectedSenderReceiver => vec![h, h + 1, h + 2],
        }
    }

    /// Index of the Fisher-z transformed correlation, if present.
    pub fn z_rho_index(&self) -> Option<usize> {
        match self.heterogeneity {
            Heterogeneity::DirectedSenderReceiver => Some(self.hyper_start() + 3),
            _ => None,
        }
    }

    /// Human-readable name of every entry of `ϑ`.
    pub fn names(&self, term_labels: &[String]) -> Vec<String> {
        let n = self.n_nodes;
        let mut names: Vec<String> = term_labels.to_vec();
        match self.heterogeneity {
            Heterogeneity::None => names.push("log_sigma2_beta".into()),
            Heterogeneity::UndirectedGamma => {
                names.extend((0..n).map(|i| format!("gamma[{i}]")));
                names.extend(["log_sigma2_beta", "mu_gamma", "log_sigma2_gamma"].map(String::from));
            }
            Heterogeneity::DirectedSenderReceiver => {
                names.extend((0..n).map(|i| format!("delta[{i}]")));
                names.extend((0..n).map(|i| format!("phi[{i}]")));
                names.extend(
                    [
                        "log_sigma2_beta",
                        "log_sigma2_delta",
                        "log_sigma2_phi",
                        "fisher_z_rho",
                    ]
                    .map(String::from),
                );
            }
        }
        names
    }
}

/// Hyperparameters on the unconstrained scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    None {
        log_s2_beta: f64,
    },
    Undirected {
        log_s2_beta: f64,
        mu_gamma: f64,
        log_s2_gamma: f64,
    },
    Directed {
        log_s2_beta: f64,
        log_s2_delta: f64,
        log_s2_phi: f64,
        z_rho: f64,
    },
}

/// `ϑ` split into its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub beta: Vec<f64>,
    /// `γ` (undirected) or `δ` followed by `φ` (directed).
    pub effects: Vec<f64>,
    pub hyper: Hyper,
}

/// Observed sufficient and degree statistics of the data network.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

/// Source of `E[s(y)]` and `E[t(y)]` under `p(y | θ)`.
pub trait ExpectationEstimator {
    /// Expected statistics at `θ = (β, γ)`, the leading `theta_dim` entries of `ϑ`.
    fn expected_stats(&mut self, model: &Model, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// A model specification resolved against a network size.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    terms: TermSet,
    layout: ParamLayout,
}

/// `log φ(x; 0, σ²)` with `σ² = e^u`.
#[inline]
fn ln_normal(x: f64, mean: f64, log_var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + log_var + d * d * (-log_var).exp())
}

/// Log-density of `u = log σ²` when `σ² ~ Weibull(1/2, b)`, Jacobian included.
#[inline]
pub fn ln_weibull_half_log_scale(u: f64, b: f64) -> f64 {
    -std::f64::consts::LN_2 - 0.5 * b.ln() + 0.5 * u - (0.5 * u).exp() / b.sqrt()
}

#[inline]
fn d_ln_weibull_half_log_scale(u: f64, b: f64) -> f64 {
    0.5 - 0.5 * (0.5 * u).exp() / b.sqrt()
}

/// Weibull density with shape 1/2 and scale `b`, on the natural scale.
pub fn weibull_half_density(x: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (-(x / b).sqrt()).exp() / (2.0 * (b * x).sqrt())
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Correlation pieces for `ρ = tanh z`: returns `(ρ, ln(1-ρ²), ln((1+ρ)/2), ln((1-ρ)/2))`.
#[inline]
fn rho_parts(z: f64) -> (f64, f64, f64, f64) {
    let ln_up = -softplus(-2.0 * z);
    let ln_down = -softplus(2.0 * z);
    (
        z.tanh(),
        2.0 * std::f64::consts::LN_2 + ln_up + ln_down,
        ln_up,
        ln_down,
    )
}

impl Model {
    pub fn new(
        spec: ModelSpec,
        cov: &CovariateTable,
        n_nodes: usize,
        directed: bool,
    ) -> Result<Self> {
        match (spec.heterogeneity, directed) {
            (Heterogeneity::UndirectedGamma, true) => {
                return Err(Error::InvalidConfig(
                    "undirected_gamma heterogeneity requires an undirected network".into(),
                ))
            }
            (Heterogeneity::DirectedSenderReceiver, false) => {
                return Err(Error::InvalidConfig(
                    "directed_sender_receiver heterogeneity requires a directed network".into(),
                ))
            }
            _ => {}
        }
        let has_edges = spec.terms.contains(&StatisticTerm::Edges);
        if spec.heterogeneity == Heterogeneity::UndirectedGamma
            && spec.intercept_mode == InterceptMode::MuGamma
            && has_edges
        {
            return Err(Error::InvalidConfig(
                "the edges term must be dropped when mu_gamma carries the intercept".into(),
            ));
        }
        let h = &spec.hyper;
        let positive = [
            h.b_beta, h.b_gamma, h.b_mu, h.b_delta, h.b_phi, h.a_rho, h.b_rho,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(
                "hyperparameters must be positive".into(),
            ));
        }
        let terms = TermSet::new(&spec.terms, cov, n_nodes, directed)?;
        let layout = ParamLayout {
            n_terms: terms.len(),
            n_nodes,
            heterogeneity: spec.heterogeneity,
        };
        Ok(Self {
            spec,
            terms,
            layout,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn terms(&self) -> &TermSet {
        &self.terms
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.n_nodes
    }

    pub fn is_directed(&self) -> bool {
        self.terms.is_directed()
    }

    pub fn has_effects(&self) -> bool {
        self.spec.heterogeneity != Heterogeneity::None
    }

    /// Names of the entries of `ϑ`.
    pub fn param_names(&self) -> Vec<String> {
        self.layout.names(&self.terms.labels())
    }

    pub fn observe(&self, net: &Network) -> Result<Observed> {
        let s = self.terms.compute(net)?;
        let t = if self.has_effects() {
            compute_degree_vector(net)
        } else {
            Vec::new()
        };
        Ok(Observed { s, t })
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.layout.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.layout.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `s(y, x)ᵀβ + t(y)ᵀγ`; `params` may be `θ` or the full `ϑ`.
    pub fn log_unnorm_likelihood(&self, params: &[f64], obs: &Observed) -> Result<f64> {
        let p = self.layout.n_terms;
        let q = self.layout.theta_dim();
        if params.len() < q || obs.s.len() != p || obs.t.len() != self.layout.n_effects() {
            return Err(Error::DimensionMismatch {
                what: "likelihood arguments",
                expected: q,
                got: params.len(),
            });
        }
        let sb: f64 = obs.s.iter().zip(&params[..p]).map(|(a, b)| a * b).sum();
        let tg: f64 = obs.t.iter().zip(&params[p..q]).map(|(a, b)| a * b).sum();
        Ok(sb + tg)
    }

    /// Log prior density of `ϑ` on the unconstrained scale.
    pub fn log_prior(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        Ok(self.prior_eval(v, None))
    }

    /// Gradient of [`Model::log_prior`].
    pub fn grad_log_prior(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        let mut g = vec![0.0; v.len()];
        self.prior_eval(v, Some(&mut g));
        Ok(g)
    }

    /// Evaluates the log prior and, when `grad` is given, adds its gradient.
    fn prior_eval(&self, v: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let l = &self.layout;
        let h = &self.spec.hyper;
        let hs = l.hyper_start();
        let p = l.n_terms;
        let n = l.n_nodes;
        let mut lp = 0.0;

        // β | σ²_β and σ²_β
        let u_b = v[hs];
        let inv_b = (-u_b).exp();
        let mut ss = 0.0;
        for k in 0..p {
            lp += ln_normal(v[k], 0.0, u_b);
            ss += v[k] * v[k];
            if let Some(g) = grad.as_deref_mut() {
                g[k] -= v[k] * inv_b;
            }
        }
        lp += ln_weibull_half_log_scale(u_b, h.b_beta);
        if let Some(g) = grad.as_deref_mut() {
            g[hs] +=
                -0.5 * p as f64 + 0.5 * ss * inv_b + d_ln_weibull_half_log_scale(u_b, h.b_beta);
        }

        match l.heterogeneity {
            Heterogeneity::None => {}
            Heterogeneity::UndirectedGamma => {
                let mu = v[hs + 1];
                let u_g = v[hs + 2];
                let inv_g = (-u_g).exp();
                let mean = match self.spec.intercept_mode {
                    InterceptMode::MuGamma => mu,
                    InterceptMode::EdgeTerm => 0.0,
                };
                let mut sum_d = 0.0;
                let mut sum_d2 = 0.0;
                for i in 0..n {
                    let d = v[p + i] - mean;
                    lp += ln_normal(v[p + i], mean, u_g);
                    sum_d += d;
                    sum_d2 += d * d;
                    if let Some(g) = grad.as_deref_mut() {
                        g[p + i] -= d * inv_g;
                    }
                }
                lp += ln_normal(mu, 0.0, h.b_mu.ln());
                lp += ln_weibull_half_log_scale(u_g, h.b_gamma);
                if let Some(g) = grad.as_deref_mut() {
                    if self.spec.intercept_mode == InterceptMode::MuGamma {
                        g[hs + 1] += sum_d * inv_g;
                    }
                    g[hs + 1] -= mu / h.b_mu;
                    g[hs + 2] += -0.5 * n as f64
                        + 0.5 * sum_d2 * inv_g
                        + d_ln_weibull_half_log_scale(u_g, h.b_gamma);
                }
            }
            Heterogeneity::DirectedSenderReceiver => {
                let (u_d, u_p, z) = (v[hs + 1], v[hs + 2], v[hs + 3]);
                let (rho, ln_1mr2, ln_up, ln_down) = rho_parts(z);
                let one_m_r2 = ln_1mr2.exp();
                let ia = (-u_d).exp();
                let ic = (-u_p).exp();
                let iac = (-0.5 * (u_d + u_p)).exp();
                let (mut s_dd, mut s_dp, mut s_pp) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (d, f) = (v[p + i], v[p + n + i]);
                    s_dd += d * d;
                    s_dp += d * f;
                    s_pp += f * f;
                }
                let (s, t, r) = (s_dd * ia, s_dp * iac, s_pp * ic);
                let quad = (s - 2.0 * rho * t + r) / one_m_r2;
                let nf = n as f64;
                lp += -nf * LN_2PI - 0.5 * nf * (u_d + u_p + ln_1mr2) - 0.5 * quad;
                lp += ln_weibull_half_log_scale(u_d, h.b_delta);
                lp += ln_weibull_half_log_scale(u_p, h.b_phi);
                lp += (h.a_rho - 1.0) * ln_up + (h.b_rho - 1.0) * ln_down
                    - ln_beta(h.a_rho, h.b_rho)
                    - std::f64::consts::LN_2
                    + ln_1mr2;
                if let Some(g) = grad {
                    for i in 0..n {
                        let (d, f) = (v[p + i], v[p + n + i]);
                        g[p + i] -= (d * ia - rho * f * iac) / one_m_r2;
                        g[p + n + i] -= (f * ic - rho * d * iac) / one_m_r2;
                    }
                    g[hs + 1] += -0.5 * nf
                        + 0.5 * (s - rho * t) / one_m_r2
                        + d_ln_weibull_half_log_scale(u_d, h.b_delta);
                    g[hs + 2] += -0.5 * nf
                        + 0.5 * (r - rho * t) / one_m_r2
                        + d_ln_weibull_half_log_scale(u_p, h.b_phi);
                    let d_quad = (-2.0 * t * one_m_r2 + 2.0 * rho * (s - 2.0 * rho * t + r))
                        / (one_m_r2 * one_m_r2);
                    let d_rho = nf * rho / one_m_r2 - 0.5 * d_quad + (h.a_rho - 1.0) / (1.0 + rho)
                        - (h.b_rho - 1.0) / (1.0 - rho);
                    g[hs + 3] += one_m_r2 * d_rho - 2.0 * rho;
                }
            }
        }
        lp
    }

    /// Gradient of `log h(ϑ) = log p(y | ϑ) + log p(ϑ)`.
    ///
    /// The derivative of `log κ(β, γ)` is the expectation of `(s(y), t(y))`,
    /// supplied by `estimator` at the current `θ`.
    pub fn grad_log_h(
        &self,
        v: &[f64],
        obs: &Observed,
        estimator: &mut dyn ExpectationEstimator,
    ) -> Result<Vec<f64>> {
        let mut g = self.grad_log_prior(v)?;
        let q = self.layout.theta_dim();
        let (es, et) = estimator.expected_stats(self, &v[..q])?;
        let p = self.layout.n_terms;
        for k in 0..p {
            g[k] += obs.s[k] - es[k];
        }
        for (i, gi) in g[p..q].iter_mut().enumerate() {
            *gi += obs.t[i] - et[i];
        }
        Ok(g)
    }

    /// Initial value of `ϑ`: zero except the intercept, which matches the
    /// observed density, and unit variances.
    pub fn initial_params(&self, net: &Network) -> Vec<f64> {
        let mut v = vec![0.0; self.layout.dim()];
        let density = net.density().clamp(1e-3, 1.0 - 1e-3);
        let logit = (density / (1.0 - density)).ln();
        if let Some(k) = self
            .spec
            .terms
            .iter()
            .position(|t| *t == StatisticTerm::Edges)
        {
            v[k] = logit;
        } else if self.spec.heterogeneity == Heterogeneity::UndirectedGamma {
            // β_edge = 2 μ_γ
            let mu = 0.5 * logit;
            let p = self.layout.n_terms;
            for x in &mut v[p..p + self.layout.n_nodes] {
                *x = mu;
            }
            v[self.layout.hyper_start() + 1] = mu;
        }
        v
    }
}
