//! Tie-no-tie Metropolis–Hastings simulation from `p(y | β, γ)`.
//!
//! Each proposal picks, with probability `tnt_mix`, a uniformly random
//! existing tie (a removal proposal) and otherwise a uniformly random dyad
//! (toggled whatever its state). When the network has no ties the dyad
//! proposal is used with probability one. The Hastings correction uses the
//! exact proposal probability of the toggled dyad in both states, so the
//! chain is reversible with respect to the mixed ERGM.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::model::{ExpectationEstimator, Model};
use crate::statistics::{compute_degree_vector, TermSet};

/// Largest parameter move (max-norm) after which a warm-started chain is
/// burnt in again.
pub const WARM_START_JUMP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub burnin: usize,
    /// Proposals between retained draws; `None` means one sweep over all dyads.
    pub thin: Option<usize>,
    pub n_draws: usize,
    pub tnt_mix: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burnin: 5000,
            thin: None,
            n_draws: 5,
            tnt_mix: 0.5,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::InvalidConfig("sampler n_draws must be >= 1".into()));
        }
        if !(self.tnt_mix > 0.0 && self.tnt_mix < 1.0) {
            return Err(Error::InvalidConfig("tnt_mix must lie in (0, 1)".into()));
        }
        if self.thin == Some(0) {
            return Err(Error::InvalidConfig("thin must be >= 1".into()));
        }
        Ok(())
    }

    pub fn thin_for(&self, net: &Network) -> usize {
        self.thin.unwrap_or_else(|| net.n_dyads()).max(1)
    }
}

/// Seeded generator for stream `stream` of a run with seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `log p(y') - log p(y)` contribution of the degree statistics when `(i, j)`
/// is added.
#[inline]
fn effect_change(effects: &[f64], n: usize, directed: bool, i: usize, j: usize) -> f64 {
    if effects.is_empty() {
        0.0
    } else if directed {
        effects[i] + effects[n + j]
    } else {
        effects[i] + effects[j]
    }
}

/// Probability of proposing a particular dyad in a network with `ties` ties,
/// given whether the dyad is currently a tie.
#[inline]
fn proposal_prob(is_tie: bool, ties: usize, dyads: f64, mix: f64) -> f64 {
    if ties == 0 {
        1.0 / dyads
    } else if is_tie {
        mix / ties as f64 + (1.0 - mix) / dyads
    } else {
        (1.0 - mix) / dyads
    }
}

#[inline]
fn uniform_dyad<R: Rng + ?Sized>(rng: &mut R, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// One tie-no-tie transition. Returns the toggled dyad when the proposal is
/// accepted; `change` then holds its change statistics (in the pre-toggle
/// state).
pub(crate) fn tnt_transition<R: Rng + ?Sized>(
    net: &mut Network,
    terms: &TermSet,
    theta: &[f64],
    mix: f64,
    rng: &mut R,
    change: &mut [f64],
) -> Option<(usize, usize)> {
    let n = net.n_nodes();
    let ties = net.edge_count();
    let (i, j) = if ties > 0 && rng.random::<f64>() < mix {
        net.tie_at(rng.random_range(0..ties))
    } else {
        uniform_dyad(rng, n)
    };
    let p = terms.len();
    terms.change_into(net, i, j, change);
    let mut delta: f64 = change.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
    delta += effect_change(&theta[p..], n, net.is_directed(), i, j);
    let present = net.has_edge(i, j);
    let dyads = net.n_dyads() as f64;
    let (log_target, q_fwd, q_rev) = if present {
        (
            -delta,
            proposal_prob(true, ties, dyads, mix),
            proposal_prob(false, ties - 1, dyads, mix),
        )
    } else {
        (
            delta,
            proposal_prob(false, ties, dyads, mix),
            proposal_prob(true, ties + 1, dyads, mix),
        )
    };
    let log_accept = log_target + (q_rev / q_fwd).ln();
    if log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept {
        net.toggle_unchecked(i, j);
        Some((i, j))
    } else {
        None
    }
}

fn check_theta(model: &Model, theta: &[f64]) -> Result<()> {
    let q = model.layout().theta_dim();
    if theta.len() < q {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: q,
            got: theta.len(),
        });
    }
    Ok(())
}

fn check_net(model: &Model, net: &Network) -> Result<()> {
    if net.n_nodes() != model.n_nodes() || net.is_directed() != model.is_directed() {
        return Err(Error::InvalidConfig(
            "starting network does not match the model's node set or directedness".into(),
        ));
    }
    Ok(())
}

/// A Markov chain over networks that tracks `s(y)` incrementally.
#[derive(Debug, Clone)]
pub struct Chain {
    net: Network,
    stats: Vec<f64>,
    change: Vec<f64>,
    mix: f64,
    rng: ChaCha8Rng,
}

impl Chain {
    pub fn new(model: &Model, net0: Network, mix: f64, rng: ChaCha8Rng) -> Result<Self> {
        check_net(model, &net0)?;
        let stats = model.terms().compute(&net0)?;
        Ok(Self {
            change: vec![0.0; stats.len()],
            net: net0,
            stats,
            mix,
            rng,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Current `s(y)`.
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    /// Runs `proposals` transitions at `theta`; returns the number accepted.
    pub fn advance(&mut self, terms: &TermSet, theta: &[f64], proposals: usize) -> usize {
        let mut accepted = 0;
        for _ in 0..proposals {
            if let Some((i, j)) = tnt_transition(
                &mut self.net,
                terms,
                theta,
                self.mix,
                &mut self.rng,
                &mut self.change,
            ) {
                // toggled from absent to present iff the dyad is now a tie
                let sign = if self.net.has_edge(i, j) { 1.0 } else { -1.0 };
                for (s, c) in self.stats.iter_mut().zip(&self.change) {
                    *s += sign * c;
                }
                accepted += 1;
            }
        }
        accepted
    }
}

/// One tie-no-tie transition applied to `net`.
pub fn tnt_step<R: Rng + ?Sized>(
    net: &mut Network,
    theta: &[f64],
    model: &Model,
    mix: f64,
    rng: &mut R,
) -> Result<()> {
    check_theta(model, theta)?;
    check_net(model, net)?;
    let mut change = vec![0.0; model.terms().len()];
    tnt_transition(net, model.terms(), theta, mix, rng, &mut change);
    Ok(())
}

/// Draws `cfg.n_draws` networks after `cfg.burnin` proposals, separated by
/// `thin` proposals each.
pub fn simulate(
    net0: &Network,
    theta: &[f64],
    model: &Model,
    cfg: &SamplerConfig,
) -> Result<Vec<Network>> {
    cfg.validate()?;
    check_theta(model, theta)?;
    let thin = cfg.thin_for(net0);
    let mut chain = Chain::new(model, net0.clone(), cfg.tnt_mix, stream_rng(cfg.seed, 0))?;
    chain.advance(model.terms(), theta, cfg.burnin);
    let mut out = Vec::with_capacity(cfg.n_draws);
    for _ in 0..cfg.n_draws {
        chain.advance(model.terms(), theta, thin);
        out.push(chain.network().clone());
    }
    Ok(out)
}

/// Per-draw statistics `(s(y), t(y))` of a simulation run.
pub fn simulate_stats(
    net0: &Network,
    theta: &[f64],
    model: &Model,
    cfg: &SamplerConfig,
    stream: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    cfg.validate()?;
    check_theta(model, theta)?;
    let thin = cfg.thin_for(net0);
    let mut chain = Chain::new(
        model,
        net0.clone(),
        cfg.tnt_mix,
        stream_rng(cfg.seed, stream),
    )?;
    chain.advance(model.terms(), theta, cfg.burnin);
    let mut out = Vec::with_capacity(cfg.n_draws);
    for _ in 0..cfg.n_draws {
        chain.advance(model.terms(), theta, thin);
        out.push((chain.stats().to_vec(), degree_stats(model, chain.network())));
    }
    Ok(out)
}

fn degree_stats(model: &Model, net: &Network) -> Vec<f64> {
    if model.has_effects() {
        compute_degree_vector(net)
    } else {
        Vec::new()
    }
}

/// Monte Carlo estimate of `(E[s(y)], E[t(y)])` from one chain.
pub fn estimate_expected_stats(
    theta: &[f64],
    model: &Model,
    cfg: &SamplerConfig,
    net0: &Network,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let draws = simulate_stats(net0, theta, model, cfg, 0)?;
    Ok(mean_stats(&draws))
}

pub(crate) fn mean_stats(draws: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    let l = draws.len() as f64;
    let mut es = vec![0.0; draws[0].0.len()];
    let mut et = vec![0.0; draws[0].1.len()];
    for (s, t) in draws {
        for (a, b) in es.iter_mut().zip(s) {
            *a += b;
        }
        for (a, b) in et.iter_mut().zip(t) {
            *a += b;
        }
    }
    es.iter_mut().chain(et.iter_mut()).for_each(|x| *x /= l);
    (es, et)
}

/// Simulates one independent run per parameter vector in parallel, each on
/// its own random stream `seed:index`. Results are in input order.
pub fn simulate_many(
    net0: &Network,
    thetas: &[Vec<f64>],
    model: &Model,
    cfg: &SamplerConfig,
) -> Result<Vec<Vec<Network>>> {
    cfg.validate()?;
    thetas
        .par_iter()
        .enumerate()
        .map(|(k, theta)| {
            check_theta(model, theta)?;
            let thin = cfg.thin_for(net0);
            let mut chain = Chain::new(
                model,
                net0.clone(),
                cfg.tnt_mix,
                stream_rng(cfg.seed, k as u64),
            )?;
            chain.advance(model.terms(), theta, cfg.burnin);
            let mut out = Vec::with_capacity(cfg.n_draws);
            for _ in 0..cfg.n_draws {
                chain.advance(model.terms(), theta, thin);
                out.push(chain.network().clone());
            }
            Ok(out)
        })
        .collect()
}

/// Warm-started Monte Carlo estimator of expected statistics for the
/// stochastic gradient loop.
///
/// The chain continues from its last state between calls. A full burn-in is
/// run on the first call and whenever `θ` moved by more than
/// [`WARM_START_JUMP`] in max-norm since the previous call.
#[derive(Debug, Clone)]
pub struct McEstimator {
    cfg: SamplerConfig,
    start: Network,
    chain: Option<Chain>,
    last_theta: Vec<f64>,
    burnins: usize,
}

impl McEstimator {
    pub fn new(cfg: SamplerConfig, start: Network) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            start,
            chain: None,
            last_theta: Vec::new(),
            burnins: 0,
        })
    }

    /// Number of full burn-ins performed so far.
    pub fn burnins(&self) -> usize {
        self.burnins
    }
}

impl ExpectationEstimator for McEstimator {
    fn expected_stats(&mut self, model: &Model, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_theta(model, theta)?;
        let jump = self.last_theta.len() != theta.len()
            || self
                .last_theta
                .iter()
                .zip(theta)
                .any(|(a, b)| (a - b).abs() > WARM_START_JUMP);
        if self.chain.is_none() {
            self.chain = Some(Chain::new(
                model,
                self.start.clone(),
                self.cfg.tnt_mix,
                stream_rng(self.cfg.seed, 0),
            )?);
        }
        let chain = self.chain.as_mut().expect("chain initialised above");
        if jump {
            chain.advance(model.terms(), theta, self.cfg.burnin);
            self.burnins += 1;
        }
        self.last_theta.clear();
        self.last_theta.extend_from_slice(theta);
        let thin = self.cfg.thin_for(&self.start);
        let mut draws = Vec::with_capacity(self.cfg.n_draws);
        for _ in 0..self.cfg.n_draws {
            chain.advance(model.terms(), theta, thin);
            draws.push((chain.stats().to_vec(), degree_stats(model, chain.network())));
        }
        Ok(mean_stats(&draws))
    }
}
