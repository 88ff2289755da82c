//! Exhaustive ground truth for tiny networks.
//!
//! All `2^D` networks on `D` dyads are visited in Gray-code order, so
//! consecutive networks differ by a single toggle and statistics are updated
//! with change statistics. Networks are identified by a code whose bit `d` is
//! set when dyad `d` (in [`dyad_list`] order) is a tie.
//!
//! Posterior quantities integrate over `β` with the midpoint rule on a
//! regular grid. Under the hierarchical prior `β ~ N(0, σ²_β I)`,
//! `σ²_β ~ Weibull(1/2, b)`, the standard deviation `σ_β` is exponential with
//! mean `√b`, and the marginal prior density of `β` is obtained by a
//! one-dimensional integral over `log σ_β`. That density is singular at the
//! origin, so cells close to it use the exact prior mass of the cell instead
//! of the midpoint density.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::model::{ExpectationEstimator, Heterogeneity, Model};
use crate::statistics::compute_degree_vector;

/// Largest number of dyads accepted for enumeration.
pub const MAX_DYADS: usize = 24;

/// Dyads in enumeration order: row-major over `i`, `j > i` for undirected
/// networks and all `j != i` for directed ones.
pub fn dyad_list(n: usize, directed: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Code of `net` in the enumeration.
pub fn graph_code(net: &Network) -> u64 {
    dyad_list(net.n_nodes(), net.is_directed())
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| net.has_edge(i, j))
        .fold(0u64, |acc, (d, _)| acc | (1 << d))
}

/// Statistics of every network, grouped by distinct `(s, t)` value.
#[derive(Debug, Clone)]
pub struct StatTable {
    /// Distinct concatenated `(s, t)` rows.
    rows: Vec<Vec<f64>>,
    /// Number of networks sharing each row.
    counts: Vec<f64>,
    /// Row index of each network code.
    row_of_code: Vec<u32>,
    n_terms: usize,
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl StatTable {
    pub fn new(model: &Model) -> Result<Self> {
        let n = model.n_nodes();
        let directed = model.is_directed();
        let dyads = dyad_list(n, directed);
        if dyads.len() > MAX_DYADS {
            return Err(Error::TooManyDyads {
                dyads: dyads.len(),
                limit: MAX_DYADS,
            });
        }
        let total = 1usize << dyads.len();
        let mut net = Network::empty(n, directed)?;
        let mut s = model.terms().compute(&net)?;
        let mut change = vec![0.0; s.len()];
        let with_t = model.has_effects();
        let mut index: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut rows = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut row_of_code = vec![0u32; total];
        let mut code = 0u64;
        for k in 0..total {
            if k > 0 {
                let bit = k.trailing_zeros() as usize;
                let (i, j) = dyads[bit];
                let sign = if net.has_edge(i, j) { -1.0 } else { 1.0 };
                model.terms().change_into(&net, i, j, &mut change);
                for (a, c) in s.iter_mut().zip(&change) {
                    *a += sign * c;
                }
                net.toggle_unchecked(i, j);
                code ^= 1 << bit;
            }
            // re-round accumulated sums so equal statistics share a row
            let mut row: Vec<f64> = s.iter().map(|x| (x * 1e9).round() / 1e9).collect();
            if with_t {
                row.extend(compute_degree_vector(&net));
            }
            let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
            let r = *index.entry(key).or_insert_with(|| {
                rows.push(row);
                counts.push(0.0);
                (rows.len() - 1) as u32
            });
            counts[r as usize] += 1.0;
            row_of_code[code as usize] = r;
        }
        Ok(Self {
            rows,
            counts,
            row_of_code,
            n_terms: s.len(),
        })
    }

    pub fn n_networks(&self) -> usize {
        self.row_of_code.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn log_weights(&self, theta: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `log κ(θ)`.
    pub fn log_kappa(&self, theta: &[f64]) -> f64 {
        let lw = self.log_weights(theta);
        logsumexp(lw.iter().zip(&self.counts).map(|(w, c)| w + c.ln()))
    }

    /// `(E[s], E[t])` under `p(y | θ)`.
    pub fn expected(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lw = self.log_weights(theta);
        let lk = logsumexp(lw.iter().zip(&self.counts).map(|(w, c)| w + c.ln()));
        let width = self.rows.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; width];
        for ((row, w), c) in self.rows.iter().zip(&lw).zip(&self.counts) {
            let p = c * (w - lk).exp();
            for (m, x) in mean.iter_mut().zip(row) {
                *m += p * x;
            }
        }
        let t = mean.split_off(self.n_terms);
        (mean, t)
    }

    /// Probability of every network, indexed by code.
    pub fn distribution(&self, theta: &[f64]) -> Vec<f64> {
        let lw = self.log_weights(theta);
        let lk = logsumexp(lw.iter().zip(&self.counts).map(|(w, c)| w + c.ln()));
        let per_row: Vec<f64> = lw.iter().map(|w| (w - lk).exp()).collect();
        self.row_of_code
            .iter()
            .map(|&r| per_row[r as usize])
            .collect()
    }

    /// `(s, t)` of the network with the given code.
    pub fn stats_of(&self, code: u64) -> &[f64] {
        &self.rows[self.row_of_code[code as usize] as usize]
    }
}

/// Exact `log κ(θ)` by enumeration.
pub fn exact_log_kappa(model: &Model, theta: &[f64]) -> Result<f64> {
    Ok(StatTable::new(model)?.log_kappa(theta))
}

/// Exact `(E[s], E[t])` by enumeration.
pub fn exact_expected_stats(model: &Model, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(StatTable::new(model)?.expected(theta))
}

/// Exact probability of every network, indexed by [`graph_code`].
pub fn exact_distribution(model: &Model, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(StatTable::new(model)?.distribution(theta))
}

/// Expectation estimator backed by exact enumeration.
#[derive(Debug, Clone)]
pub struct ExactEstimator {
    table: StatTable,
}

impl ExactEstimator {
    pub fn new(model: &Model) -> Result<Self> {
        Ok(Self {
            table: StatTable::new(model)?,
        })
    }

    pub fn table(&self) -> &StatTable {
        &self.table
    }
}

impl ExpectationEstimator for ExactEstimator {
    fn expected_stats(&mut self, _model: &Model, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(self.table.expected(theta))
    }
}

/// Regular grid for midpoint-rule integration over `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cells per dimension.
    pub cells: usize,
}

impl QuadratureGrid {
    pub fn symmetric(dim: usize, half_width: f64, cells: usize) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
            cells,
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            cells: self.cells * 2,
            ..self.clone()
        }
    }

    fn steps(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / self.cells as f64)
            .collect()
    }
}

/// Log marginal prior density of `β ∈ R^p` with `|β| = r` under the
/// hierarchical prior with scale `b`.
pub fn ln_marginal_beta_prior(r: f64, p: usize, b: f64) -> f64 {
    let r = r.max(1e-300);
    let sb = b.sqrt();
    // integrate over t = ln σ
    let lo = r.ln() - 7.0;
    let hi = (60.0 * sb).ln();
    let steps = (((hi - lo) / 0.01).ceil() as usize).max(200);
    let h = (hi - lo) / steps as f64;
    let pf = p as f64;
    let ln_const = -0.5 * pf * (2.0 * std::f64::consts::PI).ln() - sb.ln();
    let f = |t: f64| {
        let sigma = t.exp();
        (1.0 - pf) * t - r * r / (2.0 * sigma * sigma) - sigma / sb
    };
    let vals: Vec<f64> = (0..=steps).map(|k| f(lo + k as f64 * h)).collect();
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (k, v) in vals.iter().enumerate() {
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        sum += w * (v - m).exp();
    }
    ln_const + m + (sum * h).ln()
}

/// Log prior mass of the box `[lower, upper]` under the hierarchical prior
/// with scale `b`.
pub fn ln_cell_prior_mass(lower: &[f64], upper: &[f64], b: f64) -> f64 {
    let sb = b.sqrt();
    let width = lower
        .iter()
        .zip(upper)
        .map(|(l, u)| u - l)
        .fold(f64::INFINITY, f64::min);
    let lo = width.max(1e-300).ln().min(sb.ln()) - 20.0;
    let hi = (60.0 * sb).ln();
    let steps = (((hi - lo) / 0.01).ceil() as usize).max(200);
    let h = (hi - lo) / steps as f64;
    let mut terms = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = lo + k as f64 * h;
        let sigma = t.exp();
        // density of t = ln σ when σ is exponential with mean √b
        let mut v = t - sigma / sb - sb.ln();
        for (l, u) in lower.iter().zip(upper) {
            v += ln_normal_interval(l / sigma, u / sigma);
        }
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        terms.push(v + f64::ln(w));
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (terms.iter().map(|v| (v - m).exp()).sum::<f64>() * h).ln()
}

/// `ln(Φ(u) − Φ(l))` computed on the side of the smaller tail.
fn ln_normal_interval(l: f64, u: f64) -> f64 {
    use statrs::function::erf::erfc;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mass = if l >= 0.0 {
        0.5 * (erfc(l * s) - erfc(u * s))
    } else if u <= 0.0 {
        0.5 * (erfc(-u * s) - erfc(-l * s))
    } else {
        1.0 - 0.5 * (erfc(-l * s) + erfc(u * s))
    };
    mass.max(0.0).ln()
}

/// Cells whose distance to the origin is below this many cell widths use the
/// exact prior mass.
const SINGULAR_CELLS: f64 = 6.0;

/// Posterior summaries of `β` from grid quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    /// Row-major `p × p` covariance.
    pub cov: Vec<f64>,
    /// `log p(y)`.
    pub log_evidence: f64,
    /// Largest absolute change of mean, covariance and log evidence when the
    /// grid is refined by a factor of two.
    pub refinement_change: f64,
}

impl PosteriorMoments {
    pub fn sd(&self, k: usize) -> f64 {
        let p = self.mean.len();
        self.cov[k * p + k].sqrt()
    }
}

fn check_homogeneous(model: &Model) -> Result<()> {
    if model.spec().heterogeneity != Heterogeneity::None {
        return Err(Error::InvalidConfig(
            "grid posterior oracle supports models without random effects only".into(),
        ));
    }
    if !(1..=2).contains(&model.layout().n_terms) {
        return Err(Error::InvalidConfig(
            "grid posterior oracle supports one or two coefficients".into(),
        ));
    }
    Ok(())
}

fn grid_moments(
    model: &Model,
    table: &StatTable,
    obs_s: &[f64],
    grid: &QuadratureGrid,
) -> (Vec<f64>, Vec<f64>, f64) {
    let p = model.layout().n_terms;
    let b = model.spec().hyper.b_beta;
    let steps = grid.steps();
    let cells = grid.cells;
    let total = cells.pow(p as u32);
    let point = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        (0..p)
            .map(|d| {
                let c = rem % cells;
                rem /= cells;
                grid.lower[d] + (c as f64 + 0.5) * steps[d]
            })
            .collect()
    };
    let log_post: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let beta = point(idx);
            let r = beta.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ll: f64 =
                obs_s.iter().zip(&beta).map(|(a, c)| a * c).sum::<f64>() - table.log_kappa(&beta);
            let near = beta
                .iter()
                .zip(&steps)
                .all(|(x, h)| x.abs() < SINGULAR_CELLS * h);
            let prior = if near {
                let lo: Vec<f64> = beta.iter().zip(&steps).map(|(x, h)| x - 0.5 * h).collect();
                let hi: Vec<f64> = beta.iter().zip(&steps).map(|(x, h)| x + 0.5 * h).collect();
                ln_cell_prior_mass(&lo, &hi, b) - steps.iter().map(|h| h.ln()).sum::<f64>()
            } else {
                ln_marginal_beta_prior(r, p, b)
            };
            ll + prior
        })
        .collect();
    let m = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cell_volume: f64 = steps.iter().product();
    let mut z = 0.0;
    let mut mean = vec![0.0; p];
    let mut second = vec![0.0; p * p];
    for (idx, lp) in log_post.iter().enumerate() {
        let w = (lp - m).exp();
        let beta = point(idx);
        z += w;
        for a in 0..p {
            mean[a] += w * beta[a];
            for c in 0..p {
                second[a * p + c] += w * beta[a] * beta[c];
            }
        }
    }
    for x in &mut mean {
        *x /= z;
    }
    let mut cov = vec![0.0; p * p];
    for a in 0..p {
        for c in 0..p {
            cov[a * p + c] = second[a * p + c] / z - mean[a] * mean[c];
        }
    }
    (mean, cov, m + (z * cell_volume).ln())
}

/// Exact posterior mean and covariance of `β` for a model without random
/// effects and at most two coefficients.
pub fn exact_posterior_moments(
    net: &Network,
    model: &Model,
    grid: &QuadratureGrid,
) -> Result<PosteriorMoments> {
    check_homogeneous(model)?;
    let p = model.layout().n_terms;
    if grid.lower.len() != p || grid.upper.len() != p || grid.cells == 0 {
        return Err(Error::InvalidConfig(
            "grid dimension does not match the model".into(),
        ));
    }
    let table = StatTable::new(model)?;
    let obs = model.observe(net)?;
    let (mean, cov, le) = grid_moments(model, &table, &obs.s, grid);
    let (mean2, cov2, le2) = grid_moments(model, &table, &obs.s, &grid.refined());
    let change = mean
        .iter()
        .zip(&mean2)
        .chain(cov.iter().zip(&cov2))
        .map(|(a, b)| (a - b).abs())
        .fold((le - le2).abs(), f64::max);
    Ok(PosteriorMoments {
        mean: mean2,
        cov: cov2,
        log_evidence: le2,
        refinement_change: change,
    })
}

/// Exact `log BF_12 = log p(y | M1) - log p(y | M2)` by grid quadrature.
pub fn exact_log_bf(
    net: &Network,
    model_1: &Model,
    grid_1: &QuadratureGrid,
    model_2: &Model,
    grid_2: &QuadratureGrid,
) -> Result<f64> {
    let a = exact_posterior_moments(net, model_1, grid_1)?;
    let b = exact_posterior_moments(net, model_2, grid_2)?;
    Ok(a.log_evidence - b.log_evidence)
}
