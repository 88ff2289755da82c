//! Posterior predictive goodness of fit.
//!
//! Networks are simulated at parameter draws from the fitted posterior and
//! three summary distributions are compared with those of the observed
//! network: degrees (in- and out-degrees separately for directed networks),
//! geodesic distances and edgewise shared partners. Directed shared
//! partners count two-paths `i -> k -> j` for each tie `i -> j`.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::inference::posterior_theta_draws;
use crate::model::Model;
use crate::sampler::{simulate_many, SamplerConfig};
use crate::vi::FitResult;

/// `counts[k]` = number of nodes with degree `k`, `k = 0..N−1`.
pub fn degree_distribution(net: &Network) -> Vec<u64> {
    histogram(net.n_nodes(), (0..net.n_nodes()).map(|i| net.degree(i)))
}

pub fn out_degree_distribution(net: &Network) -> Vec<u64> {
    histogram(net.n_nodes(), (0..net.n_nodes()).map(|i| net.out_degree(i)))
}

pub fn in_degree_distribution(net: &Network) -> Vec<u64> {
    histogram(net.n_nodes(), (0..net.n_nodes()).map(|i| net.in_degree(i)))
}

fn histogram(bins: usize, values: impl Iterator<Item = usize>) -> Vec<u64> {
    let mut h = vec![0u64; bins.max(1)];
    for v in values {
        h[v] += 1;
    }
    h
}

/// Geodesic distances: entry `d − 1` counts pairs at distance `d`
/// (`d = 1..N−1`) and the last entry counts unreachable pairs. Undirected
/// pairs are counted once, directed pairs per ordered pair.
pub fn geodesic_distribution(net: &Network) -> Vec<u64> {
    let n = net.n_nodes();
    let mut h = vec![0u64; n.max(1)];
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for v in net.out_neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let targets = if net.is_directed() { 0..n } else { src + 1..n };
        for t in targets {
            if t == src {
                continue;
            }
            match dist[t] {
                usize::MAX => h[n - 1] += 1,
                d => h[d - 1] += 1,
            }
        }
    }
    h
}

/// `counts[k]` = number of ties with exactly `k` shared partners,
/// `k = 0..N−2`.
pub fn esp_distribution(net: &Network) -> Vec<u64> {
    let bins = net.n_nodes().saturating_sub(1).max(1);
    let values = net.edges().into_iter().map(|(i, j)| {
        if net.is_directed() {
            net.common_out_in(i, j)
        } else {
            net.common_out(i, j)
        }
    });
    histogram(bins, values)
}

/// Observed and simulated distributions of one summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofFamily {
    pub name: String,
    /// Label of each bin.
    pub bins: Vec<String>,
    pub observed: Vec<u64>,
    /// One row per simulated network.
    pub simulated: Vec<Vec<u64>>,
    /// `[min, q25, median, q75, max]` per bin.
    pub summary: Vec<[f64; 5]>,
}

impl GofFamily {
    fn new(name: &str, bins: Vec<String>, observed: Vec<u64>, simulated: Vec<Vec<u64>>) -> Self {
        let summary = (0..observed.len())
            .map(|b| {
                let mut col: Vec<f64> = simulated.iter().map(|r| r[b] as f64).collect();
                col.sort_by(f64::total_cmp);
                [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&col, p))
            })
            .collect();
        Self {
            name: name.to_string(),
            bins,
            observed,
            simulated,
            summary,
        }
    }

    /// Share of bins with observed count at least `min_mass` whose observed
    /// value lies within the simulated `[min, max]` band. `None` when no bin
    /// qualifies.
    pub fn band_coverage(&self, min_mass: u64) -> Option<(usize, usize)> {
        let mut total = 0;
        let mut inside = 0;
        for (b, &o) in self.observed.iter().enumerate() {
            if o >= min_mass {
                total += 1;
                let [lo, _, _, _, hi] = self.summary[b];
                if (o as f64) >= lo && (o as f64) <= hi {
                    inside += 1;
                }
            }
        }
        (total > 0).then_some((inside, total))
    }
}

/// Linear interpolation between order statistics of a sorted sample.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub n_sim: usize,
    pub families: Vec<GofFamily>,
}

impl GofReport {
    pub fn family(&self, name: &str) -> Option<&GofFamily> {
        self.families.iter().find(|f| f.name == name)
    }

    /// Long format: `family,bin,simulation,count`, with the observed network
    /// as simulation `observed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["family", "bin", "simulation", "count"])
            .map_err(io_err)?;
        for f in &self.families {
            for (b, label) in f.bins.iter().enumerate() {
                wr.write_record([
                    f.name.as_str(),
                    label,
                    "observed",
                    &f.observed[b].to_string(),
                ])
                .map_err(io_err)?;
                for (s, row) in f.simulated.iter().enumerate() {
                    wr.write_record([f.name.as_str(), label, &s.to_string(), &row[b].to_string()])
                        .map_err(io_err)?;
                }
            }
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// `family,bin,observed,min,q25,median,q75,max`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "family", "bin", "observed", "min", "q25", "median", "q75", "max",
        ])
        .map_err(io_err)?;
        for f in &self.families {
            for (b, label) in f.bins.iter().enumerate() {
                let mut rec = vec![f.name.clone(), label.clone(), f.observed[b].to_string()];
                rec.extend(f.summary[b].iter().map(|v| v.to_string()));
                wr.write_record(&rec).map_err(io_err)?;
            }
        }
        wr.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

type Summaries = Vec<(&'static str, Vec<u64>)>;

fn summaries(net: &Network) -> Summaries {
    let mut out = Vec::with_capacity(4);
    if net.is_directed() {
        out.push(("odegree", out_degree_distribution(net)));
        out.push(("idegree", in_degree_distribution(net)));
    } else {
        out.push(("degree", degree_distribution(net)));
    }
    out.push(("geodesic", geodesic_distribution(net)));
    out.push(("esp", esp_distribution(net)));
    out
}

fn bin_labels(name: &str, len: usize) -> Vec<String> {
    match name {
        "geodesic" => (1..len)
            .map(|d| d.to_string())
            .chain(["inf".to_string()])
            .collect(),
        _ => (0..len).map(|k| k.to_string()).collect(),
    }
}

/// Simulates `n_sim` networks at posterior draws of `θ` and tabulates them
/// against `net`. Each network comes from its own chain started at `net`
/// after `sampler.burnin` proposals.
pub fn bgof(
    fit: &FitResult,
    model: &Model,
    net: &Network,
    n_sim: usize,
    sampler: &SamplerConfig,
) -> Result<GofReport> {
    if n_sim == 0 {
        return Err(Error::InvalidConfig("n_sim must be >= 1".into()));
    }
    let thetas = posterior_theta_draws(fit, model, n_sim, sampler.seed)?;
    let cfg = SamplerConfig {
        n_draws: 1,
        ..sampler.clone()
    };
    let nets = simulate_many(net, &thetas, model, &cfg)?;
    let sims: Vec<Summaries> = nets.iter().map(|draws| summaries(&draws[0])).collect();
    let families = summaries(net)
        .into_iter()
        .enumerate()
        .map(|(k, (name, observed))| {
            let rows = sims.iter().map(|s| s[k].1.clone()).collect();
            GofFamily::new(name, bin_labels(name, observed.len()), observed, rows)
        })
        .collect();
    Ok(GofReport { n_sim, families })
}
