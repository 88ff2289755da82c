//! Sufficient network statistics, degree statistics and change statistics.
//!
//! A model's statistic terms are resolved once against the covariate table
//! into a [`TermSet`]; the term set then evaluates full statistic vectors
//! (`compute`) and change statistics (`change`) for single dyads. Change
//! statistics are computed from local neighbourhood information only, in the
//! state where the dyad is absent, and equal
//! `s(y with y_ij = 1) - s(y with y_ij = 0)`.
//!
//! Geometrically weighted terms use the weight function
//! `w(m) = e^τ (1 - (1 - e^{-τ})^m)`, so that e.g.
//! `gwesp(τ) = Σ_k w(k) EP_k` with `EP_k` the number of ties with exactly `k`
//! edgewise shared partners. For directed networks shared partners are
//! outgoing two-paths: `k` is a partner of the tie `i -> j` when
//! `i -> k -> j`. The directed `triangle` term counts transitive triples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Network;

pub const DEFAULT_DECAY: f64 = 0.5;

fn default_decay() -> f64 {
    DEFAULT_DECAY
}

/// A single sufficient statistic of an exponential random graph model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StatisticTerm {
    Edges,
    /// Undirected k-stars.
    Kstar {
        k: u32,
    },
    Triangle,
    Gwesp {
        #[serde(default = "default_decay")]
        decay: f64,
    },
    /// Undirected geometrically weighted degree.
    Gwdegree {
        #[serde(default = "default_decay")]
        decay: f64,
    },
    /// Directed geometrically weighted out-degree.
    Gwodegree {
        #[serde(default = "default_decay")]
        decay: f64,
    },
    /// Number of reciprocated pairs.
    Mutual,
    /// Ordered two-paths `i -> k -> j` with `i != j`.
    Twopath,
    /// Number of nodes with in-degree exactly `k`.
    Idegree {
        k: u32,
    },
    /// Number of nodes with out-degree exactly `k`.
    Odegree {
        k: u32,
    },
    /// Directed out-k-stars.
    Ostar {
        k: u32,
    },
    /// Undirected nodal covariate: `Σ_{i<j} y_ij (x_i + x_j)`.
    Nodecov {
        attr: String,
    },
    /// Sender covariate: `Σ_{i≠j} y_ij x_i`.
    NodecovOut {
        attr: String,
    },
    /// Receiver covariate: `Σ_{i≠j} y_ij x_j`.
    NodecovIn {
        attr: String,
    },
    /// Dyadic covariate. Undirected networks use the symmetrised value.
    Edgecov {
        attr: String,
    },
    /// Absolute difference of a nodal covariate.
    Absdiff {
        attr: String,
    },
}

impl StatisticTerm {
    /// Short name used in reports, e.g. `gwesp.0.5` or `nodecov_out.lgdp`.
    pub fn label(&self) -> String {
        use StatisticTerm::*;
        match self {
            Edges => "edges".into(),
            Kstar { k } => format!("kstar{k}"),
            Triangle => "triangle".into(),
            Gwesp { decay } => format!("gwesp.{decay}"),
            Gwdegree { decay } => format!("gwdegree.{decay}"),
            Gwodegree { decay } => format!("gwodegree.{decay}"),
            Mutual => "mutual".into(),
            Twopath => "twopath".into(),
            Idegree { k } => format!("idegree{k}"),
            Odegree { k } => format!("odegree{k}"),
            Ostar { k } => format!("ostar{k}"),
            Nodecov { attr } => format!("nodecov.{attr}"),
            NodecovOut { attr } => format!("nodecov_out.{attr}"),
            NodecovIn { attr } => format!("nodecov_in.{attr}"),
            Edgecov { attr } => format!("edgecov.{attr}"),
            Absdiff { attr } => format!("absdiff.{attr}"),
        }
    }

    /// `Some(true)` for directed-only terms, `Some(false)` for undirected-only.
    fn directed_only(&self) -> Option<bool> {
        use StatisticTerm::*;
        match self {
            Mutual
            | Twopath
            | Idegree { .. }
            | Odegree { .. }
            | Ostar { .. }
            | Gwodegree { .. }
            | NodecovOut { .. }
            | NodecovIn { .. } => Some(true),
            Kstar { .. } | Gwdegree { .. } | Nodecov { .. } => Some(false),
            Edges | Triangle | Gwesp { .. } | Edgecov { .. } | Absdiff { .. } => None,
        }
    }
}

/// Exogenous node and dyad attributes.
///
/// Dyadic attributes are stored row-major as `N*N` values with a zero
/// diagonal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    pub n_nodes: usize,
    pub nodal: BTreeMap<String, Vec<f64>>,
    pub dyadic: BTreeMap<String, Vec<f64>>,
}

impl CovariateTable {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            ..Self::default()
        }
    }

    pub fn insert_nodal(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n_nodes {
            return Err(Error::InvalidCovariate {
                name,
                reason: format!("expected {} values, got {}", self.n_nodes, values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariate {
                name,
                reason: "non-finite value".into(),
            });
        }
        self.nodal.insert(name, values);
        Ok(())
    }

    /// Inserts a dyadic attribute given as a row-major `N*N` matrix.
    pub fn insert_dyadic(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        let n = self.n_nodes;
        if values.len() != n * n {
            return Err(Error::InvalidCovariate {
                name,
                reason: format!("expected {} values, got {}", n * n, values.len()),
            });
        }
        if (0..n).any(|i| values[i * n + i] != 0.0) {
            return Err(Error::InvalidCovariate {
                name,
                reason: "dyadic covariates must have a zero diagonal".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariate {
                name,
                reason: "non-finite value".into(),
            });
        }
        self.dyadic.insert(name, values);
        Ok(())
    }

    fn nodal(&self, name: &str) -> Result<&[f64]> {
        self.nodal
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    fn dyadic(&self, name: &str) -> Result<&[f64]> {
        self.dyadic
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }
}

/// Geometric weights `w(m)` for `m = 0..=n` and their increments
/// `w(m+1) - w(m) = (1 - e^{-τ})^m`.
#[derive(Debug, Clone)]
struct GeoWeights {
    w: Vec<f64>,
    inc: Vec<f64>,
}

impl GeoWeights {
    fn new(decay: f64, n: usize) -> Self {
        let r = 1.0 - (-decay).exp();
        let scale = decay.exp();
        let w = (0..=n + 1)
            .map(|m| scale * (1.0 - r.powi(m as i32)))
            .collect();
        let inc = (0..=n + 1).map(|m| r.powi(m as i32)).collect();
        Self { w, inc }
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    Edges,
    Kstar(u32),
    Triangle,
    Gwesp(GeoWeights),
    Gwdegree(GeoWeights),
    Gwodegree(GeoWeights),
    Mutual,
    Twopath,
    Idegree(usize),
    Odegree(usize),
    Ostar(u32),
    Nodecov(Vec<f64>),
    NodecovOut(Vec<f64>),
    NodecovIn(Vec<f64>),
    Edgecov(Vec<f64>),
    Absdiff(Vec<f64>),
}

/// A list of statistic terms resolved against a network size, directedness
/// and covariate table.
#[derive(Debug, Clone)]
pub struct TermSet {
    terms: Vec<StatisticTerm>,
    compiled: Vec<Compiled>,
    n: usize,
    directed: bool,
}

fn binomial(n: usize, k: u32) -> f64 {
    let k = k as usize;
    if k > n {
        return 0.0;
    }
    let mut c = 1.0;
    for t in 0..k {
        c = c * (n - t) as f64 / (t + 1) as f64;
    }
    c
}

impl TermSet {
    pub fn new(
        terms: &[StatisticTerm],
        cov: &CovariateTable,
        n_nodes: usize,
        directed: bool,
    ) -> Result<Self> {
        let mut compiled = Vec::with_capacity(terms.len());
        for term in terms {
            if let Some(dir) = term.directed_only() {
                if dir != directed {
                    return Err(Error::IncompatibleTerm {
                        term: term.label(),
                        kind: if directed { "directed" } else { "undirected" },
                    });
                }
            }
            let nodal = |attr: &str| -> Result<Vec<f64>> {
                let v = cov.nodal(attr)?;
                if v.len() != n_nodes {
                    return Err(Error::InvalidCovariate {
                        name: attr.into(),
                        reason: format!("expected {n_nodes} values, got {}", v.len()),
                    });
                }
                Ok(v.to_vec())
            };
            let check_k = |k: u32| {
                if k == 0 {
                    Err(Error::InvalidConfig(format!(
                        "{}: k must be >= 1",
                        term.label()
                    )))
                } else {
                    Ok(k)
                }
            };
            let check_decay = |d: f64| {
                if d > 0.0 && d.is_finite() {
                    Ok(d)
                } else {
                    Err(Error::InvalidConfig(format!(
                        "{}: decay must be > 0",
                        term.label()
                    )))
                }
            };
            use StatisticTerm as T;
            compiled.push(match term {
                T::Edges => Compiled::Edges,
                T::Kstar { k } => Compiled::Kstar(check_k(*k)?),
                T::Triangle => Compiled::Triangle,
                T::Gwesp { decay } => {
                    Compiled::Gwesp(GeoWeights::new(check_decay(*decay)?, n_nodes))
                }
                T::Gwdegree { decay } => {
                    Compiled::Gwdegree(GeoWeights::new(check_decay(*decay)?, n_nodes))
                }
                T::Gwodegree { decay } => {
                    Compiled::Gwodegree(GeoWeights::new(check_decay(*decay)?, n_nodes))
                }
                T::Mutual => Compiled::Mutual,
                T::Twopath => Compiled::Twopath,
                T::Idegree { k } => Compiled::Idegree(*k as usize),
                T::Odegree { k } => Compiled::Odegree(*k as usize),
                T::Ostar { k } => Compiled::Ostar(check_k(*k)?),
                T::Nodecov { attr } => Compiled::Nodecov(nodal(attr)?),
                T::NodecovOut { attr } => Compiled::NodecovOut(nodal(attr)?),
                T::NodecovIn { attr } => Compiled::NodecovIn(nodal(attr)?),
                T::Absdiff { attr } => Compiled::Absdiff(nodal(attr)?),
                T::Edgecov { attr } => {
                    let x = cov.dyadic(attr)?;
                    if x.len() != n_nodes * n_nodes {
                        return Err(Error::InvalidCovariate {
                            name: attr.clone(),
                            reason: format!("expected {} values", n_nodes * n_nodes),
                        });
                    }
                    let mut m = x.to_vec();
                    if !directed {
                        for i in 0..n_nodes {
                            for j in 0..n_nodes {
                                m[i * n_nodes + j] =
                                    0.5 * (x[i * n_nodes + j] + x[j * n_nodes + i]);
                            }
                        }
                    }
                    Compiled::Edgecov(m)
                }
            });
        }
        Ok(Self {
            terms: terms.to_vec(),
            compiled,
            n: n_nodes,
            directed,
        })
    }

    pub fn len(&self) -> usize {
        self.compiled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compiled.is_empty()
    }

    pub fn terms(&self) -> &[StatisticTerm] {
        &self.terms
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(StatisticTerm::label).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    fn check_net(&self, net: &Network) -> Result<()> {
        if net.n_nodes() != self.n {
            return Err(Error::DimensionMismatch {
                what: "network size",
                expected: self.n,
                got: net.n_nodes(),
            });
        }
        if net.is_directed() != self.directed {
            return Err(Error::InvalidConfig(format!(
                "terms were resolved for a {} network",
                if self.directed {
                    "directed"
                } else {
                    "undirected"
                }
            )));
        }
        Ok(())
    }

    /// Full statistic vector `s(y, x)`.
    pub fn compute(&self, net: &Network) -> Result<Vec<f64>> {
        self.check_net(net)?;
        Ok(self
            .compiled
            .iter()
            .map(|c| self.compute_one(c, net))
            .collect())
    }

    fn compute_one(&self, c: &Compiled, net: &Network) -> f64 {
        let n = self.n;
        let edges = || net.edges().into_iter();
        match c {
            Compiled::Edges => net.edge_count() as f64,
            Compiled::Kstar(k) => (0..n).map(|i| binomial(net.degree(i), *k)).sum(),
            Compiled::Ostar(k) => (0..n).map(|i| binomial(net.out_degree(i), *k)).sum(),
            Compiled::Triangle => {
                if self.directed {
                    edges().map(|(i, j)| net.common_out_in(i, j) as f64).sum()
                } else {
                    edges()
                        .map(|(i, j)| net.common_out(i, j) as f64)
                        .sum::<f64>()
                        / 3.0
                }
            }
            Compiled::Gwesp(g) => edges()
                .map(|(i, j)| {
                    let sp = if self.directed {
                        net.common_out_in(i, j)
                    } else {
                        net.common_out(i, j)
                    };
                    g.w[sp]
                })
                .sum(),
            Compiled::Gwdegree(g) | Compiled::Gwodegree(g) => {
                (0..n).map(|i| g.w[net.out_degree(i)]).sum()
            }
            Compiled::Mutual => edges()
                .filter(|&(i, j)| i < j && net.has_edge(j, i))
                .count() as f64,
            Compiled::Twopath => {
                let mutual = edges().filter(|&(i, j)| net.has_edge(j, i)).count();
                let through: usize = (0..n).map(|k| net.in_degree(k) * net.out_degree(k)).sum();
                (through - mutual) as f64
            }
            Compiled::Idegree(k) => (0..n).filter(|&i| net.in_degree(i) == *k).count() as f64,
            Compiled::Odegree(k) => (0..n).filter(|&i| net.out_degree(i) == *k).count() as f64,
            Compiled::Nodecov(x) => edges().map(|(i, j)| x[i] + x[j]).sum(),
            Compiled::NodecovOut(x) => edges().map(|(i, _)| x[i]).sum(),
            Compiled::NodecovIn(x) => edges().map(|(_, j)| x[j]).sum(),
            Compiled::Edgecov(x) => edges().map(|(i, j)| x[i * n + j]).sum(),
            Compiled::Absdiff(x) => edges().map(|(i, j)| (x[i] - x[j]).abs()).sum(),
        }
    }

    /// Writes the change statistics of dyad `(i, j)` into `out`.
    ///
    /// Callers guarantee `i != j` and both indices in range.
    pub fn change_into(&self, net: &Network, i: usize, j: usize, out: &mut [f64]) {
        let y = net.has_edge(i, j) as usize;
        for (slot, c) in out.iter_mut().zip(&self.compiled) {
            *slot = if self.directed {
                self.change_directed(c, net, i, j, y)
            } else {
                self.change_undirected(c, net, i, j, y)
            };
        }
    }

    fn change_undirected(&self, c: &Compiled, net: &Network, i: usize, j: usize, y: usize) -> f64 {
        let di = net.degree(i) - y;
        let dj = net.degree(j) - y;
        match c {
            Compiled::Edges => 1.0,
            Compiled::Kstar(k) => binomial(di, k - 1) + binomial(dj, k - 1),
            Compiled::Triangle => net.common_out(i, j) as f64,
            Compiled::Gwesp(g) => {
                let mut delta = g.w[net.common_out(i, j)];
                for k in net.common_out_iter(i, j) {
                    delta += g.inc[net.common_out(i, k) - y] + g.inc[net.common_out(j, k) - y];
                }
                delta
            }
            Compiled::Gwdegree(g) => g.inc[di] + g.inc[dj],
            Compiled::Nodecov(x) => x[i] + x[j],
            Compiled::Edgecov(x) => x[i * self.n + j],
            Compiled::Absdiff(x) => (x[i] - x[j]).abs(),
            _ => unreachable!("directed term in undirected term set"),
        }
    }

    fn change_directed(&self, c: &Compiled, net: &Network, i: usize, j: usize, y: usize) -> f64 {
        let yji = net.has_edge(j, i) as usize;
        match c {
            Compiled::Edges => 1.0,
            Compiled::Mutual => yji as f64,
            Compiled::Twopath => (net.out_degree(j) + net.in_degree(i) - 2 * yji) as f64,
            Compiled::Idegree(k) => {
                let d = net.in_degree(j) - y;
                (d + 1 == *k) as u8 as f64 - (d == *k) as u8 as f64
            }
            Compiled::Odegree(k) => {
                let d = net.out_degree(i) - y;
                (d + 1 == *k) as u8 as f64 - (d == *k) as u8 as f64
            }
            Compiled::Ostar(k) => binomial(net.out_degree(i) - y, k - 1),
            Compiled::Gwodegree(g) => g.inc[net.out_degree(i) - y],
            Compiled::Triangle => {
                (net.common_out(i, j) + net.common_in(i, j) + net.common_out_in(i, j)) as f64
            }
            Compiled::Gwesp(g) => {
                let mut delta = g.w[net.common_out_in(i, j)];
                for b in net.common_out_iter(i, j) {
                    delta += g.inc[net.common_out_in(i, b) - y];
                }
                for a in net.common_in_iter(i, j) {
                    delta += g.inc[net.common_out_in(a, j) - y];
                }
                delta
            }
            Compiled::NodecovOut(x) => x[i],
            Compiled::NodecovIn(x) => x[j],
            Compiled::Edgecov(x) => x[i * self.n + j],
            Compiled::Absdiff(x) => (x[i] - x[j]).abs(),
            _ => unreachable!("undirected term in directed term set"),
        }
    }

    /// Change statistics of dyad `(i, j)` as a fresh vector.
    pub fn change(&self, net: &Network, i: usize, j: usize) -> Result<Vec<f64>> {
        self.check_net(net)?;
        check_dyad(net, i, j)?;
        let mut out = vec![0.0; self.len()];
        self.change_into(net, i, j, &mut out);
        Ok(out)
    }
}

fn check_dyad(net: &Network, i: usize, j: usize) -> Result<()> {
    for index in [i, j] {
        if index >= net.n_nodes() {
            return Err(Error::NodeOutOfRange {
                index,
                n_nodes: net.n_nodes(),
            });
        }
    }
    if i == j {
        return Err(Error::SelfLoop(i));
    }
    Ok(())
}

/// `s(y, x)` for the given terms.
pub fn compute_statistics(
    net: &Network,
    terms: &[StatisticTerm],
    cov: &CovariateTable,
) -> Result<Vec<f64>> {
    TermSet::new(terms, cov, net.n_nodes(), net.is_directed())?.compute(net)
}

/// `s(y_ij = 1 | y_-ij) - s(y_ij = 0 | y_-ij)` for the given terms.
pub fn change_statistics(
    net: &Network,
    i: usize,
    j: usize,
    terms: &[StatisticTerm],
    cov: &CovariateTable,
) -> Result<Vec<f64>> {
    TermSet::new(terms, cov, net.n_nodes(), net.is_directed())?.change(net, i, j)
}

/// Degree statistics `t(y)`.
///
/// Undirected: the `N` node degrees. Directed: the `N` out-degrees (paired
/// with sender effects) followed by the `N` in-degrees (paired with receiver
/// effects).
pub fn compute_degree_vector(net: &Network) -> Vec<f64> {
    let n = net.n_nodes();
    if net.is_directed() {
        (0..n)
            .map(|i| net.out_degree(i) as f64)
            .chain((0..n).map(|i| net.in_degree(i) as f64))
            .collect()
    } else {
        (0..n).map(|i| net.degree(i) as f64).collect()
    }
}

/// Sparse change of the degree vector when dyad `(i, j)` is toggled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeDelta {
    pub entries: [(usize, f64); 2],
}

/// Degree-vector change caused by toggling `(i, j)` in its current state:
/// `+1` entries when the tie is added, `-1` when it is removed.
pub fn change_degree(net: &Network, i: usize, j: usize) -> Result<DegreeDelta> {
    check_dyad(net, i, j)?;
    let sign = if net.has_edge(i, j) { -1.0 } else { 1.0 };
    let second = if net.is_directed() {
        net.n_nodes() + j
    } else {
        j
    };
    Ok(DegreeDelta {
        entries: [(i, sign), (second, sign)],
    })
}
