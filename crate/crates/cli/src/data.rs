//! Edge-list and covariate ingestion.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ergm_vi::{CovariateTable, Network};
use log::{info, warn};

use crate::config::LoadedConfig;
use crate::error::CliError;

/// A network with node names and covariates.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub network: Network,
    pub node_names: Vec<String>,
    pub covariates: CovariateTable,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: missing column `{name}`", path.display())))
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String, Option<String>)>, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let src = column(&headers, "src", path)?;
    let dst = column(&headers, "dst", path)?;
    let value = headers.iter().position(|h| h == "value");
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let get = |k: usize| {
            rec.get(k).map(str::to_string).ok_or_else(|| {
                CliError::Data(format!("{}: short row {}", path.display(), line + 2))
            })
        };
        out.push((get(src)?, get(dst)?, value.map(get).transpose()?));
    }
    Ok(out)
}

fn read_node_column(path: &Path) -> Result<Vec<String>, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let k = column(&headers, "node", path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        out.push(rec.get(k).unwrap_or_default().to_string());
    }
    Ok(out)
}

/// Maps node labels to indices.
struct NodeIndex {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl NodeIndex {
    fn from_names(names: Vec<String>) -> Result<Self, CliError> {
        let mut lookup = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if lookup.insert(n.clone(), i).is_some() {
                return Err(CliError::Data(format!("duplicate node name `{n}`")));
            }
        }
        Ok(Self { names, lookup })
    }

    fn get(&self, label: &str, path: &Path) -> Result<usize, CliError> {
        self.lookup
            .get(label)
            .copied()
            .ok_or_else(|| CliError::Data(format!("{}: unknown node `{label}`", path.display())))
    }
}

fn build_index(
    cfg: &LoadedConfig,
    edges: &[(String, String, Option<String>)],
    nodal_nodes: Option<&[String]>,
) -> Result<NodeIndex, CliError> {
    let data = &cfg.config.data;
    if let Some(p) = &data.nodes {
        return NodeIndex::from_names(read_node_column(&cfg.resolve(p))?);
    }
    let labels: Vec<&str> = edges
        .iter()
        .flat_map(|(a, b, _)| [a.as_str(), b.as_str()])
        .chain(nodal_nodes.unwrap_or_default().iter().map(String::as_str))
        .collect();
    let numeric: Option<Vec<usize>> = labels.iter().map(|l| l.parse::<usize>().ok()).collect();
    match numeric {
        Some(ix) => {
            let n = ix
                .iter()
                .map(|i| i + 1)
                .max()
                .unwrap_or(0)
                .max(data.n_nodes.unwrap_or(0));
            if let Some(want) = data.n_nodes {
                if n > want {
                    return Err(CliError::Data(format!(
                        "node index {} exceeds data.n_nodes = {want}",
                        n - 1
                    )));
                }
            }
            NodeIndex::from_names((0..n).map(|i| i.to_string()).collect())
        }
        None => {
            let set: BTreeSet<&str> = labels.into_iter().collect();
            info!(
                "no node file given; {} node names inferred in sorted order",
                set.len()
            );
            NodeIndex::from_names(set.into_iter().map(str::to_string).collect())
        }
    }
}

fn parse_value(s: &str, what: &str, path: &Path) -> Result<f64, CliError> {
    s.parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{}: cannot parse `{s}` as a number in {what}",
            path.display()
        ))
    })
}

pub fn load(cfg: &LoadedConfig) -> Result<Dataset, CliError> {
    let data = &cfg.config.data;
    let edge_path = cfg.resolve(&data.edges);
    let raw_edges = read_pairs(&edge_path)?;

    let nodal = match &data.nodal_covariates {
        Some(p) => Some(read_nodal(&cfg.resolve(p))?),
        None => None,
    };
    let index = build_index(
        cfg,
        &raw_edges,
        nodal.as_ref().map(|(nodes, _)| nodes.as_slice()),
    )?;
    let n = index.names.len();
    if n == 0 {
        return Err(CliError::Data("the network has no nodes".into()));
    }

    let mut pairs = BTreeSet::new();
    for (a, b, _) in &raw_edges {
        let (i, j) = (index.get(a, &edge_path)?, index.get(b, &edge_path)?);
        if i == j {
            return Err(CliError::Data(format!(
                "{}: self-loop on node `{a}`",
                edge_path.display()
            )));
        }
        let key = if data.directed {
            (i, j)
        } else {
            (i.min(j), i.max(j))
        };
        if !pairs.insert(key) {
            warn!("duplicate edge {a},{b} ignored");
        }
    }
    let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
    let network = Network::from_edge_list(&pairs, n, data.directed)?;

    let mut covariates = CovariateTable::new(n);
    if let Some((nodes, columns)) = nodal {
        let path = cfg.resolve(data.nodal_covariates.as_ref().expect("present"));
        let mut rows = vec![None; n];
        for (r, label) in nodes.iter().enumerate() {
            let i = index.get(label, &path)?;
            if rows[i].replace(r).is_some() {
                return Err(CliError::Data(format!(
                    "{}: node `{label}` listed twice",
                    path.display()
                )));
            }
        }
        if let Some(i) = rows.iter().position(Option::is_none) {
            return Err(CliError::Data(format!(
                "{}: no row for node `{}`",
                path.display(),
                index.names[i]
            )));
        }
        for (name, values) in columns {
            let ordered = rows.iter().map(|r| values[r.expect("checked")]).collect();
            covariates.insert_nodal(name, ordered)?;
        }
    }
    for (name, p) in &data.dyadic_covariates {
        let path = cfg.resolve(p);
        let mut m = vec![0.0; n * n];
        for (a, b, v) in read_pairs(&path)? {
            let v = v.ok_or_else(|| {
                CliError::Data(format!("{}: missing column `value`", path.display()))
            })?;
            let v = parse_value(&v, "value", &path)?;
            let (i, j) = (index.get(&a, &path)?, index.get(&b, &path)?);
            if i == j {
                return Err(CliError::Data(format!(
                    "{}: diagonal entry for `{a}`",
                    path.display()
                )));
            }
            m[i * n + j] = v;
            if !data.directed {
                m[j * n + i] = v;
            }
        }
        covariates.insert_dyadic(name.clone(), m)?;
    }
    Ok(Dataset {
        network,
        node_names: index.names,
        covariates,
    })
}

type NodalColumns = (Vec<String>, Vec<(String, Vec<f64>)>);

fn read_nodal(path: &Path) -> Result<NodalColumns, CliError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .clone();
    let key = column(&headers, "node", path)?;
    let mut nodes = Vec::new();
    let mut cols: Vec<(String, Vec<f64>)> = headers
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != key)
        .map(|(_, h)| (h.to_string(), Vec::new()))
        .collect();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        nodes.push(rec.get(key).unwrap_or_default().to_string());
        let mut c = 0;
        for (k, field) in rec.iter().enumerate() {
            if k == key {
                continue;
            }
            let name = cols[c].0.clone();
            cols[c]
                .1
                .push(parse_value(field, &format!("column `{name}`"), path)?);
            c += 1;
        }
    }
    Ok((nodes, cols))
}

/// Writes `src,dst` rows using node names.
pub fn write_edge_list(path: &Path, net: &Network, names: &[String]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    let out = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    w.write_record(["src", "dst"]).map_err(out)?;
    for (i, j) in net.edges() {
        w.write_record([names[i].as_str(), names[j].as_str()])
            .map_err(out)?;
    }
    w.flush()
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}
