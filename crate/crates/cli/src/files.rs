//! On-disk document formats: network files, result files, and helpers.
//!
//! Both formats are versioned JSON. Estimates may be `+inf`/`-inf` (boundary
//! coordinates), which JSON numbers cannot carry, so extended reals
//! serialize as a number when finite and as the strings `"inf"` / `"-inf"`
//! otherwise.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ergmx_core::{AttributeTable, Graph, Network};

pub const NETWORK_FILE_VERSION: u32 = 1;
pub const RESULT_FILE_VERSION: u32 = 1;

/// A finite or infinite coefficient value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal(pub f64);

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal(v)),
            Raw::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(ExtReal(f64::INFINITY)),
                "-inf" => Ok(ExtReal(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, \"inf\" or \"-inf\", got \"{other}\""
                ))),
            },
        }
    }
}

/// One network in a network file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub id: String,
    pub n: usize,
    pub directed: bool,
    pub ties: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Vec<f64>>,
}

/// The native network file: a list of networks plus free-form metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
    pub networks: Vec<NetworkDoc>,
}

impl NetworkFile {
    pub fn from_networks(networks: &[Network], metadata: Option<serde_json::Value>) -> Self {
        NetworkFile {
            version: NETWORK_FILE_VERSION,
            metadata,
            networks: networks
                .iter()
                .map(|net| NetworkDoc {
                    id: net.id.clone(),
                    n: net.graph.n(),
                    directed: net.graph.directed(),
                    ties: net.graph.ties().collect(),
                    attributes: net
                        .attrs
                        .names()
                        .map(|a| (a.to_string(), net.attrs.get(a).unwrap().to_vec()))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Validates and converts the documents into engine networks.
    pub fn into_networks(self) -> Result<Vec<Network>> {
        if self.version != NETWORK_FILE_VERSION {
            bail!(
                "unsupported network file version {} (expected {NETWORK_FILE_VERSION})",
                self.version
            );
        }
        if self.networks.is_empty() {
            bail!("network file contains no networks");
        }
        let mut ids = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(self.networks.len());
        for doc in self.networks {
            if !ids.insert(doc.id.clone()) {
                bail!("duplicate network id '{}'", doc.id);
            }
            let graph = Graph::from_edges(doc.n, doc.directed, &doc.ties)
                .with_context(|| format!("network '{}'", doc.id))?;
            let mut attrs = AttributeTable::new(doc.n);
            for (name, values) in doc.attributes {
                attrs
                    .insert(name, values)
                    .with_context(|| format!("network '{}'", doc.id))?;
            }
            out.push(Network::new(doc.id, graph, attrs)?);
        }
        Ok(out)
    }
}

pub fn load_networks(path: &Path) -> Result<Vec<Network>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let file: NetworkFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid network file", path.display()))?;
    file.into_networks()
}

/// Simple adjacency-matrix import: blocks of `n` whitespace-separated 0/1
/// rows, blank lines between networks.
pub fn load_adjacency(path: &Path, directed: bool) -> Result<Vec<Network>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut networks = Vec::new();
    for (b, block) in text.split("\n\n").filter(|b| !b.trim().is_empty()).enumerate() {
        let rows: Vec<Vec<u8>> = block
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split_whitespace()
                    .map(|tok| match tok {
                        "0" => Ok(0),
                        "1" => Ok(1),
                        other => bail!("matrix entries must be 0 or 1, got '{other}'"),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        let mut edges = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                bail!("matrix block {} is not square ({n} rows, row {i} has {} columns)",
                    b + 1, row.len());
            }
            for (j, &v) in row.iter().enumerate() {
                if v == 1 {
                    if i == j {
                        bail!("matrix block {} has a self-tie at ({i}, {i})", b + 1);
                    }
                    if directed || i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        let graph = Graph::from_edges(n, directed, &edges)
            .with_context(|| format!("matrix block {}", b + 1))?;
        networks.push(Network::new(
            format!("m{}", b + 1),
            graph,
            AttributeTable::new(n),
        )?);
    }
    if networks.is_empty() {
        bail!("no adjacency blocks found in {}", path.display());
    }
    Ok(networks)
}

/// One row of the coefficient table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientDoc {
    pub term: String,
    pub estimate: ExtReal,
    pub se: f64,
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub boundary: ergmx_core::BoundaryFlag,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatusDoc {
    pub code: String,
    pub message: String,
}

/// Engine conventions recorded with every fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConventionsDoc {
    pub ttriad: String,
    pub bic_observations: String,
    pub boundary_rule: String,
}

impl Default for ConventionsDoc {
    fn default() -> Self {
        ConventionsDoc {
            ttriad: "ordered distinct triples (i,j,k) with y_ij = y_jk = y_ik = 1".to_string(),
            bic_observations: "total free dyad cells across networks".to_string(),
            boundary_rule:
                "per-coordinate pooled min/max of the (possibly transformed) statistic column"
                    .to_string(),
        }
    }
}

/// The fit result file. Re-running with the recorded inputs reproduces the
/// coefficient block byte for byte; no timestamps are stored.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultFile {
    pub version: u32,
    pub engine_version: String,
    pub formula: String,
    pub directed: bool,
    pub coefficients: Vec<CoefficientDoc>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub status: StatusDoc,
    pub iterations: usize,
    pub converged: bool,
    pub num_networks: usize,
    pub num_dyads: u64,
    pub table_cache_keys: Vec<String>,
    pub model_fingerprint: String,
    pub data_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub conventions: ConventionsDoc,
}

pub fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn load_result(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let file: ResultFile = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid result file", path.display()))?;
    if file.version != RESULT_FILE_VERSION {
        bail!(
            "unsupported result file version {} (expected {RESULT_FILE_VERSION})",
            file.version
        );
    }
    Ok(file)
}
