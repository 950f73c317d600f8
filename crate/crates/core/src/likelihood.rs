//! Exact normalizing constants, pooled log-likelihood, gradient, Hessian,
//! marginal statistic distributions, and log-likelihood surfaces.
//!
//! Everything runs in log space with a max shift: row scores are
//! `Q theta + O + ln W`, normalized by log-sum-exp, so the +/-1e5 parameter
//! substitutes used for diverged coordinates never overflow an exponential.
//! Networks sharing a support table are grouped, so a pooled evaluation
//! costs one table pass per distinct table rather than per network; all
//! reductions run in a fixed order, making results reproducible bit for bit.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::table::{StatTable, TableCache};
use crate::terms::{ModelSpec, StatEvaluator};

/// One observed network reduced to its sufficient statistics plus the shared
/// support table.
#[derive(Clone, Debug)]
pub struct NetworkObs {
    pub id: String,
    pub stats: Vec<f64>,
    pub offset: f64,
    pub table: Arc<StatTable>,
}

/// A pooled sample: per-network observations grouped by support table.
#[derive(Debug)]
pub struct PooledData {
    networks: Vec<NetworkObs>,
    /// Distinct tables with the number of networks sharing each.
    groups: Vec<(Arc<StatTable>, usize)>,
    pooled_stats: DVector<f64>,
    pooled_offset: f64,
    num_terms: usize,
    num_dyads: u64,
    fingerprint: String,
}

impl PooledData {
    /// Evaluates every network's statistics and builds (or fetches) its
    /// support table. Rejects networks excluded by a `-inf` constraint.
    pub fn build(sample: &[Network], model: &ModelSpec, cache: &TableCache) -> Result<PooledData> {
        if sample.is_empty() {
            return Err(Error::Model("empty network sample".to_string()));
        }
        let k = model.num_terms();
        let mut networks = Vec::with_capacity(sample.len());
        let mut groups: Vec<(Arc<StatTable>, usize)> = Vec::new();
        let mut by_key: HashMap<String, usize> = HashMap::new();
        let mut pooled_stats = DVector::zeros(k);
        let mut pooled_offset = 0.0;
        let mut num_dyads = 0u64;
        let mut fp = sha_start();

        for net in sample {
            model.validate_for(&net.attrs)?;
            if net.graph.directed() != model.directed() {
                return Err(Error::Model(format!(
                    "network '{}' directedness does not match the model",
                    net.id
                )));
            }
            let ev = StatEvaluator::new(model, net.graph.n(), &net.attrs)?;
            let mut stats = vec![0.0; k];
            ev.eval_mask_into(net.graph.mask(), &mut stats)?;
            let offset = ev.offset_mask(net.graph.mask())?;
            if offset == f64::NEG_INFINITY {
                return Err(Error::ObservedOutsideSupport {
                    id: net.id.clone(),
                });
            }
            let table = cache.get_or_build(net.graph.n(), model, &net.attrs)?;
            debug_assert!(
                table.find_row(&stats, offset).is_some(),
                "observed statistics must be a row of the support table"
            );
            match by_key.get(&table.meta().key) {
                Some(&gi) => groups[gi].1 += 1,
                None => {
                    by_key.insert(table.meta().key.clone(), groups.len());
                    groups.push((Arc::clone(&table), 1));
                }
            }
            for (i, s) in stats.iter().enumerate() {
                pooled_stats[i] += s;
            }
            pooled_offset += offset;
            num_dyads += table.num_dyads();

            sha_update(&mut fp, net.id.as_bytes());
            sha_update(&mut fp, &net.graph.index().to_le_bytes());
            sha_update(&mut fp, &[net.graph.directed() as u8, net.graph.n() as u8]);
            sha_update(&mut fp, &net.attrs.hash_bytes());

            networks.push(NetworkObs {
                id: net.id.clone(),
                stats,
                offset,
                table,
            });
        }

        Ok(PooledData {
            networks,
            groups,
            pooled_stats,
            pooled_offset,
            num_terms: k,
            num_dyads,
            fingerprint: sha_finish(fp),
        })
    }

    pub fn networks(&self) -> &[NetworkObs] {
        &self.networks
    }

    pub fn num_networks(&self) -> usize {
        self.networks.len()
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    /// Total free dyad cells across networks (the BIC sample size).
    pub fn num_dyads(&self) -> u64 {
        self.num_dyads
    }

    pub fn pooled_stats(&self) -> &DVector<f64> {
        &self.pooled_stats
    }

    /// Content hash of (ids, graphs, attributes); identifies the sample.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Rebuilds pooled data for a resample of the same networks, reusing the
    /// already-computed statistics and tables (no re-enumeration).
    pub fn resample(&self, indices: &[usize]) -> PooledData {
        let mut networks = Vec::with_capacity(indices.len());
        let mut groups: Vec<(Arc<StatTable>, usize)> = Vec::new();
        let mut by_key: HashMap<String, usize> = HashMap::new();
        let mut pooled_stats = DVector::zeros(self.num_terms);
        let mut pooled_offset = 0.0;
        let mut num_dyads = 0u64;
        let mut fp = sha_start();
        for &ix in indices {
            let obs = self.networks[ix].clone();
            match by_key.get(&obs.table.meta().key) {
                Some(&gi) => groups[gi].1 += 1,
                None => {
                    by_key.insert(obs.table.meta().key.clone(), groups.len());
                    groups.push((Arc::clone(&obs.table), 1));
                }
            }
            for (i, s) in obs.stats.iter().enumerate() {
                pooled_stats[i] += s;
            }
            pooled_offset += obs.offset;
            num_dyads += obs.table.num_dyads();
            sha_update(&mut fp, obs.id.as_bytes());
            sha_update(&mut fp, &ix.to_le_bytes());
            networks.push(obs);
        }
        PooledData {
            networks,
            groups,
            pooled_stats,
            pooled_offset,
            num_terms: self.num_terms,
            num_dyads,
            fingerprint: sha_finish(fp),
        }
    }
}

fn sha_start() -> sha2::Sha256 {
    use sha2::Digest;
    sha2::Sha256::new()
}

fn sha_update(h: &mut sha2::Sha256, bytes: &[u8]) {
    use sha2::Digest;
    h.update(bytes);
}

fn sha_finish(h: sha2::Sha256) -> String {
    use sha2::Digest;
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn check_dim(theta: &DVector<f64>, k: usize) -> Result<()> {
    if theta.len() != k {
        return Err(Error::Dimension {
            expected: k,
            got: theta.len(),
        });
    }
    Ok(())
}

/// Row scores `Q theta + O + ln W` and their log-sum-exp.
fn row_scores(theta: &DVector<f64>, table: &StatTable) -> (Vec<f64>, f64) {
    let nrows = table.num_rows();
    let k = table.num_terms();
    let mut scores = Vec::with_capacity(nrows);
    let mut max = f64::NEG_INFINITY;
    for r in 0..nrows {
        let row = table.row(r);
        let mut s = table.offsets()[r] + (table.weights()[r] as f64).ln();
        for c in 0..k {
            s += row[c] * theta[c];
        }
        if s > max {
            max = s;
        }
        scores.push(s);
    }
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    (scores, max + sum.ln())
}

/// `log kappa(theta)`: log of the weighted, offset-adjusted sum of
/// exponentiated statistics over the constrained support.
pub fn log_kappa(theta: &DVector<f64>, table: &StatTable) -> Result<f64> {
    check_dim(theta, table.num_terms())?;
    Ok(row_scores(theta, table).1)
}

/// Normalized row probabilities under `theta` (softmax of the row scores).
fn row_probs(theta: &DVector<f64>, table: &StatTable) -> (Vec<f64>, f64) {
    let (scores, lse) = row_scores(theta, table);
    let probs = scores.iter().map(|s| (s - lse).exp()).collect();
    (probs, lse)
}

/// Probability of each table row under `theta`; the exact sampler's first
/// stage.
pub fn row_probabilities(theta: &DVector<f64>, table: &StatTable) -> Vec<f64> {
    debug_assert_eq!(theta.len(), table.num_terms());
    row_probs(theta, table).0
}

/// Expected statistic vector under `theta` for one table.
fn expected_stats(theta: &DVector<f64>, table: &StatTable) -> (DVector<f64>, Vec<f64>, f64) {
    let k = table.num_terms();
    let (probs, lse) = row_probs(theta, table);
    let mut e = DVector::zeros(k);
    for r in 0..table.num_rows() {
        let row = table.row(r);
        for c in 0..k {
            e[c] += probs[r] * row[c];
        }
    }
    (e, probs, lse)
}

/// Pooled exact log-likelihood: `sum_p theta's_p + offset_p - log kappa_p`.
pub fn loglik_pooled(theta: &DVector<f64>, data: &PooledData) -> Result<f64> {
    check_dim(theta, data.num_terms)?;
    let mut ll = theta.dot(&data.pooled_stats) + data.pooled_offset;
    for (table, count) in &data.groups {
        ll -= *count as f64 * log_kappa(theta, table)?;
    }
    Ok(ll)
}

/// Pooled exact gradient: observed minus expected statistics.
pub fn gradient_pooled(theta: &DVector<f64>, data: &PooledData) -> Result<DVector<f64>> {
    check_dim(theta, data.num_terms)?;
    let mut grad = data.pooled_stats.clone();
    for (table, count) in &data.groups {
        let (e, _, _) = expected_stats(theta, table);
        grad -= e * (*count as f64);
    }
    Ok(grad)
}

/// Pooled exact Hessian: minus the summed statistic covariances. Symmetric
/// and negative semidefinite.
pub fn hessian_pooled(theta: &DVector<f64>, data: &PooledData) -> Result<DMatrix<f64>> {
    check_dim(theta, data.num_terms)?;
    let k = data.num_terms;
    let mut h = DMatrix::zeros(k, k);
    for (table, count) in &data.groups {
        let (e, probs, _) = expected_stats(theta, table);
        let mut cov = DMatrix::<f64>::zeros(k, k);
        // Centered second pass keeps the covariance accurate.
        for r in 0..table.num_rows() {
            let row = table.row(r);
            for a in 0..k {
                let da = row[a] - e[a];
                for b in a..k {
                    cov[(a, b)] += probs[r] * da * (row[b] - e[b]);
                }
            }
        }
        for a in 0..k {
            for b in a..k {
                let v = cov[(a, b)];
                h[(a, b)] -= *count as f64 * v;
                if a != b {
                    h[(b, a)] -= *count as f64 * v;
                }
            }
        }
    }
    Ok(h)
}

/// Exact marginal law of one statistic column under `theta`.
#[derive(Clone, Debug)]
pub struct StatDistribution {
    /// Distinct statistic values, ascending.
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    /// Running sums of `probs`; the last entry is 1 up to rounding.
    pub cdf: Vec<f64>,
}

impl StatDistribution {
    /// `P(S <= v)`.
    pub fn cdf_at(&self, v: f64) -> f64 {
        match self.values.iter().rposition(|&x| x <= v) {
            Some(i) => self.cdf[i],
            None => 0.0,
        }
    }

    /// Smallest value whose CDF reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        for (i, c) in self.cdf.iter().enumerate() {
            if *c >= q {
                return self.values[i];
            }
        }
        *self.values.last().expect("nonempty distribution")
    }
}

/// Marginal distribution of statistic `column` under `theta`.
pub fn stat_distribution(
    theta: &DVector<f64>,
    table: &StatTable,
    column: usize,
) -> Result<StatDistribution> {
    check_dim(theta, table.num_terms())?;
    if column >= table.num_terms() {
        return Err(Error::Dimension {
            expected: table.num_terms(),
            got: column,
        });
    }
    let (probs, _) = row_probs(theta, table);
    let mut pairs: Vec<(f64, f64)> = (0..table.num_rows())
        .map(|r| (table.row(r)[column], probs[r]))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite statistics"));
    let mut values = Vec::new();
    let mut mass = Vec::new();
    for (v, p) in pairs {
        match values.last() {
            Some(&last) if last == v => *mass.last_mut().unwrap() += p,
            _ => {
                values.push(v);
                mass.push(p);
            }
        }
    }
    let total: f64 = mass.iter().sum();
    let probs: Vec<f64> = mass.into_iter().map(|p| p / total).collect();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(StatDistribution { values, probs, cdf })
}

/// Exact log-likelihood over a 2-D grid: coordinates `(coord_a, coord_b)`
/// vary over `grid_a x grid_b`, the rest stay at `base`.
pub fn loglik_surface(
    data: &PooledData,
    coord_a: usize,
    coord_b: usize,
    grid_a: &[f64],
    grid_b: &[f64],
    base: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dim(base, data.num_terms)?;
    if coord_a >= data.num_terms || coord_b >= data.num_terms || coord_a == coord_b {
        return Err(Error::Model(
            "surface needs two distinct free coordinates".to_string(),
        ));
    }
    let mut out = DMatrix::zeros(grid_a.len(), grid_b.len());
    let mut theta = base.clone();
    for (i, &a) in grid_a.iter().enumerate() {
        for (j, &b) in grid_b.iter().enumerate() {
            theta[coord_a] = a;
            theta[coord_b] = b;
            out[(i, j)] = loglik_pooled(&theta, data)?;
        }
    }
    Ok(out)
}
