//! Model comparison, bootstrap standard errors, and exact goodness-of-fit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimate::{fit_mle_data, BoundaryFlag, FitOptions, FitResult};
use crate::likelihood::{stat_distribution, PooledData};

/// Likelihood-ratio comparison of two nested fits on the same sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// LR test of `restricted` against `full`. Requires the restricted terms to
/// be a subset of the full terms, identical data, and interior fits.
pub fn lr_test(restricted: &FitResult, full: &FitResult) -> Result<LrTest> {
    if restricted.data_fingerprint != full.data_fingerprint {
        return Err(Error::Inference(
            "LR test needs both models fitted to the same sample".to_string(),
        ));
    }
    let full_names: std::collections::HashSet<&String> = full.term_names.iter().collect();
    if !restricted
        .term_names
        .iter()
        .all(|t| full_names.contains(t))
    {
        return Err(Error::Inference(format!(
            "models are not nested: '{}' is not part of the full model",
            restricted
                .term_names
                .iter()
                .find(|t| !full_names.contains(t))
                .unwrap()
        )));
    }
    for (fit, which) in [(restricted, "restricted"), (full, "full")] {
        if fit.boundary.iter().any(|b| *b != BoundaryFlag::Interior) {
            return Err(Error::Inference(format!(
                "LR test needs interior fits; the {which} model has a boundary estimate"
            )));
        }
    }
    let df = full.k() - restricted.k();
    let statistic = (2.0 * (full.loglik - restricted.loglik)).max(0.0);
    let p_value = if df == 0 {
        1.0
    } else {
        let chi = ChiSquared::new(df as f64).expect("positive df");
        1.0 - chi.cdf(statistic)
    };
    Ok(LrTest {
        statistic,
        df,
        p_value,
    })
}

/// Akaike information criterion: `-2 ll + 2k`.
pub fn aic(fit: &FitResult) -> f64 {
    -2.0 * fit.loglik + 2.0 * fit.k() as f64
}

/// Bayesian information criterion with the observation count defined as the
/// total number of free dyad cells across networks.
pub fn bic(fit: &FitResult) -> f64 {
    -2.0 * fit.loglik + fit.k() as f64 * (fit.num_dyads as f64).ln()
}

/// Network-level bootstrap replicates of a pooled fit.
#[derive(Clone, Debug)]
pub struct BootResult {
    pub term_names: Vec<String>,
    /// Successful replicate coefficients, one row per replicate.
    pub estimates: DMatrix<f64>,
    /// Sample covariance of the successful replicates.
    pub vcov: DMatrix<f64>,
    pub requested: usize,
    pub failed: usize,
    pub seed: u64,
}

impl BootResult {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.vcov.nrows())
            .map(|i| self.vcov[(i, i)].sqrt())
            .collect()
    }
}

/// Splits one master seed into per-replicate seeds (documented split: the
/// r-th output of a ChaCha12 stream seeded with the master seed).
fn replicate_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    (0..count).map(|_| rng.random()).collect()
}

/// Resamples networks with replacement and refits each replicate, reusing
/// the cached statistics and support tables. Replicates ending in status 20,
/// 21, or 30 are counted as failed and excluded from the covariance.
pub fn bootstrap(
    data: &PooledData,
    term_names: &[String],
    replicates: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<BootResult> {
    if replicates < 2 {
        return Err(Error::Inference(
            "bootstrap needs at least 2 replicates".to_string(),
        ));
    }
    let p = data.num_networks();
    let k = data.num_terms();
    let seeds = replicate_seeds(seed, replicates);

    let results: Vec<Result<Option<Vec<f64>>>> = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha12Rng::seed_from_u64(s);
            let indices: Vec<usize> = (0..p).map(|_| rng.random_range(0..p)).collect();
            let redata = data.resample(&indices);
            let fit = fit_mle_data(&redata, opts)?;
            if fit.status.is_failure() {
                Ok(None)
            } else {
                Ok(Some(fit.theta.iter().cloned().collect()))
            }
        })
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(replicates);
    let mut failed = 0usize;
    for r in results {
        match r? {
            Some(row) => rows.push(row),
            None => failed += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::Inference(format!(
            "all {replicates} bootstrap replicates failed (boundary statistics in every resample)"
        )));
    }

    let m = rows.len();
    let estimates = DMatrix::from_fn(m, k, |r, c| rows[r][c]);
    let mean = DVector::from_fn(k, |c, _| estimates.column(c).sum() / m as f64);
    let mut vcov = DMatrix::zeros(k, k);
    if m > 1 {
        for r in 0..m {
            for a in 0..k {
                let da = estimates[(r, a)] - mean[a];
                for b in 0..k {
                    vcov[(a, b)] += da * (estimates[(r, b)] - mean[b]);
                }
            }
        }
        vcov /= (m - 1) as f64;
    }

    Ok(BootResult {
        term_names: term_names.to_vec(),
        estimates,
        vcov,
        requested: replicates,
        failed,
        seed,
    })
}

/// One goodness-of-fit cell: a network/term pair.
#[derive(Clone, Debug, Serialize)]
pub struct GofEntry {
    pub network_id: String,
    pub term: String,
    pub observed: f64,
    /// Smallest and largest value the statistic can take on this network's
    /// constrained support.
    pub support_min: f64,
    pub support_max: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
}

/// Exact goodness-of-fit report: equal-tailed exact intervals per network
/// and term, plus the overall coverage proportion.
#[derive(Clone, Debug, Serialize)]
pub struct GofReport {
    pub level: f64,
    pub entries: Vec<GofEntry>,
    pub coverage: f64,
}

impl GofReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "network_id,term,observed,support_min,support_max,ci_lower,ci_upper,covered\n",
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.network_id,
                e.term,
                e.observed,
                e.support_min,
                e.support_max,
                e.ci_lower,
                e.ci_upper,
                e.covered
            ));
        }
        out
    }

    /// Plot-ready JSON: per-network intervals plus observed points.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Finite parameter vector for distribution work: boundary coordinates are
/// held at `sign * substitute`.
fn finite_theta(fit: &FitResult, substitute: f64) -> DVector<f64> {
    DVector::from_iterator(
        fit.k(),
        fit.theta.iter().map(|&v| {
            if v == f64::INFINITY {
                substitute
            } else if v == f64::NEG_INFINITY {
                -substitute
            } else {
                v
            }
        }),
    )
}

/// Exact GOF at confidence `level`: for each network and term, the
/// equal-tailed interval of the statistic's exact marginal distribution
/// under the fitted parameters. With `alpha = 1 - level`, the lower bound is
/// the smallest value with CDF >= alpha/2 and the upper the smallest with
/// CDF >= 1 - alpha/2, so coverage is conservative on the discrete support.
pub fn gof_exact(fit: &FitResult, data: &PooledData, level: f64) -> Result<GofReport> {
    if level <= 0.0 || level >= 1.0 {
        return Err(Error::Inference(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let alpha = 1.0 - level;
    let theta = finite_theta(fit, 1e5);
    let mut entries = Vec::new();
    for net in data.networks() {
        for (j, term) in fit.term_names.iter().enumerate() {
            let dist = stat_distribution(&theta, &net.table, j)?;
            let lower = dist.quantile(alpha / 2.0);
            let upper = dist.quantile(1.0 - alpha / 2.0);
            let observed = net.stats[j];
            let (support_min, support_max) = net.table.bounds()[j];
            entries.push(GofEntry {
                network_id: net.id.clone(),
                term: term.clone(),
                observed,
                support_min,
                support_max,
                ci_lower: lower,
                ci_upper: upper,
                covered: observed >= lower && observed <= upper,
            });
        }
    }
    let covered = entries.iter().filter(|e| e.covered).count();
    let coverage = covered as f64 / entries.len() as f64;
    Ok(GofReport {
        level,
        entries,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::fit_mle;
    use crate::formula::parse_formula;
    use crate::graph::{AttributeTable, Graph, Network};
    use crate::table::TableCache;

    fn net(id: &str, g: Graph) -> Network {
        Network::new(id, g, AttributeTable::new(g.n())).unwrap()
    }

    fn gender_net(id: &str, g: Graph, genders: Vec<f64>) -> Network {
        let attrs = AttributeTable::new(g.n())
            .with_column("gender", genders)
            .unwrap();
        Network::new(id, g, attrs).unwrap()
    }

    fn homophilous_sample() -> Vec<Network> {
        // Ties mostly within gender groups.
        vec![
            gender_net(
                "a",
                Graph::from_edges(4, true, &[(0, 1), (1, 0), (2, 3), (0, 2)]).unwrap(),
                vec![0.0, 0.0, 1.0, 1.0],
            ),
            gender_net(
                "b",
                Graph::from_edges(4, true, &[(0, 1), (3, 2), (2, 3), (1, 0), (0, 3)]).unwrap(),
                vec![0.0, 0.0, 1.0, 1.0],
            ),
            gender_net(
                "c",
                Graph::from_edges(4, true, &[(0, 1), (2, 3)]).unwrap(),
                vec![0.0, 0.0, 1.0, 1.0],
            ),
        ]
    }

    #[test]
    fn lr_identical_models_is_zero() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let sample = vec![net("a", Graph::from_index(0b1101, 4, true).unwrap())];
        let fit = fit_mle(&sample, &model, &FitOptions::default(), &cache).unwrap();
        let lr = lr_test(&fit, &fit).unwrap();
        assert_eq!(lr.statistic, 0.0);
        assert_eq!(lr.df, 0);
        assert_eq!(lr.p_value, 1.0);
    }

    #[test]
    fn lr_nested_monotone_and_recomputation() {
        let cache = TableCache::memory_only();
        let sample = homophilous_sample();
        let restricted = fit_mle(
            &sample,
            &parse_formula("edges", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        let full = fit_mle(
            &sample,
            &parse_formula("edges + nodematch(gender)", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        let lr = lr_test(&restricted, &full).unwrap();
        assert!(lr.statistic > 0.0);
        assert_eq!(lr.df, 1);
        // Statistic is exactly twice the difference of the exact logliks.
        assert_eq!(lr.statistic, 2.0 * (full.loglik - restricted.loglik));
    }

    #[test]
    fn lr_rejects_non_nested_and_mismatched_data() {
        let cache = TableCache::memory_only();
        let sample = homophilous_sample();
        let other = vec![net("z", Graph::from_index(0b11, 4, true).unwrap())];
        let a = fit_mle(
            &sample,
            &parse_formula("edges + mutual", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        let b = fit_mle(
            &sample,
            &parse_formula("edges + nodematch(gender)", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        assert!(lr_test(&a, &b).is_err());

        let c = fit_mle(
            &other,
            &parse_formula("edges", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        assert!(lr_test(&c, &b).is_err());
    }

    #[test]
    fn aic_bic_definitions() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let sample = vec![
            net("a", Graph::from_index(0b111, 4, true).unwrap()),
            net("b", Graph::from_index(0b1, 4, true).unwrap()),
        ];
        let mut fit = fit_mle(&sample, &model, &FitOptions::default(), &cache).unwrap();
        assert_eq!(fit.num_dyads, 24);
        fit.loglik = -10.0;
        assert_eq!(aic(&fit), 22.0);
        assert!((bic(&fit) - (20.0 + 24f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn aic_difference_relates_to_lr() {
        let cache = TableCache::memory_only();
        let sample = homophilous_sample();
        let restricted = fit_mle(
            &sample,
            &parse_formula("edges", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        let full = fit_mle(
            &sample,
            &parse_formula("edges + nodematch(gender)", true).unwrap(),
            &FitOptions::default(),
            &cache,
        )
        .unwrap();
        let lr = lr_test(&restricted, &full).unwrap();
        let diff = aic(&restricted) - aic(&full);
        assert!((diff - (lr.statistic - 2.0 * lr.df as f64)).abs() < 1e-10);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges + nodematch(gender)", true).unwrap();
        let sample = homophilous_sample();
        let data = PooledData::build(&sample, &model, &cache).unwrap();
        let names = model.term_names();
        let b1 = bootstrap(&data, &names, 25, 42, &FitOptions::default()).unwrap();
        let b2 = bootstrap(&data, &names, 25, 42, &FitOptions::default()).unwrap();
        assert_eq!(b1.estimates, b2.estimates);
        assert_eq!(b1.failed, b2.failed);

        let b3 = bootstrap(&data, &names, 25, 43, &FitOptions::default()).unwrap();
        assert!(b1.estimates != b3.estimates || b1.failed != b3.failed);
    }

    #[test]
    fn bootstrap_single_network_has_zero_vcov() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let sample = vec![net("a", Graph::from_index(0b10110, 4, true).unwrap())];
        let data = PooledData::build(&sample, &model, &cache).unwrap();
        let b = bootstrap(&data, &model.term_names(), 10, 7, &FitOptions::default()).unwrap();
        assert_eq!(b.failed, 0);
        assert!(b.vcov.iter().all(|&v| v.abs() < 1e-20));
        let first = b.estimates.row(0).clone_owned();
        for r in 0..b.estimates.nrows() {
            assert_eq!(b.estimates.row(r), first);
        }
    }

    #[test]
    fn bootstrap_all_failed_rejects() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges + ttriad", true).unwrap();
        // No transitive triads anywhere: every resample is on the boundary.
        let sample = vec![
            net("a", Graph::from_edges(4, true, &[(0, 1), (1, 0)]).unwrap()),
            net("b", Graph::from_edges(4, true, &[(2, 3)]).unwrap()),
        ];
        let data = PooledData::build(&sample, &model, &cache).unwrap();
        let err = bootstrap(&data, &model.term_names(), 5, 1, &FitOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn gof_binomial_interval() {
        // theta = 0, edges term, n = 4, alpha = 0.10: Binomial(12, 1/2)
        // quantiles give [3, 9].
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let sample = vec![net("a", Graph::from_index(0b111111, 4, true).unwrap())];
        let data = PooledData::build(&sample, &model, &cache).unwrap();
        let fit = fit_mle_data(&data, &FitOptions::default()).unwrap();
        assert!(fit.theta[0].abs() < 1e-8);
        let report = gof_exact(&fit, &data, 0.90).unwrap();
        assert_eq!(report.entries.len(), 1);
        let e = &report.entries[0];
        assert_eq!(e.ci_lower, 3.0);
        assert_eq!(e.ci_upper, 9.0);
        assert_eq!(e.support_min, 0.0);
        assert_eq!(e.support_max, 12.0);
        assert!(e.covered);
        assert_eq!(report.coverage, 1.0);
    }

    #[test]
    fn gof_degenerate_distribution() {
        let cache = TableCache::memory_only();
        // Constrain edges to exactly 12: the distribution is a point mass.
        let model = parse_formula("edges + constraint(edges >= 12)", true).unwrap();
        let complete = Graph::from_index((1 << 12) - 1, 4, true).unwrap();
        let sample = vec![net("a", complete)];
        let data = PooledData::build(&sample, &model, &cache).unwrap();
        let fit = fit_mle_data(&data, &FitOptions::default()).unwrap();
        let report = gof_exact(&fit, &data, 0.90).unwrap();
        let e = &report.entries[0];
        assert_eq!(e.ci_lower, 12.0);
        assert_eq!(e.ci_upper, 12.0);
        assert!(e.covered);
    }

    #[test]
    fn gof_flags_outlier_under_sparse_model() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        // Fit a sparse model on sparse networks, then report GOF of a pooled
        // data set that also contains a complete graph.
        let sparse = vec![
            net("a", Graph::from_index(0b1, 4, true).unwrap()),
            net("b", Graph::from_index(0b11, 4, true).unwrap()),
        ];
        let sparse_data = PooledData::build(&sparse, &model, &cache).unwrap();
        let fit = fit_mle_data(&sparse_data, &FitOptions::default()).unwrap();

        let complete = Graph::from_index((1 << 12) - 1, 4, true).unwrap();
        let with_full = vec![
            net("a", Graph::from_index(0b1, 4, true).unwrap()),
            net("full", complete),
        ];
        let full_data = PooledData::build(&with_full, &model, &cache).unwrap();
        let report = gof_exact(&fit, &full_data, 0.95).unwrap();
        let outlier = report
            .entries
            .iter()
            .find(|e| e.network_id == "full")
            .unwrap();
        assert!(!outlier.covered);
        assert!(report.coverage < 1.0);
    }

    #[test]
    fn gof_csv_and_json_exports() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let sample = vec![net("a", Graph::from_index(0b111, 4, true).unwrap())];
        let data = PooledData::build(&sample, &model, &cache).unwrap();
        let fit = fit_mle_data(&data, &FitOptions::default()).unwrap();
        let report = gof_exact(&fit, &data, 0.90).unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("network_id,term,observed"));
        assert_eq!(csv.lines().count(), 2);
        let json = report.to_json();
        assert_eq!(json["level"], 0.9);
        assert!(json["entries"].as_array().unwrap().len() == 1);
    }
}
