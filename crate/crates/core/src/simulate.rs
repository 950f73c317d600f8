//! Exact sampling from a fitted or specified model, the five-network demo
//! generator, and the simulation-study harness (bias, power, type-I error).
//!
//! Sampling is exact and two-staged: first a support-table row is drawn with
//! probability `W exp(Q theta + O) / kappa`, then one of the `W` graphs
//! sharing that row is selected uniformly by rank. Ranks are resolved in a
//! single streaming re-enumeration pass per call, so nothing ever stores a
//! per-row graph list.
//!
//! Replicate seeds are split deterministically from the master seed:
//! `seed(cell, rep) = splitmix64(master ^ splitmix64(cell << 32 | rep))`.
//! Identical configurations therefore reproduce identical studies no matter
//! how replications are scheduled across threads.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{check_boundary, fit_mle_data, BoundaryFlag, FitOptions};
use crate::formula::parse_formula;
use crate::graph::{AttributeTable, Graph, Network, NetworkSample};
use crate::likelihood::PooledData;
use crate::table::TableCache;
use crate::terms::{ModelSpec, StatEvaluator};

/// Draws `count` i.i.d. graphs from the model at `theta`.
pub fn sample_graphs(
    theta: &DVector<f64>,
    model: &ModelSpec,
    n: usize,
    attrs: &AttributeTable,
    count: usize,
    seed: u64,
    cache: &TableCache,
) -> Result<Vec<Graph>> {
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulation(
            "sampling needs finite parameters".to_string(),
        ));
    }
    if theta.len() != model.num_terms() {
        return Err(Error::Dimension {
            expected: model.num_terms(),
            got: theta.len(),
        });
    }
    let table = cache.get_or_build(n, model, attrs)?;
    if count == 0 {
        return Ok(Vec::new());
    }

    // Stage one: draw (row, rank) pairs from the collapsed distribution.
    let probs = crate::likelihood::row_probabilities(theta, &table);
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pending: HashMap<usize, Vec<(u64, usize)>> = HashMap::new();
    for draw in 0..count {
        let u: f64 = rng.random();
        let row = cum.partition_point(|&c| c <= u).min(probs.len() - 1);
        let rank = rng.random_range(0..table.weights()[row]);
        pending.entry(row).or_default().push((rank, draw));
    }
    for ranks in pending.values_mut() {
        ranks.sort_unstable();
    }

    // Stage two: one streaming pass recovers the rank-th graph of each row.
    let ev = StatEvaluator::new(model, n, attrs)?;
    let lookup = table.row_lookup();
    let k = model.num_terms();
    let mut stats = vec![0.0; k];
    let mut counters: HashMap<usize, u64> = HashMap::new();
    let mut cursors: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<Option<Graph>> = vec![None; count];
    let mut remaining = count;
    let total = crate::graph::support_size(n, model.directed())?;
    for mask in 0..total {
        let offset = ev.offset_mask(mask)?;
        if offset == f64::NEG_INFINITY {
            continue;
        }
        ev.eval_mask_into(mask, &mut stats)?;
        let key: Box<[u64]> = stats
            .iter()
            .map(|v| v.to_bits())
            .chain(std::iter::once(offset.to_bits()))
            .collect();
        let row = match lookup.get(&key) {
            Some(&r) => r,
            None => continue,
        };
        let Some(ranks) = pending.get(&row) else {
            continue;
        };
        let c = counters.entry(row).or_insert(0);
        let cursor = cursors.entry(row).or_insert(0);
        while *cursor < ranks.len() && ranks[*cursor].0 == *c {
            out[ranks[*cursor].1] = Some(Graph::from_index(mask, n, model.directed())?);
            *cursor += 1;
            remaining -= 1;
        }
        *c += 1;
        if remaining == 0 {
            break;
        }
    }
    debug_assert_eq!(remaining, 0, "every rank lies below its row weight");
    Ok(out.into_iter().map(|g| g.expect("assigned")).collect())
}

/// Observed sufficient statistics of one generated demo network.
#[derive(Clone, Debug, Serialize)]
pub struct FivenetsRow {
    pub id: String,
    pub edges: f64,
    pub homophilic: f64,
}

/// The regenerated five-network demo sample.
#[derive(Clone, Debug)]
pub struct Fivenets {
    pub networks: NetworkSample,
    pub observed: Vec<FivenetsRow>,
}

/// Draws five directed 4-node networks from the (edges, gender homophily)
/// model at theta = (-2, 2), with each node's gender a fair coin flip.
/// Attributes are drawn first, then the graphs.
pub fn regenerate_fivenets(seed: u64, cache: &TableCache) -> Result<Fivenets> {
    let model = parse_formula("edges + nodematch(gender)", true)?;
    let theta = DVector::from_vec(vec![-2.0, 2.0]);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let genders: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..4).map(|_| f64::from(rng.random_bool(0.5))).collect())
        .collect();
    let graph_seeds: Vec<u64> = (0..5).map(|_| rng.random()).collect();

    let mut networks = Vec::with_capacity(5);
    let mut observed = Vec::with_capacity(5);
    for (i, gender) in genders.into_iter().enumerate() {
        let attrs = AttributeTable::new(4).with_column("gender", gender)?;
        let graph = sample_graphs(&theta, &model, 4, &attrs, 1, graph_seeds[i], cache)?
            .pop()
            .expect("one draw");
        let stats = crate::terms::eval_stats(&model, &graph, &attrs)?;
        let id = (i + 1).to_string();
        observed.push(FivenetsRow {
            id: id.clone(),
            edges: stats[0],
            homophilic: stats[1],
        });
        networks.push(Network::new(id, graph, attrs)?);
    }
    Ok(Fivenets { networks, observed })
}

/// Keep iff every model coordinate is interior for the pooled sample.
pub fn boundary_filter(
    sample: &[Network],
    model: &ModelSpec,
    cache: &TableCache,
) -> Result<bool> {
    let data = PooledData::build(sample, model, cache)?;
    Ok(check_boundary(&data)
        .iter()
        .all(|b| *b == BoundaryFlag::Interior))
}

fn default_true() -> bool {
    true
}

fn default_sizes() -> Vec<usize> {
    vec![5, 10, 30, 50, 100, 150, 200, 300]
}

fn default_bins() -> Vec<(f64, f64)> {
    vec![(0.1, 0.5), (0.5, 1.0), (1.0, 2.0)]
}

fn default_magnitude() -> (f64, f64) {
    (0.1, 2.0)
}

fn default_level() -> f64 {
    0.05
}

fn default_node_sizes() -> (usize, usize) {
    (4, 5)
}

/// Configuration of a simulation study.
///
/// Every replication draws one parameter vector (each coordinate an
/// independent piecewise-uniform draw: magnitude in `theta_magnitude`, sign a
/// fair coin), a network-size mix uniform over the pairs `{S - j, j}` of
/// 4-node and 5-node counts, generates the sample, filters boundary samples,
/// fits, and records the outcome. With `stratify_by_bin` the magnitude is
/// drawn within each effect bin so every (sample size, bin) cell gets
/// `replications` replications.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub generate_formula: String,
    pub fit_formula: String,
    #[serde(default = "default_true")]
    pub directed: bool,
    /// Replications per cell.
    pub replications: usize,
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_bins")]
    pub effect_bins: Vec<(f64, f64)>,
    #[serde(default)]
    pub stratify_by_bin: bool,
    #[serde(default = "default_magnitude")]
    pub theta_magnitude: (f64, f64),
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    /// The two node counts mixed within a sample.
    #[serde(default = "default_node_sizes")]
    pub node_sizes: (usize, usize),
}

impl StudyConfig {
    /// Bias/power design: generate and fit (edges, ttriad).
    pub fn bias_power(replications: usize, seed: u64) -> StudyConfig {
        StudyConfig {
            generate_formula: "edges + ttriad".to_string(),
            fit_formula: "edges + ttriad".to_string(),
            directed: true,
            replications,
            sample_sizes: default_sizes(),
            effect_bins: default_bins(),
            stratify_by_bin: false,
            theta_magnitude: default_magnitude(),
            level: 0.05,
            seed,
            node_sizes: (4, 5),
        }
    }

    /// Type-I design: generate edges-only data, fit the misspecified
    /// (edges, ttriad) model.
    pub fn type_i(replications: usize, seed: u64) -> StudyConfig {
        StudyConfig {
            generate_formula: "edges".to_string(),
            fit_formula: "edges + ttriad".to_string(),
            directed: true,
            replications,
            sample_sizes: vec![5, 10, 15, 20, 30, 50, 100],
            effect_bins: default_bins(),
            stratify_by_bin: false,
            theta_magnitude: default_magnitude(),
            level: 0.05,
            seed,
            node_sizes: (4, 5),
        }
    }
}

/// One replication's outcome. Estimates are present only for kept (all
/// coordinates interior) replications; dropped ones record the filter flag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyRecord {
    pub sample_size: usize,
    /// Effect-bin index when the study is stratified.
    pub bin: Option<usize>,
    pub rep: usize,
    pub seed: u64,
    pub theta_true: Vec<f64>,
    pub num_size_a: usize,
    pub num_size_b: usize,
    pub kept: bool,
    pub status: Option<String>,
    pub theta_hat: Option<Vec<f64>>,
    pub se: Option<Vec<f64>>,
    pub p_values: Option<Vec<Option<f64>>>,
    pub elapsed_ms: u64,
}

/// Mean bias of one coordinate at one sample size, with a normal 95% CI.
#[derive(Clone, Debug, Serialize)]
pub struct BiasCell {
    pub sample_size: usize,
    pub term: String,
    pub kept: usize,
    pub mean_bias: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Empirical power of one coordinate in one (sample size, effect bin) cell:
/// the fraction of kept fits significant at the study level with the sign of
/// the generating parameter.
#[derive(Clone, Debug, Serialize)]
pub struct PowerCell {
    pub sample_size: usize,
    pub bin: usize,
    pub term: String,
    pub kept: usize,
    pub power: f64,
}

/// Empirical type-I rate of a fitted term absent from the generating model.
#[derive(Clone, Debug, Serialize)]
pub struct TypeICell {
    pub sample_size: usize,
    pub term: String,
    pub kept: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyAggregates {
    pub effect_bins: Vec<(f64, f64)>,
    pub bias: Vec<BiasCell>,
    pub power: Vec<PowerCell>,
    pub type_i: Vec<TypeICell>,
}

#[derive(Debug)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub records: Vec<StudyRecord>,
    pub aggregates: StudyAggregates,
}

impl StudyResult {
    /// Line-delimited JSON, one record per replication.
    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn aggregates_csv(&self) -> String {
        let mut out = String::from("kind,sample_size,bin,term,kept,value,ci_lower,ci_upper\n");
        for b in &self.aggregates.bias {
            out.push_str(&format!(
                "bias,{},,{},{},{},{},{}\n",
                b.sample_size, b.term, b.kept, b.mean_bias, b.ci_lower, b.ci_upper
            ));
        }
        for p in &self.aggregates.power {
            out.push_str(&format!(
                "power,{},{},{},{},{},,\n",
                p.sample_size, p.bin, p.term, p.kept, p.power
            ));
        }
        for t in &self.aggregates.type_i {
            out.push_str(&format!(
                "type_i,{},,{},{},{},,\n",
                t.sample_size, t.term, t.kept, t.rate
            ));
        }
        out
    }
}

/// Documented seed split (see module docs).
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn replication_seed(master: u64, cell: usize, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(((cell as u64) << 32) | rep as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Cell {
    size_ix: usize,
    bin: Option<usize>,
}

fn study_cells(config: &StudyConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for size_ix in 0..config.sample_sizes.len() {
        if config.stratify_by_bin {
            for bin in 0..config.effect_bins.len() {
                cells.push(Cell {
                    size_ix,
                    bin: Some(bin),
                });
            }
        } else {
            cells.push(Cell { size_ix, bin: None });
        }
    }
    cells
}

fn run_one(
    config: &StudyConfig,
    gen_model: &ModelSpec,
    fit_model: &ModelSpec,
    cell: Cell,
    cell_ix: usize,
    rep: usize,
    cache: &TableCache,
) -> Result<StudyRecord> {
    let seed = replication_seed(config.seed, cell_ix, rep);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sample_size = config.sample_sizes[cell.size_ix];

    // Parameter draw: independent coordinates, magnitude then sign.
    let (lo, hi) = match cell.bin {
        Some(b) => config.effect_bins[b],
        None => config.theta_magnitude,
    };
    let theta_true: Vec<f64> = (0..gen_model.num_terms())
        .map(|_| {
            let mag = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();

    // Size mix: uniform over the pairs {S - j, j}.
    let num_b = rng.random_range(0..=sample_size);
    let num_a = sample_size - num_b;
    let seed_a: u64 = rng.random();
    let seed_b: u64 = rng.random();

    let theta = DVector::from_vec(theta_true.clone());
    let empty_a = AttributeTable::new(config.node_sizes.0);
    let empty_b = AttributeTable::new(config.node_sizes.1);
    let mut sample = Vec::with_capacity(sample_size);
    if num_a > 0 {
        for (i, g) in
            sample_graphs(&theta, gen_model, config.node_sizes.0, &empty_a, num_a, seed_a, cache)?
                .into_iter()
                .enumerate()
        {
            sample.push(Network::new(format!("a{i}"), g, empty_a.clone())?);
        }
    }
    if num_b > 0 {
        for (i, g) in
            sample_graphs(&theta, gen_model, config.node_sizes.1, &empty_b, num_b, seed_b, cache)?
                .into_iter()
                .enumerate()
        {
            sample.push(Network::new(format!("b{i}"), g, empty_b.clone())?);
        }
    }

    let start = Instant::now();
    let data = PooledData::build(&sample, fit_model, cache)?;
    let kept = check_boundary(&data)
        .iter()
        .all(|b| *b == BoundaryFlag::Interior);

    let mut record = StudyRecord {
        sample_size,
        bin: cell.bin,
        rep,
        seed,
        theta_true,
        num_size_a: num_a,
        num_size_b: num_b,
        kept,
        status: None,
        theta_hat: None,
        se: None,
        p_values: None,
        elapsed_ms: 0,
    };
    if kept {
        let fit = fit_mle_data(&data, &FitOptions::default())?;
        record.status = Some(fit.status.code().to_string());
        record.theta_hat = Some(fit.theta.iter().cloned().collect());
        record.se = Some(fit.standard_errors());
        record.p_values = Some(fit.p_values());
    }
    record.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(record)
}

/// Recomputes all aggregates from per-replication records.
pub fn aggregate_study(config: &StudyConfig, records: &[StudyRecord]) -> Result<StudyAggregates> {
    let gen_model = parse_formula(&config.generate_formula, config.directed)?;
    let fit_model = parse_formula(&config.fit_formula, config.directed)?;
    let gen_names = gen_model.term_names();
    let fit_names = fit_model.term_names();
    // Fit coordinate -> generating coordinate (None for misspecified terms).
    let gen_index: Vec<Option<usize>> = fit_names
        .iter()
        .map(|name| gen_names.iter().position(|g| g == name))
        .collect();

    let mut bias = Vec::new();
    let mut power = Vec::new();
    let mut type_i = Vec::new();

    for (size_ix, &size) in config.sample_sizes.iter().enumerate() {
        let _ = size_ix;
        let at_size: Vec<&StudyRecord> = records
            .iter()
            .filter(|r| r.sample_size == size && r.kept)
            .collect();

        for (j, name) in fit_names.iter().enumerate() {
            match gen_index[j] {
                Some(g) => {
                    // Bias over kept fits.
                    let diffs: Vec<f64> = at_size
                        .iter()
                        .filter_map(|r| {
                            r.theta_hat
                                .as_ref()
                                .map(|th| th[j] - r.theta_true[g])
                        })
                        .collect();
                    if !diffs.is_empty() {
                        let n = diffs.len() as f64;
                        let mean = diffs.iter().sum::<f64>() / n;
                        let var = if diffs.len() > 1 {
                            diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)
                        } else {
                            0.0
                        };
                        let half = 1.96 * (var / n).sqrt();
                        bias.push(BiasCell {
                            sample_size: size,
                            term: name.clone(),
                            kept: diffs.len(),
                            mean_bias: mean,
                            ci_lower: mean - half,
                            ci_upper: mean + half,
                        });
                    }
                    // Power per effect bin: significant with the true sign.
                    for (b, &(lo, hi)) in config.effect_bins.iter().enumerate() {
                        let in_bin: Vec<&&StudyRecord> = at_size
                            .iter()
                            .filter(|r| {
                                let mag = r.theta_true[g].abs();
                                mag >= lo && (mag < hi || (b == config.effect_bins.len() - 1 && mag <= hi))
                            })
                            .collect();
                        if in_bin.is_empty() {
                            continue;
                        }
                        let hits = in_bin
                            .iter()
                            .filter(|r| {
                                let th = r.theta_hat.as_ref().unwrap();
                                let p = r.p_values.as_ref().unwrap();
                                matches!(p[j], Some(pv) if pv < config.level)
                                    && th[j].signum() == r.theta_true[g].signum()
                            })
                            .count();
                        power.push(PowerCell {
                            sample_size: size,
                            bin: b,
                            term: name.clone(),
                            kept: in_bin.len(),
                            power: hits as f64 / in_bin.len() as f64,
                        });
                    }
                }
                None => {
                    // Misspecified term: two-sided rejection rate.
                    let rejections = at_size
                        .iter()
                        .filter(|r| {
                            matches!(r.p_values.as_ref().unwrap()[j], Some(pv) if pv < config.level)
                        })
                        .count();
                    if !at_size.is_empty() {
                        type_i.push(TypeICell {
                            sample_size: size,
                            term: name.clone(),
                            kept: at_size.len(),
                            rate: rejections as f64 / at_size.len() as f64,
                        });
                    }
                }
            }
        }
    }

    Ok(StudyAggregates {
        effect_bins: config.effect_bins.clone(),
        bias,
        power,
        type_i,
    })
}

/// Runs (or resumes) a simulation study. Completed replications found in the
/// checkpoint file are not rerun; new ones are appended through a single
/// writer as they finish. Individual replication failures are recorded,
/// never abort the study.
pub fn run_sim_study(
    config: &StudyConfig,
    checkpoint: Option<&Path>,
    cache: &TableCache,
) -> Result<StudyResult> {
    if config.sample_sizes.is_empty() || config.replications == 0 {
        return Err(Error::Simulation("empty study grid".to_string()));
    }
    if config.level <= 0.0 || config.level >= 1.0 {
        return Err(Error::Simulation(format!(
            "significance level must be in (0, 1), got {}",
            config.level
        )));
    }
    let gen_model = parse_formula(&config.generate_formula, config.directed)?;
    let fit_model = parse_formula(&config.fit_formula, config.directed)?;

    // Warm the tables once so parallel replications only read.
    for &n in &[config.node_sizes.0, config.node_sizes.1] {
        cache.get_or_build(n, &gen_model, &AttributeTable::new(n))?;
        cache.get_or_build(n, &fit_model, &AttributeTable::new(n))?;
    }

    let mut done: Vec<StudyRecord> = Vec::new();
    if let Some(path) = checkpoint {
        if path.exists() {
            let file = std::fs::File::open(path)?;
            for line in std::io::BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<StudyRecord>(&line) {
                    Ok(r) => done.push(r),
                    Err(e) => eprintln!("warning: skipping malformed checkpoint line: {e}"),
                }
            }
        }
    }
    let done_keys: std::collections::HashSet<(usize, Option<usize>, usize)> = done
        .iter()
        .map(|r| (r.sample_size, r.bin, r.rep))
        .collect();

    let cells = study_cells(config);
    let mut pending = Vec::new();
    for (cell_ix, cell) in cells.iter().enumerate() {
        for rep in 0..config.replications {
            let key = (config.sample_sizes[cell.size_ix], cell.bin, rep);
            if !done_keys.contains(&key) {
                pending.push((cell_ix, *cell, rep));
            }
        }
    }

    let writer: Option<Mutex<std::fs::File>> = match checkpoint {
        Some(path) => Some(Mutex::new(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)?,
        )),
        None => None,
    };

    let fresh: Vec<StudyRecord> = pending
        .par_iter()
        .filter_map(|&(cell_ix, cell, rep)| {
            match run_one(config, &gen_model, &fit_model, cell, cell_ix, rep, cache) {
                Ok(record) => {
                    if let Some(w) = &writer {
                        let line = serde_json::to_string(&record).expect("record serializes");
                        let mut f = w.lock().unwrap();
                        let _ = writeln!(f, "{line}");
                    }
                    Some(record)
                }
                Err(e) => {
                    eprintln!(
                        "warning: replication (cell {cell_ix}, rep {rep}) failed: {e}"
                    );
                    None
                }
            }
        })
        .collect();

    let mut records = done;
    records.extend(fresh);
    records.sort_by_key(|r| (r.sample_size, r.bin, r.rep));
    let aggregates = aggregate_study(config, &records)?;
    Ok(StudyResult {
        config: config.clone(),
        records,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::graph::AttributeTable;

    #[test]
    fn sampler_mean_edges_at_zero() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let theta = DVector::from_vec(vec![0.0]);
        let graphs =
            sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 10_000, 99, &cache).unwrap();
        let mean = graphs.iter().map(|g| g.tie_count() as f64).sum::<f64>() / 10_000.0;
        assert!((mean - 6.0).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn sampler_mean_edges_logistic() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let theta = DVector::from_vec(vec![-2.0]);
        let graphs =
            sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 20_000, 7, &cache).unwrap();
        let mean = graphs.iter().map(|g| g.tie_count() as f64).sum::<f64>() / 20_000.0;
        let expect = 12.0 / (1.0 + 2f64.exp());
        assert!((mean - expect).abs() < 0.05, "mean {mean} expect {expect}");
    }

    #[test]
    fn sampler_respects_constraints() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges + constraint(edges >= 5)", true).unwrap();
        let theta = DVector::from_vec(vec![-1.0]);
        let graphs =
            sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 5_000, 3, &cache).unwrap();
        assert!(graphs.iter().all(|g| g.tie_count() >= 5));
    }

    #[test]
    fn sampler_rejects_nonfinite_theta() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let theta = DVector::from_vec(vec![f64::INFINITY]);
        assert!(
            sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 1, 0, &cache).is_err()
        );
    }

    #[test]
    fn sampler_is_deterministic() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges + mutual", true).unwrap();
        let theta = DVector::from_vec(vec![-0.5, 0.8]);
        let a = sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 50, 11, &cache).unwrap();
        let b = sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 50, 11, &cache).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_conditional_uniformity() {
        // Conditioned on a row, graph indices are uniform: check a chi-square
        // statistic on the highest-multiplicity row of the n=4 edges model.
        let cache = TableCache::memory_only();
        let model = parse_formula("edges", true).unwrap();
        let theta = DVector::from_vec(vec![0.0]);
        let graphs =
            sample_graphs(&theta, &model, 4, &AttributeTable::new(4), 60_000, 21, &cache).unwrap();
        // Row "edges = 6" has C(12,6) = 924 members.
        let mut counts: HashMap<u64, u32> = HashMap::new();
        let mut total = 0u32;
        for g in &graphs {
            if g.tie_count() == 6 {
                *counts.entry(g.index()).or_insert(0) += 1;
                total += 1;
            }
        }
        let members = 924.0;
        let expected = total as f64 / members;
        assert!(expected > 5.0, "need a few draws per member");
        let chi2: f64 = {
            let observed_sum: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2)).sum();
            let unseen = members - counts.len() as f64;
            (observed_sum + unseen * expected * expected) / expected
        };
        // df = 923; a 0.001-level cutoff is ~1070 (normal approximation).
        let df = members - 1.0;
        let cutoff = df + 3.1 * (2.0 * df).sqrt();
        assert!(chi2 < cutoff, "chi2 {chi2} cutoff {cutoff}");
    }

    #[test]
    fn fivenets_shape_and_subset_invariant() {
        let cache = TableCache::memory_only();
        let five = regenerate_fivenets(20240915, &cache).unwrap();
        assert_eq!(five.networks.len(), 5);
        assert_eq!(five.observed.len(), 5);
        for row in &five.observed {
            assert!(row.homophilic <= row.edges);
        }
        for net in &five.networks {
            assert_eq!(net.graph.n(), 4);
            assert!(net.graph.directed());
            assert_eq!(net.attrs.get("gender").unwrap().len(), 4);
        }

        // Deterministic under the seed.
        let again = regenerate_fivenets(20240915, &cache).unwrap();
        for (a, b) in five.networks.iter().zip(&again.networks) {
            assert_eq!(a.graph, b.graph);
        }
    }

    #[test]
    fn filter_consistency() {
        let cache = TableCache::memory_only();
        let model = parse_formula("edges + ttriad", true).unwrap();

        let complete = Graph::from_index((1 << 12) - 1, 4, true).unwrap();
        let all_complete = vec![
            Network::new("a", complete, AttributeTable::new(4)).unwrap(),
            Network::new("b", complete, AttributeTable::new(4)).unwrap(),
        ];
        assert!(!boundary_filter(&all_complete, &model, &cache).unwrap());

        let no_triads = vec![Network::new(
            "a",
            Graph::from_edges(4, true, &[(0, 1), (1, 0), (2, 3)]).unwrap(),
            AttributeTable::new(4),
        )
        .unwrap()];
        assert!(!boundary_filter(&no_triads, &model, &cache).unwrap());

        // One sparse, triangulated graph keeps the sample.
        let mixed = vec![
            Network::new("a", complete, AttributeTable::new(4)).unwrap(),
            Network::new(
                "b",
                Graph::from_edges(4, true, &[(0, 1), (1, 2), (0, 2)]).unwrap(),
                AttributeTable::new(4),
            )
            .unwrap(),
        ];
        assert!(boundary_filter(&mixed, &model, &cache).unwrap());
    }

    #[test]
    fn study_runs_and_aggregates_recompute() {
        let cache = TableCache::memory_only();
        let mut config = StudyConfig::type_i(6, 77);
        config.sample_sizes = vec![5, 10];
        let result = run_sim_study(&config, None, &cache).unwrap();
        assert_eq!(result.records.len(), 12);

        // Aggregates are a pure function of the records.
        let again = aggregate_study(&config, &result.records).unwrap();
        assert_eq!(
            serde_json::to_string(&result.aggregates).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
        // The misspecified ttriad coordinate appears in the type-I cells.
        assert!(again.type_i.iter().all(|c| c.term == "ttriad"));
    }

    #[test]
    fn study_is_seed_deterministic_and_resumable() {
        let cache = TableCache::memory_only();
        let mut config = StudyConfig::bias_power(4, 123);
        config.sample_sizes = vec![5];
        let r1 = run_sim_study(&config, None, &cache).unwrap();
        let r2 = run_sim_study(&config, None, &cache).unwrap();
        assert_eq!(r1.records_jsonl(), r2.records_jsonl());

        // Resume: prefill a checkpoint with half the records, rerun, and the
        // final set matches the from-scratch run.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.jsonl");
        let half: String = r1
            .records
            .iter()
            .take(2)
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect();
        std::fs::write(&path, half).unwrap();
        let resumed = run_sim_study(&config, Some(&path), &cache).unwrap();
        assert_eq!(resumed.records_jsonl(), r1.records_jsonl());
    }
}
