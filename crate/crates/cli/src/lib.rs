//! Command implementations behind the `ergmx` binary.
//!
//! Each command returns its output document so tests can drive the same code
//! paths the binary uses. Statistical degeneracy (boundary estimates, status
//! 30) still produces a structured result; only structural problems (bad
//! files, malformed formulas, impossible sizes) return errors, which the
//! binary maps to a nonzero exit code.

pub mod files;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use ergmx_core::{
    aic, bic, bootstrap, fit_mle, gof_exact, parse_formula, regenerate_fivenets, run_sim_study,
    sample_graphs, table_cache_key, AttributeTable, FitOptions, FitResult, Network, PooledData,
    StatTable, StudyConfig, TableCache,
};
use files::{
    CoefficientDoc, ConventionsDoc, ExtReal, NetworkFile, ResultFile, StatusDoc,
    RESULT_FILE_VERSION,
};

/// Supports bigger than this need `--allow-large` (the n = 6 directed and
/// n = 8 undirected builds stream a billion-scale enumeration).
pub const LARGE_SUPPORT_THRESHOLD: u64 = 1 << 26;

/// Options shared by all commands.
pub struct GlobalOpts {
    pub cache_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl GlobalOpts {
    pub fn cache(&self) -> Result<TableCache> {
        Ok(match &self.cache_dir {
            Some(dir) => TableCache::with_dir(dir)?,
            None => TableCache::memory_only(),
        })
    }

    /// Caps the rayon worker pool; later calls are no-ops, which is fine.
    pub fn init_threads(&self) {
        if let Some(t) = self.threads {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global();
        }
    }
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

/// Uniform directedness of a sample (pooled models share one flag).
fn sample_directed(networks: &[Network]) -> Result<bool> {
    let directed = networks[0].graph.directed();
    if networks.iter().any(|n| n.graph.directed() != directed) {
        bail!("all networks in a pooled sample must share directedness");
    }
    Ok(directed)
}

fn result_from_fit(
    fit: &FitResult,
    formula: &str,
    directed: bool,
    table_cache_keys: Vec<String>,
    seed: Option<u64>,
) -> ResultFile {
    let se = fit.standard_errors();
    let z = fit.z_values();
    let p = fit.p_values();
    ResultFile {
        version: RESULT_FILE_VERSION,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        formula: formula.to_string(),
        directed,
        coefficients: fit
            .term_names
            .iter()
            .enumerate()
            .map(|(i, term)| CoefficientDoc {
                term: term.clone(),
                estimate: ExtReal(fit.theta[i]),
                se: se[i],
                z: z[i],
                p: p[i],
                boundary: fit.boundary[i],
            })
            .collect(),
        loglik: fit.loglik,
        aic: aic(fit),
        bic: bic(fit),
        status: StatusDoc {
            code: fit.status.code().to_string(),
            message: fit.status.message().to_string(),
        },
        iterations: fit.iterations,
        converged: fit.converged,
        num_networks: fit.num_networks,
        num_dyads: fit.num_dyads,
        table_cache_keys,
        model_fingerprint: fit.model_fingerprint.clone(),
        data_fingerprint: fit.data_fingerprint.clone(),
        seed,
        conventions: ConventionsDoc::default(),
    }
}

fn cache_keys_for(networks: &[Network], model: &ergmx_core::ModelSpec) -> Vec<String> {
    let mut keys: Vec<String> = networks
        .iter()
        .map(|net| table_cache_key(net.graph.n(), net.graph.directed(), model, &net.attrs))
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// `fit`: pooled maximum likelihood on a network file.
pub fn cmd_fit(
    networks: &[Network],
    formula: &str,
    opts: &FitOptions,
    global: &GlobalOpts,
) -> Result<ResultFile> {
    let directed = sample_directed(networks)?;
    let model = parse_formula(formula, directed)?;
    let cache = global.cache()?;
    let fit = fit_mle(networks, &model, opts, &cache)?;
    Ok(result_from_fit(
        &fit,
        &model.formula(),
        directed,
        cache_keys_for(networks, &model),
        None,
    ))
}

/// `simulate`: exact draws from a specified model.
#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    formula: &str,
    theta: &[f64],
    n: usize,
    directed: bool,
    count: usize,
    seed: Option<u64>,
    attrs: &AttributeTable,
    global: &GlobalOpts,
) -> Result<NetworkFile> {
    let model = parse_formula(formula, directed)?;
    if theta.len() != model.num_terms() {
        bail!(
            "--theta has {} values but the model has {} terms",
            theta.len(),
            model.num_terms()
        );
    }
    let seed = seed_or_random(seed);
    let cache = global.cache()?;
    let theta = nalgebra::DVector::from_vec(theta.to_vec());
    let graphs = sample_graphs(&theta, &model, n, attrs, count, seed, &cache)?;
    let networks: Vec<Network> = graphs
        .into_iter()
        .enumerate()
        .map(|(i, g)| Network::new(format!("sim{}", i + 1), g, attrs.clone()))
        .collect::<ergmx_core::Result<_>>()?;
    let theta_vec: Vec<f64> = theta.iter().cloned().collect();
    Ok(NetworkFile::from_networks(
        &networks,
        Some(json!({
            "model": model.formula(),
            "theta": theta_vec,
            "seed": seed,
        })),
    ))
}

/// `fivenets`: the five-network demo sample with its observed statistics.
pub fn cmd_fivenets(seed: Option<u64>, global: &GlobalOpts) -> Result<NetworkFile> {
    let seed = seed_or_random(seed);
    let cache = global.cache()?;
    let five = regenerate_fivenets(seed, &cache)?;
    let observed: Vec<_> = five
        .observed
        .iter()
        .map(|r| json!({"id": r.id, "edges": r.edges, "homophilic": r.homophilic}))
        .collect();
    Ok(NetworkFile::from_networks(
        &five.networks,
        Some(json!({
            "model": "edges + nodematch(gender)",
            "theta": [-2.0, 2.0],
            "seed": seed,
            "observed_statistics": observed,
        })),
    ))
}

/// Refits the recorded model and checks it reproduces the stored result.
fn refit_for(
    result: &ResultFile,
    networks: &[Network],
    global: &GlobalOpts,
) -> Result<(FitResult, PooledData, ergmx_core::ModelSpec, TableCache)> {
    let directed = sample_directed(networks)?;
    if directed != result.directed {
        bail!("result file and network file disagree on directedness");
    }
    let model = parse_formula(&result.formula, directed)?;
    let cache = global.cache()?;
    let data = PooledData::build(networks, &model, &cache)?;
    if data.fingerprint() != result.data_fingerprint {
        bail!(
            "network file does not match the result file (data fingerprint {} != {})",
            data.fingerprint(),
            result.data_fingerprint
        );
    }
    let fit = fit_mle(networks, &model, &FitOptions::default(), &cache)?;
    Ok((fit, data, model, cache))
}

/// `gof`: exact goodness-of-fit of a recorded fit.
pub fn cmd_gof(
    result: &ResultFile,
    networks: &[Network],
    level: f64,
    global: &GlobalOpts,
) -> Result<ergmx_core::GofReport> {
    let (fit, data, _, _) = refit_for(result, networks, global)?;
    Ok(gof_exact(&fit, &data, level)?)
}

/// `boot` output document.
#[derive(Debug, serde::Serialize)]
pub struct BootDoc {
    pub formula: String,
    pub replicates_requested: usize,
    pub replicates_failed: usize,
    pub seed: u64,
    pub term_names: Vec<String>,
    pub se: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
}

/// `boot`: network-level bootstrap of a recorded fit.
pub fn cmd_boot(
    result: &ResultFile,
    networks: &[Network],
    replicates: usize,
    seed: Option<u64>,
    global: &GlobalOpts,
) -> Result<BootDoc> {
    let (_, data, model, _) = refit_for(result, networks, global)?;
    let seed = seed_or_random(seed);
    let boot = bootstrap(
        &data,
        &model.term_names(),
        replicates,
        seed,
        &FitOptions::default(),
    )?;
    let k = boot.vcov.nrows();
    Ok(BootDoc {
        formula: model.formula(),
        replicates_requested: boot.requested,
        replicates_failed: boot.failed,
        seed,
        term_names: boot.term_names.clone(),
        se: boot.standard_errors(),
        vcov: (0..k)
            .map(|a| (0..k).map(|b| boot.vcov[(a, b)]).collect())
            .collect(),
        estimates: (0..boot.estimates.nrows())
            .map(|r| (0..k).map(|c| boot.estimates[(r, c)]).collect())
            .collect(),
    })
}

/// `sim-study`: run or resume a study from a config file.
pub fn cmd_sim_study(
    config_path: &Path,
    checkpoint: Option<&Path>,
    global: &GlobalOpts,
) -> Result<ergmx_core::StudyResult> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("cannot read {}", config_path.display()))?;
    let config: StudyConfig = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a valid study config", config_path.display()))?;
    let cache = global.cache()?;
    Ok(run_sim_study(&config, checkpoint, &cache)?)
}

/// `enumerate` output document.
#[derive(Debug, serde::Serialize)]
pub struct EnumerateDoc {
    pub n: usize,
    pub directed: bool,
    pub formula: String,
    pub rows: usize,
    pub weight_total: u64,
    pub total_graphs: u64,
    pub excluded_graphs: u64,
    pub bounds: Vec<serde_json::Value>,
    pub cache_key: String,
}

/// `enumerate`: build (or load) a support table and summarize it.
pub fn cmd_enumerate(
    n: usize,
    directed: bool,
    formula: &str,
    allow_large: bool,
    max_rows: Option<usize>,
    global: &GlobalOpts,
) -> Result<EnumerateDoc> {
    let model = parse_formula(formula, directed)?;
    let size = ergmx_core::support_size(n, directed)?;
    if size > LARGE_SUPPORT_THRESHOLD && !allow_large {
        bail!(
            "the support has {size} graphs; building it is a long run, pass --allow-large to
             proceed (streaming, bounded memory)"
        );
    }
    let mut opts = ergmx_core::BuildOptions::default();
    if let Some(m) = max_rows {
        opts.max_rows = m;
    }
    let attrs = AttributeTable::new(n);
    let cache = global.cache()?.with_options(opts);
    let table: std::sync::Arc<StatTable> = cache.get_or_build(n, &model, &attrs)?;
    Ok(EnumerateDoc {
        n,
        directed,
        formula: model.formula(),
        rows: table.num_rows(),
        weight_total: table.weight_total(),
        total_graphs: table.meta().total_graphs,
        excluded_graphs: table.meta().excluded_graphs,
        bounds: model
            .term_names()
            .iter()
            .zip(table.bounds())
            .map(|(term, (lo, hi))| json!({"term": term, "min": lo, "max": hi}))
            .collect(),
        cache_key: table.meta().key.clone(),
    })
}
