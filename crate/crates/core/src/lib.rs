//! Exact-likelihood estimation for exponential-family random graph models on
//! small networks.
//!
//! The engine enumerates the full graph support (directed up to 6 nodes,
//! undirected up to 8), collapses it into weighted statistic tables, and
//! fits pooled multi-network models by direct maximum likelihood with exact
//! gradients. On top of that sit exact simulation, goodness-of-fit with
//! exact confidence intervals, bootstrap standard errors, and a simulation
//! study harness.

pub mod error;
pub mod estimate;
pub mod formula;
pub mod graph;
pub mod inference;
pub mod likelihood;
pub mod simulate;
pub mod table;
pub mod terms;

pub use error::{Error, Result};
pub use estimate::{
    check_boundary, fit_mle, fit_mle_data, vcov_of, BoundaryFlag, FitOptions, FitResult,
    StatusCode,
};
pub use formula::{parse_formula, print_formula};
pub use graph::{
    enumerate_range, enumerate_support, support_size, AttributeTable, Graph, Network,
    NetworkSample,
};
pub use inference::{
    aic, bic, bootstrap, gof_exact, lr_test, BootResult, GofEntry, GofReport, LrTest,
};
pub use likelihood::{
    gradient_pooled, hessian_pooled, log_kappa, loglik_pooled, loglik_surface, row_probabilities,
    stat_distribution, PooledData, StatDistribution,
};
pub use simulate::{
    aggregate_study, boundary_filter, regenerate_fivenets, run_sim_study, sample_graphs,
    Fivenets, FivenetsRow, StudyAggregates, StudyConfig, StudyRecord, StudyResult,
};
pub use table::{table_bounds, table_cache_key, BuildOptions, StatTable, TableCache, TableMeta};
pub use terms::{
    eval_offset, eval_stats, eval_term, BaseTerm, Comparison, ConstraintSpec, Interaction,
    ModelSpec, OffsetSpec, TermSpec, Transform,
};
