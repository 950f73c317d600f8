//! Naive reference implementations used to cross-check the engine in tests.
//!
//! Everything here is written for clarity over speed, straight from the
//! definitions, and shares no code with `ergmx-core`: graphs are plain
//! boolean adjacency matrices, statistics are literal nested loops, and
//! probabilities come from direct summation over every graph. Limited to
//! supports of at most 4096 graphs (n <= 4 directed) where that matters.

use std::collections::BTreeMap;

/// Adjacency matrix; `adj[i][j]` is the tie i -> j (symmetric if undirected).
pub type Adjacency = Vec<Vec<bool>>;

/// Decodes support index `k` into an adjacency matrix using the documented
/// cell order: directed cells are row-major over ordered pairs (i, j) with
/// i != j; undirected cells run over pairs i < j. Bit b of `k` sets cell b.
pub fn adjacency_from_index(k: u64, n: usize, directed: bool) -> Adjacency {
    let mut adj = vec![vec![false; n]; n];
    let mut bit = 0;
    if directed {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if k & (1 << bit) != 0 {
                    adj[i][j] = true;
                }
                bit += 1;
            }
        }
    } else {
        for i in 0..n {
            for j in (i + 1)..n {
                if k & (1 << bit) != 0 {
                    adj[i][j] = true;
                    adj[j][i] = true;
                }
                bit += 1;
            }
        }
    }
    adj
}

pub fn adjacency_from_edges(n: usize, directed: bool, edges: &[(usize, usize)]) -> Adjacency {
    let mut adj = vec![vec![false; n]; n];
    for &(i, j) in edges {
        adj[i][j] = true;
        if !directed {
            adj[j][i] = true;
        }
    }
    adj
}

pub fn num_cells(n: usize, directed: bool) -> usize {
    if directed {
        n * (n - 1)
    } else {
        n * (n - 1) / 2
    }
}

/// Tie count. Directed: all ordered pairs; undirected: pairs i < j.
pub fn edges(adj: &Adjacency, directed: bool) -> f64 {
    let n = adj.len();
    let mut c = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if !directed && j < i {
                continue;
            }
            if adj[i][j] {
                c += 1;
            }
        }
    }
    c as f64
}

/// Unordered dyads tied in both directions.
pub fn mutual(adj: &Adjacency) -> f64 {
    let n = adj.len();
    let mut c = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if adj[i][j] && adj[j][i] {
                c += 1;
            }
        }
    }
    c as f64
}

/// Ordered distinct triples (i, j, k) with y_ij, y_jk, y_ik all present.
pub fn ttriad(adj: &Adjacency) -> f64 {
    let n = adj.len();
    let mut c = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                if adj[i][j] && adj[j][k] && adj[i][k] {
                    c += 1;
                }
            }
        }
    }
    c as f64
}

/// Ordered distinct 4-tuples (i, j, k, l) forming a directed 4-cycle.
pub fn fourcycle(adj: &Adjacency) -> f64 {
    let n = adj.len();
    let mut c = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if i == j || i == k || i == l || j == k || j == l || k == l {
                        continue;
                    }
                    if adj[i][j] && adj[j][k] && adj[k][l] && adj[l][i] {
                        c += 1;
                    }
                }
            }
        }
    }
    c as f64
}

/// Ties between nodes sharing the attribute value.
pub fn nodematch(adj: &Adjacency, directed: bool, x: &[f64]) -> f64 {
    let n = adj.len();
    let mut c = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if !directed && j < i {
                continue;
            }
            if adj[i][j] && x[i] == x[j] {
                c += 1;
            }
        }
    }
    c as f64
}

/// Receiver-attribute sum over ordered tied pairs.
pub fn nodeicov(adj: &Adjacency, x: &[f64]) -> f64 {
    let n = adj.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[i][j] {
                s += x[j];
            }
        }
    }
    s
}

/// Sender-attribute sum over ordered tied pairs.
pub fn nodeocov(adj: &Adjacency, x: &[f64]) -> f64 {
    let n = adj.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && adj[i][j] {
                s += x[i];
            }
        }
    }
    s
}

/// A model term mirrored naively: base statistic name, optional transform,
/// optional graph-level multiplier.
#[derive(Clone, Debug)]
pub struct OracleTerm {
    pub base: OracleBase,
    pub transform: OracleTransform,
    pub interaction: OracleInteraction,
}

#[derive(Clone, Debug)]
pub enum OracleBase {
    Edges,
    Mutual,
    Ttriad,
    Fourcycle,
    Nodematch(String),
    Nodeicov(String),
    Nodeocov(String),
}

#[derive(Clone, Copy, Debug)]
pub enum OracleTransform {
    Identity,
    Sqrt,
    Log,
    Power(f64),
    Scale(f64),
}

#[derive(Clone, Copy, Debug)]
pub enum OracleInteraction {
    None,
    SizeIndicator(usize),
    LogInverseSize,
}

impl OracleTerm {
    pub fn plain(base: OracleBase) -> Self {
        OracleTerm {
            base,
            transform: OracleTransform::Identity,
            interaction: OracleInteraction::None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum OracleOffset {
    Term(OracleTerm),
    /// -inf when `edges/...` fails the comparison against the bound.
    ConstraintGe(OracleBase, i64),
    ConstraintLe(OracleBase, i64),
}

/// A full model mirrored naively.
#[derive(Clone, Debug, Default)]
pub struct OracleModel {
    pub terms: Vec<OracleTerm>,
    pub offsets: Vec<OracleOffset>,
}

pub type Attributes = BTreeMap<String, Vec<f64>>;

fn eval_base(base: &OracleBase, adj: &Adjacency, directed: bool, attrs: &Attributes) -> f64 {
    match base {
        OracleBase::Edges => edges(adj, directed),
        OracleBase::Mutual => {
            if directed {
                mutual(adj)
            } else {
                edges(adj, directed)
            }
        }
        OracleBase::Ttriad => ttriad(adj),
        OracleBase::Fourcycle => fourcycle(adj),
        OracleBase::Nodematch(a) => nodematch(adj, directed, &attrs[a]),
        // Ordered-pair sums; the symmetric adjacency handles undirected.
        OracleBase::Nodeicov(a) => nodeicov(adj, &attrs[a]),
        OracleBase::Nodeocov(a) => nodeocov(adj, &attrs[a]),
    }
}

pub fn eval_term(term: &OracleTerm, adj: &Adjacency, directed: bool, attrs: &Attributes) -> f64 {
    let n = adj.len();
    let base = eval_base(&term.base, adj, directed, attrs);
    let transformed = match term.transform {
        OracleTransform::Identity => base,
        OracleTransform::Sqrt => base.sqrt(),
        OracleTransform::Log => base.ln(),
        OracleTransform::Power(p) => base.powf(p),
        OracleTransform::Scale(c) => c * base,
    };
    let mult = match term.interaction {
        OracleInteraction::None => 1.0,
        OracleInteraction::SizeIndicator(k) => {
            if n == k {
                1.0
            } else {
                0.0
            }
        }
        OracleInteraction::LogInverseSize => (1.0 / n as f64).ln(),
    };
    mult * transformed
}

pub fn eval_stats(model: &OracleModel, adj: &Adjacency, directed: bool, attrs: &Attributes) -> Vec<f64> {
    model
        .terms
        .iter()
        .map(|t| eval_term(t, adj, directed, attrs))
        .collect()
}

pub fn eval_offset(model: &OracleModel, adj: &Adjacency, directed: bool, attrs: &Attributes) -> f64 {
    let mut total = 0.0;
    for o in &model.offsets {
        match o {
            OracleOffset::Term(t) => total += eval_term(t, adj, directed, attrs),
            OracleOffset::ConstraintGe(base, bound) => {
                if eval_base(base, adj, directed, attrs) < *bound as f64 {
                    return f64::NEG_INFINITY;
                }
            }
            OracleOffset::ConstraintLe(base, bound) => {
                if eval_base(base, adj, directed, attrs) > *bound as f64 {
                    return f64::NEG_INFINITY;
                }
            }
        }
    }
    total
}

/// Per-graph probabilities over the whole support, by direct evaluation of
/// the model density and one max shift on the exponent. Graphs excluded by
/// constraints get probability 0. Panics if the support exceeds 4096 graphs.
pub fn oracle_prob(
    theta: &[f64],
    model: &OracleModel,
    attrs: &Attributes,
    n: usize,
    directed: bool,
) -> Vec<f64> {
    let m = num_cells(n, directed);
    assert!(
        (1u64 << m) <= 4096,
        "oracle_prob is limited to supports of at most 4096 graphs"
    );
    let total = 1u64 << m;
    let mut exponents = Vec::with_capacity(total as usize);
    for k in 0..total {
        let adj = adjacency_from_index(k, n, directed);
        let stats = eval_stats(model, &adj, directed, attrs);
        let off = eval_offset(model, &adj, directed, attrs);
        let mut e = off;
        for (t, s) in theta.iter().zip(&stats) {
            e += t * s;
        }
        exponents.push(e);
    }
    let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents.iter().map(|e| (e - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / sum).collect()
}

/// Pooled log-likelihood of observed graphs by direct summation.
pub fn oracle_loglik_pooled(
    theta: &[f64],
    model: &OracleModel,
    networks: &[(u64, usize, bool, Attributes)],
) -> f64 {
    let mut total = 0.0;
    for (index, n, directed, attrs) in networks {
        let probs = oracle_prob(theta, model, attrs, *n, *directed);
        total += probs[*index as usize].ln();
    }
    total
}

/// Pooled exact gradient: observed minus expected statistics, by direct
/// summation over every graph.
pub fn oracle_gradient_pooled(
    theta: &[f64],
    model: &OracleModel,
    networks: &[(u64, usize, bool, Attributes)],
) -> Vec<f64> {
    let k = model.terms.len();
    let mut grad = vec![0.0; k];
    for (index, n, directed, attrs) in networks {
        let probs = oracle_prob(theta, model, attrs, *n, *directed);
        let m = num_cells(*n, *directed);
        let mut expected = vec![0.0; k];
        for g in 0..(1u64 << m) {
            let adj = adjacency_from_index(g, *n, *directed);
            let stats = eval_stats(model, &adj, *directed, attrs);
            for (e, s) in expected.iter_mut().zip(&stats) {
                *e += probs[g as usize] * s;
            }
        }
        let adj = adjacency_from_index(*index, *n, *directed);
        let obs = eval_stats(model, &adj, *directed, attrs);
        for i in 0..k {
            grad[i] += obs[i] - expected[i];
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Adjacency {
        let mut adj = vec![vec![true; n]; n];
        for (i, row) in adj.iter_mut().enumerate() {
            row[i] = false;
        }
        adj
    }

    #[test]
    fn complete_digraph_counts() {
        let adj = complete(4);
        assert_eq!(edges(&adj, true), 12.0);
        assert_eq!(mutual(&adj), 6.0);
        assert_eq!(ttriad(&adj), 24.0);
        assert_eq!(fourcycle(&adj), 24.0);
    }

    #[test]
    fn empty_graph_is_zero() {
        let adj = vec![vec![false; 4]; 4];
        assert_eq!(edges(&adj, true), 0.0);
        assert_eq!(mutual(&adj), 0.0);
        assert_eq!(ttriad(&adj), 0.0);
        assert_eq!(fourcycle(&adj), 0.0);
    }

    #[test]
    fn single_tie_nodematch() {
        let adj = adjacency_from_edges(4, true, &[(0, 1)]);
        let x = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(nodematch(&adj, true, &x), 1.0);
    }

    #[test]
    fn uniform_prob_at_zero() {
        let model = OracleModel {
            terms: vec![OracleTerm::plain(OracleBase::Edges)],
            offsets: vec![],
        };
        let probs = oracle_prob(&[0.0], &model, &Attributes::new(), 3, true);
        assert_eq!(probs.len(), 64);
        for p in &probs {
            assert!((p - 1.0 / 64.0).abs() < 1e-12);
        }
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complete_to_empty_ratio() {
        let model = OracleModel {
            terms: vec![OracleTerm::plain(OracleBase::Edges)],
            offsets: vec![],
        };
        let probs = oracle_prob(&[1.0], &model, &Attributes::new(), 3, true);
        let ratio = probs[63] / probs[0];
        assert!((ratio - 6f64.exp()).abs() / 6f64.exp() < 1e-10);
    }
}
