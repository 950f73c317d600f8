//! Sufficient statistics, transforms, interactions, and offsets evaluated on
//! a single graph with node attributes.
//!
//! Counting conventions (version 1, also stamped into result metadata):
//!
//! * `edges`      = number of ties, i.e. set cells.
//! * `mutual`     = number of unordered dyads `{i, j}` with ties both ways
//!   (equals the tie count on undirected graphs).
//! * `ttriad`     = number of ordered distinct triples `(i, j, k)` with
//!   `y_ij = y_jk = y_ik = 1` (24 on the complete 4-node digraph).
//! * `nodematch(a)` = sum over tie cells of `1{X_i = X_j}`.
//! * `nodeicov(a)`  = sum over ordered tied pairs `(i, j)` of `X_j`
//!   (receiver); `nodeocov(a)` uses `X_i` (sender). On undirected graphs the
//!   symmetric tie indicator makes both equal `sum over ties of X_i + X_j`.
//! * `fourcycle`  = number of ordered distinct 4-tuples `(i, j, k, l)` with
//!   `y_ij = y_jk = y_kl = y_li = 1`.
//!
//! Transforms apply to the base count of each graph; interaction multipliers
//! (`1{n = k}` and `log(1/n)`) apply after the transform. A constraint offset
//! contributes `-inf` when its predicate excludes the graph and `0`
//! otherwise; term offsets contribute their statistic value with a fixed
//! coefficient of 1.

use crate::error::{Error, Result};
use crate::graph::{cell_endpoints, AttributeTable, Graph};

/// A base sufficient statistic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BaseTerm {
    Edges,
    Mutual,
    Ttriad,
    Fourcycle,
    Nodematch(String),
    Nodeicov(String),
    Nodeocov(String),
}

impl BaseTerm {
    pub fn name(&self) -> String {
        match self {
            BaseTerm::Edges => "edges".to_string(),
            BaseTerm::Mutual => "mutual".to_string(),
            BaseTerm::Ttriad => "ttriad".to_string(),
            BaseTerm::Fourcycle => "fourcycle".to_string(),
            BaseTerm::Nodematch(a) => format!("nodematch({a})"),
            BaseTerm::Nodeicov(a) => format!("nodeicov({a})"),
            BaseTerm::Nodeocov(a) => format!("nodeocov({a})"),
        }
    }

    pub fn attribute(&self) -> Option<&str> {
        match self {
            BaseTerm::Nodematch(a) | BaseTerm::Nodeicov(a) | BaseTerm::Nodeocov(a) => Some(a),
            _ => None,
        }
    }
}

/// A per-graph transform of the base count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    Sqrt,
    Log,
    Power(f64),
    Scale(f64),
}

impl Transform {
    fn apply(self, term: &str, v: f64) -> Result<f64> {
        let out = match self {
            Transform::Sqrt => {
                if v < 0.0 {
                    return Err(Error::TermDomain {
                        term: term.to_string(),
                        msg: format!("sqrt of negative value {v}"),
                    });
                }
                v.sqrt()
            }
            Transform::Log => {
                if v <= 0.0 {
                    return Err(Error::TermDomain {
                        term: term.to_string(),
                        msg: format!("log of non-positive value {v}"),
                    });
                }
                v.ln()
            }
            Transform::Power(p) => v.powf(p),
            Transform::Scale(c) => c * v,
        };
        if out.is_nan() {
            return Err(Error::TermDomain {
                term: term.to_string(),
                msg: format!("transform produced NaN at value {v}"),
            });
        }
        Ok(out)
    }
}

/// A graph-level multiplier applied after the transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Interaction {
    /// `1{n = k}`.
    SizeIndicator(usize),
    /// `log(1/n)`, the mean-degree-preserving size offset.
    LogInverseSize,
}

impl Interaction {
    fn multiplier(self, n: usize) -> f64 {
        match self {
            Interaction::SizeIndicator(k) => {
                if n == k {
                    1.0
                } else {
                    0.0
                }
            }
            Interaction::LogInverseSize => -(n as f64).ln(),
        }
    }
}

/// One model term: base statistic, optional transform, optional interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct TermSpec {
    pub base: BaseTerm,
    pub transform: Option<Transform>,
    pub interaction: Option<Interaction>,
}

impl TermSpec {
    pub fn base(base: BaseTerm) -> Self {
        TermSpec {
            base,
            transform: None,
            interaction: None,
        }
    }

    /// Canonical display name, unique within a model.
    pub fn name(&self) -> String {
        let mut s = match self.transform {
            None => self.base.name(),
            Some(Transform::Sqrt) => format!("sqrt({})", self.base.name()),
            Some(Transform::Log) => format!("log({})", self.base.name()),
            Some(Transform::Power(p)) => format!("power({}, {})", self.base.name(), fmt_num(p)),
            Some(Transform::Scale(c)) => format!("scale({}, {})", self.base.name(), fmt_num(c)),
        };
        match self.interaction {
            None => {}
            Some(Interaction::SizeIndicator(k)) => s = format!("{s} * I(n == {k})"),
            Some(Interaction::LogInverseSize) => s = format!("{s} * log(1/n)"),
        }
        s
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Comparison used by support constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Comparison {
    Ge,
    Le,
}

/// A support constraint: graphs failing `base cmp bound` get a `-inf` offset.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSpec {
    pub base: BaseTerm,
    pub cmp: Comparison,
    pub bound: i64,
}

impl ConstraintSpec {
    pub fn name(&self) -> String {
        let op = match self.cmp {
            Comparison::Ge => ">=",
            Comparison::Le => "<=",
        };
        format!("constraint({} {} {})", self.base.name(), op, self.bound)
    }

    fn satisfied(&self, value: f64) -> bool {
        match self.cmp {
            Comparison::Ge => value >= self.bound as f64,
            Comparison::Le => value <= self.bound as f64,
        }
    }
}

/// A model component with fixed coefficient 1 (term offset) or a support
/// constraint with value in `{0, -inf}`.
#[derive(Clone, Debug, PartialEq)]
pub enum OffsetSpec {
    Term(TermSpec),
    Constraint(ConstraintSpec),
}

impl OffsetSpec {
    pub fn name(&self) -> String {
        match self {
            OffsetSpec::Term(t) => format!("offset({})", t.name()),
            OffsetSpec::Constraint(c) => c.name(),
        }
    }
}

/// An ordered list of free terms plus offsets; the parameter vector indexes
/// the free terms in order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    terms: Vec<TermSpec>,
    offsets: Vec<OffsetSpec>,
    directed: bool,
}

impl ModelSpec {
    pub fn new(terms: Vec<TermSpec>, offsets: Vec<OffsetSpec>, directed: bool) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Model("a model needs at least one term".to_string()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &terms {
            if !seen.insert(t.name()) {
                return Err(Error::Model(format!("duplicate term '{}'", t.name())));
            }
        }
        Ok(ModelSpec {
            terms,
            offsets,
            directed,
        })
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    pub fn offsets(&self) -> &[OffsetSpec] {
        &self.offsets
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(TermSpec::name).collect()
    }

    /// Canonical formula text; `parse_formula(formula(), directed)` returns a
    /// structurally equal model.
    pub fn formula(&self) -> String {
        crate::formula::print_formula(self)
    }

    /// Checks every referenced attribute against `attrs`.
    pub fn validate_for(&self, attrs: &AttributeTable) -> Result<()> {
        let term_bases = self.terms.iter().map(|t| &t.base);
        let offset_bases = self.offsets.iter().map(|o| match o {
            OffsetSpec::Term(t) => &t.base,
            OffsetSpec::Constraint(c) => &c.base,
        });
        for base in term_bases.chain(offset_bases) {
            if let Some(a) = base.attribute() {
                attrs.get(a)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Per-base evaluation plan, precomputed for one (n, directed, attrs).
enum BasePlan {
    Edges,
    /// Bit pairs of the two cells of each dyad (directed only).
    Mutual(Vec<(u8, u8)>),
    Ttriad,
    Fourcycle,
    /// popcount(mask & cell_mask): nodematch.
    CellMask(u64),
    /// Sum of per-cell weights over set cells: nodeicov / nodeocov.
    CellWeights(Vec<f64>),
}

/// Out/in adjacency rows rebuilt per graph; undirected graphs store the
/// symmetric adjacency in both.
#[derive(Default)]
struct Rows {
    out: [u16; 8],
    inn: [u16; 8],
}

fn build_rows(mask: u64, cells: &[(u8, u8)], directed: bool, rows: &mut Rows) {
    rows.out = [0; 8];
    rows.inn = [0; 8];
    let mut m = mask;
    while m != 0 {
        let b = m.trailing_zeros() as usize;
        m &= m - 1;
        let (i, j) = cells[b];
        rows.out[i as usize] |= 1 << j;
        rows.inn[j as usize] |= 1 << i;
        if !directed {
            rows.out[j as usize] |= 1 << i;
            rows.inn[i as usize] |= 1 << j;
        }
    }
}

struct PlannedTerm {
    plan: BasePlan,
    name: String,
    transform: Option<Transform>,
    multiplier: f64,
}

enum PlannedOffset {
    Term(PlannedTerm),
    Constraint {
        plan: BasePlan,
        spec: ConstraintSpec,
    },
}

/// Evaluates a model's statistic vector and offset on raw tie masks.
///
/// Binding the evaluator to one (model, n, directed, attrs) hoists the
/// attribute lookups and per-cell tables out of the enumeration loop.
pub struct StatEvaluator {
    n: usize,
    directed: bool,
    cells: Vec<(u8, u8)>,
    terms: Vec<PlannedTerm>,
    offsets: Vec<PlannedOffset>,
    needs_rows: bool,
}

fn plan_base(
    base: &BaseTerm,
    n: usize,
    directed: bool,
    cells: &[(u8, u8)],
    attrs: &AttributeTable,
) -> Result<BasePlan> {
    Ok(match base {
        BaseTerm::Edges => BasePlan::Edges,
        BaseTerm::Mutual if !directed => BasePlan::Edges,
        BaseTerm::Mutual => {
            let mut dyads = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    dyads.push((
                        crate::graph::cell_index(n, true, i, j) as u8,
                        crate::graph::cell_index(n, true, j, i) as u8,
                    ));
                }
            }
            BasePlan::Mutual(dyads)
        }
        BaseTerm::Ttriad => BasePlan::Ttriad,
        BaseTerm::Fourcycle => BasePlan::Fourcycle,
        BaseTerm::Nodematch(a) => {
            let x = attrs.get(a)?;
            let mut mask = 0u64;
            for (b, &(i, j)) in cells.iter().enumerate() {
                if x[i as usize] == x[j as usize] {
                    mask |= 1 << b;
                }
            }
            BasePlan::CellMask(mask)
        }
        BaseTerm::Nodeicov(a) => {
            let x = attrs.get(a)?;
            let w = cells
                .iter()
                .map(|&(i, j)| {
                    if directed {
                        x[j as usize]
                    } else {
                        x[i as usize] + x[j as usize]
                    }
                })
                .collect();
            BasePlan::CellWeights(w)
        }
        BaseTerm::Nodeocov(a) => {
            let x = attrs.get(a)?;
            let w = cells
                .iter()
                .map(|&(i, j)| {
                    if directed {
                        x[i as usize]
                    } else {
                        x[i as usize] + x[j as usize]
                    }
                })
                .collect();
            BasePlan::CellWeights(w)
        }
    })
}

impl BasePlan {
    fn needs_rows(&self) -> bool {
        matches!(self, BasePlan::Ttriad | BasePlan::Fourcycle)
    }
}

fn eval_base(
    plan: &BasePlan,
    mask: u64,
    rows: &Rows,
    cells: &[(u8, u8)],
    n: usize,
    directed: bool,
) -> f64 {
    match plan {
        BasePlan::Edges => mask.count_ones() as f64,
        BasePlan::Mutual(dyads) => {
            let mut c = 0u32;
            for &(a, b) in dyads {
                c += ((mask >> a) & (mask >> b) & 1) as u32;
            }
            c as f64
        }
        BasePlan::Ttriad => {
            // Ordered triples (i,j,k): for each tied cell (i,j), count common
            // targets of i and j. Undirected cells cover i<j only, so both
            // orientations double the count.
            let mut c = 0u32;
            let mut m = mask;
            while m != 0 {
                let b = m.trailing_zeros() as usize;
                m &= m - 1;
                let (i, j) = cells[b];
                c += (rows.out[i as usize] & rows.out[j as usize]).count_ones();
            }
            if directed {
                c as f64
            } else {
                2.0 * c as f64
            }
        }
        BasePlan::Fourcycle => {
            // Ordered 4-tuples (i,j,k,l): two-step path counts c_ik minus the
            // j = l degenerate walks d_ik.
            let mut c = 0u64;
            for i in 0..n {
                for k in 0..n {
                    if i == k {
                        continue;
                    }
                    let c_ik = (rows.out[i] & rows.inn[k]).count_ones() as u64;
                    let c_ki = (rows.out[k] & rows.inn[i]).count_ones() as u64;
                    let d_ik =
                        (rows.out[i] & rows.inn[k] & rows.inn[i] & rows.out[k]).count_ones() as u64;
                    c += c_ik * c_ki - d_ik;
                }
            }
            c as f64
        }
        BasePlan::CellMask(cm) => (mask & cm).count_ones() as f64,
        BasePlan::CellWeights(w) => {
            let mut s = 0.0;
            let mut m = mask;
            while m != 0 {
                let b = m.trailing_zeros() as usize;
                m &= m - 1;
                s += w[b];
            }
            s
        }
    }
}

impl StatEvaluator {
    pub fn new(model: &ModelSpec, n: usize, attrs: &AttributeTable) -> Result<Self> {
        let directed = model.directed();
        crate::graph::support_size(n, directed)?;
        if attrs.n() != n && !attrs.is_empty() {
            return Err(Error::AttributeLength {
                name: "<table>".to_string(),
                got: attrs.n(),
                expected: n,
            });
        }
        let m = crate::graph::cell_count(n, directed);
        let cells: Vec<(u8, u8)> = (0..m)
            .map(|b| {
                let (i, j) = cell_endpoints(n, directed, b);
                (i as u8, j as u8)
            })
            .collect();

        let mut terms = Vec::with_capacity(model.num_terms());
        for t in model.terms() {
            terms.push(PlannedTerm {
                plan: plan_base(&t.base, n, directed, &cells, attrs)?,
                name: t.name(),
                transform: t.transform,
                multiplier: t.interaction.map_or(1.0, |i| i.multiplier(n)),
            });
        }
        let mut offsets = Vec::with_capacity(model.offsets().len());
        for o in model.offsets() {
            offsets.push(match o {
                OffsetSpec::Term(t) => PlannedOffset::Term(PlannedTerm {
                    plan: plan_base(&t.base, n, directed, &cells, attrs)?,
                    name: t.name(),
                    transform: t.transform,
                    multiplier: t.interaction.map_or(1.0, |i| i.multiplier(n)),
                }),
                OffsetSpec::Constraint(c) => PlannedOffset::Constraint {
                    plan: plan_base(&c.base, n, directed, &cells, attrs)?,
                    spec: c.clone(),
                },
            });
        }
        let needs_rows = terms.iter().any(|t| t.plan.needs_rows())
            || offsets.iter().any(|o| match o {
                PlannedOffset::Term(t) => t.plan.needs_rows(),
                PlannedOffset::Constraint { plan, .. } => plan.needs_rows(),
            });
        Ok(StatEvaluator {
            n,
            directed,
            cells,
            terms,
            offsets,
            needs_rows,
        })
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn eval_planned(&self, t: &PlannedTerm, mask: u64, rows: &Rows) -> Result<f64> {
        let base = eval_base(&t.plan, mask, rows, &self.cells, self.n, self.directed);
        let v = match t.transform {
            None => base,
            Some(tr) => tr.apply(&t.name, base)?,
        };
        Ok(t.multiplier * v)
    }

    /// Statistic vector for a tie mask; `out.len()` must equal `num_terms()`.
    pub fn eval_mask_into(&self, mask: u64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.terms.len());
        let mut rows = Rows::default();
        if self.needs_rows {
            build_rows(mask, &self.cells, self.directed, &mut rows);
        }
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = self.eval_planned(t, mask, &rows)?;
        }
        Ok(())
    }

    /// Total offset for a tie mask: finite sum, or `-inf` when a constraint
    /// excludes the graph.
    pub fn offset_mask(&self, mask: u64) -> Result<f64> {
        if self.offsets.is_empty() {
            return Ok(0.0);
        }
        let mut rows = Rows::default();
        if self.needs_rows {
            build_rows(mask, &self.cells, self.directed, &mut rows);
        }
        let mut total = 0.0;
        for o in &self.offsets {
            match o {
                PlannedOffset::Term(t) => total += self.eval_planned(t, mask, &rows)?,
                PlannedOffset::Constraint { plan, spec } => {
                    let v = eval_base(plan, mask, &rows, &self.cells, self.n, self.directed);
                    if !spec.satisfied(v) {
                        return Ok(f64::NEG_INFINITY);
                    }
                }
            }
        }
        Ok(total)
    }
}

/// Evaluates one term on a graph.
pub fn eval_term(term: &TermSpec, g: &Graph, attrs: &AttributeTable) -> Result<f64> {
    let model = ModelSpec::new(vec![term.clone()], vec![], g.directed())?;
    let ev = StatEvaluator::new(&model, g.n(), attrs)?;
    let mut out = [0.0];
    ev.eval_mask_into(g.mask(), &mut out)?;
    Ok(out[0])
}

/// Evaluates the full statistic vector of a model on a graph.
pub fn eval_stats(model: &ModelSpec, g: &Graph, attrs: &AttributeTable) -> Result<Vec<f64>> {
    let ev = StatEvaluator::new(model, g.n(), attrs)?;
    let mut out = vec![0.0; model.num_terms()];
    ev.eval_mask_into(g.mask(), &mut out)?;
    Ok(out)
}

/// Evaluates the model's total offset on a graph (may be `-inf`).
pub fn eval_offset(model: &ModelSpec, g: &Graph, attrs: &AttributeTable) -> Result<f64> {
    let ev = StatEvaluator::new(model, g.n(), attrs)?;
    ev.offset_mask(g.mask())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn complete(n: usize, directed: bool) -> Graph {
        let m = crate::graph::cell_count(n, directed);
        Graph::from_index((1u64 << m) - 1, n, directed).unwrap()
    }

    fn term(base: BaseTerm) -> TermSpec {
        TermSpec::base(base)
    }

    #[test]
    fn base_counts_on_complete_digraph() {
        let g = complete(4, true);
        let attrs = AttributeTable::new(4);
        assert_eq!(eval_term(&term(BaseTerm::Edges), &g, &attrs).unwrap(), 12.0);
        assert_eq!(eval_term(&term(BaseTerm::Mutual), &g, &attrs).unwrap(), 6.0);
        // Frozen from the ordered-triple brute force in the oracle tests.
        assert_eq!(eval_term(&term(BaseTerm::Ttriad), &g, &attrs).unwrap(), 24.0);
        assert_eq!(
            eval_term(&term(BaseTerm::Fourcycle), &g, &attrs).unwrap(),
            24.0
        );
    }

    #[test]
    fn nodematch_on_complete_digraph() {
        let g = complete(4, true);
        let attrs = AttributeTable::new(4)
            .with_column("gender", vec![0.0, 0.0, 1.0, 1.0])
            .unwrap();
        assert_eq!(
            eval_term(&term(BaseTerm::Nodematch("gender".into())), &g, &attrs).unwrap(),
            4.0
        );
    }

    #[test]
    fn empty_graph_is_zero_everywhere() {
        let g = Graph::empty(4, true).unwrap();
        let attrs = AttributeTable::new(4)
            .with_column("x", vec![1.0, 2.0, 3.0, 4.0])
            .unwrap();
        for base in [
            BaseTerm::Edges,
            BaseTerm::Mutual,
            BaseTerm::Ttriad,
            BaseTerm::Fourcycle,
            BaseTerm::Nodematch("x".into()),
            BaseTerm::Nodeicov("x".into()),
            BaseTerm::Nodeocov("x".into()),
        ] {
            assert_eq!(eval_term(&term(base), &g, &attrs).unwrap(), 0.0);
        }
    }

    #[test]
    fn icov_ocov_agree_on_mutual_only_digraph() {
        let g = Graph::from_edges(4, true, &[(0, 1), (1, 0), (2, 3), (3, 2)]).unwrap();
        let attrs = AttributeTable::new(4)
            .with_column("x", vec![1.0, 5.0, -2.0, 0.5])
            .unwrap();
        let icov = eval_term(&term(BaseTerm::Nodeicov("x".into())), &g, &attrs).unwrap();
        let ocov = eval_term(&term(BaseTerm::Nodeocov("x".into())), &g, &attrs).unwrap();
        assert_eq!(icov, ocov);
    }

    #[test]
    fn eval_stats_with_interactions() {
        // (edges, ttriad, edges * I(n == 5)) on an n=4 graph with 6 ties and
        // exactly two transitive triples: (0,1,2) and (0,1,3).
        let g = Graph::from_edges(
            4,
            true,
            &[(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 0)],
        )
        .unwrap();
        let attrs = AttributeTable::new(4);
        let model = ModelSpec::new(
            vec![
                term(BaseTerm::Edges),
                term(BaseTerm::Ttriad),
                TermSpec {
                    base: BaseTerm::Edges,
                    transform: None,
                    interaction: Some(Interaction::SizeIndicator(5)),
                },
            ],
            vec![],
            true,
        )
        .unwrap();
        let s = eval_stats(&model, &g, &attrs).unwrap();
        assert_eq!(s[0], 6.0);
        assert_eq!(s[1], 2.0);
        assert_eq!(s[2], 0.0);

        // Indicator switches on at n = 5.
        let g5 = Graph::from_edges(5, true, &[(0, 1), (1, 2)]).unwrap();
        let s5 = eval_stats(&model, &g5, &AttributeTable::new(5)).unwrap();
        assert_eq!(s5[2], 2.0);
    }

    #[test]
    fn sqrt_transform() {
        let g = Graph::from_edges(4, true, &[(0, 1), (1, 0), (2, 3)]).unwrap();
        let attrs = AttributeTable::new(4)
            .with_column("g", vec![1.0, 1.0, 2.0, 2.0])
            .unwrap();
        let model = ModelSpec::new(
            vec![
                term(BaseTerm::Nodematch("g".into())),
                TermSpec {
                    base: BaseTerm::Nodematch("g".into()),
                    transform: Some(Transform::Sqrt),
                    interaction: None,
                },
            ],
            vec![],
            true,
        )
        .unwrap();
        let s = eval_stats(&model, &g, &attrs).unwrap();
        assert_eq!(s[0], 3.0);
        assert!((s[1] - 3.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn log_inverse_size_offset_values() {
        // n=4 with 4 ties: 4 * log(1/4) = -5.545...; 10 ties: -13.8629...
        let attrs = AttributeTable::new(4);
        let spec = TermSpec {
            base: BaseTerm::Edges,
            transform: None,
            interaction: Some(Interaction::LogInverseSize),
        };
        let g4 = Graph::from_index(0b1111, 4, true).unwrap();
        assert!((eval_term(&spec, &g4, &attrs).unwrap() - 4.0 * (0.25f64).ln()).abs() < 1e-12);
        assert!((eval_term(&spec, &g4, &attrs).unwrap() + 5.545177444479562).abs() < 1e-9);

        let g10 = Graph::from_index(0b1111111111, 4, true).unwrap();
        let model = ModelSpec::new(
            vec![term(BaseTerm::Edges)],
            vec![OffsetSpec::Term(spec)],
            true,
        )
        .unwrap();
        let off = eval_offset(&model, &g10, &attrs).unwrap();
        assert!((off + 13.862943611198906).abs() < 1e-9);
    }

    #[test]
    fn constraint_offsets() {
        let attrs = AttributeTable::new(4);
        let model = ModelSpec::new(
            vec![term(BaseTerm::Edges)],
            vec![OffsetSpec::Constraint(ConstraintSpec {
                base: BaseTerm::Edges,
                cmp: Comparison::Ge,
                bound: 5,
            })],
            true,
        )
        .unwrap();
        let sparse = Graph::from_index(0b1111, 4, true).unwrap();
        assert_eq!(
            eval_offset(&model, &sparse, &attrs).unwrap(),
            f64::NEG_INFINITY
        );
        let dense = Graph::from_index(0b1111111, 4, true).unwrap();
        assert_eq!(eval_offset(&model, &dense, &attrs).unwrap(), 0.0);
    }

    #[test]
    fn error_paths() {
        let g = Graph::empty(3, true).unwrap();
        let attrs = AttributeTable::new(3);
        let missing = eval_term(&term(BaseTerm::Nodematch("gender".into())), &g, &attrs);
        assert!(matches!(missing, Err(Error::MissingAttribute(a)) if a == "gender"));

        let neg = TermSpec {
            base: BaseTerm::Nodeicov("x".into()),
            transform: Some(Transform::Sqrt),
            interaction: None,
        };
        let attrs = AttributeTable::new(3)
            .with_column("x", vec![-1.0, -1.0, -1.0])
            .unwrap();
        let g = Graph::from_edges(3, true, &[(0, 1)]).unwrap();
        assert!(matches!(
            eval_term(&neg, &g, &attrs),
            Err(Error::TermDomain { .. })
        ));
    }

    #[test]
    fn model_validation() {
        assert!(ModelSpec::new(vec![], vec![], true).is_err());
        let dup = ModelSpec::new(
            vec![term(BaseTerm::Edges), term(BaseTerm::Edges)],
            vec![],
            true,
        );
        assert!(matches!(dup, Err(Error::Model(_))));
    }

    #[test]
    fn undirected_conventions() {
        // Triangle on 3 nodes, undirected.
        let g = Graph::from_edges(3, false, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let attrs = AttributeTable::new(3);
        assert_eq!(eval_term(&term(BaseTerm::Edges), &g, &attrs).unwrap(), 3.0);
        // Symmetric tie indicator: 6 ordered triples per triangle.
        assert_eq!(eval_term(&term(BaseTerm::Ttriad), &g, &attrs).unwrap(), 6.0);
        assert_eq!(eval_term(&term(BaseTerm::Mutual), &g, &attrs).unwrap(), 3.0);

        // Undirected 4-cycle: 8 ordered 4-tuples.
        let c4 = Graph::from_edges(4, false, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(
            eval_term(&term(BaseTerm::Fourcycle), &c4, &AttributeTable::new(4)).unwrap(),
            8.0
        );
    }
}
