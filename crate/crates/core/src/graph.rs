//! Bit-encoded labeled graphs without self-ties, and exhaustive iteration of
//! their support.
//!
//! A graph on `n` nodes is stored as a bit set over its `m` off-diagonal
//! cells. The cell order is fixed (version 1) and is what makes graph indices
//! stable across runs and cache files:
//!
//! * directed: row-major over ordered pairs `(i, j)` with `i != j`, i.e.
//!   `(0,1), (0,2), .., (0,n-1), (1,0), (1,2), ..`; `m = n(n-1)`;
//! * undirected: lexicographic over pairs `i < j`, i.e.
//!   `(0,1), (0,2), .., (0,n-1), (1,2), ..`; `m = n(n-1)/2`.
//!
//! Bit `b` of the support index corresponds to cell `b`, so index `0` is the
//! empty graph and index `2^m - 1` the complete graph. Directed graphs allow
//! `n <= 6` and undirected `n <= 8`, which keeps the largest support at
//! `2^30` graphs; anything that size is only ever visited through streaming
//! iterators, never materialized.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Cell-order version stamped into cache keys and cache files.
pub const CELL_ORDER_VERSION: u32 = 1;

/// Largest supported directed graph.
pub const MAX_DIRECTED_NODES: usize = 6;
/// Largest supported undirected graph.
pub const MAX_UNDIRECTED_NODES: usize = 8;

fn check_size(n: usize, directed: bool) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let (kind, max) = if directed {
        ("directed", MAX_DIRECTED_NODES)
    } else {
        ("undirected", MAX_UNDIRECTED_NODES)
    };
    if n > max {
        return Err(Error::SizeBound { kind, n, max });
    }
    Ok(())
}

/// Number of free tie cells: `n(n-1)` directed, `n(n-1)/2` undirected.
pub fn cell_count(n: usize, directed: bool) -> usize {
    if directed {
        n * (n - 1)
    } else {
        n * (n - 1) / 2
    }
}

/// Size of the unconstrained support, `2^m`.
pub fn support_size(n: usize, directed: bool) -> Result<u64> {
    check_size(n, directed)?;
    Ok(1u64 << cell_count(n, directed))
}

/// Bit position of cell `(i, j)` in the documented cell order.
///
/// For undirected graphs the pair is normalized to `i < j` first.
pub fn cell_index(n: usize, directed: bool, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    if directed {
        // Row i holds n-1 cells; column j skips the diagonal.
        i * (n - 1) + if j > i { j - 1 } else { j }
    } else {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // Cells before row a: (n-1) + (n-2) + .. + (n-a).
        a * n - a * (a + 1) / 2 + (b - a - 1)
    }
}

/// Endpoints `(i, j)` of cell `bit`; inverse of [`cell_index`].
pub fn cell_endpoints(n: usize, directed: bool, bit: usize) -> (usize, usize) {
    if directed {
        let i = bit / (n - 1);
        let r = bit % (n - 1);
        let j = if r >= i { r + 1 } else { r };
        (i, j)
    } else {
        let mut i = 0;
        let mut b = bit;
        while b >= n - 1 - i {
            b -= n - 1 - i;
            i += 1;
        }
        (i, i + 1 + b)
    }
}

/// A small labeled graph without self-ties, encoded as a tie bit set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    n: u8,
    directed: bool,
    ties: u64,
}

impl Graph {
    /// The empty graph on `n` nodes.
    pub fn empty(n: usize, directed: bool) -> Result<Self> {
        check_size(n, directed)?;
        Ok(Graph {
            n: n as u8,
            directed,
            ties: 0,
        })
    }

    /// Builds a graph from an edge list. Undirected pairs are normalized to
    /// `i < j` and duplicates collapse to a single tie.
    pub fn from_edges(n: usize, directed: bool, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(n, directed)?;
        for &(i, j) in edges {
            if i == j {
                return Err(Error::SelfTie(i));
            }
            for index in [i, j] {
                if index >= n {
                    return Err(Error::NodeIndex { index, n });
                }
            }
            g.ties |= 1 << cell_index(n, directed, i, j);
        }
        Ok(g)
    }

    /// Decodes support index `k`: bit `b` of `k` sets cell `b`.
    pub fn from_index(k: u64, n: usize, directed: bool) -> Result<Self> {
        let size = support_size(n, directed)?;
        if k >= size {
            return Err(Error::GraphIndex { index: k, size });
        }
        Ok(Graph {
            n: n as u8,
            directed,
            ties: k,
        })
    }

    /// Encodes the graph back to its support index.
    pub fn index(&self) -> u64 {
        self.ties
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// Raw tie bit set (bit `b` = cell `b`).
    pub fn mask(&self) -> u64 {
        self.ties
    }

    pub fn cell_count(&self) -> usize {
        cell_count(self.n(), self.directed)
    }

    pub fn tie_count(&self) -> u32 {
        self.ties.count_ones()
    }

    /// Tie indicator. For undirected graphs `(i, j)` and `(j, i)` agree.
    pub fn has_tie(&self, i: usize, j: usize) -> bool {
        if i == j || i >= self.n() || j >= self.n() {
            return false;
        }
        self.ties & (1 << cell_index(self.n(), self.directed, i, j)) != 0
    }

    /// Set cells as `(i, j)` pairs, in cell order.
    pub fn ties(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n();
        let directed = self.directed;
        let mask = self.ties;
        (0..self.cell_count())
            .filter(move |b| mask & (1 << b) != 0)
            .map(move |b| cell_endpoints(n, directed, b))
    }
}

/// Streams every graph with index in `[start, end)`, in increasing order.
///
/// Disjoint ranges can be consumed from different threads; together they
/// cover the support exactly once.
pub fn enumerate_range(
    n: usize,
    directed: bool,
    start: u64,
    end: u64,
) -> Result<impl Iterator<Item = Graph>> {
    let size = support_size(n, directed)?;
    if start > end || end > size {
        return Err(Error::GraphIndex {
            index: end,
            size,
        });
    }
    Ok((start..end).map(move |k| Graph {
        n: n as u8,
        directed,
        ties: k,
    }))
}

/// Streams the full support `[0, 2^m)` in increasing index order.
pub fn enumerate_support(n: usize, directed: bool) -> Result<impl Iterator<Item = Graph>> {
    let size = support_size(n, directed)?;
    enumerate_range(n, directed, 0, size)
}

/// Named per-node numeric vectors. Categorical attributes are ingested as
/// numeric codes; matching uses exact equality of codes.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AttributeTable {
    n: usize,
    columns: BTreeMap<String, Vec<f64>>,
}

impl AttributeTable {
    pub fn new(n: usize) -> Self {
        AttributeTable {
            n,
            columns: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n {
            return Err(Error::AttributeLength {
                name,
                got: values.len(),
                expected: self.n,
            });
        }
        if self.columns.contains_key(&name) {
            return Err(Error::DuplicateAttribute(name));
        }
        self.columns.insert(name, values);
        Ok(())
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.insert(name, values)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingAttribute(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Deterministic byte serialization used for content hashing.
    pub(crate) fn hash_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        for (name, values) in &self.columns {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for v in values {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }
}

/// One observed network: a graph plus its node attributes.
#[derive(Clone, Debug)]
pub struct Network {
    pub id: String,
    pub graph: Graph,
    pub attrs: AttributeTable,
}

impl Network {
    pub fn new(id: impl Into<String>, graph: Graph, attrs: AttributeTable) -> Result<Self> {
        if attrs.n() != graph.n() {
            return Err(Error::AttributeLength {
                name: "<table>".to_string(),
                got: attrs.n(),
                expected: graph.n(),
            });
        }
        Ok(Network {
            id: id.into(),
            graph,
            attrs,
        })
    }
}

/// A sample of networks sharing one model; the unit of pooled estimation.
pub type NetworkSample = Vec<Network>;
