//! Collapsed exact supports: the weighted statistic table behind every
//! likelihood evaluation.
//!
//! A [`StatTable`] holds the distinct statistic rows `Q` of a model over the
//! constrained support, each row's multiplicity `W` (how many graphs share
//! it), and its finite offset value `O`. Graphs whose offset is `-inf` are
//! excluded entirely, never stored. Rows are keyed by the exact bit patterns
//! of the statistic vector *and* the offset value, so collapsing never merges
//! graphs with different densities; row order is lexicographic by statistic
//! vector (then offset), which makes builds deterministic regardless of how
//! the enumeration was partitioned across threads.
//!
//! # Cache file format (version 1)
//!
//! ```text
//! 8  bytes  magic "ERGXTAB1"
//! 4  bytes  u32 LE: length H of the JSON-encoded TableMeta
//! H  bytes  TableMeta as JSON
//! 8  bytes  u64 LE: row count R
//! 4  bytes  u32 LE: column count C
//! R*C*8     Q, column-major f64 LE
//! R*8       W, u64 LE
//! R*8       O, f64 LE
//! 32 bytes  SHA-256 of everything above
//! ```
//!
//! A cache entry that fails the magic, checksum, or shape checks is reported
//! as corrupt; [`TableCache`] then warns and rebuilds it.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{cell_count, support_size, AttributeTable, CELL_ORDER_VERSION};
use crate::terms::{ModelSpec, StatEvaluator};

const MAGIC: &[u8; 8] = b"ERGXTAB1";

/// Identifying metadata stored with every table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TableMeta {
    pub n: usize,
    pub directed: bool,
    pub formula: String,
    pub cell_order_version: u32,
    /// Cache key of the (n, directed, formula, attributes) configuration.
    pub key: String,
    /// Support size before constraints, `2^m`.
    pub total_graphs: u64,
    /// Graphs removed by `-inf` offsets.
    pub excluded_graphs: u64,
}

/// Collapsed support: distinct statistic rows with multiplicities and
/// offsets.
#[derive(Clone, Debug)]
pub struct StatTable {
    meta: TableMeta,
    /// Row-major `R x C` statistic matrix.
    q: Vec<f64>,
    ncols: usize,
    w: Vec<u64>,
    offsets: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

/// Build-time limits. `max_rows` caps the number of distinct rows the
/// aggregation may hold, which bounds memory for the `2^30`-graph builds.
#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    pub max_rows: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { max_rows: 1 << 22 }
    }
}

/// Stable content key for a (n, directed, model, attributes) configuration.
pub fn table_cache_key(
    n: usize,
    directed: bool,
    model: &ModelSpec,
    attrs: &AttributeTable,
) -> String {
    let mut h = Sha256::new();
    h.update(b"ergmx-table-v1");
    h.update(CELL_ORDER_VERSION.to_le_bytes());
    h.update((n as u64).to_le_bytes());
    h.update([directed as u8]);
    let formula = model.formula();
    h.update((formula.len() as u64).to_le_bytes());
    h.update(formula.as_bytes());
    h.update(attrs.hash_bytes());
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Exact-bit row key: statistic vector followed by the offset value.
fn row_key(stats: &[f64], offset: f64) -> Box<[u64]> {
    stats
        .iter()
        .map(|v| v.to_bits())
        .chain(std::iter::once(offset.to_bits()))
        .collect()
}

/// Fixed-size aggregation key (bit patterns of the statistics plus the
/// offset, zero-padded). Keeps the billion-graph streaming builds free of
/// per-graph allocations.
const KEY_WORDS: usize = 12;
pub(crate) const MAX_TABLE_TERMS: usize = KEY_WORDS - 1;
type AggKey = [u64; KEY_WORDS];

/// FNV-1a; plenty for exact-bit statistic keys and much cheaper than the
/// default hasher in the enumeration loop.
#[derive(Default)]
struct FnvHasher(u64);

impl std::hash::Hasher for FnvHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        let mut h = if self.0 == 0 { 0xcbf2_9ce4_8422_2325 } else { self.0 };
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.0 = h;
    }
}

type RowMap = HashMap<AggKey, u64, std::hash::BuildHasherDefault<FnvHasher>>;

fn agg_key(stats: &[f64], offset: f64) -> AggKey {
    let mut key = [0u64; KEY_WORDS];
    for (slot, v) in key.iter_mut().zip(stats) {
        *slot = v.to_bits();
    }
    key[stats.len()] = offset.to_bits();
    key
}

fn aggregate_range(
    ev: &StatEvaluator,
    start: u64,
    end: u64,
    max_rows: usize,
) -> Result<(RowMap, u64)> {
    let k = ev.num_terms();
    let mut stats = vec![0.0; k];
    let mut map = RowMap::default();
    let mut excluded = 0u64;
    for mask in start..end {
        let offset = ev.offset_mask(mask)?;
        if offset == f64::NEG_INFINITY {
            excluded += 1;
            continue;
        }
        ev.eval_mask_into(mask, &mut stats)?;
        *map.entry(agg_key(&stats, offset)).or_insert(0) += 1;
        if map.len() > max_rows {
            return Err(Error::TableTooLarge { max_rows });
        }
    }
    Ok((map, excluded))
}

impl StatTable {
    /// Builds the collapsed table by a streaming pass over the full support,
    /// parallel over disjoint index ranges. Directedness comes from the model.
    pub fn build(n: usize, model: &ModelSpec, attrs: &AttributeTable) -> Result<StatTable> {
        StatTable::build_with(n, model, attrs, BuildOptions::default())
    }

    pub fn build_with(
        n: usize,
        model: &ModelSpec,
        attrs: &AttributeTable,
        opts: BuildOptions,
    ) -> Result<StatTable> {
        let directed = model.directed();
        let total = support_size(n, directed)?;
        model.validate_for(attrs)?;
        if model.num_terms() > MAX_TABLE_TERMS {
            return Err(Error::Model(format!(
                "the table builder supports at most {MAX_TABLE_TERMS} terms, got {}",
                model.num_terms()
            )));
        }
        let ev = StatEvaluator::new(model, n, attrs)?;

        // Chunk the index space; each chunk aggregates locally.
        let chunks = (rayon::current_num_threads() as u64 * 8).clamp(1, total.max(1));
        let step = total.div_ceil(chunks);
        let ranges: Vec<(u64, u64)> = (0..chunks)
            .map(|c| (c * step, ((c + 1) * step).min(total)))
            .filter(|(a, b)| a < b)
            .collect();

        let partials: Vec<(RowMap, u64)> = ranges
            .par_iter()
            .map(|&(a, b)| aggregate_range(&ev, a, b, opts.max_rows))
            .collect::<Result<_>>()?;

        let mut merged = RowMap::default();
        let mut excluded = 0u64;
        for (map, ex) in partials {
            excluded += ex;
            for (key, w) in map {
                *merged.entry(key).or_insert(0) += w;
                if merged.len() > opts.max_rows {
                    return Err(Error::TableTooLarge {
                        max_rows: opts.max_rows,
                    });
                }
            }
        }
        if merged.is_empty() {
            return Err(Error::EmptySupport {
                total,
                formula: model.formula(),
                n,
            });
        }

        let k = ev.num_terms();
        let mut rows: Vec<(AggKey, u64)> = merged.into_iter().collect();
        // Canonical order: lexicographic by statistic vector, then offset.
        rows.sort_by(|(a, _), (b, _)| {
            for (x, y) in a.iter().zip(b.iter()).take(k + 1) {
                let fx = f64::from_bits(*x);
                let fy = f64::from_bits(*y);
                match fx.partial_cmp(&fy).expect("finite table values") {
                    std::cmp::Ordering::Equal => continue,
                    ord => return ord,
                }
            }
            std::cmp::Ordering::Equal
        });

        let nrows = rows.len();
        let mut q = Vec::with_capacity(nrows * k);
        let mut w = Vec::with_capacity(nrows);
        let mut offsets = Vec::with_capacity(nrows);
        for (key, weight) in &rows {
            for bits in key.iter().take(k) {
                q.push(f64::from_bits(*bits));
            }
            offsets.push(f64::from_bits(key[k]));
            w.push(*weight);
        }
        let bounds = column_bounds(&q, nrows, k);

        Ok(StatTable {
            meta: TableMeta {
                n,
                directed,
                formula: model.formula(),
                cell_order_version: CELL_ORDER_VERSION,
                key: table_cache_key(n, directed, model, attrs),
                total_graphs: total,
                excluded_graphs: excluded,
            },
            q,
            ncols: k,
            w,
            offsets,
            bounds,
        })
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn num_rows(&self) -> usize {
        self.w.len()
    }

    pub fn num_terms(&self) -> usize {
        self.ncols
    }

    /// Statistic row `r`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.q[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn weights(&self) -> &[u64] {
        &self.w
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Sum of multiplicities: `2^m` minus the constrained-out graphs.
    pub fn weight_total(&self) -> u64 {
        self.w.iter().sum()
    }

    /// Exact per-column (min, max) over rows.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Number of free dyad cells of the underlying graphs.
    pub fn num_dyads(&self) -> u64 {
        cell_count(self.meta.n, self.meta.directed) as u64
    }

    /// Index of the row matching (stats, offset) exactly, if any.
    pub fn find_row(&self, stats: &[f64], offset: f64) -> Option<usize> {
        let key = row_key(stats, offset);
        (0..self.num_rows()).find(|&r| {
            row_key(self.row(r), self.offsets[r]).as_ref() == key.as_ref()
        })
    }

    /// Exact-bit lookup map from (stats, offset) to row index.
    pub fn row_lookup(&self) -> HashMap<Box<[u64]>, usize> {
        (0..self.num_rows())
            .map(|r| (row_key(self.row(r), self.offsets[r]), r))
            .collect()
    }

    // ---- cache file IO ----

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&(self.num_rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.ncols as u32).to_le_bytes());
        // Column-major Q.
        for c in 0..self.ncols {
            for r in 0..self.num_rows() {
                buf.extend_from_slice(&self.q[r * self.ncols + c].to_le_bytes());
            }
        }
        for w in &self.w {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        for o in &self.offsets {
            buf.extend_from_slice(&o.to_le_bytes());
        }
        let digest = Sha256::digest(&buf);
        out.write_all(&buf)?;
        out.write_all(&digest)?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<StatTable> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < MAGIC.len() + 32 || &bytes[..8] != MAGIC {
            return Err(Error::CacheCorrupt("bad magic".to_string()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::CacheCorrupt("checksum mismatch".to_string()));
        }
        let mut at = 8usize;
        let take = |at: &mut usize, len: usize| -> Result<&[u8]> {
            if *at + len > body.len() {
                return Err(Error::CacheCorrupt("truncated".to_string()));
            }
            let s = &body[*at..*at + len];
            *at += len;
            Ok(s)
        };
        let meta_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let meta: TableMeta = serde_json::from_slice(take(&mut at, meta_len)?)
            .map_err(|e| Error::CacheCorrupt(format!("bad meta: {e}")))?;
        let nrows = u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize;
        let ncols = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let mut q = vec![0.0; nrows * ncols];
        for c in 0..ncols {
            for r in 0..nrows {
                q[r * ncols + c] =
                    f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
            }
        }
        let mut w = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            w.push(u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        let mut offsets = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            offsets.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        if at != body.len() {
            return Err(Error::CacheCorrupt("trailing bytes".to_string()));
        }
        let bounds = column_bounds(&q, nrows, ncols);
        Ok(StatTable {
            meta,
            q,
            ncols,
            w,
            offsets,
            bounds,
        })
    }
}

fn column_bounds(q: &[f64], nrows: usize, ncols: usize) -> Vec<(f64, f64)> {
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); ncols];
    for r in 0..nrows {
        for c in 0..ncols {
            let v = q[r * ncols + c];
            if v < bounds[c].0 {
                bounds[c].0 = v;
            }
            if v > bounds[c].1 {
                bounds[c].1 = v;
            }
        }
    }
    bounds
}

/// Exact per-column extrema of a table's statistic matrix.
pub fn table_bounds(table: &StatTable) -> &[(f64, f64)] {
    table.bounds()
}

/// In-memory table cache with optional on-disk persistence.
///
/// Disk entries live under `<dir>/<key>.ergxtab`; corrupt entries are
/// ignored with a warning on stderr and rebuilt.
pub struct TableCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, Arc<StatTable>>>,
    opts: BuildOptions,
}

impl TableCache {
    pub fn memory_only() -> Self {
        TableCache {
            dir: None,
            mem: Mutex::new(HashMap::new()),
            opts: BuildOptions::default(),
        }
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(TableCache {
            dir: Some(dir),
            mem: Mutex::new(HashMap::new()),
            opts: BuildOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: BuildOptions) -> Self {
        self.opts = opts;
        self
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.ergxtab")))
    }

    /// Returns the cached table for the configuration, building (and
    /// persisting) it on a miss.
    pub fn get_or_build(
        &self,
        n: usize,
        model: &ModelSpec,
        attrs: &AttributeTable,
    ) -> Result<Arc<StatTable>> {
        let key = table_cache_key(n, model.directed(), model, attrs);
        if let Some(hit) = self.mem.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        if let Some(path) = self.path_for(&key) {
            if path.exists() {
                match std::fs::File::open(&path).map_err(Error::from).and_then(StatTable::read_from)
                {
                    Ok(table) if table.meta.key == key => {
                        let table = Arc::new(table);
                        self.mem
                            .lock()
                            .unwrap()
                            .insert(key.clone(), Arc::clone(&table));
                        return Ok(table);
                    }
                    Ok(_) => {
                        eprintln!(
                            "warning: cache entry {} belongs to a different configuration; rebuilding",
                            path.display()
                        );
                    }
                    Err(e) => {
                        eprintln!(
                            "warning: ignoring corrupt cache entry {}: {e}",
                            path.display()
                        );
                    }
                }
            }
        }
        let table = Arc::new(StatTable::build_with(n, model, attrs, self.opts)?);
        if let Some(path) = self.path_for(&key) {
            let tmp = path.with_extension("tmp");
            let mut f = std::fs::File::create(&tmp)?;
            table.write_to(&mut f)?;
            std::fs::rename(&tmp, &path)?;
        }
        self.mem.lock().unwrap().insert(key, Arc::clone(&table));
        Ok(table)
    }
}
