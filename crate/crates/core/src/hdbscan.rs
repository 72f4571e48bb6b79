//! Density clustering over KIES distances (`1 - KIES`) with a per-row sorted
//! neighbor index, parallel neighborhood queries and a deterministic
//! union-find merge.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::union_find::DisjointSet;

/// Entries may leave `[0, 1]` by this much before being rejected; within it
/// they are clipped.
pub const CLIP_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_EPS_DETECT: f64 = 0.69;
pub const DEFAULT_EPS_EVOLVE: f64 = 0.80;
pub const NOISE: i64 = -1;

/// Symmetric distances in `[0, 1]` with zero diagonal. Entries not stored
/// are at distance 1. Each row keeps its stored entries sorted by distance
/// (for range queries) and by column (for lookups).
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    by_dist: Vec<Vec<(f64, u32)>>,
    by_col: Vec<Vec<(u32, f64)>>,
}

fn clip(row: usize, col: usize, value: f64) -> Result<f64> {
    if !(-CLIP_TOLERANCE..=1.0 + CLIP_TOLERANCE).contains(&value) {
        return Err(Error::DistanceRange { row, col, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

impl DistanceMatrix {
    fn from_rows(n: usize, by_col: Vec<Vec<(u32, f64)>>) -> Self {
        let by_dist = by_col
            .par_iter()
            .map(|row| {
                let mut r: Vec<(f64, u32)> = row.iter().map(|&(c, d)| (d, c)).collect();
                r.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                r
            })
            .collect();
        DistanceMatrix { n, by_dist, by_col }
    }

    /// From a dense matrix of distances. The diagonal is forced to 0.
    pub fn from_dense(d: &Array2<f64>) -> Result<Self> {
        Self::from_dense_map(d, |v| v)
    }

    /// `1 - K` for a dense KIES matrix.
    pub fn from_kies_dense(k: &Array2<f64>) -> Result<Self> {
        Self::from_dense_map(k, |v| 1.0 - v)
    }

    fn from_dense_map(m: &Array2<f64>, f: impl Fn(f64) -> f64 + Sync) -> Result<Self> {
        let (n, cols) = m.dim();
        if n != cols {
            return Err(Error::Dimension(format!("distance matrix is {n}x{cols}")));
        }
        let by_col = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::new();
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d = clip(i, j, f(m[[i, j]]))?;
                    let back = clip(j, i, f(m[[j, i]]))?;
                    if (d - back).abs() > CLIP_TOLERANCE {
                        return Err(Error::Dimension(format!("asymmetric distances at ({i}, {j})")));
                    }
                    if d < 1.0 {
                        row.push((j as u32, d));
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_rows(n, by_col))
    }

    /// `1 - K` for a sparse KIES matrix; absent entries are distance 1.
    pub fn from_kies_sparse(k: &CsrMatrix<f64>) -> Result<Self> {
        if k.rows() != k.cols() {
            return Err(Error::Dimension(format!("KIES matrix is {}x{}", k.rows(), k.cols())));
        }
        if !k.is_symmetric() {
            return Err(Error::Dimension("KIES matrix is not symmetric".into()));
        }
        Self::from_triples(k.rows(), k.iter().map(|(i, j, v)| (i, j, 1.0 - v)))
    }

    /// From `(i, j, distance)` entries; each pair is mirrored, the diagonal
    /// ignored, and a repeated pair keeps its last value.
    pub fn from_triples(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut rows: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); n];
        for (i, j, d) in entries {
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            let d = clip(i, j, d)?;
            if i != j {
                rows[i].insert(j as u32, d);
                rows[j].insert(i as u32, d);
            }
        }
        let by_col = rows
            .into_iter()
            .map(|r| r.into_iter().filter(|&(_, d)| d < 1.0).collect())
            .collect();
        Ok(Self::from_rows(n, by_col))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of stored (below 1) off-diagonal entries, both orientations.
    pub fn stored(&self) -> usize {
        self.by_col.iter().map(Vec::len).sum()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let row = &self.by_col[i];
        match row.binary_search_by_key(&(j as u32), |&(c, _)| c) {
            Ok(p) => row[p].1,
            Err(_) => 1.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.distance(i, j))
    }

    /// Indices `j != i` with `d(i, j) <= eps`, ascending.
    pub fn get_neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        if eps >= 1.0 {
            return (0..self.n).filter(|&j| j != i).collect();
        }
        let row = &self.by_dist[i];
        let end = row.partition_point(|&(d, _)| d <= eps);
        let mut out: Vec<usize> = row[..end].iter().map(|&(_, c)| c as usize).collect();
        out.sort_unstable();
        out
    }

    /// Text form: a first line with `n`, then one `i j distance` line per
    /// stored pair with `i < j`. Lines starting with `#` are skipped.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", self.n)?;
        for (i, row) in self.by_col.iter().enumerate() {
            for &(j, d) in row.iter().filter(|&&(j, _)| j as usize > i) {
                writeln!(out, "{i} {j} {d}")?;
            }
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut n = None;
        let mut entries = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: k + 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Parse {
                line: k + 1,
                message: what.to_string(),
            };
            if n.is_none() {
                n = Some(line.parse::<usize>().map_err(|_| bad("expected the matrix size"))?);
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("expected `i j distance`"));
            }
            let i = f[0].parse::<usize>().map_err(|_| bad("bad row index"))?;
            let j = f[1].parse::<usize>().map_err(|_| bad("bad column index"))?;
            let d = f[2].parse::<f64>().map_err(|_| bad("bad distance"))?;
            entries.push((i, j, d));
        }
        let n = n.ok_or(Error::Empty("distance file"))?;
        Self::from_triples(n, entries)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    pub threads: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self::detection()
    }
}

impl DbscanParams {
    pub fn detection() -> Self {
        DbscanParams {
            eps: DEFAULT_EPS_DETECT,
            min_pts: 1,
            threads: 1,
        }
    }

    pub fn evolution() -> Self {
        DbscanParams {
            eps: DEFAULT_EPS_EVOLVE,
            ..Self::detection()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be a non-negative number, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("min_pts must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cluster id per point (`NOISE` for noise). Ids are dense and numbered in
/// order of each cluster's first member.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClusterLabels(Vec<i64>);

impl ClusterLabels {
    /// Renumbers arbitrary labels canonically; `None` is noise.
    pub fn canonical<T: Ord + Clone>(raw: &[Option<T>]) -> Self {
        let mut ids: BTreeMap<T, i64> = BTreeMap::new();
        let labels = raw
            .iter()
            .map(|l| match l {
                None => NOISE,
                Some(t) => {
                    let next = ids.len() as i64;
                    *ids.entry(t.clone()).or_insert(next)
                }
            })
            .collect();
        ClusterLabels(labels)
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.0.iter().max().map_or(0, |&m| (m + 1).max(0) as usize)
    }

    pub fn n_noise(&self) -> usize {
        self.0.iter().filter(|&&l| l == NOISE).count()
    }

    /// Members of each cluster in id order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &l) in self.0.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    /// `id<TAB>cluster` lines; `ids` defaults to the point index.
    pub fn write_tsv(&self, ids: Option<&[String]>, mut out: impl Write) -> std::io::Result<()> {
        for (i, l) in self.0.iter().enumerate() {
            match ids {
                Some(ids) => writeln!(out, "{}\t{l}", ids[i])?,
                None => writeln!(out, "{i}\t{l}")?,
            }
        }
        Ok(())
    }

    /// Reads `id<TAB>cluster` lines back as `(id, label)` pairs.
    pub fn read_tsv(input: impl BufRead) -> Result<Vec<(String, i64)>> {
        let mut out = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: k + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, label) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
                line: k + 1,
                message: "expected `id<TAB>label`".into(),
            })?;
            let label = label.trim().parse::<i64>().map_err(|_| Error::Parse {
                line: k + 1,
                message: format!("bad label `{label}`"),
            })?;
            out.push((id.to_string(), label));
        }
        Ok(out)
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Density clustering: neighborhoods are queried in parallel on
/// `params.threads` workers, then merged serially. A point is core when its
/// neighborhood plus itself holds at least `min_pts` points; core points
/// within `eps` share a cluster, a non-core point next to a core point joins
/// the cluster of its lowest-index core neighbor, and the rest are noise.
/// With `min_pts = 1` this is exactly the connected components of the
/// `d <= eps` graph.
pub fn h_dbscan(da: &DistanceMatrix, params: &DbscanParams) -> Result<ClusterLabels> {
    params.validate()?;
    let n = da.len();
    let pool = thread_pool(params.threads)?;
    let neighbors: Vec<Vec<usize>> =
        pool.install(|| (0..n).into_par_iter().map(|i| da.get_neighbors(i, params.eps)).collect());
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() + 1 >= params.min_pts).collect();

    let mut ds = DisjointSet::new(n);
    for (i, nb) in neighbors.iter().enumerate() {
        if !core[i] {
            continue;
        }
        for &j in nb.iter().filter(|&&j| j > i && core[j]) {
            ds.union(i, j);
        }
    }
    let raw: Vec<Option<usize>> = (0..n)
        .map(|i| {
            if core[i] {
                Some(ds.find(i))
            } else {
                neighbors[i].iter().find(|&&j| core[j]).map(|&j| ds.find(j))
            }
        })
        .collect();
    Ok(relabel_by_first_member(&raw))
}

fn relabel_by_first_member(raw: &[Option<usize>]) -> ClusterLabels {
    let mut ids: BTreeMap<usize, i64> = BTreeMap::new();
    ClusterLabels(
        raw.iter()
            .map(|r| match r {
                None => NOISE,
                Some(root) => {
                    let next = ids.len() as i64;
                    *ids.entry(*root).or_insert(next)
                }
            })
            .collect(),
    )
}

/// Reference clustering: union-find over every pair with `d <= eps`,
/// checked exhaustively.
pub fn connected_components_oracle(da: &DistanceMatrix, eps: f64) -> ClusterLabels {
    let n = da.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if da.distance(i, j) <= eps {
                ds.union(i, j);
            }
        }
    }
    ClusterLabels(ds.canonical_labels().into_iter().map(|l| l as i64).collect())
}
