//! Meta-paths over the event schema, path-instance counting by chained
//! adjacency products, and the weighted KIES similarity.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hin::{Hin, NodeType, Relation};
use crate::sparse::CsrMatrix;

/// Default maximum length of instance-anchored paths.
pub const DEFAULT_MAX_LEN_INSTANCE: usize = 4;
/// Default maximum length of event-anchored paths.
pub const DEFAULT_MAX_LEN_EVENT: usize = 6;

/// The type-level graph: which relations exist between node types.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaSchema {
    relations: BTreeSet<Relation>,
}

impl MetaSchema {
    pub fn new(relations: impl IntoIterator<Item = Relation>) -> Self {
        MetaSchema {
            relations: relations.into_iter().collect(),
        }
    }

    /// Instances, their elements, and the element-element knowledge edges.
    pub fn instance_level() -> Self {
        Self::new(Relation::ALL.into_iter().filter(|&r| r != Relation::ConsistsOf))
    }

    /// The instance-level schema plus the event composition relation.
    pub fn full() -> Self {
        Self::new(Relation::ALL)
    }

    pub fn relations(&self) -> impl Iterator<Item = Relation> + '_ {
        self.relations.iter().copied()
    }

    fn steps_from(&self, from: NodeType) -> Vec<(Relation, NodeType)> {
        self.relations
            .iter()
            .filter_map(|&r| r.other_end(from).map(|to| (r, to)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetaPath {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
}

impl MetaPath {
    pub fn new(node_types: Vec<NodeType>, relations: Vec<Relation>) -> Result<Self> {
        if relations.is_empty() || node_types.len() != relations.len() + 1 {
            return Err(Error::InvalidPath(format!(
                "{} node types for {} relations",
                node_types.len(),
                relations.len()
            )));
        }
        for (k, rel) in relations.iter().enumerate() {
            let (a, b) = (node_types[k], node_types[k + 1]);
            let (x, y) = rel.endpoints();
            if (a, b) != (x, y) && (a, b) != (y, x) {
                return Err(Error::InvalidPath(format!(
                    "step {k}: {rel} does not join {a} and {b}"
                )));
            }
        }
        Ok(MetaPath {
            node_types,
            relations,
        })
    }

    /// Builds a path from its start type and relation sequence.
    pub fn from_relations(start: NodeType, relations: Vec<Relation>) -> Result<Self> {
        let mut types = vec![start];
        for rel in &relations {
            let here = *types.last().expect("non-empty");
            let next = rel
                .other_end(here)
                .ok_or_else(|| Error::InvalidPath(format!("{rel} does not touch {here}")))?;
            types.push(next);
        }
        MetaPath::new(types, relations)
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn anchor(&self) -> NodeType {
        self.node_types[0]
    }

    pub fn reversed(&self) -> MetaPath {
        MetaPath {
            node_types: self.node_types.iter().rev().copied().collect(),
            relations: self.relations.iter().rev().copied().collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        *self == self.reversed()
    }

    /// Even-length symmetric path, i.e. a half path followed by its reverse.
    /// Only these have a positive semidefinite count matrix.
    pub fn is_round_trip(&self) -> bool {
        self.len().is_multiple_of(2) && self.is_symmetric()
    }

    /// The anchor-instance-timeslot-instance-anchor pattern: co-occurrence in
    /// the very same time slot.
    pub fn is_same_slot(&self) -> bool {
        let inner: Vec<NodeType> = self
            .node_types
            .iter()
            .copied()
            .filter(|t| *t != NodeType::Event)
            .collect();
        inner == [NodeType::EventInstance, NodeType::TimeSlot, NodeType::EventInstance]
    }

    /// Passes through no element type at all (e.g. Event-Instance-Event).
    pub fn is_composition_only(&self) -> bool {
        self.node_types
            .iter()
            .all(|t| matches!(t, NodeType::Event | NodeType::EventInstance))
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.node_types[0])?;
        for (rel, ty) in self.relations.iter().zip(&self.node_types[1..]) {
            write!(f, " {rel} {ty}")?;
        }
        Ok(())
    }
}

impl FromStr for MetaPath {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 || tokens.len().is_multiple_of(2) {
            return Err(Error::InvalidPath(format!("malformed path line `{line}`")));
        }
        let types = tokens
            .iter()
            .step_by(2)
            .map(|t| t.parse())
            .collect::<Result<Vec<NodeType>>>()?;
        let rels = tokens
            .iter()
            .skip(1)
            .step_by(2)
            .map(|t| t.parse())
            .collect::<Result<Vec<Relation>>>()?;
        MetaPath::new(types, rels)
    }
}

/// Lists every palindromic meta-path of length `<= max_len` from `anchor`
/// back to `anchor`.
///
/// A path is the mirror image of a half path that starts at the anchor and
/// visits distinct node types (the anchor only at its start), optionally with
/// one homogeneous relation in the middle. Output is ordered by length, then
/// by relation sequence.
pub fn enumerate_symmetric_metapaths(
    schema: &MetaSchema,
    anchor: NodeType,
    max_len: usize,
) -> Vec<MetaPath> {
    let mut found = BTreeSet::new();
    if max_len < 2 {
        return Vec::new();
    }
    let mut half_types = vec![anchor];
    let mut half_rels = Vec::new();
    extend_halves(schema, max_len, &mut half_types, &mut half_rels, &mut found);
    let mut paths: Vec<MetaPath> = found.into_iter().collect();
    paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.relations.cmp(&b.relations)));
    paths
}

fn extend_halves(
    schema: &MetaSchema,
    max_len: usize,
    types: &mut Vec<NodeType>,
    rels: &mut Vec<Relation>,
    found: &mut BTreeSet<MetaPath>,
) {
    let here = *types.last().expect("half path starts at the anchor");
    let half = rels.len();
    if half > 0 {
        if 2 * half <= max_len {
            found.insert(mirror(types, rels, None));
        }
        if 2 * half < max_len {
            for (rel, to) in schema.steps_from(here) {
                if to == here {
                    found.insert(mirror(types, rels, Some(rel)));
                }
            }
        }
    }
    if 2 * (half + 1) > max_len {
        return;
    }
    for (rel, to) in schema.steps_from(here) {
        if types.contains(&to) {
            continue;
        }
        types.push(to);
        rels.push(rel);
        extend_halves(schema, max_len, types, rels, found);
        types.pop();
        rels.pop();
    }
}

fn mirror(types: &[NodeType], rels: &[Relation], middle: Option<Relation>) -> MetaPath {
    let mut node_types = types.to_vec();
    let mut relations = rels.to_vec();
    if let Some(m) = middle {
        relations.push(m);
        node_types.push(*types.last().expect("non-empty"));
    }
    relations.extend(rels.iter().rev());
    node_types.extend(types.iter().rev().skip(1));
    MetaPath {
        node_types,
        relations,
    }
}

/// Which enumerated paths enter a similarity path set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathFilter {
    pub include_same_slot: bool,
    pub include_odd: bool,
    pub include_composition_only: bool,
}

impl PathFilter {
    pub fn accepts(&self, path: &MetaPath) -> bool {
        (self.include_same_slot || !path.is_same_slot())
            && (self.include_odd || path.is_round_trip())
            && (self.include_composition_only || !path.is_composition_only())
    }
}

/// An ordered collection of symmetric meta-paths sharing one anchor type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPathSet {
    anchor: NodeType,
    paths: Vec<MetaPath>,
}

impl MetaPathSet {
    pub fn new(paths: Vec<MetaPath>) -> Result<Self> {
        let anchor = paths
            .first()
            .ok_or_else(|| Error::InvalidPath("empty path set".into()))?
            .anchor();
        for p in &paths {
            if p.anchor() != anchor || *p.node_types.last().expect("non-empty") != anchor {
                return Err(Error::InvalidPath(format!("`{p}` is not anchored at {anchor}")));
            }
            if !p.is_symmetric() {
                return Err(Error::InvalidPath(format!("`{p}` is not symmetric")));
            }
        }
        Ok(MetaPathSet { anchor, paths })
    }

    /// Instance-anchored detection paths.
    pub fn detection(max_len: usize, filter: PathFilter) -> Result<Self> {
        let schema = MetaSchema::instance_level();
        Self::new(
            enumerate_symmetric_metapaths(&schema, NodeType::EventInstance, max_len)
                .into_iter()
                .filter(|p| filter.accepts(p))
                .collect(),
        )
    }

    /// Event-anchored evolution paths.
    pub fn evolution(max_len: usize, filter: PathFilter) -> Result<Self> {
        let schema = MetaSchema::full();
        Self::new(
            enumerate_symmetric_metapaths(&schema, NodeType::Event, max_len)
                .into_iter()
                .filter(|p| filter.accepts(p))
                .collect(),
        )
    }

    pub fn anchor(&self) -> NodeType {
        self.anchor
    }

    pub fn paths(&self) -> &[MetaPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for p in &self.paths {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut paths = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            paths.push(line.parse().map_err(|e: Error| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(paths)
    }
}

/// Nonnegative meta-path weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates and normalizes raw weights.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if let Some(w) = raw.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!("weight {w} is negative or non-finite")));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        Ok(WeightVector(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for w in &self.0 {
            writeln!(out, "{w:.17e}")?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut raw = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            raw.push(line.parse::<f64>().map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(raw)
    }
}

fn check_path(hin: &Hin, path: &MetaPath) -> Result<()> {
    if !hin.is_frozen() {
        return Err(Error::NotFrozen);
    }
    if path.is_empty() {
        return Err(Error::InvalidPath("empty path".into()));
    }
    Ok(())
}

/// Path-instance counts between all anchor nodes:
/// `M_P = W_{A1A2} · W_{A2A3} ··· W_{ALAL+1}`, accumulated left to right.
pub fn count_matrix(hin: &Hin, path: &MetaPath) -> Result<CsrMatrix<u64>> {
    check_path(hin, path)?;
    let types = path.node_types();
    let mut acc = hin.oriented(path.relations()[0], types[0])?.into_owned();
    for (k, &rel) in path.relations().iter().enumerate().skip(1) {
        let step = hin.oriented(rel, types[k])?;
        if acc.cols() != step.rows() {
            return Err(Error::Dimension(format!("step {k} of `{path}`")));
        }
        acc = acc.matmul(&step);
    }
    Ok(acc)
}

/// Row `i` of [`count_matrix`], computed by propagating a unit vector.
pub fn count_row(hin: &Hin, path: &MetaPath, i: usize) -> Result<(Vec<u32>, Vec<u64>)> {
    check_path(hin, path)?;
    let types = path.node_types();
    let mut idx = vec![i as u32];
    let mut vals = vec![1u64];
    for (k, &rel) in path.relations().iter().enumerate() {
        let step = hin.oriented(rel, types[k])?;
        (idx, vals) = step.left_mul_row(&idx, &vals);
    }
    Ok((idx, vals))
}

fn term(cross: u64, self_i: u64, self_j: u64) -> f64 {
    let denom = self_i + self_j;
    if denom == 0 {
        0.0
    } else {
        2.0 * cross as f64 / denom as f64
    }
}

fn check_weights(pathset: &MetaPathSet, weights: &WeightVector) -> Result<()> {
    if pathset.len() != weights.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} paths",
            weights.len(),
            pathset.len()
        )));
    }
    Ok(())
}

fn lookup(row: &(Vec<u32>, Vec<u64>), j: usize) -> u64 {
    match row.0.binary_search(&(j as u32)) {
        Ok(p) => row.1[p],
        Err(_) => 0,
    }
}

/// KIES between anchors `i` and `j`:
/// `Σ_m ω_m · 2·Cou_m(i,j) / (Cou_m(i,i) + Cou_m(j,j))`, with 0/0 terms = 0.
pub fn kies(
    hin: &Hin,
    pathset: &MetaPathSet,
    weights: &WeightVector,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_weights(pathset, weights)?;
    let mut total = 0.0;
    for (path, &w) in pathset.paths().iter().zip(weights.as_slice()) {
        let row_i = count_row(hin, path, i)?;
        let row_j = count_row(hin, path, j)?;
        total += w * term(lookup(&row_i, j), lookup(&row_i, i), lookup(&row_j, j));
    }
    Ok(total)
}

/// Per-path normalized similarity `2·C_ij / (C_ii + C_jj)` over all anchors,
/// kept sparse.
pub fn similarity_from_counts(counts: &CsrMatrix<u64>) -> CsrMatrix<f64> {
    let diag = counts.diagonal();
    counts.map(|i, j, c| term(c, diag[i], diag[j]))
}

/// Sparse per-path similarity terms over every anchor node of the graph.
#[derive(Clone, Debug)]
pub struct SimilarityStack {
    n: usize,
    terms: Vec<CsrMatrix<f64>>,
}

impl SimilarityStack {
    /// Counts each path (in parallel) and normalizes it.
    pub fn compute(hin: &Hin, pathset: &MetaPathSet) -> Result<Self> {
        let n = hin.node_count(pathset.anchor());
        let terms = pathset
            .paths()
            .par_iter()
            .map(|p| count_matrix(hin, p).map(|c| similarity_from_counts(&c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SimilarityStack { n, terms })
    }

    pub fn from_terms(n: usize, terms: Vec<CsrMatrix<f64>>) -> Self {
        SimilarityStack { n, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[CsrMatrix<f64>] {
        &self.terms
    }

    /// `Σ_m ω_m S_m`, sparse.
    pub fn combine(&self, weights: &WeightVector) -> Result<CsrMatrix<f64>> {
        if weights.len() != self.terms.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} paths",
                weights.len(),
                self.terms.len()
            )));
        }
        let triplets = self
            .terms
            .iter()
            .zip(weights.as_slice())
            .flat_map(|(t, &w)| t.iter().map(move |(r, c, v)| (r, c, w * v)));
        Ok(CsrMatrix::from_triplets(self.n, self.n, triplets))
    }

    /// Dense copies restricted to `anchors`.
    pub fn dense(&self, anchors: &[usize]) -> Vec<Array2<f64>> {
        self.terms
            .iter()
            .map(|t| t.submatrix(anchors, anchors).to_dense())
            .collect()
    }
}

/// Per-path similarity matrices `S_m` over `anchors` (dense).
pub fn per_path_similarity_matrices(
    hin: &Hin,
    pathset: &MetaPathSet,
    anchors: &[usize],
) -> Result<Vec<Array2<f64>>> {
    Ok(SimilarityStack::compute(hin, pathset)?.dense(anchors))
}

/// Dense KIES matrix over `anchors`, evaluated entry by entry from the path
/// counts.
pub fn kies_matrix(
    hin: &Hin,
    pathset: &MetaPathSet,
    weights: &WeightVector,
    anchors: &[usize],
) -> Result<Array2<f64>> {
    check_weights(pathset, weights)?;
    let n = anchors.len();
    let mut out = Array2::zeros((n, n));
    for (path, &w) in pathset.paths().iter().zip(weights.as_slice()) {
        let counts = count_matrix(hin, path)?;
        let diag = counts.diagonal();
        for (a, &i) in anchors.iter().enumerate() {
            for (b, &j) in anchors.iter().enumerate() {
                out[[a, b]] += w * term(counts.get(i, j), diag[i], diag[j]);
            }
        }
    }
    Ok(out)
}
