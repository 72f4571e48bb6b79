//! Time-sliced detection and evolution over a message stream.
//!
//! Each slice retrieves related historical instances through an inverted
//! element index, clusters new plus retrieved instances on a provisional
//! graph, and merges the clusters into the running event store. Touched
//! events are then clustered with related historical events into evolution
//! chains.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdbscan::{h_dbscan, ClusterLabels, DbscanParams, DistanceMatrix};
use crate::hin::{Hin, NodeType, DEFAULT_SLOT_SECS};
use crate::ingest::{add_record, build_event_layer, link_adjacent_slots, EnrichmentTables, MessageRecord};
use crate::metapath::{MetaPathSet, PathFilter, SimilarityStack, WeightVector, DEFAULT_MAX_LEN_EVENT, DEFAULT_MAX_LEN_INSTANCE};

pub type ElementKey = (NodeType, String);

const HOUR: i64 = 3600;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamConfig {
    pub slice_secs: i64,
    /// Instance lookback for detection retrieval.
    pub t1_secs: i64,
    /// Event lookback for evolution retrieval.
    pub t2_secs: i64,
    /// Cap on items retrieved per anchor.
    pub top_k: usize,
    /// History older than this (relative to the slice start) is dropped.
    pub retention_secs: i64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            slice_secs: 30 * 60,
            t1_secs: 24 * HOUR,
            t2_secs: 7 * 24 * HOUR,
            top_k: 50,
            retention_secs: 7 * 24 * HOUR,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slice_secs <= 0 {
            return Err(Error::Config("retrieval.slice_secs must be positive".into()));
        }
        if !(0 < self.t1_secs && self.t1_secs < self.t2_secs) {
            return Err(Error::Config(format!(
                "retrieval needs 0 < t1_secs < t2_secs, got {} and {}",
                self.t1_secs, self.t2_secs
            )));
        }
        if self.retention_secs < self.t2_secs {
            return Err(Error::Config("retrieval.retention_secs must cover t2_secs".into()));
        }
        Ok(())
    }
}

/// Message elements used for retrieval overlap (time slots excluded).
pub fn record_elements(rec: &MessageRecord) -> Vec<ElementKey> {
    let mut out: Vec<ElementKey> = rec.elements().map(|(k, s)| (k, s.to_string())).collect();
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredInstance {
    pub record: MessageRecord,
    pub elements: Vec<ElementKey>,
    pub event: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub event_id: u32,
    /// Stream sequence numbers, ascending.
    pub members: Vec<usize>,
    pub first: i64,
    pub last: i64,
    pub element_summary: BTreeMap<NodeType, BTreeMap<String, usize>>,
    pub chain: Option<u32>,
}

impl EventRecord {
    pub fn elements(&self) -> Vec<ElementKey> {
        self.element_summary
            .iter()
            .flat_map(|(&k, m)| m.keys().map(move |s| (k, s.clone())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EvolutionChain {
    pub chain_id: u32,
    /// Ordered by event start time, then id.
    pub events: Vec<u32>,
}

/// Retained instances, events and chains with inverted element indexes.
#[derive(Clone, Debug, Default)]
pub struct History {
    instances: BTreeMap<usize, StoredInstance>,
    by_id: HashMap<String, usize>,
    next_seq: usize,
    postings: HashMap<ElementKey, Vec<usize>>,
    events: BTreeMap<u32, EventRecord>,
    event_postings: HashMap<ElementKey, BTreeSet<u32>>,
    chains: BTreeMap<u32, EvolutionChain>,
    next_event: u32,
    next_chain: u32,
}

fn rank<K: Ord + Copy>(mut scored: Vec<(usize, i64, K)>, top_k: usize) -> Vec<K> {
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    scored.into_iter().take(top_k).map(|s| s.2).collect()
}

impl History {
    pub fn instances(&self) -> &BTreeMap<usize, StoredInstance> {
        &self.instances
    }

    pub fn instance_by_id(&self, id: &str) -> Option<&StoredInstance> {
        self.by_id.get(id).map(|s| &self.instances[s])
    }

    pub fn events(&self) -> &BTreeMap<u32, EventRecord> {
        &self.events
    }

    pub fn chains(&self) -> &BTreeMap<u32, EvolutionChain> {
        &self.chains
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Retained instances sharing at least one element with `elements` and
    /// with `time - t < lookback`, by descending overlap, then recency, then
    /// arrival; at most `top_k`.
    pub fn retrieve_related_instances(&self, elements: &[ElementKey], time: i64, lookback: i64, top_k: usize) -> Vec<usize> {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for e in elements {
            for &seq in self.postings.get(e).into_iter().flatten() {
                *overlap.entry(seq).or_default() += 1;
            }
        }
        let scored = overlap
            .into_iter()
            .filter_map(|(seq, c)| {
                let t = self.instances[&seq].record.post_time;
                (time - t < lookback).then_some((c, t, seq))
            })
            .collect();
        rank(scored, top_k)
    }

    /// Retained events (other than those in `exclude`) sharing an element
    /// with `elements` and starting less than `lookback` before `time`.
    pub fn retrieve_related_events(
        &self,
        elements: &[ElementKey],
        time: i64,
        lookback: i64,
        top_k: usize,
        exclude: &BTreeSet<u32>,
    ) -> Vec<u32> {
        let mut overlap: HashMap<u32, usize> = HashMap::new();
        for e in elements {
            for &ev in self.event_postings.get(e).into_iter().flatten() {
                *overlap.entry(ev).or_default() += 1;
            }
        }
        let scored = overlap
            .into_iter()
            .filter(|(ev, _)| !exclude.contains(ev))
            .filter_map(|(ev, c)| {
                let t = self.events[&ev].first;
                (time - t < lookback).then_some((c, t, ev))
            })
            .collect();
        rank(scored, top_k)
    }

    fn fresh_event(&mut self) -> u32 {
        self.next_event += 1;
        self.next_event - 1
    }

    fn insert_instance(&mut self, record: MessageRecord, event: u32) -> usize {
        let seq = self.next_seq;
        self.next_seq += 1;
        let elements = record_elements(&record);
        for e in &elements {
            self.postings.entry(e.clone()).or_default().push(seq);
            self.event_postings.entry(e.clone()).or_default().insert(event);
        }
        let time = record.post_time;
        let ev = self.events.entry(event).or_insert_with(|| EventRecord {
            event_id: event,
            members: Vec::new(),
            first: time,
            last: time,
            element_summary: BTreeMap::new(),
            chain: None,
        });
        ev.members.push(seq);
        ev.first = ev.first.min(time);
        ev.last = ev.last.max(time);
        for (k, s) in &elements {
            *ev.element_summary.entry(*k).or_default().entry(s.clone()).or_default() += 1;
        }
        self.by_id.insert(record.id.clone(), seq);
        self.instances.insert(seq, StoredInstance { record, elements, event });
        seq
    }

    fn merge_events(&mut self, into: u32, from: u32) {
        let gone = self.events.remove(&from).expect("live event");
        for e in gone.elements() {
            let set = self.event_postings.get_mut(&e).expect("indexed");
            set.remove(&from);
            set.insert(into);
        }
        for &seq in &gone.members {
            if let Some(inst) = self.instances.get_mut(&seq) {
                inst.event = into;
            }
        }
        let target = self.events.get_mut(&into).expect("live event");
        target.members.extend(&gone.members);
        target.members.sort_unstable();
        target.first = target.first.min(gone.first);
        target.last = target.last.max(gone.last);
        for (k, m) in gone.element_summary {
            let dst = target.element_summary.entry(k).or_default();
            for (s, c) in m {
                *dst.entry(s).or_default() += c;
            }
        }
        let into_chain = target.chain;
        match (into_chain, gone.chain) {
            (_, None) => {}
            (None, Some(c)) => {
                self.events.get_mut(&into).expect("live").chain = Some(c);
                let ch = self.chains.get_mut(&c).expect("live chain");
                ch.events.retain(|&e| e != from);
                ch.events.push(into);
                self.sort_chain(c);
            }
            (Some(a), Some(b)) => {
                self.chains.get_mut(&b).expect("live chain").events.retain(|&e| e != from);
                if a != b {
                    let (keep, drop) = (a.min(b), a.max(b));
                    self.merge_chains(keep, drop);
                }
            }
        }
    }

    fn sort_chain(&mut self, chain: u32) {
        let events = &self.events;
        let ch = self.chains.get_mut(&chain).expect("live chain");
        ch.events.sort_by_key(|e| (events[e].first, *e));
        ch.events.dedup();
    }

    fn merge_chains(&mut self, into: u32, from: u32) {
        let gone = self.chains.remove(&from).expect("live chain");
        for &e in &gone.events {
            self.events.get_mut(&e).expect("live").chain = Some(into);
        }
        self.chains.get_mut(&into).expect("live chain").events.extend(gone.events);
        self.sort_chain(into);
    }

    /// Drops instances and events last seen before `cutoff`.
    pub fn prune(&mut self, cutoff: i64) {
        let expired: Vec<usize> = self
            .instances
            .iter()
            .filter(|(_, i)| i.record.post_time < cutoff)
            .map(|(&s, _)| s)
            .collect();
        if expired.is_empty() {
            return;
        }
        for seq in &expired {
            let inst = self.instances.remove(seq).expect("present");
            self.by_id.remove(&inst.record.id);
        }
        let alive = &self.instances;
        self.postings.retain(|_, p| {
            p.retain(|s| alive.contains_key(s));
            !p.is_empty()
        });
        let dead: Vec<u32> = self.events.values().filter(|e| e.last < cutoff).map(|e| e.event_id).collect();
        for id in dead {
            let ev = self.events.remove(&id).expect("present");
            for e in ev.elements() {
                if let Some(set) = self.event_postings.get_mut(&e) {
                    set.remove(&id);
                    if set.is_empty() {
                        self.event_postings.remove(&e);
                    }
                }
            }
            if let Some(c) = ev.chain {
                let ch = self.chains.get_mut(&c).expect("live chain");
                ch.events.retain(|&x| x != id);
                if ch.events.is_empty() {
                    self.chains.remove(&c);
                }
            }
        }
    }
}

/// Everything a slice needs besides the history.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub stream: StreamConfig,
    pub slot_secs: i64,
    pub tables: EnrichmentTables,
    pub detect_paths: MetaPathSet,
    pub detect_weights: WeightVector,
    pub detect_params: DbscanParams,
    pub evolve_paths: MetaPathSet,
    pub evolve_weights: WeightVector,
    pub evolve_params: DbscanParams,
    /// When set, each slice writes `slice-<t>.tsv` (id, event, chain) here.
    pub labels_dir: Option<PathBuf>,
}

impl Pipeline {
    /// Default path sets with uniform weights.
    pub fn with_defaults(tables: EnrichmentTables) -> Result<Self> {
        let detect_paths = MetaPathSet::detection(DEFAULT_MAX_LEN_INSTANCE, PathFilter::default())?;
        let evolve_paths = MetaPathSet::evolution(DEFAULT_MAX_LEN_EVENT, PathFilter::default())?;
        Ok(Pipeline {
            stream: StreamConfig::default(),
            slot_secs: DEFAULT_SLOT_SECS,
            tables,
            detect_weights: WeightVector::uniform(detect_paths.len()),
            evolve_weights: WeightVector::uniform(evolve_paths.len()),
            detect_paths,
            evolve_paths,
            detect_params: DbscanParams::detection(),
            evolve_params: DbscanParams::evolution(),
            labels_dir: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.stream.validate()?;
        self.detect_params.validate()?;
        self.evolve_params.validate()?;
        if self.slot_secs <= 0 {
            return Err(Error::Config("ingest.slot_secs must be positive".into()));
        }
        for (paths, w, anchor) in [
            (&self.detect_paths, &self.detect_weights, NodeType::EventInstance),
            (&self.evolve_paths, &self.evolve_weights, NodeType::Event),
        ] {
            if paths.anchor() != anchor {
                return Err(Error::InvalidPath(format!("path set must be anchored at {anchor}")));
            }
            if paths.len() != w.len() {
                return Err(Error::InvalidWeights(format!("{} weights for {} paths", w.len(), paths.len())));
            }
        }
        Ok(())
    }
}

/// KIES over every anchor node of `hin`, turned into distances and
/// clustered. Returns the labels with the similarity and clustering times.
pub fn cluster_anchors(
    hin: &Hin,
    paths: &MetaPathSet,
    weights: &WeightVector,
    params: &DbscanParams,
) -> Result<(ClusterLabels, f64, f64)> {
    let t = Instant::now();
    let k = SimilarityStack::compute(hin, paths)?.combine(weights)?;
    let da = DistanceMatrix::from_kies_sparse(&k)?;
    let ms_sim = ms(t);
    let t = Instant::now();
    let labels = h_dbscan(&da, params)?;
    Ok((labels, ms_sim, ms(t)))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn provisional_hin<'a>(records: impl IntoIterator<Item = &'a MessageRecord>, pipe: &Pipeline) -> Result<Hin> {
    let mut hin = Hin::new(pipe.slot_secs);
    for r in records {
        add_record(&mut hin, r)?;
    }
    pipe.tables.apply_touching(&mut hin)?;
    link_adjacent_slots(&mut hin)?;
    hin.freeze();
    Ok(hin)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub ms_build: f64,
    pub ms_similarity: f64,
    pub ms_cluster: f64,
}

impl PhaseTimes {
    fn add(&mut self, other: &PhaseTimes) {
        self.ms_build += other.ms_build;
        self.ms_similarity += other.ms_similarity;
        self.ms_cluster += other.ms_cluster;
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectOutcome {
    /// Events that gained members this slice, ascending.
    pub events: Vec<u32>,
    /// Distinct historical instances pulled into the slice.
    pub n_retrieved: usize,
    pub times: PhaseTimes,
}

/// Clusters `new` records together with retrieved history and merges the
/// clusters into the event store. Clusters holding historical instances
/// join the lowest of their events (merging the others into it); the rest
/// become new events. Records whose id is already retained are ignored.
pub fn detect_slice(history: &mut History, new: Vec<MessageRecord>, pipe: &Pipeline) -> Result<DetectOutcome> {
    let new: Vec<MessageRecord> = new.into_iter().filter(|r| !history.contains_id(&r.id)).collect();
    if new.is_empty() {
        return Ok(DetectOutcome::default());
    }
    let mut times = PhaseTimes::default();
    let t = Instant::now();
    let cfg = &pipe.stream;
    let hits: Vec<Vec<usize>> = new
        .par_iter()
        .map(|r| history.retrieve_related_instances(&record_elements(r), r.post_time, cfg.t1_secs, cfg.top_k))
        .collect();
    let retrieved: BTreeSet<usize> = hits.into_iter().flatten().collect();
    let cm: Vec<&MessageRecord> = retrieved
        .iter()
        .map(|s| &history.instances[s].record)
        .chain(new.iter())
        .collect();
    let hin = provisional_hin(cm.iter().copied(), pipe)?;
    if hin.node_count(NodeType::EventInstance) != cm.len() {
        return Err(Error::Config("duplicate record ids within a slice".into()));
    }
    times.ms_build = ms(t);

    let (labels, ms_sim, ms_cl) = cluster_anchors(&hin, &pipe.detect_paths, &pipe.detect_weights, &pipe.detect_params)?;
    times.ms_similarity = ms_sim;
    let t = Instant::now();
    let hist: Vec<usize> = retrieved.into_iter().collect();
    let n_hist = hist.len();
    let mut groups: Vec<Vec<usize>> = labels.clusters();
    // noise instances still need an event of their own
    groups.extend((0..cm.len()).filter(|&i| labels.as_slice()[i] < 0).map(|i| vec![i]));
    let mut touched = BTreeSet::new();
    let mut new_iter: Vec<Option<MessageRecord>> = new.into_iter().map(Some).collect();
    for group in groups {
        let old: BTreeSet<u32> = group
            .iter()
            .filter(|&&i| i < n_hist)
            .map(|&i| history.instances[&hist[i]].event)
            .collect();
        let fresh: Vec<usize> = group.iter().copied().filter(|&i| i >= n_hist).collect();
        let target = match old.first() {
            Some(&t) => t,
            None => history.fresh_event(),
        };
        for &other in old.iter().skip(1) {
            history.merge_events(target, other);
        }
        if !fresh.is_empty() || old.len() > 1 {
            touched.insert(target);
        }
        for i in fresh {
            let rec = new_iter[i - n_hist].take().expect("each new record once");
            history.insert_instance(rec, target);
        }
    }
    times.ms_cluster = ms_cl + ms(t);
    Ok(DetectOutcome {
        events: touched.into_iter().collect(),
        n_retrieved: n_hist,
        times,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolveOutcome {
    /// Chains containing a slice event, ascending.
    pub chains: Vec<u32>,
    pub n_retrieved: usize,
    pub times: PhaseTimes,
}

/// Clusters the slice's events with related historical events; each
/// cluster becomes (or joins) one chain, lowest existing chain id first.
pub fn evolve_slice(history: &mut History, slice_events: &[u32], pipe: &Pipeline) -> Result<EvolveOutcome> {
    let slice: BTreeSet<u32> = slice_events.iter().copied().filter(|e| history.events.contains_key(e)).collect();
    if slice.is_empty() {
        return Ok(EvolveOutcome::default());
    }
    let mut times = PhaseTimes::default();
    let t = Instant::now();
    let cfg = &pipe.stream;
    let hits: Vec<Vec<u32>> = slice
        .par_iter()
        .map(|e| {
            let ev = &history.events[e];
            history.retrieve_related_events(&ev.elements(), ev.first, cfg.t2_secs, cfg.top_k, &slice)
        })
        .collect();
    let retrieved: BTreeSet<u32> = hits.into_iter().flatten().collect();
    let ce: BTreeSet<u32> = slice.iter().chain(&retrieved).copied().collect();

    let mut records = Vec::new();
    let mut assignment = BTreeMap::new();
    for &e in &ce {
        for seq in &history.events[&e].members {
            if let Some(inst) = history.instances.get(seq) {
                assignment.insert(records.len() as u32, e.to_string());
                records.push(&inst.record);
            }
        }
    }
    let hin = build_event_layer(&provisional_hin(records.iter().copied(), pipe)?, &assignment)?;
    let event_ids: Vec<u32> = hin
        .keys(NodeType::Event)
        .iter()
        .map(|k| k.parse().expect("numeric event key"))
        .collect();
    times.ms_build = ms(t);

    let (labels, ms_sim, ms_cl) = cluster_anchors(&hin, &pipe.evolve_paths, &pipe.evolve_weights, &pipe.evolve_params)?;
    times.ms_similarity = ms_sim;
    let t = Instant::now();
    let mut groups = labels.clusters();
    groups.extend((0..event_ids.len()).filter(|&i| labels.as_slice()[i] < 0).map(|i| vec![i]));
    let mut touched = BTreeSet::new();
    for group in groups {
        let members: Vec<u32> = group.iter().map(|&i| event_ids[i]).collect();
        let existing: BTreeSet<u32> = members.iter().filter_map(|e| history.events[e].chain).collect();
        let target = match existing.first() {
            Some(&c) => c,
            None => {
                let c = history.next_chain;
                history.next_chain += 1;
                history.chains.insert(c, EvolutionChain { chain_id: c, events: Vec::new() });
                c
            }
        };
        for &c in existing.iter().skip(1) {
            history.merge_chains(target, c);
        }
        for e in members {
            if history.events[&e].chain.is_none() {
                history.events.get_mut(&e).expect("live").chain = Some(target);
                history.chains.get_mut(&target).expect("live chain").events.push(e);
            }
        }
        history.sort_chain(target);
        if group.iter().any(|&i| slice.contains(&event_ids[i])) {
            touched.insert(target);
        }
    }
    times.ms_cluster = ms_cl + ms(t);
    Ok(EvolveOutcome {
        chains: touched.into_iter().collect(),
        n_retrieved: retrieved.len(),
        times,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    /// Slice index counted from the first slice of the stream.
    pub t: i64,
    pub n_new: usize,
    pub n_retrieved: usize,
    /// Events that gained members in this slice.
    pub n_events: usize,
    /// Chains holding those events.
    pub n_chains: usize,
    pub ms_build: f64,
    pub ms_similarity: f64,
    pub ms_cluster: f64,
    pub labels_path: Option<String>,
}

impl SliceReport {
    /// Copy with wall times zeroed, for comparing runs.
    pub fn without_timings(&self) -> SliceReport {
        SliceReport {
            ms_build: 0.0,
            ms_similarity: 0.0,
            ms_cluster: 0.0,
            ..self.clone()
        }
    }
}

/// Slice-by-slice state: the history plus the slice grid origin.
#[derive(Debug)]
pub struct Stream {
    pub pipeline: Pipeline,
    pub history: History,
    pub diagnostics: Vec<String>,
    origin: Option<i64>,
}

impl Stream {
    pub fn new(pipeline: Pipeline) -> Result<Self> {
        pipeline.validate()?;
        if let Some(dir) = &pipeline.labels_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Stream {
            pipeline,
            history: History::default(),
            diagnostics: Vec::new(),
            origin: None,
        })
    }

    /// Processes one slice (`index` on the absolute grid of slice width).
    /// Records older than the retention window are dropped.
    pub fn process_slice(&mut self, index: i64, records: Vec<MessageRecord>) -> Result<SliceReport> {
        let width = self.pipeline.stream.slice_secs;
        let origin = *self.origin.get_or_insert(index);
        let start = index * width;
        let cutoff = start - self.pipeline.stream.retention_secs;
        self.history.prune(cutoff);
        let mut fresh = Vec::with_capacity(records.len());
        for r in records {
            if r.post_time < cutoff {
                self.diagnostics
                    .push(format!("record `{}` at {} is older than the retention window; dropped", r.id, r.post_time));
            } else if self.history.contains_id(&r.id) || fresh.iter().any(|f: &MessageRecord| f.id == r.id) {
                self.diagnostics.push(format!("record `{}` repeats an id; dropped", r.id));
            } else {
                fresh.push(r);
            }
        }
        let ids: Vec<String> = fresh.iter().map(|r| r.id.clone()).collect();
        let n_new = fresh.len();
        let det = detect_slice(&mut self.history, fresh, &self.pipeline)?;
        let evo = evolve_slice(&mut self.history, &det.events, &self.pipeline)?;
        let mut times = det.times.clone();
        times.add(&evo.times);
        let t = index - origin;
        let labels_path = match &self.pipeline.labels_dir {
            Some(dir) => {
                let path = dir.join(format!("slice-{t:05}.tsv"));
                let mut buf = Vec::new();
                for id in &ids {
                    let inst = self.history.instance_by_id(id).expect("just inserted");
                    let chain = self.history.events[&inst.event].chain.map_or(-1, i64::from);
                    writeln!(buf, "{id}\t{}\t{chain}", inst.event).expect("vec write");
                }
                std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
                Some(path.display().to_string())
            }
            None => None,
        };
        Ok(SliceReport {
            t,
            n_new,
            n_retrieved: det.n_retrieved,
            n_events: det.events.len(),
            n_chains: evo.chains.len(),
            ms_build: times.ms_build,
            ms_similarity: times.ms_similarity,
            ms_cluster: times.ms_cluster,
            labels_path,
        })
    }
}

#[derive(Debug)]
pub struct StreamOutput {
    pub reports: Vec<SliceReport>,
    pub history: History,
    pub diagnostics: Vec<String>,
}

/// Sorts the records by time and replays them slice by slice, emitting one
/// report per slice from the first to the last record (empty slices
/// included).
pub fn run_stream(mut records: Vec<MessageRecord>, pipeline: Pipeline) -> Result<StreamOutput> {
    let mut stream = Stream::new(pipeline)?;
    records.sort_by(|a, b| (a.post_time, &a.id).cmp(&(b.post_time, &b.id)));
    let width = stream.pipeline.stream.slice_secs;
    let mut reports = Vec::new();
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        let (lo, hi) = (first.post_time.div_euclid(width), last.post_time.div_euclid(width));
        let mut it = records.into_iter().peekable();
        for index in lo..=hi {
            let mut batch = Vec::new();
            while let Some(r) = it.next_if(|r| r.post_time.div_euclid(width) == index) {
                batch.push(r);
            }
            reports.push(stream.process_slice(index, batch)?);
        }
    }
    Ok(StreamOutput {
        reports,
        history: stream.history,
        diagnostics: stream.diagnostics,
    })
}

/// Writes reports as JSON lines.
pub fn write_reports(reports: &[SliceReport], mut out: impl Write) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<report>", e))?;
    }
    Ok(())
}
