//! Typed heterogeneous graph: per-type node registries and one sparse
//! adjacency matrix per relation type.
//!
//! Every node type has its own dense index space, so a relation between
//! types `A` and `B` is an `|A| x |B|` matrix and meta-path products are
//! dimension-checked by construction. Edges are stored once in the
//! relation's canonical orientation and answered symmetrically.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Default time-slot width in seconds (30 minutes).
pub const DEFAULT_SLOT_SECS: i64 = 30 * 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    EventInstance,
    Event,
    Keyword,
    Entity,
    Topic,
    User,
    TimeSlot,
}

impl NodeType {
    pub const ALL: [NodeType; 7] = [
        NodeType::EventInstance,
        NodeType::Event,
        NodeType::Keyword,
        NodeType::Entity,
        NodeType::Topic,
        NodeType::User,
        NodeType::TimeSlot,
    ];

    /// Node types an instance can contain.
    pub const ELEMENTS: [NodeType; 5] = [
        NodeType::Keyword,
        NodeType::Entity,
        NodeType::Topic,
        NodeType::User,
        NodeType::TimeSlot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeType::EventInstance => "EventInstance",
            NodeType::Event => "Event",
            NodeType::Keyword => "Keyword",
            NodeType::Entity => "Entity",
            NodeType::Topic => "Topic",
            NodeType::User => "User",
            NodeType::TimeSlot => "TimeSlot",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidPath(format!("unknown node type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    ContainsKeyword,
    ContainsEntity,
    ContainsTopic,
    ContainsUser,
    ContainsTimeSlot,
    SynonymOf,
    TopicAffiliation,
    TopicHierarchy,
    EntityRelation,
    EntityKeyword,
    FriendOf,
    SharedCommunity,
    TemporalAdjacent,
    ConsistsOf,
}

impl Relation {
    pub const ALL: [Relation; 14] = [
        Relation::ContainsKeyword,
        Relation::ContainsEntity,
        Relation::ContainsTopic,
        Relation::ContainsUser,
        Relation::ContainsTimeSlot,
        Relation::SynonymOf,
        Relation::TopicAffiliation,
        Relation::TopicHierarchy,
        Relation::EntityRelation,
        Relation::EntityKeyword,
        Relation::FriendOf,
        Relation::SharedCommunity,
        Relation::TemporalAdjacent,
        Relation::ConsistsOf,
    ];

    /// Declared `(row type, column type)` of the relation's adjacency matrix.
    pub fn endpoints(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            Relation::ContainsKeyword => (EventInstance, Keyword),
            Relation::ContainsEntity => (EventInstance, Entity),
            Relation::ContainsTopic => (EventInstance, Topic),
            Relation::ContainsUser => (EventInstance, User),
            Relation::ContainsTimeSlot => (EventInstance, TimeSlot),
            Relation::SynonymOf => (Keyword, Keyword),
            Relation::TopicAffiliation => (Keyword, Topic),
            Relation::TopicHierarchy => (Topic, Topic),
            Relation::EntityRelation => (Entity, Entity),
            Relation::EntityKeyword => (Entity, Keyword),
            Relation::FriendOf => (User, User),
            Relation::SharedCommunity => (User, User),
            Relation::TemporalAdjacent => (TimeSlot, TimeSlot),
            Relation::ConsistsOf => (Event, EventInstance),
        }
    }

    /// Both endpoints share one node type.
    pub fn is_homogeneous(self) -> bool {
        let (a, b) = self.endpoints();
        a == b
    }

    /// The containment relation linking an instance to `element`.
    pub fn contains(element: NodeType) -> Option<Relation> {
        match element {
            NodeType::Keyword => Some(Relation::ContainsKeyword),
            NodeType::Entity => Some(Relation::ContainsEntity),
            NodeType::Topic => Some(Relation::ContainsTopic),
            NodeType::User => Some(Relation::ContainsUser),
            NodeType::TimeSlot => Some(Relation::ContainsTimeSlot),
            _ => None,
        }
    }

    /// Node type on the far side when traversing from `from`, if the
    /// relation touches `from` at all.
    pub fn other_end(self, from: NodeType) -> Option<NodeType> {
        let (a, b) = self.endpoints();
        if from == a {
            Some(b)
        } else if from == b {
            Some(a)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::ContainsKeyword => "ContainsKeyword",
            Relation::ContainsEntity => "ContainsEntity",
            Relation::ContainsTopic => "ContainsTopic",
            Relation::ContainsUser => "ContainsUser",
            Relation::ContainsTimeSlot => "ContainsTimeSlot",
            Relation::SynonymOf => "SynonymOf",
            Relation::TopicAffiliation => "TopicAffiliation",
            Relation::TopicHierarchy => "TopicHierarchy",
            Relation::EntityRelation => "EntityRelation",
            Relation::EntityKeyword => "EntityKeyword",
            Relation::FriendOf => "FriendOf",
            Relation::SharedCommunity => "SharedCommunity",
            Relation::TemporalAdjacent => "TemporalAdjacent",
            Relation::ConsistsOf => "ConsistsOf",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidPath(format!("unknown relation `{s}`")))
    }
}

/// A node handle: its type plus its index within that type's registry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeType,
    pub index: u32,
}

impl NodeId {
    pub fn new(kind: NodeType, index: u32) -> Self {
        NodeId { kind, index }
    }
}

#[derive(Clone, Debug, Default)]
struct Registry {
    keys: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Registry {
    fn insert(&mut self, key: &str) -> u32 {
        if let Some(&idx) = self.lookup.get(key) {
            return idx;
        }
        let idx = self.keys.len() as u32;
        self.keys.push(key.to_owned());
        self.lookup.insert(key.to_owned(), idx);
        idx
    }
}

#[derive(Clone, Debug)]
struct FrozenAdjacency {
    forward: Vec<CsrMatrix<u64>>,
    backward: Vec<CsrMatrix<u64>>,
}

#[derive(Clone, Debug)]
pub struct Hin {
    registries: [Registry; 7],
    edges: Vec<BTreeSet<(u32, u32)>>,
    instance_time: Vec<Option<i64>>,
    event_time: Vec<Option<i64>>,
    slot_secs: i64,
    frozen: Option<FrozenAdjacency>,
}

impl Default for Hin {
    fn default() -> Self {
        Hin::new(DEFAULT_SLOT_SECS)
    }
}

impl Hin {
    pub fn new(slot_secs: i64) -> Self {
        Hin {
            registries: Default::default(),
            edges: vec![BTreeSet::new(); Relation::ALL.len()],
            instance_time: Vec::new(),
            event_time: Vec::new(),
            slot_secs,
            frozen: None,
        }
    }

    /// Width of the time slots in seconds.
    pub fn slot_secs(&self) -> i64 {
        self.slot_secs
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen.is_some()
    }

    /// Registers `(kind, key)` and returns its index. Re-adding an existing
    /// key returns the existing index.
    pub fn add_node(&mut self, kind: NodeType, key: &str) -> Result<NodeId> {
        if key.is_empty() {
            return Err(Error::EmptyKey);
        }
        if let Some(&idx) = self.registries[kind.slot()].lookup.get(key) {
            return Ok(NodeId::new(kind, idx));
        }
        if self.frozen.is_some() {
            return Err(Error::Frozen);
        }
        let idx = self.registries[kind.slot()].insert(key);
        match kind {
            NodeType::EventInstance => self.instance_time.push(None),
            NodeType::Event => self.event_time.push(None),
            _ => {}
        }
        Ok(NodeId::new(kind, idx))
    }

    pub fn node(&self, kind: NodeType, key: &str) -> Option<NodeId> {
        self.registries[kind.slot()]
            .lookup
            .get(key)
            .map(|&idx| NodeId::new(kind, idx))
    }

    pub fn key(&self, id: NodeId) -> &str {
        &self.registries[id.kind.slot()].keys[id.index as usize]
    }

    pub fn keys(&self, kind: NodeType) -> &[String] {
        &self.registries[kind.slot()].keys
    }

    pub fn node_count(&self, kind: NodeType) -> usize {
        self.registries[kind.slot()].keys.len()
    }

    fn check_registered(&self, id: NodeId) -> Result<()> {
        if (id.index as usize) < self.node_count(id.kind) {
            Ok(())
        } else {
            Err(Error::UnknownNode {
                kind: id.kind,
                index: id.index,
            })
        }
    }

    /// Adds an edge of relation `rel` between `u` and `v`, in either order.
    pub fn add_edge(&mut self, rel: Relation, u: NodeId, v: NodeId) -> Result<()> {
        if self.frozen.is_some() {
            return Err(Error::Frozen);
        }
        let (from, to) = rel.endpoints();
        let (row, col) = if (u.kind, v.kind) == (from, to) {
            (u, v)
        } else if (v.kind, u.kind) == (from, to) {
            (v, u)
        } else {
            return Err(Error::TypeMismatch {
                rel,
                expected_from: from,
                expected_to: to,
                got_from: u.kind,
                got_to: v.kind,
            });
        };
        self.check_registered(row)?;
        self.check_registered(col)?;
        let set = &mut self.edges[rel.slot()];
        set.insert((row.index, col.index));
        if rel.is_homogeneous() {
            set.insert((col.index, row.index));
        }
        Ok(())
    }

    /// True when an edge of `rel` joins `u` and `v` (in either order).
    pub fn has_edge(&self, rel: Relation, u: NodeId, v: NodeId) -> bool {
        let (from, to) = rel.endpoints();
        let key = if (u.kind, v.kind) == (from, to) {
            (u.index, v.index)
        } else if (v.kind, u.kind) == (from, to) {
            (v.index, u.index)
        } else {
            return false;
        };
        self.edges[rel.slot()].contains(&key)
    }

    /// Number of stored adjacency entries for `rel` (homogeneous relations
    /// count both directions).
    pub fn edge_count(&self, rel: Relation) -> usize {
        self.edges[rel.slot()].len()
    }

    pub fn edges(&self, rel: Relation) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges[rel.slot()].iter().copied()
    }

    pub fn set_time(&mut self, id: NodeId, secs: i64) -> Result<()> {
        if self.frozen.is_some() {
            return Err(Error::Frozen);
        }
        self.check_registered(id)?;
        match id.kind {
            NodeType::EventInstance => self.instance_time[id.index as usize] = Some(secs),
            NodeType::Event => self.event_time[id.index as usize] = Some(secs),
            other => {
                return Err(Error::InvalidPath(format!(
                    "timestamps are only kept for instances and events, not {other}"
                )))
            }
        }
        Ok(())
    }

    pub fn time(&self, id: NodeId) -> Option<i64> {
        match id.kind {
            NodeType::EventInstance => self.instance_time.get(id.index as usize).copied().flatten(),
            NodeType::Event => self.event_time.get(id.index as usize).copied().flatten(),
            _ => None,
        }
    }

    fn build_matrix(&self, rel: Relation) -> CsrMatrix<u64> {
        let (from, to) = rel.endpoints();
        CsrMatrix::from_triplets(
            self.node_count(from),
            self.node_count(to),
            self.edges[rel.slot()]
                .iter()
                .map(|&(r, c)| (r as usize, c as usize, 1u64)),
        )
    }

    /// Builds the adjacency matrices and makes the graph immutable.
    pub fn freeze(&mut self) {
        if self.frozen.is_some() {
            return;
        }
        let forward: Vec<CsrMatrix<u64>> =
            Relation::ALL.iter().map(|&r| self.build_matrix(r)).collect();
        let backward = forward
            .iter()
            .zip(Relation::ALL)
            .map(|(m, rel)| if rel.is_homogeneous() { m.clone() } else { m.transpose() })
            .collect();
        self.frozen = Some(FrozenAdjacency { forward, backward });
    }

    /// A mutable copy of this graph with the frozen state dropped.
    pub fn thawed(&self) -> Hin {
        let mut copy = self.clone();
        copy.frozen = None;
        copy
    }

    /// Adjacency matrix of `rel` in its declared orientation.
    pub fn adjacency(&self, rel: Relation) -> Cow<'_, CsrMatrix<u64>> {
        match &self.frozen {
            Some(f) => Cow::Borrowed(&f.forward[rel.slot()]),
            None => Cow::Owned(self.build_matrix(rel)),
        }
    }

    /// Adjacency of `rel` with rows indexed by `from`'s registry.
    pub fn oriented(&self, rel: Relation, from: NodeType) -> Result<Cow<'_, CsrMatrix<u64>>> {
        let (a, b) = rel.endpoints();
        if from == a {
            Ok(self.adjacency(rel))
        } else if from == b {
            Ok(match &self.frozen {
                Some(f) => Cow::Borrowed(&f.backward[rel.slot()]),
                None => Cow::Owned(self.build_matrix(rel).transpose()),
            })
        } else {
            Err(Error::InvalidPath(format!("{rel} does not touch {from}")))
        }
    }

    /// Elements of `instance` grouped by node type, in index order.
    pub fn elements_of(&self, instance: u32) -> BTreeMap<NodeType, Vec<u32>> {
        let mut out = BTreeMap::new();
        for kind in NodeType::ELEMENTS {
            let rel = Relation::contains(kind).expect("element type");
            let ids: Vec<u32> = self.edges[rel.slot()]
                .range((instance, 0)..=(instance, u32::MAX))
                .map(|&(_, c)| c)
                .collect();
            out.insert(kind, ids);
        }
        out
    }

    /// Serializable snapshot of the full graph.
    pub fn to_snapshot(&self) -> HinSnapshot {
        HinSnapshot {
            slot_secs: self.slot_secs,
            nodes: NodeType::ALL
                .iter()
                .map(|&t| (t, self.keys(t).to_vec()))
                .filter(|(_, k)| !k.is_empty())
                .collect(),
            instance_time: self.instance_time.clone(),
            event_time: self.event_time.clone(),
            edges: Relation::ALL
                .iter()
                .map(|&r| (r, self.edges(r).collect::<Vec<_>>()))
                .filter(|(_, e)| !e.is_empty())
                .collect(),
        }
    }

    /// Rebuilds a frozen graph from a snapshot.
    pub fn from_snapshot(snap: HinSnapshot) -> Result<Hin> {
        let mut hin = Hin::new(snap.slot_secs);
        for (kind, keys) in &snap.nodes {
            for key in keys {
                hin.add_node(*kind, key)?;
            }
        }
        if snap.instance_time.len() != hin.node_count(NodeType::EventInstance)
            || snap.event_time.len() != hin.node_count(NodeType::Event)
        {
            return Err(Error::Dimension("timestamp table length".into()));
        }
        hin.instance_time = snap.instance_time;
        hin.event_time = snap.event_time;
        for (rel, pairs) in snap.edges {
            let (a, b) = rel.endpoints();
            for (u, v) in pairs {
                hin.add_edge(rel, NodeId::new(a, u), NodeId::new(b, v))?;
            }
        }
        hin.freeze();
        Ok(hin)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HinSnapshot {
    pub slot_secs: i64,
    pub nodes: BTreeMap<NodeType, Vec<String>>,
    pub instance_time: Vec<Option<i64>>,
    pub event_time: Vec<Option<i64>>,
    pub edges: BTreeMap<Relation, Vec<(u32, u32)>>,
}
