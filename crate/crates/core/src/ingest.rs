//! Annotated message records, enrichment tables, and event-HIN construction.
//!
//! Records arrive pre-annotated (keywords, entities, topics); this module only
//! parses them and wires them into the graph. [`annotate`] is a toy
//! dictionary annotator for demos.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hin::{Hin, NodeId, NodeType, Relation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(rename = "time")]
    pub post_time: i64,
    #[serde(default)]
    pub user: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub topics: Vec<String>,
}

impl MessageRecord {
    /// Drops empty strings and repeated elements, keeping first occurrences.
    pub fn normalize(&mut self) {
        for list in [&mut self.keywords, &mut self.entities, &mut self.topics] {
            let mut seen = HashSet::new();
            list.retain(|s| !s.is_empty() && seen.insert(s.clone()));
        }
    }

    /// Non-temporal elements as `(type, key)` pairs.
    pub fn elements(&self) -> impl Iterator<Item = (NodeType, &str)> {
        let user = (!self.user.is_empty()).then_some((NodeType::User, self.user.as_str()));
        self.keywords
            .iter()
            .map(|k| (NodeType::Keyword, k.as_str()))
            .chain(self.entities.iter().map(|e| (NodeType::Entity, e.as_str())))
            .chain(self.topics.iter().map(|t| (NodeType::Topic, t.as_str())))
            .chain(user)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ParsedCorpus {
    pub records: Vec<MessageRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses one JSON record per line. Bad lines are reported and skipped; the
/// call fails only when no valid record remains.
pub fn parse_corpus(input: impl BufRead) -> Result<ParsedCorpus> {
    let mut lines = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        if !line.trim().is_empty() {
            lines.push((n + 1, line));
        }
    }
    let parsed: Vec<(usize, std::result::Result<MessageRecord, String>)> = lines
        .par_iter()
        .map(|(n, line)| (*n, parse_line(line)))
        .collect();

    let mut out = ParsedCorpus::default();
    let mut ids = HashSet::new();
    for (line, result) in parsed {
        match result {
            Ok(rec) if !ids.insert(rec.id.clone()) => out.diagnostics.push(Diagnostic {
                line,
                message: format!("duplicate id `{}`", rec.id),
            }),
            Ok(rec) => out.records.push(rec),
            Err(message) => out.diagnostics.push(Diagnostic { line, message }),
        }
    }
    if out.records.is_empty() {
        return Err(Error::NoRecords);
    }
    Ok(out)
}

fn parse_line(line: &str) -> std::result::Result<MessageRecord, String> {
    let mut rec: MessageRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if rec.id.is_empty() {
        return Err("empty id".into());
    }
    if rec.post_time <= 0 {
        return Err(format!("non-positive time {}", rec.post_time));
    }
    rec.normalize();
    Ok(rec)
}

pub fn read_corpus_file(path: &Path) -> Result<ParsedCorpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(std::io::BufReader::new(file))
}

pub fn write_corpus(records: &[MessageRecord], mut out: impl Write) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

/// External relations between elements. Unknown keys create nodes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EnrichmentTables {
    pub synonyms: Vec<(String, String)>,
    pub entity_relations: Vec<(String, String)>,
    pub entity_keywords: Vec<(String, String)>,
    pub user_friends: Vec<(String, String)>,
    pub user_communities: Vec<(String, String)>,
    pub topic_hierarchy: Vec<(String, String)>,
    pub keyword_topics: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct PairLine {
    left: String,
    right: String,
}

impl EnrichmentTables {
    /// `(file stem, relation, table)` for every table.
    fn tables(&self) -> [(&'static str, Relation, &Vec<(String, String)>); 7] {
        [
            ("synonyms", Relation::SynonymOf, &self.synonyms),
            ("entity_relations", Relation::EntityRelation, &self.entity_relations),
            ("entity_keywords", Relation::EntityKeyword, &self.entity_keywords),
            ("user_friends", Relation::FriendOf, &self.user_friends),
            ("user_communities", Relation::SharedCommunity, &self.user_communities),
            ("topic_hierarchy", Relation::TopicHierarchy, &self.topic_hierarchy),
            ("keyword_topics", Relation::TopicAffiliation, &self.keyword_topics),
        ]
    }

    fn table_mut(&mut self, stem: &str) -> Option<&mut Vec<(String, String)>> {
        Some(match stem {
            "synonyms" => &mut self.synonyms,
            "entity_relations" => &mut self.entity_relations,
            "entity_keywords" => &mut self.entity_keywords,
            "user_friends" => &mut self.user_friends,
            "user_communities" => &mut self.user_communities,
            "topic_hierarchy" => &mut self.topic_hierarchy,
            "keyword_topics" => &mut self.keyword_topics,
            _ => return None,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.tables().iter().all(|(_, _, t)| t.is_empty())
    }

    /// Reads `<dir>/<table>.jsonl` files, one `{"left": .., "right": ..}`
    /// object per line. Missing files are empty tables.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut out = EnrichmentTables::default();
        let stems: Vec<&str> = out.tables().iter().map(|(s, _, _)| *s).collect();
        for stem in stems {
            let path = dir.join(format!("{stem}.jsonl"));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let table = out.table_mut(stem).expect("known stem");
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let pair: PairLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                    line: n + 1,
                    message: format!("{}: {e}", path.display()),
                })?;
                table.push((pair.left, pair.right));
            }
        }
        Ok(out)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (stem, _, table) in self.tables() {
            let path = dir.join(format!("{stem}.jsonl"));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(file);
            for (l, r) in table {
                serde_json::to_writer(
                    &mut out,
                    &PairLine {
                        left: l.clone(),
                        right: r.clone(),
                    },
                )?;
                out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Adds only the table rows with at least one endpoint already in `hin`.
    pub fn apply_touching(&self, hin: &mut Hin) -> Result<()> {
        for (_, rel, table) in self.tables() {
            let (a, b) = rel.endpoints();
            for (l, r) in table {
                if hin.node(a, l).is_none() && hin.node(b, r).is_none() {
                    continue;
                }
                let u = hin.add_node(a, l)?;
                let v = hin.add_node(b, r)?;
                hin.add_edge(rel, u, v)?;
            }
        }
        Ok(())
    }

    /// Adds every table's edges to `hin`.
    pub fn apply(&self, hin: &mut Hin) -> Result<()> {
        for (_, rel, table) in self.tables() {
            let (a, b) = rel.endpoints();
            for (l, r) in table {
                let u = hin.add_node(a, l)?;
                let v = hin.add_node(b, r)?;
                hin.add_edge(rel, u, v)?;
            }
        }
        Ok(())
    }
}

/// Slot index of a timestamp for the given slot width.
pub fn slot_of(time: i64, slot_secs: i64) -> i64 {
    time.div_euclid(slot_secs)
}

/// Adds one record as an instance node joined to its elements and time slot.
pub fn add_record(hin: &mut Hin, rec: &MessageRecord) -> Result<NodeId> {
    let inst = hin.add_node(NodeType::EventInstance, &rec.id)?;
    hin.set_time(inst, rec.post_time)?;
    for (kind, key) in rec.elements() {
        let el = hin.add_node(kind, key)?;
        hin.add_edge(Relation::contains(kind).expect("element type"), inst, el)?;
    }
    let slot = slot_of(rec.post_time, hin.slot_secs());
    let slot = hin.add_node(NodeType::TimeSlot, &slot.to_string())?;
    hin.add_edge(Relation::ContainsTimeSlot, inst, slot)?;
    Ok(inst)
}

/// Joins every pair of registered, numerically consecutive time slots.
pub fn link_adjacent_slots(hin: &mut Hin) -> Result<()> {
    let slots: BTreeMap<i64, u32> = hin
        .keys(NodeType::TimeSlot)
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.parse::<i64>().ok().map(|s| (s, i as u32)))
        .collect();
    let pairs: Vec<(u32, u32)> = slots
        .iter()
        .zip(slots.iter().skip(1))
        .filter(|((a, _), (b, _))| *b - *a == 1)
        .map(|((_, u), (_, v))| (*u, *v))
        .collect();
    for (u, v) in pairs {
        hin.add_edge(
            Relation::TemporalAdjacent,
            NodeId::new(NodeType::TimeSlot, u),
            NodeId::new(NodeType::TimeSlot, v),
        )?;
    }
    Ok(())
}

/// Builds and freezes the event-HIN. Node indices follow first-seen order.
pub fn build_hin(records: &[MessageRecord], tables: &EnrichmentTables, slot_secs: i64) -> Result<Hin> {
    let mut hin = Hin::new(slot_secs);
    for rec in records {
        add_record(&mut hin, rec)?;
    }
    tables.apply(&mut hin)?;
    link_adjacent_slots(&mut hin)?;
    hin.freeze();
    Ok(hin)
}

/// Adds one `Event` node per distinct event id and `ConsistsOf` edges to its
/// member instances. An event's time is its earliest member's time.
pub fn build_event_layer(hin: &Hin, assignments: &BTreeMap<u32, String>) -> Result<Hin> {
    let mut out = hin.thawed();
    let n_inst = hin.node_count(NodeType::EventInstance) as u32;
    let mut first_time: HashMap<u32, i64> = HashMap::new();
    for (&inst, event) in assignments {
        if inst >= n_inst {
            return Err(Error::UnknownInstance(inst.to_string()));
        }
        let inst = NodeId::new(NodeType::EventInstance, inst);
        let ev = out.add_node(NodeType::Event, event)?;
        out.add_edge(Relation::ConsistsOf, ev, inst)?;
        if let Some(t) = hin.time(inst) {
            let slot = first_time.entry(ev.index).or_insert(t);
            *slot = (*slot).min(t);
        }
    }
    for (ev, t) in first_time {
        out.set_time(NodeId::new(NodeType::Event, ev), t)?;
    }
    out.freeze();
    Ok(out)
}

/// Element keys of one instance, grouped like a record's fields.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InstanceElements {
    pub keywords: BTreeSet<String>,
    pub entities: BTreeSet<String>,
    pub topics: BTreeSet<String>,
    pub users: BTreeSet<String>,
    pub slots: BTreeSet<String>,
}

pub fn instance_elements(hin: &Hin, instance: u32) -> InstanceElements {
    let mut out = InstanceElements::default();
    for (kind, ids) in hin.elements_of(instance) {
        let keys = ids.iter().map(|&i| hin.key(NodeId::new(kind, i)).to_owned());
        match kind {
            NodeType::Keyword => out.keywords.extend(keys),
            NodeType::Entity => out.entities.extend(keys),
            NodeType::Topic => out.topics.extend(keys),
            NodeType::User => out.users.extend(keys),
            NodeType::TimeSlot => out.slots.extend(keys),
            _ => {}
        }
    }
    out
}

/// Dictionaries for the demo annotator.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    pub entities: HashSet<String>,
    /// word -> topic label
    pub topics: HashMap<String, String>,
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "are", "was", "were", "with", "that", "this", "from", "has", "have",
    "had", "but", "not", "its", "into", "after", "over", "our", "out", "his", "her", "they",
];

/// Whitespace keyword extraction plus dictionary entity/topic lookup.
pub fn annotate(id: &str, text: &str, time: i64, user: &str, lexicon: &Lexicon) -> MessageRecord {
    let mut rec = MessageRecord {
        id: id.to_owned(),
        text: text.to_owned(),
        post_time: time,
        user: user.to_owned(),
        keywords: Vec::new(),
        entities: Vec::new(),
        topics: Vec::new(),
    };
    for raw in text.split(|c: char| !c.is_alphanumeric()) {
        let token = raw.to_lowercase();
        if token.is_empty() {
            continue;
        }
        if let Some(topic) = lexicon.topics.get(&token) {
            rec.topics.push(topic.clone());
        }
        if lexicon.entities.contains(&token) {
            rec.entities.push(token);
        } else if token.chars().count() >= 3 && !STOPWORDS.contains(&token.as_str()) {
            rec.keywords.push(token);
        }
    }
    rec.normalize();
    rec
}
