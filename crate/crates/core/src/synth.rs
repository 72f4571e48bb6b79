//! Seeded synthetic corpora with planted events and evolution chains.
//!
//! Each event owns a private pool of keywords, entities, topics and users;
//! the rest of each vocabulary is shared background. An instance keeps each
//! pool element with probability `intra_rate` and, per pool slot, adds a
//! background element with probability `inter_rate`. Events in one chain
//! also share a chain anchor entity.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_corpus, EnrichmentTables, MessageRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementCounts {
    pub keywords: usize,
    pub entities: usize,
    pub topics: usize,
    pub users: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_events: usize,
    /// Inclusive range.
    pub instances_per_event: (usize, usize),
    pub vocab: ElementCounts,
    pub pool: ElementCounts,
    pub intra_rate: f64,
    pub inter_rate: f64,
    pub n_chains: usize,
    /// Inclusive range.
    pub events_per_chain: (usize, usize),
    pub start_time: i64,
    /// Event start times fall in `[start_time, start_time + span_secs)`.
    pub span_secs: i64,
    /// Instances fall within this long after their event starts.
    pub instance_spread_secs: i64,
    /// Gap between consecutive events of a chain.
    pub chain_gap_secs: i64,
    /// Fraction of same-event keyword pairs listed as synonyms, and so on
    /// for the other intra-pool enrichment tables.
    pub enrichment_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_events: 50,
            instances_per_event: (10, 10),
            vocab: ElementCounts {
                keywords: 1000,
                entities: 300,
                topics: 80,
                users: 400,
            },
            pool: ElementCounts {
                keywords: 12,
                entities: 4,
                topics: 1,
                users: 5,
            },
            intra_rate: 0.8,
            inter_rate: 0.05,
            n_chains: 10,
            events_per_chain: (2, 4),
            start_time: 1_699_999_200,
            span_secs: 3 * 24 * 3600,
            instance_spread_secs: 3 * 3600,
            chain_gap_secs: 12 * 3600,
            enrichment_rate: 0.5,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.n_events == 0 {
            return bad("n_events must be positive".into());
        }
        let (lo, hi) = self.instances_per_event;
        if lo == 0 || lo > hi {
            return bad(format!("instances_per_event range ({lo}, {hi}) is empty or zero"));
        }
        if !(self.intra_rate > 0.0 && self.intra_rate <= 1.0) {
            return bad(format!("intra_rate {} outside (0, 1]", self.intra_rate));
        }
        if !(0.0..1.0).contains(&self.inter_rate) || self.inter_rate >= self.intra_rate {
            return bad(format!("inter_rate {} must be in [0, intra_rate)", self.inter_rate));
        }
        if !(0.0..=1.0).contains(&self.enrichment_rate) {
            return bad(format!("enrichment_rate {} outside [0, 1]", self.enrichment_rate));
        }
        let p = self.pool;
        if p.keywords == 0 || p.entities == 0 || p.topics == 0 || p.users == 0 {
            return bad("every pool size must be positive".into());
        }
        let (clo, chi) = self.events_per_chain;
        if self.n_chains > 0 && (clo == 0 || clo > chi) {
            return bad(format!("events_per_chain range ({clo}, {chi}) is empty or zero"));
        }
        if self.n_chains * chi > self.n_events {
            return bad(format!(
                "{} chains of up to {chi} events need more than {} events",
                self.n_chains, self.n_events
            ));
        }
        let need = [
            ("keywords", self.vocab.keywords, p.keywords * self.n_events),
            ("entities", self.vocab.entities, p.entities * self.n_events + self.n_chains),
            ("topics", self.vocab.topics, p.topics * self.n_events),
            ("users", self.vocab.users, p.users * self.n_events),
        ];
        for (name, have, want) in need {
            let want = want + usize::from(self.inter_rate > 0.0);
            if have < want {
                return bad(format!("{name} vocabulary {have} is smaller than the {want} pooled elements"));
            }
        }
        if self.span_secs <= 0 || self.instance_spread_secs <= 0 || self.chain_gap_secs < 0 {
            return bad("time spans must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    /// Sorted by time, then id.
    pub records: Vec<MessageRecord>,
    pub tables: EnrichmentTables,
    /// Planted event of each record, aligned with `records`.
    pub truth_events: Vec<u32>,
    /// Planted chain of each event; events outside chains get their own.
    pub truth_chains: Vec<u32>,
}

impl SyntheticCorpus {
    /// Writes `corpus.jsonl`, `enrich/`, `truth_events.tsv` (record id, event)
    /// and `truth_chains.tsv` (event, chain) into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let corpus = dir.join("corpus.jsonl");
        let file = std::fs::File::create(&corpus).map_err(|e| Error::io(&corpus, e))?;
        write_corpus(&self.records, std::io::BufWriter::new(file))?;
        self.tables.write_dir(&dir.join("enrich"))?;
        let mut ev = Vec::new();
        for (r, e) in self.records.iter().zip(&self.truth_events) {
            writeln!(ev, "{}\t{e}", r.id).expect("vec write");
        }
        let path = dir.join("truth_events.tsv");
        std::fs::write(&path, ev).map_err(|e| Error::io(&path, e))?;
        let mut ch = Vec::new();
        for (e, c) in self.truth_chains.iter().enumerate() {
            writeln!(ch, "{e}\t{c}").expect("vec write");
        }
        let path = dir.join("truth_chains.tsv");
        std::fs::write(&path, ch).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

struct Vocab {
    pools: Vec<Vec<String>>,
    background: Vec<String>,
}

fn split_vocab(prefix: &str, size: usize, pool: usize, events: usize, extra: usize, rng: &mut ChaCha8Rng) -> (Vocab, Vec<String>) {
    let mut names: Vec<String> = (0..size).map(|i| format!("{prefix}{i}")).collect();
    names.shuffle(rng);
    let pools = (0..events).map(|e| names[e * pool..(e + 1) * pool].to_vec()).collect();
    let extras = names[events * pool..events * pool + extra].to_vec();
    let background = names[events * pool + extra..].to_vec();
    (Vocab { pools, background }, extras)
}

fn pick(pool: &[String], background: &[String], spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out: Vec<String> = pool.iter().filter(|_| rng.gen_bool(spec.intra_rate)).cloned().collect();
    if !background.is_empty() {
        for _ in 0..pool.len() {
            if rng.gen_bool(spec.inter_rate) {
                out.push(background[rng.gen_range(0..background.len())].clone());
            }
        }
    }
    out
}

/// Generates a corpus; the same spec always yields the same corpus.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_events;
    let (kw, _) = split_vocab("kw", spec.vocab.keywords, spec.pool.keywords, n, 0, &mut rng);
    let (ent, anchors) = split_vocab("ent", spec.vocab.entities, spec.pool.entities, n, spec.n_chains, &mut rng);
    let (top, _) = split_vocab("topic", spec.vocab.topics, spec.pool.topics, n, 0, &mut rng);
    let (usr, _) = split_vocab("user", spec.vocab.users, spec.pool.users, n, 0, &mut rng);

    // chains take consecutive event ids; the remaining events stand alone
    let mut chain_of = vec![0u32; n];
    let mut chain_anchor: Vec<Option<usize>> = vec![None; n];
    let mut chain_len = vec![1usize; n];
    let mut next_event = 0;
    for c in 0..spec.n_chains {
        let len = rng.gen_range(spec.events_per_chain.0..=spec.events_per_chain.1);
        for _ in 0..len {
            chain_of[next_event] = c as u32;
            chain_anchor[next_event] = Some(c);
            chain_len[next_event] = len;
            next_event += 1;
        }
    }
    for (extra, e) in (next_event..n).enumerate() {
        chain_of[e] = (spec.n_chains + extra) as u32;
    }

    let mut start = vec![0i64; n];
    let mut e = 0;
    while e < n {
        let len = chain_len[e];
        let room = (spec.span_secs - spec.instance_spread_secs - (len as i64 - 1) * spec.chain_gap_secs).max(1);
        let base = spec.start_time + rng.gen_range(0..room);
        for k in 0..len {
            start[e + k] = base + k as i64 * spec.chain_gap_secs;
        }
        e += len;
    }

    let mut tables = EnrichmentTables::default();
    for e in 0..n {
        let (kws, ents, tops, usrs) = (&kw.pools[e], &ent.pools[e], &top.pools[e], &usr.pools[e]);
        for pair in kws.chunks(2).filter(|p| p.len() == 2) {
            if rng.gen_bool(spec.enrichment_rate) {
                tables.synonyms.push((pair[0].clone(), pair[1].clone()));
            }
        }
        for (i, k) in kws.iter().enumerate() {
            if rng.gen_bool(spec.enrichment_rate) {
                tables.keyword_topics.push((k.clone(), tops[i % tops.len()].clone()));
            }
        }
        for (i, en) in ents.iter().enumerate() {
            if rng.gen_bool(spec.enrichment_rate) {
                tables.entity_keywords.push((en.clone(), kws[i % kws.len()].clone()));
            }
        }
        for pair in ents.windows(2) {
            if rng.gen_bool(spec.enrichment_rate) {
                tables.entity_relations.push((pair[0].clone(), pair[1].clone()));
            }
        }
        for pair in usrs.windows(2) {
            if rng.gen_bool(spec.enrichment_rate) {
                tables.user_friends.push((pair[0].clone(), pair[1].clone()));
            }
        }
    }

    let mut rows: Vec<(MessageRecord, u32)> = Vec::new();
    for e in 0..n {
        let count = rng.gen_range(spec.instances_per_event.0..=spec.instances_per_event.1);
        let mut entity_pool = ent.pools[e].clone();
        if let Some(c) = chain_anchor[e] {
            entity_pool.push(anchors[c].clone());
        }
        for k in 0..count {
            let mut keywords = pick(&kw.pools[e], &kw.background, spec, &mut rng);
            if keywords.is_empty() {
                keywords.push(kw.pools[e][rng.gen_range(0..kw.pools[e].len())].clone());
            }
            let entities = pick(&entity_pool, &ent.background, spec, &mut rng);
            let topics = pick(&top.pools[e], &top.background, spec, &mut rng);
            let user = if rng.gen_bool(spec.intra_rate) || usr.background.is_empty() {
                usr.pools[e][rng.gen_range(0..usr.pools[e].len())].clone()
            } else {
                usr.background[rng.gen_range(0..usr.background.len())].clone()
            };
            let mut rec = MessageRecord {
                id: format!("ev{e}-m{k}"),
                text: keywords.join(" "),
                post_time: start[e] + rng.gen_range(0..spec.instance_spread_secs),
                user,
                keywords,
                entities,
                topics,
            };
            rec.normalize();
            rows.push((rec, e as u32));
        }
    }
    rows.sort_by(|a, b| (a.0.post_time, &a.0.id).cmp(&(b.0.post_time, &b.0.id)));
    let (records, truth_events) = rows.into_iter().unzip();
    Ok(SyntheticCorpus {
        records,
        tables,
        truth_events,
        truth_chains: chain_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_corpus() {
        let spec = SyntheticSpec {
            n_events: 1,
            instances_per_event: (1, 1),
            n_chains: 0,
            ..Default::default()
        };
        let c = generate_synthetic(&spec).unwrap();
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.truth_events, vec![0]);
        assert_eq!(c.truth_chains, vec![0]);
    }

    #[test]
    fn seeded_and_sorted() {
        let a = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let b = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 500);
        assert!(a.records.windows(2).all(|w| w[0].post_time <= w[1].post_time));
        let other = generate_synthetic(&SyntheticSpec {
            seed: 43,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn chain_events_are_time_ordered() {
        let c = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let mut first = vec![i64::MAX; 50];
        for (r, &e) in c.records.iter().zip(&c.truth_events) {
            first[e as usize] = first[e as usize].min(r.post_time);
        }
        for e in 1..50 {
            if c.truth_chains[e] == c.truth_chains[e - 1] {
                assert!(first[e] > first[e - 1]);
            }
        }
    }

    #[test]
    fn infeasible_specs() {
        let small_vocab = SyntheticSpec {
            vocab: ElementCounts {
                keywords: 10,
                ..SyntheticSpec::default().vocab
            },
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&small_vocab), Err(Error::InfeasibleSpec(_))));
        let inverted = SyntheticSpec {
            intra_rate: 0.1,
            inter_rate: 0.2,
            ..Default::default()
        };
        assert!(generate_synthetic(&inverted).is_err());
    }
}
