//! Deterministic hashed bag-of-elements features, the built-in stand-in for
//! a learned document embedding.

use ndarray::Array2;

use crate::hin::{Hin, NodeId, NodeType, Relation};

pub const DEFAULT_DIM: usize = 128;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn bucket(kind: NodeType, key: &str, dim: usize) -> usize {
    let mut bytes = Vec::with_capacity(key.len() + 12);
    bytes.extend_from_slice(kind.name().as_bytes());
    bytes.push(b':');
    bytes.extend_from_slice(key.as_bytes());
    (fnv1a(&bytes) % dim as u64) as usize
}

/// One row per instance: counts of hashed (type, key) elements, each row
/// scaled to unit length. Time slots are left out.
pub fn instance_features(hin: &Hin, dim: usize) -> Array2<f64> {
    assert!(dim >= 1, "feature dimension must be positive");
    let n = hin.node_count(NodeType::EventInstance);
    let mut x = Array2::zeros((n, dim));
    for kind in [NodeType::Keyword, NodeType::Entity, NodeType::Topic, NodeType::User] {
        let rel = Relation::contains(kind).expect("element type");
        for (inst, el) in hin.edges(rel) {
            let key = hin.key(NodeId::new(kind, el));
            x[[inst as usize, bucket(kind, key, dim)]] += 1.0;
        }
    }
    normalize_rows(&mut x);
    x
}

/// Event rows: sum of member instance rows, scaled to unit length.
pub fn event_features(hin: &Hin, dim: usize) -> Array2<f64> {
    let inst = instance_features(hin, dim);
    let n = hin.node_count(NodeType::Event);
    let mut x = Array2::zeros((n, dim));
    for (ev, member) in hin.edges(Relation::ConsistsOf) {
        let row = inst.row(member as usize).to_owned();
        let mut target = x.row_mut(ev as usize);
        target += &row;
    }
    normalize_rows(&mut x);
    x
}

fn normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
}
