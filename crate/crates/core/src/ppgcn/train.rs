//! Pair sampling, SGD training, test-time class assignment and checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward, loss_and_gradients, ModelParams, PairHead, DEFAULT_C};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    pub label: PairLabel,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairPool {
    pub pairs: Vec<PairSample>,
    pub diagnostics: Vec<String>,
}

impl PairPool {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == PairLabel::Positive).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Anchors drawn per epoch (R); each yields one positive and one
    /// negative pair.
    pub anchors_per_round: usize,
    /// Pairs per SGD step (B).
    pub batch_size: usize,
    /// SGD steps per epoch (E).
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub feature_dim: usize,
    /// Set from the top-level config seed.
    #[serde(skip)]
    pub seed: u64,
    pub head: PairHead,
    /// Keep ω uniform and train only the layer weights.
    pub freeze_omega: bool,
    pub c: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            anchors_per_round: 1024,
            batch_size: 64,
            batches_per_epoch: 64,
            learning_rate: 0.05,
            epochs: 20,
            hidden_dim: 64,
            output_dim: 32,
            feature_dim: crate::features::DEFAULT_DIM,
            seed: 7,
            head: PairHead::Popularity,
            freeze_omega: false,
            c: DEFAULT_C,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("anchors_per_round", self.anchors_per_round),
            ("batch_size", self.batch_size),
            ("batches_per_epoch", self.batches_per_epoch),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("feature_dim", self.feature_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("train.{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config("train.c must be positive".into()));
        }
        Ok(())
    }
}

fn members_by_class(classes: &BTreeMap<usize, u32>) -> BTreeMap<u32, Vec<usize>> {
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (&anchor, &class) in classes {
        out.entry(class).or_default().push(anchor);
    }
    out
}

/// Draws `anchors` anchors uniformly (with replacement); each contributes a
/// positive pair with a random classmate and a negative pair with a random
/// anchor from another class. Anchors from singleton classes only get the
/// negative pair.
pub fn sample_pairs(
    classes: &BTreeMap<usize, u32>,
    anchors: usize,
    rng: &mut impl Rng,
) -> Result<PairPool> {
    let by_class = members_by_class(classes);
    if by_class.len() < 2 {
        return Err(Error::Sampling(format!(
            "need at least 2 classes, found {}",
            by_class.len()
        )));
    }
    let all: Vec<(usize, u32)> = classes.iter().map(|(&a, &c)| (a, c)).collect();
    let mut pool = PairPool::default();
    for _ in 0..anchors {
        let (anchor, class) = all[rng.gen_range(0..all.len())];
        let mates = &by_class[&class];
        if mates.len() < 2 {
            pool.diagnostics
                .push(format!("anchor {anchor}: class {class} has one member, no positive pair"));
        } else {
            let mut j = anchor;
            while j == anchor {
                j = *mates.choose(rng).expect("non-empty class");
            }
            pool.pairs.push(PairSample {
                i: anchor,
                j,
                label: PairLabel::Positive,
            });
        }
        let other = loop {
            let (j, c) = all[rng.gen_range(0..all.len())];
            if c != class {
                break j;
            }
        };
        pool.pairs.push(PairSample {
            i: anchor,
            j: other,
            label: PairLabel::Negative,
        });
    }
    Ok(pool)
}

/// Fraction of pairs whose same/different prediction matches the label.
pub fn pair_accuracy(z: &Array2<f64>, pairs: &[PairSample], head: PairHead, c: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs
        .iter()
        .filter(|p| head.predicts_same(z.row(p.i), z.row(p.j), c) == (p.label == PairLabel::Positive))
        .count();
    correct as f64 / pairs.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Pair accuracy over the epoch's pool after its updates.
    pub pair_accuracy: f64,
    pub zero_norm_pairs: usize,
}

/// Plain SGD. Each epoch draws a fresh pool of `2R` pairs and takes `E`
/// steps, each on `B` pairs drawn from the pool with replacement.
pub fn train(
    params: &ModelParams,
    s: &[Array2<f64>],
    x: &Array2<f64>,
    classes: &BTreeMap<usize, u32>,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    config.validate()?;
    let mut params = params.clone();
    params.c = config.c;
    let mut history = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok((params, history));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        let pool = sample_pairs(classes, config.anchors_per_round, &mut rng)?;
        if pool.pairs.is_empty() {
            return Err(Error::Sampling("empty pair pool".into()));
        }
        let mut loss_sum = 0.0;
        let mut zero_norm = 0;
        for batch_no in 0..config.batches_per_epoch {
            let batch: Vec<PairSample> = (0..config.batch_size)
                .map(|_| pool.pairs[rng.gen_range(0..pool.pairs.len())])
                .collect();
            let out = loss_and_gradients(&params, s, x, &batch, config.head).map_err(|e| match e {
                Error::Numeric { stage, .. } => Error::Numeric {
                    stage,
                    epoch,
                    batch: batch_no,
                },
                other => other,
            })?;
            let g = &out.grads;
            let finite = g.w0.iter().chain(g.w1.iter()).chain(g.omega_logits.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Numeric {
                    stage: "gradient",
                    epoch,
                    batch: batch_no,
                });
            }
            params.w0.scaled_add(-lr, &g.w0);
            params.w1.scaled_add(-lr, &g.w1);
            if !config.freeze_omega {
                params.omega_logits.scaled_add(-lr, &g.omega_logits);
            }
            loss_sum += out.loss;
            zero_norm += out.zero_norm;
        }
        let z = forward(&params, s, x).map_err(|_| Error::Numeric {
            stage: "forward",
            epoch,
            batch: config.batches_per_epoch,
        })?;
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / config.batches_per_epoch as f64,
            pair_accuracy: pair_accuracy(&z, &pool.pairs, config.head, params.c),
            zero_norm_pairs: zero_norm,
        });
    }
    Ok((params, history))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestClass {
    pub class: u32,
    /// Fraction of the class's training members within norm ratio `[1, 2)`.
    pub probability: f64,
    /// No class had any matching member; `class` is then the lowest id.
    pub no_match: bool,
}

fn norms(z: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(z.rows().into_iter().map(|r| r.dot(&r).sqrt()))
}

fn classify_by_norm(norm: &Array1<f64>, by_class: &BTreeMap<u32, Vec<usize>>, t: usize) -> Result<TestClass> {
    let mut best: Option<TestClass> = None;
    for (&class, members) in by_class {
        let members: Vec<usize> = members.iter().copied().filter(|&m| m != t).collect();
        if members.is_empty() {
            continue;
        }
        let hits = members
            .iter()
            .filter(|&&m| {
                let (a, b) = (norm[t], norm[m]);
                a > 0.0 && b > 0.0 && a.max(b) / a.min(b) < 2.0
            })
            .count();
        let probability = hits as f64 / members.len() as f64;
        if best.as_ref().is_none_or(|b| probability > b.probability) {
            best = Some(TestClass {
                class,
                probability,
                no_match: false,
            });
        }
    }
    let mut best = best.ok_or_else(|| Error::Classify("no training members".into()))?;
    best.no_match = best.probability == 0.0;
    Ok(best)
}

/// Assigns test anchor `t` to the training class with the largest fraction of
/// members whose norm ratio with `t` lies in `[1, 2)`. Ties go to the lowest
/// class id.
pub fn classify_test(
    params: &ModelParams,
    s: &[Array2<f64>],
    x: &Array2<f64>,
    train_classes: &BTreeMap<usize, u32>,
    t: usize,
) -> Result<TestClass> {
    let z = forward(params, s, x)?;
    classify_many(&z, train_classes, &[t]).map(|mut v| v.remove(0))
}

/// [`classify_test`] for many anchors over precomputed representations.
pub fn classify_many(
    z: &Array2<f64>,
    train_classes: &BTreeMap<usize, u32>,
    targets: &[usize],
) -> Result<Vec<TestClass>> {
    let norm = norms(z);
    let by_class = members_by_class(train_classes);
    targets.iter().map(|&t| classify_by_norm(&norm, &by_class, t)).collect()
}

/// On-disk model: dimensions, row-major weights, ω logits, `c` and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub paths: usize,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub omega_logits: Vec<f64>,
    pub c: f64,
    pub seed: u64,
}

const CHECKPOINT_FORMAT: &str = "evhin-ppgcn-v1";

impl From<&ModelParams> for Checkpoint {
    fn from(p: &ModelParams) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            input_dim: p.input_dim(),
            hidden_dim: p.hidden_dim(),
            output_dim: p.output_dim(),
            paths: p.paths(),
            w0: p.w0.iter().copied().collect(),
            w1: p.w1.iter().copied().collect(),
            omega_logits: p.omega_logits.to_vec(),
            c: p.c,
            seed: p.seed,
        }
    }
}

impl TryFrom<Checkpoint> for ModelParams {
    type Error = Error;

    fn try_from(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unknown checkpoint format `{}`", ck.format)));
        }
        let shape_err = |what: &str| Error::Dimension(format!("checkpoint {what}"));
        Ok(ModelParams {
            w0: Array2::from_shape_vec((ck.input_dim, ck.hidden_dim), ck.w0).map_err(|_| shape_err("w0"))?,
            w1: Array2::from_shape_vec((ck.hidden_dim, ck.output_dim), ck.w1).map_err(|_| shape_err("w1"))?,
            omega_logits: if ck.omega_logits.len() == ck.paths {
                Array1::from(ck.omega_logits)
            } else {
                return Err(shape_err("omega_logits"));
            },
            c: ck.c,
            seed: ck.seed,
        })
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&Checkpoint::from(params))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.try_into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn classes(pairs: &[(usize, u32)]) -> BTreeMap<usize, u32> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn two_by_two_sampling() {
        let c = classes(&[(0, 0), (1, 0), (2, 1), (3, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = sample_pairs(&c, 2, &mut rng).unwrap();
        assert_eq!(pool.positives(), 2);
        assert_eq!(pool.negatives(), 2);
        for p in &pool.pairs {
            assert_ne!(p.i, p.j);
            assert_eq!(c[&p.i] == c[&p.j], p.label == PairLabel::Positive);
        }
    }

    #[test]
    fn singleton_class_skips_positive() {
        let c = classes(&[(0, 0), (1, 1), (2, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool = sample_pairs(&c, 30, &mut rng).unwrap();
        assert_eq!(pool.negatives(), 30);
        let singles = pool.pairs.iter().filter(|p| p.i == 0 && p.label == PairLabel::Negative).count();
        assert!(singles > 0);
        assert_eq!(pool.diagnostics.len(), singles);
        assert_eq!(pool.positives(), 30 - singles);
    }

    #[test]
    fn sampling_is_seeded() {
        let c = classes(&[(0, 0), (1, 0), (2, 1), (3, 1), (4, 2)]);
        let a = sample_pairs(&c, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_pairs(&c, 50, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_pairs(&classes(&[(0, 0), (1, 0)]), 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let p = ModelParams::init(2, 2, 2, 1, 0);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let s = vec![Array2::zeros((2, 2))];
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let (out, hist) = train(&p, &s, &x, &classes(&[(0, 0), (1, 1)]), &cfg).unwrap();
        assert_eq!(out, p);
        assert!(hist.is_empty());
    }

    #[test]
    fn classify_by_norm_bands() {
        // class 0 norms ~1, class 1 norms ~5
        let z = array![[1.0, 0.0], [1.2, 0.0], [5.0, 0.0], [5.5, 0.0], [1.1, 0.0], [100.0, 0.0]];
        let train = classes(&[(0, 0), (1, 0), (2, 1), (3, 1)]);
        let got = classify_many(&z, &train, &[4, 5]).unwrap();
        assert_eq!(got[0].class, 0);
        assert_eq!(got[0].probability, 1.0);
        assert!(!got[0].no_match);
        assert_eq!(got[1].class, 0);
        assert!(got[1].no_match);
        assert_eq!(got[1].probability, 0.0);
    }

    #[test]
    fn classify_ties_go_low() {
        let z = array![[1.0], [1.5], [1.0]];
        let train = classes(&[(0, 4), (1, 2)]);
        let got = classify_many(&z, &train, &[2]).unwrap();
        assert_eq!(got[0].class, 2);
        assert!(classify_many(&z, &BTreeMap::new(), &[2]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let p = ModelParams::init(3, 4, 2, 5, 11);
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }
}
