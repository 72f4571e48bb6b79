//! Clustering and classification metrics and the similarity threshold sweep.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::Empty("label list"));
    }
    Ok(())
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(A; B) / ((H(A) + H(B)) / 2)`. Two
/// single-cluster partitions score 1. Labels are compared for equality only,
/// so noise markers count as one more cluster.
pub fn nmi<T: Eq + Hash>(pred: &[T], truth: &[T]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let n = pred.len() as f64;
    let mut a: HashMap<&T, usize> = HashMap::new();
    let mut b: HashMap<&T, usize> = HashMap::new();
    let mut joint: HashMap<(&T, &T), usize> = HashMap::new();
    for (p, t) in pred.iter().zip(truth) {
        *a.entry(p).or_default() += 1;
        *b.entry(t).or_default() += 1;
        *joint.entry((p, t)).or_default() += 1;
    }
    let ha = entropy(a.values().copied(), n);
    let hb = entropy(b.values().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(p, t), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (a[p] as f64 * b[t] as f64)).ln()
        })
        .sum();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Accuracy and F1 macro-averaged over the classes present in `truth`.
pub fn accuracy_f1<T: Eq + Hash>(pred: &[T], truth: &[T]) -> Result<(f64, f64)> {
    check_lengths(pred.len(), truth.len())?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let mut tally: HashMap<&T, (usize, usize, usize)> = HashMap::new();
    for t in truth {
        tally.entry(t).or_default();
    }
    for (p, t) in pred.iter().zip(truth) {
        if p == t {
            tally.get_mut(t).expect("truth class").0 += 1;
        } else {
            tally.get_mut(t).expect("truth class").2 += 1;
            if let Some(e) = tally.get_mut(p) {
                e.1 += 1;
            }
        }
    }
    let f1_sum: f64 = tally
        .values()
        .map(|&(tp, fp, fn_)| {
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .sum();
    Ok((correct as f64 / pred.len() as f64, f1_sum / tally.len() as f64))
}

/// A similarity score for a pair and whether the pair truly belongs together.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPair {
    pub score: f64,
    pub same: bool,
}

/// Every pair `i < j` of a similarity matrix, labeled by class equality.
pub fn labeled_pairs<T: Eq>(k: &Array2<f64>, classes: &[T]) -> Result<Vec<ScoredPair>> {
    if k.nrows() != classes.len() || k.ncols() != classes.len() {
        return Err(Error::LengthMismatch {
            left: k.nrows(),
            right: classes.len(),
        });
    }
    let n = classes.len();
    Ok((0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| ScoredPair {
            score: k[[i, j]],
            same: classes[i] == classes[j],
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    /// `(threshold, accuracy)` for each threshold from 0 to 1.
    pub curve: Vec<(f64, f64)>,
    pub best_index: usize,
    pub best_threshold: f64,
    pub best_accuracy: f64,
    /// Clustering radius matching the best threshold, `1 - threshold`.
    pub eps: f64,
}

impl Sweep {
    /// The best accuracy is reached strictly inside the sweep and beats both
    /// endpoints.
    pub fn has_interior_maximum(&self) -> bool {
        let last = self.curve.len() - 1;
        self.best_index > 0
            && self.best_index < last
            && self.best_accuracy > self.curve[0].1
            && self.best_accuracy > self.curve[last].1
    }

    /// Tab-separated `threshold accuracy` rows with a header.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "threshold\taccuracy")?;
        for (t, a) in &self.curve {
            writeln!(out, "{t:.4}\t{a:.6}")?;
        }
        Ok(())
    }
}

/// Predicts "same" iff `score >= θ` for `θ = k·step`, `k = 0..=1/step`, and
/// returns the accuracy curve with its first maximum.
pub fn threshold_sweep(pairs: &[ScoredPair], step: f64) -> Result<Sweep> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair set"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("sweep step must be in (0, 1], got {step}")));
    }
    let steps = (1.0 / step).round() as usize;
    let curve: Vec<(f64, f64)> = (0..=steps)
        .into_par_iter()
        .map(|k| {
            let theta = k as f64 / steps as f64;
            let hits = pairs.iter().filter(|p| (p.score >= theta) == p.same).count();
            (theta, hits as f64 / pairs.len() as f64)
        })
        .collect();
    let mut best_index = 0;
    for (k, &(_, acc)) in curve.iter().enumerate() {
        if acc > curve[best_index].1 {
            best_index = k;
        }
    }
    Ok(Sweep {
        best_threshold: curve[best_index].0,
        best_accuracy: curve[best_index].1,
        eps: (steps - best_index) as f64 / steps as f64,
        best_index,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[5, 5, 9, 9]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-15);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(nmi(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn accuracy_f1_examples() {
        assert_eq!(accuracy_f1(&["a", "b"], &["a", "b"]).unwrap(), (1.0, 1.0));
        assert_eq!(accuracy_f1(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), (0.0, 0.0));
        let (acc, f1) = accuracy_f1(&["A", "A", "B", "B", "B"], &["A", "A", "B", "B", "C"]).unwrap();
        assert!((acc - 0.8).abs() < 1e-15);
        // F1: A = 1, B = 4/5, C = 0
        assert!((f1 - 0.6).abs() < 1e-15);
    }

    fn pairs(same: &[f64], diff: &[f64]) -> Vec<ScoredPair> {
        same.iter()
            .map(|&score| ScoredPair { score, same: true })
            .chain(diff.iter().map(|&score| ScoredPair { score, same: false }))
            .collect()
    }

    #[test]
    fn separable_sweep_ties_go_low() {
        let s = threshold_sweep(&pairs(&[0.9, 0.9], &[0.1, 0.1, 0.1]), 0.01).unwrap();
        assert_eq!(s.curve.len(), 101);
        assert_eq!(s.best_threshold, 0.11);
        assert_eq!(s.best_accuracy, 1.0);
        assert_eq!(s.eps, 0.89);
        assert!(s.has_interior_maximum());
    }

    #[test]
    fn operating_points() {
        let s = threshold_sweep(&pairs(&[0.31, 0.5], &[0.305, 0.1]), 0.01).unwrap();
        assert_eq!((s.best_threshold, s.eps), (0.31, 0.69));
        let s = threshold_sweep(&pairs(&[0.2, 0.5], &[0.195, 0.1]), 0.01).unwrap();
        assert_eq!((s.best_threshold, s.eps), (0.2, 0.8));
    }

    proptest! {
        #[test]
        fn nmi_symmetric_and_label_invariant(
            a in prop::collection::vec(0u8..4, 1..40),
            seed in prop::collection::vec(0u8..4, 40),
        ) {
            let b: Vec<u8> = a.iter().zip(&seed).map(|(x, s)| (x + s) % 3).collect();
            let ab = nmi(&a, &b).unwrap();
            prop_assert!((ab - nmi(&b, &a).unwrap()).abs() < 1e-12);
            let relabeled: Vec<u8> = a.iter().map(|x| 9 - x).collect();
            prop_assert!((ab - nmi(&relabeled, &b).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn sweep_endpoints_are_base_rates(
            same in prop::collection::vec(0.0f64..0.99, 0..20),
            diff in prop::collection::vec(0.0f64..0.99, 0..20),
        ) {
            prop_assume!(!same.is_empty() || !diff.is_empty());
            let p = pairs(&same, &diff);
            let s = threshold_sweep(&p, 0.01).unwrap();
            let n = p.len() as f64;
            prop_assert_eq!(s.curve[0].1, same.len() as f64 / n);
            prop_assert_eq!(s.curve[100].1, diff.len() as f64 / n);
        }
    }
}
