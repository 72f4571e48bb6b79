//! Pairwise popularity GCN.
//!
//! A two-layer graph convolution over the KIES adjacency
//! `A(ω) = Σ_m ω_m S_m` maps node features to representations whose vector
//! norms carry the class signal: a pair is predicted to share a class when
//! the ratio of their norms is small. The meta-path weights ω are trained
//! jointly with the layer weights, so the learned ω can be exported back to
//! KIES. The angle head (cosine between representations) is the ablation.

mod grad;
mod train;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{event_features, instance_features};
use crate::hin::{Hin, NodeType};
use crate::metapath::{MetaPathSet, SimilarityStack, WeightVector};

pub use grad::{loss_and_gradients, BatchLoss, Gradients};
pub use train::{
    classify_many, classify_test, load_checkpoint, pair_accuracy, sample_pairs, save_checkpoint,
    train, Checkpoint, EpochStats, PairLabel, PairPool, PairSample, TestClass, TrainConfig,
};

/// Popularity offset `c` in `f(x) = -log10(x - 1 + c)`.
pub const DEFAULT_C: f64 = 0.01;

/// Cosine threshold of the angle head.
pub const ANGLE_THRESHOLD: f64 = 0.5;

/// Logit scale of the angle head; puts its upper bound at 2, the same as the
/// popularity head's `f(1)`.
pub const ANGLE_GAIN: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairHead {
    /// Modulus-ratio popularity score.
    Popularity,
    /// Cosine angle score (PA-GCN ablation).
    Angle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `d x h`
    pub w0: Array2<f64>,
    /// `h x F`
    pub w1: Array2<f64>,
    pub omega_logits: Array1<f64>,
    pub c: f64,
    pub seed: u64,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl ModelParams {
    /// Glorot-uniform layer weights and uniform ω.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, paths: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams {
            w0: glorot(input_dim, hidden_dim, &mut rng),
            w1: glorot(hidden_dim, output_dim, &mut rng),
            omega_logits: Array1::zeros(paths),
            c: DEFAULT_C,
            seed,
        }
    }

    /// ω as the softmax of the logits: nonnegative and summing to one.
    pub fn omega(&self) -> Array1<f64> {
        softmax(&self.omega_logits)
    }

    pub fn weight_vector(&self) -> WeightVector {
        WeightVector::new(self.omega().to_vec()).expect("softmax output is a valid weight vector")
    }

    pub fn input_dim(&self) -> usize {
        self.w0.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w0.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn paths(&self) -> usize {
        self.omega_logits.len()
    }
}

pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|l| (l - max).exp());
    let total = exp.sum();
    exp / total
}

/// `A(ω) = Σ_m ω_m S_m`.
pub fn combine_similarity(s: &[Array2<f64>], omega: ArrayView1<'_, f64>) -> Array2<f64> {
    let n = s.first().map_or(0, |m| m.nrows());
    let mut a = Array2::zeros((n, n));
    for (m, &w) in s.iter().zip(omega.iter()) {
        a.scaled_add(w, m);
    }
    a
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D_ii = Σ_j (A + I)_ij`.
pub fn normalize_adjacency(a: &Array2<f64>) -> Array2<f64> {
    normalized_with_scale(a).0
}

pub(crate) fn normalized_with_scale(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    for i in 0..n {
        b[[i, i]] += 1.0;
    }
    let degree = b.sum_axis(Axis(1));
    let r = degree.mapv(|d| 1.0 / d.sqrt());
    for ((i, j), v) in b.indexed_iter_mut() {
        *v *= r[i] * r[j];
    }
    (b, degree)
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Forward {
    pub a_hat: Array2<f64>,
    pub degree: Array1<f64>,
    /// `Â X`
    pub ax: Array2<f64>,
    /// `Â X W0`, pre-activation
    pub pre_hidden: Array2<f64>,
    pub hidden: Array2<f64>,
    /// `Â H`
    pub a_hidden: Array2<f64>,
    pub z: Array2<f64>,
}

fn check_inputs(params: &ModelParams, s: &[Array2<f64>], x: &Array2<f64>) -> Result<()> {
    if s.len() != params.paths() {
        return Err(Error::Dimension(format!(
            "{} similarity matrices for {} path weights",
            s.len(),
            params.paths()
        )));
    }
    let n = x.nrows();
    if let Some(m) = s.iter().find(|m| m.dim() != (n, n)) {
        return Err(Error::Dimension(format!(
            "similarity matrix {:?} for {n} feature rows",
            m.dim()
        )));
    }
    if x.ncols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "feature width {} vs input dim {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    Ok(())
}

/// Full forward pass with `Â(ω)` rebuilt from the current ω.
pub fn forward_pass(params: &ModelParams, s: &[Array2<f64>], x: &Array2<f64>) -> Result<Forward> {
    check_inputs(params, s, x)?;
    let a = combine_similarity(s, params.omega().view());
    let (a_hat, degree) = normalized_with_scale(&a);
    let ax = a_hat.dot(x);
    let pre_hidden = ax.dot(&params.w0);
    let hidden = pre_hidden.mapv(|v| v.max(0.0));
    let a_hidden = a_hat.dot(&hidden);
    let z = a_hidden.dot(&params.w1);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            stage: "forward",
            epoch: 0,
            batch: 0,
        });
    }
    Ok(Forward {
        a_hat,
        degree,
        ax,
        pre_hidden,
        hidden,
        a_hidden,
        z,
    })
}

/// `Z = Â(ω) · relu(Â(ω) X W0) · W1`.
pub fn forward(params: &ModelParams, s: &[Array2<f64>], x: &Array2<f64>) -> Result<Array2<f64>> {
    forward_pass(params, s, x).map(|f| f.z)
}

/// Dense per-path similarity matrices and hashed features restricted to
/// `anchors` (nodes of the path set's anchor type).
pub fn training_inputs(
    hin: &Hin,
    paths: &MetaPathSet,
    anchors: &[usize],
    feature_dim: usize,
) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
    let s = SimilarityStack::compute(hin, paths)?.dense(anchors);
    let x = match paths.anchor() {
        NodeType::Event => event_features(hin, feature_dim),
        _ => instance_features(hin, feature_dim),
    };
    Ok((s, x.select(Axis(0), anchors)))
}

fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// A pair whose representation has zero length cannot be scored; it is
/// treated as a different-class prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("zero-norm representation")]
pub struct ZeroNorm;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopularityScore {
    /// Larger norm over smaller norm, `>= 1`.
    pub ratio: f64,
    /// `-log10(ratio - 1 + c)`.
    pub score: f64,
}

impl PopularityScore {
    /// `sigmoid(score) >= 0.5`.
    pub fn same_class(&self) -> bool {
        self.score >= 0.0
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.score)
    }
}

pub fn popularity_from_ratio(ratio: f64, c: f64) -> f64 {
    -(ratio - 1.0 + c).log10()
}

/// Ratio at which the popularity score crosses zero: `2 - c`.
pub fn popularity_boundary(c: f64) -> f64 {
    2.0 - c
}

pub fn popularity_score(
    vi: ArrayView1<'_, f64>,
    vj: ArrayView1<'_, f64>,
    c: f64,
) -> std::result::Result<PopularityScore, ZeroNorm> {
    let (ni, nj) = (norm(vi), norm(vj));
    if ni == 0.0 || nj == 0.0 {
        return Err(ZeroNorm);
    }
    let ratio = ni.max(nj) / ni.min(nj);
    Ok(PopularityScore {
        ratio,
        score: popularity_from_ratio(ratio, c),
    })
}

/// Cosine similarity of the pair (angle head).
pub fn pa_gcn_score(vi: ArrayView1<'_, f64>, vj: ArrayView1<'_, f64>) -> std::result::Result<f64, ZeroNorm> {
    let (ni, nj) = (norm(vi), norm(vj));
    if ni == 0.0 || nj == 0.0 {
        return Err(ZeroNorm);
    }
    Ok(vi.dot(&vj) / (ni * nj))
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl PairHead {
    /// Logit of the same-class probability, or `ZeroNorm`.
    pub fn logit(self, vi: ArrayView1<'_, f64>, vj: ArrayView1<'_, f64>, c: f64) -> std::result::Result<f64, ZeroNorm> {
        match self {
            PairHead::Popularity => popularity_score(vi, vj, c).map(|p| p.score),
            PairHead::Angle => pa_gcn_score(vi, vj).map(|cos| ANGLE_GAIN * (cos - ANGLE_THRESHOLD)),
        }
    }

    /// Same-class prediction; zero-norm pairs are predicted different.
    pub fn predicts_same(self, vi: ArrayView1<'_, f64>, vj: ArrayView1<'_, f64>, c: f64) -> bool {
        self.logit(vi, vj, c).is_ok_and(|l| l >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalize_zero_is_identity() {
        let a = Array2::zeros((3, 3));
        assert_eq!(normalize_adjacency(&a), Array2::<f64>::eye(3));
    }

    #[test]
    fn normalize_two_node_graph() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let got = normalize_adjacency(&a);
        assert!(got.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn normalize_preserves_symmetry() {
        let a = array![[0.0, 0.3, 0.9], [0.3, 1.0, 0.0], [0.9, 0.0, 0.2]];
        let n = normalize_adjacency(&a);
        assert_eq!(n, n.t());
    }

    #[test]
    fn identity_network_passes_features_through() {
        let x = array![[0.5, 1.0], [2.0, 0.0], [0.0, 0.25]];
        let mut p = ModelParams::init(2, 2, 2, 1, 1);
        p.w0 = Array2::eye(2);
        p.w1 = Array2::eye(2);
        let s = vec![Array2::zeros((3, 3))];
        assert_eq!(forward(&p, &s, &x).unwrap(), x);
        let doubled = forward(&p, &s, &(&x * 2.0)).unwrap();
        assert_eq!(doubled, &x * 2.0);
    }

    #[test]
    fn forward_shape_and_dims() {
        let p = ModelParams::init(4, 3, 2, 2, 9);
        let s = vec![Array2::eye(5) * 0.5, Array2::zeros((5, 5))];
        let x = Array2::from_elem((5, 4), 0.3);
        let z = forward(&p, &s, &x).unwrap();
        assert_eq!(z.dim(), (5, 2));
        assert!(z.iter().all(|v| v.is_finite()));
        assert!(forward(&p, &s[..1], &x).is_err());
    }

    #[test]
    fn popularity_fixed_points() {
        assert_eq!(popularity_from_ratio(1.0, DEFAULT_C), 2.0);
        assert!((sigmoid(2.0) - 0.8807970779778823).abs() < 1e-15);
        let s3 = popularity_from_ratio(3.0, DEFAULT_C);
        assert!((s3 + 0.30319605742048883).abs() < 1e-12);
        assert!(popularity_from_ratio(popularity_boundary(DEFAULT_C), DEFAULT_C).abs() < 1e-12);
    }

    #[test]
    fn popularity_score_is_symmetric() {
        let a = array![3.0, 4.0];
        let b = array![1.0, 0.0];
        let ab = popularity_score(a.view(), b.view(), DEFAULT_C).unwrap();
        let ba = popularity_score(b.view(), a.view(), DEFAULT_C).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.ratio, 5.0);
        assert!(!ab.same_class());
        assert_eq!(popularity_score(a.view(), array![0.0, 0.0].view(), DEFAULT_C), Err(ZeroNorm));
        assert!(!PairHead::Popularity.predicts_same(a.view(), array![0.0, 0.0].view(), DEFAULT_C));
    }

    #[test]
    fn angle_head() {
        let a = array![1.0, 2.0];
        assert!((pa_gcn_score(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-15);
        assert!(PairHead::Angle.predicts_same(a.view(), a.view(), DEFAULT_C));
        let o = array![2.0, -1.0];
        assert_eq!(pa_gcn_score(a.view(), o.view()).unwrap(), 0.0);
        assert!(!PairHead::Angle.predicts_same(a.view(), o.view(), DEFAULT_C));
    }

    #[test]
    fn omega_is_a_distribution() {
        let mut p = ModelParams::init(2, 2, 2, 3, 0);
        p.omega_logits = array![3.0, -1.0, 0.5];
        let w = p.omega();
        assert!((w.sum() - 1.0).abs() < 1e-15);
        assert!(w.iter().all(|v| *v > 0.0));
    }
}
