//! Measurement suite: cross-modal generation and coherence, latent linear
//! probes, Wasserstein relatedness (pairwise distances, class matrix,
//! dendrogram, paired-vs-unpaired separation), CCA, and an importance
//! sampled conditional marginal likelihood.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::data::PairedSample;
use crate::distributions::{gauss_log_prob, gauss_rsample};
use crate::error::MemeError;
use crate::model::{MemeModel, Mlp, ModalityId};
use crate::objective::NoiseSource;
use crate::tape::{logsumexp_slice, Tape};

/// Encode with the source modality, sample a latent, decode with the target
/// decoder and return the likelihood mode.
pub fn cross_generate(
    model: &MemeModel,
    from: ModalityId,
    payload: &Array1<f64>,
    noise: &mut dyn NoiseSource,
) -> Result<Array1<f64>, MemeError> {
    let d = model.encode(from, payload)?;
    let eps = noise.std_normal(model.latent_dim);
    let z = gauss_rsample(&d, &eps)?;
    let to = from.other();
    let out = model.decoder(to).forward_plain(&z);
    let lik = model.likelihood_from_output(to, out)?;
    Ok(lik.mode())
}

/// A payload → class-logits classifier. With no hidden layers this is a
/// single affine map, which is what the linear probe requires.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeClassifier {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ProbeClassifier {
    fn to_mlp(&self) -> Mlp {
        Mlp {
            sizes: self.sizes.clone(),
            weights: self
                .weights
                .iter()
                .zip(self.sizes.windows(2))
                .map(|(w, win)| {
                    Array2::from_shape_vec((win[1], win[0]), w.clone()).unwrap()
                })
                .collect(),
            biases: self.biases.iter().map(|b| Array1::from_vec(b.clone())).collect(),
        }
    }

    fn from_mlp(mlp: &Mlp) -> Self {
        Self {
            sizes: mlp.sizes.clone(),
            weights: mlp
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: mlp.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn predict(&self, payload: &Array1<f64>) -> usize {
        let logits = self.to_mlp().forward_plain(payload);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &[Array1<f64>], labels: &[u32]) -> f64 {
        let correct = features
            .iter()
            .zip(labels)
            .filter(|(f, &l)| self.predict(f) == l as usize)
            .count();
        correct as f64 / features.len().max(1) as f64
    }

    pub fn save(&self, path: &Path) -> Result<(), MemeError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemeError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Train a softmax classifier by Adam on the cross-entropy. `hidden` empty
/// gives the single affine layer of the linear probe.
pub fn train_classifier(
    features: &[Array1<f64>],
    labels: &[u32],
    n_classes: usize,
    hidden: &[usize],
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ProbeClassifier, MemeError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(MemeError::Data("bad classifier training set".into()));
    }
    let classes: BTreeSet<u32> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(MemeError::Data("training labels contain a single class".into()));
    }
    let dim = features[0].len();
    let mut sizes = vec![dim];
    sizes.extend_from_slice(hidden);
    sizes.push(n_classes);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut mlp = Mlp::init(&sizes, &mut rng);

    // flat Adam state across all layer parameters
    let count: usize = mlp.weights.iter().map(|w| w.len()).sum::<usize>()
        + mlp.biases.iter().map(|b| b.len()).sum::<usize>();
    let mut m = vec![0.0; count];
    let mut v = vec![0.0; count];
    let mut t = 0u64;
    let batch = 32usize;

    let mut order: Vec<usize> = (0..features.len()).collect();
    for _epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            use rayon::prelude::*;
            let grads: Vec<Vec<f64>> = chunk
                .par_iter()
                .map(|&i| classifier_grad(&mlp, &features[i], labels[i] as usize))
                .collect();
            let mut g = vec![0.0; count];
            for gs in &grads {
                for (a, b) in g.iter_mut().zip(gs) {
                    *a += b / chunk.len() as f64;
                }
            }
            t += 1;
            let bc1 = 1.0 - 0.9f64.powi(t as i32);
            let bc2 = 1.0 - 0.999f64.powi(t as i32);
            let mut idx = 0;
            let mut apply = |p: &mut [f64]| {
                for x in p.iter_mut() {
                    m[idx] = 0.9 * m[idx] + 0.1 * g[idx];
                    v[idx] = 0.999 * v[idx] + 0.001 * g[idx] * g[idx];
                    *x -= lr * (m[idx] / bc1) / ((v[idx] / bc2).sqrt() + 1e-8);
                    idx += 1;
                }
            };
            for li in 0..mlp.weights.len() {
                apply(mlp.weights[li].as_slice_mut().unwrap());
                apply(mlp.biases[li].as_slice_mut().unwrap());
            }
        }
    }
    Ok(ProbeClassifier::from_mlp(&mlp))
}

/// Gradient of the cross-entropy at one example, flattened in layer order.
fn classifier_grad(mlp: &Mlp, x: &Array1<f64>, label: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let mut ids = Vec::new();
    for (w, b) in mlp.weights.iter().zip(mlp.biases.iter()) {
        ids.push(tape.leaf(w.clone().into_dyn()));
        ids.push(tape.leaf(b.clone().into_dyn()));
    }
    let input = tape.leaf(x.clone().into_dyn());
    let logits = mlp.forward_tape(&mut tape, &ids, input);
    let lse = tape.logsumexp_vec(logits);
    let target = tape.slice(logits, label, 1);
    let ts = tape.sum(target);
    let nll = tape.sub(lse, ts);
    let grads = tape.backward(nll);
    let mut out = Vec::new();
    for id in ids {
        match &grads[id] {
            Some(g) => out.extend(g.iter().copied()),
            None => out.extend(std::iter::repeat(0.0).take(tape.value(id).len())),
        }
    }
    out
}

/// Fraction of cross-generations whose predicted class matches the source
/// label. The classifier must have been trained independently of the model.
pub fn coherence_score(
    model: &MemeModel,
    pairs: &[PairedSample],
    from: ModalityId,
    classifier: &ProbeClassifier,
    noise: &mut dyn NoiseSource,
) -> Result<f64, MemeError> {
    if pairs.is_empty() {
        return Err(MemeError::Data("empty test set".into()));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for p in pairs {
        let label = p
            .label
            .ok_or_else(|| MemeError::Data("coherence requires labeled data".into()))?;
        let src = match from {
            ModalityId::S => &p.s_payload,
            ModalityId::T => &p.t_payload,
        };
        let Some(src) = src else { continue };
        let gen = cross_generate(model, from, src, noise)?;
        if classifier.predict(&gen) == label as usize {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(MemeError::Data("no usable samples for coherence".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Train/test split, affine probe on posterior-mean latents (or sampled
/// latents when `sample_latents` is set), held-out accuracy.
#[allow(clippy::too_many_arguments)]
pub fn latent_probe_accuracy(
    model: &MemeModel,
    id: ModalityId,
    payloads: &[Array1<f64>],
    labels: &[u32],
    n_classes: usize,
    sample_latents: bool,
    seed: u64,
    noise: &mut dyn NoiseSource,
) -> Result<f64, MemeError> {
    if payloads.len() != labels.len() || payloads.is_empty() {
        return Err(MemeError::Data("bad probe data".into()));
    }
    let classes: BTreeSet<u32> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(MemeError::Data("probe data contains a single class".into()));
    }
    let mut latents = Vec::with_capacity(payloads.len());
    for p in payloads {
        let d = model.encode(id, p)?;
        let z = if sample_latents {
            let eps = noise.std_normal(model.latent_dim);
            gauss_rsample(&d, &eps)?
        } else {
            d.mean
        };
        latents.push(z);
    }
    let mut order: Vec<usize> = (0..latents.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let split = (latents.len() * 4) / 5;
    let (train_idx, test_idx) = order.split_at(split.max(1).min(latents.len() - 1));
    let train_f: Vec<Array1<f64>> = train_idx.iter().map(|&i| latents[i].clone()).collect();
    let train_l: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
    let probe = train_classifier(&train_f, &train_l, n_classes, &[], 200, 5e-2, seed)?;
    let test_f: Vec<Array1<f64>> = test_idx.iter().map(|&i| latents[i].clone()).collect();
    let test_l: Vec<u32> = test_idx.iter().map(|&i| labels[i]).collect();
    Ok(probe.accuracy(&test_f, &test_l))
}

/// One merge of the agglomerative clustering: the two cluster ids joined and
/// the (average-linkage) distance at which they merged. Original items are
/// clusters `0..n`; merge k creates cluster `n + k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DendrogramMerge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelatednessReport {
    /// Squared 2-Wasserstein distances d_ij between q(z|s_i) and q(z|t_j).
    pub pairwise: Vec<Vec<f64>>,
    /// Area under the ROC of −d_ij predicting "same underlying pair";
    /// absent for degenerate single-pair batches.
    pub separation_auc: Option<f64>,
    /// Mean distance between class u of modality s and class v of modality
    /// t; NaN where a class is missing from one side.
    pub class_matrix: Vec<Vec<f64>>,
    pub class_ids: Vec<u32>,
    /// Classes absent from one of the modalities in this batch.
    pub missing_classes: Vec<u32>,
    pub dendrogram: Vec<DendrogramMerge>,
}

pub fn relatedness(
    model: &MemeModel,
    batch: &[PairedSample],
) -> Result<RelatednessReport, MemeError> {
    if batch.is_empty() {
        return Err(MemeError::Data("empty relatedness batch".into()));
    }
    let mut enc_s = Vec::new();
    let mut enc_t = Vec::new();
    let mut labels = Vec::new();
    for p in batch {
        let s = p
            .s_payload
            .as_ref()
            .ok_or_else(|| MemeError::Data("relatedness needs paired data".into()))?;
        let t = p
            .t_payload
            .as_ref()
            .ok_or_else(|| MemeError::Data("relatedness needs paired data".into()))?;
        enc_s.push(model.encode(ModalityId::S, s)?);
        enc_t.push(model.encode(ModalityId::T, t)?);
        labels.push(
            p.label
                .ok_or_else(|| MemeError::Data("relatedness class matrix needs labels".into()))?,
        );
    }
    let m = batch.len();
    let mut pairwise = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            pairwise[i][j] = crate::distributions::w2_gaussian_diag(&enc_s[i], &enc_t[j])?;
        }
    }

    let separation_auc = if m > 1 {
        // positives: diagonal (true pairs); score = -d
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    pos.push(-pairwise[i][j]);
                } else {
                    neg.push(-pairwise[i][j]);
                }
            }
        }
        Some(auc(&pos, &neg))
    } else {
        None
    };

    let class_ids: Vec<u32> = labels.iter().copied().collect::<BTreeSet<u32>>().into_iter().collect();
    let c = class_ids.len();
    let mut class_matrix = vec![vec![f64::NAN; c]; c];
    let mut missing = BTreeSet::new();
    for (ui, &u) in class_ids.iter().enumerate() {
        for (vi, &v) in class_ids.iter().enumerate() {
            let mut acc = 0.0;
            let mut count = 0usize;
            for i in 0..m {
                for j in 0..m {
                    if labels[i] == u && labels[j] == v {
                        acc += pairwise[i][j];
                        count += 1;
                    }
                }
            }
            if count > 0 {
                class_matrix[ui][vi] = acc / count as f64;
            } else {
                missing.insert(u);
                missing.insert(v);
            }
        }
    }

    let dendrogram = average_linkage(&symmetrize(&class_matrix));
    Ok(RelatednessReport {
        pairwise,
        separation_auc,
        class_matrix,
        class_ids,
        missing_classes: missing.into_iter().collect(),
        dendrogram,
    })
}

fn symmetrize(k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = k.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = 0.5 * (k[i][j] + k[j][i]);
        }
    }
    out
}

/// Mann–Whitney AUC with tie correction.
fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &p in pos {
        for &n in neg {
            acc += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (pos.len() as f64 * neg.len() as f64)
}

/// Agglomerative clustering with average linkage on a symmetric distance
/// matrix (NaN entries are ignored by treating them as +inf).
pub fn average_linkage(dist: &[Vec<f64>]) -> Vec<DendrogramMerge> {
    let n = dist.len();
    if n < 2 {
        return Vec::new();
    }
    // active clusters: (id, member item indices)
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut next_id = n;
    let mut merges = Vec::new();
    let d = |a: &[usize], b: &[usize]| -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for &i in a {
            for &j in b {
                let v = dist[i][j];
                if v.is_finite() {
                    acc += v;
                    count += 1;
                }
            }
        }
        if count == 0 {
            f64::INFINITY
        } else {
            acc / count as f64
        }
    };
    while clusters.len() > 1 {
        let mut best = (0usize, 1usize, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let v = d(&clusters[a].1, &clusters[b].1);
                if v < best.2 {
                    best = (a, b, v);
                }
            }
        }
        let (a, b, h) = best;
        let (id_b, members_b) = clusters.remove(b);
        let (id_a, members_a) = clusters.remove(a);
        let mut members = members_a;
        members.extend(members_b);
        merges.push(DendrogramMerge {
            left: id_a,
            right: id_b,
            height: h,
            size: members.len(),
        });
        clusters.push((next_id, members));
        next_id += 1;
    }
    merges
}

pub use crate::linalg::cca_correlation;

/// Importance-sampled conditional marginal: log p(source | target) using
/// q(z|source) as the proposal, with the conditional prior p(z|target).
pub fn marginal_loglik(
    model: &MemeModel,
    s_payload: &Array1<f64>,
    t_payload: &Array1<f64>,
    direction: crate::objective::Direction,
    n_importance: usize,
    noise: &mut dyn NoiseSource,
) -> Result<f64, MemeError> {
    if n_importance < 1 {
        return Err(MemeError::Config("n_importance must be >= 1".into()));
    }
    let (src_id, x_src, x_tgt) = match direction {
        crate::objective::Direction::StoT => (ModalityId::S, s_payload, t_payload),
        crate::objective::Direction::TtoS => (ModalityId::T, t_payload, s_payload),
    };
    let tgt_id = src_id.other();
    let q = model.encode(src_id, x_src)?;
    let prior = model.encode(tgt_id, x_tgt)?;
    let mut log_ws = Vec::with_capacity(n_importance);
    for _ in 0..n_importance {
        let eps = noise.std_normal(model.latent_dim);
        let z = gauss_rsample(&q, &eps)?;
        let out = model.decoder(src_id).forward_plain(&z);
        let lik = model.likelihood_from_output(src_id, out)?;
        let lw = lik.log_prob(x_src)? + gauss_log_prob(&prior, &z)? - gauss_log_prob(&q, &z)?;
        log_ws.push(lw);
    }
    Ok(logsumexp_slice(&log_ws) - (n_importance as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn auc_separates_perfectly() {
        assert_eq!(auc(&[3.0, 4.0], &[1.0, 2.0]), 1.0);
        assert_eq!(auc(&[1.0], &[1.0]), 0.5);
    }

    #[test]
    fn average_linkage_merges_closest_first_and_is_monotone() {
        let d = vec![
            vec![0.0, 1.0, 8.0],
            vec![1.0, 0.0, 9.0],
            vec![8.0, 9.0, 0.0],
        ];
        let merges = average_linkage(&d);
        assert_eq!(merges.len(), 2);
        assert_eq!((merges[0].left, merges[0].right), (0, 1));
        assert!((merges[0].height - 1.0).abs() < 1e-12);
        assert!((merges[1].height - 8.5).abs() < 1e-12);
        assert!(merges[1].height >= merges[0].height);
    }

    #[test]
    fn linear_probe_on_separable_latents_is_perfect() {
        // latents constructed linearly separable by label
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let off = if c == 0 { -2.0 } else { 2.0 };
            feats.push(array![off + 0.01 * i as f64, -off]);
            labels.push(c as u32);
        }
        let probe = train_classifier(&feats, &labels, 2, &[], 300, 5e-2, 0).unwrap();
        assert_eq!(probe.accuracy(&feats, &labels), 1.0);
    }

    #[test]
    fn shuffled_labels_probe_near_chance() {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut feats = Vec::new();
        let mut labels: Vec<u32> = Vec::new();
        for i in 0..200 {
            let c = (i % 4) as u32;
            feats.push(array![
                (c as f64) + 0.1 * rng.gen::<f64>(),
                -(c as f64) + 0.1 * rng.gen::<f64>()
            ]);
            labels.push(c);
        }
        labels.shuffle(&mut rng);
        let split = 160;
        let probe = train_classifier(&feats[..split].to_vec(), &labels[..split].to_vec(), 4, &[], 150, 5e-2, 0).unwrap();
        let acc = probe.accuracy(&feats[split..].to_vec(), &labels[split..].to_vec());
        assert!(acc < 0.45, "shuffled-label accuracy should be near chance, got {acc}");
    }

    #[test]
    fn single_class_probe_is_error() {
        let feats = vec![array![1.0], array![2.0]];
        let labels = vec![0, 0];
        assert!(train_classifier(&feats, &labels, 2, &[], 10, 1e-2, 0).is_err());
    }

    #[test]
    fn cca_trivial_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let a = Array2::from_shape_fn((200, 3), |_| rng.gen::<f64>() - 0.5);
        let r_same = cca_correlation(&a, &a).unwrap();
        assert!(r_same > 1.0 - 1e-6);
        // affine image keeps correlation 1
        let mut b = Array2::zeros((200, 2));
        for i in 0..200 {
            b[[i, 0]] = 2.0 * a[[i, 0]] - a[[i, 2]] + 3.0;
            b[[i, 1]] = 0.5 * a[[i, 1]] + 1.0;
        }
        let r_aff = cca_correlation(&a, &b).unwrap();
        assert!(r_aff > 1.0 - 1e-6, "affine CCA = {r_aff}");
        // independent features: compare against a permutation baseline
        let c = Array2::from_shape_fn((200, 3), |_| rng.gen::<f64>() - 0.5);
        let r_ind = cca_correlation(&a, &c).unwrap();
        assert!(r_ind < 0.35, "independent CCA = {r_ind}");
    }
}
