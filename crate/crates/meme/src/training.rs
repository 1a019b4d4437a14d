//! Optimization loop over the mask-dispatched objective with per-component
//! Adam state, deterministic seeding, checkpointing, and the
//! partial-observation freeze: an s-only step must leave the t-decoder
//! untouched down to its optimizer state, and symmetrically for t-only.

use ndarray::ArrayD;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::data::{Mask, ObservationScheme, PairedSample};
use crate::error::MemeError;
use crate::model::{Component, MemeModel};
use crate::objective::{batch_objective_grad, Gradients, ObjectiveConfig, ObjectiveTerms, SeededNoise};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub scheme: ObservationScheme,
    /// Checkpoint every this many steps; 0 keeps only initial and final.
    pub checkpoint_interval: usize,
    /// Global-norm gradient clip; None disables (oracle tests run unclipped).
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            objective: ObjectiveConfig::default(),
            scheme: ObservationScheme {
                fraction: 1.0,
                mode: crate::data::SchemeMode::KeepS,
                seed: 0,
            },
            checkpoint_interval: 0,
            grad_clip: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MemeError> {
        if self.batch_size == 0 {
            return Err(MemeError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(MemeError::Config("learning_rate must be positive".into()));
        }
        self.objective.validate()?;
        self.scheme.validate()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub mask: Mask,
    #[serde(flatten)]
    pub terms: ObjectiveTerms,
}

/// Adam with one state block per model component, so frozen components keep
/// both parameters and moments bit-identical across a step.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    state: HashMap<Component, (Vec<ArrayD<f64>>, Vec<ArrayD<f64>>, u64)>,
}

impl Adam {
    pub fn new(model: &MemeModel, lr: f64) -> Self {
        let mut state = HashMap::new();
        for &c in &Component::ALL {
            let zeros: Vec<ArrayD<f64>> = model
                .component_params(c)
                .into_iter()
                .map(|a| ArrayD::zeros(a.raw_dim()))
                .collect();
            state.insert(c, (zeros.clone(), zeros, 0));
        }
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state,
        }
    }

    /// Ascend the objective: apply one step to every component not listed in
    /// `frozen`. Frozen components are skipped entirely.
    pub fn step(&mut self, model: &mut MemeModel, grads: &Gradients, frozen: &[Component]) {
        for &c in &Component::ALL {
            if frozen.contains(&c) {
                continue;
            }
            let (m, v, t) = self.state.get_mut(&c).unwrap();
            *t += 1;
            let bc1 = 1.0 - self.beta1.powi(*t as i32);
            let bc2 = 1.0 - self.beta2.powi(*t as i32);
            let garrs = &grads.per[&c];
            let mut idx = 0;
            let (beta1, beta2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
            model.for_each_param_mut(c, |p| {
                let g = garrs[idx].as_slice().unwrap();
                let ms = m[idx].as_slice_mut().unwrap();
                let vs = v[idx].as_slice_mut().unwrap();
                for i in 0..p.len() {
                    ms[i] = beta1 * ms[i] + (1.0 - beta1) * g[i];
                    vs[i] = beta2 * vs[i] + (1.0 - beta2) * g[i] * g[i];
                    let mhat = ms[i] / bc1;
                    let vhat = vs[i] / bc2;
                    p[i] += lr * mhat / (vhat.sqrt() + eps);
                }
                idx += 1;
            });
        }
    }
}

fn frozen_for(mask: Mask) -> &'static [Component] {
    match mask {
        Mask::Both => &[],
        // the absent modality's likelihood head is the frozen parameter
        Mask::SOnly => &[Component::DecT],
        Mask::TOnly => &[Component::DecS],
    }
}

pub struct TrainOutput {
    pub history: Vec<StepRecord>,
    pub last_checkpoint: Option<PathBuf>,
}

/// Run directory layout: `config.json`, `metrics.jsonl`, `ckpt-initial`,
/// periodic `ckpt-step-N`, and `ckpt-final` on success.
pub fn train(
    model: &mut MemeModel,
    data: &[PairedSample],
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
    mut on_epoch: impl FnMut(usize, &MemeModel),
) -> Result<TrainOutput, MemeError> {
    cfg.validate()?;
    use std::io::Write;
    let mut metrics_file = match run_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("config.json"), serde_json::to_vec_pretty(cfg)?)?;
            Some(std::io::BufWriter::new(std::fs::File::create(
                dir.join("metrics.jsonl"),
            )?))
        }
        None => None,
    };
    let mut last_checkpoint = None;
    if let Some(dir) = run_dir {
        let p = dir.join("ckpt-initial");
        model.save(&p)?;
        last_checkpoint = Some(p);
    }

    // homogeneous batches by mask keep the freeze invariant assertable
    let mut pools: HashMap<Mask, Vec<usize>> = HashMap::new();
    for (i, s) in data.iter().enumerate() {
        pools.entry(s.mask).or_default().push(i);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut noise = SeededNoise::new(rng.next_u64());
    let mut opt = Adam::new(model, cfg.learning_rate);
    let mut history = Vec::new();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut batches: Vec<(Mask, Vec<usize>)> = Vec::new();
        for mask in [Mask::Both, Mask::SOnly, Mask::TOnly] {
            if let Some(pool) = pools.get(&mask) {
                let mut idxs = pool.clone();
                idxs.shuffle(&mut rng);
                for chunk in idxs.chunks(cfg.batch_size) {
                    batches.push((mask, chunk.to_vec()));
                }
            }
        }
        batches.shuffle(&mut rng);

        for (mask, idxs) in batches {
            let batch: Vec<PairedSample> = idxs.iter().map(|&i| data[i].clone()).collect();
            let result = batch_objective_grad(model, &batch, &cfg.objective, &mut noise);
            let (terms, mut grads) = match result {
                Ok(ok) => ok,
                Err(e) => {
                    return Err(MemeError::Numerical(format!(
                        "aborting at step {step} (epoch {epoch}): {e}; last good checkpoint: {:?}",
                        last_checkpoint
                    )));
                }
            };
            if let Some(clip) = cfg.grad_clip {
                let norm = grads.global_norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            opt.step(model, &grads, frozen_for(mask));
            step += 1;

            let rec = StepRecord {
                step,
                epoch,
                mask,
                terms,
            };
            if let Some(f) = metrics_file.as_mut() {
                serde_json::to_writer(&mut *f, &rec)?;
                writeln!(f)?;
            }
            history.push(rec);

            if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
                if let Some(dir) = run_dir {
                    let p = dir.join(format!("ckpt-step-{step}"));
                    model.save(&p)?;
                    last_checkpoint = Some(p);
                }
            }
        }
        on_epoch(epoch, model);
    }

    if let Some(f) = metrics_file.as_mut() {
        f.flush()?;
    }
    if let Some(dir) = run_dir {
        let p = dir.join("ckpt-final");
        model.save(&p)?;
        last_checkpoint = Some(p);
    }
    Ok(TrainOutput {
        history,
        last_checkpoint,
    })
}
