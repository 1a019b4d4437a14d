//! Cross-modal coherence: generate t from s (and vice versa) and score the
//! generations with independently trained payload classifiers.
//!
//! Run with: cargo run --release --example cross_coherence

use meme::data::{synth_two_view, SynthConfig};
use meme::evaluation::{coherence_score, train_classifier};
use meme::model::{LikelihoodKind, MemeModel, ModalityId, ModalitySpec, ModelConfig};
use meme::objective::SeededNoise;
use meme::training::{train, TrainConfig};
use ndarray::Array1;

fn main() -> Result<(), meme::MemeError> {
    let data = synth_two_view(&SynthConfig {
        n: 600,
        seed: 11,
        ..Default::default()
    })?;
    let dim = data[0].s_payload.as_ref().unwrap().len();
    let mut model = MemeModel::new(
        ModalitySpec::new("s", vec![dim], LikelihoodKind::Laplace)?,
        ModalitySpec::new("t", vec![dim], LikelihoodKind::Laplace)?,
        ModelConfig {
            latent_dim: 4,
            hidden: vec![32],
            n_pseudo: 10,
            seed: 11,
            ..Default::default()
        },
    )?;
    let s: Vec<Array1<f64>> = data.iter().filter_map(|p| p.s_payload.clone()).collect();
    let t: Vec<Array1<f64>> = data.iter().filter_map(|p| p.t_payload.clone()).collect();
    let labels: Vec<u32> = data.iter().map(|p| p.label.unwrap()).collect();
    model.init_banks_from(&s, &t, 11);

    let cfg = TrainConfig {
        epochs: 25,
        learning_rate: 2e-3,
        seed: 11,
        ..Default::default()
    };
    train(&mut model, &data, &cfg, None, |_, _| {})?;

    // classifiers see only raw payloads, never the model
    let n_classes = *labels.iter().max().unwrap() as usize + 1;
    let clf_t = train_classifier(&t, &labels, n_classes, &[32], 60, 1e-2, 1)?;
    let clf_s = train_classifier(&s, &labels, n_classes, &[32], 60, 1e-2, 2)?;
    println!("classifier accuracy: t {:.3}, s {:.3}", clf_t.accuracy(&t, &labels), clf_s.accuracy(&s, &labels));

    let mut noise = SeededNoise::new(99);
    let c_st = coherence_score(&model, &data, ModalityId::S, &clf_t, &mut noise)?;
    let c_ts = coherence_score(&model, &data, ModalityId::T, &clf_s, &mut noise)?;
    println!("coherence s→t = {c_st:.3}, t→s = {c_ts:.3}");
    Ok(())
}
