//! Partial observation: train with only a fraction of samples paired and
//! compare latent-probe accuracy across observation fractions. Unpaired
//! samples fall back to the unimodal bound with the pseudo-input mixture
//! prior of the absent modality.
//!
//! Run with: cargo run --release --example partial_observation

use meme::data::{
    apply_observation_scheme, synth_two_view, ObservationScheme, SchemeMode, SynthConfig,
};
use meme::evaluation::latent_probe_accuracy;
use meme::model::{LikelihoodKind, MemeModel, ModalityId, ModalitySpec, ModelConfig};
use meme::objective::SeededNoise;
use meme::training::{train, TrainConfig};
use ndarray::Array1;

fn main() -> Result<(), meme::MemeError> {
    let base = synth_two_view(&SynthConfig {
        n: 600,
        seed: 5,
        ..Default::default()
    })?;
    let dim = base[0].s_payload.as_ref().unwrap().len();
    let labels: Vec<u32> = base.iter().map(|p| p.label.unwrap()).collect();
    let s_all: Vec<Array1<f64>> = base.iter().filter_map(|p| p.s_payload.clone()).collect();
    let t_all: Vec<Array1<f64>> = base.iter().filter_map(|p| p.t_payload.clone()).collect();

    for fraction in [1.0, 0.25, 0.0625] {
        let data = apply_observation_scheme(
            &base,
            &ObservationScheme {
                fraction,
                mode: SchemeMode::KeepS,
                seed: 5,
            },
        )?;
        let mut model = MemeModel::new(
            ModalitySpec::new("s", vec![dim], LikelihoodKind::Laplace)?,
            ModalitySpec::new("t", vec![dim], LikelihoodKind::Laplace)?,
            ModelConfig {
                latent_dim: 6,
                hidden: vec![48],
                n_pseudo: 10,
                seed: 5,
                ..Default::default()
            },
        )?;
        model.init_banks_from(&s_all, &t_all, 5);
        train(
            &mut model,
            &data,
            &TrainConfig {
                epochs: 70,
                learning_rate: 2e-3,
                seed: 5,
                ..Default::default()
            },
            None,
            |_, _| {},
        )?;
        let mut noise = SeededNoise::new(1);
        let acc = latent_probe_accuracy(
            &model,
            ModalityId::S,
            &s_all,
            &labels,
            4,
            false,
            1,
            &mut noise,
        )?;
        println!("fraction {fraction:>6}: probe accuracy {acc:.3}");
    }
    Ok(())
}
