//! Train on the synthetic two-view dataset and watch the objective climb.
//!
//! Run with: cargo run --release --example train_synthetic

use meme::data::{synth_two_view, ObservationScheme, SchemeMode, SynthConfig};
use meme::model::{LikelihoodKind, MemeModel, ModalitySpec, ModelConfig};
use meme::objective::ObjectiveConfig;
use meme::training::{train, TrainConfig};
use ndarray::Array1;

fn main() -> Result<(), meme::MemeError> {
    let data = synth_two_view(&SynthConfig {
        n: 600,
        seed: 7,
        ..Default::default()
    })?;
    let dim_s = data[0].s_payload.as_ref().unwrap().len();
    let dim_t = data[0].t_payload.as_ref().unwrap().len();

    let mut model = MemeModel::new(
        ModalitySpec::new("s", vec![dim_s], LikelihoodKind::Laplace)?,
        ModalitySpec::new("t", vec![dim_t], LikelihoodKind::Laplace)?,
        ModelConfig {
            latent_dim: 4,
            hidden: vec![32],
            n_pseudo: 10,
            seed: 7,
            ..Default::default()
        },
    )?;
    let s: Vec<Array1<f64>> = data.iter().filter_map(|p| p.s_payload.clone()).collect();
    let t: Vec<Array1<f64>> = data.iter().filter_map(|p| p.t_payload.clone()).collect();
    model.init_banks_from(&s, &t, 7);

    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 32,
        learning_rate: 2e-3,
        seed: 7,
        objective: ObjectiveConfig {
            mc_samples: 4,
            ..Default::default()
        },
        scheme: ObservationScheme {
            fraction: 1.0,
            mode: SchemeMode::KeepS,
            seed: 7,
        },
        ..Default::default()
    };
    let out = train(&mut model, &data, &cfg, None, |epoch, _| {
        if epoch % 5 == 0 {
            println!("finished epoch {epoch}");
        }
    })?;

    let first: f64 = out.history[..10].iter().map(|r| r.terms.total).sum::<f64>() / 10.0;
    let n = out.history.len();
    let last: f64 = out.history[n - 10..].iter().map(|r| r.terms.total).sum::<f64>() / 10.0;
    println!("objective: first-10 mean {first:.3} -> last-10 mean {last:.3}");
    Ok(())
}
