//! Wasserstein relatedness: pairwise d², paired-vs-unpaired AUC, the class
//! distance matrix, and SVG figures (histogram, heatmap, dendrogram).
//!
//! Run with: cargo run --release --example relatedness_report

use meme::data::{synth_two_view, SynthConfig};
use meme::evaluation::relatedness;
use meme::figures::{dendrogram_svg, heatmap_svg, histogram_svg, write_svg};
use meme::model::{LikelihoodKind, MemeModel, ModalitySpec, ModelConfig};
use meme::training::{train, TrainConfig};
use ndarray::Array1;
use std::path::Path;

fn main() -> Result<(), meme::MemeError> {
    let data = synth_two_view(&SynthConfig {
        n: 500,
        seed: 3,
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
            seed: 3,
            ..Default::default()
        },
    )?;
    let s: Vec<Array1<f64>> = data.iter().filter_map(|p| p.s_payload.clone()).collect();
    let t: Vec<Array1<f64>> = data.iter().filter_map(|p| p.t_payload.clone()).collect();
    model.init_banks_from(&s, &t, 3);
    train(
        &mut model,
        &data,
        &TrainConfig {
            epochs: 20,
            learning_rate: 2e-3,
            seed: 3,
            ..Default::default()
        },
        None,
        |_, _| {},
    )?;

    let report = relatedness(&model, &data[..120])?;
    println!("separation AUC: {:?}", report.separation_auc);
    println!("class matrix diagonal (squared W2):");
    for (i, c) in report.class_ids.iter().enumerate() {
        println!("  class {c}: {:.4}", report.class_matrix[i][i]);
    }

    let out = Path::new("relatedness-figures");
    std::fs::create_dir_all(out)?;
    let flat: Vec<f64> = report.pairwise.iter().flatten().copied().collect();
    write_svg(&out.join("histogram.svg"), &histogram_svg(&flat, 30, "pairwise W2 (squared)")?)?;
    write_svg(&out.join("heatmap.svg"), &heatmap_svg(&report.class_matrix, "class relatedness", true)?)?;
    let labels: Vec<String> = report.class_ids.iter().map(|c| c.to_string()).collect();
    write_svg(&out.join("dendrogram.svg"), &dendrogram_svg(&report.dendrogram, &labels, "class dendrogram", true)?)?;
    println!("figures -> {}", out.display());
    Ok(())
}
