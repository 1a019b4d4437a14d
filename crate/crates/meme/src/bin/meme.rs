//! Batch operator surface: dataset preparation, classifier fitting,
//! training, and evaluation with figure emission.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use meme::data::{
    apply_observation_scheme, count_masks, load_dataset, mask_checksum, pair_by_class,
    save_dataset, synth_two_view, DatasetManifest, Mask, ObservationScheme, PairedSample,
    SchemeMode, SynthConfig,
};
use meme::error::MemeError;
use meme::evaluation::{
    coherence_score, latent_probe_accuracy, marginal_loglik, relatedness, train_classifier,
    ProbeClassifier,
};
use meme::model::{LikelihoodKind, MemeModel, ModalityId, ModalitySpec, ModelConfig};
use meme::objective::{Direction, ObjectiveConfig, SeededNoise};
use meme::training::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "meme", version, about = "mutually supervised multimodal VAE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    KeepS,
    KeepT,
    Split,
}

impl From<SchemeArg> for SchemeMode {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::KeepS => SchemeMode::KeepS,
            SchemeArg::KeepT => SchemeMode::KeepT,
            SchemeArg::Split => SchemeMode::Split,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a paired dataset and write its manifest.
    Prepare {
        /// `synth` or `mnist-svhn`
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        multiplicity: usize,
        #[arg(long, value_enum, default_value_t = SchemeArg::KeepS)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Directory holding the raw MNIST/SVHN files.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Per-corpus cap for mnist-svhn.
        #[arg(long, default_value_t = 5000)]
        subset: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_scale: f64,
    },
    /// Fit a payload classifier used by coherence evaluation.
    FitClassifier {
        #[arg(long)]
        dataset: PathBuf,
        /// `s` or `t`: the payload side the classifier reads.
        #[arg(long)]
        modality: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model from a run config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `--key value` overrides for any run-config key.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on a dataset and emit a report plus figures.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated: coherence,probe,relatedness,cca,marginal
        #[arg(long, default_value = "")]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Classifier over t payloads (scores s→t generations).
        #[arg(long)]
        classifier_t: Option<PathBuf>,
        /// Classifier over s payloads (scores t→s generations).
        #[arg(long)]
        classifier_s: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        figures: bool,
    },
}

/// Flat run configuration; unknown keys are rejected before any computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    dataset: PathBuf,
    out_dir: PathBuf,
    #[serde(default = "d_epochs")]
    epochs: usize,
    #[serde(default = "d_batch")]
    batch_size: usize,
    #[serde(default = "d_lr")]
    learning_rate: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "d_k")]
    mc_samples: usize,
    #[serde(default = "d_beta")]
    classifier_weight: f64,
    #[serde(default = "d_frac")]
    fraction: f64,
    #[serde(default = "d_mode")]
    scheme_mode: String,
    #[serde(default)]
    scheme_seed: u64,
    #[serde(default = "d_latent")]
    latent_dim: usize,
    #[serde(default = "d_hidden")]
    hidden: Vec<usize>,
    #[serde(default = "d_pseudo")]
    n_pseudo: usize,
    #[serde(default = "d_scale")]
    laplace_scale: f64,
    #[serde(default)]
    checkpoint_interval: usize,
    #[serde(default = "d_clip")]
    grad_clip: Option<f64>,
}

fn d_epochs() -> usize {
    10
}
fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    1e-3
}
fn d_k() -> usize {
    8
}
fn d_beta() -> f64 {
    10.0
}
fn d_frac() -> f64 {
    1.0
}
fn d_mode() -> String {
    "keep-s".into()
}
fn d_latent() -> usize {
    8
}
fn d_hidden() -> Vec<usize> {
    vec![64]
}
fn d_pseudo() -> usize {
    50
}
fn d_scale() -> f64 {
    0.1
}
fn d_clip() -> Option<f64> {
    Some(10.0)
}

fn parse_scheme_mode(s: &str) -> Result<SchemeMode, MemeError> {
    match s {
        "keep-s" => Ok(SchemeMode::KeepS),
        "keep-t" => Ok(SchemeMode::KeepT),
        "split" => Ok(SchemeMode::Split),
        other => Err(MemeError::Config(format!("unknown scheme_mode '{other}'"))),
    }
}

/// Merge `--key value` override pairs into the config document, then
/// deserialize with unknown-key rejection.
fn load_run_config(path: &Path, overrides: &[String]) -> Result<RunConfigFile, MemeError> {
    let text = std::fs::read_to_string(path)?;
    let mut doc: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| MemeError::Config(format!("bad run config: {e}")))?;
    if overrides.len() % 2 != 0 {
        return Err(MemeError::Config(
            "overrides must come in --key value pairs".into(),
        ));
    }
    for pair in overrides.chunks(2) {
        let key = pair[0]
            .strip_prefix("--")
            .ok_or_else(|| MemeError::Config(format!("expected --key, got '{}'", pair[0])))?
            .replace('-', "_");
        let value = &pair[1];
        // numbers and arrays parse as JSON; anything else is a string
        let v = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.clone()));
        doc.insert(key, v);
    }
    serde_json::from_value(serde_json::Value::Object(doc))
        .map_err(|e| MemeError::Config(format!("bad run config: {e}")))
}

fn cmd_prepare(
    dataset: &str,
    n: usize,
    multiplicity: usize,
    scheme: ObservationScheme,
    out: &Path,
    data_dir: Option<&Path>,
    subset: usize,
    noise_scale: f64,
) -> Result<(), MemeError> {
    std::fs::create_dir_all(out)?;
    let (pairs, names) = match dataset {
        "synth" => {
            let cfg = SynthConfig {
                n,
                noise_scale,
                seed: scheme.seed,
                ..Default::default()
            };
            (
                synth_two_view(&cfg)?,
                ("synth:s".to_string(), "synth:t".to_string()),
            )
        }
        "mnist-svhn" => {
            let dir = data_dir.ok_or_else(|| {
                MemeError::Config("--data-dir is required for mnist-svhn".into())
            })?;
            let (mnist, svhn) = meme::mnist_svhn::load_subset(dir, subset)?;
            (
                pair_by_class(&svhn, &mnist, multiplicity, scheme.seed)?,
                (
                    format!("svhn:{}", dir.display()),
                    format!("mnist:{}", dir.display()),
                ),
            )
        }
        other => {
            return Err(MemeError::Config(format!(
                "unknown dataset '{other}' (expected synth or mnist-svhn)"
            )));
        }
    };
    let masked = apply_observation_scheme(&pairs, &scheme)?;
    let dim_s = masked
        .iter()
        .find_map(|p| p.s_payload.as_ref().map(|x| x.len()))
        .unwrap_or(0);
    let dim_t = masked
        .iter()
        .find_map(|p| p.t_payload.as_ref().map(|x| x.len()))
        .unwrap_or(0);
    save_dataset(&out.join("dataset.bin"), &masked, dim_s, dim_t)?;
    let (n_both, n_s_only, n_t_only) = count_masks(&masked);
    let manifest = DatasetManifest {
        corpus_a: names.0,
        corpus_b: names.1,
        multiplicity,
        scheme,
        n_samples: masked.len(),
        n_both,
        n_s_only,
        n_t_only,
        payload_dim_s: dim_s,
        payload_dim_t: dim_t,
        mask_checksum: mask_checksum(&masked),
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    println!(
        "prepared {} samples ({n_both} both, {n_s_only} s-only, {n_t_only} t-only) -> {}",
        masked.len(),
        out.display()
    );
    Ok(())
}

fn payloads_and_labels(
    samples: &[PairedSample],
    id: ModalityId,
) -> Result<(Vec<Array1<f64>>, Vec<u32>), MemeError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in samples {
        let payload = match id {
            ModalityId::S => &p.s_payload,
            ModalityId::T => &p.t_payload,
        };
        if let (Some(x), Some(y)) = (payload, p.label) {
            xs.push(x.clone());
            ys.push(y);
        }
    }
    if xs.is_empty() {
        return Err(MemeError::Data("no labeled payloads for this modality".into()));
    }
    Ok((xs, ys))
}

fn cmd_fit_classifier(
    dataset: &Path,
    modality: &str,
    out: &Path,
    hidden: usize,
    epochs: usize,
    seed: u64,
) -> Result<(), MemeError> {
    let (samples, _, _) = load_dataset(dataset)?;
    let id = match modality {
        "s" => ModalityId::S,
        "t" => ModalityId::T,
        other => return Err(MemeError::Config(format!("modality must be s or t, got '{other}'"))),
    };
    let (xs, ys) = payloads_and_labels(&samples, id)?;
    let n_classes = *ys.iter().max().unwrap() as usize + 1;
    let layers = if hidden == 0 { vec![] } else { vec![hidden] };
    let clf = train_classifier(&xs, &ys, n_classes, &layers, epochs, 1e-2, seed)?;
    let acc = clf.accuracy(&xs, &ys);
    clf.save(out)?;
    println!("classifier trained on {} samples, train accuracy {acc:.4} -> {}", xs.len(), out.display());
    Ok(())
}

fn cmd_train(config_path: &Path, overrides: &[String]) -> Result<(), MemeError> {
    let rc = load_run_config(config_path, overrides)?;
    let (samples, dim_s, dim_t) = load_dataset(&rc.dataset)?;
    let scheme = ObservationScheme {
        fraction: rc.fraction,
        mode: parse_scheme_mode(&rc.scheme_mode)?,
        seed: rc.scheme_seed,
    };
    scheme.validate()?;
    // apply the configured scheme when the stored dataset is fully paired;
    // a pre-masked dataset is used as-is
    let samples = if samples.iter().all(|p| p.mask == Mask::Both) {
        apply_observation_scheme(&samples, &scheme)?
    } else {
        samples
    };
    let spec_s = ModalitySpec::new("s", vec![dim_s], LikelihoodKind::Laplace)?;
    let spec_t = ModalitySpec::new("t", vec![dim_t], LikelihoodKind::Laplace)?;
    let mut model = MemeModel::new(
        spec_s,
        spec_t,
        ModelConfig {
            latent_dim: rc.latent_dim,
            hidden: rc.hidden.clone(),
            n_pseudo: rc.n_pseudo,
            laplace_scale: rc.laplace_scale,
            seed: rc.seed,
        },
    )?;
    let s_payloads: Vec<Array1<f64>> =
        samples.iter().filter_map(|p| p.s_payload.clone()).collect();
    let t_payloads: Vec<Array1<f64>> =
        samples.iter().filter_map(|p| p.t_payload.clone()).collect();
    model.init_banks_from(&s_payloads, &t_payloads, rc.seed);

    let cfg = TrainConfig {
        epochs: rc.epochs,
        batch_size: rc.batch_size,
        learning_rate: rc.learning_rate,
        seed: rc.seed,
        objective: ObjectiveConfig {
            mc_samples: rc.mc_samples,
            classifier_weight: rc.classifier_weight,
            pseudo_count: rc.n_pseudo,
        },
        scheme,
        checkpoint_interval: rc.checkpoint_interval,
        grad_clip: rc.grad_clip,
    };
    std::fs::create_dir_all(&rc.out_dir)?;
    // embed the resolved run config verbatim alongside the trainer's own
    std::fs::write(
        rc.out_dir.join("run-config.json"),
        serde_json::to_vec_pretty(&rc)?,
    )?;
    let out = train(&mut model, &samples, &cfg, Some(&rc.out_dir), |_, _| {})?;
    println!(
        "trained {} steps -> {}",
        out.history.len(),
        rc.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricRecord {
    metric: String,
    value: f64,
    stderr: Option<f64>,
    config_digest: String,
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    checkpoint: &Path,
    dataset: &Path,
    metrics: &str,
    out: &Path,
    seed: u64,
    classifier_t: Option<&Path>,
    classifier_s: Option<&Path>,
    figures: bool,
) -> Result<(), MemeError> {
    let model = MemeModel::load(checkpoint)?;
    let (samples, dim_s, dim_t) = load_dataset(dataset)?;
    if model.spec(ModalityId::S).payload_dim() != dim_s {
        return Err(MemeError::shape(format!(
            "modality s: checkpoint expects payload dim {}, dataset has {dim_s}",
            model.spec(ModalityId::S).payload_dim()
        )));
    }
    if model.spec(ModalityId::T).payload_dim() != dim_t {
        return Err(MemeError::shape(format!(
            "modality t: checkpoint expects payload dim {}, dataset has {dim_t}",
            model.spec(ModalityId::T).payload_dim()
        )));
    }
    std::fs::create_dir_all(out)?;
    let digest = {
        let mut h = Sha256::new();
        h.update(format!(
            "ckpt={} dataset={} metrics={} seed={seed}",
            checkpoint.display(),
            dataset.display(),
            metrics
        ));
        hex(&h.finalize())
    };
    let requested: Vec<&str> = metrics.split(',').map(str::trim).filter(|m| !m.is_empty()).collect();
    for m in &requested {
        if !["coherence", "probe", "relatedness", "cca", "marginal"].contains(m) {
            return Err(MemeError::Config(format!("unknown metric '{m}'")));
        }
    }
    let paired: Vec<PairedSample> = samples
        .iter()
        .filter(|p| p.mask == Mask::Both)
        .cloned()
        .collect();
    let mut records = Vec::new();
    let mut noise = SeededNoise::new(seed);
    let mut rel_report = None;

    for m in &requested {
        match *m {
            "coherence" => {
                let clf_t = classifier_t.ok_or_else(|| {
                    MemeError::Config(
                        "coherence s→t needs --classifier-t (a classifier over t payloads)".into(),
                    )
                })?;
                let clf_t = ProbeClassifier::load(clf_t)?;
                let v = coherence_score(&model, &paired, ModalityId::S, &clf_t, &mut noise)?;
                records.push(MetricRecord {
                    metric: "coherence_s_to_t".into(),
                    value: v,
                    stderr: Some(binom_stderr(v, paired.len())),
                    config_digest: digest.clone(),
                });
                if let Some(p) = classifier_s {
                    let clf_s = ProbeClassifier::load(p)?;
                    let v = coherence_score(&model, &paired, ModalityId::T, &clf_s, &mut noise)?;
                    records.push(MetricRecord {
                        metric: "coherence_t_to_s".into(),
                        value: v,
                        stderr: Some(binom_stderr(v, paired.len())),
                        config_digest: digest.clone(),
                    });
                }
            }
            "probe" => {
                for id in [ModalityId::S, ModalityId::T] {
                    let (xs, ys) = payloads_and_labels(&samples, id)?;
                    let n_classes = *ys.iter().max().unwrap() as usize + 1;
                    let v = latent_probe_accuracy(
                        &model, id, &xs, &ys, n_classes, false, seed, &mut noise,
                    )?;
                    let name = match id {
                        ModalityId::S => "probe_s",
                        ModalityId::T => "probe_t",
                    };
                    records.push(MetricRecord {
                        metric: name.into(),
                        value: v,
                        stderr: Some(binom_stderr(v, xs.len() / 5)),
                        config_digest: digest.clone(),
                    });
                }
            }
            "relatedness" => {
                let rep = relatedness(&model, &paired)?;
                if let Some(auc) = rep.separation_auc {
                    records.push(MetricRecord {
                        metric: "relatedness_auc".into(),
                        value: auc,
                        stderr: None,
                        config_digest: digest.clone(),
                    });
                }
                std::fs::write(
                    out.join("relatedness.json"),
                    serde_json::to_vec_pretty(&rep)?,
                )?;
                rel_report = Some(rep);
            }
            "cca" => {
                let mut a = ndarray::Array2::zeros((paired.len(), dim_t));
                let mut b = ndarray::Array2::zeros((paired.len(), dim_t));
                for (i, p) in paired.iter().enumerate() {
                    let s = p.s_payload.as_ref().unwrap();
                    let t = p.t_payload.as_ref().unwrap();
                    let gen = meme::evaluation::cross_generate(
                        &model,
                        ModalityId::S,
                        s,
                        &mut noise,
                    )?;
                    a.row_mut(i).assign(t);
                    b.row_mut(i).assign(&gen);
                }
                let v = meme::evaluation::cca_correlation(&a, &b)?;
                records.push(MetricRecord {
                    metric: "cca_s_to_t".into(),
                    value: v,
                    stderr: None,
                    config_digest: digest.clone(),
                });
            }
            "marginal" => {
                let mut vals = Vec::new();
                for p in &paired {
                    let s = p.s_payload.as_ref().unwrap();
                    let t = p.t_payload.as_ref().unwrap();
                    vals.push(marginal_loglik(&model, s, t, Direction::StoT, 64, &mut noise)?);
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (vals.len().max(2) - 1) as f64;
                records.push(MetricRecord {
                    metric: "marginal_loglik_s_given_t".into(),
                    value: mean,
                    stderr: Some((var / vals.len() as f64).sqrt()),
                    config_digest: digest.clone(),
                });
            }
            _ => unreachable!(),
        }
    }

    if figures {
        if let Some(rep) = &rel_report {
            let flat: Vec<f64> = rep.pairwise.iter().flatten().copied().collect();
            meme::figures::write_svg(
                &out.join("w2-histogram.svg"),
                &meme::figures::histogram_svg(&flat, 30, "pairwise W2 (squared)")?,
            )?;
            meme::figures::write_svg(
                &out.join("class-heatmap.svg"),
                &meme::figures::heatmap_svg(&rep.class_matrix, "class relatedness", true)?,
            )?;
            let labels: Vec<String> = rep.class_ids.iter().map(|c| c.to_string()).collect();
            meme::figures::write_svg(
                &out.join("dendrogram.svg"),
                &meme::figures::dendrogram_svg(&rep.dendrogram, &labels, "class dendrogram", true)?,
            )?;
        }
    }

    std::fs::write(out.join("report.json"), serde_json::to_vec_pretty(&records)?)?;
    for r in &records {
        println!("{} = {:.4}", r.metric, r.value);
    }
    println!("report -> {}", out.join("report.json").display());
    Ok(())
}

fn binom_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn run() -> Result<(), MemeError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare {
            dataset,
            n,
            multiplicity,
            scheme,
            fraction,
            seed,
            out,
            data_dir,
            subset,
            noise_scale,
        } => cmd_prepare(
            &dataset,
            n,
            multiplicity,
            ObservationScheme {
                fraction,
                mode: scheme.into(),
                seed,
            },
            &out,
            data_dir.as_deref(),
            subset,
            noise_scale,
        ),
        Command::FitClassifier {
            dataset,
            modality,
            out,
            hidden,
            epochs,
            seed,
        } => cmd_fit_classifier(&dataset, &modality, &out, hidden, epochs, seed),
        Command::Train { config, overrides } => cmd_train(&config, &overrides),
        Command::Eval {
            checkpoint,
            dataset,
            metrics,
            out,
            seed,
            classifier_t,
            classifier_s,
            figures,
        } => cmd_eval(
            &checkpoint,
            &dataset,
            &metrics,
            &out,
            seed,
            classifier_t.as_deref(),
            classifier_s.as_deref(),
            figures,
        ),
    }
}

fn main() {
    env_logger::init();
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
