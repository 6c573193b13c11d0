//! The pipeline stages behind the CLI verbs. Each command reads its inputs,
//! writes its artifact plus a manifest chaining input hashes, and returns
//! the primary output path.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::channel::dataset::{generate_dataset, load_dataset, save_dataset};
use crate::channel::{ChannelDataset, Domain, Generator, ScenarioConfig, ScenarioLabel};
use crate::consistency::{distill, generate_one_step, ConsistencyModel};
use crate::diffusion::checkpoint::{load_model, save_model, ModelKind, SavedModel};
use crate::diffusion::predictor::{DmDenoiser, NoisePredictor};
use crate::diffusion::sampler::generate_channels;
use crate::diffusion::train::train_dm;
use crate::diffusion::Preconditioner;
use crate::error::{Error, Result};
use crate::metrics::{ks_test_pca, pas, pdp, w2_power_spectrum, AugmentMethod, MetricReport};
use crate::pipeline::config::ExperimentConfig;
use crate::pipeline::manifest::Manifest;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sip::evaluate::{evaluate_link, LinkReceiver};
use crate::sip::frame::build_training_set;
use crate::sip::lmmse::PriorCov;
use crate::sip::receiver::{load_receiver, save_receiver, train_receiver, ReceiverModel};
use crate::sip::LinkMetrics;

fn ensure_dir(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Step 1: simulate the labeled training dataset.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let frame = cfg.profile.frame();
    let ds = generate_dataset(&cfg.scenarios, cfg.per_scenario, &cfg.speeds_mps(), &frame, cfg.seed)?;
    save_dataset(&ds, out)?;
    let mut manifest = Manifest::new("simulate", cfg.seed);
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

/// Step 2: train the conditional diffusion model on a dataset file.
pub fn cmd_train_dm(cfg: &ExperimentConfig, dataset_path: &Path, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let ds = load_dataset(dataset_path)?;
    let frame = ds.frame.clone();
    let schedule = cfg.schedule.build()?;
    let precond = Preconditioner::new(cfg.predictor.sigma_data, schedule.min_time);
    let mut model = NoisePredictor::init(&frame, cfg.predictor.clone(), derive_seed(cfg.seed, 0x0d))?;
    let log = train_dm(&mut model, &ds, &schedule, &precond, &cfg.dm_train)?;
    let saved = SavedModel {
        kind: ModelKind::Dm,
        predictor: model,
        sigma_data: cfg.predictor.sigma_data,
        schedule: cfg.schedule,
    };
    let sidecar = serde_json::json!({
        "train": cfg.dm_train,
        "final_loss": log.epoch_loss.last(),
        "epoch_loss": log.epoch_loss,
    });
    save_model(out, &saved, &sidecar)?;
    let mut manifest = Manifest::new("train-dm", cfg.seed);
    manifest.record_input(dataset_path)?;
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

/// Step 2b: distill the trained model into a one-step generator.
pub fn cmd_distill(cfg: &ExperimentConfig, dm_path: &Path, dataset_path: &Path, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let teacher = load_model(dm_path)?;
    if teacher.kind != ModelKind::Dm {
        return Err(Error::invalid("distill", "teacher checkpoint is not a diffusion model"));
    }
    let ds = load_dataset(dataset_path)?;
    let schedule = teacher.schedule.build()?;
    let precond = Preconditioner::new(teacher.sigma_data, schedule.min_time);
    let (cm, log) = distill(&teacher.predictor, &precond, &ds, &schedule, &cfg.distill)?;
    let saved = SavedModel {
        kind: ModelKind::Cm,
        predictor: cm.predictor,
        sigma_data: teacher.sigma_data,
        schedule: teacher.schedule,
    };
    let sidecar = serde_json::json!({
        "distill": cfg.distill,
        "final_loss": log.epoch_loss.last(),
        "epoch_loss": log.epoch_loss,
    });
    save_model(out, &saved, &sidecar)?;
    let mut manifest = Manifest::new("distill", cfg.seed);
    manifest.record_input(dm_path)?;
    manifest.record_input(dataset_path)?;
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

/// Scenario-specific labels for generation: uniform positions inside each
/// scenario, speeds cycled.
pub fn generation_labels(
    scenarios: &[ScenarioConfig],
    per_scenario: usize,
    speeds_mps: &[f64],
    seed: u64,
) -> Vec<(ScenarioLabel, String)> {
    let mut out = Vec::with_capacity(scenarios.len() * per_scenario);
    for (si, sc) in scenarios.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, 0x9e00 + si as u64));
        for j in 0..per_scenario {
            let x = sc.center.0 + (rng.random::<f64>() - 0.5) * sc.extent_m;
            let y = sc.center.1 + (rng.random::<f64>() - 0.5) * sc.extent_m;
            let v = speeds_mps[j % speeds_mps.len()];
            out.push((ScenarioLabel::new(x, y, v), sc.name.clone()));
        }
    }
    out
}

/// Step 3: generate scenario-tailored channels from a trained model.
/// `threads` splits label chunks across workers; chunking is fixed so the
/// output is identical for any thread count.
pub fn cmd_generate(
    cfg: &ExperimentConfig,
    model_path: &Path,
    out: &Path,
    threads: usize,
) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let saved = load_model(model_path)?;
    let frame = saved.predictor.frame.clone();
    let schedule = saved.schedule.build()?;
    let labels: Vec<ScenarioLabel> = generation_labels(
        &cfg.scenarios,
        cfg.generate_per_scenario,
        &cfg.speeds_mps(),
        derive_seed(cfg.seed, 0x91),
    )
    .into_iter()
    .map(|(l, _)| l)
    .collect();

    const CHUNK: usize = 64;
    let chunks: Vec<(usize, &[ScenarioLabel])> = labels.chunks(CHUNK).enumerate().collect();
    let gen_seed = derive_seed(cfg.seed, 0x92);
    let run_chunk = |(ci, chunk): &(usize, &[ScenarioLabel])| -> Result<ChannelDataset> {
        let chunk_seed = derive_seed(gen_seed, *ci as u64);
        match saved.kind {
            ModelKind::Dm => {
                let precond = Preconditioner::new(saved.sigma_data, schedule.min_time);
                let den = DmDenoiser::new(&saved.predictor, precond);
                generate_channels(
                    &den,
                    &frame,
                    chunk,
                    &schedule,
                    chunk_seed,
                    Generator::Dm,
                    32,
                    saved.predictor.data_scale,
                )
            }
            ModelKind::Cm => {
                let cm = ConsistencyModel {
                    predictor: saved.predictor.clone(),
                    precond: Preconditioner::new(saved.sigma_data, schedule.min_time),
                };
                generate_one_step(&cm, &frame, chunk, &schedule, chunk_seed, 64)
            }
        }
    };

    let mut parts: Vec<ChannelDataset> = Vec::with_capacity(chunks.len());
    if threads <= 1 {
        for c in &chunks {
            parts.push(run_chunk(c)?);
        }
    } else {
        let results: Vec<Result<ChannelDataset>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for group in chunks.chunks(chunks.len().div_ceil(threads)) {
                handles.push(scope.spawn(move || group.iter().map(run_chunk).collect::<Vec<_>>()));
            }
            handles.into_iter().flat_map(|h| h.join().expect("generation worker panicked")).collect()
        });
        for r in results {
            parts.push(r?);
        }
    }
    let mut merged = parts.remove(0);
    for p in parts {
        merged = merged.concat(&p)?;
    }
    merged.meta.seed = cfg.seed;
    merged.meta.scenarios = cfg.scenarios.clone();
    merged.meta.generator = match saved.kind {
        ModelKind::Dm => Generator::Dm,
        ModelKind::Cm => Generator::Cm,
    };
    save_dataset(&merged, out)?;
    let mut manifest = Manifest::new("generate", cfg.seed);
    manifest.record_input(model_path)?;
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

/// Step 4a: build the augmented training dataset.
/// Generative methods concatenate the base dataset with generated samples;
/// mixup and the noisy baseline synthesize from the base dataset alone.
pub fn cmd_augment(
    cfg: &ExperimentConfig,
    base_path: &Path,
    generated_path: Option<&Path>,
    out: &Path,
) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let base = load_dataset(base_path)?;
    let mut manifest = Manifest::new("augment", cfg.seed);
    manifest.record_input(base_path)?;
    let augmented = match cfg.augment.method {
        AugmentMethod::Dm | AugmentMethod::Cm | AugmentMethod::UncondDm => {
            let gen_path = generated_path.ok_or_else(|| {
                Error::invalid("augment", "generative augmentation needs a generated dataset")
            })?;
            manifest.record_input(gen_path)?;
            let gen = load_dataset(gen_path)?;
            let take: Vec<usize> = (0..cfg.augment.count.min(gen.len())).collect();
            base.concat(&gen.subset(&take)?)?
        }
        AugmentMethod::Mixup => {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, 0xa1));
            let extra = crate::metrics::mixup(&base, cfg.augment.count, cfg.augment.alpha, &mut rng)?;
            base.concat(&extra)?
        }
        AugmentMethod::Noisy => {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, 0xa2));
            let extra =
                crate::metrics::awgn_augment(&base, cfg.augment.count, cfg.augment.aug_snr_db, &mut rng)?;
            base.concat(&extra)?
        }
    };
    save_dataset(&augmented, out)?;
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

/// Step 4b: train the neural receiver on link samples built from a channel
/// dataset.
pub fn cmd_train_receiver(cfg: &ExperimentConfig, channels_path: &Path, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out)?;
    let ds = load_dataset(channels_path)?;
    let samples = build_training_set(&ds, &cfg.sip, derive_seed(cfg.seed, 0xb1))?;
    let mut model = ReceiverModel::init(
        &ds.frame,
        cfg.sip.clone(),
        cfg.receiver.clone(),
        derive_seed(cfg.seed, 0xb2),
    )?;
    let log = train_receiver(&mut model, &samples, &cfg.rx_train)?;
    save_receiver(out, &model)?;
    std::fs::write(
        crate::diffusion::checkpoint::sidecar_path(out),
        serde_json::to_string_pretty(&serde_json::json!({
            "rx_train": cfg.rx_train,
            "final_loss": log.epoch_loss.last(),
            "epoch_loss": log.epoch_loss,
        }))?,
    )?;
    let mut manifest = Manifest::new("train-receiver", cfg.seed);
    manifest.record_input(channels_path)?;
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}

/// One metrics CSV row per (snr, receiver) pair.
#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub receiver_id: String,
    pub augmentation_id: String,
    pub metrics: LinkMetrics,
    pub seed: u64,
}

pub const METRICS_CSV_HEADER: &str = "snr_db,receiver_id,augmentation_id,ber,bler,nmse,throughput,seed";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.snr_db,
            self.receiver_id,
            self.augmentation_id,
            self.metrics.ber,
            self.metrics.block_error_rate,
            self.metrics.nmse,
            self.metrics.throughput,
            self.seed
        )
    }
}

/// Step 4c: evaluate receivers on a test dataset across the configured SNR
/// grid; writes the link-metrics CSV, a generation-fidelity JSON report
/// when a generated dataset is supplied, and the manifest.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    receiver_path: Option<&Path>,
    test_channels_path: &Path,
    prior_channels_path: &Path,
    generated_path: Option<&Path>,
    out_csv: &Path,
) -> Result<PathBuf> {
    cfg.validate()?;
    ensure_dir(out_csv)?;
    let test = load_dataset(test_channels_path)?;
    let prior_ds = load_dataset(prior_channels_path)?;
    let prior = PriorCov::estimate(&prior_ds)?;
    let mut manifest = Manifest::new("evaluate", cfg.seed);
    manifest.record_input(test_channels_path)?;
    manifest.record_input(prior_channels_path)?;

    let eval_subset: ChannelDataset = if test.len() > cfg.eval_frames {
        test.subset(&(0..cfg.eval_frames).collect::<Vec<_>>())?
    } else {
        test.clone()
    };

    let loaded_rx = match receiver_path {
        Some(p) => {
            manifest.record_input(p)?;
            Some(load_receiver(p)?)
        }
        None => None,
    };
    let augmentation_id = format!("{:?}", cfg.augment.method).to_lowercase();
    let mut rows = Vec::new();
    for &snr in &cfg.eval_snrs_db {
        let mut receivers: Vec<LinkReceiver> =
            vec![LinkReceiver::LmmseSip(&prior), LinkReceiver::LmmseOp(&prior), LinkReceiver::GenieSip];
        if let Some(rx) = &loaded_rx {
            receivers.insert(0, LinkReceiver::Neural(rx));
        }
        for rx in &receivers {
            let metrics = evaluate_link(rx, &eval_subset, &cfg.sip, snr, derive_seed(cfg.seed, snr.to_bits()))?;
            rows.push(MetricsRow {
                snr_db: snr,
                receiver_id: rx.id().to_string(),
                augmentation_id: augmentation_id.clone(),
                metrics,
                seed: cfg.seed,
            });
        }
    }
    let mut csv = String::from(METRICS_CSV_HEADER);
    for row in &rows {
        csv.push('\n');
        csv.push_str(&row.to_csv());
    }
    csv.push('\n');
    std::fs::write(out_csv, csv)?;

    // generation fidelity: metric report plus plot-ready profiles
    if let Some(gen_path) = generated_path {
        manifest.record_input(gen_path)?;
        let gen = load_dataset(gen_path)?;
        let w2_ad = w2_power_spectrum(&gen, &test, Domain::AngularDelayTime)?;
        let w2_ft = w2_power_spectrum(&gen, &test, Domain::SpatialFreqTime)?;
        let (ks, p) = ks_test_pca(&gen, &test, 0)?;
        let report = MetricReport {
            pdp: pdp(&gen)?,
            pas: pas(&gen)?,
            w2_angular_delay: w2_ad,
            w2_freq_time: w2_ft,
            ks_statistic: ks,
            ks_p_value: p,
            samples_a: gen.len(),
            samples_b: test.len(),
            domain: "angular-delay".to_string(),
        };
        let report_path = out_csv.with_extension("fidelity.json");
        std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
        write_profile_csv(&out_csv.with_extension("pdp.csv"), "delay_bin", &report.pdp)?;
        write_profile_csv(&out_csv.with_extension("pas.csv"), "angle_bin", &report.pas)?;
        manifest.record_output(&report_path)?;
    }
    manifest.record_output(out_csv)?;
    manifest.write_for(out_csv)?;
    Ok(out_csv.to_path_buf())
}

fn write_profile_csv(path: &Path, bin_name: &str, values: &[f64]) -> Result<()> {
    let mut text = format!("{bin_name},power\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Final step: joins metric CSVs into one comparison table
/// (receiver x augmentation x SNR) after verifying every input's manifest
/// chain.
pub fn cmd_report(metric_csvs: &[PathBuf], out: &Path) -> Result<PathBuf> {
    if metric_csvs.is_empty() {
        return Err(Error::invalid("report", "no metric files"));
    }
    ensure_dir(out)?;
    let mut manifest = Manifest::new("report", 0);
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for path in metric_csvs {
        let m = Manifest::load_for(path)?;
        m.verify_inputs()?;
        let current = crate::pipeline::manifest::sha256_file(path)?;
        let recorded = m
            .outputs
            .iter()
            .find(|s| Path::new(&s.path).file_name() == path.file_name())
            .ok_or_else(|| Error::HashMismatch { path: path.display().to_string() })?;
        if recorded.sha256 != current {
            return Err(Error::HashMismatch { path: path.display().to_string() });
        }
        manifest.record_input(path)?;
        let source = path
            .file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        let text = std::fs::read_to_string(path)?;
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line != METRICS_CSV_HEADER {
                    return Err(Error::Format {
                        path: path.display().to_string(),
                        reason: "unexpected CSV header".to_string(),
                    });
                }
                continue;
            }
            if !line.trim().is_empty() {
                rows.push((source.clone(), line.split(',').map(str::to_string).collect()));
            }
        }
    }
    // order by (receiver, augmentation, snr) for a stable comparison table
    rows.sort_by(|a, b| {
        let key = |r: &Vec<String>| (r[1].clone(), r[2].clone(), r[0].parse::<f64>().unwrap_or(0.0));
        key(&a.1).partial_cmp(&key(&b.1)).unwrap()
    });
    let mut csv = format!("source,{METRICS_CSV_HEADER}\n");
    for (src, row) in &rows {
        csv.push_str(&format!("{},{}\n", src, row.join(",")));
    }
    std::fs::write(out, csv)?;
    manifest.record_output(out)?;
    manifest.write_for(out)?;
    Ok(out.to_path_buf())
}
