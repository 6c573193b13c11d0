//! Denoising-score-matching training of the conditional model.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelDataset, LabelStats, ScenarioLabel};
use crate::diffusion::predictor::{denoise_on_graph, NoisePredictor};
use crate::diffusion::{DiffusionSchedule, Preconditioner};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::adam::AdamState;
use crate::tensor::graph::Graph;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Cosine decay floor as a fraction of `lr`; 1.0 keeps the rate constant.
    pub lr_min_fraction: f64,
    pub seed: u64,
}

impl Default for DmTrainConfig {
    fn default() -> DmTrainConfig {
        DmTrainConfig { epochs: 800, batch_size: 32, lr: 1e-4, lr_min_fraction: 1.0, seed: 0 }
    }
}

/// Cosine interpolation from `lr` down to `lr * min_fraction`.
pub(crate) fn lr_at(cfg_lr: f64, min_fraction: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 || min_fraction >= 1.0 {
        return cfg_lr;
    }
    let floor = cfg_lr * min_fraction;
    let phase = epoch as f64 / (epochs - 1) as f64 * std::f64::consts::PI;
    floor + 0.5 * (cfg_lr - floor) * (1.0 + phase.cos())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Mean over the batch of the squared denoising error at grid times drawn
/// uniformly from {1..N}. Value-only variant of the training objective.
pub fn dsm_loss<R: Rng>(
    model: &NoisePredictor,
    precond: &Preconditioner,
    schedule: &DiffusionSchedule,
    batch: &[(&Tensor, ScenarioLabel)],
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("dsm_loss", "empty batch"));
    }
    let dim = model.dim();
    let (x0, noisy, ts, labels) = assemble_batch(dim, model.data_scale, batch, schedule, rng)?;
    let mut g = Graph::new();
    let bind = model.params.bind(&mut g, false);
    let xv = g.leaf(noisy, false);
    let d = denoise_on_graph(model, precond, &mut g, &bind, xv, &ts, &labels)?;
    let target = g.leaf(x0, false);
    let diff = g.sub(d, target)?;
    let sq = g.mul(diff, diff)?;
    let total = g.sum_all(sq)?;
    let loss = g.scale(total, 1.0 / batch.len() as f64)?;
    g.value(loss).item()
}

fn assemble_batch<R: Rng>(
    dim: usize,
    data_scale: f64,
    batch: &[(&Tensor, ScenarioLabel)],
    schedule: &DiffusionSchedule,
    rng: &mut R,
) -> Result<(Tensor, Tensor, Vec<f64>, Vec<ScenarioLabel>)> {
    let bsz = batch.len();
    let mut clean = Vec::with_capacity(bsz * dim);
    let mut noisy = Vec::with_capacity(bsz * dim);
    let mut ts = Vec::with_capacity(bsz);
    let mut labels = Vec::with_capacity(bsz);
    for (h, label) in batch {
        if h.len() != dim {
            return Err(Error::shape("dsm_loss", format!("sample has {} values, model wants {dim}", h.len())));
        }
        let n = rng.random_range(1..=schedule.steps);
        let t = schedule.t(n);
        ts.push(t);
        labels.push(*label);
        for &v in h.data() {
            let v = v * data_scale;
            clean.push(v);
            noisy.push(v + t * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok((
        Tensor::from_vec_unchecked(vec![bsz, dim], clean),
        Tensor::from_vec_unchecked(vec![bsz, dim], noisy),
        ts,
        labels,
    ))
}

/// Trains the model in place. Label normalization statistics are computed
/// from the dataset and stored in the model before the first step.
pub fn train_dm(
    model: &mut NoisePredictor,
    dataset: &ChannelDataset,
    schedule: &DiffusionSchedule,
    precond: &Preconditioner,
    cfg: &DmTrainConfig,
) -> Result<TrainLog> {
    if dataset.is_empty() {
        return Err(Error::invalid("train_dm", "empty dataset"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("train_dm", "batch_size and epochs must be positive"));
    }
    let dim = model.dim();
    if dataset.frame != model.frame {
        return Err(Error::invalid("train_dm", "dataset frame does not match model frame"));
    }
    model.label_stats = LabelStats::from_labels(&dataset.labels);
    // bring the data RMS to the preconditioner's assumed scale
    let mean_sq = dataset.samples.iter().map(|s| s.data.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
        / (dataset.len() * dim) as f64;
    model.data_scale = precond.sigma_data / mean_sq.sqrt().max(1e-12);

    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = AdamState::for_params(cfg.lr, model.params.tensors());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        adam.lr = lr_at(cfg.lr, cfg.lr_min_fraction, epoch, cfg.epochs);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Tensor, ScenarioLabel)> = chunk
                .iter()
                .map(|&i| (&dataset.samples[i].data, dataset.labels[i]))
                .collect();
            let flat: Vec<(&Tensor, ScenarioLabel)> =
                batch.iter().map(|(t, l)| (*t, *l)).collect();
            let (x0, noisy, ts, labels) = assemble_batch(dim, model.data_scale, &flat, schedule, &mut rng)?;
            let x0 = x0.reshape(&[chunk.len(), dim])?;
            let mut g = Graph::new();
            let bind = model.params.bind(&mut g, true);
            let xv = g.leaf(noisy, false);
            let d = denoise_on_graph(model, precond, &mut g, &bind, xv, &ts, &labels)?;
            let target = g.leaf(x0, false);
            let diff = g.sub(d, target)?;
            let sq = g.mul(diff, diff)?;
            let total = g.sum_all(sq)?;
            let loss = g.scale(total, 1.0 / chunk.len() as f64)?;
            let loss_val = g.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(Error::Divergence {
                    context: format!("dsm loss at epoch {epoch}, batch {batches}"),
                });
            }
            let grads = g.backward(loss)?;
            let grad_vec = model.params.grads_in_order(&bind, &grads);
            adam.step(model.params.tensors_mut(), &grad_vec)?;
            epoch_loss += loss_val;
            batches += 1;
        }
        log.epoch_loss.push(epoch_loss / batches.max(1) as f64);
    }
    Ok(log)
}
