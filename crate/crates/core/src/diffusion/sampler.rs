//! Probability-flow ODE integration from max noise down to the data end of
//! the grid, with second-order (default) and first-order steps.

use std::cell::Cell;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{
    ChannelDataset, ChannelTensor, DatasetMeta, Domain, FrameConfig, Generator, ScenarioLabel,
};
use crate::diffusion::predictor::Denoiser;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Euler proposal with trapezoidal correction (two evaluations per step).
    Heun,
    /// Plain first-order steps (one evaluation per step).
    Euler,
}

/// Counts denoiser evaluations; one batched call is one evaluation per
/// sample, so the count equals the per-sample network-call budget.
pub struct CountingDenoiser<'a> {
    inner: &'a dyn Denoiser,
    calls: Cell<usize>,
}

impl<'a> CountingDenoiser<'a> {
    pub fn new(inner: &'a dyn Denoiser) -> CountingDenoiser<'a> {
        CountingDenoiser { inner, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl Denoiser for CountingDenoiser<'_> {
    fn denoise_batch(&self, x: &Tensor, ts: &[f64], labels: &[ScenarioLabel]) -> Result<Tensor> {
        self.calls.set(self.calls.get() + 1);
        self.inner.denoise_batch(x, ts, labels)
    }
}

fn ode_rhs_rows(x: &Tensor, den_out: &Tensor, ts: &[f64]) -> Tensor {
    let dim = x.len() / ts.len();
    let mut data = vec![0.0; x.len()];
    for (i, &t) in ts.iter().enumerate() {
        let xr = &x.data()[i * dim..(i + 1) * dim];
        let dr = &den_out.data()[i * dim..(i + 1) * dim];
        for ((o, &xv), &dv) in data[i * dim..(i + 1) * dim].iter_mut().zip(xr).zip(dr) {
            *o = (xv - dv) / t;
        }
    }
    Tensor::from_vec_unchecked(x.shape().to_vec(), data)
}

fn axpy_rows(x: &Tensor, dts: &[f64], y: &Tensor) -> Tensor {
    let dim = x.len() / dts.len();
    let mut data = vec![0.0; x.len()];
    for (i, &a) in dts.iter().enumerate() {
        let xr = &x.data()[i * dim..(i + 1) * dim];
        let yr = &y.data()[i * dim..(i + 1) * dim];
        for ((o, &xv), &yv) in data[i * dim..(i + 1) * dim].iter_mut().zip(xr).zip(yr) {
            *o = xv + a * yv;
        }
    }
    Tensor::from_vec_unchecked(x.shape().to_vec(), data)
}

/// One full second-order step with per-row times (two denoiser calls):
/// Euler proposal at `ts_from`, trapezoidal correction at `ts_to`.
pub fn heun_step_rows(
    den: &dyn Denoiser,
    x: &Tensor,
    ts_from: &[f64],
    ts_to: &[f64],
    labels: &[ScenarioLabel],
) -> Result<Tensor> {
    let dts: Vec<f64> = ts_from.iter().zip(ts_to).map(|(&a, &b)| b - a).collect();
    let d_from = den.denoise_batch(x, ts_from, labels)?;
    let slope = ode_rhs_rows(x, &d_from, ts_from);
    let proposal = axpy_rows(x, &dts, &slope);
    let d_to = den.denoise_batch(&proposal, ts_to, labels)?;
    let slope_to = ode_rhs_rows(&proposal, &d_to, ts_to);
    let half: Vec<f64> = dts.iter().map(|&d| 0.5 * d).collect();
    let sum = {
        let data: Vec<f64> = slope
            .data()
            .iter()
            .zip(slope_to.data().iter())
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_vec_unchecked(x.shape().to_vec(), data)
    };
    Ok(axpy_rows(x, &half, &sum))
}

/// One full second-order step from `t_from` to `t_to` (two denoiser calls).
pub fn heun_step(
    den: &dyn Denoiser,
    x: &Tensor,
    t_from: f64,
    t_to: f64,
    labels: &[ScenarioLabel],
) -> Result<Tensor> {
    let bsz = x.shape()[0];
    heun_step_rows(den, x, &vec![t_from; bsz], &vec![t_to; bsz], labels)
}

/// One first-order step from `t_from` to `t_to` (one denoiser call).
pub fn euler_step(
    den: &dyn Denoiser,
    x: &Tensor,
    t_from: f64,
    t_to: f64,
    labels: &[ScenarioLabel],
) -> Result<Tensor> {
    let bsz = x.shape()[0];
    let ts_from = vec![t_from; bsz];
    let d_from = den.denoise_batch(x, &ts_from, labels)?;
    let slope = ode_rhs_rows(x, &d_from, &ts_from);
    Ok(axpy_rows(x, &vec![t_to - t_from; bsz], &slope))
}

/// Integrates the empirical probability-flow ODE from t_N down to t_0,
/// starting from `init` (one row per label).
pub fn integrate(
    den: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    labels: &[ScenarioLabel],
    init: Tensor,
    method: SolverMethod,
) -> Result<Tensor> {
    if init.shape().first().copied() != Some(labels.len()) {
        return Err(Error::shape(
            "integrate",
            format!("{} labels for init {:?}", labels.len(), init.shape()),
        ));
    }
    let mut x = init;
    for n in (1..=schedule.steps).rev() {
        let (t_from, t_to) = (schedule.t(n), schedule.t(n - 1));
        x = match method {
            SolverMethod::Heun => heun_step(den, &x, t_from, t_to, labels)?,
            SolverMethod::Euler => euler_step(den, &x, t_from, t_to, labels)?,
        };
        if !x.is_finite() {
            return Err(Error::Divergence { context: format!("sampling step n={n}") });
        }
    }
    Ok(x)
}

/// Draws the max-noise initialization N(0, T^2 I) row by row.
pub fn init_noise<R: Rng>(rows: usize, dim: usize, t_max: f64, rng: &mut R) -> Tensor {
    let data: Vec<f64> = (0..rows * dim)
        .map(|_| t_max * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::from_vec_unchecked(vec![rows, dim], data)
}

/// Generates one sample per label with per-sample derived seeds. Chosen so
/// the result is identical for any internal batch size. The integration runs
/// in model space; `output_scale` maps results back to raw channel units.
pub fn generate_channels(
    den: &dyn Denoiser,
    frame: &FrameConfig,
    labels: &[ScenarioLabel],
    schedule: &DiffusionSchedule,
    seed: u64,
    generator: Generator,
    batch: usize,
    output_scale: f64,
) -> Result<ChannelDataset> {
    let inv_scale = 1.0 / output_scale;
    let dim = frame.channel_dim();
    let shape = frame.angular_delay_shape();
    let mut samples = Vec::with_capacity(labels.len());
    let batch = batch.max(1);
    for (chunk_idx, chunk) in labels.chunks(batch).enumerate() {
        let mut init = Vec::with_capacity(chunk.len() * dim);
        for (j, _) in chunk.iter().enumerate() {
            let sample_idx = (chunk_idx * batch + j) as u64;
            let mut rng = rng_from_seed(derive_seed(seed, sample_idx));
            for _ in 0..dim {
                init.push(schedule.max_time * rng.sample::<f64, _>(StandardNormal));
            }
        }
        let init = Tensor::from_vec_unchecked(vec![chunk.len(), dim], init);
        let out = integrate(den, schedule, chunk, init, SolverMethod::Heun)?;
        for row in 0..chunk.len() {
            let data: Vec<f64> =
                out.data()[row * dim..(row + 1) * dim].iter().map(|&v| v * inv_scale).collect();
            samples.push(ChannelTensor {
                domain: Domain::AngularDelayTime,
                data: Tensor::from_vec(shape.clone(), data)?,
            });
        }
    }
    ChannelDataset::new(
        frame.clone(),
        samples,
        labels.to_vec(),
        DatasetMeta { generator, seed, scenarios: vec![] },
    )
}
