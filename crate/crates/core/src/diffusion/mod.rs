//! Conditional diffusion model: warped time grid, preconditioned
//! dual-subnetwork denoiser, denoising-score-matching training and the
//! second-order probability-flow ODE sampler.

pub mod checkpoint;
pub mod embed;
pub mod predictor;
pub mod sampler;
pub mod train;
pub mod unet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Serializable schedule parameters; the grid itself is always rebuilt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub min_time: f64,
    pub max_time: f64,
    pub steps: usize,
    pub warp: f64,
}

impl Default for ScheduleSpec {
    fn default() -> ScheduleSpec {
        ScheduleSpec { min_time: 0.002, max_time: 80.0, steps: 40, warp: 7.0 }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.min_time, self.max_time, self.steps, self.warp)
    }

    pub fn of(s: &DiffusionSchedule) -> ScheduleSpec {
        ScheduleSpec { min_time: s.min_time, max_time: s.max_time, steps: s.steps, warp: s.warp }
    }
}

/// Warped time grid over [min_time, max_time] with noise level sigma(t) = t.
/// Drift is zero and the diffusion coefficient is sqrt(2t), so the forward
/// perturbation kernel is N(h, t^2 I).
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    pub min_time: f64,
    pub max_time: f64,
    pub steps: usize,
    pub warp: f64,
    grid: Vec<f64>,
}

impl DiffusionSchedule {
    /// t_n = (eps^(1/w) + (n/N)(T^(1/w) - eps^(1/w)))^w with exact endpoints.
    pub fn new(min_time: f64, max_time: f64, steps: usize, warp: f64) -> Result<DiffusionSchedule> {
        if !(min_time > 0.0) || !(max_time > min_time) {
            return Err(Error::invalid(
                "DiffusionSchedule",
                format!("need 0 < min {min_time} < max {max_time}"),
            ));
        }
        if steps < 1 {
            return Err(Error::invalid("DiffusionSchedule", "steps must be >= 1"));
        }
        if !(warp >= 1.0) {
            return Err(Error::invalid("DiffusionSchedule", format!("warp {warp} must be >= 1")));
        }
        let grid = build_time_grid(min_time, max_time, steps, warp);
        Ok(DiffusionSchedule { min_time, max_time, steps, warp, grid })
    }

    /// Default grid: t in [0.002, 80], warp 7.
    pub fn standard(steps: usize) -> DiffusionSchedule {
        DiffusionSchedule::new(0.002, 80.0, steps, 7.0).expect("standard schedule is valid")
    }

    /// Boundaries t_0..t_N (length steps + 1), strictly increasing.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn t(&self, n: usize) -> f64 {
        self.grid[n]
    }

    /// Noise level at time t.
    pub fn sigma(&self, t: f64) -> f64 {
        t
    }
}

/// Grid boundaries; endpoints are assigned exactly rather than recomputed
/// through the warp to avoid rounding at n = 0 and n = N.
pub fn build_time_grid(min_time: f64, max_time: f64, steps: usize, warp: f64) -> Vec<f64> {
    let a = min_time.powf(1.0 / warp);
    let b = max_time.powf(1.0 / warp);
    (0..=steps)
        .map(|n| {
            if n == 0 {
                min_time
            } else if n == steps {
                max_time
            } else {
                let f = n as f64 / steps as f64;
                (a + f * (b - a)).powf(warp)
            }
        })
        .collect()
}

/// Skip/output weights forcing the denoiser to the identity at minimal noise:
/// c_skip(eps) = 1 and c_out(eps) = 0 exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preconditioner {
    pub sigma_data: f64,
    pub min_time: f64,
}

impl Preconditioner {
    pub fn new(sigma_data: f64, min_time: f64) -> Preconditioner {
        Preconditioner { sigma_data, min_time }
    }

    pub fn standard() -> Preconditioner {
        Preconditioner { sigma_data: 0.5, min_time: 0.002 }
    }

    pub fn c_skip(&self, t: f64) -> f64 {
        let s2 = self.sigma_data * self.sigma_data;
        let d = t - self.min_time;
        s2 / (s2 + d * d)
    }

    pub fn c_out(&self, t: f64) -> f64 {
        let s2 = self.sigma_data * self.sigma_data;
        (t - self.min_time) * self.sigma_data / (s2 + t * t).sqrt()
    }
}

/// Draws h + t*z with z standard normal, elementwise in row-major order.
pub fn perturb<R: Rng>(h: &Tensor, t: f64, rng: &mut R) -> Tensor {
    let data: Vec<f64> = h
        .data()
        .iter()
        .map(|&v| v + t * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::from_vec_unchecked(h.shape().to_vec(), data)
}
