//! Experiment configuration: one versioned JSON document that pins every
//! stage of the pipeline. Unknown keys are rejected so a typo in a sweep
//! cannot silently fall back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{FrameConfig, ScenarioConfig};
use crate::consistency::DistillConfig;
use crate::diffusion::predictor::PredictorConfig;
use crate::diffusion::train::DmTrainConfig;
use crate::diffusion::ScheduleSpec;
use crate::error::{Error, Result};
use crate::metrics::AugmentConfig;
use crate::sip::receiver::{ReceiverConfig, RxTrainConfig};
use crate::sip::SipConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameProfile {
    /// Full-scale settings; slow, kept behind an explicit choice.
    Paper,
    /// Default desk-scale settings.
    Desk,
}

impl FrameProfile {
    pub fn frame(&self) -> FrameConfig {
        match self {
            FrameProfile::Paper => FrameConfig::paper(),
            FrameProfile::Desk => FrameConfig::desk(),
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_profile() -> FrameProfile {
    FrameProfile::Desk
}

fn default_scenarios() -> Vec<ScenarioConfig> {
    ScenarioConfig::default_cell()
}

fn default_per_scenario() -> usize {
    200
}

fn default_speeds() -> Vec<f64> {
    vec![24.0, 300.0]
}

fn default_gen_per_scenario() -> usize {
    1000
}

fn default_eval_snrs() -> Vec<f64> {
    vec![-5.0, -3.0, 0.0, 5.0]
}

fn default_eval_frames() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_profile")]
    pub profile: FrameProfile,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioConfig>,
    /// Simulated training samples per scenario.
    #[serde(default = "default_per_scenario")]
    pub per_scenario: usize,
    /// UE speeds in km/h, cycled evenly over samples.
    #[serde(default = "default_speeds")]
    pub speeds_kmh: Vec<f64>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub dm_train: DmTrainConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    /// Generated samples per scenario for site-specific augmentation.
    #[serde(default = "default_gen_per_scenario")]
    pub generate_per_scenario: usize,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub sip: SipConfig,
    #[serde(default)]
    pub receiver: ReceiverConfig,
    #[serde(default)]
    pub rx_train: RxTrainConfig,
    #[serde(default = "default_eval_snrs")]
    pub eval_snrs_db: Vec<f64>,
    /// Test frames per evaluation point.
    #[serde(default = "default_eval_frames")]
    pub eval_frames: usize,
    /// Master seed; every derived artifact records it.
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        serde_json::from_str("{}").expect("empty config deserializes from defaults")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::invalid(
                "ExperimentConfig",
                format!("unsupported config version {}", self.version),
            ));
        }
        let frame = self.profile.frame();
        frame.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::invalid("ExperimentConfig", "no scenarios"));
        }
        for sc in &self.scenarios {
            sc.validate()?;
        }
        if self.speeds_kmh.is_empty() || self.per_scenario % self.speeds_kmh.len() != 0 {
            return Err(Error::invalid(
                "ExperimentConfig",
                "per_scenario must divide evenly over speeds",
            ));
        }
        self.schedule.build()?;
        self.predictor.unet.validate()?;
        self.sip.validate(frame.symbols)?;
        self.distill.validate()?;
        Ok(())
    }

    pub fn speeds_mps(&self) -> Vec<f64> {
        self.speeds_kmh.iter().map(|v| v / 3.6).collect()
    }
}
