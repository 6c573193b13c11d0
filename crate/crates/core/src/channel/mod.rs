//! Parametric geometric cluster channel simulator: scenario-labeled channel
//! tensors, domain transforms between the spatial-frequency and
//! angular-delay representations, and the on-disk dataset format.

pub mod dataset;
pub mod geometry;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// OFDM frame geometry shared by every tensor in a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Receive antennas (ULA, half-wavelength spacing).
    pub n_rx: usize,
    /// Transmit antennas.
    pub n_tx: usize,
    /// Subcarriers per symbol.
    pub subcarriers: usize,
    /// OFDM symbols per frame.
    pub symbols: usize,
    /// Retained delay bins in the angular-delay representation.
    pub delay_bins: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing_hz: f64,
    /// OFDM symbol duration in seconds.
    pub symbol_duration_s: f64,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
}

impl FrameConfig {
    /// Full-scale profile: 32 antennas, 512 subcarriers over 10 MHz,
    /// 14 symbols, 32 delay bins, 2.655 GHz carrier.
    pub fn paper() -> FrameConfig {
        let df = 10e6 / 512.0;
        FrameConfig {
            n_rx: 32,
            n_tx: 1,
            subcarriers: 512,
            symbols: 14,
            delay_bins: 32,
            subcarrier_spacing_hz: df,
            symbol_duration_s: 1.0 / df,
            carrier_hz: 2.655e9,
        }
    }

    /// Reduced profile for desk-scale experiments.
    pub fn desk() -> FrameConfig {
        let df = 10e6 / 64.0;
        FrameConfig {
            n_rx: 8,
            n_tx: 1,
            subcarriers: 64,
            symbols: 14,
            delay_bins: 16,
            subcarrier_spacing_hz: df,
            symbol_duration_s: 1.0 / df,
            carrier_hz: 2.655e9,
        }
    }

    /// Minimal profile for fast tests.
    pub fn tiny() -> FrameConfig {
        let df = 10e6 / 16.0;
        FrameConfig {
            n_rx: 2,
            n_tx: 1,
            subcarriers: 16,
            symbols: 4,
            delay_bins: 4,
            subcarrier_spacing_hz: df,
            symbol_duration_s: 1.0 / df,
            carrier_hz: 2.655e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 || !self.n_rx.is_power_of_two() {
            return Err(Error::invalid("FrameConfig", format!("n_rx {} must be a power of two", self.n_rx)));
        }
        if self.subcarriers == 0 || !self.subcarriers.is_power_of_two() {
            return Err(Error::invalid(
                "FrameConfig",
                format!("subcarriers {} must be a power of two", self.subcarriers),
            ));
        }
        if self.delay_bins == 0 || self.delay_bins > self.subcarriers {
            return Err(Error::invalid(
                "FrameConfig",
                format!("delay_bins {} must be in 1..={}", self.delay_bins, self.subcarriers),
            ));
        }
        if self.n_tx == 0 || self.symbols == 0 {
            return Err(Error::invalid("FrameConfig", "n_tx and symbols must be positive"));
        }
        if self.subcarrier_spacing_hz <= 0.0 || self.symbol_duration_s <= 0.0 || self.carrier_hz <= 0.0 {
            return Err(Error::invalid("FrameConfig", "spacing, duration and carrier must be positive"));
        }
        Ok(())
    }

    /// Resource elements per frame.
    pub fn resource_elements(&self) -> usize {
        self.subcarriers * self.symbols
    }

    /// Largest representable path delay.
    pub fn delay_window_s(&self) -> f64 {
        self.delay_bins as f64 / (self.subcarriers as f64 * self.subcarrier_spacing_hz)
    }

    /// Flattened length of one angular-delay channel tensor.
    pub fn channel_dim(&self) -> usize {
        self.n_rx * self.n_tx * self.delay_bins * self.symbols * 2
    }

    pub fn spatial_freq_shape(&self) -> Vec<usize> {
        vec![self.n_rx, self.n_tx, self.subcarriers, self.symbols, 2]
    }

    pub fn angular_delay_shape(&self) -> Vec<usize> {
        vec![self.n_rx, self.n_tx, self.delay_bins, self.symbols, 2]
    }
}

/// Statistical description of one subregion of the cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Center of the square subregion in meters, BS at the origin.
    pub center: (f64, f64),
    /// Side of the square subregion in meters.
    pub extent_m: f64,
    /// Cluster (path) count.
    pub n_clusters: usize,
    pub los: bool,
    pub delay_spread_s: f64,
    pub angular_spread_rad: f64,
    /// Power decay versus delay, in units of the delay spread; 0 = flat.
    pub decay_exponent: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::invalid("ScenarioConfig", "n_clusters must be >= 1"));
        }
        if self.extent_m <= 0.0 || self.delay_spread_s <= 0.0 || self.angular_spread_rad < 0.0 {
            return Err(Error::invalid("ScenarioConfig", "extent, delay spread must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let h = self.extent_m / 2.0;
        (x - self.center.0).abs() <= h && (y - self.center.1).abs() <= h
    }

    /// Five-subregion layout: two rich scattering areas, two sparse
    /// line-of-sight areas, one intermediate.
    pub fn default_cell() -> Vec<ScenarioConfig> {
        let mk = |name: &str, center: (f64, f64), clusters: usize, los: bool, seed: u64| {
            let (ds, asp) = if los { (0.08e-6, 0.10) } else { (0.25e-6, 0.50) };
            ScenarioConfig {
                name: name.to_string(),
                center,
                extent_m: 20.0,
                n_clusters: clusters,
                los,
                delay_spread_s: ds,
                angular_spread_rad: asp,
                decay_exponent: 1.0,
                seed,
            }
        };
        vec![
            mk("R1-business", (50.0, 0.0), 40, false, 101),
            mk("R2-residential", (-100.0, -50.0), 40, false, 102),
            mk("R3-rural", (10.0, -70.0), 5, true, 103),
            mk("R4-parking", (90.0, -160.0), 5, true, 104),
            mk("R5-warehouse", (0.0, 170.0), 10, false, 105),
        ]
    }
}

/// Conditioning label: planar UE position and speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
}

impl ScenarioLabel {
    pub fn new(x_m: f64, y_m: f64, speed_mps: f64) -> ScenarioLabel {
        ScenarioLabel { x_m, y_m, speed_mps }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x_m, self.y_m, self.speed_mps]
    }

    pub fn is_finite(&self) -> bool {
        self.x_m.is_finite() && self.y_m.is_finite() && self.speed_mps.is_finite()
    }
}

/// Per-component label statistics, persisted with any trained model so the
/// embedding sees the same normalization at train and generation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl LabelStats {
    pub fn identity() -> LabelStats {
        LabelStats { mean: [0.0; 3], std: [1.0; 3] }
    }

    pub fn from_labels(labels: &[ScenarioLabel]) -> LabelStats {
        if labels.is_empty() {
            return LabelStats::identity();
        }
        let n = labels.len() as f64;
        let mut mean = [0.0; 3];
        for l in labels {
            for (m, v) in mean.iter_mut().zip(l.as_array()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = [0.0; 3];
        for l in labels {
            for ((vv, v), m) in var.iter_mut().zip(l.as_array()).zip(mean) {
                *vv += (v - m) * (v - m);
            }
        }
        let std = var.map(|v| (v / n).sqrt().max(1e-9));
        LabelStats { mean, std }
    }

    pub fn normalize(&self, label: &ScenarioLabel) -> [f64; 3] {
        let a = label.as_array();
        [
            (a[0] - self.mean[0]) / self.std[0],
            (a[1] - self.mean[1]) / self.std[1],
            (a[2] - self.mean[2]) / self.std[2],
        ]
    }
}

/// One propagation path of the cluster model.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub gain: f64,
    pub phase_rad: f64,
    pub delay_s: f64,
    pub aoa_rad: f64,
    pub aod_rad: f64,
    pub doppler_hz: f64,
}

/// The resolved multipath structure for one channel realization.
/// Gains are normalized so the total path power is exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain * p.gain).sum()
    }
}

/// Domain tag of a channel tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    SpatialFreqTime,
    AngularDelayTime,
}

impl Domain {
    pub fn name(&self) -> &'static str {
        match self {
            Domain::SpatialFreqTime => "spatial-frequency-time",
            Domain::AngularDelayTime => "angular-delay-time",
        }
    }
}

/// A channel realization in a tagged domain, stored as a real tensor of
/// shape (n_rx, n_tx, K or tau, S, 2) with re/im stacked on the last axis.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTensor {
    pub domain: Domain,
    pub data: Tensor,
}

impl ChannelTensor {
    pub fn new(domain: Domain, data: Tensor, frame: &FrameConfig) -> Result<ChannelTensor> {
        let expected = match domain {
            Domain::SpatialFreqTime => frame.spatial_freq_shape(),
            Domain::AngularDelayTime => frame.angular_delay_shape(),
        };
        if data.shape() != expected.as_slice() {
            return Err(Error::shape(
                "ChannelTensor",
                format!("{} expects {:?}, got {:?}", domain.name(), expected, data.shape()),
            ));
        }
        Ok(ChannelTensor { domain, data })
    }

    pub fn energy(&self) -> f64 {
        self.data.data().iter().map(|v| v * v).sum()
    }

    /// Flattened view used by the generative models.
    pub fn flat(&self) -> &[f64] {
        self.data.data()
    }
}

/// How a dataset's samples were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Simulator,
    Dm,
    Cm,
    Mixup,
    Noisy,
}

/// Dataset provenance persisted in the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: Generator,
    pub seed: u64,
    pub scenarios: Vec<ScenarioConfig>,
}

/// Labeled angular-delay channel tensors sharing one frame configuration.
#[derive(Clone, Debug)]
pub struct ChannelDataset {
    pub frame: FrameConfig,
    pub samples: Vec<ChannelTensor>,
    pub labels: Vec<ScenarioLabel>,
    pub meta: DatasetMeta,
}

impl ChannelDataset {
    pub fn new(
        frame: FrameConfig,
        samples: Vec<ChannelTensor>,
        labels: Vec<ScenarioLabel>,
        meta: DatasetMeta,
    ) -> Result<ChannelDataset> {
        if samples.len() != labels.len() {
            return Err(Error::shape(
                "ChannelDataset",
                format!("{} samples vs {} labels", samples.len(), labels.len()),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.domain != Domain::AngularDelayTime {
                return Err(Error::WrongDomain {
                    expected: "angular-delay-time",
                    got: s.domain.name(),
                });
            }
            if s.data.shape() != frame.angular_delay_shape().as_slice() {
                return Err(Error::shape(
                    "ChannelDataset",
                    format!("sample {} has shape {:?}", i, s.data.shape()),
                ));
            }
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite { context: "ChannelDataset labels".into() });
        }
        Ok(ChannelDataset { frame, samples, labels, meta })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Selects a subset by index, keeping provenance.
    pub fn subset(&self, idx: &[usize]) -> Result<ChannelDataset> {
        let mut samples = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::invalid("subset", format!("index {i} out of range")));
            }
            samples.push(self.samples[i].clone());
            labels.push(self.labels[i]);
        }
        ChannelDataset::new(self.frame.clone(), samples, labels, self.meta.clone())
    }

    /// Concatenates datasets with identical frame configurations.
    pub fn concat(&self, other: &ChannelDataset) -> Result<ChannelDataset> {
        if self.frame != other.frame {
            return Err(Error::invalid("concat", "frame configurations differ"));
        }
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        ChannelDataset::new(self.frame.clone(), samples, labels, self.meta.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_profiles_validate() {
        FrameConfig::paper().validate().unwrap();
        FrameConfig::desk().validate().unwrap();
        FrameConfig::tiny().validate().unwrap();
        let mut bad = FrameConfig::desk();
        bad.n_rx = 6;
        assert!(bad.validate().is_err());
        let mut bad = FrameConfig::desk();
        bad.delay_bins = 128;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn paper_profile_matches_published_settings() {
        let f = FrameConfig::paper();
        assert_eq!((f.n_rx, f.n_tx, f.subcarriers, f.symbols, f.delay_bins), (32, 1, 512, 14, 32));
        assert!((f.carrier_hz - 2.655e9).abs() < 1.0);
        assert_eq!(f.resource_elements(), 512 * 14);
    }

    #[test]
    fn label_stats_normalize() {
        let labels = vec![
            ScenarioLabel::new(0.0, 10.0, 5.0),
            ScenarioLabel::new(4.0, 10.0, 15.0),
        ];
        let st = LabelStats::from_labels(&labels);
        assert_eq!(st.mean, [2.0, 10.0, 10.0]);
        let n = st.normalize(&labels[0]);
        assert!((n[0] + 1.0).abs() < 1e-12);
        assert!(n[1].abs() < 1e-6); // zero-variance component floors the std
    }

    #[test]
    fn default_cell_mirrors_subregion_layout() {
        let cell = ScenarioConfig::default_cell();
        assert_eq!(cell.len(), 5);
        let clusters: Vec<usize> = cell.iter().map(|s| s.n_clusters).collect();
        assert_eq!(clusters, vec![40, 40, 5, 5, 10]);
        assert!(cell.iter().all(|s| (s.extent_m - 20.0).abs() < 1e-12));
    }
}
