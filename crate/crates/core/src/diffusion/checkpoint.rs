//! Model checkpoints ("CFDM" for diffusion, "CFCM" for consistency models):
//! magic, version, JSON header (architecture, label statistics, schedule),
//! then the parameter payload as little-endian f32 in canonical order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{FrameConfig, LabelStats};
use crate::diffusion::predictor::{NoisePredictor, PredictorConfig};
use crate::diffusion::ScheduleSpec;
use crate::error::{Error, Result};
use crate::tensor::params::ParamSet;
use crate::tensor::Tensor;

const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dm,
    Cm,
}

impl ModelKind {
    fn magic(&self) -> &'static [u8; 4] {
        match self {
            ModelKind::Dm => b"CFDM",
            ModelKind::Cm => b"CFCM",
        }
    }

    fn from_magic(m: &[u8]) -> Option<ModelKind> {
        match m {
            b"CFDM" => Some(ModelKind::Dm),
            b"CFCM" => Some(ModelKind::Cm),
            _ => None,
        }
    }
}

/// A trained model plus everything needed to sample from it.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub kind: ModelKind,
    pub predictor: NoisePredictor,
    pub sigma_data: f64,
    pub schedule: ScheduleSpec,
}

#[derive(Serialize, Deserialize)]
struct Header {
    frame: FrameConfig,
    config: PredictorConfig,
    label_stats: LabelStats,
    sigma_data: f64,
    data_scale: f64,
    schedule: ScheduleSpec,
    param_layout: Vec<(String, Vec<usize>)>,
}

pub fn save_model(path: &Path, model: &SavedModel, sidecar: &serde_json::Value) -> Result<()> {
    let header = Header {
        frame: model.predictor.frame.clone(),
        config: model.predictor.config.clone(),
        label_stats: model.predictor.label_stats.clone(),
        sigma_data: model.sigma_data,
        data_scale: model.predictor.data_scale,
        schedule: model.schedule,
        param_layout: model
            .predictor
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(model.kind.magic());
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for (_, t) in model.predictor.params.iter() {
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |reason: &str| Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 10 {
        return Err(bad("truncated checkpoint"));
    }
    let kind = ModelKind::from_magic(&bytes[..4]).ok_or_else(|| bad("unknown magic"))?;
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() < 10 + hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[10..10 + hlen])?;
    header.frame.validate()?;
    let total: usize = header.param_layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let payload = &bytes[10 + hlen..];
    if payload.len() != total * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", total * 4, payload.len())));
    }
    let mut params = ParamSet::new();
    let mut off = 0usize;
    for (name, shape) in &header.param_layout {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f32::from_le_bytes(payload[off..off + 4].try_into().unwrap()) as f64);
            off += 4;
        }
        let t = Tensor::from_vec(shape.clone(), data).map_err(|e| bad(&format!("parameter {name}: {e}")))?;
        params.insert(name.clone(), t)?;
    }
    Ok(SavedModel {
        kind,
        predictor: NoisePredictor {
            frame: header.frame,
            config: header.config,
            params,
            label_stats: header.label_stats,
            data_scale: header.data_scale,
        },
        sigma_data: header.sigma_data,
        schedule: header.schedule,
    })
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    std::path::PathBuf::from(p)
}
