//! Dataset generation and the on-disk dataset format.
//!
//! File layout ("CFDS"): magic, version u16, frame block, sample count u32,
//! then per sample a little-endian f32 payload followed by a fixed-width
//! f64 label record. Provenance travels in a JSON sidecar at `<path>.json`.

use std::io::{Read, Write};
use std::path::Path as FsPath;

use crate::channel::geometry::{draw_paths, synthesize_channel};
use crate::channel::transform::to_angular_delay;
use crate::channel::{
    ChannelDataset, ChannelTensor, DatasetMeta, Domain, FrameConfig, Generator, ScenarioConfig,
    ScenarioLabel,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CFDS";
const VERSION: u16 = 1;

/// Simulates a labeled dataset: uniform UE positions per scenario, speeds
/// cycled evenly, one derived seed per sample. Output is angular-delay.
pub fn generate_dataset(
    scenarios: &[ScenarioConfig],
    per_scenario: usize,
    speeds_mps: &[f64],
    frame: &FrameConfig,
    master_seed: u64,
) -> Result<ChannelDataset> {
    if scenarios.is_empty() {
        return Err(Error::invalid("generate_dataset", "no scenarios"));
    }
    if speeds_mps.is_empty() || per_scenario % speeds_mps.len() != 0 {
        return Err(Error::invalid(
            "generate_dataset",
            format!(
                "per_scenario {} must divide evenly over {} speeds",
                per_scenario,
                speeds_mps.len()
            ),
        ));
    }
    frame.validate()?;
    let mut samples = Vec::with_capacity(scenarios.len() * per_scenario);
    let mut labels = Vec::with_capacity(scenarios.len() * per_scenario);
    for (si, sc) in scenarios.iter().enumerate() {
        sc.validate()?;
        for j in 0..per_scenario {
            let stream = (si * per_scenario + j) as u64;
            let mut rng = rng_from_seed(derive_seed(master_seed ^ sc.seed, stream));
            let x = sc.center.0 + (rng.random::<f64>() - 0.5) * sc.extent_m;
            let y = sc.center.1 + (rng.random::<f64>() - 0.5) * sc.extent_m;
            let label = ScenarioLabel::new(x, y, speeds_mps[j % speeds_mps.len()]);
            let paths = draw_paths(sc, &label, frame, &mut rng)?;
            let sf = synthesize_channel(&paths, frame)?;
            samples.push(to_angular_delay(&sf, frame)?);
            labels.push(label);
        }
    }
    ChannelDataset::new(
        frame.clone(),
        samples,
        labels,
        DatasetMeta {
            generator: Generator::Simulator,
            seed: master_seed,
            scenarios: scenarios.to_vec(),
        },
    )
}

use rand::Rng;

pub fn save_dataset(ds: &ChannelDataset, path: &FsPath) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    write_frame(&mut buf, &ds.frame);
    buf.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    let dim = ds.frame.channel_dim();
    for (sample, label) in ds.samples.iter().zip(ds.labels.iter()) {
        debug_assert_eq!(sample.flat().len(), dim);
        for &v in sample.flat() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for v in label.as_array() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    let sidecar = serde_json::to_string_pretty(&ds.meta)?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

pub fn load_dataset(path: &FsPath) -> Result<ChannelDataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |reason: &str| Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("missing CFDS magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut off = 6usize;
    let frame = read_frame(&bytes, &mut off).ok_or_else(|| bad("truncated frame block"))?;
    frame.validate()?;
    if off + 4 > bytes.len() {
        return Err(bad("truncated sample count"));
    }
    let count = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    off += 4;
    let dim = frame.channel_dim();
    let record = dim * 4 + 3 * 8;
    if bytes.len() != off + count * record {
        return Err(bad(&format!(
            "expected {} bytes of samples, found {}",
            count * record,
            bytes.len() - off
        )));
    }
    let shape = frame.angular_delay_shape();
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(dim);
        for _ in 0..dim {
            data.push(f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64);
            off += 4;
        }
        let t = Tensor::from_vec(shape.clone(), data)
            .map_err(|e| bad(&format!("bad sample payload: {e}")))?;
        samples.push(ChannelTensor { domain: Domain::AngularDelayTime, data: t });
        let mut lab = [0.0f64; 3];
        for l in lab.iter_mut() {
            *l = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
        labels.push(ScenarioLabel::new(lab[0], lab[1], lab[2]));
    }
    let sidecar = std::fs::read_to_string(sidecar_path(path)).map_err(|_| Error::Format {
        path: sidecar_path(path).display().to_string(),
        reason: "missing dataset sidecar".to_string(),
    })?;
    let meta: DatasetMeta = serde_json::from_str(&sidecar)?;
    ChannelDataset::new(frame, samples, labels, meta)
}

pub fn sidecar_path(path: &FsPath) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    std::path::PathBuf::from(p)
}

fn write_frame(buf: &mut Vec<u8>, f: &FrameConfig) {
    for v in [f.n_rx, f.n_tx, f.subcarriers, f.symbols, f.delay_bins] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [f.subcarrier_spacing_hz, f.symbol_duration_s, f.carrier_hz] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_frame(bytes: &[u8], off: &mut usize) -> Option<FrameConfig> {
    if *off + 5 * 4 + 3 * 8 > bytes.len() {
        return None;
    }
    let mut ints = [0usize; 5];
    for v in ints.iter_mut() {
        *v = u32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap()) as usize;
        *off += 4;
    }
    let mut floats = [0.0f64; 3];
    for v in floats.iter_mut() {
        *v = f64::from_le_bytes(bytes[*off..*off + 8].try_into().unwrap());
        *off += 8;
    }
    Some(FrameConfig {
        n_rx: ints[0],
        n_tx: ints[1],
        subcarriers: ints[2],
        symbols: ints[3],
        delay_bins: ints[4],
        subcarrier_spacing_hz: floats[0],
        symbol_duration_s: floats[1],
        carrier_hz: floats[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_scenarios() -> Vec<ScenarioConfig> {
        let all = ScenarioConfig::default_cell();
        vec![all[0].clone(), all[2].clone()]
    }

    #[test]
    fn counts_and_speed_split() {
        let frame = FrameConfig::tiny();
        let ds = generate_dataset(&two_scenarios(), 8, &[6.67, 83.33], &frame, 42).unwrap();
        assert_eq!(ds.len(), 16);
        let slow = ds.labels.iter().filter(|l| l.speed_mps < 10.0).count();
        assert_eq!(slow, 8);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let frame = FrameConfig::tiny();
        let a = generate_dataset(&two_scenarios(), 4, &[5.0], &frame, 7).unwrap();
        let b = generate_dataset(&two_scenarios(), 4, &[5.0], &frame, 7).unwrap();
        for (x, y) in a.samples.iter().zip(b.samples.iter()) {
            assert_eq!(x.data.data(), y.data.data());
        }
        let c = generate_dataset(&two_scenarios(), 4, &[5.0], &frame, 8).unwrap();
        assert_ne!(a.samples[0].data.data(), c.samples[0].data.data());
    }

    #[test]
    fn labels_stay_inside_extents() {
        let scenarios = two_scenarios();
        let frame = FrameConfig::tiny();
        let ds = generate_dataset(&scenarios, 10, &[5.0], &frame, 3).unwrap();
        for (i, l) in ds.labels.iter().enumerate() {
            let sc = &scenarios[i / 10];
            assert!(sc.contains(l.x_m, l.y_m), "label {i} escaped {:?}", sc.name);
        }
    }

    #[test]
    fn uneven_speed_split_is_rejected() {
        let frame = FrameConfig::tiny();
        assert!(generate_dataset(&two_scenarios(), 5, &[1.0, 2.0], &frame, 1).is_err());
        assert!(generate_dataset(&[], 4, &[1.0], &frame, 1).is_err());
    }

    #[test]
    fn file_round_trip_preserves_quantized_payload() {
        let dir = std::env::temp_dir().join(format!("cfds-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.cfds");
        let frame = FrameConfig::tiny();
        let ds = generate_dataset(&two_scenarios(), 4, &[5.0, 10.0], &frame, 11).unwrap();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.len(), ds.len());
        assert_eq!(loaded.meta, ds.meta);
        assert_eq!(loaded.labels, ds.labels);
        for (a, b) in loaded.samples.iter().zip(ds.samples.iter()) {
            for (x, y) in a.data.data().iter().zip(b.data.data().iter()) {
                assert_eq!(*x, *y as f32 as f64, "payload must be f32-quantized");
            }
        }
        // a second save of the loaded dataset is byte-identical
        let path2 = dir.join("t2.cfds");
        save_dataset(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn corrupt_magic_is_reported() {
        let dir = std::env::temp_dir().join(format!("cfds-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfds");
        std::fs::write(&path, b"NOPE").unwrap();
        match load_dataset(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
