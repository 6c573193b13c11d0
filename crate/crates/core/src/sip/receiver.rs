//! Interference-cancellation neural receiver: a channel-estimation subnet
//! and a detection subnet applied alternately for a fixed number of
//! iterations over the (subcarrier, symbol) grid.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::channel::FrameConfig;
use crate::diffusion::unet::{conv_init, group_count};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sip::frame::LinkSample;
use crate::sip::modem::Constellation;
use crate::sip::SipConfig;
use crate::tensor::adam::AdamState;
use crate::tensor::graph::{Graph, Var};
use crate::tensor::params::{Binding, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    /// Hidden channel width of both subnets.
    pub width: usize,
    /// Residual blocks per subnet.
    pub blocks: usize,
}

impl Default for ReceiverConfig {
    fn default() -> ReceiverConfig {
        ReceiverConfig { width: 16, blocks: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for RxTrainConfig {
    fn default() -> RxTrainConfig {
        RxTrainConfig { epochs: 300, batch_size: 32, lr: 1e-3, seed: 0 }
    }
}

/// Trained or initialized receiver parameters.
#[derive(Clone, Debug)]
pub struct ReceiverModel {
    pub frame: FrameConfig,
    pub sip: SipConfig,
    pub config: ReceiverConfig,
    pub params: ParamSet,
    pub trained: bool,
}

fn reg(params: &mut ParamSet, name: String, t: Tensor) {
    params.insert(name, t).expect("unique receiver parameter names");
}

fn init_net<R: rand::Rng>(
    params: &mut ParamSet,
    prefix: &str,
    in_ch: usize,
    out_ch: usize,
    cfg: &ReceiverConfig,
    rng: &mut R,
) {
    let w = cfg.width;
    reg(params, format!("{prefix}.stem.w"), conv_init(rng, w, in_ch, 3, 3, 1.0));
    reg(params, format!("{prefix}.stem.b"), Tensor::zeros(&[1, w, 1, 1]));
    for i in 0..cfg.blocks {
        for gn in ["gn1", "gn2"] {
            reg(params, format!("{prefix}.res{i}.{gn}.g"), Tensor::full(&[1, w, 1, 1], 1.0));
            reg(params, format!("{prefix}.res{i}.{gn}.b"), Tensor::zeros(&[1, w, 1, 1]));
        }
        reg(params, format!("{prefix}.res{i}.conv1.w"), conv_init(rng, w, w, 3, 3, 1.0));
        reg(params, format!("{prefix}.res{i}.conv1.b"), Tensor::zeros(&[1, w, 1, 1]));
        reg(params, format!("{prefix}.res{i}.conv2.w"), conv_init(rng, w, w, 3, 3, 1.0));
        reg(params, format!("{prefix}.res{i}.conv2.b"), Tensor::zeros(&[1, w, 1, 1]));
    }
    reg(params, format!("{prefix}.head.gn.g"), Tensor::full(&[1, w, 1, 1], 1.0));
    reg(params, format!("{prefix}.head.gn.b"), Tensor::zeros(&[1, w, 1, 1]));
    reg(params, format!("{prefix}.head.conv.w"), conv_init(rng, out_ch, w, 3, 3, 0.1));
    reg(params, format!("{prefix}.head.conv.b"), Tensor::zeros(&[1, out_ch, 1, 1]));
}

impl ReceiverModel {
    pub fn init(frame: &FrameConfig, sip: SipConfig, config: ReceiverConfig, seed: u64) -> Result<ReceiverModel> {
        frame.validate()?;
        sip.validate(frame.symbols)?;
        if frame.n_tx != 1 {
            return Err(Error::invalid("ReceiverModel", "only single-antenna transmitters are supported"));
        }
        if config.width == 0 {
            return Err(Error::invalid("ReceiverModel", "width must be positive"));
        }
        let q = sip.data_constellation.bits_per_symbol();
        let nr2 = 2 * frame.n_rx;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamSet::new();
        init_net(&mut params, "ce", nr2 + 2, nr2, &config, &mut rng);
        init_net(&mut params, "det", 2 * nr2, q, &config, &mut rng);
        Ok(ReceiverModel { frame: frame.clone(), sip, config, params, trained: false })
    }
}

fn conv_bias(g: &mut Graph, b: &Binding, prefix: &str, x: Var, pad: usize) -> Result<Var> {
    let c = g.conv2d(x, b.var(&format!("{prefix}.w")), 1, pad)?;
    g.add(c, b.var(&format!("{prefix}.b")))
}

fn norm_affine(g: &mut Graph, b: &Binding, prefix: &str, x: Var, c: usize) -> Result<Var> {
    let n = g.group_norm(x, group_count(c), 1e-5)?;
    let s = g.mul(n, b.var(&format!("{prefix}.g")))?;
    g.add(s, b.var(&format!("{prefix}.b")))
}

fn net_forward(
    g: &mut Graph,
    b: &Binding,
    prefix: &str,
    cfg: &ReceiverConfig,
    x: Var,
) -> Result<Var> {
    let w = cfg.width;
    let mut h = conv_bias(g, b, &format!("{prefix}.stem"), x, 1)?;
    for i in 0..cfg.blocks {
        let pre = format!("{prefix}.res{i}");
        let mut r = norm_affine(g, b, &format!("{pre}.gn1"), h, w)?;
        r = g.silu(r)?;
        r = conv_bias(g, b, &format!("{pre}.conv1"), r, 1)?;
        r = norm_affine(g, b, &format!("{pre}.gn2"), r, w)?;
        r = g.silu(r)?;
        r = conv_bias(g, b, &format!("{pre}.conv2"), r, 1)?;
        h = g.add(h, r)?;
    }
    let h = norm_affine(g, b, &format!("{prefix}.head.gn"), h, w)?;
    let h = g.silu(h)?;
    conv_bias(g, b, &format!("{prefix}.head.conv"), h, 1)
}

/// Batched receiver inputs as channel-major images over the RE grid.
pub struct ReceiverBatch {
    /// (B, 2*n_rx, K, S): re block then im block.
    pub y: Tensor,
    /// (B, 2, K, S).
    pub pilots: Tensor,
    /// (B, Q, K, S) bit targets.
    pub bits: Tensor,
    /// (B, 2*n_rx, K, S) true channel.
    pub h_true: Tensor,
}

pub fn assemble_receiver_batch(samples: &[&LinkSample], frame: &FrameConfig, q: usize) -> Result<ReceiverBatch> {
    let (nr, k, s) = (frame.n_rx, frame.subcarriers, frame.symbols);
    let bsz = samples.len();
    if bsz == 0 {
        return Err(Error::invalid("receiver batch", "empty batch"));
    }
    let plane = k * s;
    let mut y = vec![0.0; bsz * 2 * nr * plane];
    let mut p = vec![0.0; bsz * 2 * plane];
    let mut bits = vec![0.0; bsz * q * plane];
    let mut h = vec![0.0; bsz * 2 * nr * plane];
    for (bi, ls) in samples.iter().enumerate() {
        let yd = ls.y.data();
        let hd = ls.h_sf.data.data();
        for m in 0..nr {
            for re in 0..plane {
                let src = (m * plane + re) * 2;
                y[((bi * 2 * nr) + m) * plane + re] = yd[src];
                y[((bi * 2 * nr) + nr + m) * plane + re] = yd[src + 1];
                h[((bi * 2 * nr) + m) * plane + re] = hd[src];
                h[((bi * 2 * nr) + nr + m) * plane + re] = hd[src + 1];
            }
        }
        let pd = ls.pilots.data();
        for re in 0..plane {
            p[(bi * 2) * plane + re] = pd[re * 2];
            p[(bi * 2 + 1) * plane + re] = pd[re * 2 + 1];
        }
        if ls.bits.len() != plane * q {
            return Err(Error::shape(
                "receiver batch",
                format!("expected {} bits, got {}", plane * q, ls.bits.len()),
            ));
        }
        for re in 0..plane {
            for b in 0..q {
                bits[((bi * q) + b) * plane + re] = ls.bits[re * q + b] as f64;
            }
        }
    }
    Ok(ReceiverBatch {
        y: Tensor::from_vec(vec![bsz, 2 * nr, k, s], y)?,
        pilots: Tensor::from_vec(vec![bsz, 2, k, s], p)?,
        bits: Tensor::from_vec(vec![bsz, q, k, s], bits)?,
        h_true: Tensor::from_vec(vec![bsz, 2 * nr, k, s], h)?,
    })
}

/// Expected data symbol (re, im planes of shape (B,1,K,S)) under the
/// per-bit probabilities implied by the logits.
fn soft_symbol(
    g: &mut Graph,
    logits: Var,
    constellation: Constellation,
) -> Result<(Var, Var)> {
    let shape = g.value(logits).shape().to_vec();
    let (bsz, k, s) = (shape[0], shape[2], shape[3]);
    let p = g.sigmoid_op(logits)?;
    let bit = |g: &mut Graph, p: Var, i: usize| -> Result<Var> {
        let b = g.narrow(p, 1, i, 1)?;
        g.reshape(b, &[bsz, 1, k, s])
    };
    match constellation {
        Constellation::Qpsk => {
            let s0 = bit(g, p, 0)?;
            let s1 = bit(g, p, 1)?;
            let re = g.scale(s0, -2.0)?;
            let re = g.add_scalar(re, 1.0)?;
            let re = g.scale(re, std::f64::consts::FRAC_1_SQRT_2)?;
            let im = g.scale(s1, -2.0)?;
            let im = g.add_scalar(im, 1.0)?;
            let im = g.scale(im, std::f64::consts::FRAC_1_SQRT_2)?;
            Ok((re, im))
        }
        Constellation::Qam16 => {
            // E[level(hi, lo)] = (1 - 2 p_hi)(3 - 2 p_lo) for the Gray ladder
            let axis = |g: &mut Graph, hi: Var, lo: Var| -> Result<Var> {
                let a = g.scale(hi, -2.0)?;
                let a = g.add_scalar(a, 1.0)?;
                let b = g.scale(lo, -2.0)?;
                let b = g.add_scalar(b, 3.0)?;
                let m = g.mul(a, b)?;
                g.scale(m, 1.0 / 10.0f64.sqrt())
            };
            let b0 = bit(g, p, 0)?;
            let b1 = bit(g, p, 1)?;
            let b2 = bit(g, p, 2)?;
            let b3 = bit(g, p, 3)?;
            Ok((axis(g, b0, b1)?, axis(g, b2, b3)?))
        }
    }
}

/// Runs `ic_iterations` alternations of channel estimation and detection.
/// Iteration i >= 2 subtracts the reconstructed data contribution (current
/// channel estimate times the soft symbol expectation) before re-estimating.
/// Returns exactly `ic_iterations` (bit-logit, channel-estimate) pairs.
pub fn neural_receiver_forward(
    model: &ReceiverModel,
    g: &mut Graph,
    bind: &Binding,
    y: Var,
    pilots: Var,
) -> Result<Vec<(Var, Var)>> {
    let nr = model.frame.n_rx;
    let wd = (1.0 - model.sip.rho).sqrt();
    let mut outputs = Vec::with_capacity(model.sip.ic_iterations);
    let mut cancel: Option<(Var, Var)> = None; // (h_est, logits) from previous pass
    for _ in 0..model.sip.ic_iterations {
        let ce_in = match cancel {
            None => g.concat(&[y, pilots], 1)?,
            Some((h_prev, logits_prev)) => {
                let (dre, dim_) = soft_symbol(g, logits_prev, model.sip.data_constellation)?;
                let hr = g.narrow(h_prev, 1, 0, nr)?;
                let hi = g.narrow(h_prev, 1, nr, nr)?;
                // complex product h * E[d]
                let rr = g.mul(hr, dre)?;
                let ii = g.mul(hi, dim_)?;
                let ri = g.mul(hr, dim_)?;
                let ir = g.mul(hi, dre)?;
                let prod_re = g.sub(rr, ii)?;
                let prod_im = g.add(ri, ir)?;
                let contrib = g.concat(&[prod_re, prod_im], 1)?;
                let contrib = g.scale(contrib, wd)?;
                let cleaned = g.sub(y, contrib)?;
                g.concat(&[cleaned, pilots], 1)?
            }
        };
        let h_est = net_forward(g, bind, "ce", &model.config, ce_in)?;
        let det_in = g.concat(&[y, h_est], 1)?;
        let logits = net_forward(g, bind, "det", &model.config, det_in)?;
        outputs.push((logits, h_est));
        cancel = Some((h_est, logits));
    }
    Ok(outputs)
}

/// (1/I) * sum_i [ mean BCE(bits, logits_i) + mean squared channel error_i ].
pub fn receiver_loss(
    g: &mut Graph,
    outputs: &[(Var, Var)],
    bits: Var,
    h_true: Var,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for &(logits, h_est) in outputs {
        let bce = g.bce_with_logits(logits, bits)?;
        let bce = g.mean_all(bce)?;
        let diff = g.sub(h_est, h_true)?;
        let sq = g.mul(diff, diff)?;
        let mse = g.mean_all(sq)?;
        let term = g.add(bce, mse)?;
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    let total = total.ok_or_else(|| Error::invalid("receiver_loss", "no outputs"))?;
    g.scale(total, 1.0 / outputs.len() as f64)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RxTrainLog {
    pub epoch_loss: Vec<f64>,
}

/// Trains the receiver in place on prepared link samples.
pub fn train_receiver(
    model: &mut ReceiverModel,
    samples: &[LinkSample],
    cfg: &RxTrainConfig,
) -> Result<RxTrainLog> {
    if samples.is_empty() {
        return Err(Error::invalid("train_receiver", "no samples"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("train_receiver", "epochs and batch_size must be positive"));
    }
    let q = model.sip.data_constellation.bits_per_symbol();
    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = AdamState::for_params(cfg.lr, model.params.tensors());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = RxTrainLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&LinkSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let batch = assemble_receiver_batch(&refs, &model.frame, q)?;
            let mut g = Graph::new();
            let bind = model.params.bind(&mut g, true);
            let y = g.leaf(batch.y, false);
            let p = g.leaf(batch.pilots, false);
            let bits = g.leaf(batch.bits, false);
            let h_true = g.leaf(batch.h_true, false);
            let outs = neural_receiver_forward(model, &mut g, &bind, y, p)?;
            let loss = receiver_loss(&mut g, &outs, bits, h_true)?;
            let loss_val = g.value(loss).item()?;
            if !loss_val.is_finite() {
                return Err(Error::Divergence {
                    context: format!("receiver loss at epoch {epoch}, batch {batches}"),
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
    model.trained = true;
    Ok(log)
}

/// Inference pass without gradients; returns per-iteration raw outputs.
pub fn receiver_infer(
    model: &ReceiverModel,
    samples: &[&LinkSample],
) -> Result<Vec<(Tensor, Tensor)>> {
    let q = model.sip.data_constellation.bits_per_symbol();
    let batch = assemble_receiver_batch(samples, &model.frame, q)?;
    let mut g = Graph::new();
    let bind = model.params.bind(&mut g, false);
    let y = g.leaf(batch.y, false);
    let p = g.leaf(batch.pilots, false);
    let outs = neural_receiver_forward(model, &mut g, &bind, y, p)?;
    Ok(outs
        .into_iter()
        .map(|(l, h)| (g.value(l).clone(), g.value(h).clone()))
        .collect())
}

const RX_MAGIC: &[u8; 4] = b"CFRX";
const RX_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct RxHeader {
    frame: FrameConfig,
    sip: SipConfig,
    config: ReceiverConfig,
    trained: bool,
    param_layout: Vec<(String, Vec<usize>)>,
}

/// Saves the receiver as magic, version, JSON header and f32 payload.
pub fn save_receiver(path: &std::path::Path, model: &ReceiverModel) -> Result<()> {
    use std::io::Write;
    let header = RxHeader {
        frame: model.frame.clone(),
        sip: model.sip.clone(),
        config: model.config.clone(),
        trained: model.trained,
        param_layout: model.params.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect(),
    };
    let hj = serde_json::to_vec(&header)?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(RX_MAGIC);
    buf.extend_from_slice(&RX_VERSION.to_le_bytes());
    buf.extend_from_slice(&(hj.len() as u32).to_le_bytes());
    buf.extend_from_slice(&hj);
    for (_, t) in model.params.iter() {
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_receiver(path: &std::path::Path) -> Result<ReceiverModel> {
    use std::io::Read;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |reason: &str| Error::Format { path: path.display().to_string(), reason: reason.to_string() };
    if bytes.len() < 10 || &bytes[..4] != RX_MAGIC {
        return Err(bad("missing CFRX magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != RX_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() < 10 + hlen {
        return Err(bad("truncated header"));
    }
    let header: RxHeader = serde_json::from_slice(&bytes[10..10 + hlen])?;
    let payload = &bytes[10 + hlen..];
    let total: usize = header.param_layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if payload.len() != total * 4 {
        return Err(bad("payload length mismatch"));
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
        params.insert(name.clone(), Tensor::from_vec(shape.clone(), data)?)?;
    }
    Ok(ReceiverModel {
        frame: header.frame,
        sip: header.sip,
        config: header.config,
        params,
        trained: header.trained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dataset::generate_dataset;
    use crate::channel::ScenarioConfig;
    use crate::sip::frame::build_training_set;

    fn tiny_setup(n: usize) -> (FrameConfig, Vec<LinkSample>) {
        let sc = vec![ScenarioConfig::default_cell()[2].clone()];
        let frame = FrameConfig::tiny();
        let ds = generate_dataset(&sc, n, &[5.0, 20.0], &frame, 3).unwrap();
        let samples = build_training_set(&ds, &SipConfig::default(), 7).unwrap();
        (frame, samples)
    }

    #[test]
    fn forward_produces_exactly_i_pairs_with_contract_shapes() {
        let (frame, samples) = tiny_setup(4);
        for i in [1usize, 2, 3] {
            let sip = SipConfig { ic_iterations: i, ..SipConfig::default() };
            let model = ReceiverModel::init(&frame, sip, ReceiverConfig { width: 6, blocks: 1 }, 1).unwrap();
            let refs: Vec<&LinkSample> = samples.iter().collect();
            let outs = receiver_infer(&model, &refs).unwrap();
            assert_eq!(outs.len(), i);
            let b = refs.len();
            for (logits, h) in outs {
                assert_eq!(logits.shape(), &[b, 4, frame.subcarriers, frame.symbols]);
                assert_eq!(h.shape(), &[b, 2 * frame.n_rx, frame.subcarriers, frame.symbols]);
            }
        }
    }

    #[test]
    fn loss_boundary_cases() {
        let (frame, samples) = tiny_setup(2);
        let model = ReceiverModel::init(&frame, SipConfig::default(), ReceiverConfig { width: 6, blocks: 1 }, 1).unwrap();
        let q = 4;
        let refs: Vec<&LinkSample> = samples.iter().collect();
        let batch = assemble_receiver_batch(&refs, &frame, q).unwrap();
        let mut g = Graph::new();
        let bits = g.leaf(batch.bits.clone(), false);
        let h_true = g.leaf(batch.h_true.clone(), false);

        // perfect logits (clipped at +-30) and perfect channel -> loss ~ 0
        let perfect: Vec<f64> = batch.bits.data().iter().map(|&b| if b > 0.5 { 30.0 } else { -30.0 }).collect();
        let pl = g.leaf(Tensor::from_vec(batch.bits.shape().to_vec(), perfect).unwrap(), false);
        let ph = g.leaf(batch.h_true.clone(), false);
        let loss = receiver_loss(&mut g, &[(pl, ph)], bits, h_true).unwrap();
        assert!(g.value(loss).item().unwrap() < 1e-10);

        // zero logits -> ln 2 per bit
        let zl = g.leaf(Tensor::zeros(batch.bits.shape()), false);
        let zh = g.leaf(batch.h_true.clone(), false);
        let loss = receiver_loss(&mut g, &[(zl, zh)], bits, h_true).unwrap();
        assert!((g.value(loss).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let _ = model;
    }

    #[test]
    fn receiver_checkpoint_round_trip() {
        let (frame, samples) = tiny_setup(4);
        let model = ReceiverModel::init(&frame, SipConfig::default(), ReceiverConfig { width: 6, blocks: 1 }, 1).unwrap();
        let dir = std::env::temp_dir().join(format!("cfrx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rx.cfrx");
        save_receiver(&path, &model).unwrap();
        let loaded = load_receiver(&path).unwrap();
        assert_eq!(loaded.frame, model.frame);
        assert_eq!(loaded.trained, model.trained);
        let refs: Vec<&LinkSample> = samples.iter().collect();
        let a = receiver_infer(&model, &refs).unwrap();
        // loaded parameters are f32-rounded; outputs stay finite and close
        let b = receiver_infer(&loaded, &refs).unwrap();
        let d: f64 = a[0].0.data().iter().zip(b[0].0.data().iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-4, "round-trip drift {d}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn training_is_deterministic_and_logged() {
        let (frame, samples) = tiny_setup(6);
        let mk = || ReceiverModel::init(&frame, SipConfig::default(), ReceiverConfig { width: 6, blocks: 1 }, 1).unwrap();
        let cfg = RxTrainConfig { epochs: 3, batch_size: 3, lr: 1e-3, seed: 5 };
        let mut m1 = mk();
        let mut m2 = mk();
        let l1 = train_receiver(&mut m1, &samples, &cfg).unwrap();
        let l2 = train_receiver(&mut m2, &samples, &cfg).unwrap();
        assert_eq!(l1.epoch_loss, l2.epoch_loss);
        assert_eq!(l1.epoch_loss.len(), 3);
        assert!(m1.trained);
        for (a, b) in m1.params.tensors().iter().zip(m2.params.tensors()) {
            assert_eq!(a.data(), b.data());
        }
    }
}
