//! Link evaluation over frames: BER, uncoded block error, channel NMSE and
//! throughput for the neural receiver and the linear baselines.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::transform::to_spatial_frequency;
use crate::channel::{ChannelDataset, FrameConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sip::frame::{build_sip_frame, transmit, LinkSample};
use crate::sip::lmmse::{lmmse_channel_estimate, lmmse_channel_estimate_op, lmmse_detect, op_pilot_positions, PriorCov};
use crate::sip::modem::harden;
use crate::sip::receiver::{receiver_infer, ReceiverModel};
use crate::sip::{throughput, LinkMetrics, SipConfig};
use crate::tensor::Tensor;

/// Receiver under evaluation.
pub enum LinkReceiver<'a> {
    /// Trained interference-cancellation network (superimposed pilots).
    Neural(&'a ReceiverModel),
    /// LMMSE estimation + detection on superimposed pilots.
    LmmseSip(&'a PriorCov),
    /// Orthogonal pilots with LMMSE estimation + detection.
    LmmseOp(&'a PriorCov),
    /// Perfect channel knowledge, superimposed frame (sanity bound).
    GenieSip,
}

impl LinkReceiver<'_> {
    pub fn id(&self) -> &'static str {
        match self {
            LinkReceiver::Neural(_) => "neural-sip",
            LinkReceiver::LmmseSip(_) => "lmmse-sip",
            LinkReceiver::LmmseOp(_) => "lmmse-op",
            LinkReceiver::GenieSip => "genie-sip",
        }
    }

    fn data_symbol_share(&self, cfg: &SipConfig, frame: &FrameConfig) -> f64 {
        match self {
            LinkReceiver::LmmseOp(_) => {
                (frame.symbols - cfg.op_pilot_symbols) as f64 / frame.symbols as f64
            }
            _ => 1.0,
        }
    }
}

/// Evaluates a receiver over one frame per test channel at a fixed SNR.
pub fn evaluate_link(
    receiver: &LinkReceiver,
    channels: &ChannelDataset,
    cfg: &SipConfig,
    snr_db: f64,
    seed: u64,
) -> Result<LinkMetrics> {
    if channels.is_empty() {
        return Err(Error::invalid("evaluate_link", "no test channels"));
    }
    let frame = &channels.frame;
    cfg.validate(frame.symbols)?;
    match receiver {
        LinkReceiver::LmmseOp(prior) => evaluate_op(prior, channels, cfg, snr_db, seed),
        _ => evaluate_sip(receiver, channels, cfg, snr_db, seed),
    }
}

fn evaluate_sip(
    receiver: &LinkReceiver,
    channels: &ChannelDataset,
    cfg: &SipConfig,
    snr_db: f64,
    seed: u64,
) -> Result<LinkMetrics> {
    let frame = &channels.frame;
    let q = cfg.data_constellation.bits_per_symbol();
    let n_bits = frame.resource_elements() * q;
    let mut samples = Vec::with_capacity(channels.len());
    for (i, ch) in channels.samples.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let bits: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..2u8)).collect();
        let pilot_seed: u64 = rng.random();
        let sf = to_spatial_frequency(ch, frame)?;
        let sig = build_sip_frame(&bits, pilot_seed, cfg, frame)?;
        samples.push(transmit(&sf, frame, &sig, snr_db, &mut rng)?);
    }

    let mut bit_errors = 0usize;
    let mut block_errors = 0usize;
    let mut nmse_acc = 0.0;
    match receiver {
        LinkReceiver::Neural(model) => {
            if model.frame != *frame {
                return Err(Error::invalid("evaluate_link", "receiver frame mismatch"));
            }
            for chunk in samples.chunks(16) {
                let refs: Vec<&LinkSample> = chunk.iter().collect();
                let outs = receiver_infer(model, &refs)?;
                let (logits, h_est) = outs.last().expect("at least one iteration");
                let plane = frame.resource_elements();
                for (bi, ls) in chunk.iter().enumerate() {
                    let mut frame_errs = 0usize;
                    for re in 0..plane {
                        for b in 0..q {
                            let l = logits.data()[((bi * q) + b) * plane + re];
                            let hard = u8::from(l > 0.0);
                            if hard != ls.bits[re * q + b] {
                                frame_errs += 1;
                            }
                        }
                    }
                    bit_errors += frame_errs;
                    block_errors += usize::from(frame_errs > 0);
                    nmse_acc += nmse_channel_major(h_est, bi, ls, frame);
                }
            }
        }
        LinkReceiver::LmmseSip(prior) => {
            for ls in &samples {
                let est = lmmse_channel_estimate(ls, prior, cfg, frame)?;
                let logits = lmmse_detect(&ls.y, &est, Some(&ls.pilots), ls.noise_var, cfg.rho, cfg, frame)?;
                let hard = harden(&logits);
                let frame_errs = count_errors(&hard, &ls.bits);
                bit_errors += frame_errs;
                block_errors += usize::from(frame_errs > 0);
                nmse_acc += nmse_interleaved(&est, ls, frame);
            }
        }
        LinkReceiver::GenieSip => {
            for ls in &samples {
                let true_h = ls
                    .h_sf
                    .data
                    .reshape(&[frame.n_rx, frame.subcarriers, frame.symbols, 2])?;
                let logits =
                    lmmse_detect(&ls.y, &true_h, Some(&ls.pilots), ls.noise_var.max(1e-15), cfg.rho, cfg, frame)?;
                let hard = harden(&logits);
                let frame_errs = count_errors(&hard, &ls.bits);
                bit_errors += frame_errs;
                block_errors += usize::from(frame_errs > 0);
            }
        }
        LinkReceiver::LmmseOp(_) => unreachable!("dispatched in evaluate_link"),
    }

    let frames = samples.len();
    let total_bits = frames * n_bits;
    let bler = block_errors as f64 / frames as f64;
    let metrics = LinkMetrics {
        ber: bit_errors as f64 / total_bits as f64,
        block_error_rate: bler,
        nmse: nmse_acc / frames as f64,
        throughput: throughput(
            frame.subcarriers,
            frame.symbols,
            receiver.data_symbol_share(cfg, frame),
            q,
            cfg.code_rate,
            bler,
        )?,
        frames,
    };
    metrics.validate()?;
    Ok(metrics)
}

/// Orthogonal-pilot baseline: `op_pilot_symbols` whole symbols carry QPSK
/// pilots at full power; the rest carry data.
fn evaluate_op(
    prior: &PriorCov,
    channels: &ChannelDataset,
    cfg: &SipConfig,
    snr_db: f64,
    seed: u64,
) -> Result<LinkMetrics> {
    let frame = &channels.frame;
    let (nr, k, s) = (frame.n_rx, frame.subcarriers, frame.symbols);
    let n_p = cfg.op_pilot_symbols;
    let pos = op_pilot_positions(s, n_p);
    let q = cfg.data_constellation.bits_per_symbol();
    let data_symbols = s - n_p;
    let n_bits = k * data_symbols * q;

    let mut bit_errors = 0usize;
    let mut block_errors = 0usize;
    let mut nmse_acc = 0.0;
    for (i, ch) in channels.samples.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let bits: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..2u8)).collect();
        let pilot_bits: Vec<u8> = (0..k * n_p * 2).map(|_| rng.random_range(0..2u8)).collect();
        let pilots = cfg.pilot_constellation.modulate(&pilot_bits)?; // (K, n_p) row-major k then j
        let data = cfg.data_constellation.modulate(&bits)?; // (K, data_symbols)

        // assemble the frame grid: tx[k][s]
        let mut tx = vec![Complex64::new(0.0, 0.0); k * s];
        let mut data_col = 0usize;
        let mut col_of_symbol = vec![usize::MAX; s];
        for si in 0..s {
            if pos.contains(&si) {
                continue;
            }
            col_of_symbol[si] = data_col;
            data_col += 1;
        }
        for ki in 0..k {
            for si in 0..s {
                tx[ki * s + si] = if let Some(j) = pos.iter().position(|&p| p == si) {
                    pilots[ki * n_p + j]
                } else {
                    data[ki * data_symbols + col_of_symbol[si]]
                };
            }
        }

        // received signal with transmit-referenced noise calibration
        let sf = to_spatial_frequency(ch, frame)?;
        let h = sf.data.data();
        let tx_power = tx.iter().map(|v| v.norm_sqr()).sum::<f64>() / (k * s) as f64;
        let noise_var = tx_power / 10f64.powf(snr_db / 10.0);
        let comp = (noise_var / 2.0).sqrt();
        let mut y = vec![Complex64::new(0.0, 0.0); nr * k * s];
        for m in 0..nr {
            for ki in 0..k {
                for si in 0..s {
                    let hi = ((m * k + ki) * s + si) * 2;
                    let hv = Complex64::new(h[hi], h[hi + 1]);
                    let n: Complex64 = Complex64::new(
                        comp * rng.sample::<f64, _>(rand_distr::StandardNormal),
                        comp * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    );
                    y[(m * k + ki) * s + si] = hv * tx[ki * s + si] + n;
                }
            }
        }

        let est = lmmse_channel_estimate_op(&y, &pilots, noise_var, prior, frame, n_p)?;
        nmse_acc += nmse_interleaved(&est, &dummy_sample_for(&sf), frame);

        // detect data symbols only (full power, no superimposed pilot)
        let mut y_t = Vec::with_capacity(nr * k * s * 2);
        for v in &y {
            y_t.push(v.re);
            y_t.push(v.im);
        }
        let y_t = Tensor::from_vec(vec![nr, k, s, 2], y_t)?;
        let logits = lmmse_detect(&y_t, &est, None, noise_var, 0.0, cfg, frame)?;
        let hard = harden(&logits);
        let mut frame_errs = 0usize;
        for ki in 0..k {
            for si in 0..s {
                let Some(col) = col_of_symbol.get(si).filter(|&&c| c != usize::MAX) else {
                    continue;
                };
                for b in 0..q {
                    let got = hard[(ki * s + si) * q + b];
                    let want = bits[(ki * data_symbols + col) * q + b];
                    if got != want {
                        frame_errs += 1;
                    }
                }
            }
        }
        bit_errors += frame_errs;
        block_errors += usize::from(frame_errs > 0);
        let _ = i;
    }

    let frames = channels.len();
    let bler = block_errors as f64 / frames as f64;
    let metrics = LinkMetrics {
        ber: bit_errors as f64 / (frames * n_bits) as f64,
        block_error_rate: bler,
        nmse: nmse_acc / frames as f64,
        throughput: throughput(
            k,
            s,
            data_symbols as f64 / s as f64,
            q,
            cfg.code_rate,
            bler,
        )?,
        frames,
    };
    metrics.validate()?;
    Ok(metrics)
}

fn dummy_sample_for(sf: &crate::channel::ChannelTensor) -> LinkSample {
    LinkSample {
        y: Tensor::zeros(&[1]),
        pilots: Tensor::zeros(&[1]),
        bits: vec![],
        h_sf: sf.clone(),
        snr_db: 0.0,
        noise_var: 0.0,
    }
}

fn count_errors(hard: &[u8], bits: &[u8]) -> usize {
    hard.iter().zip(bits.iter()).filter(|(a, b)| a != b).count()
}

/// NMSE of an interleaved (n_rx, K, S, 2) estimate against the true channel.
fn nmse_interleaved(est: &Tensor, ls: &LinkSample, frame: &FrameConfig) -> f64 {
    let h = ls.h_sf.data.data();
    let e = est.data();
    let n = frame.n_rx * frame.subcarriers * frame.symbols * 2;
    let mut err = 0.0;
    let mut energy = 0.0;
    for i in 0..n {
        let d = e[i] - h[i];
        err += d * d;
        energy += h[i] * h[i];
    }
    err / energy.max(1e-300)
}

/// NMSE for the channel-major (B, 2 n_rx, K, S) layout of receiver outputs.
fn nmse_channel_major(h_est: &Tensor, bi: usize, ls: &LinkSample, frame: &FrameConfig) -> f64 {
    let (nr, plane) = (frame.n_rx, frame.resource_elements());
    let h = ls.h_sf.data.data();
    let e = h_est.data();
    let mut err = 0.0;
    let mut energy = 0.0;
    for m in 0..nr {
        for re in 0..plane {
            let src = (m * plane + re) * 2;
            let dre = e[((bi * 2 * nr) + m) * plane + re] - h[src];
            let dim_ = e[((bi * 2 * nr) + nr + m) * plane + re] - h[src + 1];
            err += dre * dre + dim_ * dim_;
            energy += h[src] * h[src] + h[src + 1] * h[src + 1];
        }
    }
    err / energy.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dataset::generate_dataset;
    use crate::channel::ScenarioConfig;

    fn tiny_channels(n: usize, seed: u64) -> ChannelDataset {
        let sc = vec![ScenarioConfig::default_cell()[2].clone()];
        generate_dataset(&sc, n, &[5.0], &crate::channel::FrameConfig::tiny(), seed).unwrap()
    }

    #[test]
    fn genie_at_high_snr_is_error_free() {
        let ds = tiny_channels(20, 3);
        let cfg = SipConfig::default();
        let m = evaluate_link(&LinkReceiver::GenieSip, &ds, &cfg, 30.0, 5).unwrap();
        assert!(m.ber < 1e-4, "genie BER {}", m.ber);
        assert!(m.block_error_rate <= 1.0 && m.throughput > 0.0);
    }

    #[test]
    fn metrics_stay_in_range_for_linear_receivers() {
        let ds = tiny_channels(10, 4);
        let prior = PriorCov::estimate(&ds).unwrap();
        let cfg = SipConfig::default();
        for rx in [LinkReceiver::LmmseSip(&prior), LinkReceiver::LmmseOp(&prior)] {
            let m = evaluate_link(&rx, &ds, &cfg, 0.0, 9).unwrap();
            assert!(m.ber <= 1.0 && m.block_error_rate <= 1.0);
            assert!(m.nmse.is_finite());
        }
    }

    #[test]
    fn random_logits_make_every_block_err() {
        // BER around one half means each frame almost surely has an error
        let ds = tiny_channels(10, 6);
        let cfg = SipConfig::default();
        // evaluate the SIP-LMMSE receiver at hopeless SNR
        let prior = PriorCov::estimate(&ds).unwrap();
        let m = evaluate_link(&LinkReceiver::LmmseSip(&prior), &ds, &cfg, -40.0, 11).unwrap();
        assert!(m.ber > 0.3, "ber {}", m.ber);
        assert_eq!(m.block_error_rate, 1.0);
        assert_eq!(m.throughput, 0.0);
    }

    #[test]
    fn op_beats_sip_lmmse_in_ber_at_matched_snr() {
        // dedicated pilots make channel estimation much easier for the
        // linear receiver; the throughput story is the reverse
        let ds = tiny_channels(24, 7);
        let prior = PriorCov::estimate(&ds).unwrap();
        let cfg = SipConfig::default();
        let sip = evaluate_link(&LinkReceiver::LmmseSip(&prior), &ds, &cfg, 12.0, 13).unwrap();
        let op = evaluate_link(&LinkReceiver::LmmseOp(&prior), &ds, &cfg, 12.0, 13).unwrap();
        assert!(op.ber <= sip.ber + 0.02, "op {} vs sip {}", op.ber, sip.ber);
    }
}
