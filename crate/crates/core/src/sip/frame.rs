//! Frame construction and channel application.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{ChannelTensor, Domain, FrameConfig};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sip::SipConfig;
use crate::tensor::Tensor;

/// One transmitted superimposed frame (single transmit antenna):
/// tx = sqrt(rho) * pilots + sqrt(1-rho) * data.
#[derive(Clone, Debug)]
pub struct SipFrame {
    pub pilots: Vec<Complex64>,
    pub data: Vec<Complex64>,
    pub tx: Vec<Complex64>,
    pub bits: Vec<u8>,
    pub subcarriers: usize,
    pub symbols: usize,
}

/// One received record for receiver training or evaluation.
#[derive(Clone, Debug)]
pub struct LinkSample {
    /// Received tensor (n_rx, K, S, 2).
    pub y: Tensor,
    /// Pilot tensor (K, S, 2).
    pub pilots: Tensor,
    /// Transmitted data bits, K*S*Q.
    pub bits: Vec<u8>,
    pub h_sf: ChannelTensor,
    pub snr_db: f64,
    /// Realized complex noise variance.
    pub noise_var: f64,
}

/// Builds a superimposed frame: seeded pseudo-random pilot symbols on every
/// resource element, data symbols from the payload bits.
pub fn build_sip_frame(
    bits: &[u8],
    pilot_seed: u64,
    cfg: &SipConfig,
    frame: &FrameConfig,
) -> Result<SipFrame> {
    cfg.validate(frame.symbols)?;
    let (k, s) = (frame.subcarriers, frame.symbols);
    let n_re = k * s;
    let q = cfg.data_constellation.bits_per_symbol();
    if bits.len() != n_re * q {
        return Err(Error::invalid(
            "build_sip_frame",
            format!("expected {} bits, got {}", n_re * q, bits.len()),
        ));
    }
    let mut prng = rng_from_seed(pilot_seed);
    let qp = cfg.pilot_constellation.bits_per_symbol();
    let pilot_bits: Vec<u8> = (0..n_re * qp).map(|_| prng.random_range(0..2u8)).collect();
    let pilots = cfg.pilot_constellation.modulate(&pilot_bits)?;
    let data = cfg.data_constellation.modulate(bits)?;
    let (wp, wd) = (cfg.rho.sqrt(), (1.0 - cfg.rho).sqrt());
    let tx: Vec<Complex64> = pilots.iter().zip(data.iter()).map(|(p, d)| wp * p + wd * d).collect();
    Ok(SipFrame { pilots, data, tx, bits: bits.to_vec(), subcarriers: k, symbols: s })
}

/// Applies the channel per resource element and adds white noise calibrated
/// so that mean received signal power over noise power equals the requested
/// SNR.
pub fn transmit<R: Rng>(
    h_sf: &ChannelTensor,
    frame_cfg: &FrameConfig,
    sip: &SipFrame,
    snr_db: f64,
    rng: &mut R,
) -> Result<LinkSample> {
    if h_sf.domain != Domain::SpatialFreqTime {
        return Err(Error::WrongDomain { expected: "spatial-frequency-time", got: h_sf.domain.name() });
    }
    let (nr, nt, k, s) = (frame_cfg.n_rx, frame_cfg.n_tx, frame_cfg.subcarriers, frame_cfg.symbols);
    if nt != 1 || sip.subcarriers != k || sip.symbols != s {
        return Err(Error::shape(
            "transmit",
            format!("frame ({k},{s}) vs signal ({},{})", sip.subcarriers, sip.symbols),
        ));
    }
    let h = h_sf.data.data();
    let mut clean = vec![Complex64::new(0.0, 0.0); nr * k * s];
    for m in 0..nr {
        for ki in 0..k {
            for si in 0..s {
                let hi = ((m * k + ki) * s + si) * 2;
                let hv = Complex64::new(h[hi], h[hi + 1]);
                clean[(m * k + ki) * s + si] = hv * sip.tx[ki * s + si];
            }
        }
    }
    // paths are normalized to unit average channel gain, so calibrating
    // against transmit power makes the mean received SNR match the request
    // while keeping the noise level channel-independent
    let tx_power = sip.tx.iter().map(|v| v.norm_sqr()).sum::<f64>() / (k * s) as f64;
    let noise_var = tx_power / 10f64.powf(snr_db / 10.0);
    let comp = (noise_var / 2.0).sqrt();
    let mut y = Vec::with_capacity(nr * k * s * 2);
    for v in &clean {
        let n_re: f64 = rng.sample(StandardNormal);
        let n_im: f64 = rng.sample(StandardNormal);
        y.push(v.re + comp * n_re);
        y.push(v.im + comp * n_im);
    }
    let mut pilots = Vec::with_capacity(k * s * 2);
    for ki in 0..k {
        for si in 0..s {
            let p = sip.pilots[ki * s + si];
            pilots.push(p.re);
            pilots.push(p.im);
        }
    }
    Ok(LinkSample {
        y: Tensor::from_vec(vec![nr, k, s, 2], y)?,
        pilots: Tensor::from_vec(vec![k, s, 2], pilots)?,
        bits: sip.bits.clone(),
        h_sf: h_sf.clone(),
        snr_db,
        noise_var,
    })
}

/// Builds one receiver-training record per channel sample: random bits,
/// random pilot seed, SNR uniform in the configured range.
pub fn build_training_set(
    channels: &crate::channel::ChannelDataset,
    cfg: &SipConfig,
    seed: u64,
) -> Result<Vec<LinkSample>> {
    let frame = &channels.frame;
    cfg.validate(frame.symbols)?;
    let q = cfg.data_constellation.bits_per_symbol();
    let n_bits = frame.subcarriers * frame.symbols * q;
    let mut out = Vec::with_capacity(channels.len());
    for (i, ch) in channels.samples.iter().enumerate() {
        let mut rng = rng_from_seed(crate::rng::derive_seed(seed, i as u64));
        let bits: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..2u8)).collect();
        let pilot_seed: u64 = rng.random();
        let snr = rng.random::<f64>() * (cfg.train_snr_db.1 - cfg.train_snr_db.0) + cfg.train_snr_db.0;
        let sf = crate::channel::transform::to_spatial_frequency(ch, frame)?;
        let frame_sig = build_sip_frame(&bits, pilot_seed, cfg, frame)?;
        out.push(transmit(&sf, frame, &frame_sig, snr, &mut rng)?);
    }
    Ok(out)
}
