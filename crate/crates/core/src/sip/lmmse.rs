//! Linear MMSE channel estimation and per-RE detection baselines.
//!
//! The prior's frequency and time correlation are estimated from a training
//! dataset. Superimposed pilots observe the channel on every RE with the
//! data component treated as extra noise of power (1 - rho); orthogonal
//! pilots observe only the pilot symbols and interpolate across time
//! through the prior's time correlation.

use num_complex::Complex64;

use crate::channel::transform::to_spatial_frequency;
use crate::channel::{ChannelDataset, FrameConfig};
use crate::error::{Error, Result};
use crate::linalg::CholeskyC;
use crate::sip::frame::LinkSample;
use crate::sip::SipConfig;
use crate::tensor::Tensor;

/// Second-order statistics of the spatial-frequency channel.
#[derive(Clone, Debug)]
pub struct PriorCov {
    /// Frequency correlation (K x K), Hermitian.
    pub freq: Vec<Complex64>,
    /// Time correlation (S x S), Hermitian.
    pub time: Vec<Complex64>,
    /// Mean per-element channel power.
    pub mean_power: f64,
    pub subcarriers: usize,
    pub symbols: usize,
}

impl PriorCov {
    /// Estimates the correlations from an angular-delay training dataset.
    pub fn estimate(ds: &ChannelDataset) -> Result<PriorCov> {
        if ds.is_empty() {
            return Err(Error::invalid("PriorCov", "empty dataset"));
        }
        let frame = &ds.frame;
        let (nr, k, s) = (frame.n_rx, frame.subcarriers, frame.symbols);
        let mut freq = vec![Complex64::new(0.0, 0.0); k * k];
        let mut time = vec![Complex64::new(0.0, 0.0); s * s];
        let mut power = 0.0;
        let mut f_cols = 0usize;
        let mut t_cols = 0usize;
        // subsample symbol/subcarrier columns to bound the accumulation cost
        let s_stride = 1usize;
        let k_stride = (k / 16).max(1);
        for sample in &ds.samples {
            let sf = to_spatial_frequency(sample, frame)?;
            let d = sf.data.data();
            let at = |m: usize, ki: usize, si: usize| {
                let i = ((m * k + ki) * s + si) * 2;
                Complex64::new(d[i], d[i + 1])
            };
            for m in 0..nr {
                for si in (0..s).step_by(s_stride) {
                    for k1 in 0..k {
                        let a = at(m, k1, si);
                        power += a.norm_sqr();
                        for k2 in 0..k {
                            freq[k1 * k + k2] += a * at(m, k2, si).conj();
                        }
                    }
                    f_cols += 1;
                }
                for ki in (0..k).step_by(k_stride) {
                    for s1 in 0..s {
                        let a = at(m, ki, s1);
                        for s2 in 0..s {
                            time[s1 * s + s2] += a * at(m, ki, s2).conj();
                        }
                    }
                    t_cols += 1;
                }
            }
        }
        for v in freq.iter_mut() {
            *v /= f_cols as f64;
        }
        for v in time.iter_mut() {
            *v /= t_cols as f64;
        }
        power /= (f_cols * k) as f64;
        Ok(PriorCov { freq, time, mean_power: power, subcarriers: k, symbols: s })
    }
}

/// Frequency-domain Wiener smoother W = R (R + nu I)^-1, applied per column.
struct FreqSmoother {
    w: Vec<Complex64>,
    k: usize,
}

impl FreqSmoother {
    fn build(prior: &PriorCov, nu: f64) -> Result<FreqSmoother> {
        let k = prior.subcarriers;
        let mut reg = prior.freq.clone();
        for i in 0..k {
            reg[i * k + i] += nu.max(1e-12);
        }
        let chol = CholeskyC::factor(&reg, k)?;
        // solve (R + nu I) X = R, then W = X^H; both are Hermitian-friendly
        let mut x = prior.freq.clone();
        chol.solve_matrix_in_place(&mut x, k);
        let mut w = vec![Complex64::new(0.0, 0.0); k * k];
        for i in 0..k {
            for j in 0..k {
                w[i * k + j] = x[j * k + i].conj();
            }
        }
        Ok(FreqSmoother { w, k })
    }

    fn apply(&self, col: &[Complex64], out: &mut [Complex64]) {
        for i in 0..self.k {
            let mut acc = Complex64::new(0.0, 0.0);
            let row = &self.w[i * self.k..(i + 1) * self.k];
            for (wv, cv) in row.iter().zip(col.iter()) {
                acc += wv * cv;
            }
            out[i] = acc;
        }
    }
}

/// Superimposed-pilot LMMSE estimate: per-RE matched filtering against the
/// unit-modulus pilot, then frequency-domain Wiener smoothing.
/// Returns (n_rx, K, S, 2).
pub fn lmmse_channel_estimate(
    sample: &LinkSample,
    prior: &PriorCov,
    cfg: &SipConfig,
    frame: &FrameConfig,
) -> Result<Tensor> {
    let (nr, k, s) = (frame.n_rx, frame.subcarriers, frame.symbols);
    if cfg.rho <= 0.0 {
        // no pilot power: no information, the estimate is the prior mean
        return Ok(Tensor::zeros(&[nr, k, s, 2]));
    }
    let nu = ((1.0 - cfg.rho) * prior.mean_power + sample.noise_var) / cfg.rho;
    let smoother = FreqSmoother::build(prior, nu)?;
    let y = sample.y.data();
    let p = sample.pilots.data();
    let inv_wp = 1.0 / cfg.rho.sqrt();
    let mut out = vec![0.0; nr * k * s * 2];
    let mut raw = vec![Complex64::new(0.0, 0.0); k];
    let mut est = vec![Complex64::new(0.0, 0.0); k];
    for m in 0..nr {
        for si in 0..s {
            for ki in 0..k {
                let yi = ((m * k + ki) * s + si) * 2;
                let pi = (ki * s + si) * 2;
                let yv = Complex64::new(y[yi], y[yi + 1]);
                let pv = Complex64::new(p[pi], p[pi + 1]);
                raw[ki] = yv * pv.conj() * inv_wp;
            }
            smoother.apply(&raw, &mut est);
            for ki in 0..k {
                let oi = ((m * k + ki) * s + si) * 2;
                out[oi] = est[ki].re;
                out[oi + 1] = est[ki].im;
            }
        }
    }
    Tensor::from_vec(vec![nr, k, s, 2], out)
}

/// Pilot symbol indices for the orthogonal baseline: evenly spread.
pub fn op_pilot_positions(symbols: usize, n_p: usize) -> Vec<usize> {
    (0..n_p).map(|j| j * symbols / n_p).collect()
}

/// Orthogonal-pilot LMMSE: frequency smoothing at the pilot symbols, then
/// time interpolation through the prior's time correlation.
pub fn lmmse_channel_estimate_op(
    y: &[Complex64],        // (n_rx, K, S) received
    pilots: &[Complex64],   // (K, n_p) pilot symbols (unit modulus)
    noise_var: f64,
    prior: &PriorCov,
    frame: &FrameConfig,
    n_p: usize,
) -> Result<Tensor> {
    let (nr, k, s) = (frame.n_rx, frame.subcarriers, frame.symbols);
    let pos = op_pilot_positions(s, n_p);
    let smoother = FreqSmoother::build(prior, noise_var)?;
    // time interpolation G = R[:, pos] * inv(R[pos, pos] + eps I)
    let mut rpp = vec![Complex64::new(0.0, 0.0); n_p * n_p];
    for (a, &pa) in pos.iter().enumerate() {
        for (b, &pb) in pos.iter().enumerate() {
            rpp[a * n_p + b] = prior.time[pa * s + pb];
        }
        rpp[a * n_p + a] += noise_var / prior.mean_power.max(1e-12);
    }
    let chol = CholeskyC::factor(&rpp, n_p)?;
    let mut g = vec![Complex64::new(0.0, 0.0); s * n_p];
    let mut col = vec![Complex64::new(0.0, 0.0); n_p];
    for si in 0..s {
        for (b, &pb) in pos.iter().enumerate() {
            col[b] = prior.time[si * s + pb].conj();
        }
        chol.solve_in_place(&mut col);
        for b in 0..n_p {
            g[si * n_p + b] = col[b].conj();
        }
    }
    let mut est_p = vec![Complex64::new(0.0, 0.0); nr * k * n_p];
    let mut raw = vec![Complex64::new(0.0, 0.0); k];
    let mut sm = vec![Complex64::new(0.0, 0.0); k];
    for m in 0..nr {
        for (j, &pj) in pos.iter().enumerate() {
            for ki in 0..k {
                let yv = y[(m * k + ki) * s + pj];
                let pv = pilots[ki * n_p + j];
                raw[ki] = yv * pv.conj();
            }
            smoother.apply(&raw, &mut sm);
            for ki in 0..k {
                est_p[(m * k + ki) * n_p + j] = sm[ki];
            }
        }
    }
    let mut out = vec![0.0; nr * k * s * 2];
    for m in 0..nr {
        for ki in 0..k {
            for si in 0..s {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n_p {
                    acc += g[si * n_p + j] * est_p[(m * k + ki) * n_p + j];
                }
                let oi = ((m * k + ki) * s + si) * 2;
                out[oi] = acc.re;
                out[oi + 1] = acc.im;
            }
        }
    }
    Tensor::from_vec(vec![nr, k, s, 2], out)
}

/// Per-RE Wiener equalization with receive combining, followed by max-log
/// soft demodulation. `data_weight` is sqrt(1-rho) for superimposed frames
/// and 1.0 for plain data symbols; when `subtract_pilot` is set, the known
/// pilot contribution is removed first.
#[allow(clippy::too_many_arguments)]
pub fn lmmse_detect(
    y: &Tensor,          // (n_rx, K, S, 2)
    h_est: &Tensor,      // (n_rx, K, S, 2)
    pilots: Option<&Tensor>, // (K, S, 2) when subtracting superimposed pilots
    noise_var: f64,
    rho: f64,
    cfg: &SipConfig,
    frame: &FrameConfig,
) -> Result<Vec<f64>> {
    let (nr, k, s) = (frame.n_rx, frame.subcarriers, frame.symbols);
    let q = cfg.data_constellation.bits_per_symbol();
    let data_weight = (1.0 - rho).sqrt();
    let pilot_weight = rho.sqrt();
    let yd = y.data();
    let hd = h_est.data();
    let mut logits = Vec::with_capacity(k * s * q);
    let mut sym = vec![Complex64::new(0.0, 0.0); 1];
    for ki in 0..k {
        for si in 0..s {
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            for m in 0..nr {
                let i = ((m * k + ki) * s + si) * 2;
                let hv = Complex64::new(hd[i], hd[i + 1]);
                let mut yv = Complex64::new(yd[i], yd[i + 1]);
                if let Some(p) = pilots {
                    let pi = (ki * s + si) * 2;
                    let pv = Complex64::new(p.data()[pi], p.data()[pi + 1]);
                    yv -= pilot_weight * hv * pv;
                }
                num += hv.conj() * yv;
                den += hv.norm_sqr();
            }
            let gain = data_weight * data_weight * den;
            if gain < 1e-30 {
                logits.extend(std::iter::repeat_n(0.0, q));
                continue;
            }
            // unbiased MMSE output and its post-equalization noise level
            let d_hat = num * data_weight / gain;
            let nv_eff = noise_var / gain;
            sym[0] = d_hat;
            logits.extend(cfg.data_constellation.demodulate_soft(&sym, nv_eff));
        }
    }
    Ok(logits)
}
