//! Fidelity metrics for generated channels (power profiles, Wasserstein-2,
//! PCA + Kolmogorov-Smirnov) and the non-generative augmentation baselines.

use rand::Rng;
use rand_distr::{Beta, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::transform::to_spatial_frequency;
use crate::channel::{ChannelDataset, ChannelTensor, Domain, Generator};
use crate::error::{Error, Result};
use crate::linalg::dominant_eigenvector;
use crate::tensor::Tensor;

/// Summary of one generated-vs-true comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub pdp: Vec<f64>,
    pub pas: Vec<f64>,
    pub w2_angular_delay: f64,
    pub w2_freq_time: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub samples_a: usize,
    pub samples_b: usize,
    pub domain: String,
}

/// Augmentation settings for the non-generative baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub method: AugmentMethod,
    /// Beta parameter of the mixup coefficient.
    pub alpha: f64,
    /// Perturbation SNR of the noisy baseline, in dB.
    pub aug_snr_db: f64,
    /// Synthetic samples to produce.
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    Mixup,
    Noisy,
    Dm,
    Cm,
    UncondDm,
}

impl Default for AugmentConfig {
    fn default() -> AugmentConfig {
        AugmentConfig { method: AugmentMethod::Dm, alpha: 0.4, aug_snr_db: 20.0, count: 0 }
    }
}

/// Power delay profile: mean per-delay-bin power over samples, angle bins
/// and symbols, normalized to sum one.
pub fn pdp(ds: &ChannelDataset) -> Result<Vec<f64>> {
    per_axis_power(ds, 2)
}

/// Power angular spectrum: as the delay profile but over angle bins.
pub fn pas(ds: &ChannelDataset) -> Result<Vec<f64>> {
    per_axis_power(ds, 0)
}

fn per_axis_power(ds: &ChannelDataset, axis: usize) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::invalid("power profile", "empty dataset"));
    }
    let shape = ds.frame.angular_delay_shape();
    let n_bins = shape[axis];
    let mut acc = vec![0.0; n_bins];
    for s in &ds.samples {
        if s.domain != Domain::AngularDelayTime {
            return Err(Error::WrongDomain { expected: "angular-delay-time", got: s.domain.name() });
        }
        let data = s.data.data();
        let strides = s.data.strides();
        for (i, v) in data.iter().enumerate() {
            let bin = (i / strides[axis]) % n_bins;
            acc[bin] += v * v;
        }
    }
    let total: f64 = acc.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("power profile", "zero total power"));
    }
    for v in acc.iter_mut() {
        *v /= total;
    }
    Ok(acc)
}

/// Per-sample bin-power vectors in the requested domain, each sample first
/// normalized to unit total power.
fn bin_powers(ds: &ChannelDataset, domain: Domain) -> Result<Vec<Vec<f64>>> {
    let frame = &ds.frame;
    let mut out = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let (data, bins, average): (&ChannelTensor, usize, usize);
        let sf_holder;
        match domain {
            Domain::AngularDelayTime => {
                data = s;
                bins = frame.n_rx * frame.delay_bins;
                average = frame.symbols;
            }
            Domain::SpatialFreqTime => {
                sf_holder = to_spatial_frequency(s, frame)?;
                data = &sf_holder;
                bins = frame.subcarriers * frame.symbols;
                average = frame.n_rx;
            }
        }
        let raw = data.data.data();
        let mut p = vec![0.0; bins];
        match domain {
            Domain::AngularDelayTime => {
                // (n_rx, n_tx, tau, S, 2): bin = (angle, delay), averaged over S
                let (tau, sym) = (frame.delay_bins, frame.symbols);
                for a in 0..frame.n_rx {
                    for t in 0..frame.n_tx {
                        for d in 0..tau {
                            for si in 0..sym {
                                let i = ((((a * frame.n_tx + t) * tau + d) * sym) + si) * 2;
                                p[a * tau + d] += raw[i] * raw[i] + raw[i + 1] * raw[i + 1];
                            }
                        }
                    }
                }
            }
            Domain::SpatialFreqTime => {
                // (n_rx, n_tx, K, S, 2): bin = (subcarrier, symbol), averaged
                // over antennas
                let (k, sym) = (frame.subcarriers, frame.symbols);
                for a in 0..frame.n_rx {
                    for t in 0..frame.n_tx {
                        for ki in 0..k {
                            for si in 0..sym {
                                let i = ((((a * frame.n_tx + t) * k + ki) * sym) + si) * 2;
                                p[ki * sym + si] += raw[i] * raw[i] + raw[i + 1] * raw[i + 1];
                            }
                        }
                    }
                }
            }
        }
        let total: f64 = p.iter().sum::<f64>().max(1e-300);
        for v in p.iter_mut() {
            *v /= total * average as f64;
        }
        out.push(p);
    }
    Ok(out)
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], u: f64) -> f64 {
    let n = sorted.len();
    let pos = u * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
}

/// 1D Wasserstein-2 by quantile coupling; exact order-statistic matching for
/// equal counts, linear interpolation otherwise.
pub fn w2_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let l = sa.len().max(sb.len());
    let mut acc = 0.0;
    for k in 0..l {
        let u = (k as f64 + 0.5) / l as f64;
        let d = quantile(&sa, u) - quantile(&sb, u);
        acc += d * d;
    }
    (acc / l as f64).sqrt()
}

/// Mean over bins of the per-bin 1D Wasserstein-2 distance between the two
/// sets' per-sample bin-power distributions.
pub fn w2_power_spectrum(a: &ChannelDataset, b: &ChannelDataset, domain: Domain) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("w2_power_spectrum", "need at least 2 samples per set"));
    }
    if a.frame != b.frame {
        return Err(Error::invalid("w2_power_spectrum", "frame configurations differ"));
    }
    let pa = bin_powers(a, domain)?;
    let pb = bin_powers(b, domain)?;
    let bins = pa[0].len();
    let mut acc = 0.0;
    let mut col_a = vec![0.0; pa.len()];
    let mut col_b = vec![0.0; pb.len()];
    for bin in 0..bins {
        for (i, row) in pa.iter().enumerate() {
            col_a[i] = row[bin];
        }
        for (i, row) in pb.iter().enumerate() {
            col_b[i] = row[bin];
        }
        acc += w2_1d(&col_a, &col_b);
    }
    Ok(acc / bins as f64)
}

/// Asymptotic two-sided Kolmogorov p-value with the small-sample effective-n
/// correction lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * d.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1.0f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Two-sample KS statistic on scalars.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (sa.len(), sb.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < n && sa[i] <= x {
            i += 1;
        }
        while j < m && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Projects both sets onto a principal component of the pooled flattened
/// samples and runs the two-sample KS test on the projections.
pub fn ks_test_pca(a: &ChannelDataset, b: &ChannelDataset, component: usize) -> Result<(f64, f64)> {
    if a.len() < 10 || b.len() < 10 {
        return Err(Error::invalid("ks_test_pca", "need at least 10 samples per set"));
    }
    if a.frame != b.frame {
        return Err(Error::invalid("ks_test_pca", "frame configurations differ"));
    }
    let dim = a.frame.channel_dim();
    let total = a.len() + b.len();
    let mut pooled: Vec<&[f64]> = Vec::with_capacity(total);
    for s in a.samples.iter().chain(b.samples.iter()) {
        pooled.push(s.data.data());
    }
    let mut mean = vec![0.0; dim];
    for row in &pooled {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= total as f64;
    }
    let variance: f64 = pooled
        .iter()
        .map(|row| row.iter().zip(mean.iter()).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum::<f64>()
        / total as f64;
    if variance < 1e-24 {
        return Err(Error::invalid("ks_test_pca", "pooled data has zero variance"));
    }
    // covariance matvec through the centered data, with deflation for
    // higher components
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(component + 1);
    for _ in 0..=component {
        let prior = components.clone();
        let matvec = |v: &[f64]| -> Vec<f64> {
            let mut v = v.to_vec();
            for c in &prior {
                let dot: f64 = c.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (vv, cv) in v.iter_mut().zip(c.iter()) {
                    *vv -= dot * cv;
                }
            }
            let mut out = vec![0.0; dim];
            for row in &pooled {
                let mut dot = 0.0;
                for ((x, m), vv) in row.iter().zip(mean.iter()).zip(v.iter()) {
                    dot += (x - m) * vv;
                }
                for ((o, x), m) in out.iter_mut().zip(row.iter()).zip(mean.iter()) {
                    *o += dot * (x - m);
                }
            }
            for c in &prior {
                let dot: f64 = c.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                for (ov, cv) in out.iter_mut().zip(c.iter()) {
                    *ov -= dot * cv;
                }
            }
            out
        };
        components.push(dominant_eigenvector(matvec, dim, 100));
    }
    let pc = components.last().unwrap();
    let project = |rows: &[&[f64]]| -> Vec<f64> {
        rows.iter()
            .map(|row| row.iter().zip(mean.iter()).zip(pc.iter()).map(|((x, m), p)| (x - m) * p).sum())
            .collect()
    };
    let proj_a = project(&pooled[..a.len()]);
    let proj_b = project(&pooled[a.len()..]);
    let d = ks_statistic(&proj_a, &proj_b);
    Ok((d, ks_p_value(d, a.len(), b.len())))
}

/// Convex combinations of random sample pairs with Beta-distributed weights.
pub fn mixup<R: Rng>(ds: &ChannelDataset, count: usize, alpha: f64, rng: &mut R) -> Result<ChannelDataset> {
    if ds.len() < 2 {
        return Err(Error::invalid("mixup", "need at least 2 samples"));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid("mixup", "alpha must be positive"));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::invalid("mixup", e.to_string()))?;
    let shape = ds.frame.angular_delay_shape();
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let i = rng.random_range(0..ds.len());
        let mut j = rng.random_range(0..ds.len() - 1);
        if j >= i {
            j += 1;
        }
        let lam: f64 = rng.sample(beta);
        let hi = ds.samples[i].data.data();
        let hj = ds.samples[j].data.data();
        let mixed: Vec<f64> = hi.iter().zip(hj.iter()).map(|(&a, &b)| lam * a + (1.0 - lam) * b).collect();
        samples.push(ChannelTensor {
            domain: Domain::AngularDelayTime,
            data: Tensor::from_vec(shape.clone(), mixed)?,
        });
        let (la, lb) = (ds.labels[i], ds.labels[j]);
        labels.push(crate::channel::ScenarioLabel::new(
            lam * la.x_m + (1.0 - lam) * lb.x_m,
            lam * la.y_m + (1.0 - lam) * lb.y_m,
            lam * la.speed_mps + (1.0 - lam) * lb.speed_mps,
        ));
    }
    ChannelDataset::new(
        ds.frame.clone(),
        samples,
        labels,
        crate::channel::DatasetMeta {
            generator: Generator::Mixup,
            seed: ds.meta.seed,
            scenarios: ds.meta.scenarios.clone(),
        },
    )
}

/// Additive white Gaussian perturbations at a configured per-sample SNR;
/// labels are copied from the source samples.
pub fn awgn_augment<R: Rng>(
    ds: &ChannelDataset,
    count: usize,
    aug_snr_db: f64,
    rng: &mut R,
) -> Result<ChannelDataset> {
    if ds.is_empty() {
        return Err(Error::invalid("awgn_augment", "empty dataset"));
    }
    if !aug_snr_db.is_finite() {
        return Err(Error::invalid("awgn_augment", "aug_snr_db must be finite"));
    }
    let shape = ds.frame.angular_delay_shape();
    let mut samples = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for idx in 0..count {
        let src = idx % ds.len();
        let h = ds.samples[src].data.data();
        let power = h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64;
        let sigma = (power / 10f64.powf(aug_snr_db / 10.0)).sqrt();
        let noisy: Vec<f64> = h.iter().map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        samples.push(ChannelTensor {
            domain: Domain::AngularDelayTime,
            data: Tensor::from_vec(shape.clone(), noisy)?,
        });
        labels.push(ds.labels[src]);
    }
    ChannelDataset::new(
        ds.frame.clone(),
        samples,
        labels,
        crate::channel::DatasetMeta {
            generator: Generator::Noisy,
            seed: ds.meta.seed,
            scenarios: ds.meta.scenarios.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::dataset::generate_dataset;
    use crate::channel::{FrameConfig, ScenarioConfig};
    use crate::rng::rng_from_seed;

    fn scenario(name: &str, clusters: usize, los: bool, ds_s: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            name: name.into(),
            center: (40.0, 30.0),
            extent_m: 20.0,
            n_clusters: clusters,
            los,
            delay_spread_s: ds_s,
            angular_spread_rad: if los { 0.1 } else { 0.5 },
            decay_exponent: 1.0,
            seed,
        }
    }

    fn tiny_set(n: usize, seed: u64) -> ChannelDataset {
        generate_dataset(&[scenario("a", 8, false, 0.05e-6, 1)], n, &[5.0], &FrameConfig::tiny(), seed)
            .unwrap()
    }

    #[test]
    fn profiles_normalize_and_locate_energy() {
        let ds = tiny_set(16, 3);
        let p = pdp(&ds).unwrap();
        let a = pas(&ds).unwrap();
        assert_eq!(p.len(), ds.frame.delay_bins);
        assert_eq!(a.len(), ds.frame.n_rx);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_path_pdp_is_an_indicator() {
        use crate::channel::geometry::synthesize_channel;
        use crate::channel::transform::to_angular_delay;
        use crate::channel::{DatasetMeta, Path, PathSet, ScenarioLabel};
        let frame = FrameConfig::desk();
        let d_bin = 4;
        let delay = d_bin as f64 / (frame.subcarriers as f64 * frame.subcarrier_spacing_hz);
        let ps = PathSet {
            paths: vec![Path { gain: 1.0, phase_rad: 0.2, delay_s: delay, aoa_rad: 0.0, aod_rad: 0.0, doppler_hz: 0.0 }],
        };
        let sf = synthesize_channel(&ps, &frame).unwrap();
        let ad = to_angular_delay(&sf, &frame).unwrap();
        let ds = ChannelDataset::new(
            frame.clone(),
            vec![ad],
            vec![ScenarioLabel::new(0.0, 0.0, 0.0)],
            DatasetMeta { generator: Generator::Simulator, seed: 0, scenarios: vec![] },
        )
        .unwrap();
        let p = pdp(&ds).unwrap();
        assert!(p[d_bin] > 0.99, "pdp {p:?}");
        let a = pas(&ds).unwrap();
        assert!(a[0] > 0.99, "pas {a:?}");
    }

    #[test]
    fn pdp_decay_matches_configured_delay_spread() {
        // flat per-path power (decay exponent 0) makes the delay density the
        // truncated exponential itself
        let frame = FrameConfig::desk();
        let window = frame.delay_window_s();
        let mu = window / 6.0;
        let mut sc = scenario("d", 40, false, mu, 2);
        sc.decay_exponent = 0.0;
        let ds = generate_dataset(&[sc], 300, &[5.0], &frame, 9).unwrap();
        let p = pdp(&ds).unwrap();
        // least-squares slope of log p over the first 10 bins
        let bins = 10;
        let xs: Vec<f64> = (0..bins).map(|i| i as f64).collect();
        let ys: Vec<f64> = p[..bins].iter().map(|&v| v.max(1e-300).ln()).collect();
        let xm = xs.iter().sum::<f64>() / bins as f64;
        let ym = ys.iter().sum::<f64>() / bins as f64;
        let slope = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        let bin_width = 1.0 / (frame.subcarriers as f64 * frame.subcarrier_spacing_hz);
        let fitted_mu = -bin_width / slope;
        assert!(
            (fitted_mu - mu).abs() / mu < 0.2,
            "fitted delay spread {fitted_mu:.3e} vs configured {mu:.3e}"
        );
    }

    #[test]
    fn richer_scattering_has_larger_angular_entropy() {
        let frame = FrameConfig::desk();
        let rich = generate_dataset(&[scenario("r", 40, false, 0.25e-6, 3)], 100, &[5.0], &frame, 4).unwrap();
        let sparse = generate_dataset(&[scenario("s", 5, true, 0.08e-6, 4)], 100, &[5.0], &frame, 5).unwrap();
        let entropy = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum() };
        let h_rich = entropy(&pas(&rich).unwrap());
        let h_sparse = entropy(&pas(&sparse).unwrap());
        assert!(h_rich > h_sparse, "rich {h_rich} vs sparse {h_sparse}");
    }

    #[test]
    fn w2_identity_and_symmetry() {
        let a = tiny_set(12, 5);
        let b = tiny_set(12, 6);
        let same = w2_power_spectrum(&a, &a, Domain::AngularDelayTime).unwrap();
        assert_eq!(same, 0.0);
        let ab = w2_power_spectrum(&a, &b, Domain::AngularDelayTime).unwrap();
        let ba = w2_power_spectrum(&b, &a, Domain::AngularDelayTime).unwrap();
        assert_eq!(ab, ba);
        assert!(ab > 0.0);
        // freq-time domain route also works
        let ft = w2_power_spectrum(&a, &b, Domain::SpatialFreqTime).unwrap();
        assert!(ft.is_finite());
    }

    #[test]
    fn w2_gaussian_toy_matches_closed_form() {
        // two equal-variance Gaussians at distance 2: W2 = |mu1 - mu2| = 2
        let mut rng = rng_from_seed(7);
        let n = 10_000;
        let a: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..n).map(|_| 2.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let d = w2_1d(&a, &b);
        assert!((d - 2.0).abs() < 0.1, "w2 {d}");
    }

    #[test]
    fn w2_small_sets_match_exhaustive_coupling_oracle() {
        // for equal counts the optimal coupling is the sorted pairing; verify
        // against brute force over all permutations of five points
        let a = [0.1, 0.9, 0.4, 0.7, 0.2];
        let b = [1.0, 0.3, 0.6, 0.2, 0.8];
        let fast = w2_1d(&a, &b);
        let idx = [0usize, 1, 2, 3, 4];
        let mut best = f64::INFINITY;
        let mut perm = idx;
        // Heap's algorithm over 120 permutations
        fn heaps(k: usize, arr: &mut [usize; 5], a: &[f64; 5], b: &[f64; 5], best: &mut f64) {
            if k == 1 {
                let cost: f64 = arr.iter().enumerate().map(|(i, &j)| (a[i] - b[j]) * (a[i] - b[j])).sum();
                *best = best.min(cost);
                return;
            }
            for i in 0..k {
                heaps(k - 1, arr, a, b, best);
                if k % 2 == 0 {
                    arr.swap(i, k - 1);
                } else {
                    arr.swap(0, k - 1);
                }
            }
        }
        heaps(5, &mut perm, &a, &b, &mut best);
        let oracle = (best / 5.0).sqrt();
        assert!((fast - oracle).abs() < 1e-12, "fast {fast} vs oracle {oracle}");
    }

    #[test]
    fn ks_identity_and_disjoint_support() {
        let a = tiny_set(12, 8);
        let (d, p) = ks_test_pca(&a, &a, 0).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        // disjoint scalar supports give statistic one
        let d = ks_statistic(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn ks_p_value_is_calibrated_on_null_draws() {
        let mut rng = rng_from_seed(9);
        let mut rejections = 0usize;
        let repeats = 100;
        for _ in 0..repeats {
            let a: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b: Vec<f64> = (0..500).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let d = ks_statistic(&a, &b);
            if ks_p_value(d, 500, 500) < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / repeats as f64;
        assert!(rate <= 0.10, "null rejection rate {rate}");
    }

    #[test]
    fn mixup_identities_and_mean() {
        let ds = tiny_set(8, 10);
        // symmetry: mixing h with -h at lambda 1/2 gives zero
        let mut neg = ds.clone();
        neg.samples[1] = ChannelTensor {
            domain: Domain::AngularDelayTime,
            data: ds.samples[0].data.map(|v| -v),
        };
        let half: Vec<f64> = ds.samples[0]
            .data
            .data()
            .iter()
            .zip(neg.samples[1].data.data().iter())
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        assert!(half.iter().all(|&v| v.abs() < 1e-12));

        let mut rng = rng_from_seed(11);
        let m = mixup(&ds, 200, 0.4, &mut rng).unwrap();
        assert_eq!(m.len(), 200);
        assert_eq!(m.meta.generator, Generator::Mixup);

        // empirical mean of Beta(a, a) draws is 1/2
        let beta = Beta::new(0.4, 0.4).unwrap();
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| rng.sample::<f64, _>(beta)).sum::<f64>() / n as f64;
        let se = 0.5 / (n as f64).sqrt(); // loose bound on the standard error
        assert!((mean - 0.5).abs() < 3.0 * se + 0.01, "beta mean {mean}");
    }

    #[test]
    fn awgn_augment_hits_requested_snr() {
        let ds = tiny_set(8, 12);
        let mut rng = rng_from_seed(13);
        let aug = awgn_augment(&ds, 1000, 20.0, &mut rng).unwrap();
        assert_eq!(aug.len(), 1000);
        assert_eq!(aug.meta.generator, Generator::Noisy);
        let mut sig = 0.0;
        let mut noise = 0.0;
        for (i, s) in aug.samples.iter().enumerate() {
            let src = ds.samples[i % ds.len()].data.data();
            for (a, b) in s.data.data().iter().zip(src.iter()) {
                noise += (a - b) * (a - b);
                sig += b * b;
            }
            assert_eq!(aug.labels[i], ds.labels[i % ds.len()], "labels preserved");
        }
        let snr_db = 10.0 * (sig / noise).log10();
        assert!((snr_db - 20.0).abs() < 0.2, "empirical snr {snr_db}");
    }

    #[test]
    fn scenario_separation_dominates_sampling_noise() {
        let frame = FrameConfig::desk();
        let mut rich_sc = scenario("r", 40, false, 0.30e-6, 21);
        rich_sc.angular_spread_rad = 0.6;
        let mut sparse_sc = scenario("s", 5, true, 0.05e-6, 22);
        sparse_sc.angular_spread_rad = 0.05;
        let rich = generate_dataset(&[rich_sc], 200, &[5.0], &frame, 31).unwrap();
        let sparse = generate_dataset(&[sparse_sc], 200, &[5.0], &frame, 32).unwrap();
        let across = w2_power_spectrum(&rich, &sparse, Domain::AngularDelayTime).unwrap();
        let half_a = rich.subset(&(0..100).collect::<Vec<_>>()).unwrap();
        let half_b = rich.subset(&(100..200).collect::<Vec<_>>()).unwrap();
        let within = w2_power_spectrum(&half_a, &half_b, Domain::AngularDelayTime).unwrap();
        assert!(
            across > 5.0 * within,
            "separation {across:.4e} not 5x sampling noise {within:.4e}"
        );
    }
}
