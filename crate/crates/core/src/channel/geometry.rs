//! Path drawing and channel synthesis for the geometric cluster model.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{
    ChannelTensor, Domain, FrameConfig, Path, PathSet, ScenarioConfig, ScenarioLabel, SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Power ratio granted to the direct path in line-of-sight scenarios.
const LOS_K_FACTOR: f64 = 4.0;

/// Array response of a half-wavelength ULA: element m = exp(-j*pi*m*sin(angle)).
pub fn steering_vector(angle_rad: f64, antennas: usize) -> Vec<Complex64> {
    (0..antennas)
        .map(|m| {
            let phase = -std::f64::consts::PI * m as f64 * angle_rad.sin();
            Complex64::new(phase.cos(), phase.sin())
        })
        .collect()
}

/// Draws a multipath realization for a labeled position inside a scenario.
///
/// Delays are exponential with the scenario delay spread, truncated to the
/// representable window by inverse-CDF sampling. Mean angles follow the
/// geometric bearing between BS (origin) and UE, spread per scenario.
/// Line-of-sight scenarios put a dominant zero-delay path exactly on the
/// direct bearing. Dopplers are v*fc/c0 * cos(xi) with uniform xi.
pub fn draw_paths<R: Rng>(
    scenario: &ScenarioConfig,
    label: &ScenarioLabel,
    frame: &FrameConfig,
    rng: &mut R,
) -> Result<PathSet> {
    scenario.validate()?;
    if !scenario.contains(label.x_m, label.y_m) {
        return Err(Error::invalid(
            "draw_paths",
            format!(
                "label ({}, {}) outside scenario {} extent",
                label.x_m, label.y_m, scenario.name
            ),
        ));
    }
    if label.speed_mps < 0.0 {
        return Err(Error::invalid("draw_paths", "speed must be non-negative"));
    }
    let window = frame.delay_window_s();
    let mu = scenario.delay_spread_s;
    // inverse CDF of an exponential truncated to [0, window)
    let trunc_mass = 1.0 - (-window / mu).exp();
    let bearing_aoa = label.y_m.atan2(label.x_m);
    let bearing_aod = (-label.y_m).atan2(-label.x_m);
    let f_max = label.speed_mps * frame.carrier_hz / SPEED_OF_LIGHT;

    let l = scenario.n_clusters;
    let mut paths = Vec::with_capacity(l);
    let mut weights = Vec::with_capacity(l);
    for i in 0..l {
        let direct = scenario.los && i == 0;
        let delay_s = if direct {
            0.0
        } else {
            let u: f64 = rng.random::<f64>();
            -mu * (1.0 - u * trunc_mass).ln()
        };
        let (aoa_rad, aod_rad) = if direct {
            (bearing_aoa, bearing_aod)
        } else {
            let za: f64 = rng.sample(StandardNormal);
            let zd: f64 = rng.sample(StandardNormal);
            (
                bearing_aoa + scenario.angular_spread_rad * za,
                bearing_aod + scenario.angular_spread_rad * zd,
            )
        };
        let phase_rad = rng.random::<f64>() * std::f64::consts::TAU;
        let xi = rng.random::<f64>() * std::f64::consts::TAU;
        let doppler_hz = f_max * xi.cos();
        let shadow: f64 = rng.sample(StandardNormal);
        let mut w = (-scenario.decay_exponent * delay_s / mu).exp() * (0.5 * shadow).exp();
        if direct {
            w = LOS_K_FACTOR * (l.saturating_sub(1).max(1)) as f64;
        }
        weights.push(w);
        paths.push(Path {
            gain: 0.0,
            phase_rad,
            delay_s,
            aoa_rad,
            aod_rad,
            doppler_hz,
        });
    }
    let total: f64 = weights.iter().sum();
    for (p, w) in paths.iter_mut().zip(weights.iter()) {
        p.gain = (w / total).sqrt();
    }
    Ok(PathSet { paths })
}

/// Sums the per-path contributions into a spatial-frequency-time tensor:
/// H(m,n,k,s) = sum_l g_l * exp(j(psi_l + 2*pi*f_l*s*T - 2*pi*k*df*tau_l))
///              * a_rx(theta_l)[m] * conj(a_tx(phi_l)[n]).
pub fn synthesize_channel(paths: &PathSet, frame: &FrameConfig) -> Result<ChannelTensor> {
    frame.validate()?;
    let window = frame.delay_window_s();
    for p in &paths.paths {
        if p.delay_s < 0.0 || p.delay_s >= window {
            return Err(Error::invalid(
                "synthesize_channel",
                format!("delay {} outside window [0, {})", p.delay_s, window),
            ));
        }
    }
    let (nr, nt, k, s) = (frame.n_rx, frame.n_tx, frame.subcarriers, frame.symbols);
    let mut acc = vec![Complex64::new(0.0, 0.0); nr * nt * k * s];
    let mut fk = vec![Complex64::new(0.0, 0.0); k];
    let mut fs = vec![Complex64::new(0.0, 0.0); s];
    for p in &paths.paths {
        let a_rx = steering_vector(p.aoa_rad, nr);
        let a_tx = steering_vector(p.aod_rad, nt);
        // per-subcarrier phasor exp(-j*2*pi*k*df*tau), built incrementally
        let wk = Complex64::from_polar(1.0, -std::f64::consts::TAU * frame.subcarrier_spacing_hz * p.delay_s);
        let mut cur = Complex64::from_polar(p.gain, p.phase_rad);
        for f in fk.iter_mut() {
            *f = cur;
            cur *= wk;
        }
        // per-symbol phasor exp(j*2*pi*f*s*T)
        let ws = Complex64::from_polar(1.0, std::f64::consts::TAU * p.doppler_hz * frame.symbol_duration_s);
        let mut cur = Complex64::new(1.0, 0.0);
        for f in fs.iter_mut() {
            *f = cur;
            cur *= ws;
        }
        for (m, am) in a_rx.iter().enumerate() {
            for (n, an) in a_tx.iter().enumerate() {
                let ant = am * an.conj();
                let base = (m * nt + n) * k * s;
                for (ki, fkv) in fk.iter().enumerate() {
                    let row = ant * fkv;
                    let dst = &mut acc[base + ki * s..base + (ki + 1) * s];
                    for (d, fsv) in dst.iter_mut().zip(fs.iter()) {
                        *d += row * fsv;
                    }
                }
            }
        }
    }
    let mut data = Vec::with_capacity(acc.len() * 2);
    for c in &acc {
        data.push(c.re);
        data.push(c.im);
    }
    let tensor = Tensor::from_vec(vec![nr, nt, k, s, 2], data)?;
    ChannelTensor::new(Domain::SpatialFreqTime, tensor, frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn test_scenario(los: bool, clusters: usize) -> ScenarioConfig {
        ScenarioConfig {
            name: "test".into(),
            center: (40.0, 30.0),
            extent_m: 20.0,
            n_clusters: clusters,
            los,
            delay_spread_s: 0.1e-6,
            angular_spread_rad: 0.3,
            decay_exponent: 1.0,
            seed: 1,
        }
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let v = steering_vector(0.0, 4);
        for c in v {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_endfire_alternates_sign() {
        // sin(angle) = 1 -> phase step of pi
        let v = steering_vector(std::f64::consts::FRAC_PI_2, 2);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn steering_half_sine_quarter_turns() {
        // sin(angle) = 0.5 -> [1, -j, -1, j]
        let v = steering_vector(0.5f64.asin(), 4);
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        for (a, b) in v.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_speed_gives_zero_doppler() {
        let sc = test_scenario(false, 10);
        let mut rng = rng_from_seed(3);
        let ps = draw_paths(&sc, &ScenarioLabel::new(41.0, 29.0, 0.0), &FrameConfig::desk(), &mut rng).unwrap();
        assert!(ps.paths.iter().all(|p| p.doppler_hz == 0.0));
    }

    #[test]
    fn doppler_bounded_by_max_shift() {
        let sc = test_scenario(false, 30);
        let frame = FrameConfig::desk();
        let v = 83.3;
        let fmax = v * frame.carrier_hz / SPEED_OF_LIGHT;
        let mut rng = rng_from_seed(4);
        let ps = draw_paths(&sc, &ScenarioLabel::new(40.0, 30.0, v), &frame, &mut rng).unwrap();
        assert!(ps.paths.iter().all(|p| p.doppler_hz.abs() <= fmax + 1e-12));
    }

    #[test]
    fn single_los_cluster_sits_on_direct_bearing() {
        let sc = test_scenario(true, 1);
        let mut rng = rng_from_seed(5);
        let label = ScenarioLabel::new(33.0, 25.0, 6.7);
        let ps = draw_paths(&sc, &label, &FrameConfig::desk(), &mut rng).unwrap();
        assert_eq!(ps.paths.len(), 1);
        assert!((ps.paths[0].aoa_rad - label.y_m.atan2(label.x_m)).abs() < 1e-12);
        assert!(ps.paths[0].delay_s == 0.0);
        assert!((ps.paths[0].gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_power_normalizes_exactly() {
        let sc = test_scenario(false, 25);
        let frame = FrameConfig::desk();
        let mut rng = rng_from_seed(6);
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let label = ScenarioLabel::new(
                40.0 + (i % 10) as f64 * 0.5,
                30.0 - (i % 7) as f64 * 0.5,
                10.0,
            );
            let ps = draw_paths(&sc, &label, &frame, &mut rng).unwrap();
            worst = worst.max((ps.total_power() - 1.0).abs());
        }
        assert!(worst < 1e-9, "worst deviation {worst}");
    }

    #[test]
    fn label_outside_extent_is_rejected() {
        let sc = test_scenario(false, 5);
        let mut rng = rng_from_seed(7);
        let r = draw_paths(&sc, &ScenarioLabel::new(0.0, 0.0, 1.0), &FrameConfig::desk(), &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn degenerate_path_gives_rank_one_constant_tensor() {
        let frame = FrameConfig::tiny();
        let ps = PathSet {
            paths: vec![Path {
                gain: 1.0,
                phase_rad: 0.0,
                delay_s: 0.0,
                aoa_rad: 0.0,
                aod_rad: 0.0,
                doppler_hz: 0.0,
            }],
        };
        let h = synthesize_channel(&ps, &frame).unwrap();
        for p in h.data.data().chunks_exact(2) {
            assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        }
    }

    /// Independent brute-force synthesis: direct trigonometric evaluation per
    /// (path, antenna, subcarrier, symbol).
    fn synthesize_oracle(paths: &PathSet, frame: &FrameConfig) -> Vec<Complex64> {
        let (nr, nt, k, s) = (frame.n_rx, frame.n_tx, frame.subcarriers, frame.symbols);
        let mut out = vec![Complex64::new(0.0, 0.0); nr * nt * k * s];
        for p in &paths.paths {
            for m in 0..nr {
                for n in 0..nt {
                    for ki in 0..k {
                        for si in 0..s {
                            let phase = p.phase_rad
                                + std::f64::consts::TAU * p.doppler_hz * si as f64 * frame.symbol_duration_s
                                - std::f64::consts::TAU * ki as f64 * frame.subcarrier_spacing_hz * p.delay_s
                                - std::f64::consts::PI * m as f64 * p.aoa_rad.sin()
                                + std::f64::consts::PI * n as f64 * p.aod_rad.sin();
                            out[((m * nt + n) * k + ki) * s + si] +=
                                Complex64::from_polar(p.gain, phase);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn synthesis_matches_brute_force_oracle() {
        let frame = FrameConfig::tiny();
        let sc = test_scenario(false, 12);
        let mut rng = rng_from_seed(8);
        let ps = draw_paths(&sc, &ScenarioLabel::new(44.0, 31.0, 20.0), &frame, &mut rng).unwrap();
        let fast = synthesize_channel(&ps, &frame).unwrap();
        let slow = synthesize_oracle(&ps, &frame);
        let mut worst: f64 = 0.0;
        for (pair, c) in fast.data.data().chunks_exact(2).zip(slow.iter()) {
            worst = worst.max((Complex64::new(pair[0], pair[1]) - c).norm());
        }
        assert!(worst < 1e-10, "oracle mismatch {worst}");
    }

    /// Lag-1 temporal autocorrelation magnitude, averaged over antennas and
    /// subcarriers.
    fn lag1_autocorr(h: &ChannelTensor, frame: &FrameConfig) -> f64 {
        let (nr, nt, k, s) = (frame.n_rx, frame.n_tx, frame.subcarriers, frame.symbols);
        let d = h.data.data();
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for a in 0..nr * nt {
            for ki in 0..k {
                for si in 0..s - 1 {
                    let i0 = ((a * k + ki) * s + si) * 2;
                    let i1 = ((a * k + ki) * s + si + 1) * 2;
                    let c0 = Complex64::new(d[i0], d[i0 + 1]);
                    let c1 = Complex64::new(d[i1], d[i1 + 1]);
                    num += c0 * c1.conj();
                    den += c0.norm_sqr();
                }
            }
        }
        num.norm() / den.max(1e-300)
    }

    #[test]
    fn faster_ue_decorrelates_consecutive_symbols() {
        // paired comparison: same path geometry, Doppler rescaled with speed.
        // 15 kHz-class spacing gives symbol durations long enough for lag-1
        // Doppler decorrelation to dominate finite-sample cross terms.
        let df = 10e6 / 512.0;
        let frame = FrameConfig {
            n_rx: 8,
            n_tx: 1,
            subcarriers: 64,
            symbols: 14,
            delay_bins: 16,
            subcarrier_spacing_hz: df,
            symbol_duration_s: 1.0 / df,
            carrier_hz: 2.655e9,
        };
        let sc = test_scenario(false, 10);
        let v_slow = 24.0 / 3.6;
        let v_fast = 300.0 / 3.6;
        let mut rng = rng_from_seed(9);
        let mut slow_acc = 0.0;
        let mut fast_acc = 0.0;
        for i in 0..100 {
            let label = ScenarioLabel::new(40.0 + (i % 5) as f64, 30.0, v_slow);
            let ps_slow = draw_paths(&sc, &label, &frame, &mut rng).unwrap();
            let mut ps_fast = ps_slow.clone();
            for p in ps_fast.paths.iter_mut() {
                p.doppler_hz *= v_fast / v_slow;
            }
            slow_acc += lag1_autocorr(&synthesize_channel(&ps_slow, &frame).unwrap(), &frame);
            fast_acc += lag1_autocorr(&synthesize_channel(&ps_fast, &frame).unwrap(), &frame);
        }
        assert!(
            fast_acc / 100.0 < slow_acc / 100.0,
            "fast {} not below slow {}",
            fast_acc / 100.0,
            slow_acc / 100.0
        );
    }
}
