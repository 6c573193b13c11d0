//! The conditional denoiser: two cascaded subnetworks over complementary 2D
//! views of the channel tensor, wrapped in skip/output preconditioning.

use serde::{Deserialize, Serialize};

use crate::channel::{FrameConfig, LabelStats, ScenarioLabel};
use crate::diffusion::embed::{condition_features, feature_dim};
use crate::diffusion::unet::{init_subnet, subnet_forward, UNetConfig};
use crate::diffusion::Preconditioner;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::graph::{Graph, Var};
use crate::tensor::params::{Binding, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub unet: UNetConfig,
    /// When false the model ignores labels entirely.
    pub conditional: bool,
    /// Data-scale constant shared with the preconditioner; the network input
    /// is normalized to unit variance per noise level as x / sqrt(sd^2 + t^2).
    pub sigma_data: f64,
}

impl Default for PredictorConfig {
    fn default() -> PredictorConfig {
        PredictorConfig { unet: UNetConfig::default(), conditional: true, sigma_data: 0.5 }
    }
}

/// Noise-prediction network. The first subnetwork sees per-symbol
/// angular-delay images (B*S, 2, n_rx, tau); the second sees per-sample
/// space-time images (B, 2, n_rx*tau, S).
#[derive(Clone, Debug)]
pub struct NoisePredictor {
    pub frame: FrameConfig,
    pub config: PredictorConfig,
    pub params: ParamSet,
    pub label_stats: LabelStats,
    /// Multiplier taking raw channel tensors into model space, chosen at
    /// training time so the per-element RMS matches the preconditioner's
    /// data-scale constant. Inverted when emitting generated samples.
    pub data_scale: f64,
}

impl NoisePredictor {
    pub fn init(frame: &FrameConfig, config: PredictorConfig, seed: u64) -> Result<NoisePredictor> {
        frame.validate()?;
        config.unet.validate()?;
        if frame.n_tx != 1 {
            return Err(Error::invalid("NoisePredictor", "only single-antenna transmitters are modeled"));
        }
        config.unet.validate_spatial(frame.n_rx, frame.delay_bins)?;
        config.unet.validate_spatial(frame.n_rx * frame.delay_bins, frame.symbols)?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamSet::new();
        init_subnet(&mut params, "s1", &config.unet, &mut rng);
        init_subnet(&mut params, "s2", &config.unet, &mut rng);
        Ok(NoisePredictor {
            frame: frame.clone(),
            config,
            params,
            label_stats: LabelStats::identity(),
            data_scale: 1.0,
        })
    }

    /// Flattened channel dimension this model operates on.
    pub fn dim(&self) -> usize {
        self.frame.channel_dim()
    }

    /// Raw sinusoidal features for a (label, time) pair.
    pub fn features(&self, label: &ScenarioLabel, t: f64) -> Vec<f64> {
        condition_features(
            self.label_stats.normalize(label),
            t,
            self.config.conditional,
            self.config.unet.freqs_per_input,
        )
    }

    /// The dense condition embedding of the first subnetwork, evaluated with
    /// the current parameters (SiLU applied, as seen by the blocks).
    pub fn embed_condition(&self, label: &ScenarioLabel, t: f64) -> Vec<f64> {
        let feats = self.features(label, t);
        let w = self.params.get("s1.emb.w").expect("emb weights");
        let b = self.params.get("s1.emb.b").expect("emb bias");
        let (raw, dim) = (w.shape()[0], w.shape()[1]);
        let mut out = vec![0.0; dim];
        for j in 0..dim {
            let mut acc = b.data()[j];
            for i in 0..raw {
                acc += feats[i] * w.data()[i * dim + j];
            }
            let s = if acc >= 0.0 { 1.0 / (1.0 + (-acc).exp()) } else { acc.exp() / (1.0 + acc.exp()) };
            out[j] = acc * s;
        }
        out
    }

    fn feature_matrix(&self, ts: &[f64], labels: &[ScenarioLabel], repeat: usize) -> Tensor {
        let raw = feature_dim(self.config.unet.freqs_per_input);
        let mut data = Vec::with_capacity(ts.len() * repeat * raw);
        for (t, label) in ts.iter().zip(labels.iter()) {
            let row = self.features(label, *t);
            for _ in 0..repeat {
                data.extend_from_slice(&row);
            }
        }
        Tensor::from_vec_unchecked(vec![ts.len() * repeat, raw], data)
    }

    /// Noise prediction recorded on `g`. `x` is (B, dim); one time and label
    /// per row.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        bind: &Binding,
        x: Var,
        ts: &[f64],
        labels: &[ScenarioLabel],
    ) -> Result<Var> {
        let (nr, tau, s) = (self.frame.n_rx, self.frame.delay_bins, self.frame.symbols);
        let bsz = g.value(x).shape()[0];
        if g.value(x).shape() != [bsz, self.dim()] {
            return Err(Error::shape(
                "predict_noise",
                format!("expected (B, {}), got {:?}", self.dim(), g.value(x).shape()),
            ));
        }
        if ts.len() != bsz || labels.len() != bsz {
            return Err(Error::shape(
                "predict_noise",
                format!("{} rows, {} times, {} labels", bsz, ts.len(), labels.len()),
            ));
        }
        let feats_b = g.leaf(self.feature_matrix(ts, labels, 1), false);
        let feats_bs = g.leaf(self.feature_matrix(ts, labels, s), false);

        // unit-variance input per noise level
        let sd2 = self.config.sigma_data * self.config.sigma_data;
        let cin = Tensor::from_vec_unchecked(
            vec![bsz, 1],
            ts.iter().map(|&t| 1.0 / (sd2 + t * t).sqrt()).collect(),
        );
        let cin = g.leaf(cin, false);
        let x = g.mul(x, cin)?;

        // (B, dim) -> per-symbol angular-delay images (B*S, 2, nr, tau)
        let x5 = g.reshape(x, &[bsz, nr, tau, s, 2])?;
        let sym = g.permute(x5, &[0, 3, 4, 1, 2])?;
        let sym = g.reshape(sym, &[bsz * s, 2, nr, tau])?;
        let out1 = subnet_forward(g, bind, "s1", &self.config.unet, sym, feats_bs)?;

        // -> per-sample space-time images (B, 2, nr*tau, S)
        let seq = g.reshape(out1, &[bsz, s, 2, nr, tau])?;
        let seq = g.permute(seq, &[0, 2, 3, 4, 1])?;
        let seq = g.reshape(seq, &[bsz, 2, nr * tau, s])?;
        let out2 = subnet_forward(g, bind, "s2", &self.config.unet, seq, feats_b)?;

        // back to (B, dim)
        let y = g.reshape(out2, &[bsz, 2, nr, tau, s])?;
        let y = g.permute(y, &[0, 2, 3, 4, 1])?;
        g.reshape(y, &[bsz, self.dim()])
    }

    /// Convenience forward pass without gradients.
    pub fn predict_noise(&self, x: &Tensor, ts: &[f64], labels: &[ScenarioLabel]) -> Result<Tensor> {
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, false);
        let xv = g.leaf(x.clone(), false);
        let out = self.forward_on(&mut g, &bind, xv, ts, labels)?;
        Ok(g.value(out).clone())
    }
}

/// Anything that maps a noisy batch to denoised estimates; the sampler and
/// the distillation loop are generic over this.
pub trait Denoiser {
    fn denoise_batch(&self, x: &Tensor, ts: &[f64], labels: &[ScenarioLabel]) -> Result<Tensor>;
}

/// Preconditioned denoiser d(x, t) = c_skip(t) x + c_out(t) eps(x, t; c).
pub struct DmDenoiser<'a> {
    pub model: &'a NoisePredictor,
    pub precond: Preconditioner,
}

impl<'a> DmDenoiser<'a> {
    pub fn new(model: &'a NoisePredictor, precond: Preconditioner) -> DmDenoiser<'a> {
        DmDenoiser { model, precond }
    }
}

impl Denoiser for DmDenoiser<'_> {
    fn denoise_batch(&self, x: &Tensor, ts: &[f64], labels: &[ScenarioLabel]) -> Result<Tensor> {
        let eps = self.model.predict_noise(x, ts, labels)?;
        Ok(apply_precondition(&self.precond, x, &eps, ts))
    }
}

/// Rowwise c_skip(t_i) * x_i + c_out(t_i) * eps_i.
pub fn apply_precondition(p: &Preconditioner, x: &Tensor, eps: &Tensor, ts: &[f64]) -> Tensor {
    let bsz = x.shape()[0];
    let dim = x.len() / bsz;
    let mut data = vec![0.0; x.len()];
    for (i, &t) in ts.iter().enumerate() {
        let (cs, co) = (p.c_skip(t), p.c_out(t));
        let xr = &x.data()[i * dim..(i + 1) * dim];
        let er = &eps.data()[i * dim..(i + 1) * dim];
        for ((d, &xv), &ev) in data[i * dim..(i + 1) * dim].iter_mut().zip(xr).zip(er) {
            *d = cs * xv + co * ev;
        }
    }
    Tensor::from_vec_unchecked(x.shape().to_vec(), data)
}

/// On-graph version of the preconditioned denoiser, for training losses.
pub fn denoise_on_graph(
    model: &NoisePredictor,
    precond: &Preconditioner,
    g: &mut Graph,
    bind: &Binding,
    x: Var,
    ts: &[f64],
    labels: &[ScenarioLabel],
) -> Result<Var> {
    let eps = model.forward_on(g, bind, x, ts, labels)?;
    let bsz = ts.len();
    let cs = Tensor::from_vec_unchecked(vec![bsz, 1], ts.iter().map(|&t| precond.c_skip(t)).collect());
    let co = Tensor::from_vec_unchecked(vec![bsz, 1], ts.iter().map(|&t| precond.c_out(t)).collect());
    let cs = g.leaf(cs, false);
    let co = g.leaf(co, false);
    let xs = g.mul(x, cs)?;
    let eo = g.mul(eps, co)?;
    g.add(xs, eo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FrameConfig;

    fn tiny_model(conditional: bool) -> NoisePredictor {
        let cfg = PredictorConfig {
            unet: UNetConfig { widths: vec![8], emb_dim: 12, freqs_per_input: 3, attention: true },
            conditional,
            sigma_data: 0.5,
        };
        NoisePredictor::init(&FrameConfig::tiny(), cfg, 99).unwrap()
    }

    #[test]
    fn output_shape_matches_input() {
        let m = tiny_model(true);
        let mut rng = rng_from_seed(1);
        let x = Tensor::randn(&[3, m.dim()], &mut rng);
        let labels = vec![ScenarioLabel::new(1.0, 2.0, 3.0); 3];
        let out = m.predict_noise(&x, &[0.5, 1.0, 2.0], &labels).unwrap();
        assert_eq!(out.shape(), x.shape());
        assert!(out.is_finite());
    }

    #[test]
    fn distinct_labels_change_conditional_output() {
        let m = tiny_model(true);
        let mut rng = rng_from_seed(2);
        let x = Tensor::randn(&[1, m.dim()], &mut rng);
        let a = m.predict_noise(&x, &[1.0], &[ScenarioLabel::new(0.0, 0.0, 1.0)]).unwrap();
        let b = m.predict_noise(&x, &[1.0], &[ScenarioLabel::new(5.0, -2.0, 30.0)]).unwrap();
        let diff: f64 = a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-9, "conditional outputs identical");
    }

    #[test]
    fn unconditional_output_is_label_invariant() {
        let m = tiny_model(false);
        let mut rng = rng_from_seed(3);
        let x = Tensor::randn(&[1, m.dim()], &mut rng);
        let a = m.predict_noise(&x, &[1.0], &[ScenarioLabel::new(0.0, 0.0, 1.0)]).unwrap();
        let b = m.predict_noise(&x, &[1.0], &[ScenarioLabel::new(5.0, -2.0, 30.0)]).unwrap();
        assert_eq!(a.data(), b.data(), "unconditional outputs must be bit-identical");
    }

    #[test]
    fn denoiser_is_identity_at_minimal_time() {
        let m = tiny_model(true);
        let p = Preconditioner::standard();
        let den = DmDenoiser::new(&m, p);
        let mut rng = rng_from_seed(4);
        let x = Tensor::randn(&[2, m.dim()], &mut rng);
        let labels = vec![ScenarioLabel::new(1.0, 1.0, 1.0); 2];
        let out = den.denoise_batch(&x, &[p.min_time, p.min_time], &labels).unwrap();
        assert_eq!(out.data(), x.data(), "boundary identity must be bit-exact");
    }

    #[test]
    fn cascade_view_matches_permutation_oracle() {
        // graph-side view chain vs direct index arithmetic
        let frame = FrameConfig::tiny();
        let (nr, tau, s) = (frame.n_rx, frame.delay_bins, frame.symbols);
        let dim = frame.channel_dim();
        let mut rng = rng_from_seed(5);
        let x = Tensor::randn(&[2, dim], &mut rng);

        let mut g = Graph::new();
        let xv = g.leaf(x.clone(), false);
        let x5 = g.reshape(xv, &[2, nr, tau, s, 2]).unwrap();
        let sym = g.permute(x5, &[0, 3, 4, 1, 2]).unwrap();
        let sym = g.reshape(sym, &[2 * s, 2, nr, tau]).unwrap();
        let got = g.value(sym).clone();

        // oracle: out[((b*S + si)*2 + ch)*nr*tau + m*tau + d] = x[b, m, d, si, ch]
        for b in 0..2 {
            for si in 0..s {
                for ch in 0..2 {
                    for m in 0..nr {
                        for d in 0..tau {
                            let src = (((b * nr + m) * tau + d) * s + si) * 2 + ch;
                            let dst = (((b * s + si) * 2 + ch) * nr + m) * tau + d;
                            assert_eq!(got.data()[dst], x.data()[src]);
                        }
                    }
                }
            }
        }

        // and the reverse chain restores the original layout
        let seq = g.reshape(sym, &[2, s, 2, nr, tau]).unwrap();
        let seq = g.permute(seq, &[0, 2, 3, 4, 1]).unwrap();
        let back5 = g.permute(seq, &[0, 2, 3, 4, 1]).unwrap();
        let flat = g.reshape(back5, &[2, dim]).unwrap();
        assert_eq!(g.value(flat).data(), x.data());
    }
}
