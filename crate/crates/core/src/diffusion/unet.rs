//! Compact encoder-decoder subnetwork with condition-modulated residual
//! blocks and optional single-head self-attention at the lowest resolution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::graph::{Graph, Var};
use crate::tensor::params::{Binding, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    /// Channel width per resolution level (length = level count).
    pub widths: Vec<usize>,
    /// Embedding width fed to the per-block modulation layers.
    pub emb_dim: usize,
    /// Sin/cos frequencies per conditioning input.
    pub freqs_per_input: usize,
    /// Self-attention block at the lowest resolution.
    pub attention: bool,
}

impl Default for UNetConfig {
    fn default() -> UNetConfig {
        UNetConfig { widths: vec![16, 32], emb_dim: 32, freqs_per_input: 6, attention: true }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("UNetConfig", "widths must be non-empty and positive"));
        }
        if self.emb_dim == 0 || self.freqs_per_input == 0 {
            return Err(Error::invalid("UNetConfig", "emb_dim and freqs_per_input must be positive"));
        }
        Ok(())
    }

    /// Both spatial extents must survive the stride-2 path: divisible by
    /// 2^(levels-1) and even at every downsampling.
    pub fn validate_spatial(&self, h: usize, w: usize) -> Result<()> {
        let factor = 1usize << (self.widths.len() - 1);
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::invalid(
                "UNetConfig",
                format!("spatial {h}x{w} not divisible by downsampling factor {factor}"),
            ));
        }
        Ok(())
    }
}

/// Largest group count whose group size is at most 8 and divides `channels`.
pub(crate) fn group_count(channels: usize) -> usize {
    let mut size = channels.min(8);
    while channels % size != 0 {
        size -= 1;
    }
    channels / size
}

pub(crate) fn conv_init<R: Rng>(rng: &mut R, out_c: usize, in_c: usize, kh: usize, kw: usize, gain: f64) -> Tensor {
    let std = gain * (2.0 / (in_c * kh * kw) as f64).sqrt();
    Tensor::randn(&[out_c, in_c, kh, kw], rng).map(|v| v * std)
}

pub(crate) fn linear_init<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize, std: f64) -> Tensor {
    Tensor::randn(&[in_dim, out_dim], rng).map(|v| v * std)
}

fn reg(params: &mut ParamSet, name: String, t: Tensor) {
    params.insert(name, t).expect("unique parameter names by construction");
}

fn reg_resblock<R: Rng>(
    params: &mut ParamSet,
    prefix: &str,
    in_c: usize,
    out_c: usize,
    emb_dim: usize,
    rng: &mut R,
) {
    reg(params, format!("{prefix}.gn1.g"), Tensor::full(&[1, in_c, 1, 1], 1.0));
    reg(params, format!("{prefix}.gn1.b"), Tensor::zeros(&[1, in_c, 1, 1]));
    reg(params, format!("{prefix}.conv1.w"), conv_init(rng, out_c, in_c, 3, 3, 1.0));
    reg(params, format!("{prefix}.conv1.b"), Tensor::zeros(&[1, out_c, 1, 1]));
    reg(params, format!("{prefix}.mod.w"), linear_init(rng, emb_dim, 2 * out_c, 0.01));
    reg(params, format!("{prefix}.mod.b"), Tensor::zeros(&[1, 2 * out_c]));
    reg(params, format!("{prefix}.gn2.g"), Tensor::full(&[1, out_c, 1, 1], 1.0));
    reg(params, format!("{prefix}.gn2.b"), Tensor::zeros(&[1, out_c, 1, 1]));
    reg(params, format!("{prefix}.conv2.w"), conv_init(rng, out_c, out_c, 3, 3, 1.0));
    reg(params, format!("{prefix}.conv2.b"), Tensor::zeros(&[1, out_c, 1, 1]));
    if in_c != out_c {
        reg(params, format!("{prefix}.skip.w"), conv_init(rng, out_c, in_c, 1, 1, 1.0));
    }
}

/// Registers every parameter of one subnetwork under `prefix`, in a fixed
/// order that defines the canonical parameter layout.
pub fn init_subnet<R: Rng>(params: &mut ParamSet, prefix: &str, cfg: &UNetConfig, rng: &mut R) {
    let raw = super::embed::feature_dim(cfg.freqs_per_input);
    let levels = cfg.widths.len();
    reg(params, format!("{prefix}.emb.w"), linear_init(rng, raw, cfg.emb_dim, (1.0 / raw as f64).sqrt()));
    reg(params, format!("{prefix}.emb.b"), Tensor::zeros(&[1, cfg.emb_dim]));
    reg(params, format!("{prefix}.stem.w"), conv_init(rng, cfg.widths[0], 2, 3, 3, 1.0));
    reg(params, format!("{prefix}.stem.b"), Tensor::zeros(&[1, cfg.widths[0], 1, 1]));
    for i in 0..levels {
        reg_resblock(params, &format!("{prefix}.enc{i}"), cfg.widths[i], cfg.widths[i], cfg.emb_dim, rng);
        if i + 1 < levels {
            reg(
                params,
                format!("{prefix}.down{i}.w"),
                conv_init(rng, cfg.widths[i + 1], cfg.widths[i], 3, 3, 1.0),
            );
            reg(params, format!("{prefix}.down{i}.b"), Tensor::zeros(&[1, cfg.widths[i + 1], 1, 1]));
        }
    }
    if cfg.attention {
        let c = *cfg.widths.last().unwrap();
        let std = (1.0 / c as f64).sqrt();
        reg(params, format!("{prefix}.attn.gn.g"), Tensor::full(&[1, c, 1, 1], 1.0));
        reg(params, format!("{prefix}.attn.gn.b"), Tensor::zeros(&[1, c, 1, 1]));
        for nm in ["q", "k", "v", "o"] {
            reg(params, format!("{prefix}.attn.{nm}.w"), linear_init(rng, c, c, std));
            reg(params, format!("{prefix}.attn.{nm}.b"), Tensor::zeros(&[1, c]));
        }
    }
    for i in (0..levels.saturating_sub(1)).rev() {
        reg(
            params,
            format!("{prefix}.up{i}.w"),
            conv_init(rng, cfg.widths[i], cfg.widths[i + 1], 3, 3, 1.0),
        );
        reg(params, format!("{prefix}.up{i}.b"), Tensor::zeros(&[1, cfg.widths[i], 1, 1]));
        reg_resblock(params, &format!("{prefix}.dec{i}"), 2 * cfg.widths[i], cfg.widths[i], cfg.emb_dim, rng);
    }
    reg(params, format!("{prefix}.head.gn.g"), Tensor::full(&[1, cfg.widths[0], 1, 1], 1.0));
    reg(params, format!("{prefix}.head.gn.b"), Tensor::zeros(&[1, cfg.widths[0], 1, 1]));
    reg(params, format!("{prefix}.head.conv.w"), conv_init(rng, 2, cfg.widths[0], 3, 3, 0.1));
    reg(params, format!("{prefix}.head.conv.b"), Tensor::zeros(&[1, 2, 1, 1]));
}

fn norm_affine(g: &mut Graph, b: &Binding, prefix: &str, x: Var, c: usize) -> Result<Var> {
    let n = g.group_norm(x, group_count(c), 1e-5)?;
    let s = g.mul(n, b.var(&format!("{prefix}.g")))?;
    g.add(s, b.var(&format!("{prefix}.b")))
}

fn conv_bias(g: &mut Graph, b: &Binding, prefix: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let c = g.conv2d(x, b.var(&format!("{prefix}.w")), stride, pad)?;
    g.add(c, b.var(&format!("{prefix}.b")))
}

/// GroupNorm -> SiLU -> conv, scale-shift modulation from the embedding,
/// GroupNorm -> SiLU -> conv, plus a (possibly projected) skip connection.
fn resblock_forward(
    g: &mut Graph,
    b: &Binding,
    prefix: &str,
    in_c: usize,
    out_c: usize,
    x: Var,
    emb: Var,
) -> Result<Var> {
    let h = norm_affine(g, b, &format!("{prefix}.gn1"), x, in_c)?;
    let h = g.silu(h)?;
    let h = conv_bias(g, b, &format!("{prefix}.conv1"), h, 1, 1)?;

    // per-channel affine modulation from the condition embedding
    let m = g.matmul(emb, b.var(&format!("{prefix}.mod.w")))?;
    let m = g.add(m, b.var(&format!("{prefix}.mod.b")))?;
    let bsz = g.value(m).shape()[0];
    let scale = g.narrow(m, 1, 0, out_c)?;
    let shift = g.narrow(m, 1, out_c, out_c)?;
    let scale = g.reshape(scale, &[bsz, out_c, 1, 1])?;
    let shift = g.reshape(shift, &[bsz, out_c, 1, 1])?;

    let h = norm_affine(g, b, &format!("{prefix}.gn2"), h, out_c)?;
    let one_plus = g.add_scalar(scale, 1.0)?;
    let h = g.mul(h, one_plus)?;
    let h = g.add(h, shift)?;
    let h = g.silu(h)?;
    let h = conv_bias(g, b, &format!("{prefix}.conv2"), h, 1, 1)?;

    let skip = if in_c == out_c {
        x
    } else {
        g.conv2d(x, b.var(&format!("{prefix}.skip.w")), 1, 0)?
    };
    g.add(h, skip)
}

fn attention_forward(g: &mut Graph, b: &Binding, prefix: &str, x: Var, c: usize) -> Result<Var> {
    let shape = g.value(x).shape().to_vec();
    let (bsz, h, w) = (shape[0], shape[2], shape[3]);
    let tokens = h * w;
    let n = norm_affine(g, b, &format!("{prefix}.gn"), x, c)?;
    let flat = g.reshape(n, &[bsz, c, tokens])?;
    let seq = g.permute(flat, &[0, 2, 1])?; // (B, tokens, C)
    let seq2 = g.reshape(seq, &[bsz * tokens, c])?;
    let proj = |g: &mut Graph, nm: &str, x: Var| -> Result<Var> {
        let w_ = g.matmul(x, b.var(&format!("{prefix}.{nm}.w")))?;
        g.add(w_, b.var(&format!("{prefix}.{nm}.b")))
    };
    let q = proj(g, "q", seq2)?;
    let k = proj(g, "k", seq2)?;
    let v = proj(g, "v", seq2)?;
    let q = g.reshape(q, &[bsz, tokens, c])?;
    let k = g.reshape(k, &[bsz, tokens, c])?;
    let v = g.reshape(v, &[bsz, tokens, c])?;
    let kt = g.permute(k, &[0, 2, 1])?;
    let scores = g.bmm(q, kt)?;
    let scores = g.scale(scores, 1.0 / (c as f64).sqrt())?;
    let attn = g.softmax(scores)?;
    let mixed = g.bmm(attn, v)?;
    let mixed2 = g.reshape(mixed, &[bsz * tokens, c])?;
    let out = proj(g, "o", mixed2)?;
    let out = g.reshape(out, &[bsz, tokens, c])?;
    let out = g.permute(out, &[0, 2, 1])?;
    let out = g.reshape(out, &[bsz, c, h, w])?;
    g.add(out, x)
}

/// Forward pass of one subnetwork: input (B, 2, H, W) and raw condition
/// features (B, feature_dim) -> output (B, 2, H, W).
pub fn subnet_forward(
    g: &mut Graph,
    b: &Binding,
    prefix: &str,
    cfg: &UNetConfig,
    x: Var,
    feats: Var,
) -> Result<Var> {
    let levels = cfg.widths.len();
    let e = g.matmul(feats, b.var(&format!("{prefix}.emb.w")))?;
    let e = g.add(e, b.var(&format!("{prefix}.emb.b")))?;
    let e = g.silu(e)?;

    let mut h = conv_bias(g, b, &format!("{prefix}.stem"), x, 1, 1)?;
    let mut skips = Vec::with_capacity(levels);
    for i in 0..levels {
        h = resblock_forward(g, b, &format!("{prefix}.enc{i}"), cfg.widths[i], cfg.widths[i], h, e)?;
        skips.push(h);
        if i + 1 < levels {
            h = conv_bias(g, b, &format!("{prefix}.down{i}"), h, 2, 1)?;
        }
    }
    if cfg.attention {
        h = attention_forward(g, b, &format!("{prefix}.attn"), h, *cfg.widths.last().unwrap())?;
    }
    for i in (0..levels.saturating_sub(1)).rev() {
        let up = g.upsample2x(h)?;
        let up = conv_bias(g, b, &format!("{prefix}.up{i}"), up, 1, 1)?;
        let cat = g.concat(&[up, skips[i]], 1)?;
        h = resblock_forward(g, b, &format!("{prefix}.dec{i}"), 2 * cfg.widths[i], cfg.widths[i], cat, e)?;
    }
    let h = norm_affine(g, b, &format!("{prefix}.head.gn"), h, cfg.widths[0])?;
    let h = g.silu(h)?;
    conv_bias(g, b, &format!("{prefix}.head.conv"), h, 1, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn group_counts_divide_channels() {
        for c in [1usize, 2, 8, 12, 16, 24, 32] {
            let g = group_count(c);
            assert_eq!(c % g, 0, "c={c} g={g}");
            assert!(c / g <= 8);
        }
    }

    #[test]
    fn subnet_preserves_shape_for_all_levels() {
        for widths in [vec![8], vec![8, 16]] {
            let cfg = UNetConfig { widths, emb_dim: 16, freqs_per_input: 4, attention: true };
            cfg.validate().unwrap();
            let mut rng = rng_from_seed(1);
            let mut params = ParamSet::new();
            init_subnet(&mut params, "s", &cfg, &mut rng);
            let mut g = Graph::new();
            let bind = params.bind(&mut g, false);
            let x = g.leaf(Tensor::randn(&[3, 2, 4, 6], &mut rng), false);
            let feats = g.leaf(
                Tensor::randn(&[3, super::super::embed::feature_dim(4)], &mut rng),
                false,
            );
            let out = subnet_forward(&mut g, &bind, "s", &cfg, x, feats).unwrap();
            assert_eq!(g.value(out).shape(), &[3, 2, 4, 6]);
            assert!(g.value(out).is_finite());
        }
    }

    #[test]
    fn spatial_validation_catches_odd_dims() {
        let cfg = UNetConfig { widths: vec![8, 16], ..UNetConfig::default() };
        assert!(cfg.validate_spatial(8, 14).is_ok());
        assert!(cfg.validate_spatial(7, 14).is_err());
    }
}
