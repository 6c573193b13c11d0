//! Sinusoidal features for the condition embedding.
//!
//! The normalized label components and log noise level are expanded with
//! sin/cos pairs at geometrically spaced frequencies; a dense layer inside
//! the network maps them to the embedding that modulates each residual
//! block. Unconditional models zero the label channels so the output is
//! independent of the label.

/// Frequencies double per index: 1, 2, 4, ...
const FREQ_BASE: f64 = 2.0;

/// Raw feature width for a given per-input frequency count.
pub fn feature_dim(freqs_per_input: usize) -> usize {
    4 * 2 * freqs_per_input
}

/// Sin/cos features of [log t, c1, c2, c3]; label channels are zeroed for
/// unconditional models.
pub fn condition_features(
    c_normalized: [f64; 3],
    t: f64,
    conditional: bool,
    freqs_per_input: usize,
) -> Vec<f64> {
    let mut inputs = [t.max(1e-12).ln(), 0.0, 0.0, 0.0];
    if conditional {
        inputs[1..].copy_from_slice(&c_normalized);
    }
    let mut out = Vec::with_capacity(feature_dim(freqs_per_input));
    for &v in &inputs {
        let mut w = 1.0;
        for _ in 0..freqs_per_input {
            out.push((v * w).sin());
            out.push((v * w).cos());
            w *= FREQ_BASE;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_same_inputs() {
        let a = condition_features([0.1, -0.7, 1.2], 3.0, true, 6);
        let b = condition_features([0.1, -0.7, 1.2], 3.0, true, 6);
        assert_eq!(a, b);
        assert_eq!(a.len(), feature_dim(6));
    }

    #[test]
    fn distinct_times_give_distinct_features() {
        let a = condition_features([0.0; 3], 1.0, true, 6);
        let b = condition_features([0.0; 3], 2.0, true, 6);
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(d > 1e-3);
    }

    #[test]
    fn unconditional_ignores_label() {
        let a = condition_features([5.0, -3.0, 2.0], 1.5, false, 4);
        let b = condition_features([0.0, 0.0, 0.0], 1.5, false, 4);
        assert_eq!(a, b);
        let c = condition_features([5.0, -3.0, 2.0], 1.5, true, 4);
        assert_ne!(a, c);
    }
}
