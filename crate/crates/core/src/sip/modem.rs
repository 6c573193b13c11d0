//! Gray-mapped constellations with unit average power and max-log soft
//! demodulation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    Qpsk,
    Qam16,
}

/// Gray amplitude ladder: 00 -> +3, 01 -> +1, 11 -> -1, 10 -> -3.
fn gray_level(hi: u8, lo: u8) -> f64 {
    match (hi, lo) {
        (0, 0) => 3.0,
        (0, 1) => 1.0,
        (1, 1) => -1.0,
        _ => -3.0,
    }
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
        }
    }

    fn map_symbol(&self, bits: &[u8]) -> Complex64 {
        match self {
            Constellation::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Complex64::new(
                    s * (1.0 - 2.0 * bits[0] as f64),
                    s * (1.0 - 2.0 * bits[1] as f64),
                )
            }
            Constellation::Qam16 => {
                let s = 1.0 / 10.0f64.sqrt();
                Complex64::new(
                    s * gray_level(bits[0], bits[1]),
                    s * gray_level(bits[2], bits[3]),
                )
            }
        }
    }

    /// All constellation points with their bit patterns.
    pub fn points(&self) -> Vec<(Complex64, Vec<u8>)> {
        let q = self.bits_per_symbol();
        (0..1usize << q)
            .map(|v| {
                let bits: Vec<u8> = (0..q).map(|i| ((v >> (q - 1 - i)) & 1) as u8).collect();
                (self.map_symbol(&bits), bits)
            })
            .collect()
    }

    /// Maps a bit stream (multiple of bits_per_symbol) to symbols.
    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let q = self.bits_per_symbol();
        if bits.len() % q != 0 {
            return Err(Error::invalid(
                "modulate",
                format!("{} bits not divisible by {} per symbol", bits.len(), q),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("modulate", "bits must be 0 or 1"));
        }
        Ok(bits.chunks_exact(q).map(|c| self.map_symbol(c)).collect())
    }

    /// Max-log bit logits, positive when bit 1 is more likely:
    /// logit_i = (min_{b_i=0} |y-s|^2 - min_{b_i=1} |y-s|^2) / noise_var.
    pub fn demodulate_soft(&self, symbols: &[Complex64], noise_var: f64) -> Vec<f64> {
        let q = self.bits_per_symbol();
        let pts = self.points();
        let nv = noise_var.max(1e-300);
        let mut out = Vec::with_capacity(symbols.len() * q);
        for &y in symbols {
            for i in 0..q {
                let mut best0 = f64::INFINITY;
                let mut best1 = f64::INFINITY;
                for (s, bits) in &pts {
                    let d = (y - s).norm_sqr();
                    if bits[i] == 1 {
                        best1 = best1.min(d);
                    } else {
                        best0 = best0.min(d);
                    }
                }
                out.push((best0 - best1) / nv);
            }
        }
        out
    }
}

/// Hard decision on logits (logit > 0 -> bit 1).
pub fn harden(logits: &[f64]) -> Vec<u8> {
    logits.iter().map(|&l| u8::from(l > 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn qpsk_zero_bits_map_to_first_quadrant() {
        let s = Constellation::Qpsk.modulate(&[0, 0]).unwrap();
        let expect = Complex64::new(1.0, 1.0) / 2.0f64.sqrt();
        assert!((s[0] - expect).norm() < 1e-12);
        assert!((s[0].norm() - 1.0).abs() < 1e-12, "unit modulus");
    }

    #[test]
    fn both_constellations_have_unit_average_power() {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let pts = c.points();
            let p: f64 = pts.iter().map(|(s, _)| s.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((p - 1.0).abs() < 1e-12, "{c:?} power {p}");
        }
    }

    #[test]
    fn gray_neighbors_differ_in_one_bit() {
        // adjacent amplitude levels of the 16-QAM ladder
        let lv = [(0u8, 0u8), (0, 1), (1, 1), (1, 0)];
        for w in lv.windows(2) {
            let d = (w[0].0 ^ w[1].0) as u32 + (w[0].1 ^ w[1].1) as u32;
            assert_eq!(d, 1);
        }
    }

    #[test]
    fn modulate_demodulate_round_trip_at_zero_noise() {
        let mut rng = rng_from_seed(1);
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let q = c.bits_per_symbol();
            let bits: Vec<u8> = (0..q * 64).map(|_| rng.random_range(0..2u8)).collect();
            let syms = c.modulate(&bits).unwrap();
            let logits = c.demodulate_soft(&syms, 1e-9);
            assert_eq!(harden(&logits), bits);
        }
    }

    #[test]
    fn invalid_bit_counts_are_rejected() {
        assert!(Constellation::Qam16.modulate(&[0, 1, 1]).is_err());
        assert!(Constellation::Qpsk.modulate(&[0, 2]).is_err());
    }
}
