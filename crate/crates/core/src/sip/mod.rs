//! Superimposed-pilot link level: frame construction, channel application,
//! linear baselines, the interference-cancellation neural receiver, and
//! link metrics.

pub mod evaluate;
pub mod frame;
pub mod lmmse;
pub mod modem;
pub mod receiver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use frame::{build_sip_frame, transmit, LinkSample, SipFrame};
pub use modem::Constellation;

/// Link-level configuration for superimposed-pilot transmission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SipConfig {
    /// Pilot power fraction.
    pub rho: f64,
    pub pilot_constellation: Constellation,
    pub data_constellation: Constellation,
    /// Whole OFDM symbols reserved for pilots in the orthogonal baseline.
    pub op_pilot_symbols: usize,
    /// Interference-cancellation iterations of the neural receiver.
    pub ic_iterations: usize,
    /// Training SNR range in dB.
    pub train_snr_db: (f64, f64),
    /// Code rate entering the throughput formula.
    pub code_rate: f64,
}

impl Default for SipConfig {
    fn default() -> SipConfig {
        SipConfig {
            rho: 0.3,
            pilot_constellation: Constellation::Qpsk,
            data_constellation: Constellation::Qam16,
            op_pilot_symbols: 2,
            ic_iterations: 2,
            train_snr_db: (-5.0, 0.0),
            code_rate: 490.0 / 1024.0,
        }
    }
}

impl SipConfig {
    pub fn validate(&self, symbols: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("SipConfig", format!("rho {} outside [0,1]", self.rho)));
        }
        if self.ic_iterations == 0 {
            return Err(Error::invalid("SipConfig", "ic_iterations must be >= 1"));
        }
        if self.op_pilot_symbols >= symbols {
            return Err(Error::invalid(
                "SipConfig",
                format!("op_pilot_symbols {} must be < {}", self.op_pilot_symbols, symbols),
            ));
        }
        if self.train_snr_db.0 > self.train_snr_db.1 {
            return Err(Error::invalid("SipConfig", "train SNR range is inverted"));
        }
        if !(0.0..=1.0).contains(&self.code_rate) {
            return Err(Error::invalid("SipConfig", "code_rate outside [0,1]"));
        }
        Ok(())
    }
}

/// Link outcome counters for one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub ber: f64,
    /// Fraction of frames whose uncoded payload had any bit error.
    pub block_error_rate: f64,
    /// Channel-estimate NMSE relative to the true channel energy.
    pub nmse: f64,
    /// Bits per frame after the rate and block-error accounting.
    pub throughput: f64,
    pub frames: usize,
}

impl LinkMetrics {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("ber", self.ber), ("block_error_rate", self.block_error_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("LinkMetrics", format!("{name} {v} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Data-symbol share times the uncoded payload and code rate:
/// K * S * omega * Q * r * (1 - bler).
pub fn throughput(
    subcarriers: usize,
    symbols: usize,
    omega: f64,
    bits_per_symbol: usize,
    code_rate: f64,
    bler: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::invalid("throughput", format!("omega {omega} outside [0,1]")));
    }
    Ok(subcarriers as f64 * symbols as f64 * omega * bits_per_symbol as f64 * code_rate * (1.0 - bler))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_paper_configuration() {
        // K=512, S=14, omega=1, Q=4, r=490/1024, bler=0
        let t = throughput(512, 14, 1.0, 4, 490.0 / 1024.0, 0.0).unwrap();
        assert_eq!(t, 13720.0);
    }

    #[test]
    fn throughput_zero_when_every_block_errs() {
        let t = throughput(512, 14, 1.0, 4, 490.0 / 1024.0, 1.0).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn orthogonal_pilot_overhead_fraction() {
        let s = 14.0f64;
        let np = 2.0;
        let omega = (s - np) / s;
        assert!((omega - 6.0 / 7.0).abs() < 1e-15);
        let t = throughput(512, 14, omega, 4, 490.0 / 1024.0, 0.0).unwrap();
        assert!((t - 13720.0 * 6.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        let mut c = SipConfig::default();
        c.validate(14).unwrap();
        c.rho = 1.5;
        assert!(c.validate(14).is_err());
        let mut c = SipConfig::default();
        c.op_pilot_symbols = 14;
        assert!(c.validate(14).is_err());
    }
}
