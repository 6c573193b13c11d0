//! Transforms between the spatial-frequency and angular-delay domains.
//!
//! The angular-delay transform applies the unitary FFT with the conjugate
//! (+j) kernel along the antenna and subcarrier axes so that positive path
//! delays land on low non-negative delay bins; the spatial-frequency
//! transform applies the (-j) kernel and is its exact inverse on the
//! retained delay support.

use crate::channel::{ChannelTensor, Domain, FrameConfig};
use crate::error::{Error, Result};
use crate::tensor::fft::fft_2d;
use crate::tensor::Tensor;

const ANTENNA_AXIS: usize = 0;
const FREQ_AXIS: usize = 2;

/// Spatial-frequency-time -> angular-delay-time, keeping the first
/// `delay_bins` delay bins.
pub fn to_angular_delay(h: &ChannelTensor, frame: &FrameConfig) -> Result<ChannelTensor> {
    if h.domain != Domain::SpatialFreqTime {
        return Err(Error::WrongDomain { expected: "spatial-frequency-time", got: h.domain.name() });
    }
    let full = fft_2d(&h.data, (ANTENNA_AXIS, FREQ_AXIS), true)?;
    let truncated = slice_axis(&full, FREQ_AXIS, 0, frame.delay_bins);
    ChannelTensor::new(Domain::AngularDelayTime, truncated, frame)
}

/// Angular-delay transform without truncation; used for energy accounting.
pub fn to_angular_delay_full(h: &ChannelTensor) -> Result<Tensor> {
    if h.domain != Domain::SpatialFreqTime {
        return Err(Error::WrongDomain { expected: "spatial-frequency-time", got: h.domain.name() });
    }
    fft_2d(&h.data, (ANTENNA_AXIS, FREQ_AXIS), true)
}

/// Angular-delay-time -> spatial-frequency-time (zero-pads the delay axis).
pub fn to_spatial_frequency(h: &ChannelTensor, frame: &FrameConfig) -> Result<ChannelTensor> {
    if h.domain != Domain::AngularDelayTime {
        return Err(Error::WrongDomain { expected: "angular-delay-time", got: h.domain.name() });
    }
    let padded = pad_axis(&h.data, FREQ_AXIS, frame.subcarriers);
    let out = fft_2d(&padded, (ANTENNA_AXIS, FREQ_AXIS), false)?;
    ChannelTensor::new(Domain::SpatialFreqTime, out, frame)
}

fn slice_axis(t: &Tensor, axis: usize, start: usize, len: usize) -> Tensor {
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let na = shape[axis];
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let mut data = vec![0.0; outer * len * inner];
    for o in 0..outer {
        let src = &t.data()[(o * na + start) * inner..(o * na + start + len) * inner];
        data[o * len * inner..(o + 1) * len * inner].copy_from_slice(src);
    }
    Tensor::from_vec_unchecked(out_shape, data)
}

fn pad_axis(t: &Tensor, axis: usize, new_len: usize) -> Tensor {
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let na = shape[axis];
    debug_assert!(new_len >= na);
    let mut out_shape = shape.to_vec();
    out_shape[axis] = new_len;
    let mut data = vec![0.0; outer * new_len * inner];
    for o in 0..outer {
        let src = &t.data()[o * na * inner..(o + 1) * na * inner];
        data[o * new_len * inner..o * new_len * inner + na * inner].copy_from_slice(src);
    }
    Tensor::from_vec_unchecked(out_shape, data)
}
