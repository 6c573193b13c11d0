//! Radix-2 FFTs with unitary normalization in both directions,
//! so `inverse(forward(x)) == x` and energy is preserved.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// In-place radix-2 decimation-in-time FFT. Length must be a power of two.
/// Both directions scale by 1/sqrt(n).
pub fn fft_in_place(xs: &mut [Complex64], inverse: bool) -> Result<()> {
    let n = xs.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(
            "fft",
            format!("length {} is not a power of two", n),
        ));
    }
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            xs.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * std::f64::consts::TAU / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        for chunk in xs.chunks_mut(len) {
            let mut w = Complex64::new(1.0, 0.0);
            let (lo, hi) = chunk.split_at_mut(len / 2);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let t = w * *b;
                *b = *a - t;
                *a += t;
                w *= wlen;
            }
        }
        len <<= 1;
    }
    let norm = 1.0 / (n as f64).sqrt();
    for x in xs.iter_mut() {
        *x *= norm;
    }
    Ok(())
}

fn complex_from_pairs(data: &[f64]) -> Vec<Complex64> {
    data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

fn pairs_from_complex(xs: &[Complex64], out: &mut Vec<f64>) {
    for x in xs {
        out.push(x.re);
        out.push(x.im);
    }
}

/// FFT of a complex vector stored as an (n, 2) tensor of re/im pairs.
pub fn fft_1d(x: &Tensor, inverse: bool) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 2 || s[1] != 2 {
        return Err(Error::shape("fft_1d", format!("expected (n, 2), got {:?}", s)));
    }
    let mut xs = complex_from_pairs(x.data());
    fft_in_place(&mut xs, inverse)?;
    let mut out = Vec::with_capacity(x.len());
    pairs_from_complex(&xs, &mut out);
    Tensor::from_vec(s.to_vec(), out)
}

/// Separable FFT along two axes of a complex tensor whose last axis holds
/// re/im pairs. Both axis extents must be powers of two.
pub fn fft_2d(x: &Tensor, axes: (usize, usize), inverse: bool) -> Result<Tensor> {
    let out = fft_axis(x, axes.0, inverse)?;
    fft_axis(&out, axes.1, inverse)
}

/// FFT along a single axis of a complex tensor (last axis = re/im).
pub fn fft_axis(x: &Tensor, axis: usize, inverse: bool) -> Result<Tensor> {
    let shape = x.shape();
    let rank = shape.len();
    if rank < 2 || shape[rank - 1] != 2 {
        return Err(Error::shape(
            "fft_axis",
            format!("expected trailing re/im axis of 2, got {:?}", shape),
        ));
    }
    if axis >= rank - 1 {
        return Err(Error::invalid(
            "fft_axis",
            format!("axis {} must be a non-channel axis of {:?}", axis, shape),
        ));
    }
    let n = shape[axis];
    if !n.is_power_of_two() {
        return Err(Error::invalid(
            "fft_axis",
            format!("axis extent {} is not a power of two", n),
        ));
    }
    let strides = x.strides();
    let axis_stride = strides[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..rank - 1].iter().product();
    let outer_stride = if axis == 0 { x.len() } else { strides[axis - 1] };
    let mut data = x.data().to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * outer_stride + i * 2;
            for (k, c) in line.iter_mut().enumerate() {
                let off = base + k * axis_stride;
                *c = Complex64::new(data[off], data[off + 1]);
            }
            fft_in_place(&mut line, inverse)?;
            for (k, c) in line.iter().enumerate() {
                let off = base + k * axis_stride;
                data[off] = c.re;
                data[off + 1] = c.im;
            }
        }
    }
    Ok(Tensor::from_vec_unchecked(shape.to_vec(), data))
}
