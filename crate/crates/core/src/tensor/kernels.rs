//! Hot numeric kernels: matrix products and convolution lowering.
//!
//! Everything here is plain sequential f64 code; the inner loops are written
//! over contiguous slices so LLVM can vectorize them.

/// C (m×n) += A (m×k) · B (k×n). `out` must already be zeroed by the caller
/// when a plain product is wanted. The k loop is unrolled by four to
/// amortize traffic over the output row.
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let k4 = k - k % 4;
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        let mut l = 0;
        while l < k4 {
            let (a0, a1, a2, a3) = (a_row[l], a_row[l + 1], a_row[l + 2], a_row[l + 3]);
            let b0 = &b[l * n..(l + 1) * n];
            let b1 = &b[(l + 1) * n..(l + 2) * n];
            let b2 = &b[(l + 2) * n..(l + 3) * n];
            let b3 = &b[(l + 3) * n..(l + 4) * n];
            for j in 0..n {
                out_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            l += 4;
        }
        while l < k {
            let av = a_row[l];
            if av != 0.0 {
                let b_row = &b[l * n..(l + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += av * bv;
                }
            }
            l += 1;
        }
    }
}

/// C (m×n) = A (m×k) · B (k×n).
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_acc(a, b, m, k, n, &mut out);
    out
}

/// C (m×n) += A (m×k) · Bᵀ where B is stored as (n×k).
pub fn matmul_a_bt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row.iter()) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// C (k×n) += Aᵀ · B where A is stored as (m×k) and B as (m×n). The m loop
/// is unrolled by four to amortize traffic over the output rows.
pub fn matmul_at_b_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let m4 = m - m % 4;
    let mut i = 0;
    while i < m4 {
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        let b0 = &b[i * n..(i + 1) * n];
        let b1 = &b[(i + 1) * n..(i + 2) * n];
        let b2 = &b[(i + 2) * n..(i + 3) * n];
        let b3 = &b[(i + 3) * n..(i + 4) * n];
        for l in 0..k {
            let (v0, v1, v2, v3) = (a0[l], a1[l], a2[l], a3[l]);
            let out_row = &mut out[l * n..(l + 1) * n];
            for j in 0..n {
                out_row[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
            }
        }
        i += 4;
    }
    while i < m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (l, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                let out_row = &mut out[l * n..(l + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += av * bv;
                }
            }
        }
        i += 1;
    }
}

/// Geometry of a 2D convolution with square zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad - self.kh) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.kw) / self.stride + 1;
        (oh, ow)
    }
}

/// Unrolls one image (C,H,W) into a (C·kh·kw, Ho·Wo) patch matrix.
pub fn im2col(x: &[f64], c: usize, h: usize, w: usize, spec: &ConvSpec, col: &mut [f64]) {
    let (oh, ow) = spec.out_hw(h, w);
    debug_assert_eq!(x.len(), c * h * w);
    debug_assert_eq!(col.len(), c * spec.kh * spec.kw * oh * ow);
    let s = spec.stride;
    let p = spec.pad as isize;
    let mut row = 0usize;
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for ki in 0..spec.kh {
            for kj in 0..spec.kw {
                let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * s) as isize - p + ki as isize;
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * s) as isize - p + kj as isize;
                        *d = if ix < 0 || ix >= w as isize { 0.0 } else { src_row[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Scatters a patch-matrix gradient back onto an image, accumulating overlaps.
pub fn col2im_acc(col: &[f64], c: usize, h: usize, w: usize, spec: &ConvSpec, x_grad: &mut [f64]) {
    let (oh, ow) = spec.out_hw(h, w);
    debug_assert_eq!(x_grad.len(), c * h * w);
    debug_assert_eq!(col.len(), c * spec.kh * spec.kw * oh * ow);
    let s = spec.stride;
    let p = spec.pad as isize;
    let mut row = 0usize;
    for ch in 0..c {
        let plane = &mut x_grad[ch * h * w..(ch + 1) * h * w];
        for ki in 0..spec.kh {
            for kj in 0..spec.kw {
                let src = &col[row * oh * ow..(row + 1) * oh * ow];
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * s) as isize - p + ki as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src_row = &src[oy * ow..(oy + 1) * ow];
                    for (ox, &g) in src_row.iter().enumerate() {
                        let ix = (ox * s) as isize - p + kj as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}
