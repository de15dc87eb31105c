//! 2-D cross-correlation with "same" zero padding, lowered to GEMM via im2col.

use super::{NnError, Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_top: usize,
    pad_left: usize,
    h_out: usize,
    w_out: usize,
}

impl Geometry {
    fn new(c_in: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize) -> Self {
        Self {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad_top: (kh - 1) / 2,
            pad_left: (kw - 1) / 2,
            h_out: (h - 1) / stride + 1,
            w_out: (w - 1) / stride + 1,
        }
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }

    /// Maps output coordinate + kernel offset to an input coordinate, if inside.
    /// Output columns `lo..hi` whose source column `ox + dx - pad_left`
    /// lies inside the input, for stride 1.
    #[inline]
    fn valid_cols(&self, dx: usize) -> (usize, usize) {
        let lo = self.pad_left.saturating_sub(dx).min(self.w_out);
        let hi = (self.w + self.pad_left).saturating_sub(dx).min(self.w_out).max(lo);
        (lo, hi)
    }

    #[inline]
    fn source(&self, o: usize, d: usize, pad: usize, limit: usize) -> Option<usize> {
        let i = (o * self.stride + d) as isize - pad as isize;
        (i >= 0 && (i as usize) < limit).then_some(i as usize)
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c_in {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let row = ((ci * g.kh + dy) * g.kw + dx) * p;
                let dst = &mut cols[row..row + p];
                for oy in 0..g.h_out {
                    let out_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    match g.source(oy, dy, g.pad_top, g.h) {
                        None => out_row.fill(T::zero()),
                        Some(iy) if g.stride == 1 => {
                            let src = &plane[iy * g.w..(iy + 1) * g.w];
                            let (lo, hi) = g.valid_cols(dx);
                            out_row[..lo].fill(T::zero());
                            out_row[hi..].fill(T::zero());
                            out_row[lo..hi].copy_from_slice(&src[lo + dx - g.pad_left..hi + dx - g.pad_left]);
                        }
                        Some(iy) => {
                            let src = &plane[iy * g.w..(iy + 1) * g.w];
                            for (ox, v) in out_row.iter_mut().enumerate() {
                                *v = match g.source(ox, dx, g.pad_left, g.w) {
                                    Some(ix) => src[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], g: &Geometry, dx_out: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c_in {
        let plane = &mut dx_out[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let row = ((ci * g.kh + dy) * g.kw + dx) * p;
                let src = &cols[row..row + p];
                for oy in 0..g.h_out {
                    let Some(iy) = g.source(oy, dy, g.pad_top, g.h) else {
                        continue;
                    };
                    if g.stride == 1 {
                        let (lo, hi) = g.valid_cols(dx);
                        let dst = &mut plane[iy * g.w + lo + dx - g.pad_left..iy * g.w + hi + dx - g.pad_left];
                        for (d, &v) in dst.iter_mut().zip(&src[oy * g.w_out + lo..oy * g.w_out + hi]) {
                            *d = *d + v;
                        }
                        continue;
                    }
                    for ox in 0..g.w_out {
                        if let Some(ix) = g.source(ox, dx, g.pad_left, g.w) {
                            plane[iy * g.w + ix] = plane[iy * g.w + ix] + src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_shapes<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
) -> Result<([usize; 4], [usize; 4], Geometry), NnError> {
    let [n, c_in, h, w] = input.dims4("conv input")?;
    let [c_out, k_in, kh, kw] = kernels.dims4("conv kernels")?;
    if k_in != c_in {
        return Err(NnError::ShapeMismatch(format!(
            "kernels expect {k_in} input channels, input has {c_in}"
        )));
    }
    if stride == 0 || kh == 0 || kw == 0 || h == 0 || w == 0 {
        return Err(NnError::ShapeMismatch(
            "stride, kernel and spatial dims must be positive".into(),
        ));
    }
    Ok((
        [n, c_in, h, w],
        [c_out, k_in, kh, kw],
        Geometry::new(c_in, h, w, kh, kw, stride),
    ))
}

/// Cross-correlation of `[N][Cin][H][W]` with `[Cout][Cin][kh][kw]` kernels
/// plus per-channel bias. With stride 1 the spatial size is preserved.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>, NnError> {
    let ([n, c_in, h, w], [c_out, ..], g) = check_shapes(input, kernels, stride)?;
    if bias.dims() != [c_out] {
        return Err(NnError::ShapeMismatch(format!(
            "bias dims {:?}, expected [{c_out}]",
            bias.dims()
        )));
    }
    let p = g.positions();
    let k = g.patch_len();
    let mut out = Tensor::zeros(&[n, c_out, g.h_out, g.w_out]);
    let mut cols = vec![T::zero(); k * p];
    let in_stride = c_in * h * w;
    for b in 0..n {
        im2col(&input.data()[b * in_stride..(b + 1) * in_stride], &g, &mut cols);
        let y = &mut out.data_mut()[b * c_out * p..(b + 1) * c_out * p];
        for (c, chunk) in y.chunks_exact_mut(p).enumerate() {
            chunk.fill(bias.data()[c]);
        }
        T::gemm(c_out, k, p, T::one(), kernels.data(), false, &cols, false, T::one(), y);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Exact gradients of [`conv2d_forward`]. Batch contributions to the kernel
/// and bias gradients are accumulated in batch order.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
) -> Result<ConvGrads<T>, NnError> {
    let ([n, c_in, h, w], [c_out, ..], g) = check_shapes(input, kernels, stride)?;
    if grad_out.dims() != [n, c_out, g.h_out, g.w_out] {
        return Err(NnError::ShapeMismatch(format!(
            "grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            [n, c_out, g.h_out, g.w_out]
        )));
    }
    let p = g.positions();
    let k = g.patch_len();
    let in_stride = c_in * h * w;
    let mut grad_input = Tensor::zeros(input.dims());
    let mut grad_kernels = Tensor::zeros(kernels.dims());
    let mut grad_bias = Tensor::zeros(&[c_out]);
    let mut cols = vec![T::zero(); k * p];
    let mut grad_cols = vec![T::zero(); k * p];
    for b in 0..n {
        let gy = &grad_out.data()[b * c_out * p..(b + 1) * c_out * p];
        for (c, chunk) in gy.chunks_exact(p).enumerate() {
            let s: T = chunk.iter().copied().sum();
            grad_bias.data_mut()[c] = grad_bias.data()[c] + s;
        }
        im2col(&input.data()[b * in_stride..(b + 1) * in_stride], &g, &mut cols);
        // dK += dY · colsᵀ
        T::gemm(
            c_out,
            p,
            k,
            T::one(),
            gy,
            false,
            &cols,
            true,
            T::one(),
            grad_kernels.data_mut(),
        );
        // dcols = Kᵀ · dY
        T::gemm(k, c_out, p, T::one(), kernels.data(), true, gy, false, T::zero(), &mut grad_cols);
        col2im_add(
            &grad_cols,
            &g,
            &mut grad_input.data_mut()[b * in_stride..(b + 1) * in_stride],
        );
    }
    Ok(ConvGrads {
        input: grad_input,
        kernels: grad_kernels,
        bias: grad_bias,
    })
}
