//! Raw numeric kernels on channel-major buffers (`channels × length`).

use super::{dim_err, Real, TensorResult};

/// Geometry of a 1-D convolution with zero padding.
///
/// The forward convolution maps length `L` to `(L + 2p - d(K-1) - 1) / s + 1`;
/// its transpose maps `M` back to `s · M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// Same-length padding for an odd kernel: output length is `ceil(L / stride)`.
    pub fn same(kernel: usize, stride: usize, dilation: usize) -> TensorResult<Self> {
        if kernel % 2 == 0 {
            return Err(dim_err(
                "conv1d",
                format!("kernel length {kernel} must be odd"),
            ));
        }
        if stride == 0 || dilation == 0 {
            return Err(super::TensorError::Config(
                "stride and dilation must be >= 1".into(),
            ));
        }
        Ok(Self {
            kernel,
            stride,
            dilation,
            padding: dilation * (kernel - 1) / 2,
        })
    }

    pub fn output_len(&self, input_len: usize) -> TensorResult<usize> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = input_len + 2 * self.padding;
        if padded < span {
            return Err(dim_err(
                "conv1d",
                format!("input length {input_len} shorter than receptive field {span}"),
            ));
        }
        Ok((padded - span) / self.stride + 1)
    }

    pub fn transposed_output_len(&self, input_len: usize) -> TensorResult<usize> {
        let out = self.stride * input_len;
        if self.output_len(out)? != input_len {
            return Err(super::TensorError::Config(format!(
                "transposed convolution cannot map length {input_len} to {out} with {self:?}"
            )));
        }
        Ok(out)
    }

    /// Range of output positions `j` whose tap `kk` lands inside `[0, lx)`,
    /// together with the input offset of `j = 0`.
    #[inline]
    fn tap_range(&self, kk: usize, lx: usize, ly: usize) -> (usize, usize, isize) {
        let off = (kk * self.dilation) as isize - self.padding as isize;
        let s = self.stride as isize;
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let room = lx as isize - off;
        let hi = if room <= 0 {
            0
        } else {
            ((room + s - 1) / s).min(ly as isize)
        };
        (lo as usize, hi.max(lo) as usize, off)
    }
}

#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dot product with eight independent accumulators so the loop vectorises.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (pa, pb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += pa[l] * pb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    let s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    s + tail
}

/// Unfolded input, one row per output position:
/// `cols[j, c·k + kk] = x[c, j·s + kk·d − p]`, zero where the tap falls in the
/// padding. Every layer then reduces to dot products of length `cin·k`,
/// which stay long even where the output is only a few points.
fn unfold<T: Real>(x: &[T], cin: usize, lx: usize, g: &ConvGeometry, ly: usize) -> Vec<T> {
    let k = g.kernel;
    let r = cin * k;
    let mut cols = vec![T::zero(); ly * r];
    for c in 0..cin {
        let xc = &x[c * lx..(c + 1) * lx];
        for kk in 0..k {
            let (lo, hi, off) = g.tap_range(kk, lx, ly);
            for j in lo..hi {
                cols[j * r + c * k + kk] = xc[(j as isize * g.stride as isize + off) as usize];
            }
        }
    }
    cols
}

/// Adjoint of [`unfold`]: scatter-adds rows back onto the input positions.
fn fold<T: Real>(cols: &[T], cin: usize, lx: usize, g: &ConvGeometry, ly: usize) -> Vec<T> {
    let k = g.kernel;
    let r = cin * k;
    let mut x = vec![T::zero(); cin * lx];
    for c in 0..cin {
        let xc = &mut x[c * lx..(c + 1) * lx];
        for kk in 0..k {
            let (lo, hi, off) = g.tap_range(kk, lx, ly);
            for j in lo..hi {
                xc[(j as isize * g.stride as isize + off) as usize] += cols[j * r + c * k + kk];
            }
        }
    }
    x
}

/// `y[o, j] = Σ_c Σ_k w[o, c, k] · x[c, j·s + k·d − p]`
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward<T: Real>(
    x: &[T],
    cin: usize,
    lx: usize,
    w: &[T],
    cout: usize,
    g: &ConvGeometry,
    ly: usize,
) -> Vec<T> {
    let r = cin * g.kernel;
    let cols = unfold(x, cin, lx, g, ly);
    let mut y = vec![T::zero(); cout * ly];
    for o in 0..cout {
        let wo = &w[o * r..(o + 1) * r];
        for j in 0..ly {
            y[o * ly + j] = dot(wo, &cols[j * r..(j + 1) * r]);
        }
    }
    y
}

/// Gradient of [`conv_forward`] with respect to its input; also the forward
/// pass of the transposed convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_input<T: Real>(
    gy: &[T],
    cout: usize,
    ly: usize,
    w: &[T],
    cin: usize,
    g: &ConvGeometry,
    lx: usize,
) -> Vec<T> {
    let r = cin * g.kernel;
    let mut gcols = vec![T::zero(); ly * r];
    for j in 0..ly {
        let row = &mut gcols[j * r..(j + 1) * r];
        for o in 0..cout {
            axpy(gy[o * ly + j], &w[o * r..(o + 1) * r], row);
        }
    }
    fold(&gcols, cin, lx, g, ly)
}

/// Gradient of [`conv_forward`] with respect to its weight.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_weight<T: Real>(
    gy: &[T],
    cout: usize,
    ly: usize,
    x: &[T],
    cin: usize,
    lx: usize,
    g: &ConvGeometry,
) -> Vec<T> {
    let r = cin * g.kernel;
    let cols = unfold(x, cin, lx, g, ly);
    let mut gw = vec![T::zero(); cout * r];
    for o in 0..cout {
        let gwo = &mut gw[o * r..(o + 1) * r];
        for j in 0..ly {
            axpy(gy[o * ly + j], &cols[j * r..(j + 1) * r], gwo);
        }
    }
    gw
}
