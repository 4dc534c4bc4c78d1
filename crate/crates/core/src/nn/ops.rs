//! Batched layer kernels. All buffers are row-major with the batch leftmost.

use crate::scalar::Real;

/// Dot product with eight fixed accumulation lanes.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            lanes[l] = lanes[l] + xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn dense_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], inputs: usize, outputs: usize) -> Vec<T> {
    let batch = x.len() / inputs;
    let mut y = Vec::with_capacity(batch * outputs);
    for row in x.chunks_exact(inputs) {
        for o in 0..outputs {
            y.push(bias[o] + dot(&weight[o * inputs..(o + 1) * inputs], row));
        }
    }
    y
}

/// Returns (input grad, weight grad, bias grad).
pub fn dense_backward<T: Real>(
    x: &[T],
    grad_out: &[T],
    weight: &[T],
    inputs: usize,
    outputs: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let batch = x.len() / inputs;
    let mut gx = vec![T::zero(); batch * inputs];
    let mut gw = vec![T::zero(); outputs * inputs];
    let mut gb = vec![T::zero(); outputs];
    for b in 0..batch {
        let xr = &x[b * inputs..(b + 1) * inputs];
        let gyr = &grad_out[b * outputs..(b + 1) * outputs];
        let gxr = &mut gx[b * inputs..(b + 1) * inputs];
        for (o, &g) in gyr.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            gb[o] = gb[o] + g;
            axpy(g, xr, &mut gw[o * inputs..(o + 1) * inputs]);
            axpy(g, &weight[o * inputs..(o + 1) * inputs], gxr);
        }
    }
    (gx, gw, gb)
}

/// Geometry of a 2-D convolution or pooling window over `[c, h, w]` inputs.
#[derive(Clone, Copy, Debug)]
pub struct Window2d {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window2d {
    fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Input coordinate for output position `o` and kernel offset `k`, or
    /// `None` inside the zero padding.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + k).checked_sub(self.padding)?;
        (p < extent).then_some(p)
    }
}

pub fn conv2d_forward<T: Real>(x: &[T], weight: &[T], bias: &[T], out_channels: usize, g: &Window2d) -> Vec<T> {
    let in_len = g.in_len();
    let plane = g.out_h * g.out_w;
    let ksize = g.kernel_h * g.kernel_w;
    let batch = x.len() / in_len;
    let mut y = vec![T::zero(); batch * out_channels * plane];
    for b in 0..batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        for oc in 0..out_channels {
            let yplane = &mut y[(b * out_channels + oc) * plane..(b * out_channels + oc + 1) * plane];
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut acc = bias[oc];
                    for ic in 0..g.channels {
                        let wk = &weight[(oc * g.channels + ic) * ksize..(oc * g.channels + ic + 1) * ksize];
                        let xc = &xb[ic * g.height * g.width..(ic + 1) * g.height * g.width];
                        for ky in 0..g.kernel_h {
                            let Some(iy) = g.source(oy, ky, g.height) else { continue };
                            for kx in 0..g.kernel_w {
                                let Some(ix) = g.source(ox, kx, g.width) else { continue };
                                acc = acc + wk[ky * g.kernel_w + kx] * xc[iy * g.width + ix];
                            }
                        }
                    }
                    yplane[oy * g.out_w + ox] = acc;
                }
            }
        }
    }
    y
}

pub fn conv2d_backward<T: Real>(
    x: &[T],
    grad_out: &[T],
    weight: &[T],
    out_channels: usize,
    g: &Window2d,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let in_len = g.in_len();
    let plane = g.out_h * g.out_w;
    let ksize = g.kernel_h * g.kernel_w;
    let batch = x.len() / in_len;
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); weight.len()];
    let mut gb = vec![T::zero(); out_channels];
    for b in 0..batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        let gxb = &mut gx[b * in_len..(b + 1) * in_len];
        for oc in 0..out_channels {
            let gyp = &grad_out[(b * out_channels + oc) * plane..(b * out_channels + oc + 1) * plane];
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let gy = gyp[oy * g.out_w + ox];
                    if gy == T::zero() {
                        continue;
                    }
                    gb[oc] = gb[oc] + gy;
                    for ic in 0..g.channels {
                        let base_w = (oc * g.channels + ic) * ksize;
                        let base_x = ic * g.height * g.width;
                        for ky in 0..g.kernel_h {
                            let Some(iy) = g.source(oy, ky, g.height) else { continue };
                            for kx in 0..g.kernel_w {
                                let Some(ix) = g.source(ox, kx, g.width) else { continue };
                                let wi = base_w + ky * g.kernel_w + kx;
                                let xi = base_x + iy * g.width + ix;
                                gw[wi] = gw[wi] + gy * xb[xi];
                                gxb[xi] = gxb[xi] + gy * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

/// Max pooling; also returns, per output, the flat input index of the winner
/// (first maximum in row-major window order).
pub fn maxpool_forward<T: Real>(x: &[T], g: &Window2d) -> (Vec<T>, Vec<usize>) {
    let in_len = g.in_len();
    let plane = g.out_h * g.out_w;
    let batch = x.len() / in_len;
    let mut y = Vec::with_capacity(batch * g.channels * plane);
    let mut argmax = Vec::with_capacity(y.capacity());
    for b in 0..batch {
        for c in 0..g.channels {
            let base = b * in_len + c * g.height * g.width;
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut best = base + (oy * g.stride) * g.width + ox * g.stride;
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            let idx = base + (oy * g.stride + ky) * g.width + ox * g.stride + kx;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    y.push(x[best]);
                    argmax.push(best);
                }
            }
        }
    }
    (y, argmax)
}

pub fn maxpool_backward<T: Real>(grad_out: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut gx = vec![T::zero(); input_len];
    for (&g, &i) in grad_out.iter().zip(argmax) {
        gx[i] = gx[i] + g;
    }
    gx
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<T: Real>(x: &[T], width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut sum = T::zero();
        for &v in row {
            let e = (v - max).exp();
            sum = sum + e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v = *v / sum;
        }
    }
    out
}

pub fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}
