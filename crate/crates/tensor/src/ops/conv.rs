//! Channels-last 2-D and 3-D cross-correlation via im2col and one GEMM.
//!
//! Input `[T×H×W×Cin]`, kernel `[kt×kh×kw×Cin×Cout]`. The kernel in row-major
//! order is already the `(kt·kh·kw·Cin) × Cout` matrix the patch matrix is
//! multiplied by, so no kernel reshuffle is needed. 2-D convolution is the
//! `T = kt = 1` case.

use crate::error::{Result, TensorError};
use crate::gemm::{gemm, record_macs, Layout};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geometry {
    input: [usize; 3],
    channels: usize,
    kernel: [usize; 3],
    out_channels: usize,
    stride: [usize; 3],
    padding: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn new(
        op: &'static str,
        input: [usize; 3],
        channels: usize,
        kernel: [usize; 3],
        out_channels: usize,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        let mut output = [0; 3];
        for a in 0..3 {
            if kernel[a] % 2 == 0 {
                return Err(TensorError::dim(op, format!("kernel extents must be odd, got {kernel:?}")));
            }
            if stride[a] == 0 {
                return Err(TensorError::dim(op, "stride must be positive"));
            }
            let padded = input[a] + 2 * padding[a];
            if kernel[a] > padded {
                return Err(TensorError::dim(
                    op,
                    format!("kernel {kernel:?} larger than padded input {input:?} (padding {padding:?})"),
                ));
            }
            output[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Ok(Self {
            input,
            channels,
            kernel,
            out_channels,
            stride,
            padding,
            output,
        })
    }

    fn positions(&self) -> usize {
        self.output.iter().product()
    }

    fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.channels
    }

    fn input_len(&self) -> usize {
        self.input.iter().product::<usize>() * self.channels
    }

    /// Calls `f(patch_offset, input_offset)` for every in-bounds tap, where
    /// both offsets address a run of `channels` contiguous values.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let [t, h, w] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [ot_n, oy_n, ox_n] = self.output;
        let c = self.channels;
        let k = self.patch_len();
        let mut pos = 0;
        for ot in 0..ot_n {
            for oy in 0..oy_n {
                for ox in 0..ox_n {
                    let base = pos * k;
                    for dt in 0..kt {
                        let it = (ot * self.stride[0] + dt) as isize - self.padding[0] as isize;
                        if it < 0 || it >= t as isize {
                            continue;
                        }
                        for dy in 0..kh {
                            let iy = (oy * self.stride[1] + dy) as isize - self.padding[1] as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for dx in 0..kw {
                                let ix = (ox * self.stride[2] + dx) as isize - self.padding[2] as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let tap = (dt * kh + dy) * kw + dx;
                                let src = ((it as usize * h + iy as usize) * w + ix as usize) * c;
                                f(base + tap * c, src);
                            }
                        }
                    }
                    pos += 1;
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let c = self.channels;
        let mut cols = vec![0.0; self.positions() * self.patch_len()];
        self.for_each_tap(|dst, src| cols[dst..dst + c].copy_from_slice(&x[src..src + c]));
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let c = self.channels;
        let mut x = vec![0.0; self.input_len()];
        self.for_each_tap(|dst, src| {
            x[src..src + c].iter_mut().zip(&cols[dst..dst + c]).for_each(|(a, b)| *a += b);
        });
        x
    }
}

fn convolve(
    op: &'static str,
    x: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    geom: Geometry,
    out_shape: Vec<usize>,
) -> Result<Tensor> {
    let (p, k, o) = (geom.positions(), geom.patch_len(), geom.out_channels);
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(TensorError::shape(op, kernel.shape(), b.shape()));
        }
    }
    let cols = geom.im2col(&x.data());
    let mut out = vec![0.0; p * o];
    gemm(p, k, o, &cols, Layout::Normal, &kernel.data(), Layout::Normal, &mut out, false);
    record_macs(op, (p * k * o) as u64);
    if let Some(b) = bias {
        let bd = b.data();
        for row in out.chunks_exact_mut(o) {
            row.iter_mut().zip(bd.iter()).for_each(|(v, b)| *v += b);
        }
    }

    let mut parents = vec![x.clone(), kernel.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    // The patch matrix is needed again only for the kernel gradient.
    let saved_cols = kernel.requires_grad().then_some(cols);
    Ok(Tensor::from_op(op, out, out_shape, parents, move |g, parents| {
        let gx = parents[0].requires_grad().then(|| {
            let mut gcols = vec![0.0; p * k];
            gemm(p, o, k, g, Layout::Normal, &parents[1].data(), Layout::Transposed, &mut gcols, false);
            geom.col2im(&gcols)
        });
        let gk = parents[1].requires_grad().then(|| {
            let cols = saved_cols.as_ref().expect("patches saved when kernel is tracked");
            let mut gk = vec![0.0; k * o];
            gemm(k, p, o, cols, Layout::Transposed, g, Layout::Normal, &mut gk, false);
            gk
        });
        let mut grads = vec![gx, gk];
        if parents.len() == 3 {
            let mut gb = vec![0.0; o];
            for row in g.chunks_exact(o) {
                gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            grads.push(Some(gb));
        }
        grads
    }))
}

impl Tensor {
    /// `[H×W×Cin] ⋆ [kh×kw×Cin×Cout] → [H'×W'×Cout]`,
    /// `H' = ⌊(H + 2p − kh)/stride⌋ + 1`.
    pub fn conv2d(&self, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
        let (xs, ks) = (self.shape(), kernel.shape());
        if xs.len() != 3 || ks.len() != 4 || ks[2] != xs[2] {
            return Err(TensorError::shape("conv2d", xs, ks));
        }
        let geom = Geometry::new(
            "conv2d",
            [1, xs[0], xs[1]],
            xs[2],
            [1, ks[0], ks[1]],
            ks[3],
            [1, stride, stride],
            [0, padding, padding],
        )?;
        let out_shape = vec![geom.output[1], geom.output[2], ks[3]];
        convolve("conv2d", self, kernel, bias, geom, out_shape)
    }

    /// `[T×H×W×Cin] ⋆ [kt×kh×kw×Cin×Cout] → [T'×H'×W'×Cout]` with per-axis
    /// stride and padding in (t, h, w) order.
    pub fn conv3d(
        &self,
        kernel: &Tensor,
        bias: Option<&Tensor>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Tensor> {
        let (xs, ks) = (self.shape(), kernel.shape());
        if xs.len() != 4 || ks.len() != 5 || ks[3] != xs[3] {
            return Err(TensorError::shape("conv3d", xs, ks));
        }
        let geom = Geometry::new(
            "conv3d",
            [xs[0], xs[1], xs[2]],
            xs[3],
            [ks[0], ks[1], ks[2]],
            ks[4],
            stride,
            padding,
        )?;
        let mut out_shape = geom.output.to_vec();
        out_shape.push(ks[4]);
        convolve("conv3d", self, kernel, bias, geom, out_shape)
    }
}

/// Output extent of a convolution along one axis.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}
