//! Reductions, axis softmax and vector normalization.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Splits a shape around `axis` into (outer, dim, inner) extents.
fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::dim(op, format!("axis {axis} out of range for {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl Tensor {
    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![total], Vec::new(), vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums out `axis`, dropping it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let (outer, dim, inner) = split_axis("sum_axis", self.shape(), axis)?;
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &x[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                out[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        drop(x);
        Ok(Tensor::from_op("sum_axis", out, shape, vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; outer * dim * inner];
            for o in 0..outer {
                for d in 0..dim {
                    gx[(o * dim + d) * inner..(o * dim + d + 1) * inner]
                        .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Arithmetic mean over `axis`; averaging divides by the axis length.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        let dim = *self
            .shape()
            .get(axis)
            .ok_or_else(|| TensorError::dim("mean_axis", format!("axis {axis} out of range")))?;
        if dim == 0 {
            return Err(TensorError::dim("mean_axis", "empty axis"));
        }
        Ok(self.sum_axis(axis)?.scale(1.0 / dim as f64))
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, dim, inner) = split_axis("softmax", self.shape(), axis)?;
        if dim == 0 {
            return Err(TensorError::dim("softmax", "empty axis"));
        }
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |d: usize| (o * dim + d) * inner + i;
                let m = (0..dim).map(|d| x[idx(d)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for d in 0..dim {
                    let e = (x[idx(d)] - m).exp();
                    y[idx(d)] = e;
                    z += e;
                }
                for d in 0..dim {
                    y[idx(d)] /= z;
                }
            }
        }
        drop(x);
        let saved = y.clone();
        Ok(Tensor::from_op("softmax", y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |d: usize| (o * dim + d) * inner + i;
                    let dot: f64 = (0..dim).map(|d| g[idx(d)] * saved[idx(d)]).sum();
                    for d in 0..dim {
                        gx[idx(d)] = saved[idx(d)] * (g[idx(d)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }

    /// `x / max(‖x‖₂, eps)` over all elements.
    pub fn l2_normalize(&self, eps: f64) -> Tensor {
        let x = self.to_vec();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let denom = norm.max(eps);
        let y: Vec<f64> = x.iter().map(|v| v / denom).collect();
        let saved = y.clone();
        let clamped = norm <= eps;
        Tensor::from_op("l2_normalize", y, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            if clamped {
                return vec![Some(g.iter().map(|g| g / denom).collect())];
            }
            let dot: f64 = g.iter().zip(&saved).map(|(g, y)| g * y).sum();
            vec![Some(g.iter().zip(&saved).map(|(g, y)| (g - y * dot) / denom).collect())]
        })
    }
}
