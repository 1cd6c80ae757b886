use crate::error::{Result, TensorError};
use crate::gemm::{gemm, record_macs, Layout};
use crate::tensor::Tensor;

impl Tensor {
    /// `[M×K] ⊗ [K×P] → [M×P]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(TensorError::shape("matmul", a, b));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data(), Layout::Normal, &other.data(), Layout::Normal, &mut out, false);
        record_macs("matmul", (m * k * n) as u64);
        Ok(Tensor::from_op(
            "matmul",
            out,
            vec![m, n],
            vec![self.clone(), other.clone()],
            move |g, p| {
                let ga = p[0].requires_grad().then(|| {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, Layout::Normal, &p[1].data(), Layout::Transposed, &mut ga, false);
                    ga
                });
                let gb = p[1].requires_grad().then(|| {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, &p[0].data(), Layout::Transposed, g, Layout::Normal, &mut gb, false);
                    gb
                });
                vec![ga, gb]
            },
        ))
    }

    /// Transpose of a 2-D tensor.
    pub fn t(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::dim("transpose", format!("expected 2-D, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let x = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        drop(x);
        Ok(Tensor::from_op("transpose", out, vec![c, r], vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    gx[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Affine map along the last axis: `x[..×Cin] · W[Cin×Cout] + b[Cout]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let cin = *self.shape().last().unwrap_or(&1);
        if weight.ndim() != 2 || weight.shape()[0] != cin || self.ndim() == 0 {
            return Err(TensorError::shape("linear", self.shape(), weight.shape()));
        }
        let cout = weight.shape()[1];
        let rows = self.numel() / cin.max(1);
        let flat = self.reshape(&[rows, cin])?;
        let mut y = flat.matmul(weight)?;
        if let Some(b) = bias {
            y = y.add_channel(b)?;
        }
        let mut out_shape = self.shape().to_vec();
        *out_shape.last_mut().unwrap() = cout;
        y.reshape(&out_shape)
    }
}
