use crate::error::{Result, TensorError};
use crate::ops::elementwise::sigmoid_scalar;
use crate::tensor::Tensor;

impl Tensor {
    /// Mean binary cross-entropy of logits against a {0, 1} target, in the
    /// form `max(z, 0) − z·y + ln(1 + e^{−|z|})`.
    pub fn bce_with_logits(&self, target: &Tensor) -> Result<Tensor> {
        if self.shape() != target.shape() {
            return Err(TensorError::shape("bce_with_logits", self.shape(), target.shape()));
        }
        let y = target.to_vec();
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(TensorError::Validation(format!("bce target must be 0 or 1, found {bad}")));
        }
        let n = y.len().max(1) as f64;
        let total: f64 = self
            .data()
            .iter()
            .zip(&y)
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum();
        Ok(Tensor::from_op("bce_with_logits", vec![total / n], Vec::new(), vec![self.clone()], move |g, p| {
            let z = p[0].data();
            let scale = g[0] / n;
            vec![Some(z.iter().zip(&y).map(|(&z, &t)| scale * (sigmoid_scalar(z) - t)).collect())]
        }))
    }
}
