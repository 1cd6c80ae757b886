//! Pointwise arithmetic, activations and last-axis channel broadcasts.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Logistic function, stable for large |x|.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self.data().iter().zip(other.data().iter()).map(|(a, b)| a + b).collect();
        Ok(Tensor::from_op(
            "add",
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            |g, _| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self.data().iter().zip(other.data().iter()).map(|(a, b)| a - b).collect();
        Ok(Tensor::from_op(
            "sub",
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            |g, _| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self.data().iter().zip(other.data().iter()).map(|(a, b)| a * b).collect();
        Ok(Tensor::from_op(
            "mul",
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            |g, p| {
                let ga = p[0].requires_grad().then(|| {
                    g.iter().zip(p[1].data().iter()).map(|(g, b)| g * b).collect()
                });
                let gb = p[1].requires_grad().then(|| {
                    g.iter().zip(p[0].data().iter()).map(|(g, a)| g * a).collect()
                });
                vec![ga, gb]
            },
        ))
    }

    /// Elementwise maximum; ties route the gradient to `self`.
    pub fn maximum(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("maximum", self, other)?;
        let pick_self: Vec<bool> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a >= b)
            .collect();
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a.max(*b))
            .collect();
        Ok(Tensor::from_op(
            "maximum",
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            move |g, _| {
                let ga = g.iter().zip(&pick_self).map(|(g, &s)| if s { *g } else { 0.0 }).collect();
                let gb = g.iter().zip(&pick_self).map(|(g, &s)| if s { 0.0 } else { *g }).collect();
                vec![Some(ga), Some(gb)]
            },
        ))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * c).collect();
        Tensor::from_op("scale", data, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().map(|v| v * c).collect())]
        })
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + c).collect();
        Tensor::from_op("add_scalar", data, self.shape().to_vec(), vec![self.clone()], |g, _| {
            vec![Some(g.to_vec())]
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let saved = out.clone();
        Tensor::from_op("sigmoid", out, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().zip(&saved).map(|(g, y)| g * y * (1.0 - y)).collect())]
        })
    }

    pub fn tanh(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|v| v.tanh()).collect();
        let saved = out.clone();
        Tensor::from_op("tanh", out, self.shape().to_vec(), vec![self.clone()], move |g, _| {
            vec![Some(g.iter().zip(&saved).map(|(g, y)| g * (1.0 - y * y)).collect())]
        })
    }

    pub fn relu(&self) -> Tensor {
        let out = self.data().iter().map(|v| v.max(0.0)).collect();
        Tensor::from_op("relu", out, self.shape().to_vec(), vec![self.clone()], |g, p| {
            let x = p[0].data();
            vec![Some(g.iter().zip(x.iter()).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect())]
        })
    }

    /// User-defined pointwise function with an explicit derivative. Used for
    /// one-off activations and for exercising the gradient checker.
    pub fn map_with_grad(
        &self,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64 + 'static,
    ) -> Tensor {
        let out = self.data().iter().map(|&v| f(v)).collect();
        Tensor::from_op("map", out, self.shape().to_vec(), vec![self.clone()], move |g, p| {
            let x = p[0].data();
            vec![Some(g.iter().zip(x.iter()).map(|(g, &x)| g * df(x)).collect())]
        })
    }

    fn channel_operand(&self, op: &'static str, v: &Tensor) -> Result<usize> {
        let c = v.numel();
        if v.ndim() != 1 || self.shape().last() != Some(&c) {
            return Err(TensorError::shape(op, self.shape(), v.shape()));
        }
        Ok(c)
    }

    /// `self[..., c] + v[c]`.
    pub fn add_channel(&self, v: &Tensor) -> Result<Tensor> {
        let c = self.channel_operand("add_channel", v)?;
        let vd = v.data();
        let data = self
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(vd.iter()).map(|(x, b)| x + b))
            .collect();
        Ok(Tensor::from_op(
            "add_channel",
            data,
            self.shape().to_vec(),
            vec![self.clone(), v.clone()],
            move |g, _| {
                let mut gv = vec![0.0; c];
                for row in g.chunks_exact(c) {
                    gv.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                vec![Some(g.to_vec()), Some(gv)]
            },
        ))
    }

    /// `self[..., c] * v[c]`, the channel-gating broadcast.
    pub fn mul_channel(&self, v: &Tensor) -> Result<Tensor> {
        let c = self.channel_operand("mul_channel", v)?;
        let vd = v.data();
        let data = self
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(vd.iter()).map(|(x, w)| x * w))
            .collect();
        Ok(Tensor::from_op(
            "mul_channel",
            data,
            self.shape().to_vec(),
            vec![self.clone(), v.clone()],
            move |g, p| {
                let gx = p[0].requires_grad().then(|| {
                    let w = p[1].data();
                    g.chunks_exact(c)
                        .flat_map(|row| row.iter().zip(w.iter()).map(|(g, w)| g * w))
                        .collect::<Vec<_>>()
                });
                let gv = p[1].requires_grad().then(|| {
                    let x = p[0].data();
                    let mut gv = vec![0.0; c];
                    for (grow, xrow) in g.chunks_exact(c).zip(x.chunks_exact(c)) {
                        for ((a, g), x) in gv.iter_mut().zip(grow).zip(xrow) {
                            *a += g * x;
                        }
                    }
                    gv
                });
                vec![gx, gv]
            },
        ))
    }
}
