//! Reshape, concatenation, slicing, stacking and row gathers.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(TensorError::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op("reshape", self.to_vec(), shape.to_vec(), vec![self.clone()], |g, _| {
            vec![Some(g.to_vec())]
        }))
    }

    /// Concatenates along the last axis. All leading axes must agree.
    pub fn concat_last(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Usage("concat_last of zero tensors".into()))?;
        if first.ndim() == 0 {
            return Err(TensorError::dim("concat_last", "scalar operand"));
        }
        let lead = &first.shape()[..first.ndim() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            if p.ndim() != first.ndim() || &p.shape()[..p.ndim() - 1] != lead {
                return Err(TensorError::shape("concat_last", first.shape(), p.shape()));
            }
            widths.push(*p.shape().last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        let datas: Vec<_> = parts.iter().map(|p| p.data()).collect();
        for r in 0..rows {
            for (d, &w) in datas.iter().zip(&widths) {
                out.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        drop(datas);
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(Tensor::from_op("concat_last", out, shape, parts.to_vec(), move |g, p| {
            let mut offset = 0;
            widths
                .iter()
                .zip(p)
                .map(|(&w, parent)| {
                    let start = offset;
                    offset += w;
                    parent.requires_grad().then(|| {
                        (0..rows)
                            .flat_map(|r| g[r * total + start..r * total + start + w].iter().copied())
                            .collect()
                    })
                })
                .collect()
        }))
    }

    /// Appends the vector `v[D]` to the channels of every position:
    /// `[..×C] → [..×(C+D)]`.
    pub fn concat_broadcast(&self, v: &Tensor) -> Result<Tensor> {
        if v.ndim() != 1 || self.ndim() == 0 {
            return Err(TensorError::shape("concat_broadcast", self.shape(), v.shape()));
        }
        let c = *self.shape().last().unwrap();
        let d = v.numel();
        let rows = self.numel() / c.max(1);
        let total = c + d;
        let mut out = Vec::with_capacity(rows * total);
        {
            let x = self.data();
            let vd = v.data();
            for r in 0..rows {
                out.extend_from_slice(&x[r * c..(r + 1) * c]);
                out.extend_from_slice(&vd);
            }
        }
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = total;
        Ok(Tensor::from_op(
            "concat_broadcast",
            out,
            shape,
            vec![self.clone(), v.clone()],
            move |g, _| {
                let mut gx = Vec::with_capacity(rows * c);
                let mut gv = vec![0.0; d];
                for row in g.chunks_exact(total) {
                    gx.extend_from_slice(&row[..c]);
                    gv.iter_mut().zip(&row[c..]).for_each(|(a, b)| *a += b);
                }
                vec![Some(gx), Some(gv)]
            },
        ))
    }

    /// Index `i` of the first axis, dropping that axis.
    pub fn select_first(&self, i: usize) -> Result<Tensor> {
        let s = self.shape();
        if s.is_empty() || i >= s[0] {
            return Err(TensorError::dim("select_first", format!("index {i} out of range for {s:?}")));
        }
        let len: usize = s[1..].iter().product();
        let n = s[0];
        let out = self.data()[i * len..(i + 1) * len].to_vec();
        Ok(Tensor::from_op("select_first", out, s[1..].to_vec(), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; n * len];
            gx[i * len..(i + 1) * len].copy_from_slice(g);
            vec![Some(gx)]
        }))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack_first(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Usage("stack_first of zero tensors".into()))?;
        for p in parts {
            if p.shape() != first.shape() {
                return Err(TensorError::shape("stack_first", first.shape(), p.shape()));
            }
        }
        let len = first.numel();
        let mut out = Vec::with_capacity(len * parts.len());
        for p in parts {
            out.extend_from_slice(&p.data());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(first.shape());
        Ok(Tensor::from_op("stack_first", out, shape, parts.to_vec(), move |g, p| {
            p.iter()
                .enumerate()
                .map(|(i, parent)| parent.requires_grad().then(|| g[i * len..(i + 1) * len].to_vec()))
                .collect()
        }))
    }

    /// Rows `ids` of a `[V×D]` table, as `[N×D]`.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::dim("gather_rows", format!("expected 2-D table, got {s:?}")));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::dim("gather_rows", format!("row {bad} out of range for {v} rows")));
        }
        let table = self.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&table[i * d..(i + 1) * d]);
        }
        drop(table);
        let ids = ids.to_vec();
        Ok(Tensor::from_op("gather_rows", out, vec![ids.len(), d], vec![self.clone()], move |g, _| {
            let mut gt = vec![0.0; v * d];
            for (r, &i) in ids.iter().enumerate() {
                gt[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(a, b)| *a += b);
            }
            vec![Some(gt)]
        }))
    }
}
