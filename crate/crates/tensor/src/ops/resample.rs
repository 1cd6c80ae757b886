use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Corner-aligned linear taps from `src` samples to `2·src` samples:
/// `(lower index, upper index, upper weight)` per output index.
fn taps(src: usize) -> Vec<(usize, usize, f64)> {
    let dst = 2 * src;
    (0..dst)
        .map(|o| {
            if src == 1 {
                return (0, 0, 0.0);
            }
            let pos = o as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

impl Tensor {
    /// Bilinear 2× upsampling of `[H×W×C]` with corner-aligned sampling:
    /// output corners coincide with input corners.
    pub fn upsample_bilinear_2x(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 3 || s[0] == 0 || s[1] == 0 {
            return Err(TensorError::dim("upsample_bilinear_2x", format!("expected H×W×C, got {s:?}")));
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let (ty, tx) = (taps(h), taps(w));
        let (oh, ow) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = vec![0.0; oh * ow * c];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let dst = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
                for (iy, fy) in [(y0, 1.0 - wy), (y1, wy)] {
                    for (ix, fx) in [(x0, 1.0 - wx), (x1, wx)] {
                        let f = fy * fx;
                        if f == 0.0 {
                            continue;
                        }
                        let src = &x[(iy * w + ix) * c..(iy * w + ix + 1) * c];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += f * s);
                    }
                }
            }
        }
        drop(x);
        Ok(Tensor::from_op("upsample_bilinear_2x", out, vec![oh, ow, c], vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; h * w * c];
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let src = &g[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
                    for (iy, fy) in [(y0, 1.0 - wy), (y1, wy)] {
                        for (ix, fx) in [(x0, 1.0 - wx), (x1, wx)] {
                            let f = fy * fx;
                            if f == 0.0 {
                                continue;
                            }
                            let dst = &mut gx[(iy * w + ix) * c..(iy * w + ix + 1) * c];
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d += f * s);
                        }
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}
