//! Central finite-difference verification of analytic gradients.

use crate::error::{Result, TensorError};
use crate::rng::{uniform_vec, SeededRng};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input index, element index) of the worst element.
    pub worst: Option<(usize, usize)>,
    pub elements: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares the backward pass of `loss` against central differences with
/// step `h`, perturbing every element of every input. `loss` must rebuild
/// the graph from the current input values on each call.
pub fn check_gradients(inputs: &[Tensor], h: f64, loss: impl Fn() -> Result<Tensor>) -> Result<GradCheckReport> {
    for t in inputs {
        if !t.is_leaf() || !t.requires_grad() {
            return Err(TensorError::Usage("gradient check inputs must be tracked leaves".into()));
        }
        t.zero_grad();
    }
    loss()?.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        elements: 0,
    };
    for (ti, t) in inputs.iter().enumerate() {
        for i in 0..t.numel() {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + h;
            let plus = loss()?.item()?;
            t.data_mut()[i] = orig - h;
            let minus = loss()?.item()?;
            t.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[ti][i], numeric);
            report.elements += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((ti, i));
            }
        }
        t.zero_grad();
    }
    Ok(report)
}

/// Fixed random weights for reducing an output to a scalar, `Σ w ⊙ y`. A
/// random projection exercises every output element with distinct weights,
/// unlike a plain sum.
pub fn projection(shape: &[usize], rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(uniform_vec(rng, n, 1.0), shape).expect("length matches shape")
}

pub fn project(y: &Tensor, weights: &Tensor) -> Result<Tensor> {
    Ok(y.mul(weights)?.sum())
}

/// One named check from a suite.
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

fn leaf(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::param(uniform_vec(rng, n, 1.0), shape).expect("length matches shape")
}

fn positive_leaf(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let t = leaf(rng, shape);
    t.data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.1);
    t
}

/// Checks every differentiable primitive on random inputs of at most 64
/// elements each, reducing outputs with a fixed random projection.
pub fn primitive_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = crate::rng::seeded(seed);
    let mut out = Vec::new();
    let h = DEFAULT_STEP;

    macro_rules! check {
        ($name:expr, [$($input:expr),+], $out_shape:expr, |$($arg:ident),+| $body:expr) => {{
            let inputs = vec![$($input),+];
            let w = projection(&$out_shape, &mut rng);
            let report = {
                let ins = inputs.clone();
                check_gradients(&inputs, h, move || {
                    let [$($arg),+] = ins.as_slice() else { unreachable!() };
                    project(&$body?, &w)
                })?
            };
            out.push(SuiteEntry { name: $name.to_string(), report });
        }};
    }

    check!("add", [leaf(&mut rng, &[3, 4]), leaf(&mut rng, &[3, 4])], [3, 4], |a, b| a.add(b));
    check!("sub", [leaf(&mut rng, &[3, 4]), leaf(&mut rng, &[3, 4])], [3, 4], |a, b| a.sub(b));
    check!("mul", [leaf(&mut rng, &[3, 4]), leaf(&mut rng, &[3, 4])], [3, 4], |a, b| a.mul(b));
    check!("maximum", [leaf(&mut rng, &[12]), leaf(&mut rng, &[12])], [12], |a, b| a.maximum(b));
    check!("scale", [leaf(&mut rng, &[5])], [5], |a| Ok::<_, TensorError>(a.scale(-1.7)));
    check!("add_scalar", [leaf(&mut rng, &[5])], [5], |a| Ok::<_, TensorError>(a.add_scalar(0.3)));
    check!("sigmoid", [leaf(&mut rng, &[10])], [10], |a| Ok::<_, TensorError>(a.scale(3.0).sigmoid()));
    check!("tanh", [leaf(&mut rng, &[10])], [10], |a| Ok::<_, TensorError>(a.scale(2.0).tanh()));
    check!("relu", [leaf(&mut rng, &[16])], [16], |a| Ok::<_, TensorError>(a.relu()));
    check!("add_channel", [leaf(&mut rng, &[2, 3, 4]), leaf(&mut rng, &[4])], [2, 3, 4], |x, v| x.add_channel(v));
    check!("mul_channel", [leaf(&mut rng, &[2, 3, 4]), leaf(&mut rng, &[4])], [2, 3, 4], |x, v| x.mul_channel(v));
    check!("sum", [leaf(&mut rng, &[7])], [], |a| Ok::<_, TensorError>(a.sum()));
    check!("mean", [leaf(&mut rng, &[7])], [], |a| Ok::<_, TensorError>(a.mean()));
    check!("sum_axis", [leaf(&mut rng, &[2, 3, 4])], [2, 4], |a| a.sum_axis(1));
    check!("mean_axis", [leaf(&mut rng, &[5, 4])], [4], |a| a.mean_axis(0));
    check!("softmax_last", [leaf(&mut rng, &[3, 5])], [3, 5], |a| a.scale(2.0).softmax(1));
    check!("softmax_first", [leaf(&mut rng, &[4, 3])], [4, 3], |a| a.softmax(0));
    check!("l2_normalize", [leaf(&mut rng, &[6])], [6], |a| Ok::<_, TensorError>(a.l2_normalize(1e-12)));
    check!("matmul", [leaf(&mut rng, &[3, 4]), leaf(&mut rng, &[4, 5])], [3, 5], |a, b| a.matmul(b));
    check!("transpose", [leaf(&mut rng, &[3, 4])], [4, 3], |a| a.t());
    check!("linear", [leaf(&mut rng, &[2, 3, 4]), leaf(&mut rng, &[4, 3]), leaf(&mut rng, &[3])], [2, 3, 3], |x, w, b| x.linear(w, Some(b)));
    check!("reshape", [leaf(&mut rng, &[2, 6])], [3, 4], |a| a.reshape(&[3, 4]));
    check!("concat_last", [leaf(&mut rng, &[3, 2]), leaf(&mut rng, &[3, 3])], [3, 5], |a, b| Tensor::concat_last(&[a.clone(), b.clone()]));
    check!("concat_broadcast", [leaf(&mut rng, &[2, 2, 3]), leaf(&mut rng, &[2])], [2, 2, 5], |x, v| x.concat_broadcast(v));
    check!("select_first", [leaf(&mut rng, &[3, 2, 2])], [2, 2], |a| a.select_first(1));
    check!("stack_first", [leaf(&mut rng, &[2, 3]), leaf(&mut rng, &[2, 3])], [2, 2, 3], |a, b| Tensor::stack_first(&[a.clone(), b.clone()]));
    check!("gather_rows", [leaf(&mut rng, &[4, 3])], [4, 3], |t| t.gather_rows(&[2, 0, 2, 3]));
    check!("conv2d", [leaf(&mut rng, &[4, 4, 2]), leaf(&mut rng, &[3, 3, 2, 3]), leaf(&mut rng, &[3])], [4, 4, 3], |x, k, b| x.conv2d(k, Some(b), 1, 1));
    check!("conv2d_stride2", [leaf(&mut rng, &[5, 5, 2]), leaf(&mut rng, &[3, 3, 2, 2])], [3, 3, 2], |x, k| x.conv2d(k, None, 2, 1));
    check!("conv3d", [leaf(&mut rng, &[3, 3, 3, 1]), leaf(&mut rng, &[3, 3, 3, 1, 2]), leaf(&mut rng, &[2])], [3, 3, 3, 2], |x, k, b| x.conv3d(k, Some(b), [1, 1, 1], [1, 1, 1]));
    check!("conv3d_stride", [leaf(&mut rng, &[2, 4, 4, 1]), leaf(&mut rng, &[3, 3, 3, 1, 2])], [2, 2, 2, 2], |x, k| x.conv3d(k, None, [1, 2, 2], [1, 1, 1]));
    check!("upsample_bilinear_2x", [leaf(&mut rng, &[2, 3, 2])], [4, 6, 2], |a| a.upsample_bilinear_2x());
    let target = Tensor::new((0..12).map(|i| (i % 3 == 0) as u8 as f64).collect(), &[3, 4])?;
    check!("bce_with_logits", [leaf(&mut rng, &[3, 4])], [], |z| z.scale(3.0).bce_with_logits(&target));
    check!("fan_out_sum", [positive_leaf(&mut rng, &[6])], [6], |a| a.mul(a)?.add(&a.tanh()));
    Ok(out)
}
