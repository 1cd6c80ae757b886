//! Dense matrix product kernel and the multiply-accumulate tally.

use std::cell::RefCell;
use std::collections::BTreeMap;

/// Operand layout: `Normal` means row-major `rows × cols`, `Transposed` means
/// the buffer holds the transpose in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    Normal,
    Transposed,
}

/// `c = a · b` (or `c += a · b` when `accumulate`), with `a: m × k`,
/// `b: k × n`, `c: m × n` row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_layout: Layout,
    b: &[f64],
    b_layout: Layout,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = match a_layout {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match b_layout {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the kernel touches given
    // these strides, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

thread_local! {
    static TALLY: RefCell<Option<BTreeMap<&'static str, u64>>> = const { RefCell::new(None) };
}

pub(crate) fn record_macs(op: &'static str, macs: u64) {
    TALLY.with(|t| {
        if let Some(map) = t.borrow_mut().as_mut() {
            *map.entry(op).or_insert(0) += macs;
        }
    });
}

/// Multiply-accumulate counts recorded by forward operations, keyed by
/// operation name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MacTally {
    pub by_op: BTreeMap<&'static str, u64>,
}

impl MacTally {
    pub fn total(&self) -> u64 {
        self.by_op.values().sum()
    }
}

/// Runs `f` while counting the multiply-accumulates of every matmul and
/// convolution forward pass on this thread. Nested calls are not supported;
/// the inner call would take over the tally.
pub fn with_mac_tally<R>(f: impl FnOnce() -> R) -> (R, MacTally) {
    TALLY.with(|t| *t.borrow_mut() = Some(BTreeMap::new()));
    let out = f();
    let by_op = TALLY.with(|t| t.borrow_mut().take()).unwrap_or_default();
    (out, MacTally { by_op })
}
