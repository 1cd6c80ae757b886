//! The [`Tensor`] handle and the reverse-mode graph it records.
//!
//! Every operation whose inputs require gradients records a node holding its
//! parents and a backward closure. [`Tensor::backward`] walks those nodes in
//! reverse topological order and accumulates gradients into the leaves.
//! Intermediate gradients live only for the duration of the walk.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};

/// Maps the upstream gradient to one optional gradient per parent.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[Tensor]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: Cell<bool>,
    node: Option<Node>,
}

/// Dense row-major `f64` array with an optional autodiff node.
///
/// Cloning is cheap and shares storage; a graph built from a tensor keeps it
/// alive. Tensors are confined to one thread.
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.0.data.borrow();
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.0.shape);
        if data.len() <= 16 {
            s.field("data", &*data);
        } else {
            s.field("numel", &data.len());
        }
        if let Some(node) = &self.0.node {
            s.field("op", &node.op);
        }
        s.field("requires_grad", &self.requires_grad()).finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel_of(shape) != data.len() {
            return Err(TensorError::dim(
                "new",
                format!("shape {shape:?} needs {} values, got {}", numel_of(shape), data.len()),
            ));
        }
        Ok(Self::leaf(data, shape.to_vec(), false))
    }

    /// Leaf that accumulates gradients.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let t = Self::new(data, shape)?;
        t.0.requires_grad.set(true);
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::leaf(vec![0.0; numel_of(shape)], shape.to_vec(), false)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::leaf(vec![value; numel_of(shape)], shape.to_vec(), false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(vec![value], Vec::new(), false)
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Self::leaf(data.to_vec(), vec![data.len()], false)
    }

    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Inner {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad: Cell::new(requires_grad),
            node: None,
        }))
    }

    /// Builds the result of an operation. A node is recorded only when some
    /// parent requires gradients.
    pub(crate) fn from_op(
        op: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64], &[Tensor]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len(), "{op}: shape/data mismatch");
        let tracked = parents.iter().any(Tensor::requires_grad);
        let node = tracked.then(|| Node {
            op,
            parents,
            backward: Box::new(backward),
        });
        Tensor(Rc::new(Inner {
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad: Cell::new(tracked),
            node,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.0.shape)
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values. Only meaningful on leaves; mutating an
    /// interior node does not re-run anything downstream.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        let data = self.data();
        if data.len() != 1 {
            return Err(TensorError::Usage(format!(
                "item() on tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(data[0])
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad.get()
    }

    /// Toggles gradient tracking on a leaf. Interior nodes keep the flag they
    /// were built with.
    pub fn set_requires_grad(&self, on: bool) {
        if self.0.node.is_none() {
            self.0.requires_grad.set(on);
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    /// Same storage as `other`.
    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Copy of the values with no graph attached.
    pub fn detach(&self) -> Tensor {
        Self::leaf(self.to_vec(), self.0.shape.clone(), false)
    }

    fn key(&self) -> *const Inner {
        Rc::as_ptr(&self.0)
    }

    fn accumulate_leaf_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a single-element tensor. Leaf gradients are
    /// summed into, so several backward passes before an optimizer step
    /// accumulate.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Usage(format!(
                "backward() needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(TensorError::Usage(
                "backward() on a tensor that does not require gradients".into(),
            ));
        }
        if self.is_leaf() {
            self.accumulate_leaf_grad(&[1.0]);
            return Ok(());
        }

        let order = self.topological_order();
        let mut pending: HashMap<*const Inner, Vec<f64>> = HashMap::new();
        pending.insert(self.key(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.key()) else {
                continue;
            };
            let node = t.0.node.as_ref().expect("ordered tensors are interior");
            let parent_grads = (node.backward)(&g, &node.parents);
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op);
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel(), "{} grad size", node.op);
                if parent.is_leaf() {
                    parent.accumulate_leaf_grad(&pg);
                } else {
                    match pending.get_mut(&parent.key()) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => {
                            pending.insert(parent.key(), pg);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Interior nodes reachable from `self`, parents before children.
    fn topological_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited: HashSet<*const Inner> = HashSet::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.key()) {
                continue;
            }
            let parents: Vec<Tensor> = t
                .0
                .node
                .as_ref()
                .map(|n| {
                    n.parents
                        .iter()
                        .filter(|p| !p.is_leaf() && !visited.contains(&p.key()))
                        .cloned()
                        .collect()
                })
                .unwrap_or_default();
            stack.push((t, true));
            stack.extend(parents.into_iter().map(|p| (p, false)));
        }
        order
    }

    /// Number of distinct interior nodes in the graph below `self`.
    pub fn graph_size(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            self.topological_order().len()
        }
    }
}
