//! Dense 2-D tensors with an optional backpointer into a dynamically built
//! computation graph.
//!
//! Every value is an `f64` matrix in row-major order; scalars are `1x1` and
//! row vectors `1xn`. Operators (see `ops`) record a node holding their
//! parents and a backward closure. [`Tensor::backward`] seeds the scalar loss
//! with gradient one and walks the graph in reverse topological order,
//! visiting each node exactly once, so gradients of shared subexpressions
//! accumulate as the sum of their path contributions. Traversal order is a
//! pure function of graph construction order, which keeps whole training runs
//! bit-reproducible given a seed.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use rand::Rng;

use crate::error::TensorError;

pub(crate) struct OpCtx<'a> {
    pub(crate) out_values: &'a [f64],
    pub(crate) out_grad: &'a [f64],
    pub(crate) parents: &'a [Tensor],
}

pub(crate) struct Node {
    pub(crate) parents: Vec<Tensor>,
    pub(crate) backward: Box<dyn Fn(&OpCtx<'_>)>,
}

pub(crate) struct Inner {
    rows: usize,
    cols: usize,
    values: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

/// Cheaply clonable handle to one tensor; clones share storage and gradient.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("rows", &self.inner.rows)
            .field("cols", &self.inner.cols)
            .field("requires_grad", &self.inner.requires_grad)
            .field("values", &self.inner.values.borrow())
            .finish()
    }
}

impl Tensor {
    fn make_leaf(rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                rows,
                cols,
                values: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad,
                node: None,
            }),
        }
    }

    /// Constant leaf from row-major data.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor, TensorError> {
        if values.len() != rows * cols {
            return Err(TensorError::LengthMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        Ok(Self::make_leaf(rows, cols, values, false))
    }

    /// Leaf that participates in differentiation (a trainable parameter).
    pub fn trainable(rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor, TensorError> {
        if values.len() != rows * cols {
            return Err(TensorError::LengthMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        Ok(Self::make_leaf(rows, cols, values, true))
    }

    /// Copies this tensor's current values into a fresh trainable leaf.
    pub fn into_trainable(self) -> Tensor {
        let values = self.inner.values.borrow().clone();
        Self::make_leaf(self.inner.rows, self.inner.cols, values, true)
    }

    pub fn scalar(v: f64) -> Tensor {
        Self::make_leaf(1, 1, vec![v], false)
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Self::make_leaf(rows, cols, vec![0.0; rows * cols], false)
    }

    pub fn ones(rows: usize, cols: usize) -> Tensor {
        Self::make_leaf(rows, cols, vec![1.0; rows * cols], false)
    }

    pub fn full(rows: usize, cols: usize, v: f64) -> Tensor {
        Self::make_leaf(rows, cols, vec![v; rows * cols], false)
    }

    /// Gaussian leaf, mean zero, the given standard deviation. Uses a
    /// Box-Muller pair per two entries so the draw count is deterministic.
    pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
        let n = rows * cols;
        let mut values = Vec::with_capacity(n);
        while values.len() < n {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            values.push(std * r * theta.cos());
            if values.len() < n {
                values.push(std * r * theta.sin());
            }
        }
        Self::make_leaf(rows, cols, values, false)
    }

    pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
        let values = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Self::make_leaf(rows, cols, values, false)
    }

    pub(crate) fn from_op(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        parents: Vec<Tensor>,
        backward: impl Fn(&OpCtx<'_>) + 'static,
    ) -> Tensor {
        debug_assert_eq!(values.len(), rows * cols);
        if !parents.iter().any(|p| p.inner.requires_grad) {
            return Self::make_leaf(rows, cols, values, false);
        }
        Tensor {
            inner: Rc::new(Inner {
                rows,
                cols,
                values: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad: true,
                node: Some(Node {
                    parents,
                    backward: Box::new(backward),
                }),
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.inner.rows
    }

    pub fn cols(&self) -> usize {
        self.inner.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.inner.rows, self.inner.cols)
    }

    pub fn len(&self) -> usize {
        self.inner.rows * self.inner.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Borrow the row-major values without copying.
    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.values.borrow(), |v| v.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.values.borrow().clone()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.inner.rows && c < self.inner.cols, "index out of range");
        self.inner.values.borrow()[r * self.inner.cols + c]
    }

    /// The single value of a 1x1 tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.len() != 1 {
            return Err(TensorError::contract(
                "item",
                format!("expected a scalar, got {}x{}", self.inner.rows, self.inner.cols),
            ));
        }
        Ok(self.inner.values.borrow()[0])
    }

    /// Overwrite the stored values in place. Used by optimizers and by
    /// finite-difference probes; the shape is fixed at construction.
    pub fn set_values(&self, values: &[f64]) -> Result<(), TensorError> {
        if values.len() != self.len() {
            return Err(TensorError::LengthMismatch {
                rows: self.inner.rows,
                cols: self.inner.cols,
                len: values.len(),
            });
        }
        self.inner.values.borrow_mut().copy_from_slice(values);
        Ok(())
    }

    /// Mutate the stored values in place through a closure.
    pub fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(self.inner.values.borrow_mut().as_mut_slice());
    }

    /// Accumulated gradient after a backward pass; `None` when no path from
    /// the loss reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Copy of the current values as a fresh constant leaf, cut off from the
    /// graph that produced it.
    pub fn detach(&self) -> Tensor {
        Self::make_leaf(self.inner.rows, self.inner.cols, self.to_vec(), false)
    }

    pub(crate) fn accum_grad(&self, f: impl FnOnce(&mut [f64])) {
        if !self.inner.requires_grad {
            return;
        }
        let mut slot = self.inner.grad.borrow_mut();
        let g = slot.get_or_insert_with(|| vec![0.0; self.len()]);
        f(g.as_mut_slice());
    }

    /// Reverse-mode differentiation from a scalar loss. Each reachable node's
    /// backward hook runs exactly once, after every consumer of its output has
    /// contributed gradient.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                rows: self.inner.rows,
                cols: self.inner.cols,
            });
        }
        if !self.inner.requires_grad {
            return Ok(());
        }
        let order = topo_order(self);
        self.accum_grad(|g| g[0] += 1.0);
        for t in order.iter().rev() {
            let Some(node) = t.inner.node.as_ref() else {
                continue;
            };
            let grad_ref = t.inner.grad.borrow();
            let Some(out_grad) = grad_ref.as_deref() else {
                continue;
            };
            let values = t.inner.values.borrow();
            let ctx = OpCtx {
                out_values: &values,
                out_grad,
                parents: &node.parents,
            };
            (node.backward)(&ctx);
        }
        Ok(())
    }
}

/// Post-order over the sub-graph that requires gradient. Reversed, this is a
/// valid topological order for backpropagation: consumers before producers.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    enum Frame {
        Enter(Tensor),
        Exit(Tensor),
    }
    let mut order = Vec::new();
    let mut visited: HashSet<*const Inner> = HashSet::new();
    let mut stack = vec![Frame::Enter(root.clone())];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(t) => {
                if !visited.insert(Rc::as_ptr(&t.inner)) {
                    continue;
                }
                match t.inner.node.as_ref() {
                    Some(node) => {
                        let parents = node.parents.clone();
                        stack.push(Frame::Exit(t));
                        for p in parents {
                            if p.inner.requires_grad && !visited.contains(&Rc::as_ptr(&p.inner)) {
                                stack.push(Frame::Enter(p));
                            }
                        }
                    }
                    None => order.push(t),
                }
            }
            Frame::Exit(t) => order.push(t),
        }
    }
    order
}
