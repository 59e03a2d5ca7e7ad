//! Reverse-mode autodiff tensors.
//!
//! A [`Tensor`] is a cheap handle (reference-counted) onto a node of a
//! dynamically built computation DAG. Data is stored flat in row-major
//! order. Forward operations eagerly compute values and, whenever any
//! operand participates in gradient computation, record a backward
//! closure. [`Tensor::backward`] walks the DAG once in reverse
//! topological order and accumulates adjoints; shared subexpressions
//! therefore receive the sum of the adjoints of all their uses.
//!
//! Graphs are rebuilt per forward pass and are confined to the thread
//! that created them; distinct graphs may live on distinct threads.

mod broadcast;
mod conv;
mod ops;

pub use conv::Padding;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

pub(crate) type BackwardFn<S> = Box<dyn Fn(&[S])>;

pub(crate) struct Node<S: Scalar> {
    shape: Vec<usize>,
    data: RefCell<Vec<S>>,
    grad: RefCell<Option<Vec<S>>>,
    requires_grad: bool,
    is_leaf: bool,
    parents: Vec<Tensor<S>>,
    backward_fn: Option<BackwardFn<S>>,
}

pub struct Tensor<S: Scalar> {
    node: Rc<Node<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

fn check_len<S>(data: &[S], shape: &[usize]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if data.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: data.len(),
        });
    }
    Ok(())
}

impl<S: Scalar> Tensor<S> {
    fn make(
        shape: Vec<usize>,
        data: Vec<S>,
        requires_grad: bool,
        is_leaf: bool,
        parents: Vec<Tensor<S>>,
        backward_fn: Option<BackwardFn<S>>,
    ) -> Self {
        Tensor {
            node: Rc::new(Node {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                is_leaf,
                parents,
                backward_fn,
            }),
        }
    }

    /// A constant leaf (no gradient tracking).
    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        check_len(&data, shape)?;
        Ok(Self::make(shape.to_vec(), data, false, true, vec![], None))
    }

    /// A trainable leaf; gradients accumulate into it across backward passes
    /// until [`Tensor::zero_grad`].
    pub fn param(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        check_len(&data, shape)?;
        Ok(Self::make(shape.to_vec(), data, true, true, vec![], None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::make(
            shape.to_vec(),
            vec![S::zero(); n],
            false,
            true,
            vec![],
            None,
        )
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Self::make(shape.to_vec(), vec![value; n], false, true, vec![], None)
    }

    /// A shape `[1]` constant.
    pub fn scalar(value: S) -> Self {
        Self::make(vec![1], vec![value], false, true, vec![], None)
    }

    /// An interior node produced by an operation. Drops the graph edges
    /// when no parent needs gradients, so constant subtrees stay plain data.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<S>,
        parents: Vec<Tensor<S>>,
        backward_fn: BackwardFn<S>,
    ) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Self::make(shape, data, true, false, parents, Some(backward_fn))
        } else {
            Self::make(shape, data, false, false, vec![], None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.is_leaf
    }

    /// Borrow of the flat row-major data.
    pub fn data(&self) -> Ref<'_, Vec<S>> {
        self.node.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.node.data.borrow().clone()
    }

    /// The single element of a `[1]`-shaped tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.node.shape.clone(),
            });
        }
        Ok(self.node.data.borrow()[0])
    }

    /// Mutates leaf data in place. This bypasses autodiff: it is meant for
    /// optimizer updates, checkpoint loading, and finite-difference probes,
    /// all of which happen between graph builds.
    pub fn with_data_mut(&self, f: impl FnOnce(&mut [S])) {
        f(&mut self.node.data.borrow_mut());
    }

    /// A detached constant leaf holding a copy of this tensor's values.
    pub fn detach(&self) -> Tensor<S> {
        Self::make(
            self.node.shape.clone(),
            self.to_vec(),
            false,
            true,
            vec![],
            None,
        )
    }

    /// Clone of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Accumulates into the gradient buffer, creating it lazily.
    pub(crate) fn with_grad_mut(&self, f: impl FnOnce(&mut [S])) {
        let mut slot = self.node.grad.borrow_mut();
        let n = self.numel();
        let buf = slot.get_or_insert_with(|| vec![S::zero(); n]);
        f(buf);
    }

    fn ptr(&self) -> *const Node<S> {
        Rc::as_ptr(&self.node)
    }

    /// Reverse-mode sweep from a scalar. Interior gradients are reset at the
    /// start of each sweep; leaf gradients accumulate across sweeps until
    /// explicitly zeroed. Every reachable node's backward runs exactly once.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.node.shape.clone(),
            });
        }
        // Post-order over parent edges: parents precede children in `order`.
        enum Frame<S: Scalar> {
            Enter(Tensor<S>),
            Exit(Tensor<S>),
        }
        let mut order: Vec<Tensor<S>> = Vec::new();
        let mut seen: HashSet<*const Node<S>> = HashSet::new();
        let mut stack = vec![Frame::Enter(self.clone())];
        while let Some(frame) = stack.pop() {
            match frame {
                Frame::Enter(t) => {
                    if !seen.insert(t.ptr()) {
                        continue;
                    }
                    stack.push(Frame::Exit(t.clone()));
                    for p in &t.node.parents {
                        if p.requires_grad() && !seen.contains(&p.ptr()) {
                            stack.push(Frame::Enter(p.clone()));
                        }
                    }
                }
                Frame::Exit(t) => order.push(t),
            }
        }
        for t in &order {
            if !t.node.is_leaf {
                *t.node.grad.borrow_mut() = None;
            }
        }
        self.with_grad_mut(|g| g[0] = g[0] + S::one());
        // Children before parents: each node's adjoint is complete before
        // it distributes to its own parents.
        for t in order.iter().rev() {
            if let Some(back) = &t.node.backward_fn {
                let grad = t.node.grad.borrow();
                if let Some(g) = grad.as_ref() {
                    back(g);
                }
            }
        }
        Ok(())
    }
}
