//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap, clonable handle. Operations on tensors that
//! require gradients record the operation and its inputs; calling
//! [`Tensor::backward`] on a scalar result walks the recorded graph in
//! reverse topological order and accumulates `∂loss/∂leaf` into every leaf
//! created with [`Tensor::param`]. The graph is released after the pass.
//!
//! Matrix operations work on rank-2 tensors; element-wise operations accept
//! any rank as long as both shapes agree exactly (no implicit broadcasting,
//! use [`Tensor::broadcast_rows`]).

mod checkpoint;
mod ops;
mod optim;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use crate::scalar::Scalar;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use ops::{sigmoid, BCE_EPS};
pub use optim::{lr_at, AdamW, AdamWConfig};

use ops::Op;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects a rank-2 tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("backward called on non-scalar tensor of shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{len} values do not fill shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("index {index} out of range for {op} with bound {bound}")]
    OutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) struct Node<T: Scalar> {
    shape: Vec<usize>,
    values: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
    op: Mutex<Option<Op<T>>>,
}

#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    node: Arc<Node<T>>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    fn build(shape: Vec<usize>, values: Vec<T>, requires_grad: bool, op: Option<Op<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            node: Arc::new(Node {
                shape,
                values: RwLock::new(values),
                grad: Mutex::new(None),
                requires_grad,
                op: Mutex::new(op),
            }),
        }
    }

    /// A constant (no gradient) tensor.
    pub fn new(shape: &[usize], values: Vec<T>) -> Result<Self> {
        check_len(shape, values.len())?;
        Ok(Self::build(shape.to_vec(), values, false, None))
    }

    /// A trainable leaf; gradients accumulate into it on `backward`.
    pub fn param(shape: &[usize], values: Vec<T>) -> Result<Self> {
        check_len(shape, values.len())?;
        Ok(Self::build(shape.to_vec(), values, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![T::zero(); n], false, None)
    }

    pub fn scalar(v: T) -> Self {
        Self::build(Vec::new(), vec![v], false, None)
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        Self::new(&[rows, cols], values)
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

    pub fn values(&self) -> Vec<T> {
        self.node.values.read().expect("tensor lock").clone()
    }

    /// Runs `f` against the values without copying them.
    pub fn with_values<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.node.values.read().expect("tensor lock"))
    }

    /// In-place update of the stored values (used by optimizers and loaders).
    pub fn update_values(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.node.values.write().expect("tensor lock"))
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        self.with_values(|v| v[0])
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock") = None;
    }

    /// A constant copy sharing no graph or gradient state with `self`.
    pub fn detach(&self) -> Self {
        Self::build(self.node.shape.clone(), self.values(), false, None)
    }

    /// A fresh trainable leaf with the same values.
    pub fn deep_clone_param(&self) -> Self {
        Self::build(self.node.shape.clone(), self.values(), true, None)
    }

    pub(crate) fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.node.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(TensorError::NotMatrix { op, shape: s.to_vec() }),
        }
    }

    fn ptr(&self) -> *const Node<T> {
        Arc::as_ptr(&self.node)
    }

    /// Back-propagates from this scalar, adding `∂self/∂leaf` into each
    /// trainable leaf's gradient. Gradients accumulate across calls until
    /// [`Tensor::zero_grad`]. The recorded graph is released afterwards.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: self.node.shape.clone(),
            });
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Iterative post-order DFS over interior nodes.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut index: HashMap<*const Node<T>, usize> = HashMap::new();
        let mut visited: HashSet<*const Node<T>> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                index.insert(t.ptr(), order.len());
                order.push(t);
                continue;
            }
            if !visited.insert(t.ptr()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(op) = t.node.op.lock().expect("op lock").as_ref() {
                for p in op.parents() {
                    if p.requires_grad() && !visited.contains(&p.ptr()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        let mut grads: Vec<Option<Vec<T>>> = vec![None; order.len()];
        let root = index[&self.ptr()];
        grads[root] = Some(vec![T::one()]);

        for i in (0..order.len()).rev() {
            let t = &order[i];
            let op = t.node.op.lock().expect("op lock").take();
            let Some(g) = grads[i].take() else { continue };
            match op {
                Some(op) => {
                    let out = t.node.values.read().expect("tensor lock");
                    for (parent, pg) in op.backward(&out, &g) {
                        let j = index[&parent.ptr()];
                        match &mut grads[j] {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a = *a + *b),
                            slot @ None => *slot = Some(pg),
                        }
                    }
                }
                None => {
                    let mut slot = t.node.grad.lock().expect("grad lock");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    if shape.iter().product::<usize>() != len {
        return Err(TensorError::BadLength {
            shape: shape.to_vec(),
            len,
        });
    }
    Ok(())
}
