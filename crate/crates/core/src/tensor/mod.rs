//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable value buffers. Differentiation is define-by-run: a
//! [`GradTape`] records every operation whose inputs include a tracked
//! tensor, and [`GradTape::backward`] replays the recording in reverse to
//! accumulate cotangents. The tape is rebuilt on every forward pass; a tape
//! can be consumed by backward exactly once.
//!
//! Sequence features use the layout (batch N, channels C, frames T,
//! joints V, bodies M), flattened row-major.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::real::Real;

pub mod ops;

type BackwardFn<R> = Box<dyn Fn(&[R]) -> Vec<Vec<R>>>;

struct TapeNode<R: Real> {
    /// Tape ids of the tracked inputs, in the order the backward closure
    /// returns their cotangents.
    parents: Vec<usize>,
    backward: Option<BackwardFn<R>>,
    len: usize,
}

struct TapeInner<R: Real> {
    nodes: Vec<TapeNode<R>>,
    consumed: bool,
}

/// Recording of one forward pass.
#[derive(Clone)]
pub struct GradTape<R: Real> {
    inner: Rc<RefCell<TapeInner<R>>>,
}

impl<R: Real> Default for GradTape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> GradTape<R> {
    pub fn new() -> Self {
        GradTape { inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new(), consumed: false })) }
    }

    fn same_tape(&self, other: &GradTape<R>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    fn push(&self, parents: Vec<usize>, backward: Option<BackwardFn<R>>, len: usize) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(TapeNode { parents, backward, len });
        inner.nodes.len() - 1
    }

    /// Creates a tracked leaf tensor whose gradient will be available after
    /// backward.
    pub fn leaf(&self, shape: Vec<usize>, data: Vec<R>) -> Result<Tensor<R>> {
        let t = Tensor::from_vec(shape, data)?;
        let id = self.push(Vec::new(), None, t.len());
        Ok(Tensor { node: Some(NodeRef { tape: self.clone(), id }), ..t })
    }

    /// Reverse pass from a scalar loss. Populates a gradient table for every
    /// tracked tensor reachable from the loss; gradients accumulate by sum
    /// over all uses. Errors on a non-scalar loss or a second backward on the
    /// same recording.
    pub fn backward(&self, loss: &Tensor<R>) -> Result<Gradients<R>> {
        let node = loss
            .node
            .as_ref()
            .ok_or_else(|| Error::Numeric("backward: loss is not tracked on any tape".into()))?;
        if !self.same_tape(&node.tape) {
            return Err(Error::Numeric("backward: loss was recorded on a different tape".into()));
        }
        if loss.len() != 1 {
            return Err(Error::Numeric(format!(
                "backward: loss must be scalar, got shape {:?}",
                loss.shape()
            )));
        }
        {
            let mut inner = self.inner.borrow_mut();
            if inner.consumed {
                return Err(Error::Numeric("backward: tape already consumed".into()));
            }
            inner.consumed = true;
        }

        let inner = self.inner.borrow();
        let mut grads: Vec<Option<Vec<R>>> = vec![None; inner.nodes.len()];
        grads[node.id] = Some(vec![R::one()]);
        for id in (0..=node.id).rev() {
            let Some(gout) = grads[id].take() else { continue };
            let entry = &inner.nodes[id];
            if let Some(backward) = &entry.backward {
                let contributions = backward(&gout);
                debug_assert_eq!(contributions.len(), entry.parents.len());
                for (&parent, contribution) in entry.parents.iter().zip(contributions) {
                    let slot = grads[parent]
                        .get_or_insert_with(|| vec![R::zero(); inner.nodes[parent].len]);
                    debug_assert_eq!(slot.len(), contribution.len());
                    for (s, c) in slot.iter_mut().zip(&contribution) {
                        *s = *s + *c;
                    }
                }
            }
            grads[id] = Some(gout);
        }
        Ok(Gradients { tape: self.clone(), grads })
    }
}

/// Gradient table produced by [`GradTape::backward`].
pub struct Gradients<R: Real> {
    tape: GradTape<R>,
    grads: Vec<Option<Vec<R>>>,
}

impl<R: Real> Gradients<R> {
    /// Gradient of the loss with respect to a tracked tensor. `None` when the
    /// tensor did not contribute to the loss (callers treat that as zero).
    pub fn wrt(&self, tensor: &Tensor<R>) -> Option<&[R]> {
        let node = tensor.node.as_ref()?;
        if !self.tape.same_tape(&node.tape) {
            return None;
        }
        self.grads[node.id].as_deref()
    }

    /// Gradient as an owned vector, zero-filled when the tensor is unused.
    pub fn wrt_or_zero(&self, tensor: &Tensor<R>) -> Vec<R> {
        self.wrt(tensor)
            .map(<[R]>::to_vec)
            .unwrap_or_else(|| vec![R::zero(); tensor.len()])
    }
}

#[derive(Clone)]
struct NodeRef<R: Real> {
    tape: GradTape<R>,
    id: usize,
}

/// Dense real-valued multi-dimensional array, row-major.
#[derive(Clone)]
pub struct Tensor<R: Real> {
    shape: Vec<usize>,
    data: Rc<Vec<R>>,
    node: Option<NodeRef<R>>,
}

impl<R: Real> Tensor<R> {
    /// Untracked tensor from a flat buffer. The buffer length must equal the
    /// shape's element count and every entry must be finite.
    pub fn from_vec(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "buffer of {} values does not fill shape {:?} ({} values)",
                data.len(),
                shape,
                expect
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value in tensor of shape {shape:?}")));
        }
        Ok(Tensor { shape, data: Rc::new(data), node: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: Rc::new(vec![R::zero(); len]), node: None }
    }

    pub fn scalar(value: R) -> Self {
        Tensor { shape: Vec::new(), data: Rc::new(vec![value]), node: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    /// Value of a scalar (single-element) tensor.
    pub fn item(&self) -> R {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    /// Whether gradients flow through this tensor.
    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    fn tracked_id(&self) -> Option<usize> {
        self.node.as_ref().map(|n| n.id)
    }
}

impl<R: Real> std::fmt::Debug for Tensor<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("tracked", &self.requires_grad())
            .field("data", &&self.data[..self.len().min(8)])
            .finish()
    }
}

/// Resolves the common tape of an operation's inputs, erroring when tracked
/// inputs span different tapes. Returns `None` when nothing is tracked.
fn common_tape<R: Real>(inputs: &[&Tensor<R>]) -> Result<Option<GradTape<R>>> {
    let mut found: Option<GradTape<R>> = None;
    for t in inputs {
        if let Some(node) = &t.node {
            match &found {
                None => found = Some(node.tape.clone()),
                Some(tape) => {
                    if !tape.same_tape(&node.tape) {
                        return Err(Error::Numeric(
                            "operation mixes tensors from different tapes".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(found)
}

/// Builds an op output: checks finiteness, and records the node when any
/// input is tracked. `backward` receives the output cotangent and returns
/// cotangents for the tracked inputs in `inputs` order (skipping untracked
/// ones).
fn make_output<R: Real>(
    op: &str,
    shape: Vec<usize>,
    data: Vec<R>,
    inputs: &[&Tensor<R>],
    backward: impl FnOnce(Vec<bool>) -> BackwardFn<R>,
) -> Result<Tensor<R>> {
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{op}: produced a non-finite value")));
    }
    let tape = common_tape(inputs)?;
    let node = match tape {
        None => None,
        Some(tape) => {
            let tracked_mask: Vec<bool> = inputs.iter().map(|t| t.requires_grad()).collect();
            let parents: Vec<usize> = inputs.iter().filter_map(|t| t.tracked_id()).collect();
            let len = data.len();
            let id = tape.push(parents, Some(backward(tracked_mask)), len);
            Some(NodeRef { tape, id })
        }
    };
    Ok(Tensor { shape, data: Rc::new(data), node })
}
