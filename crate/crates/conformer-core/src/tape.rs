//! Reverse-mode autodiff on an append-only tape.
//!
//! Ops record one node per output: the forward value plus a closure that
//! maps the output gradient to gradients of the node's parents. Backward
//! walks nodes in strict reverse append order, so every node is visited
//! after all of its consumers. A tape is single-owner; tensors themselves
//! carry no tape linkage and stay freely shareable.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Gradient accumulator indexed by node, passed to backward closures.
pub struct GradStore<S: Scalar> {
    slots: Vec<Option<Tensor<S>>>,
    requires: Vec<bool>,
}

impl<S: Scalar> GradStore<S> {
    /// Add `grad` into the slot for node `index`.
    ///
    /// Silently skipped for nodes that do not require gradients, so op
    /// closures can accumulate unconditionally.
    pub fn accumulate(&mut self, index: usize, grad: Tensor<S>) {
        if !self.requires[index] {
            return;
        }
        match &mut self.slots[index] {
            Some(acc) => acc
                .add_assign(&grad)
                .expect("gradient shape must match node value shape"),
            slot @ None => *slot = Some(grad),
        }
    }
}

type BackFn<S> = Box<dyn Fn(&Tensor<S>, &mut GradStore<S>)>;

struct Node<S: Scalar> {
    value: Tensor<S>,
    requires_grad: bool,
    back: Option<BackFn<S>>,
}

/// Gradients of the differentiated leaves, returned by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<S: Scalar> {
    tape: u32,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for `var`, if it required one and was reached by the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor<S>> {
        assert_eq!(var.tape, self.tape, "Var belongs to a different tape");
        self.grads.get(var.index()).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<S>> {
        assert_eq!(var.tape, self.tape, "Var belongs to a different tape");
        self.grads.get_mut(var.index()).and_then(|g| g.take())
    }
}

pub struct Tape<S: Scalar> {
    id: u32,
    nodes: Vec<Node<S>>,
    grad_enabled: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// Evaluation-only tape: records values but no backward closures.
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert an input node. `requires_grad` marks it as a differentiated
    /// leaf; on a no-grad tape the flag is ignored.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push_node(value, requires_grad && self.grad_enabled, None)
    }

    /// Insert a non-differentiated input node.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    /// Forward value of a node.
    pub fn value(&self, var: Var) -> &Tensor<S> {
        assert_eq!(var.tape, self.id, "Var belongs to a different tape");
        &self.nodes[var.index()].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.value(var).shape()
    }

    /// Record an op result. `parents` are the op inputs (they must precede
    /// the new node); `back` receives the output gradient and accumulates
    /// parent gradients into the store.
    pub(crate) fn push(
        &mut self,
        value: Tensor<S>,
        parents: &[Var],
        back: impl Fn(&Tensor<S>, &mut GradStore<S>) + 'static,
    ) -> Var {
        let requires = self.grad_enabled
            && parents.iter().any(|p| {
                assert_eq!(p.tape, self.id, "Var belongs to a different tape");
                self.nodes[p.index()].requires_grad
            });
        let back: Option<BackFn<S>> = if requires { Some(Box::new(back)) } else { None };
        self.push_node(value, requires, back)
    }

    fn push_node(&mut self, value: Tensor<S>, requires_grad: bool, back: Option<BackFn<S>>) -> Var {
        let index = u32::try_from(self.nodes.len()).expect("tape too long");
        self.nodes.push(Node {
            value,
            requires_grad,
            back,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    /// Run reverse accumulation from a scalar loss, consuming the tape.
    ///
    /// Returns the gradient of the loss with respect to every
    /// `requires_grad` leaf reachable from it.
    pub fn backward(self, loss: Var) -> Result<Gradients<S>> {
        assert_eq!(loss.tape, self.id, "Var belongs to a different tape");
        let loss_value = &self.nodes[loss.index()].value;
        if !loss_value.shape().is_empty() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut store = GradStore {
            slots: vec![None; self.nodes.len()],
            requires: self.nodes.iter().map(|n| n.requires_grad).collect(),
        };
        store.accumulate(loss.index(), Tensor::scalar(S::one()));
        for (index, node) in self.nodes.iter().enumerate().take(loss.index() + 1).rev() {
            match &node.back {
                Some(back) => {
                    // Interior node: consume its gradient and push it down.
                    if let Some(grad) = store.slots[index].take() {
                        back(&grad, &mut store);
                    }
                }
                // Leaf (or non-differentiable node): leave any gradient in
                // place for the caller.
                None => {}
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads: store.slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones(&[3]), true);
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn leaf_without_requires_grad_gets_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(2.0), false);
        let grads = tape.backward(x).unwrap();
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn loss_leaf_gradient_is_one() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let grads = tape.backward(x).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 1.0);
    }

    #[test]
    #[should_panic(expected = "different tape")]
    fn cross_tape_vars_are_rejected() {
        let mut a = Tape::<f64>::new();
        let mut b = Tape::<f64>::new();
        let x = a.leaf(Tensor::scalar(1.0), true);
        let _ = b.value(x);
        let _ = b.leaf(Tensor::scalar(1.0), true);
    }
}
