//! Reverse-mode differentiation over a linear tape.
//!
//! Every primitive pushes one node holding its output value and a backward
//! rule. [`Tape::backward`] walks the nodes in reverse push order, so each
//! rule runs exactly once and only after all consumers of its output.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of one recorded primitive.
pub trait BackwardOp<T: Scalar> {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input, `None` where `needs[i]` is false.
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>>;
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<usize>,
    op: Option<Box<dyn BackwardOp<T>>>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records the output of a primitive. Non-finite outputs are rejected.
    pub fn push(
        &mut self,
        value: Tensor<T>,
        inputs: &[Var],
        op: Box<dyn BackwardOp<T>>,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite {
                op: op.name().to_string(),
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            op: requires_grad.then_some(op),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Gradients of the scalar `loss` with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Autodiff(format!(
                "loss must be a scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Err(Error::Autodiff(
                "loss is detached: no tracked parameter reaches it".into(),
            ));
        }

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape().to_vec(), T::one()));
        let mut visited = Vec::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = &node.op else { continue };
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            visited.push(idx);
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|&i| self.nodes[i].requires_grad)
                .collect();
            let input_grads = op.backward(&inputs, &node.value, &grad, &needs)?;
            for ((&input, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                let Some(g) = g else { continue };
                if !need {
                    continue;
                }
                if g.shape() != self.nodes[input].value.shape() {
                    return Err(Error::Autodiff(format!(
                        "`{}` produced gradient of shape {:?} for input of shape {:?}",
                        op.name(),
                        g.shape(),
                        self.nodes[input].value.shape()
                    )));
                }
                if !g.all_finite() {
                    return Err(Error::NonFinite {
                        op: format!("{} (backward)", op.name()),
                    });
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += *b;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            }
            // Keep the gradient of intermediate values readable afterwards.
            grads[idx] = Some(grad);
        }

        Ok(Gradients { grads, visited })
    }
}

#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    visited: Vec<usize>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`, or `None` when `v` is not on a path to the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zero-filled when `v` does not influence the loss.
    pub fn get_or_zeros(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape().to_vec()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    /// Node indices whose backward rule ran, in the order they ran.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}
