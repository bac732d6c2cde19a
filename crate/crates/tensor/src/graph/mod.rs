//! Recorded computation graph with reverse-mode gradients.
//!
//! Coarse ops (matmul, conv, attention plumbing) are pushed onto a tape
//! during the forward pass; [`Graph::backward`] walks the tape in reverse
//! and accumulates gradients per node. Recording is skipped entirely for
//! nodes that cannot reach a tracked leaf, and for graphs built in
//! inference mode.

mod conv;
mod elem;
mod linalg;
mod norm;
mod pool;
mod reduce;
mod shape;
mod window;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<(usize, Tensor<T>)>>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    needs_grad: bool,
    back: Option<BackFn<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
    training: bool,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Graph<T> {
    /// Gradient-recording graph (training / gradient checks).
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: true, training: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    /// Non-recording graph: intermediates are still computed eagerly but
    /// no backward closures are kept.
    pub fn inference() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: false, training: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn training(&self) -> bool {
        self.training
    }

    /// Seeds the RNG used by dropout masks.
    pub fn seed_rng(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Untracked input: gradients never flow into it.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node { value: t, needs_grad: false, back: None });
        Var(self.nodes.len() - 1)
    }

    /// Tracked leaf (parameter or differentiable input).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = self.grad_enabled;
        self.nodes.push(Node { value: t, needs_grad, back: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Pushes a computed node. `parents` decide whether the backward
    /// closure is retained at all.
    pub(crate) fn push_op(
        &mut self,
        value: Tensor<T>,
        parents: &[Var],
        back: impl Fn(&Tensor<T>) -> Vec<(usize, Tensor<T>)> + 'static,
    ) -> Var {
        let needs_grad = self.grad_enabled && parents.iter().any(|p| self.needs_grad(*p));
        let back: Option<BackFn<T>> = if needs_grad { Some(Box::new(back)) } else { None };
        self.nodes.push(Node { value, needs_grad, back });
        Var(self.nodes.len() - 1)
    }

    /// Reverse pass from a scalar loss. Returns per-node gradients; look
    /// them up for leaves via [`Gradients::get`].
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::invalid("backward", format!("loss has shape {:?}, expected scalar", lt.shape())));
        }
        if !lt.all_finite() {
            return Err(TensorError::NonFinite { op: "backward(loss)" });
        }
        if !self.grad_enabled {
            return Err(TensorError::invalid("backward", "graph was built in inference mode"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lt.shape().to_vec(), T::one()));
        for id in (0..=loss.0).rev() {
            let Some(back) = self.nodes[id].back.as_ref() else { continue };
            let Some(dy) = grads[id].clone() else { continue };
            for (pid, contrib) in back(&dy) {
                if !self.nodes[pid].needs_grad {
                    continue;
                }
                debug_assert_eq!(
                    contrib.shape(),
                    self.nodes[pid].value.shape(),
                    "gradient shape mismatch flowing into node {pid}"
                );
                grads[pid] = Some(match grads[pid].take() {
                    None => contrib,
                    Some(acc) => add_tensors(&acc, &contrib),
                });
            }
        }
        Ok(Gradients { by_node: grads })
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn add_tensors<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("add_tensors shape")
}

/// Result of a backward pass.
pub struct Gradients<T: Scalar> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for a node, if any reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.by_node.get(v.0).and_then(|g| g.as_ref())
    }
}
