//! Reverse-mode gradient graph.
//!
//! Nodes are created implicitly by tensor ops whenever an input carries a
//! node and gradient recording is enabled. Node ids increase monotonically
//! with creation order, so descending id order is a valid reverse topological
//! order; [`backward`] exploits this to visit every node exactly once.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with gradient recording disabled on this thread. Ops executed
/// inside produce untraced tensors regardless of their inputs.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    GRAD_ENABLED.with(|g| {
        let prev = g.get();
        g.set(false);
        let out = f();
        g.set(prev);
        out
    })
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Given the gradient of the loss w.r.t. this node's output, returns the
/// gradient w.r.t. each parent (None for parents that need no gradient).
pub(crate) type GradFn = Box<dyn Fn(&Tensor) -> Result<Vec<Option<Tensor>>> + Send + Sync>;

pub(crate) struct Node {
    id: u64,
    parents: Vec<Tensor>,
    grad_fn: Option<GradFn>,
}

impl Node {
    pub(crate) fn leaf() -> Arc<Node> {
        Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            parents: Vec::new(),
            grad_fn: None,
        })
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub(crate) fn is_leaf(&self) -> bool {
        self.grad_fn.is_none()
    }
}

/// Attaches a graph node to `out` if recording is active and any input is
/// traced. `grad_fn` must return one gradient slot per entry of `parents`,
/// in the same order.
pub(crate) fn record(out: Tensor, parents: &[&Tensor], grad_fn: GradFn) -> Tensor {
    if !grad_enabled() || parents.iter().all(|p| p.node().is_none()) {
        return out;
    }
    let node = Arc::new(Node {
        id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
        parents: parents.iter().map(|p| (*p).clone()).collect(),
        grad_fn: Some(grad_fn),
    });
    out.with_node(node)
}

/// Gradients produced by one [`backward`] call, keyed by leaf node id.
/// Every call starts from a fresh accumulator (reset-per-call semantics);
/// calling `backward` twice never adds gradients together.
pub struct Gradients {
    map: HashMap<u64, Tensor>,
}

impl Gradients {
    /// Gradient for a traced leaf tensor (e.g. a parameter's value).
    pub fn get(&self, leaf: &Tensor) -> Option<&Tensor> {
        leaf.leaf_id().and_then(|id| self.map.get(&id))
    }

    pub fn get_id(&self, id: u64) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Computes gradients of a scalar loss w.r.t. every traced leaf it depends
/// on. Traverses the graph in reverse creation order, visiting each node
/// exactly once; accumulation order is deterministic.
pub fn backward(loss: &Tensor) -> Result<Gradients> {
    if loss.len() != 1 {
        return Err(TensorError::NotScalar(loss.shape().to_vec()));
    }
    loss.check_finite("backward loss")?;
    let root = match loss.node() {
        Some(n) => Arc::clone(n),
        None => return Ok(Gradients { map: HashMap::new() }),
    };

    // Collect reachable nodes.
    let mut nodes: HashMap<u64, Arc<Node>> = HashMap::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if nodes.contains_key(&n.id) {
            continue;
        }
        for p in &n.parents {
            if let Some(pn) = p.node() {
                stack.push(Arc::clone(pn));
            }
        }
        nodes.insert(n.id, n);
    }
    let mut order: Vec<Arc<Node>> = nodes.values().cloned().collect();
    order.sort_by(|a, b| b.id.cmp(&a.id));

    let mut grads: HashMap<u64, Tensor> = HashMap::new();
    grads.insert(
        loss.node().unwrap().id,
        Tensor::ones(loss.shape()),
    );

    let mut leaf_grads: HashMap<u64, Tensor> = HashMap::new();
    no_grad(|| -> Result<()> {
        for node in order {
            let grad_out = match grads.remove(&node.id) {
                Some(g) => g,
                None => continue, // no path from the loss to this node
            };
            let grad_fn = match &node.grad_fn {
                Some(f) => f,
                None => {
                    leaf_grads.insert(node.id, grad_out);
                    continue;
                }
            };
            let parent_grads = grad_fn(&grad_out)?;
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                let (Some(pn), Some(pg)) = (parent.node(), pg) else {
                    continue;
                };
                debug_assert_eq!(
                    pg.shape(),
                    parent.shape(),
                    "gradient shape must equal the forward value's shape"
                );
                match grads.remove(&pn.id()) {
                    Some(acc) => {
                        grads.insert(pn.id(), acc.add(&pg)?);
                    }
                    None => {
                        grads.insert(pn.id(), pg);
                    }
                }
            }
        }
        Ok(())
    })?;

    Ok(Gradients { map: leaf_grads })
}
