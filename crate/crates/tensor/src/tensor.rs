use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::tape::Node;

/// Dense row-major `f64` tensor. Cloning is cheap (the buffer is shared).
///
/// A tensor may carry a graph node; tensors derived from a traced leaf carry
/// the full backward graph through their node's parents.
#[derive(Clone)]
pub struct Tensor {
    data: Arc<Vec<f64>>,
    shape: Vec<usize>,
    node: Option<Arc<Node>>,
}

impl Tensor {
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            data: Arc::new(data),
            shape: shape.to_vec(),
            node: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(vec![0.0; shape.iter().product()], shape)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Tensor {
        Tensor::from_vec(vec![value; shape.iter().product()], shape)
    }

    /// Rank-0 scalar.
    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(vec![value], &[])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Element at a full multi-index (row-major).
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.rank());
        let mut flat = 0;
        for (d, (&i, &s)) in index.iter().zip(self.shape.iter()).enumerate() {
            assert!(i < s, "index {i} out of bounds for axis {d} of size {s}");
            flat = flat * s + i;
        }
        self.data[flat]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        if self.is_all_finite() {
            Ok(())
        } else {
            Err(TensorError::NonFinite(context))
        }
    }

    /// Marks this tensor as a differentiable leaf. [`crate::backward`] reports
    /// a gradient for every leaf reachable from the loss.
    pub fn traced(mut self) -> Tensor {
        self.node = Some(Node::leaf());
        self
    }

    /// Same values, no graph attached.
    pub fn detached(&self) -> Tensor {
        Tensor {
            data: Arc::clone(&self.data),
            shape: self.shape.clone(),
            node: None,
        }
    }

    pub fn is_traced(&self) -> bool {
        self.node.is_some()
    }

    /// Graph id of the leaf node, if this tensor is a traced leaf.
    pub fn leaf_id(&self) -> Option<u64> {
        self.node.as_ref().filter(|n| n.is_leaf()).map(|n| n.id())
    }

    pub(crate) fn node(&self) -> Option<&Arc<Node>> {
        self.node.as_ref()
    }

    pub(crate) fn with_node(mut self, node: Arc<Node>) -> Tensor {
        self.node = Some(node);
        self
    }

    /// New tensor with the same buffer but a different shape (must preserve
    /// element count). Does not record on the tape; see `reshape` for the
    /// differentiable version.
    pub(crate) fn reshaped_raw(&self, shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.len());
        Tensor {
            data: Arc::clone(&self.data),
            shape: shape.to_vec(),
            node: None,
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor(shape={:?}", self.shape)?;
        if self.len() <= 8 {
            write!(f, ", data={:?}", self.data.as_slice())?;
        }
        if self.node.is_some() {
            write!(f, ", traced")?;
        }
        write!(f, ")")
    }
}
