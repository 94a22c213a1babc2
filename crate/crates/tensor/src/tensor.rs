//! Plain tensors and the named parameter registry.

use std::collections::HashMap;

use rand::Rng;

use crate::scalar::Scalar;
use crate::{Result, TensorError};

/// Dense numeric array with shape and an optional gradient buffer.
#[derive(Debug, Clone)]
pub struct Tensor<S: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub requires_grad: bool,
    pub grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Dimension {
                op: "tensor-new",
                detail: format!("shape {:?} wants {} elements, got {}", shape, numel, data.len()),
            });
        }
        Ok(Self { shape, data, requires_grad, grad: None })
    }

    pub fn zeros(shape: Vec<usize>, requires_grad: bool) -> Self {
        let numel: usize = shape.iter().product();
        Self { shape, data: vec![S::ZERO; numel], requires_grad, grad: None }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Adds `delta` into the gradient buffer, allocating zeros on first use.
    pub fn accumulate_grad(&mut self, delta: &[S]) {
        let g = self.grad.get_or_insert_with(|| vec![S::ZERO; self.data.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += *di;
        }
    }
}

/// One named learnable parameter.
#[derive(Debug, Clone)]
pub struct Param<S: Scalar> {
    pub name: String,
    pub tensor: Tensor<S>,
}

/// Ordered, named set of model parameters. Registration order is the
/// checkpoint order and the initialization draw order, so a fixed
/// construction sequence gives reproducible runs.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<S: Scalar> {
    params: Vec<Param<S>>,
    by_name: HashMap<String, usize>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: &str, tensor: Tensor<S>) -> usize {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let idx = self.params.len();
        self.by_name.insert(name.to_string(), idx);
        self.params.push(Param { name: name.to_string(), tensor });
        idx
    }

    /// Registers a matrix initialized uniformly in ±sqrt(6/(fan_in+fan_out)).
    pub fn add_xavier<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> usize {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<S> = (0..rows * cols)
            .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        self.add(name, Tensor { shape: vec![rows, cols], data, requires_grad: true, grad: None })
    }

    /// Registers a tensor with entries uniform in ±bound.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        bound: f64,
        rng: &mut R,
    ) -> usize {
        let numel: usize = shape.iter().product();
        let data: Vec<S> = (0..numel).map(|_| S::from_f64(rng.gen_range(-bound..bound))).collect();
        self.add(name, Tensor { shape, data, requires_grad: true, grad: None })
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> usize {
        self.add(name, Tensor::zeros(shape, true))
    }

    pub fn add_ones(&mut self, name: &str, shape: Vec<usize>) -> usize {
        let numel: usize = shape.iter().product();
        self.add(
            name,
            Tensor { shape, data: vec![S::ONE; numel], requires_grad: true, grad: None },
        )
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param<S> {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param<S> {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.grad = None;
        }
    }

    /// Total number of scalar parameters.
    pub fn total_len(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }
}
