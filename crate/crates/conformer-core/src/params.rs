//! Parameter schemas: declarative name/shape/init listings that drive
//! initialization, analytic counting, serialization, and tape mounting.
//!
//! Every module describes its parameters as a list of [`SchemaEntry`]
//! values. The same list is used to draw initial tensors (in order, from
//! the parameter RNG stream), to count trainable elements without
//! allocating, and to mount stored tensors onto a tape for a forward pass,
//! so the three views can never drift apart.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::ParamTree;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How a parameter tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

/// One named parameter in a module schema.
#[derive(Debug, Clone)]
pub struct SchemaEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub init: Init,
}

impl SchemaEntry {
    pub fn weight(name: impl Into<String>, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Self {
        SchemaEntry {
            name: name.into(),
            shape,
            trainable: true,
            init: Init::Glorot { fan_in, fan_out },
        }
    }

    /// Trainable tensor initialized to zero (biases, LN beta, the u/v
    /// attention bias vectors).
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        SchemaEntry {
            name: name.into(),
            shape,
            trainable: true,
            init: Init::Zeros,
        }
    }

    /// Trainable tensor initialized to one (LN/BN gamma).
    pub fn ones(name: impl Into<String>, shape: Vec<usize>) -> Self {
        SchemaEntry {
            name: name.into(),
            shape,
            trainable: true,
            init: Init::Ones,
        }
    }

    /// Non-trainable running statistic initialized to zero.
    pub fn state_zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        SchemaEntry {
            name: name.into(),
            shape,
            trainable: false,
            init: Init::Zeros,
        }
    }

    /// Non-trainable running statistic initialized to one.
    pub fn state_ones(name: impl Into<String>, shape: Vec<usize>) -> Self {
        SchemaEntry {
            name: name.into(),
            shape,
            trainable: false,
            init: Init::Ones,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Materialize one tensor according to its init spec, consuming RNG draws
/// only for randomly initialized entries.
pub fn init_tensor<S: Scalar>(entry: &SchemaEntry, rng: &mut ChaCha8Rng) -> Tensor<S> {
    match entry.init {
        Init::Glorot { fan_in, fan_out } => {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Tensor::from_fn(&entry.shape, |_| S::from_f64(rng.random_range(-limit..limit)))
        }
        Init::Zeros => Tensor::zeros(&entry.shape),
        Init::Ones => Tensor::ones(&entry.shape),
    }
}

/// Draw every entry of a schema, in order, into a fresh tree.
pub fn build_params<S: Scalar>(schema: &[SchemaEntry], rng: &mut ChaCha8Rng) -> Result<ParamTree<S>> {
    let mut tree = ParamTree::new();
    for entry in schema {
        tree.insert(entry.name.clone(), init_tensor(entry, rng), entry.trainable)?;
    }
    Ok(tree)
}

/// Trainable element count of a schema, computed without allocating any
/// tensor data.
pub fn count_trainable(schema: &[SchemaEntry]) -> usize {
    schema
        .iter()
        .filter(|e| e.trainable)
        .map(SchemaEntry::num_elements)
        .sum()
}

/// Parameters bound to a tape for one forward pass: trainable entries as
/// tape variables, running statistics as plain tensors.
pub struct MountedParams<S: Scalar> {
    vars: HashMap<String, Var>,
    state: HashMap<String, Tensor<S>>,
}

impl<S: Scalar> MountedParams<S> {
    /// Mount stored tensors onto `tape`, creating one leaf per trainable
    /// entry.
    pub fn from_tree(tape: &mut Tape<S>, tree: &ParamTree<S>, schema: &[SchemaEntry]) -> Result<Self> {
        let mut vars = HashMap::new();
        let mut state = HashMap::new();
        for entry in schema {
            let tensor = tree
                .get(&entry.name)
                .ok_or_else(|| Error::Contract(format!("missing parameter {}", entry.name)))?;
            if tensor.shape() != entry.shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "mount",
                    lhs: entry.shape.clone(),
                    rhs: tensor.shape().to_vec(),
                });
            }
            if entry.trainable {
                vars.insert(entry.name.clone(), tape.leaf(tensor.clone(), true));
            } else {
                state.insert(entry.name.clone(), tensor.clone());
            }
        }
        Ok(MountedParams { vars, state })
    }

    /// Bind pre-made variables to trainable schema names in order; running
    /// statistics take their init-time defaults. Used by gradient checks
    /// that own the leaves.
    pub fn from_vars(schema: &[SchemaEntry], provided: &[Var]) -> Result<Self> {
        let mut vars = HashMap::new();
        let mut state = HashMap::new();
        let mut next = 0;
        for entry in schema {
            if entry.trainable {
                let var = *provided.get(next).ok_or_else(|| {
                    Error::Contract(format!("not enough variables for schema entry {}", entry.name))
                })?;
                next += 1;
                vars.insert(entry.name.clone(), var);
            } else {
                let tensor = match entry.init {
                    Init::Zeros => Tensor::zeros(&entry.shape),
                    Init::Ones => Tensor::ones(&entry.shape),
                    Init::Glorot { .. } => {
                        return Err(Error::Contract(format!(
                            "running statistic {} cannot be randomly initialized",
                            entry.name
                        )))
                    }
                };
                state.insert(entry.name.clone(), tensor);
            }
        }
        if next != provided.len() {
            return Err(Error::Contract(format!(
                "schema consumes {next} variables, {} provided",
                provided.len()
            )));
        }
        Ok(MountedParams { vars, state })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unmounted parameter {name}")))
    }

    pub fn state(&self, name: &str) -> Result<&Tensor<S>> {
        self.state
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unmounted statistic {name}")))
    }
}

/// Initial tensors for a schema, drawn into a plain list. Convenience for
/// gradient checks that treat parameters as check inputs.
pub fn trainable_tensors<S: Scalar>(schema: &[SchemaEntry], rng: &mut ChaCha8Rng) -> Vec<Tensor<S>> {
    schema
        .iter()
        .filter(|e| e.trainable)
        .map(|e| init_tensor(e, rng))
        .collect()
}
