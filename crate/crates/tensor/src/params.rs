use std::rc::Rc;

use crate::array::Array;
use crate::var::{Gradients, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of parameter arrays owned by one model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Rc<Array>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(Rc::new(value));
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Mutable access; copies the array if a live graph still shares it.
    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        Rc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Array) {
        assert_eq!(
            value.shape(),
            self.values[id.0].shape(),
            "shape change for parameter {}",
            self.names[id.0]
        );
        self.values[id.0] = Rc::new(value);
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(|v| &**v))
    }

    /// Creates graph leaves for every parameter. Frozen bindings produce
    /// constants, so no gradient reaches them.
    pub fn bind(&self, trainable: bool) -> Bound {
        Bound {
            vars: self
                .values
                .iter()
                .map(|v| Var::leaf_shared(Rc::clone(v), trainable))
                .collect(),
        }
    }
}

/// Parameters of one store bound into a single forward pass.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }

    pub fn is_trainable(&self) -> bool {
        self.vars.first().is_some_and(Var::requires_grad)
    }

    /// Gradient per parameter, zero-filled where none flowed.
    pub fn grads(&self, grads: &Gradients) -> Vec<Array> {
        self.vars
            .iter()
            .map(|v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Array::zeros(v.shape()))
            })
            .collect()
    }

    /// Whether any parameter received a gradient.
    pub fn any_grad(&self, grads: &Gradients) -> bool {
        self.vars.iter().any(|v| grads.get(v).is_some())
    }
}
