use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::array::Array;

/// Maps the gradient of a node's output to gradients of each parent.
/// `None` marks a parent that receives no gradient.
pub type BackwardFn = Box<dyn Fn(&Array) -> Vec<Option<Array>>>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

struct Node {
    id: u64,
    value: Rc<Array>,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// A value in the computation graph.
///
/// Cloning a `Var` is cheap and shares the node. Parents always have smaller
/// ids than their children, so descending id order is a topological order.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Var#{}({:?}, grad={})",
            self.0.id, self.0.value, self.0.requires_grad
        )
    }
}

impl Var {
    /// Leaf that does not take gradients.
    pub fn constant(value: Array) -> Self {
        Self::leaf_shared(Rc::new(value), false)
    }

    /// Leaf that accumulates gradients.
    pub fn parameter(value: Array) -> Self {
        Self::leaf_shared(Rc::new(value), true)
    }

    pub fn leaf_shared(value: Rc<Array>, requires_grad: bool) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Builds an interior node. The backward closure is dropped when no
    /// parent requires gradients.
    pub fn from_op(value: Array, parents: Vec<Var>, backward: BackwardFn) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        Var(Rc::new(Node {
            id: next_id(),
            value: Rc::new(value),
            requires_grad,
            parents: if requires_grad { parents } else { Vec::new() },
            backward: if requires_grad { Some(backward) } else { None },
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn value(&self) -> &Array {
        &self.0.value
    }

    pub fn shared_value(&self) -> Rc<Array> {
        Rc::clone(&self.0.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var::leaf_shared(self.shared_value(), false)
    }

    pub fn item(&self) -> f64 {
        self.0.value.item()
    }

    /// Reverse-mode sweep from a scalar output.
    pub fn backward(&self) -> Gradients {
        assert_eq!(
            self.value().len(),
            1,
            "backward() needs a scalar, got shape {:?}",
            self.shape()
        );
        self.backward_with(Array::full(self.shape(), 1.0))
    }

    /// Reverse-mode sweep seeded with an explicit output gradient.
    pub fn backward_with(&self, seed: Array) -> Gradients {
        assert_eq!(seed.shape(), self.shape(), "seed shape mismatch");
        let mut leaves = HashMap::new();
        if !self.requires_grad() {
            return Gradients { grads: leaves };
        }

        let mut nodes: HashMap<u64, Var> = HashMap::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if nodes.contains_key(&v.id()) {
                continue;
            }
            for p in &v.0.parents {
                if p.requires_grad() && !nodes.contains_key(&p.id()) {
                    stack.push(p.clone());
                }
            }
            nodes.insert(v.id(), v);
        }
        let mut order: Vec<u64> = nodes.keys().copied().collect();
        order.sort_unstable_by(|a, b| b.cmp(a));

        let mut pending: HashMap<u64, Array> = HashMap::new();
        pending.insert(self.id(), seed);
        for id in order {
            let node = &nodes[&id];
            let Some(grad) = pending.remove(&id) else {
                continue;
            };
            match &node.0.backward {
                None => {
                    leaves.insert(id, grad);
                }
                Some(f) => {
                    let parent_grads = f(&grad);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (p, g) in node.0.parents.iter().zip(parent_grads) {
                        let Some(g) = g else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        assert_eq!(
                            g.shape(),
                            p.shape(),
                            "backward produced gradient of wrong shape"
                        );
                        match pending.get_mut(&p.id()) {
                            Some(acc) => acc.add_assign(&g),
                            None => {
                                pending.insert(p.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Gradients { grads: leaves }
    }
}

/// Gradients of leaf variables after a backward sweep.
#[derive(Default)]
pub struct Gradients {
    grads: HashMap<u64, Array>,
}

impl Gradients {
    pub fn get(&self, v: &Var) -> Option<&Array> {
        self.grads.get(&v.id())
    }

    pub fn take(&mut self, v: &Var) -> Option<Array> {
        self.grads.remove(&v.id())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
