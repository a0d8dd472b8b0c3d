//! Named parameter storage and the layer building blocks shared by the model parts.

use std::ops::Index;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diff::{DenseArray, Graph, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Ordered collection of named weight arrays.
#[derive(Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<DenseArray>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseArray) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
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

    pub fn get(&self, id: ParamId) -> &DenseArray {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut DenseArray {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Place every parameter on `g` as a leaf; trainable leaves receive gradients.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|v| if trainable { g.param(Arc::clone(v)) } else { g.constant(Arc::clone(v)) })
            .collect();
        Bound { vars }
    }
}

/// Graph handles of a bound [`ParamStore`].
#[derive(Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Substitute the node used for one parameter (e.g. to differentiate w.r.t. it alone).
    pub fn set(&mut self, id: ParamId, var: Var) {
        self.vars[id.0] = var;
    }

    pub fn vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.vars.iter().enumerate().map(|(i, &v)| (ParamId(i), v))
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Seeded He-style (fan-in) initialiser.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn he(&mut self, shape: &[usize], fan_in: usize) -> DenseArray {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        DenseArray::from_fn(shape, |_| normal.sample(&mut self.rng))
    }
}

/// `k x k` convolution with bias and zero padding `pad`.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub pad: usize,
}

impl Conv {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init.he(&[c_out, c_in, k, k], c_in * k * k));
        let bias = store.add(format!("{name}.bias"), DenseArray::zeros(&[c_out]));
        Self { weight, bias, pad: k / 2 }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p[self.weight], Some(p[self.bias]), 1, self.pad)
    }
}

/// Affine map on the last axis of `[rows, in]` inputs.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init.he(&[d_in, d_out], d_in));
        let bias = store.add(format!("{name}.bias"), DenseArray::zeros(&[d_out]));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.weight])?;
        g.add(y, p[self.bias])
    }
}

/// Layer normalisation over the last axis with learned gain and shift.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), DenseArray::full(&[d], 1.0));
        let shift = store.add(format!("{name}.shift"), DenseArray::zeros(&[d]));
        Self { gain, shift }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let n = g.layer_norm(x, Self::EPS)?;
        let s = g.mul(n, p[self.gain])?;
        g.add(s, p[self.shift])
    }
}
