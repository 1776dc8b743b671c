//! Named parameter store: values and gradients kept in registration order.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NumericsError;

/// Index of a registered parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Initialization schemes used across the crate.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Gaussian with the given standard deviation.
    Normal(f64),
    /// Xavier/Glorot uniform for a `[fan_in, fan_out]` matrix.
    XavierUniform,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    meta: Vec<ParamMeta>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId, NumericsError> {
        let len: usize = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![0.0; len],
            Init::Ones => vec![1.0; len],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("finite std");
                (0..len).map(|_| dist.sample(rng)).collect()
            }
            Init::XavierUniform => {
                let (fan_in, fan_out) = match shape {
                    [a, b] => (*a, *b),
                    [a] => (*a, *a),
                    _ => (len, len),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
            }
        };
        self.insert(name, shape, value)
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        value: Vec<f64>,
    ) -> Result<ParamId, NumericsError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::DuplicateParam(name));
        }
        let len: usize = shape.iter().product();
        if value.len() != len {
            return Err(NumericsError::ShapeMismatch {
                name,
                expected: len,
                got: value.len(),
            });
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.meta.push(ParamMeta {
            name,
            shape: shape.to_vec(),
        });
        self.grads.push(vec![0.0; len]);
        self.values.push(value);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn meta(&self, id: ParamId) -> &ParamMeta {
        &self.meta[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn value_and_grad(&mut self, id: ParamId) -> (&mut [f64], &[f64]) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Borrow values immutably and gradients mutably at the same time.
    pub fn split(&mut self) -> (Values<'_>, Grads<'_>) {
        (Values(&self.values), Grads(&mut self.grads))
    }

    pub fn values(&self) -> Values<'_> {
        Values(&self.values)
    }

    /// Bitwise equality of names, shapes and values.
    pub fn same_values(&self, other: &ParamStore) -> bool {
        self.meta == other.meta
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }

    pub fn copy_values_from(&mut self, other: &ParamStore) {
        assert_eq!(self.meta, other.meta, "parameter layouts differ");
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            dst.copy_from_slice(src);
        }
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&ParamMeta, &[f64])> {
        self.meta.iter().zip(self.values.iter().map(Vec::as_slice))
    }
}

/// Read-only view over parameter values.
#[derive(Clone, Copy)]
pub struct Values<'a>(&'a [Vec<f64>]);

impl<'a> Values<'a> {
    #[inline]
    pub fn get(&self, id: ParamId) -> &'a [f64] {
        &self.0[id.0]
    }
}

/// Mutable view over parameter gradients.
pub struct Grads<'a>(&'a mut [Vec<f64>]);

impl Grads<'_> {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    /// Two distinct gradient buffers at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a, b);
        if a.0 < b.0 {
            let (lo, hi) = self.0.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.0.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }
}
