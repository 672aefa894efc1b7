use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors. Biases are stored as `1 x n` matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize),
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let v = Array2::from_shape_fn(shape, |_| rng.random_range(-bound..bound));
        self.add(name, v)
    }

    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
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

    /// Ids whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |&id| self.names[id.0].starts_with(prefix))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (n, v) in self.names.iter().zip(&self.values) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {n}")));
            }
        }
        Ok(())
    }

    /// Copies every tensor whose name starts with `from` into the tensor
    /// named with `to` substituted for that prefix.
    pub fn copy_prefix(&mut self, from: &str, to: &str) -> Result<()> {
        let pairs: Vec<(usize, usize)> = self
            .names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                n.strip_prefix(from)
                    .map(|rest| (i, format!("{to}{rest}")))
            })
            .map(|(i, target)| {
                self.names
                    .iter()
                    .position(|n| *n == target)
                    .map(|j| (i, j))
                    .ok_or_else(|| Error::Checkpoint(format!("no parameter {target}")))
            })
            .collect::<Result<_>>()?;
        for (i, j) in pairs {
            if self.values[i].dim() != self.values[j].dim() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch copying {} -> {}",
                    self.names[i], self.names[j]
                )));
            }
            self.values[j] = self.values[i].clone();
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Gradient buffers aligned with a [`ParamStore`]; untouched entries stay
/// unallocated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn new(n: usize) -> Self {
        Self {
            grads: vec![None; n],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(acc) => *acc += g,
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn accumulate_owned(&mut self, id: ParamId, g: Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            *g *= s;
        }
    }

    pub fn squared_norm<I: IntoIterator<Item = ParamId>>(&self, ids: I) -> f64 {
        ids.into_iter()
            .filter_map(|id| self.get(id))
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
