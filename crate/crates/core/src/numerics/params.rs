use std::sync::Arc;

use indexmap::IndexMap;
use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: Arc<Tensor>,
    grad: Tensor,
}

/// Named parameters in insertion order, each with a gradient slot of the
/// same shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Entry>,
    grads_ready: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "insert" });
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(
            name,
            Entry {
                value: Arc::new(value),
                grad,
            },
        );
        Ok(())
    }

    fn entry(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    fn entry_mut(&mut self, name: &str) -> Result<&mut Entry> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.entry(name)?.value)
    }

    pub(crate) fn value_arc(&self, name: &str) -> Result<Arc<Tensor>> {
        Ok(Arc::clone(&self.entry(name)?.value))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        Ok(Arc::make_mut(&mut self.entry_mut(name)?.value))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.entry(name)?.grad)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &*e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn num_elements(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn add_grad(&mut self, name: &str, g: &Tensor) -> Result<()> {
        let entry = self.entry_mut(name)?;
        if entry.grad.shape() != g.shape() {
            return Err(Error::shape("add_grad", entry.grad.shape(), g.shape()));
        }
        entry.grad.add_assign(g);
        Ok(())
    }

    pub(crate) fn mark_grads_ready(&mut self) {
        self.grads_ready = true;
    }

    pub fn grads_ready(&self) -> bool {
        self.grads_ready
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
        self.grads_ready = false;
    }

    /// Scales every gradient slot, e.g. to average shard contributions.
    pub fn scale_grads(&mut self, s: f64) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor, &Tensor)> {
        self.entries
            .values_mut()
            .map(|e| (Arc::make_mut(&mut e.value), &e.grad))
    }

    /// Bitwise equality of all parameter values (gradients ignored).
    pub fn values_bit_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, a), (nb, b))| {
                    na == nb
                        && a.value.shape() == b.value.shape()
                        && a.value
                            .data()
                            .iter()
                            .zip(b.value.data())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}

/// Glorot-uniform matrix in `±sqrt(6 / (fan_in + fan_out))`, laid out
/// `[fan_out, fan_in]`.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, fan_out: usize, fan_in: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![fan_out, fan_in], data).expect("shape matches data")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique_and_ordered() {
        let mut s = ParamStore::new();
        s.insert("b", Tensor::zeros(&[2])).unwrap();
        s.insert("a", Tensor::zeros(&[3])).unwrap();
        assert!(s.insert("a", Tensor::zeros(&[1])).is_err());
        assert_eq!(s.names().collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(s.num_elements(), 5);
        assert_eq!(s.grad("a").unwrap().shape(), &[3]);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(&mut rng, 8, 4);
        let limit = (6.0f64 / 12.0).sqrt();
        assert_eq!(w.shape(), &[8, 4]);
        assert!(w.data().iter().all(|v| v.abs() < limit));
    }

    #[test]
    fn add_grad_checks_shape() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[2])).unwrap();
        assert!(s.add_grad("w", &Tensor::zeros(&[3])).is_err());
        assert!(s.add_grad("nope", &Tensor::zeros(&[2])).is_err());
    }
}
