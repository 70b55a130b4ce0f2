//! Named parameter sets. Shapes are registered once per model config; the
//! same registry drives allocation, counting, binding into a graph and
//! serialization.

use std::sync::Arc;

use jeap_tensor::{Graph, Scalar, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given standard deviation, truncated at two sigma.
    Normal(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// Whether weight decay applies.
    pub decay: bool,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamRegistry {
    specs: Vec<ParamSpec>,
}

impl ParamRegistry {
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, init: Init, decay: bool) -> usize {
        self.specs.push(ParamSpec {
            name: name.into(),
            shape,
            init,
            decay,
        });
        self.specs.len() - 1
    }

    pub fn weight(&mut self, name: impl Into<String>, shape: Vec<usize>, std: f64) -> usize {
        self.add(name, shape, Init::Normal(std), true)
    }

    pub fn bias(&mut self, name: impl Into<String>, n: usize) -> usize {
        self.add(name, vec![n], Init::Zeros, false)
    }

    pub fn gain(&mut self, name: impl Into<String>, n: usize) -> usize {
        self.add(name, vec![n], Init::Ones, false)
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.specs.iter().map(ParamSpec::numel).sum()
    }

    pub fn into_specs(self) -> Arc<[ParamSpec]> {
        self.specs.into()
    }
}

/// Concrete tensors for a registered set of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    specs: Arc<[ParamSpec]>,
    tensors: Vec<Tensor<T>>,
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn init<R: Rng + ?Sized>(specs: Arc<[ParamSpec]>, rng: &mut R) -> Self {
        let tensors = specs
            .iter()
            .map(|s| match s.init {
                Init::Zeros => Tensor::zeros(s.shape.clone()),
                Init::Ones => Tensor::ones(s.shape.clone()),
                Init::Normal(std) => Tensor::from_fn(s.shape.clone(), |_| T::lit(truncated_normal(rng) * std)),
            })
            .collect();
        Self { specs, tensors }
    }

    pub fn zeros(specs: Arc<[ParamSpec]>) -> Self {
        let tensors = specs.iter().map(|s| Tensor::zeros(s.shape.clone())).collect();
        Self { specs, tensors }
    }

    /// Builds a set from explicit tensors, checking names' shapes.
    pub fn from_tensors(specs: Arc<[ParamSpec]>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        if specs.len() != tensors.len() {
            return Err(config_err(format!("expected {} tensors, got {}", specs.len(), tensors.len())));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if s.shape != t.shape() {
                return Err(config_err(format!("{}: expected shape {:?}, got {:?}", s.name, s.shape, t.shape())));
            }
        }
        Ok(Self { specs, tensors })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn shared_specs(&self) -> Arc<[ParamSpec]> {
        self.specs.clone()
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.specs.iter().position(|s| s.name == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn same_structure<U>(&self, other: &ParamSet<U>) -> bool {
        self.specs.len() == other.specs.len()
            && self
                .specs
                .iter()
                .zip(other.specs.iter())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            specs: self.specs.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Records every parameter on `graph`, as trainable leaves or as constants.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Result<Vec<Var>> {
        self.tensors
            .iter()
            .map(|t| {
                let v = if trainable {
                    graph.leaf(t.clone())?
                } else {
                    graph.constant(t.clone())?
                };
                Ok(v)
            })
            .collect()
    }

    /// Largest absolute elementwise difference to a structurally equal set.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if !self.same_structure(other) {
            return Err(config_err("parameter sets differ in structure"));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            worst = worst.max(a.max_abs_diff(b)?.as_f64());
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_kinds_and_truncation() {
        let mut reg = ParamRegistry::default();
        reg.weight("w", vec![50, 40], 0.1);
        reg.bias("b", 40);
        reg.gain("g", 40);
        assert_eq!(reg.total(), 2080);
        let set = ParamSet::<f32>::init(reg.into_specs(), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(set.get("w").unwrap().data().iter().all(|v| v.abs() <= 0.2 + 1e-6));
        assert!(set.get("b").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(set.get("g").unwrap().data().iter().all(|&v| v == 1.0));
    }
}
