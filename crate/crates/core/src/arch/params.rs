use std::collections::BTreeMap;

use rand::Rng;

use super::layer::{ParamRole, ParamSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor<f32>,
    /// False for batchnorm moving statistics.
    pub trainable: bool,
    /// Excluded from optimizer updates and from gradient tracking.
    pub frozen: bool,
}

/// Named parameter tensors of a model, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

pub(crate) fn init_tensor<R: Rng + ?Sized>(spec: &ParamSpec, rng: &mut R) -> Tensor<f32> {
    match spec.role {
        ParamRole::Weight { fan_in } => {
            let limit = (6.0 / fan_in as f64).sqrt() as f32;
            let data = (0..spec.len()).map(|_| rng.random_range(-limit..limit)).collect();
            Tensor::new(spec.shape.clone(), data).expect("param shape")
        }
        ParamRole::Bias | ParamRole::Beta | ParamRole::MovingMean => Tensor::zeros(spec.shape.clone()),
        ParamRole::Gamma | ParamRole::MovingVar => Tensor::full(spec.shape.clone(), 1.0),
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates and initializes parameters in the given order.
    pub fn initialize<R: Rng + ?Sized>(specs: &[ParamSpec], rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        for spec in specs {
            let value = init_tensor(spec, rng);
            store.insert(&spec.name, value, spec.role.trainable())?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: &str, value: Tensor<f32>, trainable: bool) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(
            name.to_string(),
            Param {
                value,
                trainable,
                frozen: false,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Parameters the optimizer updates: trainable and not frozen.
    pub fn optimized(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter().filter(|(_, p)| p.trainable && !p.frozen)
    }

    /// Freezes or unfreezes every parameter whose name starts with `prefix`.
    pub fn set_frozen(&mut self, prefix: &str, frozen: bool) -> usize {
        let mut n = 0;
        for (name, p) in self.params.iter_mut() {
            if name.starts_with(prefix) {
                p.frozen = frozen;
                n += 1;
            }
        }
        n
    }

    /// Copies every parameter of `other` in under `prefix`, replacing
    /// existing values of matching shape.
    pub fn load_prefixed(&mut self, prefix: &str, other: &ParamStore) -> Result<()> {
        for (name, p) in other.iter() {
            let full = format!("{prefix}{name}");
            let dst = self.get_mut(&full)?;
            if dst.value.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter `{full}` has shape {:?}, source has {:?}",
                    dst.value.shape(),
                    p.value.shape()
                )));
            }
            dst.value = p.value.clone();
        }
        Ok(())
    }

    /// Parameters under `prefix`, with the prefix stripped.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamStore {
        let params = self
            .params
            .iter()
            .filter_map(|(n, p)| {
                n.strip_prefix(prefix).map(|rest| {
                    (
                        rest.to_string(),
                        Param {
                            frozen: false,
                            ..p.clone()
                        },
                    )
                })
            })
            .collect();
        ParamStore { params }
    }

    pub fn totals(&self) -> (usize, usize) {
        self.params.values().fold((0, 0), |(t, n), p| {
            if p.trainable {
                (t + p.value.len(), n)
            } else {
                (t, n + p.value.len())
            }
        })
    }
}
