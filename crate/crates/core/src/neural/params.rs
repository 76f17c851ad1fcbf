use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, ArrayView1, ArrayView2, Ix1, Ix2, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::StnsTensor;

/// Per-tensor flags, fixed when the tensor is inserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamFlags {
    pub trainable: bool,
    pub reinitialized: bool,
    /// Running statistics: saved and averaged into the teacher, never optimized.
    pub buffer: bool,
}

impl ParamFlags {
    pub const TRAINABLE: Self = Self {
        trainable: true,
        reinitialized: false,
        buffer: false,
    };
    pub const REINIT: Self = Self {
        trainable: true,
        reinitialized: true,
        buffer: false,
    };
    pub const BUFFER: Self = Self {
        trainable: false,
        reinitialized: false,
        buffer: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub flags: ParamFlags,
}

/// Named tensors with immutable flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>, flags: ParamFlags) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter {name:?}")));
        }
        self.params.insert(name, Param { value, flags });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &ArrayD<f64> {
        &self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
            .value
    }

    pub fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        self.value(name)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap_or_else(|_| panic!("parameter {name:?} is not a matrix"))
    }

    pub fn vec(&self, name: &str) -> ArrayView1<'_, f64> {
        self.value(name)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap_or_else(|_| panic!("parameter {name:?} is not a vector"))
    }

    /// Replaces a tensor's value; the shape must not change.
    pub fn set(&mut self, name: &str, value: ArrayD<f64>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: {:?} vs {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut ArrayD<f64>> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut_values(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.params.iter_mut().map(|(k, p)| (k, &mut p.value))
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

    /// Scalar count of non-buffer tensors.
    pub fn num_parameters(&self) -> usize {
        self.params
            .values()
            .filter(|p| !p.flags.buffer)
            .map(|p| p.value.len())
            .sum()
    }

    /// Copy without tensors whose name starts with `prefix`, with every
    /// trainable flag cleared.
    pub fn frozen_copy_without(&self, prefix: &str) -> Self {
        let params = self
            .params
            .iter()
            .filter(|(k, _)| !k.starts_with(prefix))
            .map(|(k, p)| {
                let flags = ParamFlags {
                    trainable: false,
                    ..p.flags
                };
                (
                    k.clone(),
                    Param {
                        value: p.value.clone(),
                        flags,
                    },
                )
            })
            .collect();
        Self { params }
    }

    /// Writes one `name.stns` file per tensor plus `index.json`.
    pub fn save(&self, dir: impl AsRef<Path>, step: usize) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.params.len());
        for (name, p) in &self.params {
            let t = StnsTensor {
                shape: p.value.shape().to_vec(),
                data: p.value.iter().map(|&v| v as f32).collect(),
            };
            t.write(dir.join(format!("{name}.stns")))?;
            entries.push(IndexEntry {
                name: name.clone(),
                shape: p.value.shape().to_vec(),
                flags: p.flags,
            });
        }
        let index = CheckpointIndex { step, tensors: entries };
        let path = dir.join("index.json");
        fs::write(&path, serde_json::to_vec_pretty(&index)?).map_err(|e| Error::io(&path, e))
    }

    /// Reads a directory written by [`ParamStore::save`]; returns the store
    /// and its step counter.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, usize)> {
        let dir = dir.as_ref();
        let path = dir.join("index.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: CheckpointIndex = serde_json::from_str(&text)?;
        let mut store = Self::new();
        for e in index.tensors {
            let t = StnsTensor::read(dir.join(format!("{}.stns", e.name)))?;
            if t.shape != e.shape {
                return Err(Error::Shape(format!(
                    "{}: index says {:?}, file has {:?}",
                    e.name, e.shape, t.shape
                )));
            }
            let value = ArrayD::from_shape_vec(IxDyn(&t.shape), t.data.into_iter().map(f64::from).collect())
                .map_err(|err| Error::Shape(err.to_string()))?;
            store.insert(e.name, value, e.flags)?;
        }
        Ok((store, index.step))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    #[serde(flatten)]
    flags: ParamFlags,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointIndex {
    step: usize,
    tensors: Vec<IndexEntry>,
}

/// Gradient accumulator keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    map: BTreeMap<String, ArrayD<f64>>,
}

impl Grads {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<D: ndarray::Dimension>(&mut self, name: &str, g: ndarray::Array<f64, D>) {
        let g = g.into_dyn();
        match self.map.get_mut(name) {
            Some(acc) => *acc += &g,
            None => {
                self.map.insert(name.to_string(), g);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Global L2 norm over every tensor whose name starts with `prefix`.
    pub fn norm(&self, prefix: &str) -> f64 {
        self.map
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
