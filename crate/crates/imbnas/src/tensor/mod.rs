//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Covers exactly the operator set the cell search space needs (convolutions,
//! average pooling, batch norm, relu, linear, global average pool, elementwise
//! add/mul, weighted softmax cross-entropy) plus SGD with momentum and a
//! milestone learning-rate schedule. Training runs in `f32`; a `f64` mode
//! exists so gradient oracles can be checked at tight tolerances.

mod fdcheck;
pub mod ops;
mod optim;
mod tape;

pub use fdcheck::{default_eps, finite_diff_grad, gradient_suite, max_rel_err, GradCheckReport};
pub use optim::{lr_at_epoch, LrSchedule, SgdMomentum};
pub use tape::{forward_op, GradMap, OpKind, Tape, ValueId};

use std::collections::BTreeMap;
use std::fmt;

/// Scalar types the engine runs on. `f32` for training, `f64` for oracles.
pub trait Element:
    num_traits::Float + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    const DTYPE: Dtype;
    fn from_f64(v: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn into_f64(self) -> f64 {
        self
    }
}

/// Element type tag used by the checkpoint format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn to_u8(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: expected {expected}")]
    InvalidShape { shape: Vec<usize>, expected: String },
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("unknown parameter key `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter key `{0}`")]
    DuplicateParam(String),
    #[error("tape invalidated: parameters mutated since recording (version {recorded} -> {current})")]
    TapeInvalidated { recorded: u64, current: u64 },
    #[error("backward seed must be scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadEps(f64),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major tensor. Images are laid out N x C x H x W.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<E = f32> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Element> Tensor<E> {
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![E::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], v: E) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: E) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> E) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// The single element of a scalar (or length-1) tensor.
    pub fn item(&self) -> E {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interpret as an N x C x H x W image batch.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(TensorError::InvalidShape {
                shape: self.shape.clone(),
                expected: "rank-4 N x C x H x W".into(),
            }),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[a, b] => Ok((a, b)),
            _ => Err(TensorError::InvalidShape {
                shape: self.shape.clone(),
                expected: "rank-2".into(),
            }),
        }
    }

    /// Cast elementwise through f64.
    pub fn cast<T: Element>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.into_f64())).collect(),
        }
    }
}

/// Whether a parameter belongs to the feature extractor or the final
/// linear classifier. The P1 adaptation procedure freezes all
/// backbone-tagged keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamTag {
    Backbone,
    Classifier,
}

#[derive(Clone, Debug)]
pub struct Param<E> {
    pub value: Tensor<E>,
    pub tag: ParamTag,
}

/// Named parameter collection. Keys are fixed after initialization; every
/// mutation bumps a version counter so stale tapes are rejected.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<E = f32> {
    entries: BTreeMap<String, Param<E>>,
    version: u64,
}

impl<E: Element> ParamSet<E> {
    pub fn new() -> Self {
        ParamSet {
            entries: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn insert(&mut self, key: &str, tag: ParamTag, value: Tensor<E>) -> Result<()> {
        if self.entries.contains_key(key) {
            return Err(TensorError::DuplicateParam(key.to_string()));
        }
        self.entries.insert(key.to_string(), Param { value, tag });
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&Tensor<E>> {
        self.entries
            .get(key)
            .map(|p| &p.value)
            .ok_or_else(|| TensorError::UnknownParam(key.to_string()))
    }

    pub fn tag(&self, key: &str) -> Result<ParamTag> {
        self.entries
            .get(key)
            .map(|p| p.tag)
            .ok_or_else(|| TensorError::UnknownParam(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters, optionally restricted by tag.
    pub fn scalar_count(&self, tag: Option<ParamTag>) -> u64 {
        self.entries
            .values()
            .filter(|p| tag.map_or(true, |t| p.tag == t))
            .map(|p| p.value.len() as u64)
            .sum()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<E>)> {
        self.entries.iter().map(|(k, p)| (k.as_str(), p))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Replace a parameter value (shape must match). Bumps the version.
    pub fn set_value(&mut self, key: &str, value: Tensor<E>) -> Result<()> {
        let entry = self
            .entries
            .get_mut(key)
            .ok_or_else(|| TensorError::UnknownParam(key.to_string()))?;
        if entry.value.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch {
                op: format!("set_value({key})"),
                lhs: entry.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        entry.value = value;
        self.version += 1;
        Ok(())
    }

    /// Mutate values in place through a closure; bumps the version once.
    pub fn mutate<F>(&mut self, mut f: F)
    where
        F: FnMut(&str, ParamTag, &mut Tensor<E>),
    {
        for (k, p) in self.entries.iter_mut() {
            f(k, p.tag, &mut p.value);
        }
        self.version += 1;
    }

    /// Keys carrying a given tag, in key order.
    pub fn keys_with_tag(&self, tag: ParamTag) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, p)| p.tag == tag)
            .map(|(k, _)| k.clone())
            .collect()
    }
}
