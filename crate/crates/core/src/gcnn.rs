//! The model: a stack of degree-scaled multi-aggregator graph convolution
//! layers, global mean pooling, and a fully connected head, with a
//! hand-derived backward pass, MSE loss, and AdamW.
//!
//! One conv layer computes, per node `i` with in-neighbors `j`:
//!
//! ```text
//! m_ij = W_m . concat(x_j, e_ij) + b_m            (messages)
//! a_k  = agg_k { m_ij }                            (mean/min/max/std)
//! z    = concat_k,s ( scale_s(d_i) * a_k )         (degree scalers)
//! x'_i = relu( W_u . z + b_u )
//! ```
//!
//! Scalers: identity 1, amplification `ln(d+1)/delta`, attenuation
//! `delta/ln(d+1)`, where `delta` is the mean of `ln(d+1)` over training-set
//! in-degrees, fixed at startup. Isolated nodes use zero aggregates and
//! identity scaling. There is no self-feature path: a node sees itself only
//! through incoming edges.
//!
//! The backward pass is written by hand against this exact forward
//! definition; finite-difference suites pin it down. Gradients for min/max
//! route to the first-scanned extreme element (canonical edge order);
//! the std aggregator uses `sigma = sqrt(var + EPS_VAR)`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis, ScalarOperand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataload::{Batch, LoadError};
use crate::graphenc::GraphSample;
use crate::wire::{self, Cursor};

/// Variance floor inside the std aggregator.
pub const EPS_VAR: f64 = 1e-10;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GNC1";
pub const CHECKPOINT_VERSION: u32 = 1;

const SEC_CONFIG: u8 = 1;
const SEC_PARAMS: u8 = 2;
const SEC_OPT: u8 = 3;
const SEC_MOM1: u8 = 4;
const SEC_MOM2: u8 = 5;

#[derive(Debug, Error)]
pub enum GcnnError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },
    #[error("graph slot {slot} has no nodes")]
    EmptyGraphSlot { slot: usize },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element type for model arithmetic. `f32` is the training default; `f64`
/// backs the gradient and equivalence test suites.
pub trait Scalar:
    ndarray::LinalgScalar
    + num_traits::Float
    + ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Precision tag stored in checkpoints: 0 = f32, 1 = f64.
    const PRECISION: u8;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const PRECISION: u8 = 0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const PRECISION: u8 = 1;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    Min,
    Max,
    Std,
}

impl Aggregator {
    pub const ALL: [Aggregator; 4] = [
        Aggregator::Mean,
        Aggregator::Min,
        Aggregator::Max,
        Aggregator::Std,
    ];

    fn code(self) -> u8 {
        match self {
            Aggregator::Mean => 0,
            Aggregator::Min => 1,
            Aggregator::Max => 2,
            Aggregator::Std => 3,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaler {
    Identity,
    Amplification,
    Attenuation,
}

impl Scaler {
    pub const ALL: [Scaler; 3] = [Scaler::Identity, Scaler::Amplification, Scaler::Attenuation];

    fn code(self) -> u8 {
        match self {
            Scaler::Identity => 0,
            Scaler::Amplification => 1,
            Scaler::Attenuation => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }
}

/// Degree scaling factor. Isolated nodes scale by 1 for every scaler.
fn scale_factor(s: Scaler, degree: usize, delta: f64) -> f64 {
    if degree == 0 {
        return 1.0;
    }
    let ln = ((degree + 1) as f64).ln();
    match s {
        Scaler::Identity => 1.0,
        Scaler::Amplification => ln / delta,
        Scaler::Attenuation => delta / ln,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_conv_layers: usize,
    pub hidden_width: usize,
    pub fc_layers: usize,
    pub aggregators: Vec<Aggregator>,
    pub scalers: Vec<Scaler>,
    pub node_features: usize,
    pub edge_features: usize,
    pub use_edge_features: bool,
}

impl ModelConfig {
    /// Defaults: 6 conv layers of width 55, a 2-layer head, all aggregators
    /// and scalers, edge features on.
    pub fn new(node_features: usize, edge_features: usize) -> Self {
        ModelConfig {
            num_conv_layers: 6,
            hidden_width: 55,
            fc_layers: 2,
            aggregators: Aggregator::ALL.to_vec(),
            scalers: Scaler::ALL.to_vec(),
            node_features,
            edge_features,
            use_edge_features: true,
        }
    }

    pub fn validate(&self) -> Result<(), GcnnError> {
        let bad = |m: String| Err(GcnnError::InvalidConfig(m));
        if self.num_conv_layers == 0
            || self.hidden_width == 0
            || self.fc_layers == 0
            || self.node_features == 0
        {
            return bad("layer counts and widths must be positive".to_string());
        }
        if self.use_edge_features && self.edge_features == 0 {
            return bad("edge features enabled but width is zero".to_string());
        }
        if self.aggregators.is_empty() {
            return bad("at least one aggregator required".to_string());
        }
        if !self.scalers.contains(&Scaler::Identity) {
            return bad("identity scaler must be present".to_string());
        }
        for (i, a) in self.aggregators.iter().enumerate() {
            if self.aggregators[..i].contains(a) {
                return bad(format!("duplicate aggregator {a:?}"));
            }
        }
        for (i, s) in self.scalers.iter().enumerate() {
            if self.scalers[..i].contains(s) {
                return bad(format!("duplicate scaler {s:?}"));
            }
        }
        Ok(())
    }

    fn effective_edge_features(&self) -> usize {
        if self.use_edge_features {
            self.edge_features
        } else {
            0
        }
    }

    /// Message input width for a conv layer: node features (or hidden
    /// width after layer 0) plus edge features.
    pub fn message_in_width(&self, layer: usize) -> usize {
        let node_w = if layer == 0 {
            self.node_features
        } else {
            self.hidden_width
        };
        node_w + self.effective_edge_features()
    }

    /// Width of the concatenated aggregator x scaler block.
    pub fn concat_width(&self) -> usize {
        self.aggregators.len() * self.scalers.len() * self.hidden_width
    }
}

/// Training hyperparameters. Defaults: lr 0.001, local batch 128, max 3
/// epochs, AdamW decay 0.01 with betas (0.9, 0.999) and epsilon 1e-8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub learning_rate: f64,
    pub local_batch_size: usize,
    pub max_epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            learning_rate: 0.001,
            local_batch_size: 128,
            max_epochs: 3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), GcnnError> {
        if self.learning_rate <= 0.0
            || self.local_batch_size == 0
            || self.max_epochs == 0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.beta1 <= 0.0
            || self.beta2 <= 0.0
            || self.epsilon <= 0.0
            || self.weight_decay < 0.0
        {
            return Err(GcnnError::InvalidConfig(
                "hyperparameters out of range".to_string(),
            ));
        }
        Ok(())
    }
}

/// Affine map `y = x . w + b` with `w: (in, out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    fn apply(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub msg: Linear<T>,
    pub update: Linear<T>,
}

/// All trainable tensors, in a fixed traversal order shared by gradient
/// flattening, collectives, and checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub conv: Vec<ConvLayer<T>>,
    pub fc: Vec<Linear<T>>,
}

pub enum TensorRef<'a, T> {
    Mat(&'a Array2<T>),
    Vec(&'a Array1<T>),
}

pub enum TensorMut<'a, T> {
    Mat(&'a mut Array2<T>),
    Vec(&'a mut Array1<T>),
}

impl<'a, T: Scalar> TensorRef<'a, T> {
    fn as_slice(&self) -> &[T] {
        match self {
            TensorRef::Mat(m) => m.as_slice().expect("contiguous"),
            TensorRef::Vec(v) => v.as_slice().expect("contiguous"),
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            TensorRef::Mat(m) => (m.nrows(), m.ncols()),
            TensorRef::Vec(v) => (v.len(), 0),
        }
    }
}

impl<'a, T: Scalar> TensorMut<'a, T> {
    fn as_slice_mut(&mut self) -> &mut [T] {
        match self {
            TensorMut::Mat(m) => m.as_slice_mut().expect("contiguous"),
            TensorMut::Vec(v) => v.as_slice_mut().expect("contiguous"),
        }
    }
}

impl<T: Scalar> Params<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_width;
        let conv = (0..config.num_conv_layers)
            .map(|l| ConvLayer {
                msg: Linear::zeros(config.message_in_width(l), h),
                update: Linear::zeros(config.concat_width(), h),
            })
            .collect();
        let fc = (0..config.fc_layers)
            .map(|j| {
                let out = if j + 1 == config.fc_layers { 1 } else { h };
                Linear::zeros(h, out)
            })
            .collect();
        Params { conv, fc }
    }

    /// Named tensors in traversal order.
    pub fn named(&self) -> Vec<(String, TensorRef<'_, T>)> {
        let mut out = Vec::new();
        for (i, l) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.msg.w"), TensorRef::Mat(&l.msg.w)));
            out.push((format!("conv{i}.msg.b"), TensorRef::Vec(&l.msg.b)));
            out.push((format!("conv{i}.update.w"), TensorRef::Mat(&l.update.w)));
            out.push((format!("conv{i}.update.b"), TensorRef::Vec(&l.update.b)));
        }
        for (j, l) in self.fc.iter().enumerate() {
            out.push((format!("fc{j}.w"), TensorRef::Mat(&l.w)));
            out.push((format!("fc{j}.b"), TensorRef::Vec(&l.b)));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, TensorMut<'_, T>)> {
        let mut out = Vec::new();
        for (i, l) in self.conv.iter_mut().enumerate() {
            out.push((format!("conv{i}.msg.w"), TensorMut::Mat(&mut l.msg.w)));
            out.push((format!("conv{i}.msg.b"), TensorMut::Vec(&mut l.msg.b)));
            out.push((format!("conv{i}.update.w"), TensorMut::Mat(&mut l.update.w)));
            out.push((format!("conv{i}.update.b"), TensorMut::Vec(&mut l.update.b)));
        }
        for (j, l) in self.fc.iter_mut().enumerate() {
            out.push((format!("fc{j}.w"), TensorMut::Mat(&mut l.w)));
            out.push((format!("fc{j}.b"), TensorMut::Vec(&mut l.b)));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// Flattens every tensor into one vector in traversal order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.named() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    /// Inverse of [`Params::flatten`]; lengths must match exactly.
    pub fn unflatten_from(&mut self, flat: &[T]) {
        let mut pos = 0;
        for (_, mut t) in self.named_mut() {
            let s = t.as_slice_mut();
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        }
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }

    fn zero_out(&mut self) {
        for (_, mut t) in self.named_mut() {
            t.as_slice_mut().fill(T::zero());
        }
    }
}

/// AdamW first/second moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState<T> {
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
}

/// Everything one worker owns: parameters, gradient buffers, optimizer
/// moments, and the degree statistic delta.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
    pub grads: Params<T>,
    pub opt: AdamWState<T>,
    pub delta: f64,
}

/// Initializes a model deterministically: weights uniform in `(-a, a)` with
/// `a = sqrt(6 / (fan_in + fan_out))`, biases and moments zero. Samples are
/// drawn in f64 and cast, so f32 and f64 models start at the same values.
pub fn init_params<T: Scalar>(
    config: &ModelConfig,
    seed: u64,
    delta: f64,
) -> Result<ModelState<T>, GcnnError> {
    config.validate()?;
    if !(delta > 0.0) {
        return Err(GcnnError::InvalidConfig(format!(
            "degree statistic delta must be positive, got {delta}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<T>::zeros(config);
    for (_, mut t) in params.named_mut() {
        if let TensorMut::Mat(m) = &mut t {
            let a = (6.0 / (m.nrows() + m.ncols()) as f64).sqrt();
            for v in m.iter_mut() {
                *v = T::from_f64(rng.gen::<f64>() * 2.0 * a - a);
            }
        }
    }
    Ok(ModelState {
        config: config.clone(),
        grads: Params::zeros(config),
        opt: AdamWState {
            m: Params::zeros(config),
            v: Params::zeros(config),
            step: 0,
        },
        params,
        delta,
    })
}

/// Mean of `ln(d+1)` over in-degrees of every node in the given samples.
/// Falls back to 1.0 when the corpus has no nodes or no edges, keeping the
/// statistic positive.
pub fn degree_stat<'a>(samples: impl IntoIterator<Item = &'a GraphSample>) -> f64 {
    let mut sum = 0.0f64;
    let mut count = 0u64;
    for s in samples {
        for d in crate::graphenc::in_degrees(s) {
            sum += f64::from(d + 1).ln();
            count += 1;
        }
    }
    if count == 0 || sum == 0.0 {
        return 1.0;
    }
    sum / count as f64
}

// ---------------------------------------------------------------------------
// Typed batches

/// A batch widened to the model's element type.
#[derive(Clone, Debug)]
pub struct TypedBatch<T> {
    pub x: Array2<T>,
    pub edge_index: Array2<i64>,
    pub edge_attr: Array2<T>,
    pub y: Array1<T>,
    pub batch_vector: Vec<i64>,
    pub num_graphs: usize,
    pub ids: Vec<u64>,
}

impl<T: Scalar> TypedBatch<T> {
    pub fn from_batch(b: &Batch) -> Self {
        TypedBatch {
            x: b.x.mapv(|v| T::from_f64(f64::from(v))),
            edge_index: b.edge_index.clone(),
            edge_attr: b.edge_attr.mapv(|v| T::from_f64(f64::from(v))),
            y: b.y.mapv(|v| T::from_f64(f64::from(v))),
            batch_vector: b.batch_vector.clone(),
            num_graphs: b.num_graphs(),
            ids: b.ids.clone(),
        }
    }
}

/// In-edge lists in canonical (ascending) edge-scan order, plus in-degrees.
fn incoming_lists(
    edge_index: &Array2<i64>,
    num_nodes: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>), GcnnError> {
    let mut incoming = vec![Vec::new(); num_nodes];
    for e in 0..edge_index.ncols() {
        let src = edge_index[[0, e]];
        let dst = edge_index[[1, e]];
        for v in [src, dst] {
            if v < 0 || v as usize >= num_nodes {
                return Err(GcnnError::ShapeMismatch(format!(
                    "edge {e} endpoint {v} outside 0..{num_nodes}"
                )));
            }
        }
        incoming[dst as usize].push(e);
    }
    let degrees = incoming.iter().map(Vec::len).collect();
    Ok((incoming, degrees))
}

// ---------------------------------------------------------------------------
// Forward

enum AggCache<T> {
    Mean {
        value: Array2<T>,
    },
    /// `arg[[i, h]]` is the edge whose message won; -1 for isolated nodes.
    Extreme {
        value: Array2<T>,
        arg: Array2<i64>,
    },
    Std {
        sigma: Array2<T>,
        mean: Array2<T>,
    },
}

impl<T: Scalar> AggCache<T> {
    fn value(&self) -> &Array2<T> {
        match self {
            AggCache::Mean { value } => value,
            AggCache::Extreme { value, .. } => value,
            AggCache::Std { sigma, .. } => sigma,
        }
    }
}

struct ConvTape<T> {
    msg_in: Array2<T>,
    messages: Array2<T>,
    agg: Vec<AggCache<T>>,
    scaled: Array2<T>,
    pre_act: Array2<T>,
}

/// Forward-pass caches for one batch.
pub struct Tape<T> {
    incoming: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    conv_inputs: Vec<Array2<T>>,
    conv: Vec<ConvTape<T>>,
    fc_inputs: Vec<Array2<T>>,
    fc_pre: Vec<Array2<T>>,
    predictions: Array1<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn predictions(&self) -> &Array1<T> {
        &self.predictions
    }
}

fn relu<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

/// `dot` on transposed operands can yield column-major output; stored
/// tensors must stay standard-layout so they flatten to slices.
fn c_order<T: Scalar>(a: Array2<T>) -> Array2<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

fn build_msg_in<T: Scalar>(
    x: &Array2<T>,
    edge_index: &Array2<i64>,
    edge_attr: &Array2<T>,
    use_edge_features: bool,
) -> Array2<T> {
    let e = edge_index.ncols();
    let node_w = x.ncols();
    let edge_w = if use_edge_features { edge_attr.ncols() } else { 0 };
    let mut msg_in = Array2::<T>::zeros((e, node_w + edge_w));
    for k in 0..e {
        let src = edge_index[[0, k]] as usize;
        msg_in
            .slice_mut(s![k, ..node_w])
            .assign(&x.row(src));
        if use_edge_features {
            msg_in
                .slice_mut(s![k, node_w..])
                .assign(&edge_attr.row(k));
        }
    }
    msg_in
}

fn aggregate<T: Scalar>(
    agg: Aggregator,
    messages: &Array2<T>,
    incoming: &[Vec<usize>],
) -> AggCache<T> {
    let n = incoming.len();
    let h = messages.ncols();
    match agg {
        Aggregator::Mean => {
            let mut value = Array2::<T>::zeros((n, h));
            for (i, edges) in incoming.iter().enumerate() {
                if edges.is_empty() {
                    continue;
                }
                let mut row = value.row_mut(i);
                for &e in edges {
                    row += &messages.row(e);
                }
                row *= T::from_f64(1.0 / edges.len() as f64);
            }
            AggCache::Mean { value }
        }
        Aggregator::Min | Aggregator::Max => {
            let is_max = agg == Aggregator::Max;
            let mut value = Array2::<T>::zeros((n, h));
            let mut arg = Array2::<i64>::from_elem((n, h), -1);
            for (i, edges) in incoming.iter().enumerate() {
                for (k, &e) in edges.iter().enumerate() {
                    for c in 0..h {
                        let v = messages[[e, c]];
                        // Strict comparison keeps the first-scanned
                        // extreme on ties.
                        let better = k == 0
                            || (is_max && v > value[[i, c]])
                            || (!is_max && v < value[[i, c]]);
                        if better {
                            value[[i, c]] = v;
                            arg[[i, c]] = e as i64;
                        }
                    }
                }
            }
            AggCache::Extreme { value, arg }
        }
        Aggregator::Std => {
            let mut mean = Array2::<T>::zeros((n, h));
            let mut sigma = Array2::<T>::zeros((n, h));
            for (i, edges) in incoming.iter().enumerate() {
                if edges.is_empty() {
                    continue;
                }
                let inv = T::from_f64(1.0 / edges.len() as f64);
                {
                    let mut mrow = mean.row_mut(i);
                    for &e in edges {
                        mrow += &messages.row(e);
                    }
                    mrow *= inv;
                }
                for c in 0..h {
                    let mu = mean[[i, c]];
                    let mut acc = T::zero();
                    for &e in edges {
                        let d = messages[[e, c]] - mu;
                        acc += d * d;
                    }
                    sigma[[i, c]] = (acc * inv + T::from_f64(EPS_VAR)).sqrt();
                }
            }
            AggCache::Std { sigma, mean }
        }
    }
}

fn conv_layer_forward<T: Scalar>(
    x: &Array2<T>,
    edge_index: &Array2<i64>,
    edge_attr: &Array2<T>,
    layer: &ConvLayer<T>,
    config: &ModelConfig,
    delta: f64,
    incoming: &[Vec<usize>],
    degrees: &[usize],
) -> Result<(Array2<T>, ConvTape<T>), GcnnError> {
    let n = x.nrows();
    let h = config.hidden_width;
    let msg_in = build_msg_in(x, edge_index, edge_attr, config.use_edge_features);
    if msg_in.ncols() != layer.msg.w.nrows() {
        return Err(GcnnError::ShapeMismatch(format!(
            "message input width {} vs weight rows {}",
            msg_in.ncols(),
            layer.msg.w.nrows()
        )));
    }
    let messages = layer.msg.apply(&msg_in);

    let agg: Vec<AggCache<T>> = config
        .aggregators
        .iter()
        .map(|&a| aggregate(a, &messages, incoming))
        .collect();

    let ns = config.scalers.len();
    let mut scaled = Array2::<T>::zeros((n, config.concat_width()));
    for (ai, cache) in agg.iter().enumerate() {
        let value = cache.value();
        for (si, &sc) in config.scalers.iter().enumerate() {
            let lo = (ai * ns + si) * h;
            for i in 0..n {
                let f = T::from_f64(scale_factor(sc, degrees[i], delta));
                for c in 0..h {
                    scaled[[i, lo + c]] = value[[i, c]] * f;
                }
            }
        }
    }

    if scaled.ncols() != layer.update.w.nrows() {
        return Err(GcnnError::ShapeMismatch(format!(
            "concat width {} vs update weight rows {}",
            scaled.ncols(),
            layer.update.w.nrows()
        )));
    }
    let pre_act = layer.update.apply(&scaled);
    let out = relu(&pre_act);
    Ok((
        out,
        ConvTape {
            msg_in,
            messages,
            agg,
            scaled,
            pre_act,
        },
    ))
}

/// One conv layer, forward only.
pub fn conv_forward<T: Scalar>(
    x: &Array2<T>,
    edge_index: &Array2<i64>,
    edge_attr: &Array2<T>,
    layer: &ConvLayer<T>,
    config: &ModelConfig,
    delta: f64,
) -> Result<Array2<T>, GcnnError> {
    let (incoming, degrees) = incoming_lists(edge_index, x.nrows())?;
    conv_layer_forward(x, edge_index, edge_attr, layer, config, delta, &incoming, &degrees)
        .map(|(out, _)| out)
}

/// Mean of node rows per graph slot. Slots are `0..=max(batch_vector)`;
/// a slot with no nodes is an error.
pub fn global_mean_pool<T: Scalar>(
    x: &Array2<T>,
    batch_vector: &[i64],
) -> Result<Array2<T>, GcnnError> {
    if batch_vector.len() != x.nrows() {
        return Err(GcnnError::ShapeMismatch(format!(
            "batch_vector length {} vs {} node rows",
            batch_vector.len(),
            x.nrows()
        )));
    }
    let num_graphs = batch_vector.iter().max().map_or(0, |&m| m as usize + 1);
    let mut pooled = Array2::<T>::zeros((num_graphs, x.ncols()));
    let mut counts = vec![0usize; num_graphs];
    for (row, &g) in batch_vector.iter().enumerate() {
        if g < 0 {
            return Err(GcnnError::ShapeMismatch(format!(
                "negative graph slot {g}"
            )));
        }
        counts[g as usize] += 1;
        let mut prow = pooled.row_mut(g as usize);
        prow += &x.row(row);
    }
    for (slot, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(GcnnError::EmptyGraphSlot { slot });
        }
        let mut prow = pooled.row_mut(slot);
        prow *= T::from_f64(1.0 / c as f64);
    }
    Ok(pooled)
}

/// The fully connected head: `fc_layers - 1` relu layers then a width-1
/// affine output.
pub fn head_forward<T: Scalar>(pooled: &Array2<T>, fc: &[Linear<T>]) -> Result<Array1<T>, GcnnError> {
    let mut h = pooled.clone();
    for (j, layer) in fc.iter().enumerate() {
        if h.ncols() != layer.w.nrows() {
            return Err(GcnnError::ShapeMismatch(format!(
                "fc layer {j}: input width {} vs weight rows {}",
                h.ncols(),
                layer.w.nrows()
            )));
        }
        let pre = layer.apply(&h);
        h = if j + 1 == fc.len() { pre } else { relu(&pre) };
    }
    if h.ncols() != 1 {
        return Err(GcnnError::ShapeMismatch(format!(
            "head output width {} != 1",
            h.ncols()
        )));
    }
    Ok(h.column(0).to_owned())
}

/// `(1/B) sum (pred - y)^2`.
pub fn mse_loss<T: Scalar>(pred: &Array1<T>, y: &Array1<T>) -> Result<T, GcnnError> {
    if pred.len() != y.len() {
        return Err(GcnnError::LengthMismatch {
            left: pred.len(),
            right: y.len(),
        });
    }
    let mut acc = T::zero();
    for (p, t) in pred.iter().zip(y.iter()) {
        let d = *p - *t;
        acc += d * d;
    }
    Ok(acc / T::from_f64(pred.len() as f64))
}

/// `(1/B) sum |pred - y|`.
pub fn mae<T: Scalar>(pred: &Array1<T>, y: &Array1<T>) -> Result<T, GcnnError> {
    if pred.len() != y.len() {
        return Err(GcnnError::LengthMismatch {
            left: pred.len(),
            right: y.len(),
        });
    }
    let mut acc = T::zero();
    for (p, t) in pred.iter().zip(y.iter()) {
        acc += (*p - *t).abs();
    }
    Ok(acc / T::from_f64(pred.len() as f64))
}

/// Full forward pass, returning predictions and the caches backward needs.
pub fn forward<T: Scalar>(
    params: &Params<T>,
    config: &ModelConfig,
    delta: f64,
    batch: &TypedBatch<T>,
) -> Result<Tape<T>, GcnnError> {
    if batch.x.ncols() != config.node_features {
        return Err(GcnnError::ShapeMismatch(format!(
            "batch node width {} vs config {}",
            batch.x.ncols(),
            config.node_features
        )));
    }
    if config.use_edge_features && batch.edge_attr.ncols() != config.edge_features {
        return Err(GcnnError::ShapeMismatch(format!(
            "batch edge width {} vs config {}",
            batch.edge_attr.ncols(),
            config.edge_features
        )));
    }
    let (incoming, degrees) = incoming_lists(&batch.edge_index, batch.x.nrows())?;

    let mut conv_inputs = Vec::with_capacity(params.conv.len());
    let mut conv_tapes = Vec::with_capacity(params.conv.len());
    let mut x = batch.x.clone();
    for layer in &params.conv {
        let (next, tape) = conv_layer_forward(
            &x,
            &batch.edge_index,
            &batch.edge_attr,
            layer,
            config,
            delta,
            &incoming,
            &degrees,
        )?;
        conv_inputs.push(x);
        conv_tapes.push(tape);
        x = next;
    }

    let pooled = global_mean_pool(&x, &batch.batch_vector)?;
    if pooled.nrows() != batch.num_graphs {
        return Err(GcnnError::ShapeMismatch(format!(
            "pooled {} graphs, batch says {}",
            pooled.nrows(),
            batch.num_graphs
        )));
    }
    conv_inputs.push(x);

    let mut fc_inputs = Vec::with_capacity(params.fc.len());
    let mut fc_pre = Vec::with_capacity(params.fc.len());
    let mut hmat = pooled;
    for (j, layer) in params.fc.iter().enumerate() {
        if hmat.ncols() != layer.w.nrows() {
            return Err(GcnnError::ShapeMismatch(format!(
                "fc layer {j}: input width {} vs weight rows {}",
                hmat.ncols(),
                layer.w.nrows()
            )));
        }
        let pre = layer.apply(&hmat);
        fc_inputs.push(hmat);
        hmat = if j + 1 == params.fc.len() {
            pre.clone()
        } else {
            relu(&pre)
        };
        fc_pre.push(pre);
    }
    let predictions = hmat.column(0).to_owned();

    Ok(Tape {
        incoming,
        degrees,
        conv_inputs,
        conv: conv_tapes,
        fc_inputs,
        fc_pre,
        predictions,
    })
}

// ---------------------------------------------------------------------------
// Backward

fn conv_layer_backward<T: Scalar>(
    grad_out: &Array2<T>,
    layer: &ConvLayer<T>,
    tape: &ConvTape<T>,
    config: &ModelConfig,
    delta: f64,
    incoming: &[Vec<usize>],
    degrees: &[usize],
    edge_index: &Array2<i64>,
    in_width: usize,
) -> (Array2<T>, ConvLayer<T>) {
    let n = grad_out.nrows();
    let h = config.hidden_width;
    let ns = config.scalers.len();

    // relu
    let mut dpre = grad_out.clone();
    ndarray::Zip::from(&mut dpre)
        .and(&tape.pre_act)
        .for_each(|d, &p| {
            if p <= T::zero() {
                *d = T::zero();
            }
        });

    // update linear
    let d_update_w = c_order(tape.scaled.t().dot(&dpre));
    let d_update_b = dpre.sum_axis(Axis(0));
    let dscaled = dpre.dot(&layer.update.w.t());

    // degree scaling + concat
    let mut dmessages = Array2::<T>::zeros(tape.messages.dim());
    for (ai, cache) in tape.agg.iter().enumerate() {
        let mut dagg = Array2::<T>::zeros((n, h));
        for (si, &sc) in config.scalers.iter().enumerate() {
            let lo = (ai * ns + si) * h;
            for i in 0..n {
                let f = T::from_f64(scale_factor(sc, degrees[i], delta));
                for c in 0..h {
                    dagg[[i, c]] += dscaled[[i, lo + c]] * f;
                }
            }
        }
        match cache {
            AggCache::Mean { .. } => {
                for (i, edges) in incoming.iter().enumerate() {
                    if edges.is_empty() {
                        continue;
                    }
                    let inv = T::from_f64(1.0 / edges.len() as f64);
                    for &e in edges {
                        for c in 0..h {
                            dmessages[[e, c]] += dagg[[i, c]] * inv;
                        }
                    }
                }
            }
            AggCache::Extreme { arg, .. } => {
                for i in 0..n {
                    for c in 0..h {
                        let e = arg[[i, c]];
                        if e >= 0 {
                            dmessages[[e as usize, c]] += dagg[[i, c]];
                        }
                    }
                }
            }
            AggCache::Std { sigma, mean } => {
                // sigma = sqrt(mean((m - mu)^2) + eps); the mu dependence
                // cancels, leaving d sigma / d m_e = (m_e - mu) / (d sigma).
                for (i, edges) in incoming.iter().enumerate() {
                    if edges.is_empty() {
                        continue;
                    }
                    let inv_d = T::from_f64(1.0 / edges.len() as f64);
                    for &e in edges {
                        for c in 0..h {
                            let diff = tape.messages[[e, c]] - mean[[i, c]];
                            dmessages[[e, c]] += dagg[[i, c]] * diff * inv_d / sigma[[i, c]];
                        }
                    }
                }
            }
        }
    }

    // message linear
    let d_msg_w = c_order(tape.msg_in.t().dot(&dmessages));
    let d_msg_b = dmessages.sum_axis(Axis(0));
    let dmsg_in = dmessages.dot(&layer.msg.w.t());

    // scatter message-input gradients back to source nodes; edge features
    // are inputs, not parameters, so their gradient is dropped.
    let mut dx = Array2::<T>::zeros((n, in_width));
    for e in 0..edge_index.ncols() {
        let src = edge_index[[0, e]] as usize;
        for c in 0..in_width {
            dx[[src, c]] += dmsg_in[[e, c]];
        }
    }

    (
        dx,
        ConvLayer {
            msg: Linear { w: d_msg_w, b: d_msg_b },
            update: Linear {
                w: d_update_w,
                b: d_update_b,
            },
        },
    )
}

/// Gradients of the mean-squared-error loss with respect to every
/// parameter, derived by hand against the forward definition.
pub fn backward<T: Scalar>(
    params: &Params<T>,
    config: &ModelConfig,
    delta: f64,
    batch: &TypedBatch<T>,
    tape: &Tape<T>,
) -> Result<Params<T>, GcnnError> {
    let b = batch.num_graphs;
    if tape.predictions.len() != b || batch.y.len() != b {
        return Err(GcnnError::LengthMismatch {
            left: tape.predictions.len(),
            right: batch.y.len(),
        });
    }
    let mut grads = Params::<T>::zeros(config);

    // d loss / d prediction, with the 1/B of the mean folded in.
    let two_over_b = T::from_f64(2.0 / b as f64);
    let dy = (&tape.predictions - &batch.y) * two_over_b;

    // head, in reverse
    let mut dh = dy.insert_axis(Axis(1));
    for j in (0..params.fc.len()).rev() {
        let mut dpre = dh;
        if j + 1 != params.fc.len() {
            ndarray::Zip::from(&mut dpre)
                .and(&tape.fc_pre[j])
                .for_each(|d, &p| {
                    if p <= T::zero() {
                        *d = T::zero();
                    }
                });
        }
        grads.fc[j].w = c_order(tape.fc_inputs[j].t().dot(&dpre));
        grads.fc[j].b = dpre.sum_axis(Axis(0));
        dh = dpre.dot(&params.fc[j].w.t());
    }

    // pooling: each node receives its graph's gradient / node count
    let mut counts = vec![0usize; batch.num_graphs];
    for &g in &batch.batch_vector {
        counts[g as usize] += 1;
    }
    let conv_out = tape.conv_inputs.last().expect("conv output cached");
    let mut dx = Array2::<T>::zeros(conv_out.dim());
    for (row, &g) in batch.batch_vector.iter().enumerate() {
        let g = g as usize;
        let inv = T::from_f64(1.0 / counts[g] as f64);
        for c in 0..dx.ncols() {
            dx[[row, c]] = dh[[g, c]] * inv;
        }
    }

    // conv stack, in reverse
    for l in (0..params.conv.len()).rev() {
        let in_width = tape.conv_inputs[l].ncols();
        let (dx_prev, layer_grads) = conv_layer_backward(
            &dx,
            &params.conv[l],
            &tape.conv[l],
            config,
            delta,
            &tape.incoming,
            &tape.degrees,
            &batch.edge_index,
            in_width,
        );
        grads.conv[l] = layer_grads;
        dx = dx_prev;
    }

    Ok(grads)
}

/// Forward + backward on one batch: fills `state.grads` and returns the
/// loss and predictions.
pub struct StepOutput<T> {
    pub loss: T,
    pub predictions: Array1<T>,
}

pub fn forward_backward<T: Scalar>(
    state: &mut ModelState<T>,
    batch: &Batch,
) -> Result<StepOutput<T>, GcnnError> {
    let typed = TypedBatch::<T>::from_batch(batch);
    let tape = forward(&state.params, &state.config, state.delta, &typed)?;
    let loss = mse_loss(&tape.predictions, &typed.y)?;
    state.grads = backward(&state.params, &state.config, state.delta, &typed, &tape)?;
    Ok(StepOutput {
        loss,
        predictions: tape.predictions,
    })
}

// ---------------------------------------------------------------------------
// AdamW

/// One decoupled-weight-decay Adam step over `state.grads`. Per-element
/// arithmetic runs in f64 regardless of the model precision.
pub fn adamw_step<T: Scalar>(state: &mut ModelState<T>, hyper: &Hyper) {
    state.opt.step += 1;
    let t = state.opt.step;
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);

    let ModelState {
        params, grads, opt, ..
    } = state;
    let mut theta = params.named_mut();
    let g = grads.named();
    let mut m1 = opt.m.named_mut();
    let mut m2 = opt.v.named_mut();

    for k in 0..theta.len() {
        let th = theta[k].1.as_slice_mut();
        let gr = g[k].1.as_slice();
        let m = m1[k].1.as_slice_mut();
        let v = m2[k].1.as_slice_mut();
        for i in 0..th.len() {
            let gi = gr[i].as_f64();
            let mi = hyper.beta1 * m[i].as_f64() + (1.0 - hyper.beta1) * gi;
            let vi = hyper.beta2 * v[i].as_f64() + (1.0 - hyper.beta2) * gi * gi;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let ti = th[i].as_f64();
            let update = hyper.learning_rate * (m_hat / (v_hat.sqrt() + hyper.epsilon)
                + hyper.weight_decay * ti);
            th[i] = T::from_f64(ti - update);
        }
    }
}

/// Clears the gradient buffers.
pub fn zero_grads<T: Scalar>(state: &mut ModelState<T>) {
    state.grads.zero_out();
}

// ---------------------------------------------------------------------------
// Evaluation

/// Metrics plus (true, predicted) pairs for parity plots.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
    pub pairs: Vec<(f64, f64)>,
}

/// Runs the model over a batch stream, accumulating MSE/MAE in f64.
pub fn evaluate<T: Scalar, I>(state: &ModelState<T>, loader: I) -> Result<Evaluation, GcnnError>
where
    I: IntoIterator<Item = Result<Batch, LoadError>>,
{
    let mut se = 0.0f64;
    let mut ae = 0.0f64;
    let mut pairs = Vec::new();
    for batch in loader {
        let batch = batch?;
        let typed = TypedBatch::<T>::from_batch(&batch);
        let tape = forward(&state.params, &state.config, state.delta, &typed)?;
        for (p, t) in tape.predictions.iter().zip(typed.y.iter()) {
            let (p, t) = (p.as_f64(), t.as_f64());
            se += (p - t) * (p - t);
            ae += (p - t).abs();
            pairs.push((t, p));
        }
    }
    let count = pairs.len();
    let denom = count.max(1) as f64;
    Ok(Evaluation {
        mse: se / denom,
        mae: ae / denom,
        count,
        pairs,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints

fn encode_tensor_list<T: Scalar>(params: &Params<T>) -> Vec<u8> {
    let named = params.named();
    let mut out = Vec::new();
    wire::put_u64(&mut out, named.len() as u64);
    for (name, t) in named {
        wire::put_short_str(&mut out, &name);
        let (rows, cols) = t.dims();
        wire::put_u64(&mut out, rows as u64);
        wire::put_u64(&mut out, cols as u64);
        for v in t.as_slice() {
            wire::put_f64(&mut out, v.as_f64());
        }
    }
    out
}

fn decode_tensor_list<T: Scalar>(payload: &[u8], into: &mut Params<T>) -> Result<(), GcnnError> {
    let bad = |m: String| GcnnError::BadCheckpoint(m);
    let io_bad = |e: std::io::Error| GcnnError::BadCheckpoint(e.to_string());
    let mut c = Cursor::new(payload);
    let count = c.get_u64().map_err(io_bad)? as usize;
    let mut slots = into.named_mut();
    if count != slots.len() {
        return Err(bad(format!(
            "checkpoint has {count} tensors, model expects {}",
            slots.len()
        )));
    }
    for (name, slot) in slots.iter_mut() {
        let fname = c.get_short_str().map_err(io_bad)?;
        if &fname != name {
            return Err(bad(format!("expected tensor {name}, found {fname}")));
        }
        let rows = c.get_u64().map_err(io_bad)? as usize;
        let cols = c.get_u64().map_err(io_bad)? as usize;
        let want = match slot {
            TensorMut::Mat(m) => (m.nrows(), m.ncols()),
            TensorMut::Vec(v) => (v.len(), 0),
        };
        if (rows, cols) != want {
            return Err(bad(format!(
                "tensor {name}: shape ({rows}, {cols}) vs expected {want:?}"
            )));
        }
        let dst = slot.as_slice_mut();
        for v in dst.iter_mut() {
            *v = T::from_f64(c.get_f64().map_err(io_bad)?);
        }
    }
    Ok(())
}

fn encode_config(config: &ModelConfig, delta: f64, precision: u8) -> Vec<u8> {
    let mut out = Vec::new();
    wire::put_u32(&mut out, config.num_conv_layers as u32);
    wire::put_u32(&mut out, config.hidden_width as u32);
    wire::put_u32(&mut out, config.fc_layers as u32);
    wire::put_u32(&mut out, config.node_features as u32);
    wire::put_u32(&mut out, config.edge_features as u32);
    wire::put_u8(&mut out, config.use_edge_features as u8);
    wire::put_u8(&mut out, config.aggregators.len() as u8);
    for a in &config.aggregators {
        wire::put_u8(&mut out, a.code());
    }
    wire::put_u8(&mut out, config.scalers.len() as u8);
    for s in &config.scalers {
        wire::put_u8(&mut out, s.code());
    }
    wire::put_f64(&mut out, delta);
    wire::put_u8(&mut out, precision);
    out
}

fn decode_config(payload: &[u8]) -> Result<(ModelConfig, f64, u8), GcnnError> {
    let io_bad = |e: std::io::Error| GcnnError::BadCheckpoint(e.to_string());
    let mut c = Cursor::new(payload);
    let num_conv_layers = c.get_u32().map_err(io_bad)? as usize;
    let hidden_width = c.get_u32().map_err(io_bad)? as usize;
    let fc_layers = c.get_u32().map_err(io_bad)? as usize;
    let node_features = c.get_u32().map_err(io_bad)? as usize;
    let edge_features = c.get_u32().map_err(io_bad)? as usize;
    let use_edge_features = c.get_u8().map_err(io_bad)? != 0;
    let na = c.get_u8().map_err(io_bad)? as usize;
    let mut aggregators = Vec::with_capacity(na);
    for _ in 0..na {
        let code = c.get_u8().map_err(io_bad)?;
        aggregators.push(
            Aggregator::from_code(code)
                .ok_or_else(|| GcnnError::BadCheckpoint(format!("bad aggregator code {code}")))?,
        );
    }
    let nscl = c.get_u8().map_err(io_bad)? as usize;
    let mut scalers = Vec::with_capacity(nscl);
    for _ in 0..nscl {
        let code = c.get_u8().map_err(io_bad)?;
        scalers.push(
            Scaler::from_code(code)
                .ok_or_else(|| GcnnError::BadCheckpoint(format!("bad scaler code {code}")))?,
        );
    }
    let delta = c.get_f64().map_err(io_bad)?;
    let precision = c.get_u8().map_err(io_bad)?;
    Ok((
        ModelConfig {
            num_conv_layers,
            hidden_width,
            fc_layers,
            aggregators,
            scalers,
            node_features,
            edge_features,
            use_edge_features,
        },
        delta,
        precision,
    ))
}

/// Writes a versioned little-endian dump of config, parameters, and
/// optimizer state, each section CRC-tagged. Values are stored as f64, so
/// checkpoints are precision-portable and exact for f32 models.
pub fn save_checkpoint<T: Scalar>(path: &Path, state: &ModelState<T>) -> Result<(), GcnnError> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    wire::put_u32(&mut out, CHECKPOINT_VERSION);
    wire::put_section(&mut out, SEC_CONFIG, &encode_config(&state.config, state.delta, T::PRECISION));
    wire::put_section(&mut out, SEC_PARAMS, &encode_tensor_list(&state.params));
    let mut optb = Vec::new();
    wire::put_u64(&mut optb, state.opt.step);
    wire::put_section(&mut out, SEC_OPT, &optb);
    wire::put_section(&mut out, SEC_MOM1, &encode_tensor_list(&state.opt.m));
    wire::put_section(&mut out, SEC_MOM2, &encode_tensor_list(&state.opt.v));

    let mut f = File::create(path)?;
    f.write_all(&out)?;
    f.sync_all()?;
    Ok(())
}

/// Loads a checkpoint into a fresh state of element type `T`. Gradient
/// buffers come back zeroed.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelState<T>, GcnnError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| GcnnError::BadCheckpoint(m.to_string());
    let io_bad = |e: std::io::Error| GcnnError::BadCheckpoint(e.to_string());

    let mut c = Cursor::new(&bytes);
    if c.take(4).map_err(io_bad)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = c.get_u32().map_err(io_bad)?;
    if version != CHECKPOINT_VERSION {
        return Err(GcnnError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }

    let mut sections = std::collections::HashMap::new();
    while c.remaining() > 0 {
        let (tag, payload) = wire::get_section(&mut c).map_err(io_bad)?;
        sections.insert(tag, payload);
    }
    let section = |tag: u8, name: &str| {
        sections
            .get(&tag)
            .copied()
            .ok_or_else(|| GcnnError::BadCheckpoint(format!("missing {name} section")))
    };

    let (config, delta, _precision) = decode_config(section(SEC_CONFIG, "config")?)?;
    config.validate()?;
    let mut params = Params::<T>::zeros(&config);
    decode_tensor_list(section(SEC_PARAMS, "params")?, &mut params)?;
    let step = Cursor::new(section(SEC_OPT, "optimizer")?)
        .get_u64()
        .map_err(io_bad)?;
    let mut m = Params::<T>::zeros(&config);
    let mut v = Params::<T>::zeros(&config);
    decode_tensor_list(section(SEC_MOM1, "first moment")?, &mut m)?;
    decode_tensor_list(section(SEC_MOM2, "second moment")?, &mut v)?;

    Ok(ModelState {
        grads: Params::zeros(&config),
        opt: AdamWState { m, v, step },
        config,
        params,
        delta,
    })
}
