//! Small differentiable classifiers with hand-written gradients.
//!
//! Two architectures are supported: a linear softmax classifier and a
//! one-hidden-layer perceptron. Parameters are stored flat, layer by layer,
//! each weight matrix row-major (`out x in`) followed by its bias.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::DatasetShard;
use crate::error::ModelError;
use crate::params::{ParamVector, ShapeTag};
use crate::rng::SimRng;

/// Anything the protocol can differentiate: maps weights to `(loss, gradient)`.
///
/// Implementations must be pure; the same input yields bitwise the same output.
pub trait Objective: Send + Sync {
    fn num_params(&self) -> usize;

    fn evaluate(&self, theta: &ParamVector) -> Result<(f64, ParamVector), ModelError>;

    fn loss(&self, theta: &ParamVector) -> Result<f64, ModelError> {
        Ok(self.evaluate(theta)?.0)
    }

    fn gradient(&self, theta: &ParamVector) -> Result<ParamVector, ModelError> {
        Ok(self.evaluate(theta)?.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSoftmax,
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Ignored by `LinearSoftmax`.
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Ignored by `LinearSoftmax`.
    pub activation: Activation,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LinearSoftmax,
            input_dim,
            hidden_dim: 0,
            num_classes,
            activation: Activation::Tanh,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize, activation: Activation) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp1,
            input_dim,
            hidden_dim,
            num_classes,
            activation,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::InvalidSpec("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(ModelError::InvalidSpec("num_classes must be at least 2".into()));
        }
        if self.kind == ModelKind::Mlp1 && self.hidden_dim == 0 {
            return Err(ModelError::InvalidSpec("mlp1 needs hidden_dim >= 1".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::LinearSoftmax => c * d + c,
            ModelKind::Mlp1 => h * d + h + c * h + c,
        }
    }

    pub fn shape_tag(&self) -> ShapeTag {
        ShapeTag::new(self.to_string())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::LinearSoftmax => {
                write!(f, "linear_softmax:d{}-c{}", self.input_dim, self.num_classes)
            }
            ModelKind::Mlp1 => write!(
                f,
                "mlp1_{}:d{}-h{}-c{}",
                match self.activation {
                    Activation::Tanh => "tanh",
                    Activation::Relu => "relu",
                },
                self.input_dim,
                self.hidden_dim,
                self.num_classes
            ),
        }
    }
}

/// Entries i.i.d. uniform on `[-0.1, 0.1)` from [`SimRng`].
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector, ModelError> {
    spec.validate()?;
    let mut rng = SimRng::new(seed);
    let values = (0..spec.param_count()).map(|_| rng.uniform(-0.1, 0.1)).collect();
    Ok(ParamVector::new(values, spec.shape_tag()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Cross-entropy of a model over one shard.
#[derive(Debug, Clone)]
pub struct LossEvaluator {
    spec: ModelSpec,
    shard: Arc<DatasetShard>,
    reduction: Reduction,
}

impl LossEvaluator {
    pub fn new(spec: ModelSpec, shard: Arc<DatasetShard>, reduction: Reduction) -> Result<Self, ModelError> {
        spec.validate()?;
        if shard.dim() != spec.input_dim {
            return Err(ModelError::FeatureMismatch {
                expected: spec.input_dim,
                got: shard.dim(),
            });
        }
        if shard.rows() == 0 {
            return Err(ModelError::EmptyShard);
        }
        if let Some(&label) = shard.labels().iter().find(|&&l| l >= spec.num_classes) {
            return Err(ModelError::LabelOutOfRange {
                label,
                num_classes: spec.num_classes,
            });
        }
        Ok(LossEvaluator { spec, shard, reduction })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn shard(&self) -> &DatasetShard {
        &self.shard
    }

    fn check_len(&self, theta: &ParamVector) -> Result<(), ModelError> {
        let expected = self.spec.param_count();
        if theta.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Argmax class for each row; ties go to the lowest class index.
    pub fn predictions(&self, theta: &ParamVector) -> Result<Vec<usize>, ModelError> {
        self.check_len(theta)?;
        let net = Network::new(&self.spec, theta.values());
        let mut scratch = Scratch::new(&self.spec);
        Ok((0..self.shard.rows())
            .map(|i| {
                net.forward(self.shard.row(i), &mut scratch);
                argmax(&scratch.logits)
            })
            .collect())
    }

    /// Fraction of rows classified correctly, in `[0, 1]`.
    pub fn accuracy(&self, theta: &ParamVector) -> Result<f64, ModelError> {
        let preds = self.predictions(theta)?;
        let hits = preds.iter().zip(self.shard.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / preds.len() as f64)
    }
}

impl Objective for LossEvaluator {
    fn num_params(&self) -> usize {
        self.spec.param_count()
    }

    fn evaluate(&self, theta: &ParamVector) -> Result<(f64, ParamVector), ModelError> {
        self.check_len(theta)?;
        let net = Network::new(&self.spec, theta.values());
        let mut grad = vec![0.0; theta.len()];
        let mut scratch = Scratch::new(&self.spec);
        let mut total = 0.0;
        for i in 0..self.shard.rows() {
            total += net.backprop(self.shard.row(i), self.shard.label(i), &mut scratch, &mut grad);
        }
        if self.reduction == Reduction::Mean {
            let n = self.shard.rows() as f64;
            total /= n;
            grad.iter_mut().for_each(|g| *g /= n);
        }
        if !total.is_finite() {
            return Err(ModelError::NonFinite { what: "loss" });
        }
        let grad = ParamVector::new(grad, theta.shape().clone());
        if !grad.is_finite() {
            return Err(ModelError::NonFinite { what: "gradient" });
        }
        Ok((total, grad))
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

struct Scratch {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    dlogits: Vec<f64>,
    dhidden: Vec<f64>,
}

impl Scratch {
    fn new(spec: &ModelSpec) -> Self {
        let h = if spec.kind == ModelKind::Mlp1 {
            spec.hidden_dim
        } else {
            0
        };
        Scratch {
            pre: vec![0.0; h],
            hidden: vec![0.0; h],
            logits: vec![0.0; spec.num_classes],
            dlogits: vec![0.0; spec.num_classes],
            dhidden: vec![0.0; h],
        }
    }
}

/// Borrowed view of the flat parameters as layers.
struct Network<'a> {
    spec: &'a ModelSpec,
    theta: &'a [f64],
}

impl<'a> Network<'a> {
    fn new(spec: &'a ModelSpec, theta: &'a [f64]) -> Self {
        Network { spec, theta }
    }

    // (weights offset, bias offset, out, in) of the output layer
    fn output_layer(&self) -> (usize, usize, usize, usize) {
        let (d, h, c) = (self.spec.input_dim, self.spec.hidden_dim, self.spec.num_classes);
        match self.spec.kind {
            ModelKind::LinearSoftmax => (0, c * d, c, d),
            ModelKind::Mlp1 => {
                let w2 = h * d + h;
                (w2, w2 + c * h, c, h)
            }
        }
    }

    fn forward(&self, x: &[f64], s: &mut Scratch) {
        let input: &[f64] = match self.spec.kind {
            ModelKind::LinearSoftmax => x,
            ModelKind::Mlp1 => {
                let (d, h) = (self.spec.input_dim, self.spec.hidden_dim);
                let (w1, b1) = (&self.theta[..h * d], &self.theta[h * d..h * d + h]);
                for j in 0..h {
                    let row = &w1[j * d..(j + 1) * d];
                    let z = b1[j] + dot(row, x);
                    s.pre[j] = z;
                    s.hidden[j] = match self.spec.activation {
                        Activation::Tanh => z.tanh(),
                        Activation::Relu => z.max(0.0),
                    };
                }
                &s.hidden
            }
        };
        let (w, b, out, inp) = self.output_layer();
        for k in 0..out {
            let row = &self.theta[w + k * inp..w + (k + 1) * inp];
            s.logits[k] = self.theta[b + k] + dot(row, input);
        }
    }

    /// Adds this row's cross-entropy gradient into `grad`; returns its loss.
    fn backprop(&self, x: &[f64], label: usize, s: &mut Scratch, grad: &mut [f64]) -> f64 {
        self.forward(x, s);
        let max = s.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (d, &z) in s.dlogits.iter_mut().zip(&s.logits) {
            *d = (z - max).exp();
            denom += *d;
        }
        let loss = max + denom.ln() - s.logits[label];
        for d in s.dlogits.iter_mut() {
            *d /= denom;
        }
        s.dlogits[label] -= 1.0;

        let (w, b, out, inp) = self.output_layer();
        let input: &[f64] = match self.spec.kind {
            ModelKind::LinearSoftmax => x,
            ModelKind::Mlp1 => &s.hidden,
        };
        for k in 0..out {
            let dk = s.dlogits[k];
            grad[b + k] += dk;
            for (g, xi) in grad[w + k * inp..w + (k + 1) * inp].iter_mut().zip(input) {
                *g += dk * xi;
            }
        }
        if self.spec.kind == ModelKind::Mlp1 {
            let (d, h) = (self.spec.input_dim, self.spec.hidden_dim);
            for j in 0..h {
                let mut back = 0.0;
                for k in 0..out {
                    back += s.dlogits[k] * self.theta[w + k * inp + j];
                }
                let slope = match self.spec.activation {
                    Activation::Tanh => 1.0 - s.hidden[j] * s.hidden[j],
                    Activation::Relu => {
                        if s.pre[j] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                s.dhidden[j] = back * slope;
            }
            for j in 0..h {
                let dj = s.dhidden[j];
                grad[h * d + j] += dj;
                for (g, xi) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += dj * xi;
                }
            }
        }
        loss
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `curvature / 2 * ||theta - center||^2`. The toy loss used for closed-form checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
    pub curvature: f64,
}

impl Quadratic {
    pub fn new(center: Vec<f64>, curvature: f64) -> Self {
        Quadratic { center, curvature }
    }

    /// `1/2 (theta - c)^2` in one dimension.
    pub fn scalar(c: f64) -> Self {
        Quadratic::new(vec![c], 1.0)
    }
}

impl Objective for Quadratic {
    fn num_params(&self) -> usize {
        self.center.len()
    }

    fn evaluate(&self, theta: &ParamVector) -> Result<(f64, ParamVector), ModelError> {
        if theta.len() != self.center.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.center.len(),
                got: theta.len(),
            });
        }
        let diff: Vec<f64> = theta.values().iter().zip(&self.center).map(|(t, c)| t - c).collect();
        let loss = 0.5 * self.curvature * diff.iter().map(|d| d * d).sum::<f64>();
        let grad = diff.iter().map(|d| self.curvature * d).collect();
        Ok((loss, ParamVector::new(grad, theta.shape().clone())))
    }
}
