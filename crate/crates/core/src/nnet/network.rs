use serde::{Deserialize, Serialize};

use super::layers::Cache;
use super::{Conv2d, Dense, Layer, LayerKind, LayerSpec, NnetError, ParamGrad, Scalar, Tensor};
use crate::grading::{decode_score, Grade, Score};
use crate::rng::Xoshiro256StarStar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Default drop probability of the head's dropout layer.
pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Salt mixed into the training seed for the dropout stream, so shuffling and
/// masking draw from independent generators.
pub const DROPOUT_STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// Parameter gradients, one slot per layer. `None` for layers that are frozen
/// or have no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Option<ParamGrad<T>>>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(Option::is_none)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|g| g.weights.iter().chain(&g.bias).all(|v| v.is_finite()))
    }
}

/// Sequential network ending in a single-output dense layer.
#[derive(Debug, Clone)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    mode: Mode,
    seed: u64,
    dropout_rng: Xoshiro256StarStar,
    cache: Option<Vec<Cache<T>>>,
}

impl<T: Scalar> Network<T> {
    /// Validate the layer chain against a per-sample input shape.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer<T>>, seed: u64) -> Result<Self, NnetError> {
        let mut shape = input_shape.clone();
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| NnetError::Shape(format!("layer {i}: {e}")))?;
        }
        match layers.last().map(|l| &l.kind) {
            Some(LayerKind::Dense(d)) if d.out_dim == 1 => {}
            _ => {
                return Err(NnetError::Shape(
                    "final layer must be a dense layer with a single output".into(),
                ))
            }
        }
        Ok(Self {
            layers,
            input_shape,
            mode: Mode::Eval,
            seed,
            dropout_rng: Xoshiro256StarStar::seed_from_u64(seed ^ DROPOUT_STREAM_SALT),
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer<T> {
        &mut self.layers[index]
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Re-seed the dropout mask stream.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = Xoshiro256StarStar::seed_from_u64(seed ^ DROPOUT_STREAM_SALT);
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<(), NnetError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnetError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        for layer in &mut self.layers {
            if let LayerKind::Dropout { rate: r } = &mut layer.kind {
                *r = rate;
            }
        }
        Ok(())
    }

    /// Freeze (or unfreeze) the first `count` layers and unfreeze the rest.
    pub fn freeze_first(&mut self, count: usize) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.frozen = i < count && layer.has_params();
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().filter_map(Layer::params).map(|(w, b)| w.len() + b.len()).sum()
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<(), NnetError> {
        if batch.shape().len() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            return Err(NnetError::Shape(format!(
                "network expects n×{:?}, got {:?}",
                self.input_shape,
                batch.shape()
            )));
        }
        if !batch.all_finite() {
            return Err(NnetError::NonFinite("input".into()));
        }
        Ok(())
    }

    /// Forward pass in the current mode, caching activations for `backward`.
    pub fn forward(&mut self, batch: Tensor<T>) -> Result<Tensor<T>, NnetError> {
        self.check_input(&batch)?;
        let train = self.mode == Mode::Train;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch;
        for layer in &self.layers {
            let rng = if train { Some(&mut self.dropout_rng) } else { None };
            let (y, cache) = layer.forward(x, rng)?;
            caches.push(cache);
            x = y;
        }
        self.cache = Some(caches);
        if !x.all_finite() {
            return Err(NnetError::NonFinite("forward output".into()));
        }
        Ok(x)
    }

    /// Eval-mode forward pass that touches no state; safe to share across threads.
    pub fn infer(&self, batch: Tensor<T>) -> Result<Tensor<T>, NnetError> {
        self.check_input(&batch)?;
        let mut x = batch;
        for layer in &self.layers {
            x = layer.forward(x, None)?.0;
        }
        if !x.all_finite() {
            return Err(NnetError::NonFinite("forward output".into()));
        }
        Ok(x)
    }

    /// Reverse pass from `d loss / d output`; consumes the cached activations.
    pub fn backward(&mut self, loss_grad: &Tensor<T>) -> Result<Gradients<T>, NnetError> {
        self.backward_with(loss_grad, false)
    }

    /// As [`backward`](Self::backward), optionally also returning the input gradient.
    pub fn backward_with(
        &mut self,
        loss_grad: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<Gradients<T>, NnetError> {
        let caches = self.cache.take().ok_or(NnetError::BackwardWithoutForward)?;
        // Input gradients are only needed while some earlier layer still trains.
        let mut trainable_before = vec![false; self.layers.len()];
        for i in 1..self.layers.len() {
            trainable_before[i] = trainable_before[i - 1] || self.layers[i - 1].trainable();
        }
        let mut grads = vec![None; self.layers.len()];
        let mut dy = Some(loss_grad.clone());
        let mut input_grad = None;
        for (i, (layer, cache)) in self.layers.iter().zip(&caches).enumerate().rev() {
            let need_input = trainable_before[i] || want_input_grad;
            if !need_input && !layer.trainable() {
                break;
            }
            let Some(upstream) = dy.take() else { break };
            let (dx, g) = layer.backward(cache, upstream, need_input)?;
            grads[i] = g;
            if i == 0 {
                input_grad = dx;
            } else {
                dy = dx;
            }
        }
        let out = Gradients { layers: grads, input: input_grad };
        if !out.all_finite() {
            return Err(NnetError::NonFinite("gradients".into()));
        }
        Ok(out)
    }

    /// Raw scores and decoded grades, computed with eval semantics.
    pub fn predict(&self, batch: Tensor<T>) -> Result<Vec<(Score, Grade)>, NnetError> {
        let out = self.infer(batch)?;
        out.data()
            .iter()
            .map(|v| {
                let s = Score::new(v.as_f64()).map_err(|_| NnetError::NonFinite("score".into()))?;
                Ok((s, decode_score(s)))
            })
            .collect()
    }

    /// Same network at another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let kind = match &l.kind {
                    LayerKind::Conv2d(c) => LayerKind::Conv2d(Conv2d {
                        in_channels: c.in_channels,
                        out_channels: c.out_channels,
                        kernel: c.kernel,
                        stride: c.stride,
                        weights: conv(&c.weights),
                        bias: conv(&c.bias),
                    }),
                    LayerKind::Dense(d) => LayerKind::Dense(Dense {
                        in_dim: d.in_dim,
                        out_dim: d.out_dim,
                        weights: conv(&d.weights),
                        bias: conv(&d.bias),
                    }),
                    LayerKind::Relu => LayerKind::Relu,
                    LayerKind::MaxPool2d { window, stride } => {
                        LayerKind::MaxPool2d { window: *window, stride: *stride }
                    }
                    LayerKind::Flatten => LayerKind::Flatten,
                    LayerKind::Dropout { rate } => LayerKind::Dropout { rate: *rate },
                };
                Layer { kind, frozen: l.frozen }
            })
            .collect();
        Network {
            layers,
            input_shape: self.input_shape.clone(),
            mode: self.mode,
            seed: self.seed,
            dropout_rng: self.dropout_rng.clone(),
            cache: None,
        }
    }

    /// He-uniform initialization of every parameterized layer, in layer order,
    /// weights row-major; biases zero.
    pub fn init_he_uniform(&mut self, seed: u64) {
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = match &layer.kind {
                LayerKind::Conv2d(c) => c.fan_in(),
                LayerKind::Dense(d) => d.in_dim,
                _ => continue,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let (w, b) = layer.params_mut().expect("parameterized layer");
            for v in w.iter_mut() {
                *v = T::lit(rng.uniform(-bound, bound));
            }
            b.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Smallest input side the reference architecture accepts.
pub const MIN_REFERENCE_SIDE: usize = 10;

/// Reference ordinal-regression network for `3 × side × side` inputs:
///
/// ```text
/// conv 3→8 k3 · relu · maxpool 2 · conv 8→16 k3 · relu · maxpool 2 ·
/// flatten · dense→32 · relu · dropout · dense 32→1
/// ```
pub fn build_reference_model<T: Scalar>(input_side: usize, seed: u64) -> Result<Network<T>, NnetError> {
    build_reference_model_with(input_side, seed, DEFAULT_DROPOUT)
}

pub fn build_reference_model_with<T: Scalar>(
    input_side: usize,
    seed: u64,
    dropout_rate: f64,
) -> Result<Network<T>, NnetError> {
    if input_side < MIN_REFERENCE_SIDE {
        return Err(NnetError::Config(format!(
            "input side {input_side} too small for two conv+pool stages (need >= {MIN_REFERENCE_SIDE})"
        )));
    }
    let s1 = (input_side - 2) / 2;
    let s2 = (s1 - 2) / 2;
    let flat = 16 * s2 * s2;
    let layers = vec![
        Layer::new(LayerKind::Conv2d(Conv2d::zeroed(3, 8, 3, 1))),
        Layer::new(LayerKind::Relu),
        Layer::new(LayerKind::MaxPool2d { window: 2, stride: 2 }),
        Layer::new(LayerKind::Conv2d(Conv2d::zeroed(8, 16, 3, 1))),
        Layer::new(LayerKind::Relu),
        Layer::new(LayerKind::MaxPool2d { window: 2, stride: 2 }),
        Layer::new(LayerKind::Flatten),
        Layer::new(LayerKind::Dense(Dense::zeroed(flat, 32))),
        Layer::new(LayerKind::Relu),
        Layer::new(LayerKind::Dropout { rate: dropout_rate }),
        Layer::new(LayerKind::Dense(Dense::zeroed(32, 1))),
    ];
    let mut net = Network::new(vec![3, input_side, input_side], layers, seed)?;
    net.init_he_uniform(seed);
    Ok(net)
}

/// Index of the first head layer (the dense layer after flatten) in the
/// reference model; freezing everything before it freezes the backbone.
pub const REFERENCE_BACKBONE_LAYERS: usize = 7;
