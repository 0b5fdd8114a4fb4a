use serde::{Deserialize, Serialize};

use super::{NnetError, Scalar, Tensor};
use crate::rng::Xoshiro256StarStar;

/// Valid (unpadded) 2-D convolution, weights laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully connected layer, weights laid out `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind<T> {
    Conv2d(Conv2d<T>),
    Relu,
    MaxPool2d { window: usize, stride: usize },
    Flatten,
    Dense(Dense<T>),
    /// Inverted dropout with drop probability `rate`.
    Dropout { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind<T>,
    /// Frozen parameters are never updated; gradients still flow through.
    pub frozen: bool,
}

/// Parameter-free description of a layer, used in checkpoint headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, frozen: bool },
    Relu,
    Maxpool2d { window: usize, stride: usize },
    Flatten,
    Dense { in_dim: usize, out_dim: usize, frozen: bool },
    Dropout { rate: f64 },
}

/// Per-layer gradient of the loss with respect to its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// State saved by a training forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Input(Tensor<T>),
    ReluMask(Vec<bool>),
    PoolArgmax { input_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
    DropoutMask(Option<Vec<T>>),
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeroed(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weights: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - self.kernel) / self.stride + 1, (w - self.kernel) / self.stride + 1)
    }

    fn im2col(&self, img: &[T], h: usize, w: usize, cols: &mut [T]) {
        let (k, s) = (self.kernel, self.stride);
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        for ci in 0..self.in_channels {
            let plane = &img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let src = &plane[(oy * s + ky) * w + kx..];
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            dst.copy_from_slice(&src[..ow]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                *d = src[ox * s];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[T], h: usize, w: usize, img: &mut [T]) {
        let (k, s) = (self.kernel, self.stride);
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        for ci in 0..self.in_channels {
            let plane = &mut img[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let base = (oy * s + ky) * w + kx;
                        for ox in 0..ow {
                            let d = &mut plane[base + ox * s];
                            *d = *d + row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnetError> {
        let [n, c, h, w] = dims4(x.shape())?;
        if c != self.in_channels || h < self.kernel || w < self.kernel {
            return Err(NnetError::Shape(format!(
                "conv2d {}->{} k{} cannot take input {:?}",
                self.in_channels,
                self.out_channels,
                self.kernel,
                x.shape()
            )));
        }
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let ckk = self.fan_in();
        let oc = self.out_channels;
        let mut cols = vec![T::zero(); ckk * p];
        let mut out = vec![T::zero(); n * oc * p];
        for (sample, o) in x.data().chunks_exact(c * h * w).zip(out.chunks_exact_mut(oc * p)) {
            self.im2col(sample, h, w, &mut cols);
            T::gemm(oc, ckk, p, &self.weights, false, &cols, false, T::zero(), o);
            for (plane, &b) in o.chunks_exact_mut(p).zip(&self.bias) {
                plane.iter_mut().for_each(|v| *v = *v + b);
            }
        }
        Tensor::new(vec![n, oc, oh, ow], out)
    }

    fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> (Option<Tensor<T>>, Option<ParamGrad<T>>) {
        let [n, c, h, w] = dims4(x.shape()).expect("cached conv input is 4-D");
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let ckk = self.fan_in();
        let oc = self.out_channels;
        let mut cols = vec![T::zero(); ckk * p];
        let mut dcols = vec![T::zero(); ckk * p];
        let mut grads = need_params.then(|| ParamGrad {
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); oc],
        });
        let mut dx = need_input.then(|| vec![T::zero(); n * c * h * w]);
        for i in 0..n {
            let dyi = &dy.data()[i * oc * p..(i + 1) * oc * p];
            if let Some(g) = grads.as_mut() {
                self.im2col(&x.data()[i * c * h * w..(i + 1) * c * h * w], h, w, &mut cols);
                T::gemm(oc, p, ckk, dyi, false, &cols, true, T::one(), &mut g.weights);
                for (b, plane) in g.bias.iter_mut().zip(dyi.chunks_exact(p)) {
                    *b = *b + plane.iter().copied().sum();
                }
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(ckk, oc, p, &self.weights, true, dyi, false, T::zero(), &mut dcols);
                self.col2im_add(&dcols, h, w, &mut dx[i * c * h * w..(i + 1) * c * h * w]);
            }
        }
        let dx = dx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("shape preserved"));
        (dx, grads)
    }
}

impl<T: Scalar> Dense<T> {
    pub fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnetError> {
        if x.shape().len() != 2 || x.shape()[1] != self.in_dim {
            return Err(NnetError::Shape(format!(
                "dense {}->{} cannot take input {:?}",
                self.in_dim,
                self.out_dim,
                x.shape()
            )));
        }
        let n = x.batch();
        let mut out = vec![T::zero(); n * self.out_dim];
        T::gemm(n, self.in_dim, self.out_dim, x.data(), false, &self.weights, true, T::zero(), &mut out);
        for row in out.chunks_exact_mut(self.out_dim) {
            for (v, &b) in row.iter_mut().zip(&self.bias) {
                *v = *v + b;
            }
        }
        Tensor::new(vec![n, self.out_dim], out)
    }

    fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_input: bool,
        need_params: bool,
    ) -> (Option<Tensor<T>>, Option<ParamGrad<T>>) {
        let n = x.batch();
        let grads = need_params.then(|| {
            let mut weights = vec![T::zero(); self.weights.len()];
            T::gemm(self.out_dim, n, self.in_dim, dy.data(), true, x.data(), false, T::zero(), &mut weights);
            let mut bias = vec![T::zero(); self.out_dim];
            for row in dy.data().chunks_exact(self.out_dim) {
                for (b, &g) in bias.iter_mut().zip(row) {
                    *b = *b + g;
                }
            }
            ParamGrad { weights, bias }
        });
        let dx = need_input.then(|| {
            let mut d = vec![T::zero(); n * self.in_dim];
            T::gemm(n, self.out_dim, self.in_dim, dy.data(), false, &self.weights, false, T::zero(), &mut d);
            Tensor::new(vec![n, self.in_dim], d).expect("shape preserved")
        });
        (dx, grads)
    }
}

fn dims4(shape: &[usize]) -> Result<[usize; 4], NnetError> {
    <[usize; 4]>::try_from(shape)
        .map_err(|_| NnetError::Shape(format!("expected n×c×h×w input, got {shape:?}")))
}

impl<T: Scalar> Layer<T> {
    pub fn new(kind: LayerKind<T>) -> Self {
        Self { kind, frozen: false }
    }

    pub fn frozen(mut self, frozen: bool) -> Self {
        self.frozen = frozen;
        self
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv2d(_) | LayerKind::Dense(_))
    }

    pub fn trainable(&self) -> bool {
        self.has_params() && !self.frozen
    }

    pub fn params(&self) -> Option<(&[T], &[T])> {
        match &self.kind {
            LayerKind::Conv2d(c) => Some((&c.weights, &c.bias)),
            LayerKind::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [T], &mut [T])> {
        match &mut self.kind {
            LayerKind::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            LayerKind::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match &self.kind {
            LayerKind::Conv2d(c) => LayerSpec::Conv2d {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
                frozen: self.frozen,
            },
            LayerKind::Relu => LayerSpec::Relu,
            LayerKind::MaxPool2d { window, stride } => {
                LayerSpec::Maxpool2d { window: *window, stride: *stride }
            }
            LayerKind::Flatten => LayerSpec::Flatten,
            LayerKind::Dense(d) => {
                LayerSpec::Dense { in_dim: d.in_dim, out_dim: d.out_dim, frozen: self.frozen }
            }
            LayerKind::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
        }
    }

    pub fn from_spec(spec: &LayerSpec) -> Self {
        match *spec {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, frozen } => {
                Layer::new(LayerKind::Conv2d(Conv2d::zeroed(in_channels, out_channels, kernel, stride)))
                    .frozen(frozen)
            }
            LayerSpec::Relu => Layer::new(LayerKind::Relu),
            LayerSpec::Maxpool2d { window, stride } => {
                Layer::new(LayerKind::MaxPool2d { window, stride })
            }
            LayerSpec::Flatten => Layer::new(LayerKind::Flatten),
            LayerSpec::Dense { in_dim, out_dim, frozen } => {
                Layer::new(LayerKind::Dense(Dense::zeroed(in_dim, out_dim))).frozen(frozen)
            }
            LayerSpec::Dropout { rate } => Layer::new(LayerKind::Dropout { rate }),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnetError> {
        let bad = |what: &str| NnetError::Shape(format!("{what} cannot take input {input:?}"));
        match &self.kind {
            LayerKind::Conv2d(c) => {
                if c.kernel == 0 || c.stride == 0 {
                    return Err(bad("conv2d with zero kernel/stride"));
                }
                if c.weights.len() != c.out_channels * c.fan_in() || c.bias.len() != c.out_channels {
                    return Err(NnetError::Shape("conv2d parameter length mismatch".into()));
                }
                match *input {
                    [ch, h, w] if ch == c.in_channels && h >= c.kernel && w >= c.kernel => {
                        let (oh, ow) = c.out_hw(h, w);
                        Ok(vec![c.out_channels, oh, ow])
                    }
                    _ => Err(bad("conv2d")),
                }
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(NnetError::Config(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerKind::MaxPool2d { window, stride } => match *input {
                [ch, h, w] if *window > 0 && *stride > 0 && h >= *window && w >= *window => {
                    Ok(vec![ch, (h - window) / stride + 1, (w - window) / stride + 1])
                }
                _ => Err(bad("maxpool2d")),
            },
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Dense(d) => {
                if d.weights.len() != d.in_dim * d.out_dim || d.bias.len() != d.out_dim {
                    return Err(NnetError::Shape("dense parameter length mismatch".into()));
                }
                match *input {
                    [dim] if dim == d.in_dim => Ok(vec![d.out_dim]),
                    _ => Err(bad("dense")),
                }
            }
        }
    }

    /// Forward pass. `rng` is `Some` in training mode (it drives dropout).
    pub(crate) fn forward(
        &self,
        x: Tensor<T>,
        rng: Option<&mut Xoshiro256StarStar>,
    ) -> Result<(Tensor<T>, Cache<T>), NnetError> {
        match &self.kind {
            LayerKind::Conv2d(c) => {
                let y = c.forward(&x)?;
                Ok((y, Cache::Input(x)))
            }
            LayerKind::Dense(d) => {
                let y = d.forward(&x)?;
                Ok((y, Cache::Input(x)))
            }
            LayerKind::Relu => {
                let mut y = x;
                let mask: Vec<bool> = y.data().iter().map(|&v| v > T::zero()).collect();
                for (v, &keep) in y.data_mut().iter_mut().zip(&mask) {
                    if !keep {
                        *v = T::zero();
                    }
                }
                Ok((y, Cache::ReluMask(mask)))
            }
            LayerKind::MaxPool2d { window, stride } => {
                let [n, c, h, w] = dims4(x.shape())?;
                if h < *window || w < *window {
                    return Err(NnetError::Shape(format!("maxpool cannot take {:?}", x.shape())));
                }
                let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
                let mut out = Vec::with_capacity(n * c * oh * ow);
                let mut argmax = Vec::with_capacity(n * c * oh * ow);
                let data = x.data();
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + oy * stride * w + ox * stride;
                            for dy in 0..*window {
                                for dx in 0..*window {
                                    let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                                    if data[idx] > data[best] {
                                        best = idx;
                                    }
                                }
                            }
                            out.push(data[best]);
                            argmax.push(best);
                        }
                    }
                }
                let y = Tensor::new(vec![n, c, oh, ow], out)?;
                Ok((y, Cache::PoolArgmax { input_shape: x.shape().to_vec(), argmax }))
            }
            LayerKind::Flatten => {
                let shape = x.shape().to_vec();
                let per: usize = shape[1..].iter().product();
                let y = x.reshape(vec![shape[0], per])?;
                Ok((y, Cache::Shape(shape)))
            }
            LayerKind::Dropout { rate } => match rng {
                Some(rng) if *rate > 0.0 => {
                    let keep_scale = T::lit(1.0 / (1.0 - rate));
                    let mut y = x;
                    let mask: Vec<T> = (0..y.len())
                        .map(|_| if rng.next_f64() >= *rate { keep_scale } else { T::zero() })
                        .collect();
                    for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                        *v = *v * m;
                    }
                    Ok((y, Cache::DropoutMask(Some(mask))))
                }
                _ => Ok((x, Cache::DropoutMask(None))),
            },
        }
    }

    pub(crate) fn backward(
        &self,
        cache: &Cache<T>,
        dy: Tensor<T>,
        need_input: bool,
    ) -> Result<(Option<Tensor<T>>, Option<ParamGrad<T>>), NnetError> {
        let need_params = self.trainable();
        let out = match (&self.kind, cache) {
            (LayerKind::Conv2d(c), Cache::Input(x)) => c.backward(x, &dy, need_input, need_params),
            (LayerKind::Dense(d), Cache::Input(x)) => d.backward(x, &dy, need_input, need_params),
            (LayerKind::Relu, Cache::ReluMask(mask)) => {
                let mut dx = dy;
                for (g, &keep) in dx.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *g = T::zero();
                    }
                }
                (Some(dx), None)
            }
            (LayerKind::MaxPool2d { .. }, Cache::PoolArgmax { input_shape, argmax }) => {
                let mut dx = Tensor::zeros(input_shape.clone());
                let d = dx.data_mut();
                for (&idx, &g) in argmax.iter().zip(dy.data()) {
                    d[idx] = d[idx] + g;
                }
                (Some(dx), None)
            }
            (LayerKind::Flatten, Cache::Shape(shape)) => (Some(dy.reshape(shape.clone())?), None),
            (LayerKind::Dropout { .. }, Cache::DropoutMask(mask)) => {
                let mut dx = dy;
                if let Some(mask) = mask {
                    for (g, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *g = *g * m;
                    }
                }
                (Some(dx), None)
            }
            _ => return Err(NnetError::Internal("cache does not match layer kind".into())),
        };
        Ok(out)
    }
}
