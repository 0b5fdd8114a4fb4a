use serde::{Deserialize, Serialize};

use super::{Gradients, Network, NnetError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m_w: Vec<T>,
    v_w: Vec<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

/// Applies gradients to the trainable layers of a network.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: f64,
    steps: u64,
    moments: Vec<Option<Moments<T>>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self, NnetError> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(NnetError::Config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(NnetError::Config("adam needs betas in [0, 1) and epsilon > 0".into()));
            }
        }
        Ok(Self { kind, learning_rate, steps: 0, moments: Vec::new() })
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<(), NnetError> {
        if grads.layers.len() != net.layers().len() {
            return Err(NnetError::Shape("gradient/network layer count mismatch".into()));
        }
        self.steps += 1;
        if self.moments.len() != grads.layers.len() {
            self.moments = vec![None; grads.layers.len()];
        }
        let lr = T::lit(self.learning_rate);
        for (i, grad) in grads.layers.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let layer = net.layer_mut(i);
            if layer.frozen {
                continue;
            }
            let Some((w, b)) = layer.params_mut() else { continue };
            if w.len() != grad.weights.len() || b.len() != grad.bias.len() {
                return Err(NnetError::Shape(format!("layer {i}: gradient length mismatch")));
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, &g) in w.iter_mut().zip(&grad.weights).chain(b.iter_mut().zip(&grad.bias)) {
                        *p = *p - lr * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let st = self.moments[i].get_or_insert_with(|| Moments {
                        m_w: vec![T::zero(); w.len()],
                        v_w: vec![T::zero(); w.len()],
                        m_b: vec![T::zero(); b.len()],
                        v_b: vec![T::zero(); b.len()],
                    });
                    let t = self.steps as i32;
                    let c1 = T::lit(1.0 - beta1.powi(t));
                    let c2 = T::lit(1.0 - beta2.powi(t));
                    let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(epsilon));
                    let one = T::one();
                    let update = |p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
                        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                            *m = b1 * *m + (one - b1) * g;
                            *v = b2 * *v + (one - b2) * g * g;
                            let m_hat = *m / c1;
                            let v_hat = *v / c2;
                            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    };
                    update(w, &grad.weights, &mut st.m_w, &mut st.v_w);
                    update(b, &grad.bias, &mut st.m_b, &mut st.v_b);
                }
            }
        }
        Ok(())
    }
}
