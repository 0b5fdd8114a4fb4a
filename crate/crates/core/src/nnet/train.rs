use serde::{Deserialize, Serialize};

use super::{mse_loss, Mode, Network, NnetError, Optimizer, OptimizerKind, Scalar, Tensor};
use crate::grading::{self, Grade, Score};
use crate::rng::Xoshiro256StarStar;

/// One training or validation sample: a flattened input and its grade.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub input: &'a [f32],
    pub grade: Grade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub dropout_rate: f64,
    /// Number of leading layers whose parameters stay fixed.
    pub frozen_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 10,
            batch_size: 16,
            seed: 42,
            optimizer: OptimizerKind::Sgd,
            dropout_rate: super::DEFAULT_DROPOUT,
            frozen_layers: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the reference model on 224-pixel inputs. Plain SGD at
    /// 0.01 diverges there (the first dense layer sees 46 656 inputs), so the
    /// end-to-end default is Adam with a small step.
    pub fn reference() -> Self {
        Self { learning_rate: 1e-4, optimizer: OptimizerKind::adam(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), NnetError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(NnetError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NnetError::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnetError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_qwk: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One JSON object per line: `{"epoch": n, "loss": x, "val_qwk": y|null}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { epochs })
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn batch_tensor<T: Scalar>(net: &Network<T>, examples: &[Example<'_>]) -> Result<Tensor<T>, NnetError> {
    let inputs: Vec<&[f32]> = examples.iter().map(|e| e.input).collect();
    Tensor::stack(net.input_shape(), &inputs)
}

/// Eval-mode scores for a list of examples, in order.
pub fn predict_examples<T: Scalar>(
    net: &Network<T>,
    examples: &[Example<'_>],
    batch_size: usize,
) -> Result<Vec<(Score, Grade)>, NnetError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        out.extend(net.predict(batch_tensor(net, chunk)?)?);
    }
    Ok(out)
}

pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &[Example<'_>],
    val: Option<&[Example<'_>]>,
    cfg: &TrainConfig,
) -> Result<TrainLog, NnetError> {
    train_with_progress(net, data, val, cfg, |_| {})
}

/// Mini-batch training on MSE against the grade value.
///
/// Shuffling uses a generator seeded with `cfg.seed`; dropout masks use a
/// second stream derived from the same seed. The reported epoch loss is the
/// mean training-mode squared error over all samples of the epoch.
pub fn train_with_progress<T: Scalar>(
    net: &mut Network<T>,
    data: &[Example<'_>],
    val: Option<&[Example<'_>]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog, NnetError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnetError::NoData);
    }
    if cfg.frozen_layers > net.layers().len() {
        return Err(NnetError::Config(format!(
            "frozen_layers {} exceeds layer count {}",
            cfg.frozen_layers,
            net.layers().len()
        )));
    }
    net.set_dropout_rate(cfg.dropout_rate)?;
    net.freeze_first(cfg.frozen_layers);
    net.reseed_dropout(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        net.set_mode(Mode::Train);
        let mut sum_sq = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| data[i]).collect();
            let targets: Vec<f64> = batch.iter().map(|e| e.grade.as_f64()).collect();
            let out = net.forward(batch_tensor(net, &batch)?)?;
            let (loss, grad) = mse_loss(&out, &targets)?;
            if !loss.is_finite() {
                net.set_mode(Mode::Eval);
                return Err(NnetError::Diverged { epoch, loss });
            }
            sum_sq += loss * batch.len() as f64;
            let grads = match net.backward(&grad) {
                Ok(g) => g,
                Err(NnetError::NonFinite(_)) => {
                    net.set_mode(Mode::Eval);
                    return Err(NnetError::Diverged { epoch, loss: f64::NAN });
                }
                Err(e) => return Err(e),
            };
            optimizer.step(net, &grads)?;
        }
        let loss = sum_sq / data.len() as f64;
        net.set_mode(Mode::Eval);
        if !loss.is_finite() {
            return Err(NnetError::Diverged { epoch, loss });
        }
        let val_qwk = match val {
            Some(v) if !v.is_empty() => validation_qwk(net, v, cfg.batch_size)?,
            _ => None,
        };
        let record = EpochRecord { epoch, loss, val_qwk };
        on_epoch(&record);
        log.epochs.push(record);
    }
    net.set_mode(Mode::Eval);
    Ok(log)
}

/// `None` when kappa is undefined for this split (single-class degenerate case).
fn validation_qwk<T: Scalar>(
    net: &Network<T>,
    val: &[Example<'_>],
    batch_size: usize,
) -> Result<Option<f64>, NnetError> {
    let preds = predict_examples(net, val, batch_size)?;
    let truth: Vec<Grade> = val.iter().map(|e| e.grade).collect();
    let scores: Vec<Score> = preds.iter().map(|p| p.0).collect();
    Ok(grading::evaluate(&truth, &scores).ok().map(|r| r.qwk()))
}
