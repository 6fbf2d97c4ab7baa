//! Losses, class-balanced batching, Adam and the epoch loop with early
//! stopping on a validation metric.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Head, Model};
use crate::ordinal;

/// Samples per gradient chunk. Chunk sums are combined in a fixed order, so
/// results do not depend on the number of worker threads.
const GRAD_CHUNK: usize = 4;
/// A batch loss this many times the first batch loss (floored at
/// [`EXPLOSION_FLOOR`]) counts as divergence even while still finite.
pub const EXPLOSION_FACTOR: f64 = 1e4;
const EXPLOSION_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    BinaryCrossEntropy,
    MeanSquaredError,
}

impl LossKind {
    /// The loss that matches a model head.
    pub fn for_head(head: &Head) -> Self {
        match head {
            Head::Multiclass { .. } => LossKind::CrossEntropy,
            Head::Binary | Head::Thresholds { .. } => LossKind::BinaryCrossEntropy,
            Head::Regression => LossKind::MeanSquaredError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub balanced_batching: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            balanced_batching: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_classes: Option<usize>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epochs must be positive".into());
        }
        if self.patience >= self.max_epochs {
            return bad(format!(
                "patience ({}) must be below max epochs ({})",
                self.patience, self.max_epochs
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if let (true, Some(c)) = (self.balanced_batching, num_classes) {
            if self.batch_size < c {
                return bad(format!(
                    "balanced batches of {} cannot hold {c} classes",
                    self.batch_size
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    /// One value per model output (0/1 for binary logits).
    Values(Vec<f64>),
}

/// One training example: a time-major input sequence and its target.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: Array2<f64>,
    pub target: Target,
    /// Ordinal class used for balanced batching and ordinal metrics.
    pub class: Option<usize>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss of one prediction and its gradient with respect to the prediction.
/// Multi-output binary and squared losses are averaged over outputs.
pub fn loss_and_grad(
    kind: LossKind,
    prediction: &[f64],
    target: &Target,
) -> Result<(f64, Vec<f64>)> {
    let mismatch = || {
        Error::ShapeMismatch(format!(
            "{kind:?} prediction of width {} vs {target:?}",
            prediction.len()
        ))
    };
    match (kind, target) {
        (LossKind::CrossEntropy, &Target::Class(c)) => {
            if c >= prediction.len() {
                return Err(mismatch());
            }
            let ls = log_softmax(prediction);
            let grad = ls
                .iter()
                .enumerate()
                .map(|(k, l)| l.exp() - f64::from(u8::from(k == c)))
                .collect();
            Ok((-ls[c], grad))
        }
        (LossKind::BinaryCrossEntropy, Target::Values(t)) if t.len() == prediction.len() => {
            let n = t.len() as f64;
            let loss = prediction
                .iter()
                .zip(t)
                .map(|(&z, &y)| softplus(z) - y * z)
                .sum::<f64>()
                / n;
            let grad = prediction
                .iter()
                .zip(t)
                .map(|(&z, &y)| (sigmoid(z) - y) / n)
                .collect();
            Ok((loss, grad))
        }
        (LossKind::MeanSquaredError, Target::Values(t)) if t.len() == prediction.len() => {
            let n = t.len() as f64;
            let loss = prediction
                .iter()
                .zip(t)
                .map(|(p, y)| (p - y).powi(2))
                .sum::<f64>()
                / n;
            let grad = prediction
                .iter()
                .zip(t)
                .map(|(p, y)| 2.0 * (p - y) / n)
                .collect();
            Ok((loss, grad))
        }
        _ => Err(mismatch()),
    }
}

/// Mean loss over a batch of predictions.
pub fn compute_loss(kind: LossKind, predictions: &[Vec<f64>], targets: &[Target]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        total += loss_and_grad(kind, p, t)?.0;
    }
    Ok(total / predictions.len() as f64)
}

/// Draws batches in which every class gets an equal quota of
/// `floor(batch_size / C)` slots. Each class is served from its own
/// shuffled queue, reshuffled when exhausted, so small classes repeat
/// within an epoch while large ones are visited at most once.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    by_class: Vec<Vec<usize>>,
    batch_size: usize,
    total: usize,
    seed: u64,
}

impl BalancedSampler {
    pub fn new(
        classes: &[usize],
        num_classes: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_classes == 0 || batch_size < num_classes {
            return Err(Error::InvalidConfig(format!(
                "batch size {batch_size} cannot hold {num_classes} classes"
            )));
        }
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &c) in classes.iter().enumerate() {
            by_class
                .get_mut(c)
                .ok_or(Error::OutOfRange {
                    value: c,
                    classes: num_classes,
                })?
                .push(i);
        }
        if let Some(empty) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(empty));
        }
        Ok(BalancedSampler {
            by_class,
            batch_size,
            total: classes.len(),
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.total.div_ceil(self.batch_size)
    }

    /// Index batches of one epoch, deterministic in `(seed, epoch)`.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let c = self.by_class.len();
        let quota = self.batch_size / c;
        let extra = self.batch_size - quota * c;
        // Leftover slots go to the largest classes first.
        let mut by_size: Vec<usize> = (0..c).collect();
        by_size.sort_by(|&a, &b| {
            self.by_class[b]
                .len()
                .cmp(&self.by_class[a].len())
                .then(a.cmp(&b))
        });

        let mut queues: Vec<Vec<usize>> = self.by_class.clone();
        for q in &mut queues {
            q.shuffle(&mut rng);
        }
        let mut cursor = vec![0usize; c];
        let mut draw = |class: usize, rng: &mut ChaCha8Rng| {
            if cursor[class] == queues[class].len() {
                queues[class].shuffle(rng);
                cursor[class] = 0;
            }
            cursor[class] += 1;
            queues[class][cursor[class] - 1]
        };
        (0..self.batches_per_epoch())
            .map(|b| {
                let mut batch = Vec::with_capacity(self.batch_size);
                for class in 0..c {
                    for _ in 0..quota {
                        batch.push(draw(class, &mut rng));
                    }
                }
                for k in 0..extra {
                    batch.push(draw(by_size[(b * extra + k) % c], &mut rng));
                }
                batch
            })
            .collect()
    }
}

/// Shuffled, non-overlapping batches covering every index once.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    MeanSquaredError,
}

impl Metric {
    pub fn for_head(head: &Head) -> Self {
        match head {
            Head::Regression => Metric::MeanSquaredError,
            _ => Metric::Accuracy,
        }
    }

    fn better(&self, a: f64, b: f64) -> bool {
        match self {
            Metric::Accuracy => a > b,
            Metric::MeanSquaredError => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub metric: Metric,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let metric = match self.metric {
            Metric::Accuracy => "val_accuracy",
            Metric::MeanSquaredError => "val_mse",
        };
        let mut s = format!("epoch,train_loss,val_loss,{metric},wall_seconds,best\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.3},{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                r.val_metric,
                r.wall_seconds,
                u8::from(r.epoch == self.best_epoch)
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Validation loss and metric of a model in inference mode.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<(f64, f64)> {
    let loss = LossKind::for_head(&model.config.head);
    let scored: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let out = model.forward(s.input.view())?;
            let l = loss_and_grad(loss, &out, &s.target)?.0;
            let m = match (&model.config.head, &s.target) {
                (Head::Multiclass { .. }, &Target::Class(c)) => {
                    f64::from(u8::from(argmax(&out) == c))
                }
                (Head::Binary, Target::Values(t)) => {
                    f64::from(u8::from((out[0] > 0.0) == (t[0] > 0.5)))
                }
                (Head::Thresholds { .. }, _) => {
                    let class = s.class.ok_or_else(|| {
                        Error::ShapeMismatch("threshold head needs sample classes".into())
                    })?;
                    let exceed: Vec<f64> = out.iter().map(|&z| 1.0 - sigmoid(z)).collect();
                    f64::from(u8::from(ordinal::recombine(&exceed)?.class == class))
                }
                (Head::Regression, Target::Values(t)) => (out[0] - t[0]).powi(2),
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "{:?} target for {:?} head",
                        s.target, model.config.head
                    )))
                }
            };
            Ok((l, m))
        })
        .collect::<Result<_>>()?;
    let n = scored.len().max(1) as f64;
    Ok((
        scored.iter().map(|s| s.0).sum::<f64>() / n,
        scored.iter().map(|s| s.1).sum::<f64>() / n,
    ))
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn batch_gradient(
    model: &Model,
    samples: &[Sample],
    batch: &[usize],
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let loss_kind = LossKind::for_head(&model.config.head);
    let n = model.num_params();
    let chunks: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut grad = vec![0.0; n];
            let mut loss = 0.0;
            for (k, &i) in chunk.iter().enumerate() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed.wrapping_add((ci * GRAD_CHUNK + k) as u64));
                let cache = model.forward_train(samples[i].input.view(), &mut rng)?;
                let (l, d) = loss_and_grad(loss_kind, &cache.output, &samples[i].target)?;
                loss += l;
                model.backward(&cache, &d, &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = vec![0.0; n];
    let mut loss = 0.0;
    for (l, g) in chunks {
        loss += l;
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    total.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, total))
}

/// Trains `model` and returns it with the parameters of the best
/// validation epoch restored. Ties on the validation metric are broken by
/// validation loss.
pub fn fit(
    mut model: Model,
    train: &[Sample],
    validation: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 1,
            got: train.len().min(validation.len()),
        });
    }
    let num_classes = match model.config.head {
        Head::Multiclass { classes } => Some(classes),
        Head::Thresholds { count } => Some(count + 1),
        Head::Binary | Head::Regression => None,
    };
    let strata: Option<(Vec<usize>, usize)> = if cfg.balanced_batching {
        let classes: Option<Vec<usize>> = train.iter().map(|s| s.class).collect();
        classes.map(|c| {
            let k = num_classes.unwrap_or_else(|| c.iter().max().map_or(1, |m| m + 1));
            (c, k)
        })
    } else {
        None
    };
    cfg.validate(strata.as_ref().map(|s| s.1))?;
    let sampler = match &strata {
        Some((classes, k)) => Some(BalancedSampler::new(classes, *k, cfg.batch_size, cfg.seed)?),
        None => None,
    };

    let metric = Metric::for_head(&model.config.head);
    let mut adam = Adam::new(model.num_params(), cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut best: Option<(usize, f64, f64, Vec<f64>)> = None;
    let mut epochs = Vec::new();
    let mut first_loss: Option<f64> = None;
    model.set_training(true);
    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let batches = match &sampler {
            Some(s) => s.epoch(epoch),
            None => shuffled_batches(train.len(), cfg.batch_size, cfg.seed, epoch),
        };
        let mut total_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let step_seed = cfg
                .seed
                .wrapping_mul(0x2545_F491_4F6C_DD1D)
                .wrapping_add(((epoch as u64) << 32) | ((b as u64) << 12));
            let (loss, grad) = match batch_gradient(&model, train, batch, step_seed) {
                Err(Error::NonFiniteGradient(_)) => (f64::NAN, Vec::new()),
                other => other?,
            };
            let reference = *first_loss.get_or_insert(loss);
            if !loss.is_finite() || loss > EXPLOSION_FACTOR * reference.max(EXPLOSION_FLOOR) {
                return Err(Error::DivergedLoss { epoch, loss });
            }
            adam.update(&mut model.params, &grad);
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::DivergedLoss {
                    epoch,
                    loss: f64::NAN,
                });
            }
            total_loss += loss;
        }
        let train_loss = total_loss / batches.len() as f64;
        let (val_loss, val_metric) = evaluate(&model, validation)?;
        if !val_loss.is_finite() {
            return Err(Error::DivergedLoss {
                epoch,
                loss: val_loss,
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        let improved = match &best {
            None => true,
            Some((_, m, l, _)) => {
                metric.better(val_metric, *m) || (val_metric == *m && val_loss < *l)
            }
        };
        if improved {
            best = Some((epoch, val_metric, val_loss, model.params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.0) >= cfg.patience {
            break;
        }
    }
    let (best_epoch, _, _, params) = best.expect("at least one epoch");
    model.params = params;
    model.set_training(false);
    Ok((
        model,
        TrainHistory {
            metric,
            epochs,
            best_epoch,
        },
    ))
}
