//! Minibatch SGD with a step learning-rate schedule, plus inference helpers.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{bce_with_logit, cross_entropy, sigmoid};
use super::net::{Grads, Head, Mode, Tiny3d, Tiny3dConfig};
use super::tensor::{Real, Tensor};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 0.1,
            decay_factor: 0.1,
            decay_every: 25,
            batch_size: 8,
            momentum: 0.0,
            seed: 0,
            loss: LossKind::Bce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be >= 1");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        Ok(())
    }

    /// `lr * decay_factor ^ floor(epoch / decay_every)`
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub input: Tensor<T>,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Summed per-sample loss over the epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,loss\n");
        for e in &self.epochs {
            writeln!(s, "{},{},{}", e.epoch, e.lr, e.loss).unwrap();
        }
        s
    }
}

fn sample_loss<T: Real>(head: Head, logits: &[T], target: usize) -> Result<(f64, Vec<T>)> {
    match head {
        Head::SigmoidBinary => {
            let (l, g) = bce_with_logit(logits[0].f64(), target as f64)?;
            Ok((l, vec![T::of(g)]))
        }
        Head::Softmax { .. } => {
            let z: Vec<f64> = logits.iter().map(|v| v.f64()).collect();
            let (l, g) = cross_entropy(&z, target)?;
            Ok((l, g.into_iter().map(T::of).collect()))
        }
    }
}

fn check_classes<T>(head: Head, samples: &[Sample<T>]) -> Result<()> {
    let n = head.outputs().max(2);
    let mut seen = vec![0usize; n];
    for s in samples {
        if s.target >= n {
            return match head {
                Head::SigmoidBinary => Err(Error::InvalidLabel(s.target as f64)),
                Head::Softmax { .. } => Err(Error::InvalidArgument(format!(
                    "class {} out of range",
                    s.target
                ))),
            };
        }
        seen[s.target] += 1;
    }
    if let Some(c) = seen.iter().position(|&k| k == 0) {
        return Err(Error::InsufficientData(format!(
            "training set has no examples of class {c} ({} samples)",
            samples.len()
        )));
    }
    Ok(())
}

/// Trains in place. The batch gradient is the mean over the batch; the
/// recorded epoch loss is the summed per-sample loss.
pub fn train<T: Real>(
    net: &mut Tiny3d<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    let head = net.config().head;
    match (head, cfg.loss) {
        (Head::SigmoidBinary, LossKind::Bce) | (Head::Softmax { .. }, LossKind::CrossEntropy) => {}
        _ => {
            return Err(Error::InvalidParams(format!(
                "loss {:?} does not match head {:?}",
                cfg.loss, head
            )));
        }
    }
    check_classes(head, samples)?;
    let mut shuffle_rng = seed::rng(cfg.seed, &[seed::tag("shuffle")]);
    let mut dropout_rng = seed::rng(cfg.seed, &[seed::tag("dropout")]);
    let mut velocity = (cfg.momentum > 0.0).then(|| Grads::zeros_like(net));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Grads::zeros_like(net);
            for &i in batch {
                let (logits, cache) =
                    net.forward(&samples[i].input, Mode::Train(&mut dropout_rng))?;
                let (l, g) = sample_loss(head, &logits, samples[i].target)?;
                epoch_loss += l;
                acc.add(&net.backward(&cache, &g)?);
            }
            let scale = T::of(1.0 / batch.len() as f64);
            acc.tensors
                .iter_mut()
                .flatten()
                .for_each(|v| *v = *v * scale);
            let step = match velocity.as_mut() {
                Some(v) => {
                    let m = T::of(cfg.momentum);
                    for (vt, gt) in v.tensors.iter_mut().zip(&acc.tensors) {
                        vt.iter_mut().zip(gt).for_each(|(a, &b)| *a = m * *a + b);
                    }
                    v.clone()
                }
                None => acc,
            };
            net.apply_update(&step, T::of(lr));
        }
        if !epoch_loss.is_finite() {
            return Err(Error::InvalidState(format!(
                "loss diverged at epoch {epoch}"
            )));
        }
        history.epochs.push(EpochStats {
            epoch,
            lr,
            loss: epoch_loss,
        });
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pitch_id: String,
    /// Probability of the injured class, strictly inside (0, 1).
    pub p: f64,
    pub label_hat: Label,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn predict_proba<T: Real>(net: &Tiny3d<T>, x: &Tensor<T>) -> Result<f64> {
    if net.config().head != Head::SigmoidBinary {
        return Err(Error::InvalidParams(
            "predict_proba needs a sigmoid head".into(),
        ));
    }
    let (z, _) = net.forward(x, Mode::Eval)?;
    Ok(sigmoid(z[0].f64()))
}

/// Injured iff `p >= threshold`.
pub fn predict<T: Real>(
    net: &Tiny3d<T>,
    items: &[(String, Tensor<T>)],
    threshold: f64,
) -> Result<Vec<Prediction>> {
    items
        .iter()
        .map(|(id, x)| {
            let p = predict_proba(net, x)?;
            Ok(Prediction {
                pitch_id: id.clone(),
                p,
                label_hat: if p >= threshold {
                    Label::Injured
                } else {
                    Label::Healthy
                },
            })
        })
        .collect()
}

/// Arg-max class; ties go to the lowest index.
pub fn predict_class<T: Real>(net: &Tiny3d<T>, x: &Tensor<T>) -> Result<usize> {
    let (z, _) = net.forward(x, Mode::Eval)?;
    Ok(z.iter()
        .enumerate()
        .fold(
            (0, z[0]),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0)
}

/// Trains a fresh softmax classifier and returns it with its held-out accuracy.
pub fn train_classifier<T: Real>(
    config: &Tiny3dConfig,
    train_set: &[Sample<T>],
    test_set: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<(Tiny3d<T>, f64)> {
    if !matches!(config.head, Head::Softmax { .. }) || cfg.loss != LossKind::CrossEntropy {
        return Err(Error::InvalidParams(
            "classifier needs a softmax head and cross-entropy loss".into(),
        ));
    }
    if test_set.is_empty() {
        return Err(Error::InsufficientData("empty held-out set".into()));
    }
    let mut net = Tiny3d::new(config)?;
    train(&mut net, train_set, cfg)?;
    let mut correct = 0usize;
    for s in test_set {
        if predict_class(&net, &s.input)? == s.target {
            correct += 1;
        }
    }
    Ok((net, correct as f64 / test_set.len() as f64))
}
