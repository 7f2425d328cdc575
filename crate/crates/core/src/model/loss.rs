//! Binary and multiclass cross-entropy.

use crate::error::{Error, Result};

/// Probability clamp keeping `ln` finite.
pub const EPS: f64 = 1e-7;

/// Logits are clamped to this magnitude so `sigmoid` stays strictly inside (0, 1).
pub const LOGIT_LIMIT: f64 = 30.0;

pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_LIMIT, LOGIT_LIMIT);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_label(y: f64) -> Result<()> {
    if y == 0.0 || y == 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLabel(y))
    }
}

/// `-sum[y ln p + (1 - y) ln(1 - p)]` with `p` clamped to `[EPS, 1 - EPS]`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::Alignment(format!(
            "{} probabilities for {} labels",
            p.len(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in p.iter().zip(y) {
        check_label(y)?;
        let p = p.clamp(EPS, 1.0 - EPS);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total)
}

/// Loss and its derivative with respect to the logit, `sigmoid(z) - y`.
pub fn bce_with_logit(z: f64, y: f64) -> Result<(f64, f64)> {
    let p = sigmoid(z);
    Ok((bce_loss(&[p], &[y])?, p - y))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-ln softmax(z)[target]` and its gradient `softmax(z) - onehot(target)`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "class {target} out of range for {} outputs",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((lse - logits[target], grad))
}
