//! Tiny 3D convolutional classifier: conv blocks, global average pooling,
//! dropout and a linear head.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{
    dropout_mask, global_avg_pool, global_avg_pool_backward, relu, relu_backward, AvgPool3d,
    Conv3d, Linear,
};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    /// Average-pooling window applied after the activation; `[1, 1, 1]` disables it.
    pub pool: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Head {
    SigmoidBinary,
    Softmax { classes: usize },
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::SigmoidBinary => 1,
            Head::Softmax { classes } => classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tiny3dConfig {
    /// `[C, T, H, W]`
    pub input: [usize; 4],
    /// Inputs are clamped to `[-input_clip, input_clip]`, then multiplied by `input_scale`.
    pub input_clip: f64,
    pub input_scale: f64,
    pub blocks: Vec<BlockSpec>,
    pub dropout: f64,
    pub head: Head,
    pub seed: u64,
}

impl Tiny3dConfig {
    fn block(out_channels: usize, pool: bool) -> BlockSpec {
        BlockSpec {
            out_channels,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            pool: if pool { [1, 2, 2] } else { [1, 1, 1] },
        }
    }

    /// 8 -> 16 -> 32 channels on 16-frame 46x60 clips.
    pub fn standard() -> Self {
        Tiny3dConfig {
            input: [2, 15, 46, 60],
            input_clip: 20.0,
            input_scale: 16.0,
            blocks: vec![
                Self::block(8, true),
                Self::block(16, true),
                Self::block(32, false),
            ],
            dropout: 0.5,
            head: Head::SigmoidBinary,
            seed: 0,
        }
    }

    /// 4 -> 8 -> 8 channels on 8-frame 24x32 clips.
    pub fn compact() -> Self {
        Tiny3dConfig {
            input: [2, 7, 24, 32],
            blocks: vec![
                Self::block(4, true),
                Self::block(8, true),
                Self::block(8, false),
            ],
            ..Self::standard()
        }
    }

    pub fn with_head(&self, head: Head) -> Self {
        Tiny3dConfig {
            head,
            ..self.clone()
        }
    }

    pub fn with_input_channels(&self, channels: usize) -> Self {
        let mut c = self.clone();
        c.input[0] = channels;
        c
    }

    /// Feature-map dims after each block, checking every layer fits.
    pub fn trunk_dims(&self) -> Result<Vec<[usize; 4]>> {
        let mut d = self.input;
        let mut dims = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let conv = Conv3d::<f32>::zeros(
                format!("conv{}", i + 1),
                d[0],
                b.out_channels,
                b.kernel,
                b.stride,
            );
            d = conv.output_dims(d)?;
            d = AvgPool3d { kernel: b.pool }.output_dims(d)?;
            dims.push(d);
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.input.contains(&0) {
            return bad(format!("input dims {:?} contain zero", self.input));
        }
        if self.blocks.is_empty() {
            return bad("at least one conv block is required".into());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.out_channels == 0
                || b.kernel.contains(&0)
                || b.stride.contains(&0)
                || b.pool.contains(&0)
            {
                return bad(format!("block {} has a zero size", i + 1));
            }
        }
        if !(self.input_clip > 0.0 && self.input_scale.is_finite() && self.input_scale > 0.0) {
            return bad(format!(
                "input clip and scale must be positive, got {} and {}",
                self.input_clip, self.input_scale
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if let Head::Softmax { classes } = self.head {
            if classes < 2 {
                return bad(format!("softmax head needs >= 2 classes, got {classes}"));
            }
        }
        self.trunk_dims()
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(serde_json::to_vec(self).expect("config serializes")).into()
    }
}

pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Activations recorded by [`Tiny3d::forward`] for the backward pass.
#[derive(Debug)]
pub struct Cache<T> {
    version: u64,
    block_inputs: Vec<Tensor<T>>,
    block_acts: Vec<Tensor<T>>,
    last_shape: Vec<usize>,
    features: Vec<T>,
    mask: Option<Vec<T>>,
}

impl<T> Cache<T> {
    pub fn dropout_mask(&self) -> Option<&[T]> {
        self.mask.as_deref()
    }
}

impl<T: Real> Cache<T> {
    /// Which ReLU units fired, across all blocks in order.
    pub fn active_units(&self) -> Vec<bool> {
        self.block_acts
            .iter()
            .flat_map(|a| a.data().iter().map(|&v| v > T::zero()))
            .collect()
    }
}

/// Parameter gradients in [`Tiny3d::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(net: &Tiny3d<T>) -> Self {
        Grads {
            tensors: net
                .params()
                .iter()
                .map(|p| vec![T::zero(); p.len()])
                .collect(),
        }
    }

    pub fn add(&mut self, other: &Grads<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors.concat()
    }
}

#[derive(Debug, Clone)]
pub struct Tiny3d<T> {
    config: Tiny3dConfig,
    convs: Vec<Conv3d<T>>,
    pools: Vec<AvgPool3d>,
    head: Linear<T>,
    /// Changes on every parameter update so caches from older parameters are rejected.
    version: u64,
}

impl<T: Real> Tiny3d<T> {
    /// He-initialised convolutions from `config.seed` and a zero head, so an
    /// untrained net predicts 0.5 everywhere.
    pub fn new(config: &Tiny3dConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed, &[seed::tag("init")]);
        let mut convs = Vec::new();
        let mut pools = Vec::new();
        let mut ch = config.input[0];
        for (i, b) in config.blocks.iter().enumerate() {
            let mut c = Conv3d::zeros(
                format!("conv{}", i + 1),
                ch,
                b.out_channels,
                b.kernel,
                b.stride,
            );
            c.init(&mut rng);
            convs.push(c);
            pools.push(AvgPool3d { kernel: b.pool });
            ch = b.out_channels;
        }
        Ok(Tiny3d {
            config: config.clone(),
            convs,
            pools,
            head: Linear::zeros(ch, config.head.outputs()),
            version: fresh_version(),
        })
    }

    pub fn config(&self) -> &Tiny3dConfig {
        &self.config
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::new();
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        v.push(&self.head.weight);
        v.push(&self.head.bias);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "parameters",
                &[self.num_params()],
                &[flat.len()],
            ));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        self.version = fresh_version();
        Ok(())
    }

    /// `theta -= lr * g` for every parameter.
    pub fn apply_update(&mut self, grads: &Grads<T>, lr: T) {
        for (p, g) in self.params_mut().into_iter().zip(&grads.tensors) {
            p.iter_mut().zip(g).for_each(|(w, &d)| *w = *w - lr * d);
        }
        self.version = fresh_version();
    }

    /// Raw head outputs (logits) and the cache needed for [`Tiny3d::backward`].
    fn normalize(&self, x: &Tensor<T>) -> Tensor<T> {
        let c = T::of(self.config.input_clip);
        let s = T::of(self.config.input_scale);
        let data = x.data().iter().map(|&v| v.max(-c).min(c) * s).collect();
        Tensor::from_parts(x.shape().to_vec(), data)
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode<'_>) -> Result<(Vec<T>, Cache<T>)> {
        if x.shape() != self.config.input {
            return Err(Error::shape("input", &self.config.input, x.shape()));
        }
        let mut block_inputs = Vec::with_capacity(self.convs.len());
        let mut block_acts = Vec::with_capacity(self.convs.len());
        let mut h = self.normalize(x);
        for (conv, pool) in self.convs.iter().zip(&self.pools) {
            let a = relu(&conv.forward(&h)?);
            let next = if pool.kernel == [1, 1, 1] {
                a.clone()
            } else {
                pool.forward(&a)?
            };
            block_inputs.push(h);
            block_acts.push(a);
            h = next;
        }
        let features = global_avg_pool(&h);
        let (mask, dropped) = match mode {
            Mode::Train(rng) if self.config.dropout > 0.0 => {
                let m: Vec<T> = dropout_mask(features.len(), self.config.dropout, rng);
                let d = features.iter().zip(&m).map(|(&f, &k)| f * k).collect();
                (Some(m), d)
            }
            _ => (None, features.clone()),
        };
        let logits = self.head.forward(&dropped)?;
        Ok((
            logits,
            Cache {
                version: self.version,
                block_inputs,
                block_acts,
                last_shape: h.shape().to_vec(),
                features,
                mask,
            },
        ))
    }

    pub fn backward(&self, cache: &Cache<T>, grad_logits: &[T]) -> Result<Grads<T>> {
        if cache.version != self.version {
            return Err(Error::InvalidState(
                "cache was produced by different parameters".into(),
            ));
        }
        if grad_logits.len() != self.head.out_features {
            return Err(Error::shape(
                "head",
                &[self.head.out_features],
                &[grad_logits.len()],
            ));
        }
        let dropped: Vec<T> = match &cache.mask {
            Some(m) => cache.features.iter().zip(m).map(|(&f, &k)| f * k).collect(),
            None => cache.features.clone(),
        };
        let hg = self.head.backward(&dropped, grad_logits);
        let gfeat: Vec<T> = match &cache.mask {
            Some(m) => hg.input.iter().zip(m).map(|(&g, &k)| g * k).collect(),
            None => hg.input,
        };
        let mut g = global_avg_pool_backward(&cache.last_shape, &gfeat);
        let mut conv_grads = Vec::with_capacity(self.convs.len());
        for i in (0..self.convs.len()).rev() {
            let act = &cache.block_acts[i];
            let pool = &self.pools[i];
            if pool.kernel != [1, 1, 1] {
                let d = act.shape();
                g = pool.backward([d[0], d[1], d[2], d[3]], &g)?;
            }
            let gpre = relu_backward(act, &g);
            let cg = self.convs[i].backward(&cache.block_inputs[i], &gpre)?;
            g = cg.input;
            conv_grads.push((cg.weight, cg.bias));
        }
        let mut tensors = Vec::with_capacity(2 * self.convs.len() + 2);
        for (w, b) in conv_grads.into_iter().rev() {
            tensors.push(w);
            tensors.push(b);
        }
        tensors.push(hg.weight);
        tensors.push(hg.bias);
        Ok(Grads { tensors })
    }
}
