//! Network layers with explicit forward and backward passes.
//!
//! Activations are single samples laid out `[C, T, H, W]`; batching happens
//! in the training loop by accumulating per-sample gradients.

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

fn dims4(layer: &str, x: &Tensor<impl Real>) -> Result<[usize; 4]> {
    match x.shape() {
        &[c, t, h, w] => Ok([c, t, h, w]),
        s => Err(Error::InvalidInput(format!(
            "{layer}: expected a rank-4 input, got shape {s:?}"
        ))),
    }
}

/// 3D convolution with zero padding `kernel / 2` on each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    /// `[out, in, kt, kh, kw]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv3d<T> {
    pub fn zeros(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
    ) -> Self {
        let n = out_channels * in_channels * kernel.iter().product::<usize>();
        Conv3d {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![T::zero(); n],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// He-uniform weights, zero bias.
    pub fn init(&mut self, rng: &mut impl Rng) {
        let fan_in = (self.in_channels * self.kernel.iter().product::<usize>()) as f64;
        let bound = (6.0 / fan_in).sqrt();
        for w in &mut self.weight {
            *w = T::of(rng.random_range(-bound..bound));
        }
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    fn padding(&self) -> [usize; 3] {
        self.kernel.map(|k| k / 2)
    }

    pub fn output_dims(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        if input[0] != self.in_channels {
            return Err(Error::shape(
                &self.name,
                &[self.in_channels, input[1], input[2], input[3]],
                &input,
            ));
        }
        let pad = self.padding();
        let mut out = [self.out_channels, 0, 0, 0];
        for a in 0..3 {
            let span = input[a + 1] + 2 * pad[a];
            if span < self.kernel[a] {
                return Err(Error::InvalidInput(format!(
                    "{}: input axis {} too small for kernel",
                    self.name,
                    a + 1
                )));
            }
            out[a + 1] = (span - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    /// Output index ranges along width for tap `kw`: `(lo, hi)` such that
    /// every `ow` in `lo..hi` reads a valid input column.
    fn col_range(&self, kw: usize, wi: usize, wo: usize) -> (usize, usize) {
        let (s, p) = (self.stride[2], self.padding()[2]);
        let lo = (p.saturating_sub(kw)).div_ceil(s);
        // ow*s + kw - p <= wi - 1
        let hi = if wi + p < kw + 1 {
            0
        } else {
            ((wi + p - kw - 1) / s + 1).min(wo)
        };
        (lo.min(hi), hi)
    }

    fn src(o: usize, k: usize, s: usize, p: usize, n: usize) -> Option<usize> {
        (o * s + k).checked_sub(p).filter(|&i| i < n)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let din = dims4(&self.name, x)?;
        let dout = self.output_dims(din)?;
        let [ci_n, ti, hi, wi] = din;
        let [co_n, to, ho, wo] = dout;
        let [kt_n, kh_n, kw_n] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding();
        let xs = x.data();
        let mut out = vec![T::zero(); co_n * to * ho * wo];
        for co in 0..co_n {
            let plane = &mut out[co * to * ho * wo..(co + 1) * to * ho * wo];
            plane.iter_mut().for_each(|v| *v = self.bias[co]);
            for ci in 0..ci_n {
                for kt in 0..kt_n {
                    for kh in 0..kh_n {
                        for kw in 0..kw_n {
                            let wv = self.weight
                                [(((co * ci_n + ci) * kt_n + kt) * kh_n + kh) * kw_n + kw];
                            let (lo, hi_w) = self.col_range(kw, wi, wo);
                            for ot in 0..to {
                                let Some(it) = Self::src(ot, kt, st, pt, ti) else {
                                    continue;
                                };
                                for oh in 0..ho {
                                    let Some(ih) = Self::src(oh, kh, sh, ph, hi) else {
                                        continue;
                                    };
                                    let orow =
                                        &mut plane[(ot * ho + oh) * wo..(ot * ho + oh + 1) * wo];
                                    let irow = &xs[((ci * ti + it) * hi + ih) * wi
                                        ..((ci * ti + it) * hi + ih + 1) * wi];
                                    if sw == 1 {
                                        let off = kw as isize - pw as isize;
                                        let src = &irow[(lo as isize + off) as usize
                                            ..(hi_w as isize + off) as usize];
                                        for (o, &v) in orow[lo..hi_w].iter_mut().zip(src) {
                                            *o += wv * v;
                                        }
                                    } else {
                                        for ow in lo..hi_w {
                                            orow[ow] += wv * irow[ow * sw + kw - pw];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts(dout.to_vec(), out))
    }

    #[allow(clippy::needless_range_loop)]
    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let din = dims4(&self.name, x)?;
        let dout = self.output_dims(din)?;
        if grad_out.shape() != dout {
            return Err(Error::shape(&self.name, &dout, grad_out.shape()));
        }
        let [ci_n, ti, hi, wi] = din;
        let [co_n, to, ho, wo] = dout;
        let [kt_n, kh_n, kw_n] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding();
        let xs = x.data();
        let gs = grad_out.data();
        let mut gin = vec![T::zero(); x.len()];
        let mut gw = vec![T::zero(); self.weight.len()];
        let mut gb = vec![T::zero(); co_n];
        for co in 0..co_n {
            let gplane = &gs[co * to * ho * wo..(co + 1) * to * ho * wo];
            gb[co] = gplane.iter().fold(T::zero(), |a, &v| a + v);
            for ci in 0..ci_n {
                for kt in 0..kt_n {
                    for kh in 0..kh_n {
                        for kw in 0..kw_n {
                            let widx = (((co * ci_n + ci) * kt_n + kt) * kh_n + kh) * kw_n + kw;
                            let wv = self.weight[widx];
                            let (lo, hi_w) = self.col_range(kw, wi, wo);
                            let mut acc = T::zero();
                            for ot in 0..to {
                                let Some(it) = Self::src(ot, kt, st, pt, ti) else {
                                    continue;
                                };
                                for oh in 0..ho {
                                    let Some(ih) = Self::src(oh, kh, sh, ph, hi) else {
                                        continue;
                                    };
                                    let grow =
                                        &gplane[(ot * ho + oh) * wo..(ot * ho + oh + 1) * wo];
                                    let base = ((ci * ti + it) * hi + ih) * wi;
                                    if sw == 1 {
                                        let a = (lo + kw) - pw;
                                        let b = (hi_w + kw) - pw;
                                        let irow = &xs[base + a..base + b];
                                        let girow = &mut gin[base + a..base + b];
                                        for ((gi, &xi), &g) in
                                            girow.iter_mut().zip(irow).zip(&grow[lo..hi_w])
                                        {
                                            *gi += wv * g;
                                            acc += g * xi;
                                        }
                                    } else {
                                        for ow in lo..hi_w {
                                            let i = base + ow * sw + kw - pw;
                                            gin[i] += wv * grow[ow];
                                            acc += grow[ow] * xs[i];
                                        }
                                    }
                                }
                            }
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
        Ok(ConvGrads {
            input: Tensor::from_parts(din.to_vec(), gin),
            weight: gw,
            bias: gb,
        })
    }
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data().iter().map(|&v| v.max(T::zero())).collect(),
    )
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Real>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let g = out
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(out.shape().to_vec(), g)
}

/// Non-overlapping average pooling; trailing remainders are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvgPool3d {
    pub kernel: [usize; 3],
}

impl AvgPool3d {
    pub fn output_dims(&self, d: [usize; 4]) -> Result<[usize; 4]> {
        let out = [
            d[0],
            d[1] / self.kernel[0],
            d[2] / self.kernel[1],
            d[3] / self.kernel[2],
        ];
        if out.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "pool {:?} collapses input {d:?}",
                self.kernel
            )));
        }
        Ok(out)
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let d = dims4("avg_pool", x)?;
        let o = self.output_dims(d)?;
        let [kt, kh, kw] = self.kernel;
        let scale = T::one() / T::of((kt * kh * kw) as f64);
        let xs = x.data();
        let mut out = vec![T::zero(); o.iter().product()];
        for c in 0..o[0] {
            for t in 0..o[1] * kt {
                for h in 0..o[2] * kh {
                    let irow = &xs[((c * d[1] + t) * d[2] + h) * d[3]..][..o[3] * kw];
                    let orow = &mut out[((c * o[1] + t / kt) * o[2] + h / kh) * o[3]..][..o[3]];
                    for (ow, chunk) in irow.chunks_exact(kw).enumerate() {
                        orow[ow] += chunk.iter().fold(T::zero(), |a, &v| a + v) * scale;
                    }
                }
            }
        }
        Ok(Tensor::from_parts(o.to_vec(), out))
    }

    pub fn backward<T: Real>(
        &self,
        input_dims: [usize; 4],
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let o = self.output_dims(input_dims)?;
        if grad_out.shape() != o {
            return Err(Error::shape("avg_pool", &o, grad_out.shape()));
        }
        let d = input_dims;
        let [kt, kh, kw] = self.kernel;
        let scale = T::one() / T::of((kt * kh * kw) as f64);
        let gs = grad_out.data();
        let mut gin = vec![T::zero(); d.iter().product()];
        for c in 0..o[0] {
            for t in 0..o[1] * kt {
                for h in 0..o[2] * kh {
                    let grow = &gs[((c * o[1] + t / kt) * o[2] + h / kh) * o[3]..][..o[3]];
                    let irow = &mut gin[((c * d[1] + t) * d[2] + h) * d[3]..][..o[3] * kw];
                    for (chunk, &g) in irow.chunks_exact_mut(kw).zip(grow) {
                        chunk.iter_mut().for_each(|v| *v = g * scale);
                    }
                }
            }
        }
        Ok(Tensor::from_parts(d.to_vec(), gin))
    }
}

/// Mean over all non-channel axes: `[C, ...] -> [C]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Vec<T> {
    let c = x.shape()[0];
    let n = x.len() / c;
    let scale = T::one() / T::of(n as f64);
    x.data()
        .chunks_exact(n)
        .map(|ch| ch.iter().fold(T::zero(), |a, &v| a + v) * scale)
        .collect()
}

pub fn global_avg_pool_backward<T: Real>(shape: &[usize], grad: &[T]) -> Tensor<T> {
    let n: usize = shape[1..].iter().product();
    let scale = T::one() / T::of(n as f64);
    let data = grad
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * scale, n))
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Inverted-dropout keep mask: each entry is `0` or `1 / (1 - rate)`.
pub fn dropout_mask<T: Real>(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Fully connected layer, `weight` is `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub struct LinearGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Linear {
            in_features,
            out_features,
            weight: vec![T::zero(); in_features * out_features],
            bias: vec![T::zero(); out_features],
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_features {
            return Err(Error::shape("head", &[self.in_features], &[x.len()]));
        }
        Ok(self
            .weight
            .chunks_exact(self.in_features)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |a, (&w, &v)| a + w * v))
            .collect())
    }

    pub fn backward(&self, x: &[T], grad_out: &[T]) -> LinearGrads<T> {
        let mut input = vec![T::zero(); self.in_features];
        let mut weight = vec![T::zero(); self.weight.len()];
        for (o, &g) in grad_out.iter().enumerate() {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            let grow = &mut weight[o * self.in_features..(o + 1) * self.in_features];
            for i in 0..self.in_features {
                input[i] += row[i] * g;
                grow[i] = x[i] * g;
            }
        }
        LinearGrads {
            input,
            weight,
            bias: grad_out.to_vec(),
        }
    }
}
