//! Central-difference gradient oracle, independent of the library's backward passes.

use pitchflow::model::layers::{dropout_mask, global_avg_pool, relu, AvgPool3d, Conv3d, Linear};
use pitchflow::model::loss::{bce_with_logit, cross_entropy};
use pitchflow::model::{BlockSpec, Head, Mode, Real, Tensor, Tiny3d, Tiny3dConfig};
use pitchflow::seed;
use rand::Rng;

pub fn rel_error<T: Real>(a: &[T], b: &[T]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x.f64() - y.f64()));
    let scale = norm(&mut a.iter().map(|x| x.f64())).max(norm(&mut b.iter().map(|x| x.f64())));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Step `1e-3 * max(1, |theta|)`.
pub fn numeric_grad<T: Real>(theta: &[T], f: impl FnMut(&[T]) -> f64) -> Vec<T> {
    numeric_grad_smooth(theta, f, |_| true)
}

/// As [`numeric_grad`], but the step is halved (up to 8 times) while either
/// stencil point leaves the smooth piece containing `theta`, as judged by
/// `same_piece`.
pub fn numeric_grad_smooth<T: Real>(
    theta: &[T],
    mut f: impl FnMut(&[T]) -> f64,
    mut same_piece: impl FnMut(&[T]) -> bool,
) -> Vec<T> {
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let mut h = 1e-3 * theta[i].f64().abs().max(1.0);
            let orig = work[i];
            for _ in 0..8 {
                work[i] = T::of(orig.f64() + h);
                let up_ok = same_piece(&work);
                work[i] = T::of(orig.f64() - h);
                let down_ok = same_piece(&work);
                work[i] = orig;
                if up_ok && down_ok {
                    break;
                }
                h /= 2.0;
            }
            work[i] = T::of(orig.f64() + h);
            let up = f(&work);
            work[i] = T::of(orig.f64() - h);
            let down = f(&work);
            work[i] = orig;
            // Divide by the step actually taken in T.
            let span = T::of(orig.f64() + h).f64() - T::of(orig.f64() - h).f64();
            T::of((up - down) / span)
        })
        .collect()
}

pub fn random_vec<T: Real>(n: usize, s: u64, tag: &str) -> Vec<T> {
    let mut rng = seed::rng(s, &[seed::tag(tag)]);
    (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.f64() * y.f64()).sum()
}

/// Worst relative error over every layer's input and parameter gradients.
pub fn layer_errors<T: Real>(s: u64) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let shape = [2usize, 3, 5, 6];
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape.to_vec(), random_vec::<T>(n, s, "x")).unwrap();

    for (name, stride) in [("conv3d", [1, 1, 1]), ("conv3d_strided", [1, 2, 2])] {
        let mut conv = Conv3d::<T>::zeros(name, 2, 3, [3, 3, 3], stride);
        conv.weight = random_vec(conv.weight.len(), s, "w");
        conv.bias = random_vec(3, s, "b");
        let y = conv.forward(&x).unwrap();
        let r = random_vec::<T>(y.len(), s, "r");
        let g = conv
            .backward(&x, &Tensor::new(y.shape().to_vec(), r.clone()).unwrap())
            .unwrap();
        let gx = numeric_grad(x.data(), |v| {
            dot(
                conv.forward(&Tensor::new(shape.to_vec(), v.to_vec()).unwrap())
                    .unwrap()
                    .data(),
                &r,
            )
        });
        let gw = numeric_grad(&conv.weight.clone(), |w| {
            let mut c = conv.clone();
            c.weight = w.to_vec();
            dot(c.forward(&x).unwrap().data(), &r)
        });
        let gb = numeric_grad(&conv.bias.clone(), |b| {
            let mut c = conv.clone();
            c.bias = b.to_vec();
            dot(c.forward(&x).unwrap().data(), &r)
        });
        let e = rel_error(g.input.data(), &gx)
            .max(rel_error(&g.weight, &gw))
            .max(rel_error(&g.bias, &gb));
        out.push((name, e));
    }

    // Keep inputs away from the kink so the finite difference is exact.
    let xr: Vec<T> = x
        .data()
        .iter()
        .map(|&v| if v.f64().abs() < 0.05 { T::of(0.3) } else { v })
        .collect();
    let xr = Tensor::new(shape.to_vec(), xr).unwrap();
    let r = random_vec::<T>(n, s, "r");
    let ya = relu(&xr);
    let ga = pitchflow::model::layers::relu_backward(
        &ya,
        &Tensor::new(shape.to_vec(), r.clone()).unwrap(),
    );
    let gn = numeric_grad(xr.data(), |v| {
        dot(
            relu(&Tensor::new(shape.to_vec(), v.to_vec()).unwrap()).data(),
            &r,
        )
    });
    out.push(("relu", rel_error(ga.data(), &gn)));

    let pool = AvgPool3d { kernel: [1, 2, 2] };
    let yp = pool.forward(&x).unwrap();
    let rp = random_vec::<T>(yp.len(), s, "rp");
    let ga = pool
        .backward(
            shape,
            &Tensor::new(yp.shape().to_vec(), rp.clone()).unwrap(),
        )
        .unwrap();
    let gn = numeric_grad(x.data(), |v| {
        dot(
            pool.forward(&Tensor::new(shape.to_vec(), v.to_vec()).unwrap())
                .unwrap()
                .data(),
            &rp,
        )
    });
    out.push(("avg_pool", rel_error(ga.data(), &gn)));

    let rg = random_vec::<T>(2, s, "rg");
    let ga = pitchflow::model::layers::global_avg_pool_backward(&shape, &rg);
    let gn = numeric_grad(x.data(), |v| {
        dot(
            &global_avg_pool(&Tensor::new(shape.to_vec(), v.to_vec()).unwrap()),
            &rg,
        )
    });
    out.push(("global_avg_pool", rel_error(ga.data(), &gn)));

    let mut lin = Linear::<T>::zeros(5, 3);
    lin.weight = random_vec(15, s, "lw");
    lin.bias = random_vec(3, s, "lb");
    let xi = random_vec::<T>(5, s, "li");
    let rl = random_vec::<T>(3, s, "rl");
    let g = lin.backward(&xi, &rl);
    let gx = numeric_grad(&xi, |v| dot(&lin.forward(v).unwrap(), &rl));
    let gw = numeric_grad(&lin.weight.clone(), |w| {
        let mut l = lin.clone();
        l.weight = w.to_vec();
        dot(&l.forward(&xi).unwrap(), &rl)
    });
    out.push((
        "linear",
        rel_error(&g.input, &gx)
            .max(rel_error(&g.weight, &gw))
            .max(rel_error(&g.bias, &rl)),
    ));

    // Dropout is a fixed elementwise scale once the mask is drawn.
    let mask: Vec<T> = dropout_mask(8, 0.5, &mut seed::rng(s, &[7]));
    let xd = random_vec::<T>(8, s, "xd");
    let rd = random_vec::<T>(8, s, "rd");
    let ga: Vec<T> = rd.iter().zip(&mask).map(|(&a, &b)| a * b).collect();
    let gn = numeric_grad(&xd, |v| {
        let y: Vec<T> = v.iter().zip(&mask).map(|(&a, &b)| a * b).collect();
        dot(&y, &rd)
    });
    out.push(("dropout", rel_error(&ga, &gn)));
    out
}

pub fn tiny_config(head: Head, s: u64) -> Tiny3dConfig {
    Tiny3dConfig {
        input: [2, 3, 6, 8],
        input_clip: 20.0,
        input_scale: 1.0,
        blocks: vec![
            BlockSpec {
                out_channels: 3,
                kernel: [3, 3, 3],
                stride: [1, 1, 1],
                pool: [1, 2, 2],
            },
            BlockSpec {
                out_channels: 4,
                kernel: [3, 3, 3],
                stride: [1, 1, 1],
                pool: [1, 1, 1],
            },
        ],
        dropout: 0.5,
        head,
        seed: s,
    }
}

/// End-to-end relative error for a randomly parameterised tiny net, in train
/// mode with a fixed dropout mask.
pub fn end_to_end_error<T: Real>(head: Head, s: u64) -> f64 {
    let cfg = tiny_config(head, s);
    let mut net = Tiny3d::<T>::new(&cfg).unwrap();
    let theta: Vec<T> = random_vec::<T>(net.num_params(), s, "theta")
        .iter()
        .map(|&v| v * T::of(0.5))
        .collect();
    net.set_flat_params(&theta).unwrap();
    let n: usize = cfg.input.iter().product();
    let x = Tensor::new(cfg.input.to_vec(), random_vec::<T>(n, s, "input")).unwrap();
    let target = (s % 2) as usize;
    let loss = |net: &Tiny3d<T>| -> (f64, Vec<T>, pitchflow::model::Cache<T>) {
        let mut rng = seed::rng(s, &[seed::tag("mask")]);
        let (z, cache) = net.forward(&x, Mode::Train(&mut rng)).unwrap();
        let (l, g) = match head {
            Head::SigmoidBinary => {
                let (l, g) = bce_with_logit(z[0].f64(), target as f64).unwrap();
                (l, vec![T::of(g)])
            }
            Head::Softmax { .. } => {
                let zf: Vec<f64> = z.iter().map(|v| v.f64()).collect();
                let (l, g) = cross_entropy(&zf, target).unwrap();
                (l, g.into_iter().map(T::of).collect())
            }
        };
        (l, g, cache)
    };
    let (_, g, cache) = loss(&net);
    let analytic = net.backward(&cache, &g).unwrap().flat();
    let pattern = cache.active_units();
    let probe = std::cell::RefCell::new(net.clone());
    let numeric = numeric_grad_smooth(
        &theta,
        |p| {
            probe.borrow_mut().set_flat_params(p).unwrap();
            loss(&probe.borrow()).0
        },
        |p| {
            probe.borrow_mut().set_flat_params(p).unwrap();
            loss(&probe.borrow()).2.active_units() == pattern
        },
    );
    rel_error(&analytic, &numeric)
}
