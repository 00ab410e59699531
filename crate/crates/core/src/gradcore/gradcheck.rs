//! Central finite-difference checks of every layer's backward pass.
//!
//! Analytic gradients are computed in the precision under test; the
//! finite-difference oracle always runs in `f64` on the same (rounded)
//! inputs, so a 32-bit backward pass is judged against an exact reference
//! rather than against 32-bit cancellation noise.

use rand::Rng;

use crate::error::Result;
use crate::resnet::{ResNet, ResNetSpec};

use super::conv::conv1d_forward_with;
use super::{
    global_average_pool, linear_softmax_xent, relu, seeded_rng, BatchNorm1d, Conv1d, ConvAlgo, GlobalAvgPool,
    LayerParams, LinearSoftmax, Matrix, Mode, Real, Relu, SeededRng, Tensor3,
};

/// Step used by [`central_difference`].
pub const FD_STEP: f64 = 1e-6;

/// Layers covered by [`check_op`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradOp {
    ConvDirect,
    ConvFft,
    BatchNormTrain,
    BatchNormEval,
    Relu,
    GlobalAvgPool,
    LinearSoftmaxXent,
    /// The full residual classifier, on sampled parameter coordinates.
    ResNet,
}

impl GradOp {
    pub const ALL: [GradOp; 8] = [
        GradOp::ConvDirect,
        GradOp::ConvFft,
        GradOp::BatchNormTrain,
        GradOp::BatchNormEval,
        GradOp::Relu,
        GradOp::GlobalAvgPool,
        GradOp::LinearSoftmaxXent,
        GradOp::ResNet,
    ];
}

/// `max |a - n| / max(max |a|, max |n|)`, 0 when both are identically zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate in `coords`.
pub fn central_difference(x: &[f64], coords: &[usize], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Values representable in `T`, returned as `f64`.
fn draw<T: Real>(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| T::from_f64_lossy(rng.random_range(lo..hi)).as_f64()).collect()
}

/// Like [`draw`] with `|v| >= gap`, keeping ReLU inputs off the kink.
fn draw_off_zero<T: Real>(rng: &mut SeededRng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            let v = if rng.random_bool(0.5) { m } else { -m };
            T::from_f64_lossy(v).as_f64()
        })
        .collect()
}

fn cast<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64_lossy(x)).collect()
}

fn back<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn tensor<T: Real>(shape: [usize; 3], v: &[f64]) -> Result<Tensor3<T>> {
    Tensor3::from_vec(shape, cast(v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks one op on one random case; returns the relative error over every
/// gradient the op produces.
pub fn check_op<T: Real>(op: GradOp, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    match op {
        GradOp::ConvDirect => check_conv::<T>(&mut rng, ConvAlgo::Direct),
        GradOp::ConvFft => check_conv::<T>(&mut rng, ConvAlgo::Fft),
        GradOp::BatchNormTrain => check_batchnorm::<T>(&mut rng, Mode::Train),
        GradOp::BatchNormEval => check_batchnorm::<T>(&mut rng, Mode::Eval),
        GradOp::Relu => check_relu::<T>(&mut rng),
        GradOp::GlobalAvgPool => check_pool::<T>(&mut rng),
        GradOp::LinearSoftmaxXent => check_head::<T>(&mut rng),
        GradOp::ResNet => check_resnet::<T>(&mut rng),
    }
}

fn check_conv<T: Real>(rng: &mut SeededRng, algo: ConvAlgo) -> Result<f64> {
    let (b, ci, co, k) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=5));
    let l = rng.random_range(k..=12);
    let x = draw::<T>(rng, b * ci * l, -1.0, 1.0);
    let w = draw::<T>(rng, co * ci * k, -1.0, 1.0);
    let bias = draw::<T>(rng, co, -1.0, 1.0);
    let r = draw::<T>(rng, b * co * l, -1.0, 1.0);

    let mut conv = Conv1d::<T>::new(ci, co, k)?.with_algo(algo);
    conv.params.weight = cast(&w);
    conv.params.bias = cast(&bias);
    conv.forward(&tensor::<T>([b, ci, l], &x)?)?;
    let dx = conv.backward(&tensor::<T>([b, co, l], &r)?)?;

    let layer = |w: &[f64], bias: &[f64]| {
        let mut p = LayerParams::<f64>::zeros(super::LayerKind::Conv1d, vec![co, ci, k], co);
        p.weight = w.to_vec();
        p.bias = bias.to_vec();
        p
    };
    let loss = |x: &[f64], w: &[f64], bias: &[f64]| -> f64 {
        let y = conv1d_forward_with(&Tensor3::from_vec([b, ci, l], x.to_vec()).unwrap(), &layer(w, bias), k, algo).unwrap();
        dot(y.data(), &r)
    };
    let mut analytic = back(dx.data());
    analytic.extend(back(&conv.params.weight_grad));
    analytic.extend(back(&conv.params.bias_grad));
    let mut numeric = central_difference(&x, &all(x.len()), FD_STEP, |x| loss(x, &w, &bias));
    numeric.extend(central_difference(&w, &all(w.len()), FD_STEP, |w| loss(&x, w, &bias)));
    numeric.extend(central_difference(&bias, &all(bias.len()), FD_STEP, |bias| loss(&x, &w, bias)));
    Ok(relative_error(&analytic, &numeric))
}

fn check_batchnorm<T: Real>(rng: &mut SeededRng, mode: Mode) -> Result<f64> {
    let (b, c, l) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(2..=10));
    let x = draw::<T>(rng, b * c * l, -2.0, 2.0);
    let gamma = draw::<T>(rng, c, 0.5, 1.5);
    let beta = draw::<T>(rng, c, -0.5, 0.5);
    let mean = draw::<T>(rng, c, -0.5, 0.5);
    let var = draw::<T>(rng, c, 0.5, 2.0);
    let r = draw::<T>(rng, b * c * l, -1.0, 1.0);

    let mut bn = BatchNorm1d::<T>::new(c);
    bn.params.weight = cast(&gamma);
    bn.params.bias = cast(&beta);
    bn.set_running_stats(cast(&mean), cast(&var))?;
    bn.forward(&tensor::<T>([b, c, l], &x)?, mode)?;
    let dx = bn.backward(&tensor::<T>([b, c, l], &r)?)?;

    let loss = |x: &[f64], g: &[f64], be: &[f64]| -> f64 {
        let mut bn = BatchNorm1d::<f64>::new(c);
        bn.params.weight = g.to_vec();
        bn.params.bias = be.to_vec();
        bn.set_running_stats(mean.clone(), var.clone()).unwrap();
        let y = bn.forward(&Tensor3::from_vec([b, c, l], x.to_vec()).unwrap(), mode).unwrap();
        dot(y.data(), &r)
    };
    let mut analytic = back(dx.data());
    analytic.extend(back(&bn.params.weight_grad));
    analytic.extend(back(&bn.params.bias_grad));
    let mut numeric = central_difference(&x, &all(x.len()), FD_STEP, |x| loss(x, &gamma, &beta));
    numeric.extend(central_difference(&gamma, &all(c), FD_STEP, |g| loss(&x, g, &beta)));
    numeric.extend(central_difference(&beta, &all(c), FD_STEP, |be| loss(&x, &gamma, be)));
    Ok(relative_error(&analytic, &numeric))
}

fn check_relu<T: Real>(rng: &mut SeededRng) -> Result<f64> {
    let (b, c, l) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=10));
    let x = draw_off_zero::<T>(rng, b * c * l, 1e-2);
    let r = draw::<T>(rng, b * c * l, -1.0, 1.0);
    let mut layer = Relu::new();
    layer.forward(&tensor::<T>([b, c, l], &x)?);
    let dx = layer.backward(&tensor::<T>([b, c, l], &r)?)?;
    let numeric = central_difference(&x, &all(x.len()), FD_STEP, |x| {
        dot(relu(&Tensor3::from_vec([b, c, l], x.to_vec()).unwrap()).data(), &r)
    });
    Ok(relative_error(&back(dx.data()), &numeric))
}

fn check_pool<T: Real>(rng: &mut SeededRng) -> Result<f64> {
    let (b, c, l) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=10));
    let x = draw::<T>(rng, b * c * l, -1.0, 1.0);
    let r = draw::<T>(rng, b * c, -1.0, 1.0);
    let mut pool = GlobalAvgPool::default();
    pool.forward(&tensor::<T>([b, c, l], &x)?)?;
    let dx = pool.backward(&Matrix::from_vec(b, c, cast::<T>(&r))?)?;
    let numeric = central_difference(&x, &all(x.len()), FD_STEP, |x| {
        dot(global_average_pool(&Tensor3::from_vec([b, c, l], x.to_vec()).unwrap()).unwrap().data(), &r)
    });
    Ok(relative_error(&back(dx.data()), &numeric))
}

fn check_head<T: Real>(rng: &mut SeededRng) -> Result<f64> {
    let (rows, width, classes) = (rng.random_range(1..=4), rng.random_range(1..=6), rng.random_range(2..=3));
    let feats = draw::<T>(rng, rows * width, -2.0, 2.0);
    let w = draw::<T>(rng, classes * width, -1.0, 1.0);
    let bias = draw::<T>(rng, classes, -1.0, 1.0);
    let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();

    let mut head = LinearSoftmax::<T>::new(width, classes);
    head.params.weight = cast(&w);
    head.params.bias = cast(&bias);
    head.forward(&Matrix::from_vec(rows, width, cast::<T>(&feats))?, &labels)?;
    let dfeat = head.backward()?;

    let loss = |f: &[f64], w: &[f64], bias: &[f64]| -> f64 {
        let mut p = LayerParams::<f64>::zeros(super::LayerKind::Linear, vec![classes, width], classes);
        p.weight = w.to_vec();
        p.bias = bias.to_vec();
        let m = Matrix::from_vec(rows, width, f.to_vec()).unwrap();
        linear_softmax_xent(&m, &p, Some(&labels)).unwrap().loss.unwrap()
    };
    let mut analytic = back(dfeat.data());
    analytic.extend(back(&head.params.weight_grad));
    analytic.extend(back(&head.params.bias_grad));
    let mut numeric = central_difference(&feats, &all(feats.len()), FD_STEP, |f| loss(f, &w, &bias));
    numeric.extend(central_difference(&w, &all(w.len()), FD_STEP, |w| loss(&feats, w, &bias)));
    numeric.extend(central_difference(&bias, &all(bias.len()), FD_STEP, |bias| loss(&feats, &w, bias)));
    Ok(relative_error(&analytic, &numeric))
}

/// Mean cross-entropy of train-mode logits.
fn train_loss(model: &mut ResNet<f64>, x: &Tensor3<f64>, labels: &[usize]) -> f64 {
    let out = model.forward(x, Mode::Train).unwrap();
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = out.logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Whole-network check: residual additions, shortcut projections and the
/// block wiring are exercised here. One weight and one bias coordinate are
/// sampled per parameter block. A coordinate whose difference quotient
/// changes between `h` and `h/2` sits next to a ReLU kink and is redrawn.
fn check_resnet<T: Real>(rng: &mut SeededRng) -> Result<f64> {
    let k = rng.random_range(1..=5);
    let (b, l) = (rng.random_range(3..=4), rng.random_range(8..=14));
    let x = draw::<T>(rng, b * l, -2.0, 2.0);
    let mut labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let seed = rng.random();
    let mut model = ResNet::<T>::build(ResNetSpec::new(k), seed)?;
    model.zero_grad();
    model.forward_backward(&tensor::<T>([b, 1, l], &x)?, &labels)?;

    let mut reference = ResNet::<f64>::build(ResNetSpec::new(k), seed)?;
    for (dst, src) in reference.params_mut().into_iter().zip(model.params_mut()) {
        dst.weight = back(&src.weight);
        dst.bias = back(&src.bias);
    }
    let x64 = Tensor3::from_vec([b, 1, l], x)?;
    let grads: Vec<(Vec<f64>, Vec<f64>)> =
        model.params_mut().into_iter().map(|p| (back(&p.weight_grad), back(&p.bias_grad))).collect();
    let scale = grads.iter().flat_map(|(w, b)| w.iter().chain(b)).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (block, (gw, gb)) in grads.iter().enumerate() {
        for is_bias in [false, true] {
            let len = if is_bias { gb.len() } else { gw.len() };
            for _ in 0..KINK_RETRIES {
                let i = rng.random_range(0..len);
                let mut quotient = |h: f64| {
                    let mut at = |delta: f64| {
                        let v = {
                            let mut ps = reference.params_mut();
                            let slot = if is_bias { &mut ps[block].bias[i] } else { &mut ps[block].weight[i] };
                            let old = *slot;
                            *slot = old + delta;
                            old
                        };
                        let loss = train_loss(&mut reference, &x64, &labels);
                        let mut ps = reference.params_mut();
                        *(if is_bias { &mut ps[block].bias[i] } else { &mut ps[block].weight[i] }) = v;
                        loss
                    };
                    (at(h) - at(-h)) / (2.0 * h)
                };
                let coarse = quotient(FD_STEP);
                let fine = quotient(FD_STEP / 2.0);
                if (coarse - fine).abs() <= KINK_TOLERANCE * scale {
                    analytic.push(if is_bias { gb[i] } else { gw[i] });
                    numeric.push(coarse);
                    break;
                }
            }
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

const KINK_RETRIES: usize = 8;
const KINK_TOLERANCE: f64 = 1e-7;

/// Worst error of one op over several random cases.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub op: GradOp,
    pub cases: usize,
    pub max_rel_error: f64,
}

/// Runs `cases` random cases of every op in precision `T`.
pub fn check_all<T: Real>(cases: usize, seed: u64) -> Result<Vec<GradCheckSummary>> {
    GradOp::ALL
        .iter()
        .enumerate()
        .map(|(j, &op)| {
            let mut worst = 0.0f64;
            for c in 0..cases {
                worst = worst.max(check_op::<T>(op, super::derive_seed(seed, &[j as u64, c as u64]))?);
            }
            Ok(GradCheckSummary { op, cases, max_rel_error: worst })
        })
        .collect()
}
