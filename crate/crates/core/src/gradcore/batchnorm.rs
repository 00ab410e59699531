use crate::error::{shape_err, Error, Result};

use super::{LayerKind, LayerParams, Mode, Real, Tensor3};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
struct BnCache<T> {
    x_hat: Tensor3<T>,
    inv_std: Vec<f64>,
    mode: Mode,
}

/// Per-channel batch normalization over `(batch, time)`.
///
/// Running statistics start out absent for a bare layer, so evaluating before
/// any training step is a state error; [`BatchNorm1d::with_default_running_stats`]
/// seeds them with mean 0 and variance 1 instead.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T: Real> {
    pub params: LayerParams<T>,
    running_mean: Option<Vec<T>>,
    running_var: Option<Vec<T>>,
    momentum: f64,
    eps: f64,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self::with_hyper(channels, BN_MOMENTUM, BN_EPS)
    }

    pub fn with_hyper(channels: usize, momentum: f64, eps: f64) -> Self {
        let mut params = LayerParams::zeros(LayerKind::BatchNorm, vec![channels], channels);
        params.weight.fill(T::one());
        Self { params, running_mean: None, running_var: None, momentum, eps, cache: None }
    }

    pub fn with_default_running_stats(mut self) -> Self {
        let c = self.channels();
        self.running_mean = Some(vec![T::zero(); c]);
        self.running_var = Some(vec![T::one(); c]);
        self
    }

    pub fn channels(&self) -> usize {
        self.params.shape[0]
    }

    pub fn running_stats(&self) -> Option<(&[T], &[T])> {
        Some((self.running_mean.as_deref()?, self.running_var.as_deref()?))
    }

    pub fn set_running_stats(&mut self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        if mean.len() != self.channels() || var.len() != self.channels() {
            return Err(shape_err!("running stats must have {} channels", self.channels()));
        }
        self.running_mean = Some(mean);
        self.running_var = Some(var);
        Ok(())
    }

    fn check(&self, x: &Tensor3<T>) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(shape_err!("batchnorm expects {} channels, got {}", self.channels(), x.channels()));
        }
        if x.batch() * x.len_t() == 0 {
            return Err(Error::EmptyInput("batchnorm over an empty batch".into()));
        }
        Ok(())
    }

    /// Inference with running statistics; does not touch any state.
    pub fn eval(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let (scale, shift, _) = self.eval_affine(x)?;
        let mut y = x.clone();
        for b in 0..x.batch() {
            for ch in 0..self.channels() {
                let (a, c) = (scale[ch], shift[ch]);
                y.row_mut(b, ch).iter_mut().for_each(|v| *v = *v * a + c);
            }
        }
        Ok(y)
    }

    /// Per-channel `y = x·scale + shift` equivalent of eval mode.
    fn eval_affine(&self, x: &Tensor3<T>) -> Result<(Vec<T>, Vec<T>, Vec<f64>)> {
        self.check(x)?;
        let (Some(rm), Some(rv)) = (&self.running_mean, &self.running_var) else {
            return Err(Error::State("batchnorm evaluated before running statistics exist".into()));
        };
        let inv_std: Vec<f64> = rv.iter().map(|v| 1.0 / (v.as_f64() + self.eps).sqrt()).collect();
        let scale = (0..self.channels()).map(|c| T::from_f64_lossy(self.params.weight[c].as_f64() * inv_std[c])).collect();
        let shift = (0..self.channels())
            .map(|c| {
                let g = self.params.weight[c].as_f64();
                T::from_f64_lossy(self.params.bias[c].as_f64() - rm[c].as_f64() * g * inv_std[c])
            })
            .collect();
        Ok((scale, shift, inv_std))
    }

    fn normalize(&self, x: &Tensor3<T>, mean: &[f64], inv_std: &[f64]) -> (Tensor3<T>, Tensor3<T>) {
        let (bsz, c, l) = (x.batch(), x.channels(), x.len_t());
        let mut x_hat = Tensor3::zeros(bsz, c, l);
        let mut y = Tensor3::zeros(bsz, c, l);
        for b in 0..bsz {
            for ch in 0..c {
                let (g, be) = (self.params.weight[ch], self.params.bias[ch]);
                let (m, s) = (T::from_f64_lossy(mean[ch]), T::from_f64_lossy(inv_std[ch]));
                let hr = x_hat.row_mut(b, ch);
                for (h, &v) in hr.iter_mut().zip(x.row(b, ch)) {
                    *h = (v - m) * s;
                }
                for (o, &h) in y.row_mut(b, ch).iter_mut().zip(x_hat.row(b, ch)) {
                    *o = g * h + be;
                }
            }
        }
        (y, x_hat)
    }

    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        match mode {
            Mode::Eval => {
                self.eval_affine(x)?;
                let rm: Vec<f64> = self.running_mean.as_ref().expect("checked").iter().map(|v| v.as_f64()).collect();
                let rv = self.running_var.as_ref().expect("checked");
                let inv_std: Vec<f64> = rv.iter().map(|v| 1.0 / (v.as_f64() + self.eps).sqrt()).collect();
                let (y, x_hat) = self.normalize(x, &rm, &inv_std);
                self.cache = Some(BnCache { x_hat, inv_std, mode });
                Ok(y)
            }
            Mode::Train => self.forward_train(x),
        }
    }

    fn forward_train(&mut self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.check(x)?;
        let (bsz, c, l) = (x.batch(), x.channels(), x.len_t());
        let count = (bsz * l) as f64;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for ch in 0..c {
            let s: f64 = (0..bsz).map(|b| x.row(b, ch).iter().map(|v| v.as_f64()).sum::<f64>()).sum();
            mean[ch] = s / count;
            let m = mean[ch];
            let q: f64 =
                (0..bsz).map(|b| x.row(b, ch).iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>()).sum();
            var[ch] = q / count;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (y, x_hat) = self.normalize(x, &mean, &inv_std);
        let mom = self.momentum;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let rm = self.running_mean.get_or_insert_with(|| vec![T::zero(); c]);
        for (r, m) in rm.iter_mut().zip(&mean) {
            *r = T::from_f64_lossy((1.0 - mom) * r.as_f64() + mom * m);
        }
        let rv = self.running_var.get_or_insert_with(|| vec![T::one(); c]);
        for (r, v) in rv.iter_mut().zip(&var) {
            *r = T::from_f64_lossy((1.0 - mom) * r.as_f64() + mom * v * unbias);
        }
        self.cache = Some(BnCache { x_hat, inv_std, mode: Mode::Train });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("batchnorm backward called without a cached forward pass".into()))?;
        let x_hat = &cache.x_hat;
        if dy.shape() != x_hat.shape() {
            return Err(shape_err!("batchnorm grad shape {:?}, expected {:?}", dy.shape(), x_hat.shape()));
        }
        let (bsz, c, l) = (dy.batch(), dy.channels(), dy.len_t());
        let count = (bsz * l) as f64;
        let mut dx = Tensor3::zeros(bsz, c, l);
        for ch in 0..c {
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xh = 0.0f64;
            for b in 0..bsz {
                for (d, h) in dy.row(b, ch).iter().zip(x_hat.row(b, ch)) {
                    sum_dy += d.as_f64();
                    sum_dy_xh += d.as_f64() * h.as_f64();
                }
            }
            let p = &mut self.params;
            p.bias_grad[ch] = p.bias_grad[ch] + T::from_f64_lossy(sum_dy);
            p.weight_grad[ch] = p.weight_grad[ch] + T::from_f64_lossy(sum_dy_xh);
            let gs = p.weight[ch].as_f64() * cache.inv_std[ch];
            // Train: dx = g·s·(dy − mean(dy) − x̂·mean(dy·x̂)); Eval: dx = g·s·dy
            let (a, mdy, mdh) = match cache.mode {
                Mode::Train => (T::from_f64_lossy(gs), T::from_f64_lossy(sum_dy / count), T::from_f64_lossy(sum_dy_xh / count)),
                Mode::Eval => (T::from_f64_lossy(gs), T::zero(), T::zero()),
            };
            for b in 0..bsz {
                let dxr = dx.row_mut(b, ch);
                for ((o, &d), &h) in dxr.iter_mut().zip(dy.row(b, ch)).zip(x_hat.row(b, ch)) {
                    *o = a * (d - mdy - h * mdh);
                }
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Functional form: normalizes `input` with `layer` in the given mode.
pub fn batchnorm1d<T: Real>(input: &Tensor3<T>, layer: &mut BatchNorm1d<T>, mode: Mode) -> Result<Tensor3<T>> {
    layer.forward(input, mode)
}
