use super::{LayerParams, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moment buffers are matched to parameter slots
/// by position, so the same parameter list must be passed on every step.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, moments: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut [&mut LayerParams<T>]) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let slots = params.iter_mut().flat_map(|p| {
            let LayerParams { weight, weight_grad, bias, bias_grad, .. } = &mut **p;
            [(weight, weight_grad), (bias, bias_grad)]
        });
        for (slot, (value, grad)) in slots.enumerate() {
            if self.moments.len() <= slot {
                self.moments.push((vec![T::zero(); value.len()], vec![T::zero(); value.len()]));
            }
            let (m, v) = &mut self.moments[slot];
            for i in 0..value.len() {
                let g = grad[i].as_f64();
                let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * g;
                let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * g * g;
                m[i] = T::from_f64_lossy(mi);
                v[i] = T::from_f64_lossy(vi);
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                value[i] = T::from_f64_lossy(value[i].as_f64() - update);
                grad[i] = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::LayerKind;

    fn scalar(v: f64, g: f64) -> LayerParams<f64> {
        let mut p = LayerParams::zeros(LayerKind::Linear, vec![1], 0);
        p.weight = vec![v];
        p.weight_grad = vec![g];
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.7, 0.0);
        let mut opt = Adam::new(AdamConfig::default());
        opt.step(&mut [&mut p]);
        assert_eq!(p.weight, vec![0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.5, -3.0, 1e-2] {
            let mut p = scalar(1.0, g);
            let mut opt = Adam::new(AdamConfig::default());
            opt.step(&mut [&mut p]);
            // m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps)
            let expected = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((p.weight[0] - expected).abs() < 1e-15);
            assert_eq!(p.weight_grad, vec![0.0]);
        }
    }

    #[test]
    fn identical_parameters_update_identically() {
        let mut a = scalar(0.3, 0.2);
        let mut b = scalar(0.3, 0.2);
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            a.weight_grad = vec![0.2];
            b.weight_grad = vec![0.2];
            opt.step(&mut [&mut a, &mut b]);
        }
        assert_eq!(a.weight, b.weight);
    }
}
