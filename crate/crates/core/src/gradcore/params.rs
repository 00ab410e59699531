use super::Real;

/// Which layer a parameter block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d,
    BatchNorm,
    Linear,
}

/// Trainable parameters of one layer with their accumulated gradients.
///
/// * conv1d: `weight` is `(out, in, kernel)`, `bias` is `(out)`
/// * batchnorm: `weight` is gamma `(channels)`, `bias` is beta `(channels)`
/// * linear: `weight` is `(classes, in)`, `bias` is `(classes)`
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    pub weight: Vec<T>,
    pub weight_grad: Vec<T>,
    pub bias: Vec<T>,
    pub bias_grad: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn zeros(kind: LayerKind, shape: Vec<usize>, bias_len: usize) -> Self {
        let n = shape.iter().product();
        Self {
            kind,
            shape,
            weight: vec![T::zero(); n],
            weight_grad: vec![T::zero(); n],
            bias: vec![T::zero(); bias_len],
            bias_grad: vec![T::zero(); bias_len],
        }
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.iter_mut().for_each(|g| *g = T::zero());
        self.bias_grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Fan-in scaled uniform initialisation, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weight and bias.
    pub fn init_fan_in_uniform<R: rand::Rng>(&mut self, fan_in: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        for w in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *w = T::from_f64_lossy(rng.random_range(-bound..bound));
        }
    }
}
