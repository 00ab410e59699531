use crate::error::{shape_err, Error, Result};

use super::{Real, Tensor3};

/// Elementwise `max(0, x)`.
pub fn relu<T: Real>(input: &Tensor3<T>) -> Tensor3<T> {
    let mut y = input.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    y
}

/// ReLU layer; the training path remembers which inputs were positive.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<(Vec<bool>, [usize; 3])>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor3<T>) -> Tensor3<T> {
        self.mask = Some((x.data().iter().map(|&v| v > T::zero()).collect(), x.shape()));
        relu(x)
    }

    /// Gradient flows only where the input was strictly positive.
    pub fn backward<T: Real>(&mut self, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let (mask, shape) =
            self.mask.take().ok_or_else(|| Error::State("relu backward called without a cached forward pass".into()))?;
        if dy.shape() != shape {
            return Err(shape_err!("relu grad shape {:?}, expected {:?}", dy.shape(), shape));
        }
        let mut dx = dy.clone();
        for (d, &m) in dx.data_mut().iter_mut().zip(&mask) {
            if !m {
                *d = T::zero();
            }
        }
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}
