use crate::error::{shape_err, Error, Result};

use super::{Matrix, Real, Tensor3};

/// Mean over the time axis: `(B, C, L) -> (B, C)`.
pub fn global_average_pool<T: Real>(input: &Tensor3<T>) -> Result<Matrix<T>> {
    let [b, c, l] = input.shape();
    if l == 0 {
        return Err(Error::EmptyInput("global average pooling over zero timestamps".into()));
    }
    let inv = 1.0 / l as f64;
    let mut out = Matrix::zeros(b, c);
    for bi in 0..b {
        for ci in 0..c {
            let s: f64 = input.row(bi, ci).iter().map(|v| v.as_f64()).sum();
            out.row_mut(bi)[ci] = T::from_f64_lossy(s * inv);
        }
    }
    Ok(out)
}

/// Spreads each pooled gradient uniformly over the `len` timestamps.
pub fn global_average_pool_backward<T: Real>(grad: &Matrix<T>, len: usize) -> Result<Tensor3<T>> {
    if len == 0 {
        return Err(Error::EmptyInput("global average pooling over zero timestamps".into()));
    }
    let scale = T::from_f64_lossy(1.0 / len as f64);
    let mut dx = Tensor3::zeros(grad.rows(), grad.cols(), len);
    for b in 0..grad.rows() {
        for c in 0..grad.cols() {
            dx.row_mut(b, c).fill(grad.get(b, c) * scale);
        }
    }
    Ok(dx)
}

#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    shape: Option<[usize; 3]>,
}

impl GlobalAvgPool {
    pub fn forward<T: Real>(&mut self, x: &Tensor3<T>) -> Result<Matrix<T>> {
        let y = global_average_pool(x)?;
        self.shape = Some(x.shape());
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, grad: &Matrix<T>) -> Result<Tensor3<T>> {
        let [b, c, l] =
            self.shape.take().ok_or_else(|| Error::State("pool backward called without a cached forward pass".into()))?;
        if grad.rows() != b || grad.cols() != c {
            return Err(shape_err!("pool grad {}x{}, expected {b}x{c}", grad.rows(), grad.cols()));
        }
        global_average_pool_backward(grad, l)
    }
}
