use crate::error::{shape_err, Result};

use super::Real;

/// Dense `(batch, channel, time)` tensor, row-major with time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    data: Vec<T>,
    shape: [usize; 3],
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self { data: vec![T::zero(); batch * channels * len], shape: [batch, channels, len] }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<T>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(shape_err!(
                "tensor data has {} elements, shape {:?} needs {}",
                data.len(),
                shape,
                expected
            ));
        }
        Ok(Self { data, shape })
    }

    /// Stacks equal-length univariate series into a `(n, 1, len)` batch.
    pub fn from_series<S: AsRef<[f64]>>(series: &[S]) -> Result<Self> {
        let len = series.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(series.len() * len);
        for s in series {
            let s = s.as_ref();
            if s.len() != len {
                return Err(shape_err!("series lengths differ: {} vs {}", s.len(), len));
            }
            data.extend(s.iter().map(|&v| T::from_f64_lossy(v)));
        }
        Self::from_vec([series.len(), 1, len], data)
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }
    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn len_t(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize) -> T {
        self.data[(b * self.shape[1] + c) * self.shape[2] + t]
    }

    /// Time series of one `(batch, channel)` pair.
    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let l = self.shape[2];
        let start = (b * self.shape[1] + c) * l;
        &self.data[start..start + l]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let l = self.shape[2];
        let start = (b * self.shape[1] + c) * l;
        &mut self.data[start..start + l]
    }

    /// All channels of one batch item, `channels * len` elements.
    #[inline]
    pub fn item(&self, b: usize) -> &[T] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    #[inline]
    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.shape[1] * self.shape[2];
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Elementwise sum with a tensor of identical shape.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_err!("cannot add {:?} and {:?}", self.shape, other.shape));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Self { data, shape: self.shape })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor3<U> {
        Tensor3 {
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
            shape: self.shape,
        }
    }
}

/// Dense row-major matrix, used for per-(batch, channel) values such as
/// pooled features, logits and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { data: vec![T::zero(); rows * cols], rows, cols }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!("matrix data has {} elements, {}x{} needs {}", data.len(), rows, cols, rows * cols));
        }
        Ok(Self { data, rows, cols })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_data_length() {
        assert!(Tensor3::<f32>::from_vec([2, 3, 4], vec![0.0; 23]).is_err());
        assert!(Tensor3::<f32>::from_vec([2, 3, 4], vec![0.0; 24]).is_ok());
    }

    #[test]
    fn indexing_is_batch_channel_time() {
        let t = Tensor3::<f64>::from_vec([2, 2, 3], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.at(1, 0, 2), 8.0);
        assert_eq!(t.row(0, 1), &[3.0, 4.0, 5.0]);
        assert_eq!(t.item(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
