use crate::error::{shape_err, validation_err, Error, Result};

use super::{LayerKind, LayerParams, Matrix, Real};

/// Probabilities, logits and (when labels were given) the mean negative
/// log-likelihood of a batch.
#[derive(Debug, Clone)]
pub struct HeadOutput<T> {
    pub logits: Matrix<T>,
    pub probs: Matrix<T>,
    pub loss: Option<f64>,
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<T: Real>(logits: &Matrix<T>) -> Matrix<T> {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (o, e) in row.iter_mut().zip(exps) {
            *o = T::from_f64_lossy(e / z);
        }
    }
    p
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(shape_err!("{} labels for {} rows", labels.len(), rows));
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(validation_err!("label {bad} outside 0..{classes}"));
    }
    Ok(())
}

/// Mean negative log-likelihood computed through log-sum-exp.
fn nll<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let lse = max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln();
        total += lse - row[y].as_f64();
    }
    total / labels.len().max(1) as f64
}

/// Linear layer followed by softmax, with cross-entropy against `labels`.
pub fn linear_softmax_xent<T: Real>(
    features: &Matrix<T>,
    params: &LayerParams<T>,
    labels: Option<&[usize]>,
) -> Result<HeadOutput<T>> {
    let &[classes, width] = params.shape.as_slice() else {
        return Err(shape_err!("linear weight must be 2-d, got {:?}", params.shape));
    };
    if features.cols() != width {
        return Err(shape_err!("linear expects {width} features, got {}", features.cols()));
    }
    let mut logits = Matrix::zeros(features.rows(), classes);
    for r in 0..features.rows() {
        let f = features.row(r);
        for c in 0..classes {
            let w = &params.weight[c * width..(c + 1) * width];
            let s: f64 = w.iter().zip(f).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
            logits.row_mut(r)[c] = T::from_f64_lossy(s + params.bias[c].as_f64());
        }
    }
    let loss = match labels {
        Some(y) => {
            check_labels(y, features.rows(), classes)?;
            Some(nll(&logits, y))
        }
        None => None,
    };
    let probs = softmax_rows(&logits);
    Ok(HeadOutput { logits, probs, loss })
}

/// Classification head `features -> logits -> softmax`.
#[derive(Debug, Clone)]
pub struct LinearSoftmax<T: Real> {
    pub params: LayerParams<T>,
    cache: Option<(Matrix<T>, Matrix<T>, Vec<usize>)>,
}

impl<T: Real> LinearSoftmax<T> {
    pub fn new(in_features: usize, classes: usize) -> Self {
        Self { params: LayerParams::zeros(LayerKind::Linear, vec![classes, in_features], classes), cache: None }
    }

    pub fn in_features(&self) -> usize {
        self.params.shape[1]
    }
    pub fn classes(&self) -> usize {
        self.params.shape[0]
    }

    pub fn init<R: rand::Rng>(&mut self, rng: &mut R) {
        let fan_in = self.in_features();
        self.params.init_fan_in_uniform(fan_in, rng);
    }

    pub fn eval(&self, features: &Matrix<T>, labels: Option<&[usize]>) -> Result<HeadOutput<T>> {
        linear_softmax_xent(features, &self.params, labels)
    }

    pub fn forward(&mut self, features: &Matrix<T>, labels: &[usize]) -> Result<HeadOutput<T>> {
        let out = self.eval(features, Some(labels))?;
        self.cache = Some((features.clone(), out.probs.clone(), labels.to_vec()));
        Ok(out)
    }

    /// Gradient of the mean loss with respect to the features; parameter
    /// gradients are accumulated.
    pub fn backward(&mut self) -> Result<Matrix<T>> {
        let (feats, probs, labels) =
            self.cache.take().ok_or_else(|| Error::State("head backward called without a cached forward pass".into()))?;
        let (rows, classes, width) = (feats.rows(), self.classes(), self.in_features());
        let inv = 1.0 / rows.max(1) as f64;
        let mut dfeat = Matrix::zeros(rows, width);
        for (r, &label) in labels.iter().enumerate().take(rows) {
            for c in 0..classes {
                let target = if label == c { 1.0 } else { 0.0 };
                let dz = (probs.get(r, c).as_f64() - target) * inv;
                let dzt = T::from_f64_lossy(dz);
                self.params.bias_grad[c] = self.params.bias_grad[c] + dzt;
                for k in 0..width {
                    let wi = c * width + k;
                    self.params.weight_grad[wi] = self.params.weight_grad[wi] + dzt * feats.get(r, k);
                    let d = dfeat.get(r, k) + dzt * self.params.weight[wi];
                    dfeat.row_mut(r)[k] = d;
                }
            }
        }
        Ok(dfeat)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(w: Vec<f64>, b: Vec<f64>) -> LayerParams<f64> {
        let mut p = LayerParams::zeros(LayerKind::Linear, vec![2, w.len() / 2], 2);
        p.weight = w;
        p.bias = b;
        p
    }

    #[test]
    fn equal_logits_give_half() {
        let f = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let out = linear_softmax_xent(&f, &head(vec![1.0, 1.0], vec![0.0, 0.0]), None).unwrap();
        assert_eq!(out.probs.data(), &[0.5, 0.5]);
    }

    #[test]
    fn saturated_correct_logit_has_zero_loss() {
        let f = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let out = linear_softmax_xent(&f, &head(vec![1000.0, 0.0], vec![0.0, 0.0]), Some(&[0])).unwrap();
        assert!(out.loss.unwrap().abs() < 1e-12);
        let out = linear_softmax_xent(&f, &head(vec![1000.0, 0.0], vec![0.0, 0.0]), Some(&[1])).unwrap();
        assert!((out.loss.unwrap() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one_and_labels_are_checked() {
        let f = Matrix::from_vec(2, 2, vec![0.3, -2.0, 5.0, 1.0]).unwrap();
        let p = head(vec![0.1, -0.4, 2.0, 0.7], vec![0.2, -0.1]);
        let out = linear_softmax_xent(&f, &p, Some(&[0, 1])).unwrap();
        for r in 0..2 {
            assert!((out.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(linear_softmax_xent(&f, &p, Some(&[0, 2])), Err(Error::Validation(_))));
    }
}
