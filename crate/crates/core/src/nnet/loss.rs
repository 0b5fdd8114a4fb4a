use super::{NnetError, Scalar, Tensor};

/// Mean squared error over an `n × 1` prediction batch.
///
/// Returns the loss and `d loss / d pred = 2 (pred - target) / n`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &[f64]) -> Result<(f64, Tensor<T>), NnetError> {
    let n = target.len();
    if n == 0 {
        return Err(NnetError::EmptyBatch);
    }
    if pred.len() != n {
        return Err(NnetError::Shape(format!("{} predictions for {n} targets", pred.len())));
    }
    let scale = T::lit(2.0 / n as f64);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &y) in pred.data().iter().zip(target) {
        let diff = p - T::lit(y);
        loss += diff.as_f64() * diff.as_f64();
        grad.push(scale * diff);
    }
    Ok((loss / n as f64, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_when_equal() {
        let p = Tensor::<f64>::new(vec![3, 1], vec![0.0, 2.0, 4.0]).unwrap();
        let (l, g) = mse_loss(&p, &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample_arithmetic() {
        let p = Tensor::<f32>::new(vec![1, 1], vec![3.0]).unwrap();
        let (l, g) = mse_loss(&p, &[1.0]).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g.data(), &[4.0]);
    }

    #[test]
    fn errors() {
        let p = Tensor::<f32>::new(vec![1, 1], vec![3.0]).unwrap();
        assert!(matches!(mse_loss(&p, &[]), Err(NnetError::EmptyBatch)));
        assert!(matches!(mse_loss(&p, &[1.0, 2.0]), Err(NnetError::Shape(_))));
    }
}
