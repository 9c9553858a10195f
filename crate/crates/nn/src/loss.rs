//! Loss values and their gradients with respect to network outputs.

use crate::Tensor;

/// Clamp applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one probability against a {0,1} target.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Mean BCE over a batch of logits (`N×1×1×1`) and the gradient w.r.t. each logit.
pub fn bce_with_logits(logits: &Tensor, targets: &[f64]) -> (f64, Tensor) {
    let n = logits.dim().0;
    assert_eq!(n, targets.len(), "bce_with_logits: batch size mismatch");
    let mut grad = Tensor::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let p = sigmoid(logits[[i, 0, 0, 0]] as f64);
        total += bce(p, t);
        grad[[i, 0, 0, 0]] = ((p - t) / n as f64) as f32;
    }
    (total / n as f64, grad)
}

/// Mean softmax cross-entropy over `N×K×1×1` logits and integer class targets.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> (f64, Tensor) {
    let (n, k, _, _) = logits.dim();
    assert_eq!(n, targets.len(), "softmax_cross_entropy: batch size mismatch");
    let mut grad = Tensor::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row: Vec<f64> = (0..k).map(|j| logits[[i, j, 0, 0]] as f64).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
        for j in 0..k {
            let p = (row[j] - max).exp() / denom;
            let y = if j == t { 1.0 } else { 0.0 };
            grad[[i, j, 0, 0]] = ((p - y) / n as f64) as f32;
        }
        total -= (row[t] - max) - denom.ln();
    }
    (total / n as f64, grad)
}

/// Mean squared error and its gradient w.r.t. `pred`.
pub fn mse(pred: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(pred.dim(), target.dim(), "mse: shape mismatch");
    let n = pred.len() as f64;
    let mut total = 0.0f64;
    let mut grad = pred - target;
    grad.iter().for_each(|d| total += (*d as f64) * (*d as f64));
    let scale = (2.0 / n) as f32;
    grad.mapv_inplace(|d| d * scale);
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_closed_forms() {
        assert!((bce(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0.9, 0.0) + 0.1f64.ln()).abs() < 1e-12);
        assert!(bce(1.0, 1.0) < 1e-6);
    }

    #[test]
    fn logit_gradient_is_sigmoid_minus_target() {
        for &z in &[-2.0f64, 0.0, 2.0] {
            for &y in &[0.0, 1.0] {
                let h = 1e-5;
                let fd = (bce(sigmoid(z + h), y) - bce(sigmoid(z - h), y)) / (2.0 * h);
                let analytic = sigmoid(z) - y;
                assert!(((fd - analytic) / analytic.abs().max(1e-12)).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let logits = Tensor::zeros((2, 4, 1, 1));
        let (l, g) = softmax_cross_entropy(&logits, &[0, 3]);
        assert!((l - 4f64.ln()).abs() < 1e-9);
        assert!((g[[0, 0, 0, 0]] - (0.25 - 1.0) / 2.0).abs() < 1e-7);
    }
}
