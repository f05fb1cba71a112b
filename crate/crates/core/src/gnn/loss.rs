//! Class-weighted binary cross-entropy on edge probabilities.

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the log.
pub const P_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Mean of `-[y ln p + w_neg (1 - y) ln(1 - p)]`; 0 for no edges.
pub fn weighted_bce(p: &[f64], labels: &[u8], w_neg: f64) -> f64 {
    assert_eq!(p.len(), labels.len());
    if p.is_empty() {
        return 0.0;
    }
    let total: f64 = p
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp(p);
            if y == 1 {
                -p.ln()
            } else {
                -w_neg * (1.0 - p).ln()
            }
        })
        .sum();
    total / p.len() as f64
}

/// Derivative of [`weighted_bce`] with respect to each logit. Zero where the
/// clamp is active.
pub fn weighted_bce_logit_grad(p: &[f64], labels: &[u8], w_neg: f64) -> Vec<f64> {
    assert_eq!(p.len(), labels.len());
    let n = p.len() as f64;
    p.iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(P_CLAMP..=1.0 - P_CLAMP).contains(&p) {
                0.0
            } else if y == 1 {
                (p - 1.0) / n
            } else {
                w_neg * p / n
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::net::sigmoid;

    #[test]
    fn known_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((weighted_bce(&[0.5], &[1], 0.15) - ln2).abs() < 1e-12);
        assert!((weighted_bce(&[0.5], &[0], 0.15) - 0.15 * ln2).abs() < 1e-12);
        assert!(weighted_bce(&[1.0, 0.0], &[1, 0], 0.15) < 1e-6);
        assert_eq!(weighted_bce(&[], &[], 0.15), 0.0);
        // clamped: finite even at the wrong extreme
        assert!(weighted_bce(&[0.0], &[1], 0.15).is_finite());
    }

    #[test]
    fn logit_gradient_matches_difference() {
        let logits = [-2.0, -0.3, 0.0, 0.7, 3.1];
        let labels = [1u8, 0, 1, 0, 1];
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let grad = weighted_bce_logit_grad(&probs, &labels, 0.15);
        let eps = 1e-6;
        for k in 0..logits.len() {
            let at = |d: f64| {
                let p: Vec<f64> = logits.iter().enumerate().map(|(j, &z)| sigmoid(if j == k { z + d } else { z })).collect();
                weighted_bce(&p, &labels, 0.15)
            };
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            assert!((fd - grad[k]).abs() < 1e-8, "{k}: {fd} vs {}", grad[k]);
        }
    }
}
