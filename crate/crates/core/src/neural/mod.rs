//! Float64 reverse-mode automatic differentiation and the layers built on it.
//!
//! A [`Graph`] records operations on a tape while it evaluates them; calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and returns the
//! gradient of every parameter that took part.

mod graph;
mod layers;
mod params;
mod tensor;

use rand::Rng;

use crate::error::{Error, Result};

pub use graph::{Graph, Var};
pub use layers::{dropout, BiLstm, Conv1d, Dense, Lstm};
pub use params::{Adam, AdamConfig, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.05;

/// One draw from U(-0.05, 0.05).
pub fn init_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-INIT_SCALE..INIT_SCALE)
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `-log softmax(logits)[target]`, computed with log-sum-exp.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Invalid(format!("target {target} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[target])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one_and_survives_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!(cross_entropy(&[1000.0, 0.0], 0).unwrap().abs() < 1e-12);
        assert!((cross_entropy(&[0.0, 0.0], 1).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        for p in softmax(&[0.0, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let logits = [0.3, -1.2, 2.5, 0.0, 7.1];
        let base = softmax(&logits);
        for c in [-500.0, -3.0, 0.5, 42.0, 999.0] {
            let shifted: Vec<f64> = logits.iter().map(|v| v + c).collect();
            for (a, b) in base.iter().zip(softmax(&shifted)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_up_to_magnitude_1e3() {
        let logits = [1e3, -1e3, 999.5, 0.0, -999.0, 1e3];
        let p = softmax(&logits);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_uniform_cross_entropy_over_eleven_classes() {
        let logits = [0.0; 11];
        for target in 0..11 {
            let ce = 10.0 * cross_entropy(&logits, target).unwrap();
            assert!((ce - 10.0 * 11f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_target_out_of_range_is_an_error() {
        assert!(matches!(cross_entropy(&[0.0, 1.0], 2), Err(Error::Invalid(_))));
    }
}
