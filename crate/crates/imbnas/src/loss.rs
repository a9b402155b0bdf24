//! Effective-number class reweighting, weighted cross-entropy, and the
//! deferred re-weighting (DRW) schedule.
//!
//! Class j gets raw weight (1 - beta) / (1 - beta^{n_j}); with `normalize`
//! set, weights are rescaled to sum to the class count (the convention of
//! the effective-number recipe). DRW trains unweighted until the milestone
//! epoch, then switches to the effective-number weights (inclusive switch:
//! reweighting is active at epoch == drw_epoch).

use crate::tensor::{ops, Element, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("beta must lie in [0, 1), got {0}")]
    BetaOutOfRange(f64),
    #[error("class counts must be >= 1, class {0} has 0")]
    EmptyClass(usize),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

/// The three loss regimes: `drw_epoch = None` is plain cross-entropy
/// throughout, `Some(0)` reweights from the start, `Some(e)` defers
/// reweighting to epoch e.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub drw_epoch: Option<usize>,
    pub normalize: bool,
}

impl LossConfig {
    /// Plain cross-entropy (balanced training).
    pub fn unweighted() -> Self {
        LossConfig {
            beta: 0.0,
            drw_epoch: None,
            normalize: true,
        }
    }

    /// Reweighted from the first epoch. The paper never states beta;
    /// 0.9999 is the standard effective-number setting.
    pub fn reweighted(beta: f64) -> Self {
        LossConfig {
            beta,
            drw_epoch: Some(0),
            normalize: true,
        }
    }

    /// Deferred reweighting starting at `epoch`.
    pub fn deferred(beta: f64, epoch: usize) -> Self {
        LossConfig {
            beta,
            drw_epoch: Some(epoch),
            normalize: true,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(LossError::BetaOutOfRange(self.beta));
        }
        Ok(())
    }
}

/// Raw effective-number weights w_j = (1 - beta) / (1 - beta^{n_j}),
/// computed in f64. beta = 0 or n_j = 1 force w_j = 1 exactly.
pub fn effective_number_weights(counts: &[usize], beta: f64) -> Result<Vec<f64>, LossError> {
    if !(0.0..1.0).contains(&beta) {
        return Err(LossError::BetaOutOfRange(beta));
    }
    counts
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            if n == 0 {
                return Err(LossError::EmptyClass(j));
            }
            if beta == 0.0 || n == 1 {
                return Ok(1.0);
            }
            Ok((1.0 - beta) / (1.0 - beta.powf(n as f64)))
        })
        .collect()
}

/// Rescale weights so they sum to the number of classes.
pub fn normalize_weights(weights: &mut [f64]) {
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        let scale = weights.len() as f64 / sum;
        for w in weights.iter_mut() {
            *w *= scale;
        }
    }
}

/// Per-class weights in effect at `epoch`: all ones before the DRW milestone
/// (or when no milestone is configured), effective-number weights from the
/// milestone on.
pub fn weights_at_epoch(
    epoch: usize,
    cfg: &LossConfig,
    counts: &[usize],
) -> Result<Vec<f64>, LossError> {
    cfg.validate()?;
    match cfg.drw_epoch {
        Some(m) if epoch >= m => {
            let mut w = effective_number_weights(counts, cfg.beta)?;
            if cfg.normalize {
                normalize_weights(&mut w);
            }
            Ok(w)
        }
        _ => Ok(vec![1.0; counts.len()]),
    }
}

/// Forward-only weighted cross-entropy over a B x C logit matrix
/// (weighted mean with the batch's weight sum as denominator). The training
/// path records the same computation on the tape via
/// [`Tape::weighted_cross_entropy`](crate::tensor::Tape::weighted_cross_entropy).
pub fn weighted_cross_entropy<E: Element>(
    logits: &Tensor<E>,
    labels: &[usize],
    class_weights: &[E],
) -> Result<E, LossError> {
    let (loss, _, _) = ops::softmax_xent_fwd(logits, labels, class_weights)?;
    Ok(loss)
}

/// Unweighted cross-entropy: mean negative log-likelihood. Computed on its
/// own route (plain mean, no weight bookkeeping) so the equal-weights
/// equivalence with [`weighted_cross_entropy`] is a genuine cross-check.
pub fn cross_entropy<E: Element>(logits: &Tensor<E>, labels: &[usize]) -> Result<E, LossError> {
    let (n, c) = logits.dims2()?;
    if n == 0 {
        return Err(crate::tensor::TensorError::EmptyBatch.into());
    }
    let ld = logits.data();
    let mut total = E::zero();
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(crate::tensor::TensorError::BadLabel { label: y, classes: c }.into());
        }
        let row = &ld[i * c..(i + 1) * c];
        let mut mx = row[0];
        for v in row {
            if *v > mx {
                mx = *v;
            }
        }
        let mut z = E::zero();
        for v in row {
            z = z + (*v - mx).exp();
        }
        total = total + (z.ln() - (row[y] - mx));
    }
    Ok(total / E::from_f64(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_zero_and_singleton_counts_force_unit_weights() {
        let w = effective_number_weights(&[17, 1, 500], 0.0).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
        let w = effective_number_weights(&[1, 1], 0.77).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn beta_one_rejected() {
        assert!(matches!(
            effective_number_weights(&[5], 1.0),
            Err(LossError::BetaOutOfRange(_))
        ));
    }

    #[test]
    fn closed_form_at_standard_beta() {
        // (1-b)/(1-b^500) and (1-b)/(1-b^5) at b = 0.9999, evaluated directly
        let w = effective_number_weights(&[500, 5], 0.9999).unwrap();
        let b: f64 = 0.9999;
        let expect0 = (1.0 - b) / (1.0 - b.powf(500.0));
        let expect1 = (1.0 - b) / (1.0 - b.powf(5.0));
        assert!((w[0] - expect0).abs() < 1e-15);
        assert!((w[1] - expect1).abs() < 1e-15);
        assert!((w[0] - 0.002051).abs() < 1e-6, "w0 = {}", w[0]);
        assert!((w[1] - 0.200040).abs() < 1e-6, "w1 = {}", w[1]);
        assert!((w[1] / w[0] - 97.56).abs() < 0.01);
    }

    #[test]
    fn weights_strictly_decreasing_in_count() {
        let w = effective_number_weights(&[1000, 500, 100, 10, 2], 0.99).unwrap();
        for pair in w.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn near_one_beta_approaches_inverse_frequency() {
        let counts = [1000usize, 700, 400, 100, 30, 7, 1];
        let mut w = effective_number_weights(&counts, 1.0 - 1e-6).unwrap();
        normalize_weights(&mut w);
        let mut inv: Vec<f64> = counts.iter().map(|&n| 1.0 / n as f64).collect();
        normalize_weights(&mut inv);
        for (a, b) in w.iter().zip(&inv) {
            assert!((a - b).abs() / b < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn drw_switch_is_inclusive() {
        let cfg = LossConfig::deferred(0.9999, 160);
        let counts = [500usize, 5];
        assert_eq!(weights_at_epoch(159, &cfg, &counts).unwrap(), vec![1.0, 1.0]);
        let at = weights_at_epoch(160, &cfg, &counts).unwrap();
        assert!(at[1] > at[0]);
        // Some(0) reweights every epoch
        let rw = LossConfig::reweighted(0.9999);
        let w0 = weights_at_epoch(0, &rw, &counts).unwrap();
        assert!(w0[1] > w0[0]);
        // None is unweighted throughout
        let un = LossConfig::unweighted();
        assert_eq!(weights_at_epoch(999, &un, &counts).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::<f64>::zeros(&[3, 7]);
        let loss = cross_entropy(&logits, &[0, 3, 6]).unwrap();
        assert!((loss - (7.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logit_loss() {
        let logits = Tensor::<f64>::new(vec![1, 2], vec![10.0, 0.0]).unwrap();
        let loss = weighted_cross_entropy(&logits, &[0], &[1.0, 1.0]).unwrap();
        let expect = (1.0 + (-10.0f64).exp()).ln();
        assert!((loss - expect).abs() < 1e-15);
        assert!((loss - 4.5398899e-5).abs() < 1e-11);
    }

    #[test]
    fn single_sample_weight_cancels() {
        let logits = Tensor::<f64>::new(vec![1, 3], vec![0.3, -1.2, 0.8]).unwrap();
        let l1 = weighted_cross_entropy(&logits, &[2], &[1.0, 1.0, 1.0]).unwrap();
        let l2 = weighted_cross_entropy(&logits, &[2], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(l1, l2);
    }

    #[test]
    fn unit_weights_match_unweighted_bitwise() {
        let logits = Tensor::<f64>::new(
            vec![4, 3],
            vec![
                0.5, -0.25, 1.5, 2.0, 0.0, -1.0, 0.125, 0.75, -0.5, 3.0, -2.0, 0.25,
            ],
        )
        .unwrap();
        let labels = [0usize, 1, 2, 0];
        let weighted = weighted_cross_entropy(&logits, &labels, &[1.0, 1.0, 1.0]).unwrap();
        let plain = cross_entropy(&logits, &labels).unwrap();
        assert_eq!(weighted.to_bits(), plain.to_bits());
    }

    #[test]
    fn empty_batch_rejected() {
        let logits = Tensor::<f64>::zeros(&[0, 4]);
        assert!(weighted_cross_entropy(&logits, &[], &[1.0; 4]).is_err());
    }
}
