//! SGD with momentum and a milestone learning-rate schedule.

use std::collections::{BTreeMap, BTreeSet};

use super::tape::GradMap;
use super::{Element, ParamSet, Result, Tensor, TensorError};

/// Milestone schedule: the learning rate is multiplied by `factor` at each
/// milestone epoch (cumulative), so it is nonincreasing and piecewise
/// constant. Momentum and weight decay ride along because the paper's
/// training recipes treat them as part of the schedule. The paper never
/// states momentum or weight-decay values; 0.9 / 5e-4 are the usual
/// defaults for these recipes and both are configurable.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, milestones: Vec<usize>, factor: f64) -> Self {
        LrSchedule {
            base_lr,
            milestones,
            factor,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// base_lr * factor^k where k counts milestones at or below `epoch`.
pub fn lr_at_epoch(schedule: &LrSchedule, epoch: usize) -> f64 {
    let k = schedule.milestones.iter().filter(|&&m| m <= epoch).count();
    schedule.base_lr * schedule.factor.powi(k as i32)
}

/// SGD with momentum and decoupled-from-nothing weight decay, the classic
/// recipe: v <- momentum*v + g + wd*p; p <- p - lr*v. Velocity buffers
/// persist across steps per parameter key.
#[derive(Clone, Debug)]
pub struct SgdMomentum<E: Element> {
    momentum: E,
    weight_decay: E,
    velocity: BTreeMap<String, Tensor<E>>,
}

impl<E: Element> SgdMomentum<E> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        SgdMomentum {
            momentum: E::from_f64(momentum),
            weight_decay: E::from_f64(weight_decay),
            velocity: BTreeMap::new(),
        }
    }

    pub fn from_schedule(s: &LrSchedule) -> Self {
        Self::new(s.momentum, s.weight_decay)
    }

    /// Apply one step to the keys in `subset` (typically trainable ∩ touched).
    pub fn step(
        &mut self,
        params: &mut ParamSet<E>,
        grads: &GradMap<E>,
        lr: f64,
        subset: &BTreeSet<String>,
    ) -> Result<()> {
        let lr = E::from_f64(lr);
        for key in subset {
            let g = grads.get(key)?;
            let p = params.get(key)?;
            if g.shape() != p.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: format!("sgd_step({key})"),
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let v = self
                .velocity
                .entry(key.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            if v.shape() != p.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: format!("sgd_velocity({key})"),
                    lhs: p.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
        }
        let momentum = self.momentum;
        let wd = self.weight_decay;
        let velocity = &mut self.velocity;
        params.mutate(|key, _tag, value| {
            if !subset.contains(key) {
                return;
            }
            let g = grads.grads.get(key).expect("validated above");
            let v = velocity.get_mut(key).expect("validated above");
            for ((pv, vv), gv) in value
                .data_mut()
                .iter_mut()
                .zip(v.data_mut())
                .zip(g.data())
            {
                *vv = momentum * *vv + *gv + wd * *pv;
                *pv = *pv - lr * *vv;
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ParamTag;

    fn one_param(v: f32) -> ParamSet<f32> {
        let mut p = ParamSet::new();
        p.insert("w", ParamTag::Backbone, Tensor::new(vec![1], vec![v]).unwrap())
            .unwrap();
        p
    }

    fn grad_of(v: f32, params: &ParamSet<f32>) -> GradMap<f32> {
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), Tensor::new(vec![1], vec![v]).unwrap());
        let mut touched = BTreeSet::new();
        touched.insert("w".to_string());
        let _ = params;
        GradMap { grads, touched }
    }

    #[test]
    fn plain_sgd_step() {
        let mut params = one_param(1.0);
        let grads = grad_of(0.5, &params);
        let mut opt = SgdMomentum::new(0.0, 0.0);
        opt.step(&mut params, &grads, 0.1, &grads.touched).unwrap();
        assert_eq!(params.get("w").unwrap().data()[0], 0.95);
    }

    #[test]
    fn momentum_two_steps() {
        // v1 = 1, p1 = -0.1; v2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19 = -0.29
        let mut params = one_param(0.0);
        let grads = grad_of(1.0, &params);
        let mut opt = SgdMomentum::new(0.9, 0.0);
        opt.step(&mut params, &grads, 0.1, &grads.touched).unwrap();
        opt.step(&mut params, &grads, 0.1, &grads.touched).unwrap();
        let got = params.get("w").unwrap().data()[0];
        assert!((got - (-0.29)).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut params = one_param(1.25);
        let grads = grad_of(0.0, &params);
        let mut opt = SgdMomentum::new(0.9, 0.0);
        for _ in 0..5 {
            opt.step(&mut params, &grads, 0.1, &grads.touched).unwrap();
        }
        assert_eq!(params.get("w").unwrap().data()[0], 1.25);
    }

    #[test]
    fn milestone_decay() {
        let s = LrSchedule {
            base_lr: 0.1,
            milestones: vec![160, 180],
            factor: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        };
        assert_eq!(lr_at_epoch(&s, 0), 0.1);
        assert!((lr_at_epoch(&s, 170) - 0.001).abs() < 1e-15);
        assert!((lr_at_epoch(&s, 190) - 1e-5).abs() < 1e-18);
        // milestones are inclusive
        assert!((lr_at_epoch(&s, 160) - 0.001).abs() < 1e-15);
        assert_eq!(lr_at_epoch(&s, 159), 0.1);
    }

    #[test]
    fn lr_nonincreasing_piecewise_constant() {
        let s = LrSchedule::new(0.1, vec![3, 7], 0.1);
        let mut prev = f64::INFINITY;
        let mut jumps = 0;
        for e in 0..12 {
            let lr = lr_at_epoch(&s, e);
            assert!(lr <= prev);
            if lr < prev && prev.is_finite() {
                jumps += 1;
            }
            prev = lr;
        }
        assert_eq!(jumps, s.milestones.len());
    }
}
