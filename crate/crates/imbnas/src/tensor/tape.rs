//! Wengert tape: records the forward graph, replays it in reverse for
//! gradients. Parameter values are snapshotted onto the tape at read time;
//! mutating the `ParamSet` afterwards invalidates the tape.

use std::collections::{BTreeMap, BTreeSet};

use super::ops;
use super::{Element, ParamSet, Result, Tensor, TensorError};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(usize);

/// Per-channel batch statistics captured by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnBatch<E> {
    pub mean: Vec<E>,
    pub var: Vec<E>,
}

enum Node<E: Element> {
    Leaf,
    Add(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Relu(ValueId),
    Sum(ValueId),
    Conv2d {
        x: ValueId,
        w: ValueId,
        b: Option<ValueId>,
        stride: usize,
        pad: usize,
    },
    AvgPool {
        x: ValueId,
        k: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        mean: Vec<E>,
        invstd: Vec<E>,
    },
    Linear {
        x: ValueId,
        w: ValueId,
        b: ValueId,
    },
    GlobalAvgPool(ValueId),
    SoftmaxXent {
        logits: ValueId,
        labels: Vec<usize>,
        weights: Vec<E>,
        probs: Tensor<E>,
        wsum: E,
    },
}

/// Gradients keyed by parameter name. Every key of the originating
/// `ParamSet` is present; parameters the loss never reached hold zeros and
/// are absent from `touched`.
#[derive(Clone, Debug)]
pub struct GradMap<E> {
    pub grads: BTreeMap<String, Tensor<E>>,
    pub touched: BTreeSet<String>,
}

impl<E: Element> GradMap<E> {
    pub fn get(&self, key: &str) -> Result<&Tensor<E>> {
        self.grads
            .get(key)
            .ok_or_else(|| TensorError::UnknownParam(key.to_string()))
    }
}

pub struct Tape<E: Element> {
    recorded_version: u64,
    nodes: Vec<Node<E>>,
    vals: Vec<Tensor<E>>,
    param_keys: Vec<Option<String>>,
}

impl<E: Element> Tape<E> {
    pub fn new(params: &ParamSet<E>) -> Self {
        Tape {
            recorded_version: params.version(),
            nodes: Vec::new(),
            vals: Vec::new(),
            param_keys: Vec::new(),
        }
    }

    fn push(&mut self, node: Node<E>, val: Tensor<E>, key: Option<String>) -> ValueId {
        self.nodes.push(node);
        self.vals.push(val);
        self.param_keys.push(key);
        ValueId(self.vals.len() - 1)
    }

    pub fn value(&self, v: ValueId) -> &Tensor<E> {
        &self.vals[v.0]
    }

    /// Record a constant input (no gradient will be produced for it).
    pub fn constant(&mut self, t: Tensor<E>) -> ValueId {
        self.push(Node::Leaf, t, None)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> ValueId {
        self.constant(Tensor::zeros(shape))
    }

    /// Snapshot a parameter onto the tape.
    pub fn param(&mut self, params: &ParamSet<E>, key: &str) -> Result<ValueId> {
        self.check_version(params)?;
        let t = params.get(key)?.clone();
        Ok(self.push(Node::Leaf, t, Some(key.to_string())))
    }

    fn check_version(&self, params: &ParamSet<E>) -> Result<()> {
        if params.version() != self.recorded_version {
            return Err(TensorError::TapeInvalidated {
                recorded: self.recorded_version,
                current: params.version(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let v = ops::ew_add(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Node::Add(a, b), v, None))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let v = ops::ew_mul(&self.vals[a.0], &self.vals[b.0])?;
        Ok(self.push(Node::Mul(a, b), v, None))
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let v = ops::relu_fwd(&self.vals[x.0]);
        self.push(Node::Relu(x), v, None)
    }

    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let v = Tensor::scalar(ops::sum_all(&self.vals[x.0]));
        self.push(Node::Sum(x), v, None)
    }

    pub fn conv2d(
        &mut self,
        x: ValueId,
        w: ValueId,
        b: Option<ValueId>,
        stride: usize,
        pad: usize,
    ) -> Result<ValueId> {
        let v = ops::conv2d_fwd(
            &self.vals[x.0],
            &self.vals[w.0],
            b.map(|bb| &self.vals[bb.0]),
            stride,
            pad,
        )?;
        Ok(self.push(Node::Conv2d { x, w, b, stride, pad }, v, None))
    }

    pub fn avgpool(&mut self, x: ValueId, k: usize, stride: usize, pad: usize) -> Result<ValueId> {
        let v = ops::avgpool_fwd(&self.vals[x.0], k, stride, pad)?;
        Ok(self.push(Node::AvgPool { x, k, stride, pad }, v, None))
    }

    /// Training-mode batch norm: normalizes with the current batch statistics
    /// and hands them back so the caller can fold them into running state.
    pub fn batch_norm(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: f64,
    ) -> Result<(ValueId, BnBatch<E>)> {
        let (mean, var) = ops::bn_batch_stats(&self.vals[x.0])?;
        let invstd: Vec<E> = var
            .iter()
            .map(|v| E::one() / (*v + E::from_f64(eps)).sqrt())
            .collect();
        let v = ops::bn_apply(
            &self.vals[x.0],
            &mean,
            &invstd,
            &self.vals[gamma.0],
            &self.vals[beta.0],
        )?;
        let stats = BnBatch {
            mean: mean.clone(),
            var,
        };
        let id = self.push(
            Node::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                invstd,
            },
            v,
            None,
        );
        Ok((id, stats))
    }

    pub fn linear(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId> {
        let v = ops::linear_fwd(&self.vals[x.0], &self.vals[w.0], &self.vals[b.0])?;
        Ok(self.push(Node::Linear { x, w, b }, v, None))
    }

    pub fn global_avg_pool(&mut self, x: ValueId) -> Result<ValueId> {
        let v = ops::gap_fwd(&self.vals[x.0])?;
        Ok(self.push(Node::GlobalAvgPool(x), v, None))
    }

    /// Weighted softmax cross-entropy against integer labels; the scalar loss
    /// is the weighted mean with the batch's weight sum as denominator.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: ValueId,
        labels: &[usize],
        class_weights: &[E],
    ) -> Result<ValueId> {
        let (loss, probs, wsum) =
            ops::softmax_xent_fwd(&self.vals[logits.0], labels, class_weights)?;
        Ok(self.push(
            Node::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                weights: class_weights.to_vec(),
                probs,
                wsum,
            },
            Tensor::scalar(loss),
            None,
        ))
    }

    /// Reverse pass from a scalar loss. Returns one gradient per parameter
    /// key; parameters the tape never touched get zeros.
    pub fn backward(&self, loss: ValueId, params: &ParamSet<E>) -> Result<GradMap<E>> {
        self.check_version(params)?;
        let lv = &self.vals[loss.0];
        if !lv.is_scalar() {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        if !lv.item().is_finite() {
            return Err(TensorError::NonFinite("loss".into()));
        }
        let mut grad: Vec<Option<Tensor<E>>> = vec![None; self.vals.len()];
        grad[loss.0] = Some(Tensor::scalar(E::one()));

        for idx in (0..self.nodes.len()).rev() {
            let g = match grad[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx] {
                Node::Leaf => {
                    grad[idx] = Some(g);
                }
                Node::Add(a, b) => {
                    accum(&mut grad[a.0], g.clone());
                    accum(&mut grad[b.0], g);
                }
                Node::Mul(a, b) => {
                    let ga = ops::ew_mul(&g, &self.vals[b.0])?;
                    let gb = ops::ew_mul(&g, &self.vals[a.0])?;
                    accum(&mut grad[a.0], ga);
                    accum(&mut grad[b.0], gb);
                }
                Node::Relu(x) => {
                    accum(&mut grad[x.0], ops::relu_bwd(&self.vals[x.0], &g));
                }
                Node::Sum(x) => {
                    let gx = Tensor::filled(self.vals[x.0].shape(), g.item());
                    accum(&mut grad[x.0], gx);
                }
                Node::Conv2d { x, w, b, stride, pad } => {
                    let (gx, gw, gb) = ops::conv2d_bwd(
                        &self.vals[x.0],
                        &self.vals[w.0],
                        b.is_some(),
                        *stride,
                        *pad,
                        &g,
                    )?;
                    accum(&mut grad[x.0], gx);
                    accum(&mut grad[w.0], gw);
                    if let (Some(bid), Some(gbt)) = (b, gb) {
                        accum(&mut grad[bid.0], gbt);
                    }
                }
                Node::AvgPool { x, k, stride, pad } => {
                    let gx =
                        ops::avgpool_bwd(self.vals[x.0].shape(), *k, *stride, *pad, &g)?;
                    accum(&mut grad[x.0], gx);
                }
                Node::BatchNorm {
                    x,
                    gamma,
                    beta,
                    mean,
                    invstd,
                } => {
                    let (gx, ggamma, gbeta) = ops::bn_bwd(
                        &self.vals[x.0],
                        mean,
                        invstd,
                        &self.vals[gamma.0],
                        &g,
                    )?;
                    accum(&mut grad[x.0], gx);
                    accum(&mut grad[gamma.0], ggamma);
                    accum(&mut grad[beta.0], gbeta);
                }
                Node::Linear { x, w, b } => {
                    let (gx, gw, gb) =
                        ops::linear_bwd(&self.vals[x.0], &self.vals[w.0], &g)?;
                    accum(&mut grad[x.0], gx);
                    accum(&mut grad[w.0], gw);
                    accum(&mut grad[b.0], gb);
                }
                Node::GlobalAvgPool(x) => {
                    let gx = ops::gap_bwd(self.vals[x.0].shape(), &g)?;
                    accum(&mut grad[x.0], gx);
                }
                Node::SoftmaxXent {
                    logits,
                    labels,
                    weights,
                    probs,
                    wsum,
                } => {
                    let gl =
                        ops::softmax_xent_bwd(probs, labels, weights, *wsum, g.item())?;
                    accum(&mut grad[logits.0], gl);
                }
            }
        }

        let mut grads = BTreeMap::new();
        let mut touched = BTreeSet::new();
        for (key, p) in params.iter() {
            grads.insert(key.to_string(), Tensor::zeros(p.value.shape()));
        }
        for (idx, key) in self.param_keys.iter().enumerate() {
            if let (Some(key), Some(g)) = (key, grad[idx].take()) {
                let slot = grads
                    .get_mut(key)
                    .ok_or_else(|| TensorError::UnknownParam(key.clone()))?;
                *slot = ops::ew_add(slot, &g)?;
                touched.insert(key.clone());
            }
        }
        Ok(GradMap { grads, touched })
    }
}

fn accum<E: Element>(slot: &mut Option<Tensor<E>>, delta: Tensor<E>) {
    match slot {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(delta.data()) {
                *a = *a + *b;
            }
        }
        None => *slot = Some(delta),
    }
}

/// The primitive operator set realizable on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    None,
    Skip,
    Conv1x1,
    Conv3x3,
    AvgPool3x3,
    Relu,
    BatchNorm,
    Linear,
    GlobalAvgPool,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::None => "none",
            OpKind::Skip => "skip",
            OpKind::Conv1x1 => "conv1x1",
            OpKind::Conv3x3 => "conv3x3",
            OpKind::AvgPool3x3 => "avgpool3x3",
            OpKind::Relu => "relu",
            OpKind::BatchNorm => "batchnorm",
            OpKind::Linear => "linear",
            OpKind::GlobalAvgPool => "global_avg_pool",
        }
    }
}

/// Apply one primitive operator on the tape. `keys` names the parameters the
/// kind consumes: conv takes `[weight]` or `[weight, bias]`, batch norm takes
/// `[gamma, beta]`, linear takes `[weight, bias]`, the rest take none.
/// `none` produces a zero tensor of the input's shape; `skip` is identity.
#[allow(clippy::redundant_closure)]
pub fn forward_op<E: Element>(
    tape: &mut Tape<E>,
    kind: OpKind,
    input: ValueId,
    params: &ParamSet<E>,
    keys: &[&str],
) -> Result<ValueId> {
    let named = |err: TensorError| -> TensorError {
        match err {
            TensorError::ShapeMismatch { lhs, rhs, .. } => TensorError::ShapeMismatch {
                op: kind.name().to_string(),
                lhs,
                rhs,
            },
            other => other,
        }
    };
    match kind {
        OpKind::None => {
            let shape = tape.value(input).shape().to_vec();
            Ok(tape.zeros(&shape))
        }
        OpKind::Skip => Ok(input),
        OpKind::Conv1x1 | OpKind::Conv3x3 => {
            let w = tape.param(params, keys[0])?;
            let b = match keys.get(1) {
                Some(k) => Some(tape.param(params, k)?),
                None => None,
            };
            let pad = if kind == OpKind::Conv3x3 { 1 } else { 0 };
            tape.conv2d(input, w, b, 1, pad).map_err(named)
        }
        OpKind::AvgPool3x3 => tape.avgpool(input, 3, 1, 1).map_err(named),
        OpKind::Relu => Ok(tape.relu(input)),
        OpKind::BatchNorm => {
            let g = tape.param(params, keys[0])?;
            let b = tape.param(params, keys[1])?;
            let (out, _) = tape.batch_norm(input, g, b, 1e-5).map_err(named)?;
            Ok(out)
        }
        OpKind::Linear => {
            let w = tape.param(params, keys[0])?;
            let b = tape.param(params, keys[1])?;
            tape.linear(input, w, b).map_err(named)
        }
        OpKind::GlobalAvgPool => tape.global_avg_pool(input).map_err(named),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, gradient_suite, max_rel_err, ops, ParamTag};

    fn params_with(entries: &[(&str, &[usize], &[f64])]) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        for (key, shape, data) in entries {
            p.insert(
                key,
                ParamTag::Backbone,
                Tensor::new(shape.to_vec(), data.to_vec()).unwrap(),
            )
            .unwrap();
        }
        p
    }

    #[test]
    fn conv3x3_all_ones_hand_summed() {
        // 1->1 channel all-ones 3x3 kernel, pad 1, on a 3x3 all-ones image:
        // each output counts its in-bounds 3x3 window
        let params = ParamSet::<f64>::new();
        let mut tape = Tape::new(&params);
        let x = tape.constant(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let w = tape.constant(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let y = tape.conv2d(x, w, None, 1, 1).unwrap();
        let out = tape.value(y);
        assert_eq!(out.shape(), &[1, 1, 3, 3]);
        let expect = [4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0];
        assert_eq!(out.data(), &expect);
    }

    #[test]
    fn skip_is_identity_none_is_zeros() {
        let params = ParamSet::<f64>::new();
        let mut tape = Tape::new(&params);
        let t = Tensor::from_fn(&[2, 4, 8, 8], |i| i as f64 * 0.25);
        let x = tape.constant(t.clone());
        let skipped = forward_op(&mut tape, OpKind::Skip, x, &params, &[]).unwrap();
        assert_eq!(tape.value(skipped), &t);
        let none = forward_op(&mut tape, OpKind::None, x, &params, &[]).unwrap();
        assert_eq!(tape.value(none), &Tensor::zeros(&[2, 4, 8, 8]));
    }

    #[test]
    fn sum_of_elementwise_product_grad_is_other_factor() {
        // loss = sum(w ⊙ x) => dloss/dw = x exactly
        let params = params_with(&[("w", &[4], &[0.5, -1.0, 2.0, 0.0])]);
        let mut tape = Tape::new(&params);
        let w = tape.param(&params, "w").unwrap();
        let x = tape.constant(Tensor::new(vec![4], vec![3.0, 1.5, -2.0, 7.0]).unwrap());
        let prod = tape.mul(w, x).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss, &params).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), &[3.0, 1.5, -2.0, 7.0]);
        assert!(grads.touched.contains("w"));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let params = params_with(&[
            ("used", &[2], &[1.0, 2.0]),
            ("unused", &[3], &[5.0, 5.0, 5.0]),
        ]);
        let mut tape = Tape::new(&params);
        let w = tape.param(&params, "used").unwrap();
        let loss = tape.sum(w);
        let grads = tape.backward(loss, &params).unwrap();
        assert_eq!(grads.get("unused").unwrap().data(), &[0.0, 0.0, 0.0]);
        assert!(!grads.touched.contains("unused"));
        assert_eq!(grads.get("used").unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn tape_rejected_after_parameter_mutation() {
        let mut params = params_with(&[("w", &[2], &[1.0, 2.0])]);
        let mut tape = Tape::new(&params);
        let w = tape.param(&params, "w").unwrap();
        let loss = tape.sum(w);
        params
            .set_value("w", Tensor::new(vec![2], vec![9.0, 9.0]).unwrap())
            .unwrap();
        assert!(matches!(
            tape.backward(loss, &params),
            Err(TensorError::TapeInvalidated { .. })
        ));
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let mut params = ParamSet::<f64>::new();
        params
            .insert("w", ParamTag::Backbone, Tensor::zeros(&[2, 5, 3, 3]))
            .unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.constant(Tensor::zeros(&[1, 3, 4, 4]));
        let err = forward_op(&mut tape, OpKind::Conv3x3, x, &params, &["w"]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv3x3"), "{msg}");
        assert!(msg.contains("[1, 3, 4, 4]"), "{msg}");
        assert!(msg.contains("[2, 5, 3, 3]"), "{msg}");
    }

    #[test]
    fn finite_diff_simple_square() {
        // f(w) = w^2 at w = 3 -> 6, f constant -> 0
        let params = params_with(&[("w", &[1], &[3.0]), ("k", &[1], &[4.0])]);
        let fd = finite_diff_grad(
            |ps: &ParamSet<f64>| Ok(ps.get("w")?.data()[0].powi(2)),
            &params,
            1e-6,
        )
        .unwrap();
        assert!((fd["w"].data()[0] - 6.0).abs() < 1e-7);
        assert_eq!(fd["k"].data()[0], 0.0);
    }

    #[test]
    fn gradient_suite_f64_tight() {
        for report in gradient_suite::<f64>(5, 99).unwrap() {
            assert!(
                report.worst <= 1e-6,
                "{} worst {:e}",
                report.op,
                report.worst
            );
        }
    }

    #[test]
    fn gradient_suite_f32() {
        for report in gradient_suite::<f32>(5, 7).unwrap() {
            assert!(
                report.worst <= 1e-3,
                "{} worst {:e}",
                report.op,
                report.worst
            );
        }
    }

    #[test]
    fn weighted_cross_entropy_grad_matches_oracle_f64() {
        // 4-class batch of 8 in 64-bit mode at 1e-6 relative error
        let mut rng = crate::seeded::rng_for(21, "xent-batch");
        use rand::Rng;
        let labels: Vec<usize> = (0..8).map(|_| rng.gen_range(0..4)).collect();
        let weights: Vec<f64> = (0..4).map(|_| rng.gen_range(0.2..2.0)).collect();
        let mut params = ParamSet::<f64>::new();
        params
            .insert(
                "logits",
                ParamTag::Classifier,
                Tensor::from_fn(&[8, 4], |_| rng.gen_range(-2.0..2.0)),
            )
            .unwrap();
        let mut tape = Tape::new(&params);
        let l = tape.param(&params, "logits").unwrap();
        let loss = tape.weighted_cross_entropy(l, &labels, &weights).unwrap();
        let analytic = tape.backward(loss, &params).unwrap();
        let fd = finite_diff_grad(
            |ps: &ParamSet<f64>| {
                let (loss, _, _) =
                    ops::softmax_xent_fwd(ps.get("logits")?, &labels, &weights)?;
                Ok(loss)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(max_rel_err(&analytic.grads, &fd) <= 1e-6);
    }

    #[test]
    fn batchnorm_normalizes_batch() {
        // training-mode output has per-channel mean ~0 and variance ~1
        // before scale/shift (gamma = 1, beta = 0)
        let mut rng = crate::seeded::rng_for(5, "bn");
        use rand::Rng;
        let mut params = ParamSet::<f64>::new();
        params
            .insert("g", ParamTag::Backbone, Tensor::filled(&[3], 1.0))
            .unwrap();
        params
            .insert("b", ParamTag::Backbone, Tensor::zeros(&[3]))
            .unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.constant(Tensor::from_fn(&[4, 3, 5, 5], |_| {
            rng.gen_range(-2.0..2.0) * 3.0 + 0.7
        }));
        let g = tape.param(&params, "g").unwrap();
        let b = tape.param(&params, "b").unwrap();
        let (y, stats) = tape.batch_norm(x, g, b, 1e-5).unwrap();
        let (mean, var) = ops::bn_batch_stats(tape.value(y)).unwrap();
        for c in 0..3 {
            assert!(mean[c].abs() <= 1e-5, "mean {}", mean[c]);
            assert!((var[c] - 1.0).abs() <= 1e-4, "var {}", var[c]);
            assert!(stats.var[c] > 0.0);
        }
    }

    #[test]
    fn forward_pass_finite_on_finite_inputs() {
        let mut rng = crate::seeded::rng_for(17, "finite");
        use rand::Rng;
        let mut params = ParamSet::<f32>::new();
        params
            .insert(
                "w",
                ParamTag::Backbone,
                Tensor::from_fn(&[4, 3, 3, 3], |_| rng.gen_range(-1.0..1.0)),
            )
            .unwrap();
        params
            .insert("g", ParamTag::Backbone, Tensor::filled(&[4], 1.0))
            .unwrap();
        params
            .insert("b", ParamTag::Backbone, Tensor::zeros(&[4]))
            .unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.constant(Tensor::from_fn(&[2, 3, 8, 8], |_| rng.gen_range(0.0..1.0)));
        let w = tape.param(&params, "w").unwrap();
        let h = tape.conv2d(x, w, None, 1, 1).unwrap();
        let g = tape.param(&params, "g").unwrap();
        let b = tape.param(&params, "b").unwrap();
        let (h, _) = tape.batch_norm(h, g, b, 1e-5).unwrap();
        let h = tape.relu(h);
        let h = tape.avgpool(h, 3, 1, 1).unwrap();
        let h = tape.global_avg_pool(h).unwrap();
        assert!(tape.value(h).all_finite());
    }

    #[test]
    fn avgpool_of_ones_is_ones() {
        // padded positions are excluded from the divisor
        let params = ParamSet::<f64>::new();
        let mut tape = Tape::new(&params);
        let x = tape.constant(Tensor::filled(&[1, 1, 4, 4], 1.0));
        let y = tape.avgpool(x, 3, 1, 1).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
