//! Central finite-difference gradient oracle.
//!
//! Kept independent of the tape on purpose: it only needs a deterministic
//! loss closure over a `ParamSet`, so it can cross-check any backward pass.

use std::collections::BTreeMap;

use super::{Dtype, Element, ParamSet, Result, Tensor, TensorError};

/// Default perturbation: 1e-3 in 32-bit mode, 1e-6 in 64-bit mode.
pub fn default_eps<E: Element>() -> f64 {
    match E::DTYPE {
        Dtype::F32 => 1e-3,
        Dtype::F64 => 1e-6,
    }
}

/// Central difference (f(p+eps) - f(p-eps)) / (2 eps) per scalar parameter.
pub fn finite_diff_grad<E: Element, F>(
    mut loss_fn: F,
    params: &ParamSet<E>,
    eps: f64,
) -> Result<BTreeMap<String, Tensor<E>>>
where
    F: FnMut(&ParamSet<E>) -> Result<E>,
{
    if eps <= 0.0 {
        return Err(TensorError::BadEps(eps));
    }
    let step = E::from_f64(eps);
    let mut work = params.clone();
    let mut out = BTreeMap::new();
    let keys: Vec<String> = params.keys().map(|k| k.to_string()).collect();
    for key in keys {
        let base = params.get(&key)?.clone();
        let mut grad = Tensor::zeros(base.shape());
        for i in 0..base.len() {
            let orig = base.data()[i];
            let mut plus = base.clone();
            plus.data_mut()[i] = orig + step;
            work.set_value(&key, plus)?;
            let f_plus = loss_fn(&work)?;
            let mut minus = base.clone();
            minus.data_mut()[i] = orig - step;
            work.set_value(&key, minus)?;
            let f_minus = loss_fn(&work)?;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(TensorError::NonFinite(format!(
                    "finite_diff_grad at {key}[{i}]"
                )));
            }
            grad.data_mut()[i] =
                (f_plus - f_minus) / (E::from_f64(2.0) * step);
        }
        work.set_value(&key, base)?;
        out.insert(key, grad);
    }
    Ok(out)
}

/// Largest normalized deviation between two gradient maps:
/// max |a - b| / max(1, |a|, |b|).
pub fn max_rel_err<E: Element>(
    a: &BTreeMap<String, Tensor<E>>,
    b: &BTreeMap<String, Tensor<E>>,
) -> f64 {
    let mut worst = 0.0f64;
    for (key, ta) in a {
        if let Some(tb) = b.get(key) {
            for (x, y) in ta.data().iter().zip(tb.data()) {
                let (x, y) = (x.into_f64(), y.into_f64());
                let denom = 1.0f64.max(x.abs()).max(y.abs());
                worst = worst.max((x - y).abs() / denom);
            }
        }
    }
    worst
}

/// Worst normalized error of the tape backward against the central
/// finite-difference oracle for one op kind, over `instances` random
/// instances at small shapes.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub op: String,
    pub instances: usize,
    pub worst: f64,
}

/// Run the whole gradient suite: every primitive op kind (plus the stride-2
/// conv used by stage reductions and the weighted cross-entropy head) is
/// checked against [`finite_diff_grad`] on random instances. Returns one
/// report per op kind.
pub fn gradient_suite<E: Element>(
    instances_per_op: usize,
    seed: u64,
) -> Result<Vec<GradCheckReport>> {
    use super::tape::{forward_op, OpKind, Tape};
    use rand::Rng;

    let kinds: &[(&str, OpKind)] = &[
        ("none", OpKind::None),
        ("skip", OpKind::Skip),
        ("conv1x1", OpKind::Conv1x1),
        ("conv3x3", OpKind::Conv3x3),
        ("avgpool3x3", OpKind::AvgPool3x3),
        ("relu", OpKind::Relu),
        ("batchnorm", OpKind::BatchNorm),
        ("linear", OpKind::Linear),
        ("global_avg_pool", OpKind::GlobalAvgPool),
    ];
    let mut reports = Vec::new();
    for &(name, kind) in kinds {
        let mut worst = 0.0f64;
        for i in 0..instances_per_op {
            let mut rng = crate::seeded::rng_for(seed, &format!("gradcheck/{name}/{i}"));
            let n = rng.gen_range(1..=3usize);
            let c = rng.gen_range(1..=3usize);
            let h = rng.gen_range(2..=4usize);
            let mut params = ParamSet::new();
            // keep values away from the relu kink relative to the fd step
            let mut draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let v: f64 = rng.gen_range(-1.0..1.0);
                E::from_f64(v + 0.25 * v.signum())
            };
            let x_shape: Vec<usize> = if kind == OpKind::Linear {
                vec![n, c * h]
            } else {
                vec![n, c, h, h]
            };
            let x = Tensor::from_fn(&x_shape, |_| draw(&mut rng));
            params.insert("x", super::ParamTag::Backbone, x)?;
            let keys: Vec<&str> = match kind {
                OpKind::Conv1x1 | OpKind::Conv3x3 => {
                    let k = if kind == OpKind::Conv3x3 { 3 } else { 1 };
                    let co = rng.gen_range(1..=3usize);
                    params.insert(
                        "w",
                        super::ParamTag::Backbone,
                        Tensor::from_fn(&[co, c, k, k], |_| draw(&mut rng)),
                    )?;
                    params.insert(
                        "b",
                        super::ParamTag::Backbone,
                        Tensor::from_fn(&[co], |_| draw(&mut rng)),
                    )?;
                    vec!["w", "b"]
                }
                OpKind::BatchNorm => {
                    params.insert(
                        "g",
                        super::ParamTag::Backbone,
                        Tensor::from_fn(&[c], |_| draw(&mut rng)),
                    )?;
                    params.insert(
                        "b",
                        super::ParamTag::Backbone,
                        Tensor::from_fn(&[c], |_| draw(&mut rng)),
                    )?;
                    vec!["g", "b"]
                }
                OpKind::Linear => {
                    let classes = rng.gen_range(2..=4usize);
                    params.insert(
                        "w",
                        super::ParamTag::Classifier,
                        Tensor::from_fn(&[classes, c * h], |_| draw(&mut rng)),
                    )?;
                    params.insert(
                        "b",
                        super::ParamTag::Classifier,
                        Tensor::from_fn(&[classes], |_| draw(&mut rng)),
                    )?;
                    vec!["w", "b"]
                }
                _ => vec![],
            };
            // random linear functional of the output makes the scalar loss
            // sensitive to every output element
            let probe_seed: u64 = rng.gen();
            let run = |ps: &ParamSet<E>| -> Result<(Tape<E>, super::tape::ValueId)> {
                let mut tape = Tape::new(ps);
                let x = tape.param(ps, "x")?;
                let out = forward_op(&mut tape, kind, x, ps, &keys)?;
                let shape = tape.value(out).shape().to_vec();
                let mut prng = crate::seeded::rng_for(probe_seed, "probe");
                let probe = Tensor::from_fn(&shape, |_| E::from_f64(prng.gen_range(-1.0..1.0)));
                let probe = tape.constant(probe);
                let prod = tape.mul(out, probe)?;
                let loss = tape.sum(prod);
                Ok((tape, loss))
            };
            let (tape, loss) = run(&params)?;
            let analytic = tape.backward(loss, &params)?;
            let fd = finite_diff_grad(
                |ps: &ParamSet<E>| {
                    let (tape, loss) = run(ps)?;
                    Ok(tape.value(loss).item())
                },
                &params,
                default_eps::<E>(),
            )?;
            worst = worst.max(max_rel_err(&analytic.grads, &fd));
        }
        reports.push(GradCheckReport {
            op: name.to_string(),
            instances: instances_per_op,
            worst,
        });
    }
    // stride-2 conv (the reduction path) and the weighted cross-entropy head
    reports.push(conv_stride2_check::<E>(instances_per_op, seed)?);
    reports.push(cross_entropy_check::<E>(instances_per_op, seed)?);
    Ok(reports)
}

fn conv_stride2_check<E: Element>(instances: usize, seed: u64) -> Result<GradCheckReport> {
    use super::tape::Tape;
    use rand::Rng;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = crate::seeded::rng_for(seed, &format!("gradcheck/conv3x3s2/{i}"));
        let (n, ci, co, h) = (2usize, 2usize, 2usize, 4usize);
        let mut params = ParamSet::new();
        params.insert(
            "x",
            super::ParamTag::Backbone,
            Tensor::from_fn(&[n, ci, h, h], |_| E::from_f64(rng.gen_range(-1.0..1.0))),
        )?;
        params.insert(
            "w",
            super::ParamTag::Backbone,
            Tensor::from_fn(&[co, ci, 3, 3], |_| E::from_f64(rng.gen_range(-1.0..1.0))),
        )?;
        let probe_seed: u64 = rng.gen();
        let run = |ps: &ParamSet<E>| -> Result<(Tape<E>, super::tape::ValueId)> {
            let mut tape = Tape::new(ps);
            let x = tape.param(ps, "x")?;
            let w = tape.param(ps, "w")?;
            let out = tape.conv2d(x, w, None, 2, 1)?;
            let shape = tape.value(out).shape().to_vec();
            let mut prng = crate::seeded::rng_for(probe_seed, "probe");
            let probe = Tensor::from_fn(&shape, |_| E::from_f64(prng.gen_range(-1.0..1.0)));
            let probe = tape.constant(probe);
            let prod = tape.mul(out, probe)?;
            let loss = tape.sum(prod);
            Ok((tape, loss))
        };
        let (tape, loss) = run(&params)?;
        let analytic = tape.backward(loss, &params)?;
        let fd = finite_diff_grad(
            |ps: &ParamSet<E>| {
                let (tape, loss) = run(ps)?;
                Ok(tape.value(loss).item())
            },
            &params,
            default_eps::<E>(),
        )?;
        worst = worst.max(max_rel_err(&analytic.grads, &fd));
    }
    Ok(GradCheckReport {
        op: "conv3x3/stride2".into(),
        instances,
        worst,
    })
}

fn cross_entropy_check<E: Element>(instances: usize, seed: u64) -> Result<GradCheckReport> {
    use super::tape::Tape;
    use rand::Rng;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = crate::seeded::rng_for(seed, &format!("gradcheck/xent/{i}"));
        let (batch, classes) = (rng.gen_range(2..=8usize), rng.gen_range(2..=4usize));
        let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let weights: Vec<E> = (0..classes)
            .map(|_| E::from_f64(rng.gen_range(0.2..2.0)))
            .collect();
        let mut params = ParamSet::new();
        params.insert(
            "logits",
            super::ParamTag::Classifier,
            Tensor::from_fn(&[batch, classes], |_| E::from_f64(rng.gen_range(-2.0..2.0))),
        )?;
        let run = |ps: &ParamSet<E>| -> Result<(Tape<E>, super::tape::ValueId)> {
            let mut tape = Tape::new(ps);
            let l = tape.param(ps, "logits")?;
            let loss = tape.weighted_cross_entropy(l, &labels, &weights)?;
            Ok((tape, loss))
        };
        let (tape, loss) = run(&params)?;
        let analytic = tape.backward(loss, &params)?;
        let fd = finite_diff_grad(
            |ps: &ParamSet<E>| {
                let (tape, loss) = run(ps)?;
                Ok(tape.value(loss).item())
            },
            &params,
            default_eps::<E>(),
        )?;
        worst = worst.max(max_rel_err(&analytic.grads, &fd));
    }
    Ok(GradCheckReport {
        op: "weighted_cross_entropy".into(),
        instances,
        worst,
    })
}
