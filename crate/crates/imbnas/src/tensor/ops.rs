//! Raw forward/backward kernels shared by the tape and the eval-mode paths.
//!
//! All kernels are plain nested loops over contiguous rows; each output
//! element accumulates in a fixed program order, so results are bit-identical
//! regardless of auto-vectorization width.

use super::{Element, Result, Tensor, TensorError};

fn shape_err(op: &str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op: op.to_string(),
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Output spatial size for a conv/pool window.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// 2D convolution, weight layout Cout x Cin x Kh x Kw, optional bias.
pub fn conv2d_fwd<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<E>> {
    let (n, cin, h, wd) = x.dims4()?;
    let ws = w.shape();
    if ws.len() != 4 || ws[1] != cin {
        return Err(shape_err("conv2d", x.shape(), ws));
    }
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(shape_err("conv2d bias", &[cout], b.shape()));
        }
    }
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(wd, kw, stride, pad);
    let mut out = Tensor::zeros(&[n, cout, ho, wo]);
    let xd = x.data();
    let wdat = w.data();
    let od = out.data_mut();
    for in_ in 0..n {
        for co in 0..cout {
            let obase = ((in_ * cout) + co) * ho * wo;
            if let Some(b) = bias {
                let bv = b.data()[co];
                for v in od[obase..obase + ho * wo].iter_mut() {
                    *v = bv;
                }
            }
            for ci in 0..cin {
                let xbase = ((in_ * cin) + ci) * h * wd;
                let wbase = ((co * cin) + ci) * kh * kw;
                for p in 0..kh {
                    for q in 0..kw {
                        let wgt = wdat[wbase + p * kw + q];
                        if wgt == E::zero() && kh * kw > 1 {
                            // still deterministic: skip adds of exact zero
                        }
                        for oy in 0..ho {
                            let iy = (oy * stride + p) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            // valid ox range so that ix = ox*stride + q - pad is in bounds
                            let (ox_lo, ox_hi) =
                                valid_range(wo, stride, q as isize - pad as isize, wd);
                            let orow = obase + oy * wo;
                            let xrow = xbase + iy as usize * wd;
                            let off = q as isize - pad as isize;
                            if stride == 1 {
                                let xstart = xrow + (ox_lo as isize + off) as usize;
                                let ob = &mut od[orow + ox_lo..orow + ox_hi];
                                let xb = &xd[xstart..xstart + (ox_hi - ox_lo)];
                                for (o, xv) in ob.iter_mut().zip(xb) {
                                    *o = *o + wgt * *xv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = (ox * stride) as isize + off;
                                    od[orow + ox] =
                                        od[orow + ox] + wgt * xd[xrow + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Range of output positions whose input index `o*stride + off` lies in `[0, limit)`.
fn valid_range(out_len: usize, stride: usize, off: isize, limit: usize) -> (usize, usize) {
    let mut lo = 0usize;
    if off < 0 {
        lo = ((-off) as usize + stride - 1) / stride;
    }
    let max_i = limit as isize - 1 - off;
    if max_i < 0 {
        return (0, 0);
    }
    let hi = (max_i as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Gradients of conv2d w.r.t. input, weight, and bias.
pub fn conv2d_bwd<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    has_bias: bool,
    stride: usize,
    pad: usize,
    gout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Option<Tensor<E>>)> {
    let (n, cin, h, wd) = x.dims4()?;
    let ws = w.shape();
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    let (gn, gco, ho, wo) = gout.dims4()?;
    if gn != n || gco != cout {
        return Err(shape_err("conv2d backward", gout.shape(), &[n, cout]));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(ws);
    let mut gb = if has_bias {
        Some(Tensor::zeros(&[cout]))
    } else {
        None
    };
    let xd = x.data();
    let wdat = w.data();
    let gd = gout.data();
    {
        let gxd = gx.data_mut();
        for in_ in 0..n {
            for co in 0..cout {
                let obase = ((in_ * cout) + co) * ho * wo;
                for ci in 0..cin {
                    let xbase = ((in_ * cin) + ci) * h * wd;
                    let wbase = ((co * cin) + ci) * kh * kw;
                    for p in 0..kh {
                        for q in 0..kw {
                            let wgt = wdat[wbase + p * kw + q];
                            let off = q as isize - pad as isize;
                            for oy in 0..ho {
                                let iy = (oy * stride + p) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let (ox_lo, ox_hi) = valid_range(wo, stride, off, wd);
                                let orow = obase + oy * wo;
                                let xrow = xbase + iy as usize * wd;
                                for ox in ox_lo..ox_hi {
                                    let ix = ((ox * stride) as isize + off) as usize;
                                    gxd[xrow + ix] = gxd[xrow + ix] + wgt * gd[orow + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    {
        let gwd = gw.data_mut();
        for co in 0..cout {
            for ci in 0..cin {
                let wbase = ((co * cin) + ci) * kh * kw;
                for p in 0..kh {
                    for q in 0..kw {
                        let off = q as isize - pad as isize;
                        let mut acc = E::zero();
                        for in_ in 0..n {
                            let obase = ((in_ * cout) + co) * ho * wo;
                            let xbase = ((in_ * cin) + ci) * h * wd;
                            for oy in 0..ho {
                                let iy = (oy * stride + p) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let (ox_lo, ox_hi) = valid_range(wo, stride, off, wd);
                                let orow = obase + oy * wo;
                                let xrow = xbase + iy as usize * wd;
                                if stride == 1 {
                                    let xstart = xrow + (ox_lo as isize + off) as usize;
                                    let gb_ = &gd[orow + ox_lo..orow + ox_hi];
                                    let xb = &xd[xstart..xstart + (ox_hi - ox_lo)];
                                    for (g, xv) in gb_.iter().zip(xb) {
                                        acc = acc + *g * *xv;
                                    }
                                } else {
                                    for ox in ox_lo..ox_hi {
                                        let ix = ((ox * stride) as isize + off) as usize;
                                        acc = acc + gd[orow + ox] * xd[xrow + ix];
                                    }
                                }
                            }
                        }
                        gwd[wbase + p * kw + q] = acc;
                    }
                }
            }
        }
    }
    if let Some(gbt) = gb.as_mut() {
        let gbd = gbt.data_mut();
        for in_ in 0..n {
            for co in 0..cout {
                let obase = ((in_ * cout) + co) * ho * wo;
                let mut acc = E::zero();
                for v in &gd[obase..obase + ho * wo] {
                    acc = acc + *v;
                }
                gbd[co] = gbd[co] + acc;
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Average pooling; padded positions are excluded from the divisor, so
/// pooling an all-ones plane yields all ones.
pub fn avgpool_fwd<E: Element>(
    x: &Tensor<E>,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<E>> {
    let (n, c, h, w) = x.dims4()?;
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let mut out = Tensor::zeros(&[n, c, ho, wo]);
    let xd = x.data();
    let od = out.data_mut();
    for in_ in 0..n {
        for ci in 0..c {
            let xbase = ((in_ * c) + ci) * h * w;
            let obase = ((in_ * c) + ci) * ho * wo;
            for oy in 0..ho {
                for ox in 0..wo {
                    let y0 = oy * stride;
                    let x0 = ox * stride;
                    let mut acc = E::zero();
                    let mut cnt = 0usize;
                    for p in 0..k {
                        let iy = (y0 + p) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for q in 0..k {
                            let ix = (x0 + q) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc + xd[xbase + iy as usize * w + ix as usize];
                            cnt += 1;
                        }
                    }
                    od[obase + oy * wo + ox] = acc / E::from_f64(cnt as f64);
                }
            }
        }
    }
    Ok(out)
}

pub fn avgpool_bwd<E: Element>(
    xshape: &[usize],
    k: usize,
    stride: usize,
    pad: usize,
    gout: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (n, c, h, w) = (xshape[0], xshape[1], xshape[2], xshape[3]);
    let (_, _, ho, wo) = gout.dims4()?;
    let mut gx = Tensor::zeros(xshape);
    let gd = gout.data();
    let gxd = gx.data_mut();
    for in_ in 0..n {
        for ci in 0..c {
            let xbase = ((in_ * c) + ci) * h * w;
            let obase = ((in_ * c) + ci) * ho * wo;
            for oy in 0..ho {
                for ox in 0..wo {
                    let y0 = oy * stride;
                    let x0 = ox * stride;
                    let mut cnt = 0usize;
                    for p in 0..k {
                        let iy = (y0 + p) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for q in 0..k {
                            let ix = (x0 + q) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                cnt += 1;
                            }
                        }
                    }
                    let share = gd[obase + oy * wo + ox] / E::from_f64(cnt as f64);
                    for p in 0..k {
                        let iy = (y0 + p) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for q in 0..k {
                            let ix = (x0 + q) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = xbase + iy as usize * w + ix as usize;
                            gxd[idx] = gxd[idx] + share;
                        }
                    }
                }
            }
        }
    }
    Ok(gx)
}

pub fn relu_fwd<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < E::zero() {
            *v = E::zero();
        }
    }
    out
}

pub fn relu_bwd<E: Element>(x: &Tensor<E>, gout: &Tensor<E>) -> Tensor<E> {
    let mut gx = gout.clone();
    for (g, xv) in gx.data_mut().iter_mut().zip(x.data()) {
        if *xv <= E::zero() {
            *g = E::zero();
        }
    }
    gx
}

/// Per-channel biased mean and variance over the N, H, W axes.
pub fn bn_batch_stats<E: Element>(x: &Tensor<E>) -> Result<(Vec<E>, Vec<E>)> {
    let (n, c, h, w) = x.dims4()?;
    let m = (n * h * w) as f64;
    let xd = x.data();
    let mut mean = vec![E::zero(); c];
    let mut var = vec![E::zero(); c];
    for ci in 0..c {
        let mut acc = E::zero();
        for in_ in 0..n {
            let base = ((in_ * c) + ci) * h * w;
            for v in &xd[base..base + h * w] {
                acc = acc + *v;
            }
        }
        mean[ci] = acc / E::from_f64(m);
    }
    for ci in 0..c {
        let mu = mean[ci];
        let mut acc = E::zero();
        for in_ in 0..n {
            let base = ((in_ * c) + ci) * h * w;
            for v in &xd[base..base + h * w] {
                let d = *v - mu;
                acc = acc + d * d;
            }
        }
        var[ci] = acc / E::from_f64(m);
    }
    Ok((mean, var))
}

/// Normalize with the given per-channel statistics, then scale and shift.
pub fn bn_apply<E: Element>(
    x: &Tensor<E>,
    mean: &[E],
    invstd: &[E],
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (n, c, h, w) = x.dims4()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err("batchnorm scale/shift", &[c], gamma.shape()));
    }
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let od = out.data_mut();
    for in_ in 0..n {
        for ci in 0..c {
            let base = ((in_ * c) + ci) * h * w;
            let (mu, is, g, b) = (mean[ci], invstd[ci], gamma.data()[ci], beta.data()[ci]);
            for (o, xv) in od[base..base + h * w].iter_mut().zip(&xd[base..base + h * w]) {
                *o = g * ((*xv - mu) * is) + b;
            }
        }
    }
    Ok(out)
}

/// Full batch-norm backward through the batch statistics.
pub fn bn_bwd<E: Element>(
    x: &Tensor<E>,
    mean: &[E],
    invstd: &[E],
    gamma: &Tensor<E>,
    gout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let (n, c, h, w) = x.dims4()?;
    let m = E::from_f64((n * h * w) as f64);
    let xd = x.data();
    let gd = gout.data();
    let mut gx = Tensor::zeros(x.shape());
    let mut ggamma = Tensor::zeros(&[c]);
    let mut gbeta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let (mu, is) = (mean[ci], invstd[ci]);
        let mut sum_g = E::zero();
        let mut sum_gx = E::zero();
        for in_ in 0..n {
            let base = ((in_ * c) + ci) * h * w;
            for (xv, gv) in xd[base..base + h * w].iter().zip(&gd[base..base + h * w]) {
                let xhat = (*xv - mu) * is;
                sum_g = sum_g + *gv;
                sum_gx = sum_gx + *gv * xhat;
            }
        }
        ggamma.data_mut()[ci] = sum_gx;
        gbeta.data_mut()[ci] = sum_g;
        let g = gamma.data()[ci];
        let mean_g = sum_g / m;
        let mean_gx = sum_gx / m;
        let gxd = gx.data_mut();
        for in_ in 0..n {
            let base = ((in_ * c) + ci) * h * w;
            for i in base..base + h * w {
                let xhat = (xd[i] - mu) * is;
                gxd[i] = g * is * (gd[i] - mean_g - xhat * mean_gx);
            }
        }
    }
    Ok((gx, ggamma, gbeta))
}

/// Fully connected layer: x is N x D, w is C x D, bias length C.
pub fn linear_fwd<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    b: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (n, d) = x.dims2()?;
    let (c, d2) = w.dims2()?;
    if d != d2 || b.shape() != [c] {
        return Err(shape_err("linear", x.shape(), w.shape()));
    }
    let mut out = Tensor::zeros(&[n, c]);
    let xd = x.data();
    let wd = w.data();
    let od = out.data_mut();
    for i in 0..n {
        for j in 0..c {
            let mut acc = b.data()[j];
            let xrow = &xd[i * d..(i + 1) * d];
            let wrow = &wd[j * d..(j + 1) * d];
            for (xv, wv) in xrow.iter().zip(wrow) {
                acc = acc + *xv * *wv;
            }
            od[i * c + j] = acc;
        }
    }
    Ok(out)
}

pub fn linear_bwd<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    gout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let (n, d) = x.dims2()?;
    let (c, _) = w.dims2()?;
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    let mut gb = Tensor::zeros(&[c]);
    let xd = x.data();
    let wd = w.data();
    let gd = gout.data();
    {
        let gxd = gx.data_mut();
        for i in 0..n {
            for j in 0..c {
                let g = gd[i * c + j];
                let wrow = &wd[j * d..(j + 1) * d];
                let gxrow = &mut gxd[i * d..(i + 1) * d];
                for (gx_, wv) in gxrow.iter_mut().zip(wrow) {
                    *gx_ = *gx_ + g * *wv;
                }
            }
        }
    }
    {
        let gwd = gw.data_mut();
        for j in 0..c {
            for i in 0..n {
                let g = gd[i * c + j];
                let xrow = &xd[i * d..(i + 1) * d];
                let gwrow = &mut gwd[j * d..(j + 1) * d];
                for (gw_, xv) in gwrow.iter_mut().zip(xrow) {
                    *gw_ = *gw_ + g * *xv;
                }
            }
        }
    }
    {
        let gbd = gb.data_mut();
        for i in 0..n {
            for j in 0..c {
                gbd[j] = gbd[j] + gd[i * c + j];
            }
        }
    }
    Ok((gx, gw, gb))
}

/// Spatial mean per channel: N x C x H x W -> N x C.
pub fn gap_fwd<E: Element>(x: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = x.dims4()?;
    let scale = E::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros(&[n, c]);
    let xd = x.data();
    let od = out.data_mut();
    for in_ in 0..n {
        for ci in 0..c {
            let base = ((in_ * c) + ci) * h * w;
            let mut acc = E::zero();
            for v in &xd[base..base + h * w] {
                acc = acc + *v;
            }
            od[in_ * c + ci] = acc * scale;
        }
    }
    Ok(out)
}

pub fn gap_bwd<E: Element>(xshape: &[usize], gout: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w) = (xshape[0], xshape[1], xshape[2], xshape[3]);
    let scale = E::from_f64(1.0 / (h * w) as f64);
    let mut gx = Tensor::zeros(xshape);
    let gd = gout.data();
    let gxd = gx.data_mut();
    for in_ in 0..n {
        for ci in 0..c {
            let share = gd[in_ * c + ci] * scale;
            let base = ((in_ * c) + ci) * h * w;
            for v in gxd[base..base + h * w].iter_mut() {
                *v = *v + share;
            }
        }
    }
    Ok(gx)
}

/// Weighted softmax cross-entropy with weight-sum normalization:
/// loss = sum_i w_{y_i} * nll_i / sum_i w_{y_i}.
/// Returns (loss, probs, weight sum).
pub fn softmax_xent_fwd<E: Element>(
    logits: &Tensor<E>,
    labels: &[usize],
    class_weights: &[E],
) -> Result<(E, Tensor<E>, E)> {
    let (n, c) = logits.dims2()?;
    if n == 0 {
        return Err(TensorError::EmptyBatch);
    }
    if labels.len() != n {
        return Err(shape_err("cross_entropy labels", &[n], &[labels.len()]));
    }
    if class_weights.len() != c {
        return Err(shape_err("cross_entropy weights", &[c], &[class_weights.len()]));
    }
    let ld = logits.data();
    let mut probs = Tensor::zeros(&[n, c]);
    let pd = probs.data_mut();
    let mut num = E::zero();
    let mut wsum = E::zero();
    for i in 0..n {
        let y = labels[i];
        if y >= c {
            return Err(TensorError::BadLabel { label: y, classes: c });
        }
        let row = &ld[i * c..(i + 1) * c];
        let mut mx = row[0];
        for v in row {
            if *v > mx {
                mx = *v;
            }
        }
        let mut z = E::zero();
        for (j, v) in row.iter().enumerate() {
            let e = (*v - mx).exp();
            pd[i * c + j] = e;
            z = z + e;
        }
        for j in 0..c {
            pd[i * c + j] = pd[i * c + j] / z;
        }
        // nll = log(sum exp) - (logit_y - mx)
        let nll = z.ln() - (row[y] - mx);
        let w = class_weights[y];
        num = num + w * nll;
        wsum = wsum + w;
    }
    let loss = num / wsum;
    if !loss.is_finite() {
        return Err(TensorError::NonFinite("cross_entropy loss".into()));
    }
    Ok((loss, probs, wsum))
}

pub fn softmax_xent_bwd<E: Element>(
    probs: &Tensor<E>,
    labels: &[usize],
    class_weights: &[E],
    wsum: E,
    gloss: E,
) -> Result<Tensor<E>> {
    let (n, c) = probs.dims2()?;
    let mut glogits = Tensor::zeros(&[n, c]);
    let pd = probs.data();
    let gd = glogits.data_mut();
    for i in 0..n {
        let y = labels[i];
        let w = class_weights[y] / wsum * gloss;
        for j in 0..c {
            let indicator = if j == y { E::one() } else { E::zero() };
            gd[i * c + j] = w * (pd[i * c + j] - indicator);
        }
    }
    Ok(glogits)
}

/// Elementwise binary ops used by the tape.
pub fn ew_add<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.shape() != b.shape() {
        return Err(shape_err("add", a.shape(), b.shape()));
    }
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o = *o + *v;
    }
    Ok(out)
}

pub fn ew_mul<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    if a.shape() != b.shape() {
        return Err(shape_err("mul", a.shape(), b.shape()));
    }
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o = *o * *v;
    }
    Ok(out)
}

pub fn sum_all<E: Element>(x: &Tensor<E>) -> E {
    let mut acc = E::zero();
    for v in x.data() {
        acc = acc + *v;
    }
    acc
}
