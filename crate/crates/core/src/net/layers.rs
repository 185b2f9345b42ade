//! Layer kernels with hand-written backward passes. Activations are laid out
//! `[batch, channels, length]`; dense inputs are `[batch, features]`.

use super::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

/// `C = A * B + beta * C` for row-major slices addressed by explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the assertions above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub struct ConvCache {
    /// im2col buffers, `[batch][channels * kernel][length]`.
    cols: Vec<f64>,
    batch: usize,
    channels: usize,
    kernel: usize,
    length: usize,
}

fn pad_left(kernel: usize) -> usize {
    (kernel - 1) / 2
}

/// Same-padded 1-D convolution: `y[b,f,t] = bias[f] + sum_{c,k} w[f,c,k] x[b,c,t+k-pl]`
/// with `pl = (K-1)/2` and zero padding.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, bias: &Tensor) -> (Tensor, ConvCache) {
    let (bsz, ch, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (f, k) = (w.dim(0), w.dim(2));
    debug_assert_eq!(w.dim(1), ch);
    let ck = ch * k;
    let pl = pad_left(k);
    let mut cols = vec![0.0; bsz * ck * len];
    let xd = x.data();
    for b in 0..bsz {
        for c in 0..ch {
            let row = &xd[(b * ch + c) * len..(b * ch + c + 1) * len];
            for kk in 0..k {
                let dst = &mut cols[(b * ck + c * k + kk) * len..(b * ck + c * k + kk + 1) * len];
                // dst[t] = row[t + kk - pl]
                let lo = pl.saturating_sub(kk);
                let hi = (len + pl).saturating_sub(kk).min(len);
                if lo < hi {
                    dst[lo..hi].copy_from_slice(&row[lo + kk - pl..hi + kk - pl]);
                }
            }
        }
    }
    let mut y = Tensor::zeros(&[bsz, f, len]);
    let yd = y.data_mut();
    for b in 0..bsz {
        let out = &mut yd[b * f * len..(b + 1) * f * len];
        gemm(f, ck, len, w.data(), ck, 1, &cols[b * ck * len..(b + 1) * ck * len], len, 1, 0.0, out);
        for (fi, chunk) in out.chunks_mut(len).enumerate() {
            let bv = bias.data()[fi];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    let cache = ConvCache {
        cols,
        batch: bsz,
        channels: ch,
        kernel: k,
        length: len,
    };
    (y, cache)
}

/// Accumulates into `dw`/`db`; returns the input gradient when asked.
pub fn conv1d_backward(dy: &Tensor, w: &Tensor, cache: &ConvCache, dw: &mut Tensor, db: &mut Tensor, need_dx: bool) -> Option<Tensor> {
    let ConvCache {
        batch: bsz,
        channels: ch,
        kernel: k,
        length: len,
        ..
    } = *cache;
    let f = w.dim(0);
    let ck = ch * k;
    let dyd = dy.data();
    for b in 0..bsz {
        let g = &dyd[b * f * len..(b + 1) * f * len];
        let cols = &cache.cols[b * ck * len..(b + 1) * ck * len];
        gemm(f, len, ck, g, len, 1, cols, 1, len, 1.0, dw.data_mut());
        for (fi, chunk) in g.chunks(len).enumerate() {
            db.data_mut()[fi] += chunk.iter().sum::<f64>();
        }
    }
    if !need_dx {
        return None;
    }
    let pl = pad_left(k);
    let mut dx = Tensor::zeros(&[bsz, ch, len]);
    let mut dcols = vec![0.0; ck * len];
    for b in 0..bsz {
        let g = &dyd[b * f * len..(b + 1) * f * len];
        gemm(ck, f, len, w.data(), 1, ck, g, len, 1, 0.0, &mut dcols);
        let dxd = dx.data_mut();
        for c in 0..ch {
            let row = &mut dxd[(b * ch + c) * len..(b * ch + c + 1) * len];
            for kk in 0..k {
                let src = &dcols[(c * k + kk) * len..(c * k + kk + 1) * len];
                let lo = pl.saturating_sub(kk);
                let hi = (len + pl).saturating_sub(kk).min(len);
                for t in lo..hi {
                    row[t + kk - pl] += src[t];
                }
            }
        }
    }
    Some(dx)
}

pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch statistics were used (training mode).
    batch_stats: bool,
}

/// Per-channel statistics of a training batch, `(mean, biased variance)`.
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Batch normalization over batch and time. With `running = Some((mean, var))`
/// the given statistics are used (inference mode); otherwise the batch's own
/// statistics are used and returned.
pub fn batchnorm_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: Option<(&Tensor, &Tensor)>,
) -> (Tensor, BnCache, Option<BatchStats>) {
    let (bsz, ch, len) = (x.dim(0), x.dim(1), x.dim(2));
    let xd = x.data();
    let n = (bsz * len) as f64;
    let (mean, var, stats) = match running {
        Some((m, v)) => (m.data().to_vec(), v.data().to_vec(), false),
        None => {
            let mut mean = vec![0.0; ch];
            let mut var = vec![0.0; ch];
            for c in 0..ch {
                let mut s = 0.0;
                for b in 0..bsz {
                    s += xd[(b * ch + c) * len..(b * ch + c + 1) * len].iter().sum::<f64>();
                }
                let m = s / n;
                let mut ss = 0.0;
                for b in 0..bsz {
                    ss += xd[(b * ch + c) * len..(b * ch + c + 1) * len]
                        .iter()
                        .map(|v| (v - m) * (v - m))
                        .sum::<f64>();
                }
                mean[c] = m;
                var[c] = ss / n;
            }
            (mean, var, true)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; xd.len()];
    let mut y = Tensor::zeros(x.shape());
    let yd = y.data_mut();
    for b in 0..bsz {
        for c in 0..ch {
            let base = (b * ch + c) * len;
            let (g, bt) = (gamma.data()[c], beta.data()[c]);
            for t in base..base + len {
                let h = (xd[t] - mean[c]) * inv_std[c];
                xhat[t] = h;
                yd[t] = g * h + bt;
            }
        }
    }
    let batch = stats.then_some(BatchStats { mean, var });
    (
        y,
        BnCache {
            xhat,
            inv_std,
            batch_stats: stats,
        },
        batch,
    )
}

pub fn batchnorm_backward(dy: &Tensor, gamma: &Tensor, cache: &BnCache, dgamma: &mut Tensor, dbeta: &mut Tensor, need_dx: bool) -> Option<Tensor> {
    let (bsz, ch, len) = (dy.dim(0), dy.dim(1), dy.dim(2));
    let dyd = dy.data();
    let n = (bsz * len) as f64;
    let mut sum_dy = vec![0.0; ch];
    let mut sum_dy_xhat = vec![0.0; ch];
    for b in 0..bsz {
        for c in 0..ch {
            let base = (b * ch + c) * len;
            for t in base..base + len {
                sum_dy[c] += dyd[t];
                sum_dy_xhat[c] += dyd[t] * cache.xhat[t];
            }
        }
    }
    for c in 0..ch {
        dgamma.data_mut()[c] += sum_dy_xhat[c];
        dbeta.data_mut()[c] += sum_dy[c];
    }
    if !need_dx {
        return None;
    }
    let mut dx = Tensor::zeros(dy.shape());
    let dxd = dx.data_mut();
    for b in 0..bsz {
        for c in 0..ch {
            let base = (b * ch + c) * len;
            let scale = gamma.data()[c] * cache.inv_std[c];
            if cache.batch_stats {
                let (m1, m2) = (sum_dy[c] / n, sum_dy_xhat[c] / n);
                for t in base..base + len {
                    dxd[t] = scale * (dyd[t] - m1 - cache.xhat[t] * m2);
                }
            } else {
                for t in base..base + len {
                    dxd[t] = scale * dyd[t];
                }
            }
        }
    }
    Some(dx)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// `y` is the forward output.
pub fn relu_backward(dy: &Tensor, y: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (g, &o) in dx.data_mut().iter_mut().zip(y.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// Mean over time: `[B, C, L] -> [B, C]`.
pub fn gap_forward(x: &Tensor) -> Tensor {
    let (bsz, ch, len) = (x.dim(0), x.dim(1), x.dim(2));
    let data = x.data().chunks(len).map(|row| row.iter().sum::<f64>() / len as f64).collect();
    Tensor::new(vec![bsz, ch], data).expect("gap shape")
}

pub fn gap_backward(dy: &Tensor, len: usize) -> Tensor {
    let (bsz, ch) = (dy.dim(0), dy.dim(1));
    let mut dx = Tensor::zeros(&[bsz, ch, len]);
    for (row, &g) in dx.data_mut().chunks_mut(len).zip(dy.data()) {
        row.fill(g / len as f64);
    }
    dx
}

/// `y = x w^T + b` with `x: [B, in]`, `w: [out, in]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, bias: &Tensor) -> Tensor {
    let (bsz, n_in, n_out) = (x.dim(0), x.dim(1), w.dim(0));
    debug_assert_eq!(w.dim(1), n_in);
    let mut y = Tensor::zeros(&[bsz, n_out]);
    gemm(bsz, n_in, n_out, x.data(), n_in, 1, w.data(), 1, n_in, 0.0, y.data_mut());
    for row in y.data_mut().chunks_mut(n_out) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    y
}

pub fn dense_backward(dy: &Tensor, x: &Tensor, w: &Tensor, dw: &mut Tensor, db: &mut Tensor, need_dx: bool) -> Option<Tensor> {
    let (bsz, n_in, n_out) = (x.dim(0), x.dim(1), w.dim(0));
    // dw[o, i] += sum_b dy[b, o] x[b, i]
    gemm(n_out, bsz, n_in, dy.data(), 1, n_out, x.data(), n_in, 1, 1.0, dw.data_mut());
    for row in dy.data().chunks(n_out) {
        for (d, g) in db.data_mut().iter_mut().zip(row) {
            *d += g;
        }
    }
    need_dx.then(|| {
        let mut dx = Tensor::zeros(&[bsz, n_in]);
        gemm(bsz, n_out, n_in, dy.data(), n_out, 1, w.data(), n_in, 1, 0.0, dx.data_mut());
        dx
    })
}

/// Softmax over the first `width` entries of `logits`; the rest are exactly 0.
pub fn masked_softmax(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    let max = logits[..width].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &l) in out[..width].iter_mut().zip(&logits[..width]) {
        *o = (l - max).exp();
        z += *o;
    }
    out[..width].iter_mut().for_each(|o| *o /= z);
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    masked_softmax(logits, logits.len())
}
