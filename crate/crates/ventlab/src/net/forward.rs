//! Batched forward pass.
//!
//! Layout convention: a batch of B windows of length Lw (Lw <= configured L)
//! flattens to (B*Lw, .) for all dense stages; attention runs per sample and
//! head on (Lw, Lw) score matrices. Everything is f64 and deterministic.

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::net::params::ParamVec;

pub(crate) const LN_EPS: f64 = 1e-10;

/// Fixed sinusoidal position table, one row per window position.
pub fn positional_encoding(lw: usize, h: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((lw, h));
    for pos in 0..lw {
        for j in 0..h {
            let exponent = 2.0 * ((j / 2) as f64) / h as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            pe[[pos, j]] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub x_in: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub attn: Array4<f64>,
    pub ctx: Array2<f64>,
    pub ln1_xhat: Array2<f64>,
    pub ln1_inv_std: Array1<f64>,
    pub x1: Array2<f64>,
    pub ff_pre: Array2<f64>,
    pub ff_relu: Array2<f64>,
    pub ln2_xhat: Array2<f64>,
    pub ln2_inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub input_flat: Array2<f64>,
    pub layers: Vec<LayerCache>,
    pub phi: Array2<f64>,
    pub hq_pre: Array2<f64>,
    pub hq: Array2<f64>,
}

/// Outputs of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardBatch {
    pub batch: usize,
    pub lw: usize,
    /// Final encoder states, (B, Lw, h).
    pub hidden: Array3<f64>,
    /// Last-row embedding per sample, (B, h).
    pub z: Array2<f64>,
    /// Across-step mean embedding per sample, (B, h).
    pub zbar: Array2<f64>,
    /// Action values, (B, |A|).
    pub q: Array2<f64>,
    /// Across-step population variance of the uncertainty head, (B,).
    pub u: Array1<f64>,
    pub(crate) cache: Option<ForwardCache>,
}

fn layer_norm(
    x: &Array2<f64>,
    gain: ndarray::ArrayView1<f64>,
    bias: ndarray::ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (n, h) = x.dim();
    let mut xhat = Array2::zeros((n, h));
    let mut inv_std = Array1::zeros(n);
    let mut out = Array2::zeros((n, h));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / h as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for j in 0..h {
            let xh = (row[j] - mean) * is;
            xhat[[i, j]] = xh;
            out[[i, j]] = gain[j] * xh + bias[j];
        }
    }
    (out, xhat, inv_std)
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn affine(x: &Array2<f64>, w: ArrayView2<f64>, b: ndarray::ArrayView1<f64>) -> Array2<f64> {
    x.dot(&w) + &b
}

/// Population variance of one row.
fn pop_var(row: ndarray::ArrayView1<f64>) -> f64 {
    let n = row.len() as f64;
    let mean = row.sum() / n;
    row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Runs the encoder and both heads over a batch of windows (B, Lw, d).
pub fn forward_batch(
    params: &ParamVec,
    states: ArrayView3<f64>,
    want_cache: bool,
) -> Result<ForwardBatch> {
    let cfg = &params.cfg;
    let (b, lw, d) = states.dim();
    if d != cfg.state_dim {
        return Err(Error::Contract(format!(
            "state dim {d} does not match model dim {}",
            cfg.state_dim
        )));
    }
    if lw == 0 || lw > cfg.window {
        return Err(Error::Contract(format!(
            "window length {lw} outside [1, {}]",
            cfg.window
        )));
    }
    if b == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let h = cfg.hidden;
    let nh = cfg.n_heads;
    let dk = cfg.head_dim();
    let bl = b * lw;

    let input_flat = Array2::from_shape_fn((bl, d), |(i, c)| states[[i / lw, i % lw, c]]);

    // Embedding plus positional encoding.
    let mut x = affine(&input_flat, params.mat("embed.w"), params.row("embed.b"));
    if cfg.use_positional {
        let pe = positional_encoding(lw, h);
        for i in 0..bl {
            let pos = i % lw;
            for j in 0..h {
                x[[i, j]] += pe[[pos, j]];
            }
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let x_in = x.clone();
        let q = affine(&x, params.mat(&format!("enc{l}.wq")), params.row(&format!("enc{l}.bq")));
        let k = affine(&x, params.mat(&format!("enc{l}.wk")), params.row(&format!("enc{l}.bk")));
        let v = affine(&x, params.mat(&format!("enc{l}.wv")), params.row(&format!("enc{l}.bv")));

        let mut attn = Array4::zeros((b, nh, lw, lw));
        let mut ctx = Array2::zeros((bl, h));
        let scale = 1.0 / (dk as f64).sqrt();
        for bi in 0..b {
            let rows = bi * lw..(bi + 1) * lw;
            for hd in 0..nh {
                let cols = hd * dk..(hd + 1) * dk;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);
                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                // Row softmax with max subtraction.
                for r in 0..lw {
                    let mut row = scores.row_mut(r);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for val in row.iter_mut() {
                        *val = (*val - max).exp();
                        sum += *val;
                    }
                    for val in row.iter_mut() {
                        *val /= sum;
                    }
                }
                let ctx_h = scores.dot(&vh);
                attn.slice_mut(s![bi, hd, .., ..]).assign(&scores);
                ctx.slice_mut(s![rows.clone(), cols]).assign(&ctx_h);
            }
        }
        let attn_out = affine(&ctx, params.mat(&format!("enc{l}.wo")), params.row(&format!("enc{l}.bo")));

        let r1 = &x_in + &attn_out;
        let (x1, ln1_xhat, ln1_inv_std) = layer_norm(
            &r1,
            params.row(&format!("enc{l}.ln1.g")),
            params.row(&format!("enc{l}.ln1.b")),
        );

        let ff_pre = affine(
            &x1,
            params.mat(&format!("enc{l}.ff.w1")),
            params.row(&format!("enc{l}.ff.b1")),
        );
        let ff_relu = relu(&ff_pre);
        let ff_out = affine(
            &ff_relu,
            params.mat(&format!("enc{l}.ff.w2")),
            params.row(&format!("enc{l}.ff.b2")),
        );

        let r2 = &x1 + &ff_out;
        let (x2, ln2_xhat, ln2_inv_std) = layer_norm(
            &r2,
            params.row(&format!("enc{l}.ln2.g")),
            params.row(&format!("enc{l}.ln2.b")),
        );

        layers.push(LayerCache {
            x_in,
            q,
            k,
            v,
            attn,
            ctx,
            ln1_xhat,
            ln1_inv_std,
            x1,
            ff_pre,
            ff_relu,
            ln2_xhat,
            ln2_inv_std,
        });
        x = x2;
    }

    // Heads.
    let hidden = Array3::from_shape_fn((b, lw, h), |(bi, j, c)| x[[bi * lw + j, c]]);
    let z = Array2::from_shape_fn((b, h), |(bi, c)| x[[bi * lw + lw - 1, c]]);
    let mut zbar = Array2::zeros((b, h));
    for bi in 0..b {
        for j in 0..lw {
            for c in 0..h {
                zbar[[bi, c]] += x[[bi * lw + j, c]] / lw as f64;
            }
        }
    }
    let mut phi = Array2::zeros((b, 2 * h));
    phi.slice_mut(s![.., 0..h]).assign(&z);
    phi.slice_mut(s![.., h..2 * h]).assign(&zbar);

    let hq_pre = affine(&phi, params.mat("qhead.w1"), params.row("qhead.b1"));
    let hq = relu(&hq_pre);
    let q_values = affine(&hq, params.mat("qhead.w2"), params.row("qhead.b2"));

    let unc_w = params.mat("unc.w");
    let unc_b = params.scalar("unc.b");
    let psi_flat = x.dot(&unc_w); // (BL, 1)
    let psi = Array2::from_shape_fn((b, lw), |(bi, j)| psi_flat[[bi * lw + j, 0]] + unc_b);
    let u = Array1::from_shape_fn(b, |bi| pop_var(psi.row(bi)));

    let cache = want_cache.then(|| ForwardCache {
        input_flat,
        layers,
        phi,
        hq_pre,
        hq,
    });
    Ok(ForwardBatch {
        batch: b,
        lw,
        hidden,
        z,
        zbar,
        q: q_values,
        u,
        cache,
    })
}

/// Forward over one window (Lw, d).
pub fn forward_one(params: &ParamVec, window: ArrayView2<f64>) -> Result<ForwardBatch> {
    let (lw, d) = window.dim();
    let states = window
        .to_owned()
        .into_shape_with_order((1, lw, d))
        .expect("reshape one window");
    forward_batch(params, states.view(), false)
}

/// Forward over the L-1 prefix of each window (the consistency-loss path).
pub fn forward_short(
    params: &ParamVec,
    states: ArrayView3<f64>,
    want_cache: bool,
) -> Result<ForwardBatch> {
    let (_, lw, _) = states.dim();
    if lw < 2 {
        return Err(Error::Contract(
            "short-path forward requires window length >= 2".into(),
        ));
    }
    forward_batch(params, states.slice(s![.., 0..lw - 1, ..]), want_cache)
}
