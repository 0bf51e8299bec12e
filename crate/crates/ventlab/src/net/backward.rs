//! Reverse pass mirroring `forward_batch` stage by stage.
//!
//! Takes dL/dQ for one cached forward pass and accumulates parameter
//! gradients. The uncertainty head is excluded on purpose: the adaptive
//! penalty coefficient treats u as a constant (stop-gradient), and u appears
//! nowhere else in any loss.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::net::forward::ForwardBatch;
use crate::net::params::ParamVec;

fn add_mat(grads: &mut ParamVec, name: &str, delta: &Array2<f64>) {
    let mut g = grads.mat_mut(name);
    g += delta;
}

fn add_row(grads: &mut ParamVec, name: &str, delta: &Array1<f64>) {
    let mut g = grads.mat_mut(name);
    let mut row = g.row_mut(0);
    row += delta;
}

fn colsum(x: &Array2<f64>) -> Array1<f64> {
    x.sum_axis(Axis(0))
}

/// d(layer-norm input) given d(output), plus gain/bias gradient pieces.
fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let (n, h) = dy.dim();
    let mut dx = Array2::zeros((n, h));
    let mut dgain = Array1::zeros(h);
    let mut dbias = Array1::zeros(h);
    for i in 0..n {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..h {
            let dyh = dy[[i, j]] * gain[j];
            m1 += dyh;
            m2 += dyh * xhat[[i, j]];
            dgain[j] += dy[[i, j]] * xhat[[i, j]];
            dbias[j] += dy[[i, j]];
        }
        m1 /= h as f64;
        m2 /= h as f64;
        for j in 0..h {
            let dyh = dy[[i, j]] * gain[j];
            dx[[i, j]] = inv_std[i] * (dyh - m1 - xhat[[i, j]] * m2);
        }
    }
    (dx, dgain, dbias)
}

fn relu_mask(pre: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let mut out = upstream.clone();
    out.zip_mut_with(pre, |g, p| {
        if *p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// Accumulates dL/dtheta into `grads` for one cached forward pass.
pub fn backward_batch(
    params: &ParamVec,
    fwd: &ForwardBatch,
    dq: ArrayView2<f64>,
    grads: &mut ParamVec,
) -> Result<()> {
    params.check_same_shape(grads)?;
    let cache = fwd
        .cache
        .as_ref()
        .ok_or_else(|| Error::Contract("backward requires a cached forward pass".into()))?;
    let cfg = &params.cfg;
    let (b, lw) = (fwd.batch, fwd.lw);
    let h = cfg.hidden;
    let nh = cfg.n_heads;
    let dk = cfg.head_dim();
    let bl = b * lw;
    if dq.dim() != (b, cfg.n_actions) {
        return Err(Error::Contract(format!(
            "dq shape {:?} does not match (batch, actions) = ({b}, {})",
            dq.dim(),
            cfg.n_actions
        )));
    }

    // Q-head.
    let dq = dq.to_owned();
    add_mat(grads, "qhead.w2", &cache.hq.t().dot(&dq));
    add_row(grads, "qhead.b2", &colsum(&dq));
    let dhq = dq.dot(&params.mat("qhead.w2").t());
    let dhq_pre = relu_mask(&cache.hq_pre, &dhq);
    add_mat(grads, "qhead.w1", &cache.phi.t().dot(&dhq_pre));
    add_row(grads, "qhead.b1", &colsum(&dhq_pre));
    let dphi = dhq_pre.dot(&params.mat("qhead.w1").t());

    // Split phi = [z || zbar] back onto the hidden rows.
    let mut dx = Array2::zeros((bl, h));
    for bi in 0..b {
        for c in 0..h {
            dx[[bi * lw + lw - 1, c]] += dphi[[bi, c]];
            let dzb = dphi[[bi, h + c]] / lw as f64;
            for j in 0..lw {
                dx[[bi * lw + j, c]] += dzb;
            }
        }
    }

    // Encoder blocks, in reverse.
    for l in (0..cfg.n_layers).rev() {
        let lc = &cache.layers[l];
        let g2 = params.row(&format!("enc{l}.ln2.g"));
        let (dr2, dg2, db2) = layer_norm_backward(&dx, &lc.ln2_xhat, &lc.ln2_inv_std, g2);
        add_row(grads, &format!("enc{l}.ln2.g"), &dg2);
        add_row(grads, &format!("enc{l}.ln2.b"), &db2);

        // r2 = x1 + ff(x1): both branches receive dr2.
        let mut dx1 = dr2.clone();
        let df2 = dr2;
        add_mat(grads, &format!("enc{l}.ff.w2"), &lc.ff_relu.t().dot(&df2));
        add_row(grads, &format!("enc{l}.ff.b2"), &colsum(&df2));
        let dfr = df2.dot(&params.mat(&format!("enc{l}.ff.w2")).t());
        let dfpre = relu_mask(&lc.ff_pre, &dfr);
        add_mat(grads, &format!("enc{l}.ff.w1"), &lc.x1.t().dot(&dfpre));
        add_row(grads, &format!("enc{l}.ff.b1"), &colsum(&dfpre));
        dx1 += &dfpre.dot(&params.mat(&format!("enc{l}.ff.w1")).t());

        let g1 = params.row(&format!("enc{l}.ln1.g"));
        let (dr1, dg1, db1) = layer_norm_backward(&dx1, &lc.ln1_xhat, &lc.ln1_inv_std, g1);
        add_row(grads, &format!("enc{l}.ln1.g"), &dg1);
        add_row(grads, &format!("enc{l}.ln1.b"), &db1);

        // r1 = x_in + attn(x_in): residual branch.
        let mut dx_new = dr1.clone();
        let dattn_out = dr1;
        add_mat(grads, &format!("enc{l}.wo"), &lc.ctx.t().dot(&dattn_out));
        add_row(grads, &format!("enc{l}.bo"), &colsum(&dattn_out));
        let dctx = dattn_out.dot(&params.mat(&format!("enc{l}.wo")).t());

        let mut dqm = Array2::zeros((bl, h));
        let mut dkm = Array2::zeros((bl, h));
        let mut dvm = Array2::zeros((bl, h));
        let scale = 1.0 / (dk as f64).sqrt();
        for bi in 0..b {
            let rows = bi * lw..(bi + 1) * lw;
            for hd in 0..nh {
                let cols = hd * dk..(hd + 1) * dk;
                let a = lc.attn.slice(s![bi, hd, .., ..]);
                let qh = lc.q.slice(s![rows.clone(), cols.clone()]);
                let kh = lc.k.slice(s![rows.clone(), cols.clone()]);
                let vh = lc.v.slice(s![rows.clone(), cols.clone()]);
                let dctx_h = dctx.slice(s![rows.clone(), cols.clone()]);

                let da = dctx_h.dot(&vh.t()); // (lw, lw)
                let dvh = a.t().dot(&dctx_h);
                // Softmax rows: ds = a * (da - <da, a>).
                let mut ds = Array2::zeros((lw, lw));
                for r in 0..lw {
                    let dot: f64 = (0..lw).map(|c| da[[r, c]] * a[[r, c]]).sum();
                    for c in 0..lw {
                        ds[[r, c]] = a[[r, c]] * (da[[r, c]] - dot);
                    }
                }
                let dqh = ds.dot(&kh) * scale;
                let dkh = ds.t().dot(&qh) * scale;
                dqm.slice_mut(s![rows.clone(), cols.clone()]).assign(&dqh);
                dkm.slice_mut(s![rows.clone(), cols.clone()]).assign(&dkh);
                dvm.slice_mut(s![rows.clone(), cols]).assign(&dvh);
            }
        }
        for (proj, dproj) in [("q", &dqm), ("k", &dkm), ("v", &dvm)] {
            add_mat(grads, &format!("enc{l}.w{proj}"), &lc.x_in.t().dot(dproj));
            add_row(grads, &format!("enc{l}.b{proj}"), &colsum(dproj));
            dx_new += &dproj.dot(&params.mat(&format!("enc{l}.w{proj}")).t());
        }
        dx = dx_new;
    }

    // Embedding.
    add_mat(grads, "embed.w", &cache.input_flat.t().dot(&dx));
    add_row(grads, "embed.b", &colsum(&dx));
    Ok(())
}
