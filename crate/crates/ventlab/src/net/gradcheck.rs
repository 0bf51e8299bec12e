//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::net::params::ParamVec;
use crate::rng::rng_from;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss_fn` on a random
/// coordinate subsample and returns the worst relative error.
///
/// Coordinates where both gradients are below 1e-7 in magnitude count as
/// exact. `loss_fn` must implement whatever stop-gradient semantics the
/// analytic gradient assumes (frozen TD targets, frozen penalty
/// coefficients).
pub fn grad_check<F>(
    params: &ParamVec,
    analytic: &ParamVec,
    loss_fn: F,
    step: f64,
    sample_fraction: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamVec) -> Result<f64>,
{
    params.check_same_shape(analytic)?;
    let total = params.len();
    let n = ((total as f64 * sample_fraction).ceil() as usize).clamp(1, total);
    let mut rng = rng_from(seed);
    let coords = sample(&mut rng, total, n);

    let mut work = params.clone();
    let mut max_rel = 0.0;
    let mut worst = String::new();
    for coord in coords.iter() {
        let original = work.data[coord];
        work.data[coord] = original + step;
        let up = loss_fn(&work)?;
        work.data[coord] = original - step;
        let down = loss_fn(&work)?;
        work.data[coord] = original;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numeric(format!(
                "loss became non-finite while perturbing {}",
                params.layout.entry_at(coord).name
            )));
        }
        let fd = (up - down) / (2.0 * step);
        let an = analytic.data[coord];
        let scale = an.abs().max(fd.abs());
        let rel = if scale < 1e-7 { 0.0 } else { (an - fd).abs() / scale };
        if rel > max_rel {
            max_rel = rel;
            worst = params.layout.entry_at(coord).name.clone();
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        worst_param: worst,
        checked: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward::forward_batch;
    use crate::net::{backward_batch, ModelConfig};
    use ndarray::{Array2, Array3};
    use rand::Rng;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            state_dim: 5,
            hidden: 8,
            window: 4,
            n_layers: 2,
            n_heads: 2,
            ff_hidden: 12,
            mlp_hidden: 10,
            n_actions: 9,
            use_positional: true,
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let cfg = tiny_cfg();
        let p = ParamVec::init(&cfg, 1);
        let zeros = ParamVec::zeros(&cfg);
        let report = grad_check(&p, &zeros, |_| Ok(42.0), 1e-5, 1.0, 7).unwrap();
        assert_eq!(report.max_rel_err, 0.0);
        assert_eq!(report.checked, p.len());
    }

    #[test]
    fn quadratic_probe_gradient_is_theta() {
        // L = ||theta||^2 / 2 has gradient exactly theta.
        let cfg = tiny_cfg();
        let p = ParamVec::init(&cfg, 2);
        let mut analytic = ParamVec::zeros(&cfg);
        analytic.data.copy_from_slice(&p.data);
        let report = grad_check(
            &p,
            &analytic,
            |q| Ok(0.5 * q.data.iter().map(|v| v * v).sum::<f64>()),
            1e-5,
            0.5,
            11,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }

    #[test]
    fn network_backward_matches_finite_differences_on_a_linear_readout() {
        // L = sum_{b,a} w[b,a] * Q[b,a] exercises the whole encoder backward.
        let cfg = tiny_cfg();
        let p = ParamVec::init(&cfg, 3);
        let mut rng = crate::rng::rng_from(23);
        let states =
            Array3::from_shape_fn((3, cfg.window, cfg.state_dim), |_| rng.gen_range(-1.0..1.0));
        let readout =
            Array2::from_shape_fn((3, cfg.n_actions), |_| rng.gen_range(-1.0..1.0));

        let fwd = forward_batch(&p, states.view(), true).unwrap();
        let mut analytic = ParamVec::zeros(&cfg);
        backward_batch(&p, &fwd, readout.view(), &mut analytic).unwrap();

        let report = grad_check(
            &p,
            &analytic,
            |q| {
                let out = forward_batch(q, states.view(), false)?;
                Ok((&out.q * &readout).sum())
            },
            1e-5,
            0.35,
            29,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }

    #[test]
    fn short_path_backward_also_matches() {
        let cfg = tiny_cfg();
        let p = ParamVec::init(&cfg, 4);
        let mut rng = crate::rng::rng_from(31);
        let states =
            Array3::from_shape_fn((2, cfg.window, cfg.state_dim), |_| rng.gen_range(-1.0..1.0));
        let readout =
            Array2::from_shape_fn((2, cfg.n_actions), |_| rng.gen_range(-1.0..1.0));

        let fwd = crate::net::forward_short(&p, states.view(), true).unwrap();
        let mut analytic = ParamVec::zeros(&cfg);
        backward_batch(&p, &fwd, readout.view(), &mut analytic).unwrap();

        let report = grad_check(
            &p,
            &analytic,
            |q| {
                let out = crate::net::forward_short(q, states.view(), false)?;
                Ok((&out.q * &readout).sum())
            },
            1e-5,
            0.35,
            37,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }
}
