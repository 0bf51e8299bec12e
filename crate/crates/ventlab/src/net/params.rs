//! Flat named parameter storage.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::net::config::ModelConfig;
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
pub struct ParamLayout {
    pub entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    pub total: usize,
}

impl ParamLayout {
    pub fn of(cfg: &ModelConfig) -> Arc<ParamLayout> {
        let h = cfg.hidden;
        let mut entries: Vec<(String, usize, usize)> = Vec::new();
        entries.push(("embed.w".into(), cfg.state_dim, h));
        entries.push(("embed.b".into(), 1, h));
        for l in 0..cfg.n_layers {
            for wn in ["wq", "wk", "wv", "wo"] {
                entries.push((format!("enc{l}.{wn}"), h, h));
                entries.push((format!("enc{l}.{}", wn.replace('w', "b")), 1, h));
            }
            entries.push((format!("enc{l}.ln1.g"), 1, h));
            entries.push((format!("enc{l}.ln1.b"), 1, h));
            entries.push((format!("enc{l}.ff.w1"), h, cfg.ff_hidden));
            entries.push((format!("enc{l}.ff.b1"), 1, cfg.ff_hidden));
            entries.push((format!("enc{l}.ff.w2"), cfg.ff_hidden, h));
            entries.push((format!("enc{l}.ff.b2"), 1, h));
            entries.push((format!("enc{l}.ln2.g"), 1, h));
            entries.push((format!("enc{l}.ln2.b"), 1, h));
        }
        entries.push(("qhead.w1".into(), 2 * h, cfg.mlp_hidden));
        entries.push(("qhead.b1".into(), 1, cfg.mlp_hidden));
        entries.push(("qhead.w2".into(), cfg.mlp_hidden, cfg.n_actions));
        entries.push(("qhead.b2".into(), 1, cfg.n_actions));
        entries.push(("unc.w".into(), h, 1));
        entries.push(("unc.b".into(), 1, 1));

        let mut offset = 0;
        let mut out = Vec::with_capacity(entries.len());
        let mut index = HashMap::new();
        for (name, rows, cols) in entries {
            index.insert(name.clone(), out.len());
            out.push(ParamEntry { name, offset, rows, cols });
            offset += rows * cols;
        }
        Arc::new(ParamLayout { entries: out, index, total: offset })
    }

    pub fn entry(&self, name: &str) -> &ParamEntry {
        &self.entries[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    /// Entry containing a flat coordinate, for diagnostics.
    pub fn entry_at(&self, coord: usize) -> &ParamEntry {
        self.entries
            .iter()
            .find(|e| coord >= e.offset && coord < e.offset + e.len())
            .expect("coordinate within total length")
    }
}

/// All trainable weights as one flat vector plus its layout.
#[derive(Debug, Clone)]
pub struct ParamVec {
    pub cfg: ModelConfig,
    pub layout: Arc<ParamLayout>,
    pub data: Vec<f64>,
}

impl PartialEq for ParamVec {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.data == other.data
    }
}

impl ParamVec {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let layout = ParamLayout::of(cfg);
        let data = vec![0.0; layout.total];
        ParamVec { cfg: *cfg, layout, data }
    }

    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = rng_from(seed);
        let entries = p.layout.entries.clone();
        for e in &entries {
            let slice = &mut p.data[e.offset..e.offset + e.len()];
            if e.name.ends_with(".g") {
                slice.fill(1.0);
            } else if e.rows > 1 {
                let limit = (6.0 / (e.rows + e.cols) as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
            }
            // Bias rows stay zero.
        }
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        let e = self.layout.entry(name);
        ArrayView2::from_shape((e.rows, e.cols), &self.data[e.offset..e.offset + e.len()])
            .expect("layout shape")
    }

    pub fn mat_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let e = self.layout.entry(name).clone();
        ArrayViewMut2::from_shape((e.rows, e.cols), &mut self.data[e.offset..e.offset + e.len()])
            .expect("layout shape")
    }

    /// View of a (1, n) entry as a vector.
    pub fn row(&self, name: &str) -> ArrayView1<'_, f64> {
        let e = self.layout.entry(name);
        ArrayView1::from_shape(e.cols, &self.data[e.offset..e.offset + e.len()]).expect("layout")
    }

    pub fn scalar(&self, name: &str) -> f64 {
        let e = self.layout.entry(name);
        self.data[e.offset]
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Name of the first entry holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        for e in &self.layout.entries {
            if self.data[e.offset..e.offset + e.len()].iter().any(|v| !v.is_finite()) {
                return Some(&e.name);
            }
        }
        None
    }

    pub fn check_same_shape(&self, other: &ParamVec) -> Result<()> {
        if self.cfg != other.cfg || self.data.len() != other.data.len() {
            return Err(Error::Contract(
                "parameter vectors have mismatched layouts".into(),
            ));
        }
        Ok(())
    }
}
