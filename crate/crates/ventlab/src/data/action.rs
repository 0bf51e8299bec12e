//! Discrete ventilator action space and its integer codec.
//!
//! An action is a 5-tuple of set-points (PEEP, FiO2, RR, I:E, Pvent) on a
//! fixed grid of 6 x 8 x 7 x 5 x 8 = 13,440 cells. The codec packs the five
//! bin indices into a single mixed-radix integer so Q-heads and datasets can
//! address actions by one index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PEEP_GRID: [f64; 6] = [5.0, 8.0, 10.0, 12.0, 15.0, 18.0];
pub const FIO2_GRID: [f64; 8] = [0.30, 0.40, 0.45, 0.50, 0.55, 0.60, 0.80, 1.00];
pub const RR_GRID: [f64; 7] = [10.0, 12.0, 14.0, 16.0, 18.0, 20.0, 22.0];
/// Inspiratory:expiratory time ratios as (i, e) integer pairs.
pub const IE_GRID: [(u8, u8); 5] = [(1, 4), (1, 3), (1, 2), (1, 1), (2, 1)];
pub const PVENT_GRID: [f64; 8] = [5.0, 8.0, 10.0, 12.0, 15.0, 18.0, 22.0, 25.0];

pub const N_PEEP: usize = PEEP_GRID.len();
pub const N_FIO2: usize = FIO2_GRID.len();
pub const N_RR: usize = RR_GRID.len();
pub const N_IE: usize = IE_GRID.len();
pub const N_PVENT: usize = PVENT_GRID.len();
/// Total number of discrete actions (13,440).
pub const N_ACTIONS: usize = N_PEEP * N_FIO2 * N_RR * N_IE * N_PVENT;

/// Flat index into the 13,440-cell action grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionIndex(pub u16);

impl ActionIndex {
    pub fn new(i: usize) -> Result<Self> {
        if i >= N_ACTIONS {
            return Err(Error::Codec(format!(
                "action index {i} out of range [0, {N_ACTIONS})"
            )));
        }
        Ok(ActionIndex(i as u16))
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

/// Per-dimension bin indices of one action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionBins {
    pub peep: usize,
    pub fio2: usize,
    pub rr: usize,
    pub ie: usize,
    pub pvent: usize,
}

impl ActionBins {
    pub fn new(peep: usize, fio2: usize, rr: usize, ie: usize, pvent: usize) -> Result<Self> {
        let b = ActionBins { peep, fio2, rr, ie, pvent };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.peep >= N_PEEP
            || self.fio2 >= N_FIO2
            || self.rr >= N_RR
            || self.ie >= N_IE
            || self.pvent >= N_PVENT
        {
            return Err(Error::Codec(format!("bin indices out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<ActionIndex> {
        self.validate()?;
        let i = (((self.peep * N_FIO2 + self.fio2) * N_RR + self.rr) * N_IE + self.ie) * N_PVENT
            + self.pvent;
        Ok(ActionIndex(i as u16))
    }

    pub fn decode(index: ActionIndex) -> Result<Self> {
        if index.as_usize() >= N_ACTIONS {
            return Err(Error::Codec(format!(
                "action index {} out of range [0, {N_ACTIONS})",
                index.0
            )));
        }
        let mut i = index.as_usize();
        let pvent = i % N_PVENT;
        i /= N_PVENT;
        let ie = i % N_IE;
        i /= N_IE;
        let rr = i % N_RR;
        i /= N_RR;
        let fio2 = i % N_FIO2;
        i /= N_FIO2;
        let peep = i;
        Ok(ActionBins { peep, fio2, rr, ie, pvent })
    }

    pub fn action(&self) -> Action {
        Action {
            peep_cmh2o: PEEP_GRID[self.peep],
            fio2: FIO2_GRID[self.fio2],
            rr_per_min: RR_GRID[self.rr],
            ie: IE_GRID[self.ie],
            pvent_cmh2o: PVENT_GRID[self.pvent],
        }
    }
}

/// Ventilator set-points in engineering units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub peep_cmh2o: f64,
    pub fio2: f64,
    pub rr_per_min: f64,
    pub ie: (u8, u8),
    pub pvent_cmh2o: f64,
}

impl Action {
    /// Peak inspiratory pressure under pressure control: PEEP + Pvent.
    pub fn pip_cmh2o(&self) -> f64 {
        self.peep_cmh2o + self.pvent_cmh2o
    }

    /// Inspiratory fraction i/(i+e) of the breath cycle.
    pub fn insp_fraction(&self) -> f64 {
        let (i, e) = self.ie;
        f64::from(i) / f64::from(i + e)
    }

    pub fn bins(&self) -> Result<ActionBins> {
        fn find(grid: &[f64], v: f64, what: &str) -> Result<usize> {
            grid.iter()
                .position(|g| (g - v).abs() < 1e-9)
                .ok_or_else(|| Error::Codec(format!("{what} value {v} is off-grid")))
        }
        let ie = IE_GRID
            .iter()
            .position(|g| *g == self.ie)
            .ok_or_else(|| Error::Codec(format!("I:E value {:?} is off-grid", self.ie)))?;
        Ok(ActionBins {
            peep: find(&PEEP_GRID, self.peep_cmh2o, "PEEP")?,
            fio2: find(&FIO2_GRID, self.fio2, "FiO2")?,
            rr: find(&RR_GRID, self.rr_per_min, "RR")?,
            ie,
            pvent: find(&PVENT_GRID, self.pvent_cmh2o, "Pvent")?,
        })
    }
}

/// Encodes an on-grid action into its flat index.
pub fn encode_action(a: &Action) -> Result<ActionIndex> {
    a.bins()?.encode()
}

/// Decodes a flat index back into set-point values.
pub fn decode_action(i: ActionIndex) -> Result<Action> {
    Ok(ActionBins::decode(i)?.action())
}
