//! Missing-value handling: forward fill within an episode, then k-NN on
//! z-scored observed channels for whatever gaps remain.

use crate::error::{Error, Result};

pub const N_CHANNELS: usize = crate::data::state::N_STATE_CHANNELS;

/// One episode's partially observed channel series.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSeries {
    pub rows: Vec<[Option<f64>; N_CHANNELS]>,
}

impl MaskedSeries {
    pub fn from_complete(rows: &[[f64; N_CHANNELS]]) -> Self {
        MaskedSeries {
            rows: rows.iter().map(|r| r.map(Some)).collect(),
        }
    }
}

fn forward_fill(series: &mut MaskedSeries) {
    for c in 0..N_CHANNELS {
        let mut last: Option<f64> = None;
        for row in series.rows.iter_mut() {
            match row[c] {
                Some(v) => last = Some(v),
                None => row[c] = last,
            }
        }
    }
}

/// Imputes every gap across a set of series.
///
/// Forward fill runs first, independently per series. Remaining gaps (for
/// example leading gaps) are filled with the mean of the `k` nearest fully
/// observed rows, where distance is Euclidean over the incomplete row's
/// observed channels after z-scoring with statistics of the observed values.
pub fn impute_missing(series: &mut [MaskedSeries], k: usize) -> Result<Vec<Vec<[f64; N_CHANNELS]>>> {
    if k == 0 {
        return Err(Error::Contract("k must be >= 1".into()));
    }
    // Per-channel observed statistics before any imputation.
    let mut count = [0usize; N_CHANNELS];
    let mut mean = [0.0f64; N_CHANNELS];
    let mut m2 = [0.0f64; N_CHANNELS];
    for s in series.iter() {
        for row in &s.rows {
            for c in 0..N_CHANNELS {
                if let Some(x) = row[c] {
                    count[c] += 1;
                    let delta = x - mean[c];
                    mean[c] += delta / count[c] as f64;
                    m2[c] += delta * (x - mean[c]);
                }
            }
        }
    }
    for c in 0..N_CHANNELS {
        if count[c] == 0 {
            return Err(Error::Data(format!(
                "channel {} has no observed values anywhere",
                crate::data::state::CHANNELS[c]
            )));
        }
    }
    let std: Vec<f64> = (0..N_CHANNELS)
        .map(|c| (m2[c] / count[c] as f64).sqrt().max(1e-9))
        .collect();

    for s in series.iter_mut() {
        forward_fill(s);
    }

    // Pool of complete rows after forward fill, used as neighbor candidates.
    let complete: Vec<[f64; N_CHANNELS]> = series
        .iter()
        .flat_map(|s| s.rows.iter())
        .filter_map(|row| {
            let mut out = [0.0; N_CHANNELS];
            for c in 0..N_CHANNELS {
                out[c] = row[c]?;
            }
            Some(out)
        })
        .collect();

    let mut result = Vec::with_capacity(series.len());
    for s in series.iter() {
        let mut rows_out = Vec::with_capacity(s.rows.len());
        for row in &s.rows {
            if row.iter().all(Option::is_some) {
                let mut out = [0.0; N_CHANNELS];
                for c in 0..N_CHANNELS {
                    out[c] = row[c].unwrap();
                }
                rows_out.push(out);
                continue;
            }
            if complete.is_empty() {
                return Err(Error::Data(
                    "no complete rows available for k-NN imputation".into(),
                ));
            }
            // Distance over the observed channels only.
            let mut dists: Vec<(f64, usize)> = complete
                .iter()
                .enumerate()
                .map(|(i, cand)| {
                    let mut d = 0.0;
                    for c in 0..N_CHANNELS {
                        if let Some(x) = row[c] {
                            let z = (x - cand[c]) / std[c];
                            d += z * z;
                        }
                    }
                    (d, i)
                })
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let kk = k.min(dists.len());
            let mut out = [0.0; N_CHANNELS];
            for c in 0..N_CHANNELS {
                out[c] = match row[c] {
                    Some(x) => x,
                    None => {
                        dists[..kk].iter().map(|(_, i)| complete[*i][c]).sum::<f64>() / kk as f64
                    }
                };
            }
            rows_out.push(out);
        }
        result.push(rows_out);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: f64) -> [Option<f64>; N_CHANNELS] {
        [Some(v); N_CHANNELS]
    }

    #[test]
    fn complete_series_is_identity() {
        let rows: Vec<[f64; N_CHANNELS]> = (0..4).map(|i| [f64::from(i); N_CHANNELS]).collect();
        let mut series = vec![MaskedSeries::from_complete(&rows)];
        let out = impute_missing(&mut series, 5).unwrap();
        assert_eq!(out[0], rows);
    }

    #[test]
    fn mid_series_gap_forward_fills_from_previous_value() {
        let mut series = vec![MaskedSeries {
            rows: vec![row(1.0), row(2.0), row(3.0), row(4.0)],
        }];
        series[0].rows[2][5] = None;
        let out = impute_missing(&mut series, 3).unwrap();
        assert_eq!(out[0][2][5], 2.0);
    }

    #[test]
    fn leading_gap_uses_the_k_nearest_rows() {
        // Six complete rows in two clusters around 0 and around 10; a leading
        // gap whose observed channels sit in the 10-cluster must take the
        // missing channel's mean from that cluster.
        let mut base_lo = [0.0; N_CHANNELS];
        let mut base_hi = [10.0; N_CHANNELS];
        base_lo[0] = 0.0;
        base_hi[0] = 10.0;
        let mk = |b: [f64; N_CHANNELS], d: f64| {
            let mut r = b;
            for x in r.iter_mut() {
                *x += d;
            }
            r
        };
        let donor = MaskedSeries::from_complete(&[
            mk(base_lo, 0.0),
            mk(base_lo, 0.1),
            mk(base_lo, 0.2),
            mk(base_hi, 0.0),
            mk(base_hi, 0.1),
            mk(base_hi, 0.2),
        ]);
        let mut target_row = [Some(10.1); N_CHANNELS];
        target_row[7] = None; // nothing before it, forward fill cannot help
        let mut series = vec![donor, MaskedSeries { rows: vec![target_row, row(10.0)] }];
        let out = impute_missing(&mut series, 3).unwrap();
        // Nearest three complete rows are the hi cluster: mean = 10.1.
        assert!((out[1][0][7] - 10.1).abs() < 1e-9);
    }

    #[test]
    fn entirely_missing_channel_is_a_data_error() {
        let mut series = vec![MaskedSeries { rows: vec![row(1.0), row(2.0)] }];
        for r in series[0].rows.iter_mut() {
            r[3] = None;
        }
        assert!(impute_missing(&mut series, 2).is_err());
    }
}
