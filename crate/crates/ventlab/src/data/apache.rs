//! APACHE-II severity scoring and its mortality-risk logistic.
//!
//! Physiologic points follow the published band tables over temperature,
//! MAP, HR, RR, oxygenation, pH, sodium, potassium, creatinine, a
//! hematocrit proxy (3 x Hb), WBC, and Glasgow coma scale, plus age points.
//! Chronic-health points are not modeled and contribute 0. Values outside
//! any table clamp to the nearest band.

use crate::data::state::PatientState;

fn band(v: f64, cuts: &[(f64, u8)], floor: u8) -> u8 {
    for (threshold, points) in cuts {
        if v >= *threshold {
            return *points;
        }
    }
    floor
}

fn temp_points(t: f64) -> u8 {
    band(
        t,
        &[(41.0, 4), (39.0, 3), (38.5, 1), (36.0, 0), (34.0, 1), (32.0, 2), (30.0, 3)],
        4,
    )
}

fn map_points(map: f64) -> u8 {
    band(map, &[(160.0, 4), (130.0, 3), (110.0, 2), (70.0, 0), (50.0, 2)], 4)
}

fn hr_points(hr: f64) -> u8 {
    band(hr, &[(180.0, 4), (140.0, 3), (110.0, 2), (70.0, 0), (55.0, 2), (40.0, 3)], 4)
}

fn rr_points(rr: f64) -> u8 {
    band(rr, &[(50.0, 4), (35.0, 3), (25.0, 1), (12.0, 0), (10.0, 1), (6.0, 2)], 4)
}

/// A-a gradient scoring above FiO2 0.5, PaO2 scoring below it.
fn oxygenation_points(pao2: f64, paco2: f64, fio2: f64) -> u8 {
    if fio2 >= 0.5 {
        let aa = fio2 * 713.0 - paco2 / 0.8 - pao2;
        band(aa, &[(500.0, 4), (350.0, 3), (200.0, 2)], 0)
    } else if pao2 > 70.0 {
        0
    } else if pao2 > 60.0 {
        1
    } else if pao2 >= 55.0 {
        3
    } else {
        4
    }
}

fn ph_points(ph: f64) -> u8 {
    band(ph, &[(7.70, 4), (7.60, 3), (7.50, 1), (7.33, 0), (7.25, 2), (7.15, 3)], 4)
}

fn na_points(na: f64) -> u8 {
    band(
        na,
        &[(180.0, 4), (160.0, 3), (155.0, 2), (150.0, 1), (130.0, 0), (120.0, 2), (111.0, 3)],
        4,
    )
}

fn k_points(k: f64) -> u8 {
    band(k, &[(7.0, 4), (6.0, 3), (5.5, 1), (3.5, 0), (3.0, 1), (2.5, 2)], 4)
}

fn creatinine_points(cr: f64) -> u8 {
    band(cr, &[(3.5, 4), (2.0, 3), (1.5, 2), (0.6, 0)], 2)
}

fn hematocrit_points(hb: f64) -> u8 {
    let hct = 3.0 * hb;
    band(hct, &[(60.0, 4), (50.0, 2), (46.0, 1), (30.0, 0), (20.0, 2)], 4)
}

fn wbc_points(wbc: f64) -> u8 {
    band(wbc, &[(40.0, 4), (20.0, 2), (15.0, 1), (3.0, 0), (1.0, 2)], 4)
}

fn gcs_points(gcs: f64) -> u8 {
    let g = gcs.round().clamp(3.0, 15.0);
    (15.0 - g) as u8
}

fn age_points(age: f64) -> u8 {
    band(age, &[(75.0, 6), (65.0, 5), (55.0, 3), (45.0, 2)], 0)
}

/// Total APACHE-II score in [0, 71].
///
/// `fio2` is the inspired-oxygen fraction in effect when the state was
/// observed; it selects the oxygenation sub-table and is not itself a state
/// channel.
pub fn apache2_score(s: &PatientState, fio2: f64) -> u8 {
    let physiologic = temp_points(s.temp)
        + map_points(s.map)
        + hr_points(s.hr)
        + rr_points(s.rr_measured)
        + oxygenation_points(s.pao2, s.paco2, fio2)
        + ph_points(s.ph)
        + na_points(s.na)
        + k_points(s.k)
        + creatinine_points(s.creatinine)
        + hematocrit_points(s.hb)
        + wbc_points(s.wbc)
        + gcs_points(s.gcs);
    physiologic + age_points(s.age)
}

/// Published APACHE-II risk logistic, ln(p/(1-p)) = -3.517 + 0.146 * score
/// (diagnostic-category weight omitted).
pub fn predicted_mortality(apache: u8) -> f64 {
    let logit = -3.517 + 0.146 * f64::from(apache);
    1.0 / (1.0 + (-logit).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mid_normal(age: f64) -> PatientState {
        PatientState {
            age,
            sex: 1.0,
            weight: 75.0,
            hr: 80.0,
            sbp: 120.0,
            dbp: 70.0,
            map: 86.7,
            temp: 37.0,
            spo2: 0.97,
            rr_measured: 16.0,
            ph: 7.40,
            pao2: 90.0,
            paco2: 40.0,
            lactate: 1.0,
            na: 140.0,
            k: 4.2,
            cl: 102.0,
            hco3: 24.0,
            creatinine: 0.9,
            bun: 14.0,
            hb: 13.0,
            wbc: 8.0,
            platelets: 250.0,
            gcs: 15.0,
        }
    }

    #[test]
    fn mid_normal_age_40_scores_zero() {
        // Walking the published tables: every physiologic channel lands in
        // its 0-point band and age 40 is in the <=44 band (0 points).
        assert_eq!(apache2_score(&mid_normal(40.0), 0.4), 0);
    }

    #[test]
    fn age_76_otherwise_normal_scores_six() {
        assert_eq!(apache2_score(&mid_normal(76.0), 0.4), 6);
    }

    #[test]
    fn score_is_bounded_by_71_even_for_worst_case() {
        let worst = PatientState {
            age: 99.0,
            sex: 0.0,
            weight: 40.0,
            hr: 200.0,
            sbp: 40.0,
            dbp: 20.0,
            map: 30.0,
            temp: 25.0,
            spo2: 0.4,
            rr_measured: 60.0,
            ph: 6.8,
            pao2: 30.0,
            paco2: 100.0,
            lactate: 18.0,
            na: 200.0,
            k: 9.0,
            cl: 80.0,
            hco3: 8.0,
            creatinine: 6.0,
            bun: 100.0,
            hb: 3.0,
            wbc: 60.0,
            platelets: 10.0,
            gcs: 3.0,
        };
        let s = apache2_score(&worst, 1.0);
        assert!(s <= 71, "score {s} exceeded the table maximum");
        assert!(s >= 50, "worst-case derangement should score high, got {s}");
    }

    #[test]
    fn oxygenation_switches_tables_at_fio2_half() {
        let mut s = mid_normal(40.0);
        s.pao2 = 65.0;
        // Below 0.5: PaO2 61-70 band = 1 point.
        assert_eq!(apache2_score(&s, 0.4), 1);
        // At 0.5: A-a = 0.5*713 - 50 - 65 = 241.5 -> 2 points.
        assert_eq!(apache2_score(&s, 0.5), 2);
    }

    #[test]
    fn points_increase_with_derangement() {
        let base = mid_normal(40.0);
        // Tachycardia ladder.
        let mut last = 0;
        for hr in [100.0, 120.0, 150.0, 190.0] {
            let mut s = base;
            s.hr = hr;
            let p = apache2_score(&s, 0.4);
            assert!(p >= last);
            last = p;
        }
        // Acidosis ladder.
        let mut last = 0;
        for ph in [7.40, 7.30, 7.20, 7.10] {
            let mut s = base;
            s.ph = ph;
            let p = apache2_score(&s, 0.4);
            assert!(p >= last);
            last = p;
        }
        // Hypoxemia ladder (low-FiO2 table).
        let mut last = 0;
        for pao2 in [80.0, 65.0, 58.0, 50.0] {
            let mut s = base;
            s.pao2 = pao2;
            let p = apache2_score(&s, 0.4);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn mortality_logistic_anchors() {
        assert_relative_eq!(predicted_mortality(0), 0.029, epsilon = 0.001);
        // Crossing point: logit zero at 3.517 / 0.146 = 24.09, so 24 is just
        // below 0.5 and 25 just above.
        assert!(predicted_mortality(24) < 0.5);
        assert!(predicted_mortality(25) > 0.5);
        assert!(predicted_mortality(30) > predicted_mortality(20));
        let mut last = 0.0;
        for a in 0..=71 {
            let p = predicted_mortality(a);
            assert!(p > last && p < 1.0);
            last = p;
        }
    }
}
