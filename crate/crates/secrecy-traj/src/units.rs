//! dB/dBm conversions.
//!
//! Everything downstream of the configuration boundary works in SI units
//! (watts, meters, seconds, linear gains). These helpers are the only place
//! where logarithmic units appear.

/// Convert a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Convert a power level in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

/// Convert a gain or ratio in dB to its linear value.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a linear gain or ratio to dB.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((db_to_linear(80.0) - 1e8).abs() < 1e-4);
        assert!((watts_to_dbm(1e-3) - 0.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn dbm_round_trip(dbm in -60.0..60.0f64) {
            let back = watts_to_dbm(dbm_to_watts(dbm));
            prop_assert!((back - dbm).abs() <= 1e-12 * dbm.abs().max(1.0));
        }

        #[test]
        fn db_round_trip(db in -120.0..120.0f64) {
            let back = linear_to_db(db_to_linear(db));
            prop_assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
        }
    }
}
