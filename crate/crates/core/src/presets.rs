//! Reference constants for acridine orange in two detection channels.

use crate::error::{Error, Result};
use crate::models::{DecayModel, NonExpParams, TwoExpParams};

/// Time of the intensity maximum, ns.
pub const TABLE1_T0: f64 = 2.24;

/// Fitting range, ns.
pub const FIT_RANGE: (f64, f64) = (3.200, 96.968);

/// Per-channel lifetime estimates `(value, sigma)` in ns.
pub const CHANNEL_TAU1: [(f64, f64); 2] = [(1.7333, 0.0012), (1.7326, 0.0021)];
pub const CHANNEL_TAU2: [(f64, f64); 2] = [(5.9459, 0.0196), (5.9493, 0.0156)];

/// Reported combined lifetimes `(value, sigma)` in ns.
pub const COMBINED_TAU1: (f64, f64) = (1.7331, 0.0010);
pub const COMBINED_TAU2: (f64, f64) = (5.948, 0.012);

/// Reduced χ² reported for the measured data, two-exponential then
/// exponential-plus-power-law, per channel. Not reproducible from synthetic data.
#[allow(clippy::approx_constant)] // measured, not π/3
pub const REPORTED_REDUCED_CHI2: [(f64, f64); 2] = [(1.0471, 11.0881), (1.0247, 14.7270)];

pub fn table2_ch1() -> TwoExpParams {
    TwoExpParams::new(278967.0, 1.7333, 6371.3, 5.9459, 21.99, TABLE1_T0).expect("valid preset")
}

pub fn table2_ch2() -> TwoExpParams {
    TwoExpParams::new(150898.0, 1.7326, 8983.5, 5.9493, 42.07, TABLE1_T0).expect("valid preset")
}

/// Exponential-plus-power-law fit of channel 1 (note the negative background).
pub fn table2_ch1_nonexp() -> NonExpParams {
    NonExpParams::new(220113.0, 1.9360, 39458.0, 1.7386, -1.404, TABLE1_T0).expect("valid preset")
}

/// Channel 2 lists 2.421 for both the exponent and the background; one of
/// the two is a transcription error, so this row is reference only.
pub fn table2_ch2_nonexp() -> NonExpParams {
    NonExpParams::new(93100.0, 2.2649, 40747.0, 2.421, 2.421, TABLE1_T0).expect("valid preset")
}

pub const MODEL_PRESETS: [&str; 4] = [
    "table2-ch1",
    "table2-ch2",
    "table2-ch1-nonexp",
    "table2-ch2-nonexp",
];

/// Model preset by name.
pub fn model_preset(name: &str) -> Result<DecayModel> {
    Ok(match name {
        "table2-ch1" => DecayModel::TwoExp(table2_ch1()),
        "table2-ch2" => DecayModel::TwoExp(table2_ch2()),
        "table2-ch1-nonexp" => DecayModel::NonExp(table2_ch1_nonexp()),
        "table2-ch2-nonexp" => DecayModel::NonExp(table2_ch2_nonexp()),
        other => {
            return Err(Error::Config(format!(
                "unknown model preset '{other}' (known: {})",
                MODEL_PRESETS.join(", ")
            )))
        }
    })
}

/// Fit range preset by name.
pub fn range_preset(name: &str) -> Result<(f64, f64)> {
    match name {
        "fit-range-paper" => Ok(FIT_RANGE),
        other => Err(Error::Config(format!(
            "unknown range preset '{other}' (known: fit-range-paper)"
        ))),
    }
}

/// Time-origin preset by name.
pub fn t0_preset(name: &str) -> Result<f64> {
    match name {
        "table1-t0" => Ok(TABLE1_T0),
        other => Err(Error::Config(format!(
            "unknown t0 preset '{other}' (known: table1-t0)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in MODEL_PRESETS {
            let m = model_preset(name).unwrap();
            assert_eq!(m.t0(), TABLE1_T0);
        }
        assert!(model_preset("table3").is_err());
        assert_eq!(range_preset("fit-range-paper").unwrap(), (3.2, 96.968));
        assert_eq!(t0_preset("table1-t0").unwrap(), 2.24);
    }

    #[test]
    fn grid_alignment_with_8ps_bins() {
        for x in [TABLE1_T0, FIT_RANGE.0, FIT_RANGE.1] {
            let k = x / 0.008;
            assert!((k - k.round()).abs() < 1e-9, "{x}");
        }
    }
}
