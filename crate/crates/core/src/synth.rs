//! Synthetic TCSPC histograms.
//!
//! The excitation pulse defines `t = 0` of the acquisition window. A decay
//! model switches on at its `t0` (the time of the intensity maximum); before
//! that only the background contributes. Expected bin contents are bin
//! averages of the model intensity, which is expressed in counts per bin.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::histogram::Histogram;
use crate::models::DecayModel;
use crate::spectral::EnergyDistribution;

/// Upper bound of the excitation pulse width of the reference setup.
pub const REFERENCE_IRF_FWHM_NS: f64 = 0.120;

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    /// Pulse period, ns.
    pub window: f64,
    /// ns.
    pub bin_width: f64,
    /// Informational, MHz.
    pub rep_rate_mhz: f64,
    pub irf_fwhm: Option<f64>,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            window: 100.0,
            bin_width: 0.008,
            rep_rate_mhz: 10.0,
            irf_fwhm: None,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    /// Number of bins; the window must hold a whole number of them.
    pub fn n_bins(&self) -> Result<usize> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::Config(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::Config(format!(
                "window must be positive, got {}",
                self.window
            )));
        }
        let n = (self.window / self.bin_width).round();
        if n < 1.0 || (n * self.bin_width - self.window).abs() > 1e-9 * self.window {
            return Err(Error::Config(format!(
                "window {} ns is not a whole number of {} ns bins",
                self.window, self.bin_width
            )));
        }
        if let Some(f) = self.irf_fwhm {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("IRF FWHM must be positive, got {f}")));
            }
        }
        Ok(n as usize)
    }
}

/// Expected counts per bin over the whole acquisition window.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub bin_width: f64,
    pub window: f64,
    pub values: Vec<f64>,
}

impl ExpectedCounts {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Replicate `i` of a study seeded with `seed` uses `seed ^ splitmix64(i)`.
pub fn replicate_seed(seed: u64, i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    seed ^ (z ^ (z >> 31))
}

fn bins_in_range(
    cfg: &AcquisitionConfig,
    range: (f64, f64),
) -> Result<(usize, std::ops::Range<usize>)> {
    let n = cfg.n_bins()?;
    let (lo, hi) = range;
    if !(lo >= 0.0 && hi <= cfg.window * (1.0 + 1e-12) && lo < hi) {
        return Err(Error::Config(format!(
            "range [{lo}, {hi}] ns must lie inside the window [0, {}] ns",
            cfg.window
        )));
    }
    let w = cfg.bin_width;
    let start = ((lo / w - 0.5) - 1e-9).ceil().max(0.0) as usize;
    let end = (((hi / w - 0.5) + 1e-9).floor() as i64 + 1).clamp(0, n as i64) as usize;
    Ok((n, start..end.max(start)))
}

/// `∫_a^b C e^{-(t-t0)/τ} dt` restricted to `t ≥ t0`.
fn exp_segment(c: f64, tau: f64, t0: f64, a: f64, b: f64) -> f64 {
    let a = a.max(t0);
    let b = b.max(t0);
    if b <= a {
        return 0.0;
    }
    // e^{-x} - e^{-y} = e^{-x} (1 - e^{-(y-x)}), with expm1 for small widths.
    c * tau * (-(a - t0) / tau).exp() * -(-(b - a) / tau).exp_m1()
}

/// Expected counts per bin for bins whose centers lie in `range`; zero elsewhere.
pub fn expected_counts(
    model: &DecayModel,
    cfg: &AcquisitionConfig,
    range: (f64, f64),
) -> Result<ExpectedCounts> {
    model.validate()?;
    let (n, bins) = bins_in_range(cfg, range)?;
    let w = cfg.bin_width;
    let t0 = model.t0();
    let mut values = vec![0.0; n];
    for i in bins {
        let a = i as f64 * w;
        let b = a + w;
        values[i] = match model {
            DecayModel::TwoExp(p) => {
                (exp_segment(p.c1, p.tau1, t0, a, b) + exp_segment(p.c2, p.tau2, t0, a, b)) / w
                    + p.b
            }
            DecayModel::NonExp(p) => {
                // Mean of four sub-bin midpoints; the decay is off before t0.
                let mut acc = 0.0;
                for k in 0..4 {
                    let t = a + (k as f64 + 0.5) * w / 4.0;
                    if t > t0 {
                        acc += model.eval(t)? - p.b;
                    }
                }
                (acc / 4.0 + p.b).max(0.0)
            }
        };
    }
    Ok(ExpectedCounts {
        bin_width: w,
        window: cfg.window,
        values,
    })
}

/// Independent Poisson draw per bin, reproducible for a given seed.
pub fn sample_poisson(expected: &ExpectedCounts, label: &str, seed: u64) -> Result<Histogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = Vec::with_capacity(expected.values.len());
    for (i, &mean) in expected.values.iter().enumerate() {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(Error::domain(format!(
                "expected count {mean} in bin {i} is not a valid Poisson mean"
            )));
        }
        let k = if mean == 0.0 {
            0
        } else {
            let draw: f64 = Poisson::new(mean)
                .map_err(|e| Error::domain(format!("bin {i}: {e}")))?
                .sample(&mut rng);
            draw as u64
        };
        counts.push(k);
    }
    Histogram::new(
        0.0,
        expected.bin_width,
        counts,
        label,
        expected.window,
        Some(seed),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convolved {
    pub values: Vec<f64>,
    /// Set when the kernel is narrower than one bin.
    pub warning: Option<String>,
}

/// Circular convolution over the window with a unit-sum Gaussian kernel of
/// the configured FWHM, sampled at bin offsets.
pub fn convolve_irf(expected: &[f64], cfg: &AcquisitionConfig) -> Result<Convolved> {
    let n = cfg.n_bins()?;
    if expected.len() != n {
        return Err(Error::Config(format!(
            "expected {} bins for the window, got {}",
            n,
            expected.len()
        )));
    }
    let fwhm = cfg
        .irf_fwhm
        .ok_or_else(|| Error::Config("IRF convolution requested without an IRF FWHM".into()))?;
    let warning = (fwhm < cfg.bin_width).then(|| {
        format!(
            "IRF FWHM {fwhm} ns is narrower than the {} ns bin; kernel under-resolved",
            cfg.bin_width
        )
    });
    let sigma = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    let reach = ((8.0 * sigma / cfg.bin_width).ceil() as usize).min(n / 2);
    let mut kernel: Vec<f64> = (0..=2 * reach)
        .map(|j| {
            let x = (j as f64 - reach as f64) * cfg.bin_width / sigma;
            (-0.5 * x * x).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);

    let mut values = vec![0.0; n];
    for (i, &v) in expected.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (j, &k) in kernel.iter().enumerate() {
            let target = (i + n + j - reach) % n;
            values[target] += v * k;
        }
    }
    Ok(Convolved { values, warning })
}

/// Expected counts, optional IRF blur and Poisson sampling for a model.
pub fn simulate_model(
    model: &DecayModel,
    cfg: &AcquisitionConfig,
    range: (f64, f64),
    label: &str,
) -> Result<Histogram> {
    let mut expected = expected_counts(model, cfg, range)?;
    if cfg.irf_fwhm.is_some() {
        expected.values = convolve_irf(&expected.values, cfg)?.values;
    }
    sample_poisson(&expected, label, cfg.seed)
}

/// Noise-free bin expectations `N₀ [P(a) - P(b)]` (the bin integral of
/// `-N₀ P'(t)`) with the state prepared at `t = 0`.
pub fn spectral_expected_counts(
    dist: &EnergyDistribution,
    n0: f64,
    cfg: &AcquisitionConfig,
    range: (f64, f64),
) -> Result<ExpectedCounts> {
    if !(n0 >= 0.0 && n0.is_finite()) {
        return Err(Error::domain(format!(
            "initial population must be ≥ 0, got {n0}"
        )));
    }
    let (n, bins) = bins_in_range(cfg, range)?;
    let mut values = vec![0.0; n];
    if n0 > 0.0 && !bins.is_empty() {
        let w = cfg.bin_width;
        let mut p_prev = dist.survival_probability(bins.start as f64 * w)?;
        for i in bins {
            let p_next = dist.survival_probability((i + 1) as f64 * w)?;
            // P need not be monotone in the interference region.
            values[i] = (n0 * (p_prev - p_next)).max(0.0);
            p_prev = p_next;
        }
    }
    Ok(ExpectedCounts {
        bin_width: cfg.bin_width,
        window: cfg.window,
        values,
    })
}

/// Poisson-sampled histogram whose truth is the first-principles decay of `dist`.
pub fn from_spectral(
    dist: &EnergyDistribution,
    n0: f64,
    cfg: &AcquisitionConfig,
    range: (f64, f64),
    label: &str,
) -> Result<Histogram> {
    let mut expected = spectral_expected_counts(dist, n0, cfg, range)?;
    if cfg.irf_fwhm.is_some() {
        expected.values = convolve_irf(&expected.values, cfg)?.values;
    }
    sample_poisson(&expected, label, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TwoExpParams;

    fn two_exp(c1: f64, tau1: f64, c2: f64, tau2: f64, b: f64) -> DecayModel {
        DecayModel::TwoExp(TwoExpParams::new(c1, tau1, c2, tau2, b, 2.24).unwrap())
    }

    #[test]
    fn default_config_has_12500_bins() {
        assert_eq!(AcquisitionConfig::default().n_bins().unwrap(), 12500);
        let bad = AcquisitionConfig {
            bin_width: 0.03,
            ..Default::default()
        };
        assert!(matches!(bad.n_bins(), Err(Error::Config(_))));
    }

    #[test]
    fn background_only_model_fills_every_bin() {
        let cfg = AcquisitionConfig::default();
        let e = expected_counts(&two_exp(0.0, 1.0, 0.0, 2.0, 7.0), &cfg, (0.0, 100.0)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn single_exponential_bin_average_closed_form() {
        let cfg = AcquisitionConfig::default();
        let (c1, tau, b) = (1000.0, 1.7, 3.0);
        let e = expected_counts(&two_exp(c1, tau, 0.0, 5.0, b), &cfg, (3.2, 96.968)).unwrap();
        let w = cfg.bin_width;
        for i in [400usize, 401, 5000, 12120] {
            let (lo, hi) = (i as f64 * w, (i + 1) as f64 * w);
            let exact =
                c1 * tau * ((-(lo - 2.24) / tau).exp() - (-(hi - 2.24) / tau).exp()) / w + b;
            assert!((e.values[i] - exact).abs() < 1e-9 * exact, "bin {i}");
        }
        assert_eq!(e.values[399], 0.0);
        assert_eq!(e.values[12121], 0.0);
    }

    #[test]
    fn range_outside_window_is_rejected() {
        let cfg = AcquisitionConfig::default();
        let m = two_exp(1.0, 1.0, 1.0, 2.0, 1.0);
        assert!(expected_counts(&m, &cfg, (50.0, 120.0)).is_err());
        assert!(expected_counts(&m, &cfg, (-1.0, 20.0)).is_err());
    }

    #[test]
    fn zero_expectation_gives_zero_counts() {
        let e = ExpectedCounts {
            bin_width: 0.5,
            window: 5.0,
            values: vec![0.0; 10],
        };
        assert_eq!(sample_poisson(&e, "z", 3).unwrap().total(), 0);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let e = ExpectedCounts {
            bin_width: 0.5,
            window: 50.0,
            values: (0..100).map(|i| 0.3 * i as f64).collect(),
        };
        let a = sample_poisson(&e, "a", 11).unwrap();
        assert_eq!(a, sample_poisson(&e, "a", 11).unwrap());
        assert_ne!(a.counts(), sample_poisson(&e, "a", 12).unwrap().counts());
    }

    #[test]
    fn replicate_seeds_are_distinct_and_stable() {
        assert_eq!(replicate_seed(7, 0), replicate_seed(7, 0));
        assert_ne!(replicate_seed(7, 0), replicate_seed(7, 1));
        assert_ne!(replicate_seed(7, 3), 7);
    }

    #[test]
    fn irf_of_delta_is_centered_gaussian() {
        let cfg = AcquisitionConfig {
            window: 8.0,
            irf_fwhm: Some(0.12),
            ..Default::default()
        };
        let mut e = vec![0.0; 1000];
        e[500] = 1.0;
        let out = convolve_irf(&e, &cfg).unwrap();
        assert!(out.warning.is_none());
        let peak = out.values.iter().cloned().fold(0.0, f64::max);
        assert_eq!(out.values[500], peak);
        for k in 1..10 {
            assert!((out.values[500 + k] - out.values[500 - k]).abs() < 1e-15);
        }
        // Half maximum at 60 ps = 7.5 bins.
        let half = 0.5 * peak;
        assert!(out.values[507] > half && out.values[508] < half);
    }

    #[test]
    fn narrow_irf_is_identity_with_warning() {
        let cfg = AcquisitionConfig {
            window: 8.0,
            irf_fwhm: Some(1e-4),
            ..Default::default()
        };
        let e: Vec<f64> = (0..1000).map(|i| (i % 17) as f64).collect();
        let out = convolve_irf(&e, &cfg).unwrap();
        assert!(out.warning.is_some());
        assert_eq!(out.values, e);
    }

    #[test]
    fn zero_population_gives_empty_histogram() {
        let d = EnergyDistribution::breit_wigner(0.0, 0.5)
            .unwrap()
            .normalized()
            .unwrap();
        let cfg = AcquisitionConfig::default();
        let h = from_spectral(&d, 0.0, &cfg, (0.0, 100.0), "q").unwrap();
        assert_eq!(h.total(), 0);
    }
}
