use proptest::prelude::*;
use tcspc::fitter::{fit_data, single_exponential_guess, FitData, FitOptions};
use tcspc::presets::{table2_ch1, FIT_RANGE};
use tcspc::spectral::EnergyDistribution;
use tcspc::synth::{
    convolve_irf, expected_counts, from_spectral, sample_poisson, simulate_model,
    spectral_expected_counts, AcquisitionConfig, ExpectedCounts,
};
use tcspc::{DecayModel, ModelKind, TwoExpParams};

/// Midpoint rule on `n` sub-cells of each bin, Richardson-extrapolated.
fn riemann_bin_average(model: &DecayModel, lo: f64, w: f64, n: usize) -> f64 {
    let mid = |k: usize| -> f64 {
        let h = w / k as f64;
        (0..k)
            .map(|j| model.eval(lo + (j as f64 + 0.5) * h).unwrap())
            .sum::<f64>()
            / k as f64
    };
    (4.0 * mid(2 * n) - mid(n)) / 3.0
}

#[test]
fn two_exp_bins_match_fine_riemann_oracle() {
    let model = DecayModel::TwoExp(table2_ch1());
    let cfg = AcquisitionConfig::default();
    let e = expected_counts(&model, &cfg, FIT_RANGE).unwrap();
    for i in [400usize, 401, 555, 1000, 4000, 9000, 12120] {
        let oracle = riemann_bin_average(&model, i as f64 * cfg.bin_width, cfg.bin_width, 100);
        assert!(
            (e.values[i] - oracle).abs() <= 1e-10 * oracle,
            "bin {i}: {} vs {oracle}",
            e.values[i]
        );
    }
}

#[test]
fn table2_ch1_total_expected_counts() {
    // Closed-form integral over [3.200, 96.968] ns divided by the bin width,
    // plus 11721 bins of background.
    let cfg = AcquisitionConfig::default();
    let e = expected_counts(&DecayModel::TwoExp(table2_ch1()), &cfg, FIT_RANGE).unwrap();
    let total = e.total();
    assert!(
        (total - 39_024_691.864_208_13).abs() < 1e-9 * total,
        "{total}"
    );
    assert!(e.values.iter().all(|&v| v >= 0.0));
}

#[test]
fn poisson_replicates_have_the_right_mean_and_dispersion() {
    let e = ExpectedCounts {
        bin_width: 0.01,
        window: 100.0,
        values: vec![100.0; 10_000],
    };
    let h = sample_poisson(&e, "r", 2024).unwrap();
    let n = h.len() as f64;
    let mean = h.total() as f64 / n;
    let var = h
        .counts()
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    assert!((mean - 100.0).abs() < 0.3, "mean {mean}");
    assert!((var / mean - 1.0).abs() < 0.05, "dispersion {}", var / mean);
}

#[test]
fn simulation_is_byte_reproducible() {
    let cfg = AcquisitionConfig {
        seed: 7,
        irf_fwhm: Some(0.12),
        ..Default::default()
    };
    let model = DecayModel::TwoExp(table2_ch1());
    let a = simulate_model(&model, &cfg, (0.0, 100.0), "ch1").unwrap();
    let b = simulate_model(&model, &cfg, (0.0, 100.0), "ch1").unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let other = simulate_model(
        &model,
        &AcquisitionConfig { seed: 8, ..cfg },
        (0.0, 100.0),
        "ch1",
    )
    .unwrap();
    assert_ne!(a.counts(), other.counts());
}

#[test]
fn simulated_peak_lands_at_t0() {
    let cfg = AcquisitionConfig::default();
    let h = simulate_model(&DecayModel::TwoExp(table2_ch1()), &cfg, (0.0, 100.0), "ch1").unwrap();
    assert!((h.t_peak() - 2.244).abs() < 1e-12, "{}", h.t_peak());
}

#[test]
fn zero_amplitude_model_is_pure_background() {
    let model = DecayModel::TwoExp(TwoExpParams::new(0.0, 1.0, 0.0, 2.0, 30.0, 2.24).unwrap());
    let cfg = AcquisitionConfig {
        seed: 1,
        ..Default::default()
    };
    let h = simulate_model(&model, &cfg, (0.0, 100.0), "bg").unwrap();
    let mean = h.total() as f64 / h.len() as f64;
    assert!((mean - 30.0).abs() < 4.0 * (30.0 / h.len() as f64).sqrt());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn irf_conserves_counts(values in prop::collection::vec(0.0f64..1e4, 1000), fwhm in 0.001f64..1.0) {
        let cfg = AcquisitionConfig { window: 8.0, irf_fwhm: Some(fwhm), ..Default::default() };
        let out = convolve_irf(&values, &cfg).unwrap();
        let before: f64 = values.iter().sum();
        let after: f64 = out.values.iter().sum();
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
        prop_assert!(out.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn expected_counts_are_at_least_background_inside_range(
        c1 in 0.0f64..1e5, tau1 in 0.1f64..10.0, c2 in 0.0f64..1e4, tau2 in 0.1f64..20.0, b in 0.0f64..100.0,
    ) {
        let model = DecayModel::TwoExp(TwoExpParams::new(c1, tau1, c2, tau2, b, 2.24).unwrap());
        let cfg = AcquisitionConfig::default();
        let e = expected_counts(&model, &cfg, FIT_RANGE).unwrap();
        for &v in &e.values[401..12121] {
            prop_assert!(v >= b * (1.0 - 1e-12));
        }
    }
}

#[test]
fn breit_wigner_truth_recovers_its_lifetime() {
    let tau = 1.7333;
    let dist = EnergyDistribution::breit_wigner(3.0, 1.0 / tau)
        .unwrap()
        .normalized()
        .unwrap();
    let cfg = AcquisitionConfig {
        seed: 11,
        ..Default::default()
    };
    let range = (0.5, 15.0);
    let hist = from_spectral(&dist, 1e8, &cfg, (0.0, 100.0), "bw").unwrap();

    // Oracle: log-linear regression on the noise-free expectations.
    let expected = spectral_expected_counts(&dist, 1e8, &cfg, (0.0, 100.0)).unwrap();
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 100..2400 {
        let t = (i as f64 + 0.5) * cfg.bin_width;
        let y = expected.values[i].ln();
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
        n += 1.0;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!(
        (-1.0 / slope - tau).abs() < 1e-6 * tau,
        "oracle τ = {}",
        -1.0 / slope
    );

    // Single exponential without background; every bin holds hundreds of
    // counts, where the Pearson χ² is unbiased.
    let data = FitData::from_histogram(&hist, range, None).unwrap();
    let init = match single_exponential_guess(&data).unwrap() {
        DecayModel::TwoExp(p) => DecayModel::TwoExp(TwoExpParams { b: 0.0, ..p }),
        DecayModel::NonExp(_) => unreachable!(),
    };
    let opts = FitOptions {
        range,
        fixed: [false, false, true, true, true],
        ..Default::default()
    };
    let r = fit_data(&init, &data, &opts).unwrap();
    assert!(r.converged);
    let (tau_hat, se) = r.param("tau1").unwrap();
    let se = se.unwrap();
    assert!((tau_hat - tau).abs() <= 3.0 * se, "τ̂ = {tau_hat} ± {se}");
}

#[test]
fn truncated_truth_prefers_power_law_on_late_window() {
    let dist = EnergyDistribution::truncated(1.0, 1.0, 0.0)
        .unwrap()
        .normalized()
        .unwrap();
    let cfg = AcquisitionConfig {
        seed: 3,
        ..Default::default()
    };
    let hist = from_spectral(&dist, 1e10, &cfg, (0.0, 100.0), "tbw").unwrap();
    let range = (20.0, 80.0);
    let opts = FitOptions {
        range,
        t0: Some(0.0),
        ..Default::default()
    };
    let data = FitData::from_histogram(&hist, range, opts.t0).unwrap();
    let single = fit_data(
        &single_exponential_guess(&data).unwrap(),
        &data,
        &opts.clone().single_exponential(),
    )
    .unwrap();
    let guess = tcspc::fitter::initial_guess_data(ModelKind::NonExp, &data).unwrap();
    let power = fit_data(&guess, &data, &opts).unwrap();
    assert!(
        power.reduced_chi2 < single.reduced_chi2,
        "nonexp {} vs single {}",
        power.reduced_chi2,
        single.reduced_chi2
    );
    // The intensity tail decays as t^-3.
    let (beta, _) = power.param("beta").unwrap();
    assert!((beta - 3.0).abs() < 0.3, "β = {beta}");
}
