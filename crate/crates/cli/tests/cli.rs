use std::fs;
use std::path::Path;
use std::process::Command;

use tcspc::fitter::FitReport;
use tcspc::presets::table2_ch1;
use tcspc::spectral::DecayCurve;
use tcspc::Histogram;
use tcspc_cli::combine::CombineReport;
use tcspc_cli::{run_from_args, EXIT_IO, EXIT_NUMERIC, EXIT_SCHEMA, EXIT_USAGE};

fn run(args: &[&str]) -> tcspc_cli::Outcome {
    let argv = std::iter::once("tcspc")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    run_from_args(argv).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn exit_code(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tcspc"))
        .args(args)
        .current_dir(dir)
        .env_remove(tcspc_cli::OUT_DIR_ENV)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn preset_histogram_header_echoes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    run(&[
        "simulate",
        "--model",
        "twoexp",
        "--preset",
        "table2-ch1",
        "--seed",
        "7",
        "--out",
        s(dir.path()),
    ]);
    let hist = Histogram::parse(&read(dir.path(), "ch1.hist")).unwrap();
    assert_eq!(hist.seed(), Some(7));
    let get = |k: &str| -> f64 {
        hist.annotations()
            .iter()
            .find(|(key, _)| key == k)
            .unwrap_or_else(|| panic!("missing {k}"))
            .1
            .parse()
            .unwrap()
    };
    let p = table2_ch1();
    assert_eq!(get("C1"), p.c1);
    assert_eq!(get("tau1_ns"), p.tau1);
    assert_eq!(get("C2"), p.c2);
    assert_eq!(get("tau2_ns"), p.tau2);
    assert_eq!(get("b"), p.b);
    assert_eq!(get("t0_ns"), p.t0);
}

#[test]
fn same_flags_same_seed_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        run(&[
            "simulate",
            "--preset",
            "table2-ch1",
            "--preset",
            "table2-ch2",
            "--seed",
            "11",
            "--out",
            s(d.path()),
        ]);
    }
    for f in ["ch1.hist", "ch2.hist"] {
        assert_eq!(read(a.path(), f), read(b.path(), f));
    }
    assert_ne!(read(a.path(), "ch1.hist"), read(a.path(), "ch2.hist"));
}

#[test]
fn zero_amplitude_model_is_pure_background() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("flat.params");
    fs::write(
        &params,
        "model: twoexp\nC1: 0\ntau1_ns: 1\nC2: 0\ntau2_ns: 2\nb: 0\nt0_ns: 2.24\n",
    )
    .unwrap();
    run(&["simulate", "--params", s(&params), "--out", s(dir.path())]);
    let hist = Histogram::parse(&read(dir.path(), "flat.hist")).unwrap();
    assert_eq!(hist.total(), 0);

    fs::write(
        &params,
        "model: twoexp\nC1: 0\ntau1_ns: 1\nC2: 0\ntau2_ns: 2\nb: 4\nt0_ns: 2.24\n",
    )
    .unwrap();
    run(&[
        "simulate",
        "--params",
        s(&params),
        "--seed",
        "2",
        "--out",
        s(dir.path()),
    ]);
    let hist = Histogram::parse(&read(dir.path(), "flat.hist")).unwrap();
    // Poisson total of 12500 bins at mean 4.
    let expected = 4.0 * 12500.0;
    assert!((hist.total() as f64 - expected).abs() < 5.0 * expected.sqrt());
}

#[test]
fn manifests_rerun_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fixture = d.join("fixture");
    let sim = run(&[
        "simulate",
        "--preset",
        "table2-ch1",
        "--seed",
        "3",
        "--out",
        s(&fixture),
    ]);
    let hist = fixture.join("ch1.hist");
    let fit = run(&["fit", s(&hist), "--out", s(&d.join("fit"))]);
    let fit_json = d.join("fit").join("ch1.twoexp.fit.json");
    let comb = run(&[
        "combine",
        s(&fit_json),
        "--estimate",
        "1.7326:0.0021:ch2",
        "--out",
        s(&d.join("comb")),
    ]);
    let theory = run(&[
        "theory",
        "--dist",
        "tbw-gauss",
        "--cutoff",
        "20",
        "--points",
        "40",
        "--out",
        s(&d.join("th")),
    ]);
    let rt = run(&[
        "roundtrip",
        "--replicates",
        "4",
        "--seed",
        "9",
        "--threads",
        "2",
        "--out",
        s(&d.join("rt")),
    ]);

    for outcome in [sim, fit, comb, theory, rt] {
        let before: Vec<String> = outcome
            .files
            .iter()
            .map(|f| read(&outcome.out_dir, f))
            .collect();
        let manifest = outcome.out_dir.join(outcome.files.last().unwrap());
        let again = run(&["rerun", s(&manifest)]);
        assert_eq!(again.files, outcome.files);
        for (f, b) in outcome.files.iter().zip(&before) {
            assert_eq!(&read(&outcome.out_dir, f), b, "{f} changed on rerun");
        }
        // Rerun into a fresh directory: data files identical.
        let other = d.join("elsewhere");
        let moved = run(&["rerun", s(&manifest), "--out", s(&other)]);
        for (f, b) in moved.files.iter().zip(&before).take(moved.files.len() - 1) {
            assert_eq!(&read(&other, f), b, "{f} differs in a new directory");
        }
    }
}

#[test]
fn roundtrip_results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = run(&[
        "roundtrip",
        "--replicates",
        "6",
        "--threads",
        "1",
        "--out",
        s(&dir.path().join("a")),
    ]);
    let many = run(&[
        "roundtrip",
        "--replicates",
        "6",
        "--threads",
        "3",
        "--out",
        s(&dir.path().join("b")),
    ]);
    for f in ["roundtrip.replicates.tsv", "roundtrip.summary.json"] {
        assert_eq!(read(&one.out_dir, f), read(&many.out_dir, f));
    }
}

#[test]
fn fit_writes_report_curve_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(&[
        "simulate",
        "--preset",
        "table2-ch1",
        "--seed",
        "5",
        "--out",
        s(d),
    ]);
    let hist = d.join("ch1.hist");
    run(&[
        "fit",
        s(&hist),
        "--range-preset",
        "fit-range-paper",
        "--out",
        s(d),
    ]);
    let report = FitReport::from_json(&read(d, "ch1.twoexp.fit.json")).unwrap();
    assert!(report.converged);
    let (tau1, se) = report.param("tau1").unwrap();
    assert!((tau1 - 1.7333).abs() <= 4.0 * se, "{tau1} ± {se}");
    let curve = read(d, "ch1.twoexp.curve.tsv");
    let resid = read(d, "ch1.twoexp.residuals.tsv");
    let rows = |t: &str| t.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows(&curve), report.n_points);
    assert_eq!(rows(&resid), report.n_points);
    // Residuals recomputed from the histogram and model column.
    let counts = Histogram::parse(&read(d, "ch1.hist")).unwrap();
    let first = curve.lines().nth(1).unwrap();
    let (t, m) = first.split_once('\t').unwrap();
    let (t, m): (f64, f64) = (t.parse().unwrap(), m.parse().unwrap());
    let bin = (t / counts.bin_width()).floor() as usize;
    let r: f64 = resid
        .lines()
        .nth(1)
        .unwrap()
        .split_once('\t')
        .unwrap()
        .1
        .parse()
        .unwrap();
    assert!((r - (counts.counts()[bin] as f64 - m) / m.sqrt()).abs() < 1e-12);

    // Fixing the background and t0 preset are honoured.
    run(&[
        "fit",
        s(&hist),
        "--fix",
        "b",
        "--t0-preset",
        "table1-t0",
        "--label",
        "fixed",
        "--out",
        s(&d.join("f")),
    ]);
    let fixed = FitReport::from_json(&read(&d.join("f"), "ch1.twoexp.fit.json")).unwrap();
    assert_eq!(fixed.fixed, vec!["b".to_string()]);
    assert_eq!(fixed.t0_ns, 2.24);
    assert_eq!(fixed.channel_label, "fixed");
    assert_eq!(fixed.n_free_params, 4);
}

#[test]
fn nonexp_fit_of_two_exponential_truth_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(&[
        "simulate",
        "--preset",
        "table2-ch1",
        "--seed",
        "8",
        "--out",
        s(d),
    ]);
    let (code, err) = exit_code(&["fit", "ch1.hist", "--model", "nonexp"], d);
    assert_eq!(code, 0, "{err}");
    let two = {
        run(&["fit", s(&d.join("ch1.hist")), "--out", s(d)]);
        FitReport::from_json(&read(d, "ch1.twoexp.fit.json")).unwrap()
    };
    let non = FitReport::from_json(&read(d, "ch1.nonexp.fit.json")).unwrap();
    assert!(non.reduced_chi2 > 5.0 * two.reduced_chi2);
}

#[test]
fn combine_reports_and_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(&[
        "simulate",
        "--preset",
        "table2-ch1",
        "--preset",
        "table2-ch2",
        "--seed",
        "1",
        "--out",
        s(d),
    ]);
    run(&["fit", s(&d.join("ch1.hist")), "--out", s(d)]);
    run(&["fit", s(&d.join("ch2.hist")), "--out", s(d)]);
    let r1 = FitReport::from_json(&read(d, "ch1.twoexp.fit.json")).unwrap();
    let r2 = FitReport::from_json(&read(d, "ch2.twoexp.fit.json")).unwrap();

    let (p1, p2) = (d.join("ch1.twoexp.fit.json"), d.join("ch2.twoexp.fit.json"));
    let both = [s(&p1), s(&p2)];
    run(&[
        "combine",
        both[0],
        both[1],
        "--param",
        "tau2",
        "--out",
        s(d),
    ]);
    let c: CombineReport = serde_json::from_str(&read(d, "combine-tau2.json")).unwrap();
    let ((v1, s1), (v2, s2)) = (r1.param("tau2").unwrap(), r2.param("tau2").unwrap());
    let (w1, w2) = (s1.powi(-2), s2.powi(-2));
    assert!((c.combined.value - (v1 * w1 + v2 * w2) / (w1 + w2)).abs() < 1e-12);
    assert!((c.combined.sigma - (w1 + w2).powf(-0.5)).abs() < 1e-15);
    assert_eq!(c.inputs.len(), 2);
    assert_eq!(c.inputs[0].label, "ch1");

    run(&["combine", both[0], "--name", "single", "--out", s(d)]);
    let one: CombineReport = serde_json::from_str(&read(d, "single.json")).unwrap();
    let (v, sig) = r1.param("tau1").unwrap();
    assert_eq!((one.combined.value, one.combined.sigma), (v, sig));
    assert!(one.consistency.is_none());
}

#[test]
fn schema_errors_for_mismatched_or_missing_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(&[
        "simulate",
        "--preset",
        "table2-ch1",
        "--seed",
        "1",
        "--out",
        s(d),
    ]);
    run(&["fit", s(&d.join("ch1.hist")), "--out", s(d)]);
    run(&[
        "fit",
        s(&d.join("ch1.hist")),
        "--model",
        "nonexp",
        "--out",
        s(d),
    ]);
    let (code, err) = exit_code(
        &["combine", "ch1.twoexp.fit.json", "ch1.nonexp.fit.json"],
        d,
    );
    assert_eq!(code, EXIT_SCHEMA, "{err}");
    let (code, err) = exit_code(&["combine", "ch1.twoexp.fit.json", "--param", "beta"], d);
    assert_eq!(code, EXIT_SCHEMA);
    assert!(err.contains("beta"), "{err}");
    fs::write(d.join("bad.json"), "{\"model\": \"twoexp\"}").unwrap();
    assert_eq!(exit_code(&["combine", "bad.json"], d).0, EXIT_SCHEMA);
}

#[test]
fn usage_io_and_numeric_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(&[
        "simulate",
        "--preset",
        "table2-ch1",
        "--seed",
        "1",
        "--out",
        s(d),
    ]);

    assert_eq!(
        exit_code(
            &["fit", "ch1.hist", "--range-lo", "50", "--range-hi", "120"],
            d
        )
        .0,
        EXIT_USAGE
    );
    assert_eq!(exit_code(&["fit"], d).0, EXIT_USAGE);
    assert_eq!(
        exit_code(&["simulate", "--preset", "table9"], d).0,
        EXIT_USAGE
    );
    assert_eq!(
        exit_code(&["theory", "--dist", "tbw", "--threshold", "5"], d).0,
        EXIT_USAGE
    );
    assert_eq!(
        exit_code(&["theory", "--dist", "bw", "--points", "0"], d).0,
        EXIT_USAGE
    );

    let (code, err) = exit_code(&["fit", "missing.hist"], d);
    assert_eq!(code, EXIT_IO);
    assert!(err.contains("missing.hist"), "{err}");
    let text = read(d, "ch1.hist").replacen("\n0.008\t", "\n0.008\tx", 1);
    fs::write(d.join("broken.hist"), text).unwrap();
    let (code, err) = exit_code(&["fit", "broken.hist"], d);
    assert_eq!(code, EXIT_IO);
    assert!(err.contains("broken.hist") && err.contains("line"), "{err}");

    // A starting point that makes the model vanish in the range.
    fs::write(
        d.join("zero.params"),
        "model: twoexp\nC1: 0\ntau1_ns: 1\nC2: 0\ntau2_ns: 2\nb: 0\nt0_ns: 2.24\n",
    )
    .unwrap();
    let (code, err) = exit_code(
        &[
            "fit",
            "ch1.hist",
            "--init",
            "zero.params",
            "--fix",
            "C1",
            "--fix",
            "C2",
            "--fix",
            "b",
        ],
        d,
    );
    assert_eq!(code, EXIT_NUMERIC, "{err}");

    let codes = [0, EXIT_USAGE, EXIT_IO, EXIT_SCHEMA, EXIT_NUMERIC];
    for (i, a) in codes.iter().enumerate() {
        assert!(codes[i + 1..].iter().all(|b| a != b));
    }
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("sim.conf"),
        "# channel 1\npreset = table2-ch1\nseed: 7\nirf-reference = true\nout = cfg\n",
    )
    .unwrap();
    let (code, err) = exit_code(&["simulate", "--config", "sim.conf"], d);
    assert_eq!(code, 0, "{err}");
    let (code, err) = exit_code(
        &[
            "simulate",
            "--preset",
            "table2-ch1",
            "--seed",
            "7",
            "--irf-reference",
            "--out",
            "flags",
        ],
        d,
    );
    assert_eq!(code, 0, "{err}");
    assert_eq!(
        read(&d.join("cfg"), "ch1.hist"),
        read(&d.join("flags"), "ch1.hist")
    );
    assert!(read(&d.join("cfg"), "ch1.hist").contains("# truth.irf_fwhm_ns: 0.12"));

    fs::write(d.join("bad.conf"), "seed = 7\nwidth 3\n").unwrap();
    let (code, err) = exit_code(&["simulate", "--config", "bad.conf"], d);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("bad.conf:2"), "{err}");
    fs::write(d.join("bad.conf"), "preset = table2-ch1\nsed = 7\n").unwrap();
    let (code, err) = exit_code(&["simulate", "--config", "bad.conf"], d);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("bad.conf:2") && err.contains("sed"), "{err}");
}

#[test]
fn output_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_tcspc"))
        .args(["theory", "--dist", "bw", "--points", "10"])
        .current_dir(dir.path())
        .env(tcspc_cli::OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("bw.survival.tsv").exists());
    assert!(target.join("bw.manifest.json").exists());
}

#[test]
fn theory_grid_of_one_point_gives_one_line() {
    let dir = tempfile::tempdir().unwrap();
    run(&[
        "theory",
        "--dist",
        "tbw",
        "--points",
        "1",
        "--out",
        s(dir.path()),
    ]);
    for f in ["tbw.survival.tsv", "tbw.intensity.tsv"] {
        let text = read(dir.path(), f);
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        let curve = DecayCurve::from_text(&text).unwrap();
        assert_eq!(curve.times, vec![0.01]);
    }
}

#[test]
fn breit_wigner_tail_is_flagged_not_scale_free() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "theory",
        "--dist",
        "bw",
        "--gamma",
        "0.5769",
        "--out",
        s(dir.path()),
    ]);
    assert!(
        out.summary
            .iter()
            .any(|l| l.starts_with("intensity tail: not scale-free")),
        "{:?}",
        out.summary
    );
    let text = read(dir.path(), "bw.intensity.tsv");
    assert!(text.contains("# tail_intensity: not scale-free"));
    // The curve itself is the exponential e^{-Γt}.
    let curve = DecayCurve::from_text(&read(dir.path(), "bw.survival.tsv")).unwrap();
    for (t, p) in curve.times.iter().zip(&curve.values).take(150) {
        assert!((p - (-0.5769 * t).exp()).abs() < 1e-6, "t = {t}");
    }
}

#[test]
fn truncated_breit_wigner_intensity_tail_is_inverse_cube() {
    let dir = tempfile::tempdir().unwrap();
    run(&[
        "theory",
        "--dist",
        "tbw",
        "--mass",
        "1",
        "--gamma",
        "1",
        "--threshold",
        "0",
        "--t-min",
        "1",
        "--t-max",
        "2000",
        "--tail-from",
        "200",
        "--out",
        s(dir.path()),
    ]);
    let summary: tcspc_cli::theory::TheorySummary =
        serde_json::from_str(&read(dir.path(), "tbw.summary.json")).unwrap();
    let tail = summary
        .tails
        .iter()
        .find(|t| t.curve == "intensity")
        .unwrap();
    assert!(tail.scale_free);
    assert!((tail.slope.unwrap() + 3.0).abs() < 0.05, "{:?}", tail.slope);
    let surv = summary
        .tails
        .iter()
        .find(|t| t.curve == "survival")
        .unwrap();
    assert!((surv.slope.unwrap() + 2.0).abs() < 0.05);
}
