//! `tcspc roundtrip`: simulate from a preset, fit, and collect replicate statistics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tcspc::fitter::{param_index, FitData};
use tcspc::presets::model_preset;
use tcspc::synth::{replicate_seed, simulate_model};

use crate::fit::{run_fit, FitModel, FitSettings};
use crate::simulate::AcquisitionArgs;
use crate::{io, CliError, Produced};

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RoundtripArgs {
    /// Truth parameter set.
    #[arg(long, default_value = "table2-ch1")]
    pub preset: String,
    /// Model fitted to each replicate.
    #[arg(long, value_enum, default_value_t = FitModel::Twoexp)]
    pub model: FitModel,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Parameter whose recovery is summarized.
    #[arg(long, default_value = "tau1")]
    pub param: String,
    #[command(flatten)]
    pub acquisition: AcquisitionArgs,
    #[command(flatten)]
    pub settings: FitSettings,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file stem.
    #[arg(long, default_value = "roundtrip")]
    pub name: String,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RoundtripArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.acquisition = self.acquisition.resolve()?;
        self.settings = self.settings.resolve()?;
        self.settings.options(self.model)?;
        model_preset(&self.preset)?;
        param_index(self.model.kind(), &self.param).map_err(|e| CliError::Usage(e.to_string()))?;
        io::check_label(&self.name)?;
        if self.replicates == 0 {
            return Err(CliError::Usage("--replicates must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(self)
    }
}

/// One simulate-and-fit replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub converged: bool,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub reduced_chi2: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripSummary {
    pub preset: String,
    pub model: String,
    pub param: String,
    /// Truth value when the fitted family matches the preset.
    pub truth: Option<f64>,
    pub replicates: usize,
    pub converged: usize,
    /// Replicates with a value and standard error.
    pub usable: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation of the estimates.
    pub scatter: Option<f64>,
    pub mean_std_error: Option<f64>,
    pub scatter_over_std_error: Option<f64>,
    /// Median of `|estimate - truth| / std_error`.
    pub median_abs_pull: Option<f64>,
    /// Fraction with `|estimate - truth| ≤ std_error`.
    pub coverage_1sigma: Option<f64>,
    pub mean_reduced_chi2: Option<f64>,
    /// Count with reduced χ² in [0.9, 1.1].
    pub reduced_chi2_in_band: usize,
}

fn one(args: &RoundtripArgs, index: usize) -> Replicate {
    let seed = replicate_seed(args.acquisition.seed, index as u64);
    let mut rep = Replicate {
        index,
        seed,
        converged: false,
        value: None,
        std_error: None,
        reduced_chi2: None,
        iterations: 0,
        error: None,
    };
    let attempt = || -> Result<_, CliError> {
        let truth = model_preset(&args.preset)?;
        let cfg = args.acquisition.config(seed)?;
        let hist = simulate_model(&truth, &cfg, (0.0, cfg.window), "replicate")?;
        let opts = args.settings.options(args.model)?;
        let data = FitData::from_histogram(&hist, opts.range, opts.t0)?;
        run_fit(args.model, None, &data, &opts)
    };
    match attempt() {
        Ok(r) => {
            let k = param_index(args.model.kind(), &args.param).expect("checked in resolve");
            rep.converged = r.converged;
            rep.value = Some(r.params.values()[k]);
            rep.std_error = r.std_errors().map(|s| s[k]);
            rep.reduced_chi2 = Some(r.reduced_chi2);
            rep.iterations = r.iterations;
        }
        Err(e) => rep.error = Some(e.to_string()),
    }
    rep
}

/// Replicates in index order; thread count does not change the results.
pub fn replicates(args: &RoundtripArgs) -> Result<Vec<Replicate>, CliError> {
    let work = || {
        (0..args.replicates)
            .into_par_iter()
            .map(|i| one(args, i))
            .collect()
    };
    match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn summarize(args: &RoundtripArgs, reps: &[Replicate]) -> Result<RoundtripSummary, CliError> {
    let truth_model = model_preset(&args.preset)?;
    let truth = (truth_model.kind() == args.model.kind()).then(|| {
        truth_model.values()[param_index(args.model.kind(), &args.param).expect("checked")]
    });
    let usable: Vec<(f64, f64)> = reps
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| Some((r.value?, r.std_error?)))
        .collect();
    let n = usable.len() as f64;
    let mean = (n > 0.0).then(|| usable.iter().map(|p| p.0).sum::<f64>() / n);
    let scatter = mean
        .filter(|_| n > 1.0)
        .map(|m| (usable.iter().map(|p| (p.0 - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    let mean_se = (n > 0.0).then(|| usable.iter().map(|p| p.1).sum::<f64>() / n);
    let pulls: Option<Vec<f64>> =
        truth.map(|t| usable.iter().map(|p| (p.0 - t).abs() / p.1).collect());
    let chis: Vec<f64> = reps.iter().filter_map(|r| r.reduced_chi2).collect();
    Ok(RoundtripSummary {
        preset: args.preset.clone(),
        model: args.model.name().into(),
        param: args.param.clone(),
        truth,
        replicates: reps.len(),
        converged: reps.iter().filter(|r| r.converged).count(),
        usable: usable.len(),
        mean,
        scatter,
        mean_std_error: mean_se,
        scatter_over_std_error: scatter.zip(mean_se).map(|(s, e)| s / e),
        median_abs_pull: pulls.clone().and_then(median),
        coverage_1sigma: pulls
            .filter(|p| !p.is_empty())
            .map(|p| p.iter().filter(|&&x| x <= 1.0).count() as f64 / p.len() as f64),
        mean_reduced_chi2: (!chis.is_empty()).then(|| chis.iter().sum::<f64>() / chis.len() as f64),
        reduced_chi2_in_band: chis.iter().filter(|&&c| (0.9..=1.1).contains(&c)).count(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| x.to_string())
}

pub fn execute(args: &RoundtripArgs, out_dir: &Path) -> Result<Produced, CliError> {
    let reps = replicates(args)?;
    let summary = summarize(args, &reps)?;

    let mut table = String::from(
        "# index\tseed\tconverged\tvalue\tstd_error\treduced_chi2\titerations\terror\n",
    );
    for r in &reps {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.index,
            r.seed,
            r.converged,
            opt(r.value),
            opt(r.std_error),
            opt(r.reduced_chi2),
            r.iterations,
            r.error.as_deref().unwrap_or("-").replace(['\t', '\n'], " ")
        );
    }
    let files = vec![
        format!("{}.replicates.tsv", args.name),
        format!("{}.summary.json", args.name),
    ];
    io::write_atomic(&out_dir.join(&files[0]), &table)?;
    let mut json =
        serde_json::to_string_pretty(&summary).map_err(|e| tcspc::Error::Schema(e.to_string()))?;
    json.push('\n');
    io::write_atomic(&out_dir.join(&files[1]), &json)?;

    let lines = vec![
        format!(
            "{} replicates of {} fitted with {}: {} converged, {} usable",
            summary.replicates, summary.preset, summary.model, summary.converged, summary.usable
        ),
        format!(
            "  {}: truth {}, mean {}, scatter {}, mean std error {}, ratio {}",
            summary.param,
            opt(summary.truth),
            opt(summary.mean),
            opt(summary.scatter),
            opt(summary.mean_std_error),
            opt(summary.scatter_over_std_error)
        ),
        format!(
            "  median |pull| {}, 1-sigma coverage {}, reduced chi2 in [0.9, 1.1]: {}/{}",
            opt(summary.median_abs_pull),
            opt(summary.coverage_1sigma),
            summary.reduced_chi2_in_band,
            summary.replicates
        ),
    ];
    Ok(Produced {
        files,
        inputs: Vec::new(),
        seed: Some(args.acquisition.seed),
        manifest_stem: args.name.clone(),
        summary: lines,
    })
}
