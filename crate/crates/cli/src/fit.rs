//! `tcspc fit`: fit a decay model to a histogram file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tcspc::fitter::{
    fit_data, initial_guess_data, param_index, single_exponential_guess, FitData, FitOptions,
    FitResult,
};
use tcspc::presets::{range_preset, t0_preset, FIT_RANGE};
use tcspc::{DecayModel, Histogram, ModelKind};

use crate::{io, CliError, Produced};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModel {
    /// Two exponentials plus background.
    Twoexp,
    /// Exponential plus power law plus background.
    Nonexp,
    /// One exponential plus background (two-exponential form, second component frozen at zero).
    Single,
}

impl FitModel {
    pub fn kind(self) -> ModelKind {
        match self {
            FitModel::Nonexp => ModelKind::NonExp,
            FitModel::Twoexp | FitModel::Single => ModelKind::TwoExp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FitModel::Twoexp => "twoexp",
            FitModel::Nonexp => "nonexp",
            FitModel::Single => "single",
        }
    }
}

/// Fit range, origin and minimizer flags shared with `roundtrip`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitSettings {
    /// Lower end of the fit range, ns (bin centers).
    #[arg(long)]
    pub range_lo: Option<f64>,
    /// Upper end of the fit range, ns (bin centers).
    #[arg(long)]
    pub range_hi: Option<f64>,
    /// Named fit range (fit-range-paper); the default range when no bounds are given.
    #[arg(long)]
    pub range_preset: Option<String>,
    /// Model time origin, ns; defaults to the histogram peak.
    #[arg(long, conflicts_with = "t0_preset")]
    pub t0: Option<f64>,
    /// Named time origin (table1-t0).
    #[arg(long)]
    pub t0_preset: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    /// Convergence threshold on the scaled gradient norm.
    #[arg(long, default_value_t = 1e-10)]
    pub gtol: f64,
    /// Convergence threshold on the relative step.
    #[arg(long, default_value_t = 1e-12)]
    pub steptol: f64,
    /// Initial Marquardt damping.
    #[arg(long, default_value_t = 1e-3)]
    pub damping: f64,
    /// Hold a parameter at its initial value (repeatable).
    #[arg(long)]
    pub fix: Vec<String>,
}

impl FitSettings {
    /// Presets become numbers; explicit values must agree with them.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let preset = match (&self.range_preset, self.range_lo, self.range_hi) {
            (Some(name), _, _) => Some(range_preset(name)?),
            (None, None, None) => Some(FIT_RANGE),
            _ => None,
        };
        if let Some((lo, hi)) = preset {
            if self.range_lo.is_some_and(|v| v != lo) || self.range_hi.is_some_and(|v| v != hi) {
                return Err(CliError::Usage(
                    "--range-preset conflicts with --range-lo/--range-hi".into(),
                ));
            }
            self.range_lo = Some(lo);
            self.range_hi = Some(hi);
        }
        if self.range_lo.is_none() || self.range_hi.is_none() {
            return Err(CliError::Usage(
                "give both --range-lo and --range-hi".into(),
            ));
        }
        if let Some(name) = &self.t0_preset {
            let t0 = t0_preset(name)?;
            if self.t0.is_some_and(|v| v != t0) {
                return Err(CliError::Usage("--t0-preset conflicts with --t0".into()));
            }
            self.t0 = Some(t0);
        }
        Ok(self)
    }

    pub fn range(&self) -> (f64, f64) {
        (
            self.range_lo.unwrap_or(FIT_RANGE.0),
            self.range_hi.unwrap_or(FIT_RANGE.1),
        )
    }

    pub fn options(&self, model: FitModel) -> Result<FitOptions, CliError> {
        let mut opts = FitOptions {
            range: self.range(),
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gtol,
            step_tolerance: self.steptol,
            damping_init: self.damping,
            t0: self.t0,
            ..Default::default()
        };
        if model == FitModel::Single {
            opts = opts.single_exponential();
        }
        for name in &self.fix {
            opts.fixed
                [param_index(model.kind(), name).map_err(|e| CliError::Usage(e.to_string()))?] =
                true;
        }
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Histogram file.
    pub hist: PathBuf,
    #[arg(long, value_enum, default_value_t = FitModel::Twoexp)]
    pub model: FitModel,
    #[command(flatten)]
    pub settings: FitSettings,
    /// Starting parameters (`key: value` file); default is the automatic initial guess.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Channel label for the report; defaults to the histogram's label.
    #[arg(long)]
    pub label: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl FitArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.hist = io::absolute(&self.hist)?;
        self.init = self.init.as_deref().map(io::absolute).transpose()?;
        self.settings = self.settings.resolve()?;
        self.settings.options(self.model)?;
        Ok(self)
    }
}

/// Fit prepared data from the automatic guess or `init`.
pub fn run_fit(
    model: FitModel,
    init: Option<&DecayModel>,
    data: &FitData,
    opts: &FitOptions,
) -> Result<FitResult, CliError> {
    let start = match init {
        Some(m) => {
            if m.kind() != model.kind() {
                return Err(CliError::Usage(format!(
                    "initial parameters are {} but --model {} was given",
                    m.kind(),
                    model.name()
                )));
            }
            let mut m = *m;
            if model == FitModel::Single {
                let mut v = m.values();
                v[2] = 0.0;
                m = m.with_values(v);
            }
            m
        }
        None if model == FitModel::Single => single_exponential_guess(data)?,
        None => initial_guess_data(model.kind(), data)?,
    };
    Ok(fit_data(&start, data, opts)?)
}

pub fn read_histogram(path: &Path) -> Result<Histogram, CliError> {
    Histogram::parse(&io::read_text(path)?).map_err(|e| CliError::in_file(path, e))
}

pub fn execute(args: &FitArgs, out_dir: &Path) -> Result<Produced, CliError> {
    let hist = read_histogram(&args.hist)?;
    let opts = args.settings.options(args.model)?;
    let data = FitData::from_histogram(&hist, opts.range, opts.t0)?;
    let init = match &args.init {
        Some(p) => {
            Some(DecayModel::from_kv(&io::read_text(p)?).map_err(|e| CliError::in_file(p, e))?)
        }
        None => None,
    };
    let result = run_fit(args.model, init.as_ref(), &data, &opts)?;
    let label = args
        .label
        .clone()
        .unwrap_or_else(|| hist.channel_label().to_string());
    let report = result.report(&label);

    let stem = args
        .hist
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "hist".into());
    let base = format!("{stem}.{}", args.model.name());
    let (curve, residuals) = plot_data(&result.params, &data)?;
    let files = vec![
        format!("{base}.fit.json"),
        format!("{base}.curve.tsv"),
        format!("{base}.residuals.tsv"),
    ];
    io::write_atomic(&out_dir.join(&files[0]), &report.to_json()?)?;
    io::write_atomic(&out_dir.join(&files[1]), &curve)?;
    io::write_atomic(&out_dir.join(&files[2]), &residuals)?;

    let mut summary = vec![format!(
        "{} fit of {label}: chi2/ndf = {:.4} ({} points, {} free), {} after {} iterations",
        args.model.name(),
        result.reduced_chi2,
        result.n_points,
        result.n_free_params,
        if result.converged {
            "converged"
        } else {
            "NOT converged"
        },
        result.iterations
    )];
    let se = result.std_errors();
    for (k, (name, v)) in result
        .params
        .param_names()
        .iter()
        .zip(result.params.values())
        .enumerate()
    {
        let fixed = if result.fixed[k] { " (fixed)" } else { "" };
        match se {
            Some(s) if !result.fixed[k] => summary.push(format!("  {name} = {v} ± {}", s[k])),
            _ => summary.push(format!("  {name} = {v}{fixed}")),
        }
    }
    if let Some(d) = &result.rank_deficiency {
        summary.push(format!("  covariance is rank deficient along {d}"));
    }
    Ok(Produced {
        files,
        inputs: std::iter::once(args.hist.clone())
            .chain(args.init.clone())
            .collect(),
        seed: hist.seed(),
        manifest_stem: base,
        summary,
    })
}

/// Model curve `t, I(t)` and Pearson residuals `t, (Iₙ - I(tₙ))/√I(tₙ)` at the fitted bin centers.
fn plot_data(model: &DecayModel, data: &FitData) -> Result<(String, String), CliError> {
    let mut curve = String::from("# t_ns\tmodel_counts\n");
    let mut resid = String::from("# t_ns\tpearson_residual\n");
    for (&t, &n) in data.times().iter().zip(data.values()) {
        let m = model.eval(t)?;
        let _ = writeln!(curve, "{t}\t{m}");
        let _ = writeln!(resid, "{t}\t{}", (n - m) / m.sqrt());
    }
    Ok((curve, resid))
}
