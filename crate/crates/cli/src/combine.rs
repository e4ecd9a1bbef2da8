//! `tcspc combine`: inverse-variance mean of one parameter across fit reports.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tcspc::combine::{
    consistency_check, inverse_variance_mean, inverse_variance_mean_scaled, Consistency, Estimate,
    WeightedEstimate,
};
use tcspc::fitter::FitReport;

use crate::{io, CliError, Produced};

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CombineArgs {
    /// Fit report files.
    pub reports: Vec<PathBuf>,
    /// Parameter to combine (tau1, tau2, C1, ...).
    #[arg(long, default_value = "tau1")]
    pub param: String,
    /// Direct estimate `value:sigma[:label]` (repeatable).
    #[arg(long)]
    pub estimate: Vec<String>,
    /// Inflate sigma by sqrt(chi2/(n-1)) when that exceeds 1.
    #[arg(long)]
    pub scale_factor: bool,
    /// Pairwise consistency threshold in combined standard deviations.
    #[arg(long, default_value_t = 2.0)]
    pub k_sigma: f64,
    /// Output name; defaults to `combine-<param>`.
    #[arg(long)]
    pub name: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombineReport {
    pub param: String,
    pub model: Option<String>,
    pub inputs: Vec<Estimate>,
    pub sources: Vec<String>,
    pub combined: WeightedEstimate,
    /// Absent for a single input.
    pub consistency: Option<Consistency>,
}

impl CombineArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.reports = self
            .reports
            .iter()
            .map(|p| io::absolute(p))
            .collect::<Result<_, _>>()?;
        if self.reports.is_empty() && self.estimate.is_empty() {
            return Err(CliError::Usage(
                "give report files or --estimate values".into(),
            ));
        }
        if !(self.k_sigma > 0.0 && self.k_sigma.is_finite()) {
            return Err(CliError::Usage(format!(
                "--k-sigma must be positive, got {}",
                self.k_sigma
            )));
        }
        let name = self
            .name
            .take()
            .unwrap_or_else(|| format!("combine-{}", self.param));
        io::check_label(&name)?;
        self.name = Some(name);
        for e in &self.estimate {
            parse_estimate(e, 0)?;
        }
        Ok(self)
    }
}

fn parse_estimate(text: &str, index: usize) -> Result<Estimate, CliError> {
    let bad = || CliError::Usage(format!("--estimate '{text}': expected value:sigma[:label]"));
    let mut parts = text.splitn(3, ':');
    let value: f64 = parts
        .next()
        .ok_or_else(bad)?
        .trim()
        .parse()
        .map_err(|_| bad())?;
    let sigma: f64 = parts
        .next()
        .ok_or_else(bad)?
        .trim()
        .parse()
        .map_err(|_| bad())?;
    let label = parts
        .next()
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| format!("estimate{}", index + 1));
    Ok(Estimate::new(value, sigma, label)?)
}

pub fn execute(args: &CombineArgs, out_dir: &Path) -> Result<Produced, CliError> {
    let mut inputs = Vec::new();
    let mut sources = Vec::new();
    let mut model = None;
    for path in &args.reports {
        let report =
            FitReport::from_json(&io::read_text(path)?).map_err(|e| CliError::in_file(path, e))?;
        match model {
            None => model = Some(report.model),
            Some(m) if m != report.model => {
                return Err(tcspc::Error::Schema(format!(
                    "{}: {} report cannot be combined with {m} reports",
                    path.display(),
                    report.model
                ))
                .into())
            }
            _ => {}
        }
        let e = Estimate::from_report(&report, &args.param).map_err(|e| match e {
            tcspc::Error::Schema(m) => tcspc::Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })?;
        inputs.push(e);
        sources.push(path.display().to_string());
    }
    for (i, text) in args.estimate.iter().enumerate() {
        inputs.push(parse_estimate(text, i)?);
        sources.push("command line".into());
    }
    let combined = if args.scale_factor {
        inverse_variance_mean_scaled(&inputs)?
    } else {
        inverse_variance_mean(&inputs)?
    };
    let consistency = if inputs.len() > 1 {
        Some(consistency_check(&inputs, args.k_sigma)?)
    } else {
        None
    };
    let report = CombineReport {
        param: args.param.clone(),
        model: model.map(|m| m.to_string()),
        inputs,
        sources,
        combined,
        consistency,
    };
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| format!("combine-{}", args.param));
    let file = format!("{name}.json");
    let mut json =
        serde_json::to_string_pretty(&report).map_err(|e| tcspc::Error::Schema(e.to_string()))?;
    json.push('\n');
    io::write_atomic(&out_dir.join(&file), &json)?;

    let c = &report.combined;
    let mut summary = vec![format!(
        "{} = {} ± {} from {} inputs (chi2 = {:.3}, scale factor {})",
        args.param, c.value, c.sigma, c.n_inputs, c.chi2_consistency, c.scale_factor
    )];
    if let Some(cons) = &report.consistency {
        for p in &cons.pulls {
            summary.push(format!("  pull {} vs {}: {:.3}", p.first, p.second, p.pull));
        }
        if !cons.consistent {
            summary.push(format!("  inputs disagree beyond {} sigma", args.k_sigma));
        }
    }
    Ok(Produced {
        files: vec![file],
        inputs: args.reports.clone(),
        seed: None,
        manifest_stem: name,
        summary,
    })
}
