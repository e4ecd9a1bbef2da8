//! `tcspc theory`: survival probability and intensity curves on a log grid.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tcspc::spectral::{log_time_grid, tail_exponent, DecayCurve, EnergyDistribution};

use crate::simulate::{DistArgs, DistKind};
use crate::{io, CliError, Produced};

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TheoryArgs {
    #[arg(long, value_enum)]
    pub dist: DistKind,
    #[command(flatten)]
    pub dist_args: DistArgs,
    /// First grid time, ns.
    #[arg(long, default_value_t = 0.01)]
    pub t_min: f64,
    /// Last grid time, ns.
    #[arg(long, default_value_t = 100.0)]
    pub t_max: f64,
    /// Number of log-spaced grid points.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Initial population scaling the intensity.
    #[arg(long, default_value_t = 1.0)]
    pub n0: f64,
    /// Start of the tail-exponent window, ns; defaults to t-max/10.
    #[arg(long)]
    pub tail_from: Option<f64>,
    /// End of the tail-exponent window, ns; defaults to t-max.
    #[arg(long)]
    pub tail_to: Option<f64>,
    /// Output file stem; defaults to the distribution name.
    #[arg(long)]
    pub name: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TheoryArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.dist_args.check(self.dist)?;
        log_time_grid(self.t_min, self.t_max, self.points)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.tail_from.get_or_insert(self.t_max / 10.0);
        self.tail_to.get_or_insert(self.t_max);
        let name = self
            .name
            .take()
            .unwrap_or_else(|| dist_name(self.dist).to_string());
        io::check_label(&name)?;
        self.name = Some(name);
        Ok(self)
    }
}

fn dist_name(kind: DistKind) -> &'static str {
    match kind {
        DistKind::Bw => "bw",
        DistKind::Tbw => "tbw",
        DistKind::TbwGauss => "tbw-gauss",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub curve: String,
    pub window_ns: [f64; 2],
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    pub r_squared: Option<f64>,
    pub n_samples: Option<usize>,
    pub scale_free: bool,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub distribution: Vec<(String, String)>,
    /// `null` when divergent.
    pub mean_energy_per_ns: Option<f64>,
    pub energy_stddev_per_ns: Option<f64>,
    pub zeno_time_ns: Option<f64>,
    pub points: usize,
    pub tails: Vec<TailSummary>,
}

fn tail_summary(curve: &DecayCurve, name: &str, window: (f64, f64)) -> TailSummary {
    match tail_exponent(curve, window) {
        Ok(fit) => {
            let scale_free = fit.is_scale_free();
            TailSummary {
                curve: name.into(),
                window_ns: [window.0, window.1],
                slope: Some(fit.slope),
                stderr: Some(fit.stderr),
                r_squared: Some(fit.r_squared),
                n_samples: Some(fit.n_samples),
                scale_free,
                verdict: if scale_free {
                    format!("scale-free, exponent {:.4} ± {:.4}", fit.slope, fit.stderr)
                } else {
                    format!("not scale-free (R² = {:.6})", fit.r_squared)
                },
            }
        }
        Err(e) => TailSummary {
            curve: name.into(),
            window_ns: [window.0, window.1],
            slope: None,
            stderr: None,
            r_squared: None,
            n_samples: None,
            scale_free: false,
            verdict: format!("not scale-free ({e})"),
        },
    }
}

pub fn execute(args: &TheoryArgs, out_dir: &Path) -> Result<Produced, CliError> {
    let dist: EnergyDistribution = args.dist_args.build(args.dist)?;
    let times = log_time_grid(args.t_min, args.t_max, args.points)?;
    let survival = DecayCurve::survival(&dist, &times)?;
    let intensity = DecayCurve::intensity(&dist, &times, args.n0)?;
    let header = dist.header_lines();
    let stats = dist.spectral_summary()?;
    let window = (
        args.tail_from.unwrap_or(args.t_max / 10.0),
        args.tail_to.unwrap_or(args.t_max),
    );
    let tails = vec![
        tail_summary(&survival, "survival", window),
        tail_summary(&intensity, "intensity", window),
    ];
    let summary_doc = TheorySummary {
        distribution: header
            .iter()
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect(),
        mean_energy_per_ns: stats.mean_energy.value(),
        energy_stddev_per_ns: stats.energy_stddev.value(),
        zeno_time_ns: stats.zeno_time,
        points: times.len(),
        tails: tails.clone(),
    };

    let name = args
        .name
        .clone()
        .unwrap_or_else(|| dist_name(args.dist).to_string());
    let files = vec![
        format!("{name}.survival.tsv"),
        format!("{name}.intensity.tsv"),
        format!("{name}.summary.json"),
    ];
    let tail_line = |t: &TailSummary| format!("tail_{}: {}", t.curve, t.verdict);
    let mut s_header = header.clone();
    s_header.push(tail_line(&tails[0]));
    let mut i_header = header;
    i_header.push(tail_line(&tails[1]));
    io::write_atomic(&out_dir.join(&files[0]), &survival.to_text(&s_header))?;
    io::write_atomic(&out_dir.join(&files[1]), &intensity.to_text(&i_header))?;
    let mut json = serde_json::to_string_pretty(&summary_doc)
        .map_err(|e| tcspc::Error::Schema(e.to_string()))?;
    json.push('\n');
    io::write_atomic(&out_dir.join(&files[2]), &json)?;

    let fmt = |v: Option<f64>| v.map_or("divergent".to_string(), |x| x.to_string());
    let summary = vec![
        format!(
            "{} points from {} to {} ns; <E> = {}, sigma_E = {}",
            times.len(),
            args.t_min,
            args.t_max,
            fmt(summary_doc.mean_energy_per_ns),
            fmt(summary_doc.energy_stddev_per_ns)
        ),
        format!("survival tail: {}", tails[0].verdict),
        format!("intensity tail: {}", tails[1].verdict),
    ];
    Ok(Produced {
        files,
        inputs: Vec::new(),
        seed: None,
        manifest_stem: name,
        summary,
    })
}
