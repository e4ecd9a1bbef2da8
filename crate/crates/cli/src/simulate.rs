//! `tcspc simulate`: Poisson histograms from decay models or energy distributions.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use tcspc::presets::model_preset;
use tcspc::spectral::EnergyDistribution;
use tcspc::synth::{
    convolve_irf, expected_counts, replicate_seed, sample_poisson, spectral_expected_counts,
    AcquisitionConfig, REFERENCE_IRF_FWHM_NS,
};
use tcspc::{DecayModel, Histogram, ModelKind};

use crate::{io, CliError, Produced};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistKind {
    /// Full-line Breit-Wigner.
    Bw,
    /// Breit-Wigner above a threshold.
    Tbw,
    /// Truncated Breit-Wigner with a Gaussian high-energy cutoff.
    TbwGauss,
}

/// Energy distribution flags shared with `theory`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DistArgs {
    /// Peak energy M, ns⁻¹.
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// Width Γ, ns⁻¹.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Threshold energy, ns⁻¹ (tbw, tbw-gauss).
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// Gaussian cutoff scale Λ, ns⁻¹ (tbw-gauss).
    #[arg(long)]
    pub cutoff: Option<f64>,
}

impl DistArgs {
    pub fn build(&self, kind: DistKind) -> Result<EnergyDistribution, CliError> {
        let d = match kind {
            DistKind::Bw => EnergyDistribution::breit_wigner(self.mass, self.gamma)?,
            DistKind::Tbw => EnergyDistribution::truncated(self.mass, self.gamma, self.threshold)?,
            DistKind::TbwGauss => {
                let cutoff = self
                    .cutoff
                    .ok_or_else(|| CliError::Usage("--dist tbw-gauss needs --cutoff".into()))?;
                EnergyDistribution::gauss_cutoff(self.mass, self.gamma, self.threshold, cutoff)?
            }
        };
        Ok(d.normalized()?)
    }

    /// Rejects invalid distribution parameters as a usage error.
    pub fn check(&self, kind: DistKind) -> Result<(), CliError> {
        match self.build(kind) {
            Err(CliError::Core(tcspc::Error::Domain(m))) => Err(CliError::Usage(m)),
            other => other.map(|_| ()),
        }
    }
}

/// Acquisition flags shared with `roundtrip`.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AcquisitionArgs {
    /// Histogram window, ns.
    #[arg(long, default_value_t = 100.0)]
    pub window: f64,
    /// Bin width, ns.
    #[arg(long, default_value_t = 0.008)]
    pub bin_width: f64,
    /// Excitation repetition rate, MHz.
    #[arg(long, default_value_t = 10.0)]
    pub rep_rate: f64,
    /// Gaussian instrument response FWHM, ns.
    #[arg(long, conflicts_with = "irf_reference")]
    pub irf_fwhm: Option<f64>,
    /// Use the 120 ps instrument response of the reference setup.
    #[arg(long)]
    pub irf_reference: bool,
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl AcquisitionArgs {
    /// Folds `--irf-reference` into `--irf-fwhm`.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.irf_reference {
            match self.irf_fwhm {
                Some(f) if f != REFERENCE_IRF_FWHM_NS => {
                    return Err(CliError::Usage(
                        "--irf-reference conflicts with --irf-fwhm".into(),
                    ))
                }
                _ => self.irf_fwhm = Some(REFERENCE_IRF_FWHM_NS),
            }
        }
        self.config(self.seed)?.n_bins()?;
        Ok(self)
    }

    pub fn config(&self, seed: u64) -> Result<AcquisitionConfig, CliError> {
        let cfg = AcquisitionConfig {
            window: self.window,
            bin_width: self.bin_width,
            rep_rate_mhz: self.rep_rate,
            irf_fwhm: self.irf_fwhm,
            seed,
        };
        cfg.n_bins()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Model family for `--preset` and `--params`.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Named parameter set, one channel each (table2-ch1, table2-ch2, ...).
    #[arg(long)]
    pub preset: Vec<String>,
    /// Parameter file (`key: value` lines as written in histogram headers), one channel each.
    #[arg(long)]
    pub params: Vec<PathBuf>,
    /// Simulate the first-principles decay of an energy distribution instead.
    #[arg(long, value_enum, conflicts_with_all = ["preset", "params"])]
    pub dist: Option<DistKind>,
    #[command(flatten)]
    pub dist_args: DistArgs,
    /// Initial excited population for `--dist` (expected total photons).
    #[arg(long, default_value_t = 1e6)]
    pub n0: f64,
    /// Override the model time origin, ns.
    #[arg(long)]
    pub t0: Option<f64>,
    /// Signal is generated only for bin centers in [signal-lo, signal-hi], ns.
    #[arg(long)]
    pub signal_lo: Option<f64>,
    #[arg(long)]
    pub signal_hi: Option<f64>,
    #[command(flatten)]
    pub acquisition: AcquisitionArgs,
    /// Channel labels (file names), one per channel.
    #[arg(long)]
    pub label: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One histogram to generate.
enum Source {
    Model { model: DecayModel, origin: String },
    Dist(EnergyDistribution),
}

impl SimulateArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.acquisition = self.acquisition.resolve()?;
        self.params = self
            .params
            .iter()
            .map(|p| io::absolute(p))
            .collect::<Result<_, _>>()?;
        self.signal_lo.get_or_insert(0.0);
        self.signal_hi.get_or_insert(self.acquisition.window);
        if let Some(kind) = self.dist {
            self.dist_args.check(kind)?;
        }
        let n = self.channel_count();
        if n == 0 {
            return Err(CliError::Usage(
                "nothing to simulate: give --preset, --params or --dist".into(),
            ));
        }
        if self.label.is_empty() {
            self.label = self.default_labels();
        }
        if self.label.len() != n {
            return Err(CliError::Usage(format!(
                "{} labels for {n} channels",
                self.label.len()
            )));
        }
        for l in &self.label {
            io::check_label(l)?;
        }
        let mut sorted = self.label.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return Err(CliError::Usage("channel labels must be distinct".into()));
        }
        Ok(self)
    }

    fn channel_count(&self) -> usize {
        if self.dist.is_some() {
            1
        } else {
            self.preset.len() + self.params.len()
        }
    }

    fn default_labels(&self) -> Vec<String> {
        if let Some(d) = self.dist {
            return vec![d
                .to_possible_value()
                .expect("not skipped")
                .get_name()
                .to_string()];
        }
        let mut labels: Vec<String> = self
            .preset
            .iter()
            .map(|p| {
                let base = p.strip_suffix("-nonexp").unwrap_or(p);
                let short = base.strip_prefix("table2-").unwrap_or(base);
                match self.model {
                    Some(ModelKind::NonExp) => format!("{short}-nonexp"),
                    _ if p.ends_with("-nonexp") => format!("{short}-nonexp"),
                    _ => short.to_string(),
                }
            })
            .collect();
        labels.extend(self.params.iter().map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "channel".into())
        }));
        labels
    }

    fn sources(&self) -> Result<Vec<Source>, CliError> {
        if let Some(kind) = self.dist {
            return Ok(vec![Source::Dist(self.dist_args.build(kind)?)]);
        }
        let mut out = Vec::new();
        for name in &self.preset {
            let name = match self.model {
                Some(ModelKind::NonExp) if !name.ends_with("-nonexp") => format!("{name}-nonexp"),
                _ => name.clone(),
            };
            let model = model_preset(&name)?;
            check_kind(self.model, &model, &name)?;
            out.push(Source::Model {
                model,
                origin: name,
            });
        }
        for path in &self.params {
            let model = DecayModel::from_kv(&io::read_text(path)?)
                .map_err(|e| CliError::in_file(path, e))?;
            let origin = path.display().to_string();
            check_kind(self.model, &model, &origin)?;
            out.push(Source::Model { model, origin });
        }
        if let Some(t0) = self.t0 {
            for s in &mut out {
                if let Source::Model { model, .. } = s {
                    *model = model.with_t0(t0);
                }
            }
        }
        Ok(out)
    }
}

fn check_kind(
    requested: Option<ModelKind>,
    model: &DecayModel,
    origin: &str,
) -> Result<(), CliError> {
    match requested {
        Some(k) if k != model.kind() => Err(CliError::Usage(format!(
            "'{origin}' is a {} model but --model {k} was given",
            model.kind()
        ))),
        _ => Ok(()),
    }
}

fn annotate(hist: Histogram, source: &Source, args: &SimulateArgs) -> Result<Histogram, CliError> {
    let mut notes: Vec<(String, String)> = Vec::new();
    match source {
        Source::Model { model, origin } => {
            notes.push(("source".into(), origin.clone()));
            notes.push(("model".into(), model.kind().to_string()));
            for (name, v) in model.param_names().iter().zip(model.values()) {
                notes.push((name.to_string(), v.to_string()));
            }
            notes.push(("t0_ns".into(), model.t0().to_string()));
        }
        Source::Dist(d) => {
            for line in d.header_lines() {
                if let Some((k, v)) = line.split_once(':') {
                    notes.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
            notes.push(("n0".into(), args.n0.to_string()));
        }
    }
    notes.push((
        "signal_range_ns".into(),
        format!(
            "{} {}",
            args.signal_lo.unwrap_or(0.0),
            args.signal_hi.unwrap_or(args.acquisition.window)
        ),
    ));
    notes.push(("rep_rate_mhz".into(), args.acquisition.rep_rate.to_string()));
    notes.push((
        "irf_fwhm_ns".into(),
        args.acquisition
            .irf_fwhm
            .map_or("none".into(), |f| f.to_string()),
    ));
    Ok(hist.with_annotations(notes)?)
}

pub fn execute(args: &SimulateArgs, out_dir: &Path) -> Result<Produced, CliError> {
    let range = (
        args.signal_lo.unwrap_or(0.0),
        args.signal_hi.unwrap_or(args.acquisition.window),
    );
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for (j, (source, label)) in args.sources()?.iter().zip(&args.label).enumerate() {
        let seed = if j == 0 {
            args.acquisition.seed
        } else {
            replicate_seed(args.acquisition.seed, j as u64)
        };
        let cfg = args.acquisition.config(seed)?;
        let mut expected = match source {
            Source::Model { model, .. } => expected_counts(model, &cfg, range)?,
            Source::Dist(d) => spectral_expected_counts(d, args.n0, &cfg, range)?,
        };
        if cfg.irf_fwhm.is_some() {
            let c = convolve_irf(&expected.values, &cfg)?;
            if let Some(w) = c.warning {
                summary.push(format!("warning: {w}"));
            }
            expected.values = c.values;
        }
        let hist = annotate(sample_poisson(&expected, label, seed)?, source, args)?;
        let name = format!("{label}.hist");
        io::write_atomic(&out_dir.join(&name), &hist.to_text())?;
        summary.push(format!(
            "{name}: {} bins, {} counts, peak at {} ns, seed {seed}",
            hist.len(),
            hist.total(),
            hist.t_peak()
        ));
        files.push(name);
    }
    Ok(Produced {
        files,
        inputs: args.params.clone(),
        seed: Some(args.acquisition.seed),
        manifest_stem: "simulate".into(),
        summary,
    })
}
