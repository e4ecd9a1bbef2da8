//! Inverse-variance combination of independent estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::FitReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
    pub label: String,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64, label: impl Into<String>) -> Result<Self> {
        let e = Estimate {
            value,
            sigma,
            label: label.into(),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::domain(format!(
                "estimate '{}' is not finite",
                self.label
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(format!(
                "estimate '{}' needs a positive sigma, got {}",
                self.label, self.sigma
            )));
        }
        Ok(())
    }

    /// Parameter `name` of a fit report, labelled by its channel.
    pub fn from_report(report: &FitReport, name: &str) -> Result<Self> {
        let (value, sigma) = report.param(name)?;
        Estimate::new(value, sigma, report.channel_label.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEstimate {
    pub value: f64,
    pub sigma: f64,
    pub n_inputs: usize,
    /// `Σ (vᵢ - value)² / σᵢ²`.
    pub chi2_consistency: f64,
    /// Factor applied to `sigma`; 1 unless scale-factor inflation was requested.
    pub scale_factor: f64,
}

/// Weighted mean with weights `1/σᵢ²`.
pub fn inverse_variance_mean(estimates: &[Estimate]) -> Result<WeightedEstimate> {
    if estimates.is_empty() {
        return Err(Error::domain("nothing to combine"));
    }
    for e in estimates {
        e.validate()?;
    }
    let (mut sw, mut swv) = (0.0, 0.0);
    for e in estimates {
        let w = 1.0 / (e.sigma * e.sigma);
        sw += w;
        swv += w * e.value;
    }
    let value = swv / sw;
    let chi2_consistency = estimates
        .iter()
        .map(|e| ((e.value - value) / e.sigma).powi(2))
        .sum();
    Ok(WeightedEstimate {
        value,
        sigma: sw.sqrt().recip(),
        n_inputs: estimates.len(),
        chi2_consistency,
        scale_factor: 1.0,
    })
}

/// As [`inverse_variance_mean`], with `sigma` scaled by
/// `√(χ²/(n-1))` when that exceeds one.
pub fn inverse_variance_mean_scaled(estimates: &[Estimate]) -> Result<WeightedEstimate> {
    let mut w = inverse_variance_mean(estimates)?;
    if w.n_inputs > 1 {
        let s = (w.chi2_consistency / (w.n_inputs - 1) as f64).sqrt();
        if s > 1.0 {
            w.sigma *= s;
            w.scale_factor = s;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pull {
    pub first: String,
    pub second: String,
    pub pull: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub consistent: bool,
    pub k_sigma: f64,
    pub pulls: Vec<Pull>,
}

/// Pairwise pulls `|vᵢ - vⱼ| / √(σᵢ² + σⱼ²)`; consistent iff all are ≤ `k_sigma`.
pub fn consistency_check(estimates: &[Estimate], k_sigma: f64) -> Result<Consistency> {
    if estimates.len() < 2 {
        return Err(Error::domain(
            "consistency check needs at least two estimates",
        ));
    }
    if !(k_sigma > 0.0) {
        return Err(Error::domain(format!(
            "k_sigma must be positive, got {k_sigma}"
        )));
    }
    for e in estimates {
        e.validate()?;
    }
    let mut pulls = Vec::new();
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            pulls.push(Pull {
                first: a.label.clone(),
                second: b.label.clone(),
                pull: (a.value - b.value).abs() / a.sigma.hypot(b.sigma),
            });
        }
    }
    Ok(Consistency {
        consistent: pulls.iter().all(|p| p.pull <= k_sigma),
        k_sigma,
        pulls,
    })
}
