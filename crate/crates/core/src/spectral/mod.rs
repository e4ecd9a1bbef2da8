//! Survival amplitude, survival probability and decay intensity of an
//! unstable state from its energy distribution ρ(E).
//!
//! Natural units throughout: ħ = 1, time in ns, energy in ns⁻¹. An energy
//! `E` in eV converts as `E / (ħ in eV·ns) = E / 6.582119569e-7`.
//!
//! The amplitude is `A(t) = ∫ ρ(E) e^{-iEt} dE` over the admissible
//! energies and `P(t) = |A(t)|²`. The integral is evaluated with the
//! composite Filon quadrature in [`quadrature`]; Lorentzian tails beyond
//! the panel table are added through their asymptotic (integration by
//! parts) series, which is exact to double precision once
//! `t · distance-to-resonance ≥ 40`.

pub mod quadrature;

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use quadrature::PanelSet;

/// Panel growth factor relative to the distance from the resonance.
const PANEL_GROWTH: f64 = 0.75;
/// Minimum `t · (B - M)` before a Lorentzian tail is replaced by its
/// asymptotic series.
const ASYMPTOTIC_PHASE: f64 = 40.0;
/// Panel table half-extent around the resonance, in half-widths.
const BASE_EXTENT: f64 = 40.0;
/// Gaussian cutoff support, in units of Λ above threshold (factor e^{-100}).
const CUTOFF_EXTENT: f64 = 10.0;
const MAX_EXTENT: f64 = 1e15;
const PANEL_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    /// Full-line Breit-Wigner (threshold at −∞).
    BreitWigner,
    /// Breit-Wigner restricted to `E ≥ E_th`.
    TruncatedBreitWigner,
    /// Truncated Breit-Wigner times `exp(-((E - E_th)/Λ)²)`.
    TruncatedBreitWignerGaussCutoff,
}

impl DistributionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::BreitWigner => "bw",
            DistributionKind::TruncatedBreitWigner => "tbw",
            DistributionKind::TruncatedBreitWignerGaussCutoff => "tbw-gauss",
        }
    }
}

/// Parametric spectral density ρ(E).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDistribution {
    kind: DistributionKind,
    peak_energy: f64,
    width: f64,
    threshold: f64,
    cutoff_scale: f64,
    norm: f64,
}

impl EnergyDistribution {
    pub fn breit_wigner(peak_energy: f64, width: f64) -> Result<Self> {
        Self::validated(
            DistributionKind::BreitWigner,
            peak_energy,
            width,
            f64::NEG_INFINITY,
            f64::INFINITY,
        )
    }

    pub fn truncated(peak_energy: f64, width: f64, threshold: f64) -> Result<Self> {
        Self::validated(
            DistributionKind::TruncatedBreitWigner,
            peak_energy,
            width,
            threshold,
            f64::INFINITY,
        )
    }

    pub fn gauss_cutoff(peak_energy: f64, width: f64, threshold: f64, cutoff: f64) -> Result<Self> {
        Self::validated(
            DistributionKind::TruncatedBreitWignerGaussCutoff,
            peak_energy,
            width,
            threshold,
            cutoff,
        )
    }

    fn validated(
        kind: DistributionKind,
        peak_energy: f64,
        width: f64,
        threshold: f64,
        cutoff_scale: f64,
    ) -> Result<Self> {
        if !peak_energy.is_finite() {
            return Err(Error::domain("peak energy must be finite"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::domain(format!(
                "width must be positive, got {width}"
            )));
        }
        if kind != DistributionKind::BreitWigner {
            if !threshold.is_finite() {
                return Err(Error::domain("threshold must be finite"));
            }
            if threshold >= peak_energy {
                return Err(Error::domain(format!(
                    "threshold {threshold} must lie below the peak {peak_energy}"
                )));
            }
        }
        if kind == DistributionKind::TruncatedBreitWignerGaussCutoff
            && !(cutoff_scale > 0.0 && cutoff_scale.is_finite())
        {
            return Err(Error::domain(format!(
                "cutoff scale must be positive, got {cutoff_scale}"
            )));
        }
        Ok(EnergyDistribution {
            kind,
            peak_energy,
            width,
            threshold,
            cutoff_scale,
            norm: 1.0,
        })
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn peak_energy(&self) -> f64 {
        self.peak_energy
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// `None` for the full-line Breit-Wigner.
    pub fn threshold(&self) -> Option<f64> {
        (self.kind != DistributionKind::BreitWigner).then_some(self.threshold)
    }

    pub fn cutoff_scale(&self) -> Option<f64> {
        (self.kind == DistributionKind::TruncatedBreitWignerGaussCutoff)
            .then_some(self.cutoff_scale)
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn half_width(&self) -> f64 {
        0.5 * self.width
    }

    fn lorentz(&self, e: f64) -> f64 {
        let g = self.half_width();
        let d = e - self.peak_energy;
        g / PI / (d * d + g * g)
    }

    /// Unnormalized density (norm factor excluded).
    fn shape(&self, e: f64) -> f64 {
        match self.kind {
            DistributionKind::BreitWigner => self.lorentz(e),
            DistributionKind::TruncatedBreitWigner => {
                if e < self.threshold {
                    0.0
                } else {
                    self.lorentz(e)
                }
            }
            DistributionKind::TruncatedBreitWignerGaussCutoff => {
                if e < self.threshold {
                    0.0
                } else {
                    let u = (e - self.threshold) / self.cutoff_scale;
                    self.lorentz(e) * (-u * u).exp()
                }
            }
        }
    }

    /// ρ(E) per unit energy.
    pub fn rho(&self, e: f64) -> Result<f64> {
        if !e.is_finite() {
            return Err(Error::domain(format!("energy must be finite, got {e}")));
        }
        Ok(self.norm * self.shape(e))
    }

    /// Copy with the norm chosen so that ρ integrates to one. Idempotent.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.integrate_shape()?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Quadrature {
                requested: 1e-8,
                achieved: f64::NAN,
                context: format!("normalization integral evaluated to {mass}"),
            });
        }
        let mut out = self.clone();
        out.norm = 1.0 / mass;
        Ok(out)
    }

    fn integrate_shape(&self) -> Result<f64> {
        let (lo, hi) = self.support(0.0);
        let table = PanelSet::build(
            |e| self.shape(e),
            &self.breakpoints(lo, hi),
            PANEL_TOLERANCE,
        )?;
        let mut total = table.integral();
        if self.has_lorentz_tails() {
            let g = self.half_width();
            total += (g / (hi - self.peak_energy)).atan() / PI;
            if self.kind == DistributionKind::BreitWigner {
                total += (g / (self.peak_energy - lo)).atan() / PI;
            }
        }
        Ok(total)
    }

    fn has_lorentz_tails(&self) -> bool {
        self.kind != DistributionKind::TruncatedBreitWignerGaussCutoff
    }

    /// Energy range covered by the panel table at time `t`.
    fn support(&self, t: f64) -> (f64, f64) {
        let m = self.peak_energy;
        let base = BASE_EXTENT * self.half_width();
        let reach = if t > 0.0 {
            base.max(ASYMPTOTIC_PHASE / t)
        } else {
            base
        };
        match self.kind {
            DistributionKind::BreitWigner => (m - reach, m + reach),
            DistributionKind::TruncatedBreitWigner => (self.threshold, m + reach),
            DistributionKind::TruncatedBreitWignerGaussCutoff => {
                let hi = (self.threshold + CUTOFF_EXTENT * self.cutoff_scale).max(m + base);
                (self.threshold, hi)
            }
        }
    }

    /// Geometric panel edges growing away from the resonance peak.
    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m = self.peak_energy.clamp(lo, hi);
        let g = self.half_width();
        let cap = match self.kind {
            DistributionKind::TruncatedBreitWignerGaussCutoff => 0.5 * self.cutoff_scale,
            _ => f64::INFINITY,
        };
        let step = |x: f64| (PANEL_GROWTH * (x - self.peak_energy).hypot(g)).min(cap);

        let mut below = Vec::new();
        let mut x = m;
        while x > lo {
            x -= step(x);
            below.push(x.max(lo));
        }
        let mut above = Vec::new();
        x = m;
        while x < hi {
            x += step(x);
            above.push(x.min(hi));
        }
        let mut edges: Vec<f64> = below.into_iter().rev().collect();
        if m > lo && m < hi {
            edges.push(m);
        }
        edges.extend(above);
        if edges.first().is_none_or(|&e| e > lo) {
            edges.insert(0, lo);
        }
        edges.dedup();
        edges
    }

    /// `Σ_k f^{(k)}(x) / (it)^{k+1}` for the Lorentzian part, the
    /// integration-by-parts series of a tail integral at `x`.
    fn lorentz_tail_series(&self, x: f64, t: f64) -> Complex64 {
        let g = self.half_width();
        let z = Complex64::new(x - self.peak_energy, -g).inv();
        let u = Complex64::new(0.0, -1.0 / t);
        let mut deriv = z; // (-1)^k k! z^{k+1}
        let mut power = u; // u^{k+1}
        let mut sum = Complex64::new(0.0, 0.0);
        let mut last = f64::INFINITY;
        for k in 0..400 {
            let term = power * (self.norm * deriv.im / PI);
            let size = term.norm();
            if size > last {
                break;
            }
            sum += term;
            if size <= 1e-18 * sum.norm() {
                break;
            }
            last = size;
            deriv *= -z * (k as f64 + 1.0);
            power *= u;
        }
        sum
    }

    /// `A(t) = ∫ ρ(E) e^{-iEt} dE`.
    pub fn survival_amplitude(&self, t: f64) -> Result<Complex64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!(
                "time must be finite and ≥ 0, got {t}"
            )));
        }
        let (lo, hi) = self.support(t);
        if hi - lo > MAX_EXTENT * (self.half_width() + self.peak_energy.abs()) {
            return Err(Error::Quadrature {
                requested: PANEL_TOLERANCE,
                achieved: f64::NAN,
                context: format!("t = {t} ns is too small for the oscillatory tail treatment"),
            });
        }
        if t == 0.0 {
            return Ok(Complex64::new(self.norm * self.integrate_shape()?, 0.0));
        }
        let norm = self.norm;
        let table = PanelSet::build(
            |e| norm * self.shape(e),
            &self.breakpoints(lo, hi),
            PANEL_TOLERANCE,
        )?;
        let mut amp = table.fourier(t);
        if self.has_lorentz_tails() {
            let phase = |x: f64| Complex64::from_polar(1.0, -x * t);
            amp += phase(hi) * self.lorentz_tail_series(hi, t);
            if self.kind == DistributionKind::BreitWigner {
                amp -= phase(lo) * self.lorentz_tail_series(lo, t);
            }
        }
        Ok(amp)
    }

    /// `P(t) = |A(t)|²`.
    pub fn survival_probability(&self, t: f64) -> Result<f64> {
        Ok(self.survival_amplitude(t)?.norm_sqr())
    }

    /// `dP/dt` by Richardson-extrapolated finite differences with step
    /// `h = max(1e-4 t, 1e-6 ns)`; one-sided when `t < h`.
    pub fn survival_derivative(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!(
                "time must be finite and ≥ 0, got {t}"
            )));
        }
        let h = (1e-4 * t).max(1e-6);
        if t + 0.5 * h == t {
            return Err(Error::domain(format!(
                "derivative step underflows at t = {t}"
            )));
        }
        let p = |s: f64| self.survival_probability(s);
        if t >= h {
            let central = |h: f64| -> Result<f64> { Ok((p(t + h)? - p(t - h)?) / (2.0 * h)) };
            let coarse = central(h)?;
            let fine = central(0.5 * h)?;
            Ok((4.0 * fine - coarse) / 3.0)
        } else {
            let p0 = p(t)?;
            let forward = |h: f64| -> Result<f64> {
                Ok((-3.0 * p0 + 4.0 * p(t + h)? - p(t + 2.0 * h)?) / (2.0 * h))
            };
            let coarse = forward(h)?;
            let fine = forward(0.5 * h)?;
            Ok((4.0 * fine - coarse) / 3.0)
        }
    }

    /// Decay intensity `I(t) = -N₀ P'(t)` in counts/ns.
    pub fn intensity(&self, t: f64, n0: f64) -> Result<f64> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::domain(format!(
                "initial population must be positive, got {n0}"
            )));
        }
        Ok(-n0 * self.survival_derivative(t)?)
    }

    /// First and second energy moments, with divergence flags.
    pub fn spectral_summary(&self) -> Result<SpectralSummary> {
        let mean_div = self.moment_diverges(1);
        let var_div = self.moment_diverges(2);
        let moment = |k: i32| -> Result<f64> {
            let (lo, hi) = self.support(0.0);
            let norm = self.norm;
            let table = PanelSet::build(
                |e| norm * self.shape(e) * e.powi(k),
                &self.breakpoints(lo, hi),
                PANEL_TOLERANCE,
            )?;
            Ok(table.integral())
        };
        let mean_energy = if mean_div {
            Moment::Divergent
        } else {
            Moment::Finite(moment(1)?)
        };
        let energy_stddev = match (var_div, mean_energy) {
            (false, Moment::Finite(mean)) => {
                // Central moment about the mean avoids cancellation.
                let (lo, hi) = self.support(0.0);
                let norm = self.norm;
                let table = PanelSet::build(
                    |e| norm * self.shape(e) * (e - mean).powi(2),
                    &self.breakpoints(lo, hi),
                    PANEL_TOLERANCE,
                )?;
                Moment::Finite(table.integral().max(0.0).sqrt())
            }
            _ => Moment::Divergent,
        };
        let zeno_time = match energy_stddev {
            Moment::Finite(s) if s > 0.0 => Some(1.0 / s),
            _ => None,
        };
        Ok(SpectralSummary {
            mean_energy,
            energy_stddev,
            zeno_time,
        })
    }

    /// Tail-slope test: the k-th moment diverges when `|E|^k ρ(E)` decays
    /// slower than `|E|^{-1.5}` far from the resonance.
    fn moment_diverges(&self, k: i32) -> bool {
        let scale = self.half_width() + self.peak_energy.abs() + self.cutoff_scale().unwrap_or(0.0);
        let far = 1e6 * scale;
        let slope = |sign: f64| -> Option<f64> {
            let e1 = self.peak_energy + sign * far;
            let e2 = self.peak_energy + sign * 10.0 * far;
            let g1 = e1.abs().powi(k) * self.shape(e1);
            let g2 = e2.abs().powi(k) * self.shape(e2);
            if g1 <= 0.0 || g2 <= 0.0 {
                return None;
            }
            Some((g2 / g1).log10())
        };
        let diverges = |s: Option<f64>| s.is_some_and(|s| s > -1.5);
        diverges(slope(1.0)) || diverges(slope(-1.0))
    }

    /// `# key: value` header lines describing the distribution.
    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("dist: {}", self.kind.name()),
            format!("peak_energy_per_ns: {}", self.peak_energy),
            format!("width_per_ns: {}", self.width),
        ];
        if let Some(th) = self.threshold() {
            lines.push(format!("threshold_per_ns: {th}"));
        }
        if let Some(c) = self.cutoff_scale() {
            lines.push(format!("cutoff_per_ns: {c}"));
        }
        lines.push(format!("norm: {}", self.norm));
        lines
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Divergent,
}

impl Moment {
    pub fn value(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Divergent => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    pub mean_energy: Moment,
    pub energy_stddev: Moment,
    /// `τ_Z = 1/σ_E`; `None` when σ_E diverges.
    pub zeno_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Survival,
    Intensity,
}

impl CurveKind {
    fn name(self) -> &'static str {
        match self {
            CurveKind::Survival => "survival",
            CurveKind::Intensity => "intensity",
        }
    }
}

/// Sampled `P(t)` or `I(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CurveKind,
    /// Initial population; 1 for survival curves.
    pub n0: f64,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::domain("curve times must be finite and ≥ 0"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("curve times must be strictly increasing"));
    }
    Ok(())
}

impl DecayCurve {
    pub fn survival(dist: &EnergyDistribution, times: &[f64]) -> Result<Self> {
        check_times(times)?;
        let values = times
            .iter()
            .map(|&t| dist.survival_probability(t).map(|p| p.clamp(0.0, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecayCurve {
            times: times.to_vec(),
            values,
            kind: CurveKind::Survival,
            n0: 1.0,
        })
    }

    pub fn intensity(dist: &EnergyDistribution, times: &[f64], n0: f64) -> Result<Self> {
        check_times(times)?;
        let values = times
            .iter()
            .map(|&t| dist.intensity(t, n0))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecayCurve {
            times: times.to_vec(),
            values,
            kind: CurveKind::Intensity,
            n0,
        })
    }

    /// Two-column text: `#`-prefixed header, then `t_ns<TAB>value`.
    pub fn to_text(&self, header: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# curve: {}", self.kind.name());
        let _ = writeln!(out, "# n0: {}", self.n0);
        for line in header {
            let _ = writeln!(out, "# {line}");
        }
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t}\t{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut n0 = 1.0;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once(':') {
                    match k.trim() {
                        "curve" => {
                            kind = Some(match v.trim() {
                                "survival" => CurveKind::Survival,
                                "intensity" => CurveKind::Intensity,
                                other => {
                                    return Err(Error::format(
                                        lineno,
                                        format!("unknown curve kind {other}"),
                                    ))
                                }
                            })
                        }
                        "n0" => {
                            n0 = v
                                .trim()
                                .parse()
                                .map_err(|_| Error::format(lineno, "bad n0"))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (t, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(lineno, "expected two tab-separated columns"))?;
            times.push(t.parse().map_err(|_| Error::format(lineno, "bad time"))?);
            values.push(v.parse().map_err(|_| Error::format(lineno, "bad value"))?);
        }
        let kind = kind.ok_or_else(|| Error::format(1, "missing '# curve:' header"))?;
        check_times(&times)?;
        Ok(DecayCurve {
            times,
            values,
            kind,
            n0,
        })
    }
}

/// Log-spaced grid from `t_min` to `t_max` inclusive.
pub fn log_time_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max >= t_min && t_max.is_finite()) || n == 0 {
        return Err(Error::domain("log grid needs 0 < t_min ≤ t_max and n ≥ 1"));
    }
    if n == 1 {
        return Ok(vec![t_min]);
    }
    if t_max == t_min {
        return Err(Error::domain("log grid with n > 1 needs t_max > t_min"));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    grid[0] = t_min;
    grid[n - 1] = t_max;
    Ok(grid)
}

/// Least-squares power-law fit `log v = slope · log(t - t_ref) + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_samples: usize,
}

impl TailFit {
    /// A power law describes the window: `R² ≥ 0.999` and slope known to 1%.
    pub fn is_scale_free(&self) -> bool {
        self.r_squared >= 0.999 && self.stderr <= 0.01 * self.slope.abs()
    }
}

pub const MIN_TAIL_SAMPLES: usize = 8;

/// Log-log slope of `curve` over `window` (inclusive), with `t_ref = 0`.
pub fn tail_exponent(curve: &DecayCurve, window: (f64, f64)) -> Result<TailFit> {
    tail_exponent_from(curve, window, 0.0)
}

pub fn tail_exponent_from(curve: &DecayCurve, window: (f64, f64), t_ref: f64) -> Result<TailFit> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in curve.times.iter().zip(&curve.values) {
        if t < lo || t > hi {
            continue;
        }
        if !(v > 0.0) || t <= t_ref {
            return Err(Error::domain(format!(
                "non-positive value {v} at t = {t} ns inside the tail window"
            )));
        }
        xs.push((t - t_ref).ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < MIN_TAIL_SAMPLES {
        return Err(Error::domain(format!(
            "tail window holds {n} samples, at least {MIN_TAIL_SAMPLES} required"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::domain("tail window spans a single time"));
    }
    let slope = sxy / sxx;
    let ssr = (syy - slope * sxy).max(0.0);
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(TailFit {
        slope,
        stderr,
        r_squared,
        n_samples: n,
    })
}
