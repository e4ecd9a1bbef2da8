//! Pearson χ² fitting of decay models to histograms.
//!
//! ```text
//! χ² = Σ_n [I_n - I(t_n)]² / I(t_n)
//! ```
//!
//! with `t_n` the bin centers inside the fit range and the model value in the
//! denominator. The minimizer is Levenberg-Marquardt on the exact gradient of
//! this χ², with the Gauss-Newton matrix `2 JᵀWJ` (weights `W = 1/I(t_n)`
//! frozen at the current iterate) as curvature. Positive parameters are
//! optimized on a log scale. The covariance is `(JᵀWJ)⁻¹` at the optimum,
//! i.e. the inverse of half the Gauss-Newton Hessian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Histogram;
use crate::models::{DecayModel, ModelKind, NonExpParams, TwoExpParams, N_PARAMS};
use crate::presets::FIT_RANGE;

/// Scaled eigenvalue below which the normal matrix counts as singular.
const RANK_TOLERANCE: f64 = 1e-12;
/// Damping beyond which a step can no longer be found.
const MAX_DAMPING: f64 = 1e30;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Bins whose centers lie in `[lo, hi]` ns.
    pub range: (f64, f64),
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub damping_init: f64,
    /// Overrides the histogram's `t_peak` as model origin.
    pub t0: Option<f64>,
    /// Parameters held at their initial values, in the frozen order.
    pub fixed: [bool; N_PARAMS],
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            range: FIT_RANGE,
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            damping_init: 1e-3,
            t0: None,
            fixed: [false; N_PARAMS],
        }
    }
}

impl FitOptions {
    /// Single exponential: the second two-exponential component is frozen.
    pub fn single_exponential(self) -> Self {
        FitOptions {
            fixed: [false, false, true, true, false],
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("invalid fit range [{lo}, {hi}]")));
        }
        for (name, v) in [
            ("gradient tolerance", self.gradient_tolerance),
            ("step tolerance", self.step_tolerance),
            ("initial damping", self.damping_init),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if let Some(t0) = self.t0 {
            if !t0.is_finite() {
                return Err(Error::Config("t0 must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn n_free(&self) -> usize {
        self.fixed.iter().filter(|f| !**f).count()
    }
}

/// Bin centers and contents inside a fit range.
#[derive(Debug, Clone, PartialEq)]
pub struct FitData {
    times: Vec<f64>,
    values: Vec<f64>,
    first_bin: usize,
    t0: f64,
    range: (f64, f64),
}

impl FitData {
    /// Bins of `hist` with centers in `range`; `t0` defaults to the histogram peak.
    pub fn from_histogram(hist: &Histogram, range: (f64, f64), t0: Option<f64>) -> Result<Self> {
        let idx = hist.range_indices(range.0, range.1)?;
        if idx.is_empty() {
            return Err(Error::Config(format!(
                "no bin centers inside [{}, {}] ns",
                range.0, range.1
            )));
        }
        Ok(FitData {
            times: idx.clone().map(|i| hist.center(i)).collect(),
            values: hist.counts()[idx.clone()]
                .iter()
                .map(|&c| c as f64)
                .collect(),
            first_bin: idx.start,
            t0: t0.unwrap_or_else(|| hist.t_peak()),
            range,
        })
    }

    /// Arbitrary non-negative data, e.g. noise-free expectations.
    pub fn from_values(times: Vec<f64>, values: Vec<f64>, t0: f64) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Config(
                "times and values must be nonempty and of equal length".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || times.iter().any(|t| !t.is_finite())
        {
            return Err(Error::Config(
                "times must be finite and values finite and non-negative".into(),
            ));
        }
        let range = (times[0], times[times.len() - 1]);
        Ok(FitData {
            times,
            values,
            first_bin: 0,
            t0,
            range,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Histogram bin index of data point `i`.
    pub fn bin(&self, i: usize) -> usize {
        self.first_bin + i
    }
}

/// χ², its exact gradient and the matrix `JᵀWJ`, in natural parameters.
struct Evaluation {
    chi2: f64,
    gradient: [f64; N_PARAMS],
    jtwj: [[f64; N_PARAMS]; N_PARAMS],
}

fn model_value(model: &DecayModel, data: &FitData, i: usize) -> Result<f64> {
    let t = data.times[i];
    let bad = |value| Error::Evaluation {
        bin: data.bin(i),
        t,
        value,
    };
    let m = model.eval(t).map_err(|_| bad(f64::NAN))?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(bad(m));
    }
    Ok(m)
}

fn evaluate(model: &DecayModel, data: &FitData) -> Result<Evaluation> {
    let mut chi2 = 0.0;
    let mut gradient = [0.0; N_PARAMS];
    let mut jtwj = [[0.0; N_PARAMS]; N_PARAMS];
    for i in 0..data.len() {
        let m = model_value(model, data, i)?;
        let j = model.gradient(data.times[i])?;
        let r = data.values[i] - m;
        let w = 1.0 / m;
        chi2 += r * r * w;
        // d/dm (r²/m) = -2r/m - r²/m².
        let dm = -(2.0 * r + r * r * w) * w;
        for a in 0..N_PARAMS {
            gradient[a] += dm * j[a];
            let wa = w * j[a];
            for b in a..N_PARAMS {
                jtwj[a][b] += wa * j[b];
            }
        }
    }
    for a in 0..N_PARAMS {
        for b in 0..a {
            jtwj[a][b] = jtwj[b][a];
        }
    }
    Ok(Evaluation {
        chi2,
        gradient,
        jtwj,
    })
}

/// Pearson χ² of `model` against the histogram bins with centers in `range`.
pub fn chi_squared(model: &DecayModel, hist: &Histogram, range: (f64, f64)) -> Result<f64> {
    let data = FitData::from_histogram(hist, range, Some(model.t0()))?;
    chi_squared_data(model, &data)
}

pub fn chi_squared_data(model: &DecayModel, data: &FitData) -> Result<f64> {
    let mut chi2 = 0.0;
    for i in 0..data.len() {
        let m = model_value(model, data, i)?;
        let r = data.values[i] - m;
        chi2 += r * r / m;
    }
    Ok(chi2)
}

/// `chi2 / (n_points - n_free)`.
pub fn reduced_chi_squared(chi2: f64, n_points: usize, n_free: usize) -> Result<f64> {
    if n_points <= n_free {
        return Err(Error::domain(format!(
            "no degrees of freedom: {n_points} points, {n_free} free parameters"
        )));
    }
    Ok(chi2 / (n_points - n_free) as f64)
}

/// Parameters optimized on a log scale.
fn log_scaled(kind: ModelKind) -> [bool; N_PARAMS] {
    match kind {
        ModelKind::TwoExp => [true; N_PARAMS],
        // The background of the power-law model may be negative.
        ModelKind::NonExp => [true, true, true, true, false],
    }
}

fn null_direction(names: &[&str], vector: &[f64]) -> String {
    let mut terms = Vec::new();
    for (name, &c) in names.iter().zip(vector) {
        if c.abs() > 1e-3 {
            terms.push(format!("{c:+.4}*{name}"));
        }
    }
    terms.join(" ")
}

/// `(JᵀWJ)⁻¹` over the free parameters, zero rows and columns for fixed ones.
pub fn covariance_data(
    model: &DecayModel,
    data: &FitData,
    fixed: &[bool; N_PARAMS],
) -> Result<[[f64; N_PARAMS]; N_PARAMS]> {
    let eval = evaluate(model, data)?;
    let names = model.param_names();
    let free: Vec<usize> = (0..N_PARAMS).filter(|&k| !fixed[k]).collect();
    let n = free.len();
    let mut out = [[0.0; N_PARAMS]; N_PARAMS];
    if n == 0 {
        return Ok(out);
    }
    let diag: Vec<f64> = free.iter().map(|&k| eval.jtwj[k][k]).collect();
    if let Some(pos) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::RankDeficient {
            direction: format!("+1.0000*{}", names[free[pos]]),
        });
    }
    let scale: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |a, b| {
        eval.jtwj[free[a]][free[b]] / (scale[a] * scale[b])
    });
    let eig = SymmetricEigen::new(scaled);
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let emax = eig.eigenvalues.max();
    if !(emin > RANK_TOLERANCE * emax) {
        let v = eig.eigenvectors.column(imin);
        let free_names: Vec<&str> = free.iter().map(|&k| names[k]).collect();
        // Report the direction in natural units, normalized.
        let mut natural: Vec<f64> = (0..n).map(|a| v[a] / scale[a]).collect();
        let norm = natural.iter().map(|x| x * x).sum::<f64>().sqrt();
        natural.iter_mut().for_each(|x| *x /= norm);
        return Err(Error::RankDeficient {
            direction: null_direction(&free_names, &natural),
        });
    }
    let inv_eig = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e));
    let inv = &eig.eigenvectors * inv_eig * eig.eigenvectors.transpose();
    for a in 0..n {
        for b in 0..n {
            let v = 0.5 * (inv[(a, b)] + inv[(b, a)]) / (scale[a] * scale[b]);
            out[free[a]][free[b]] = v;
        }
    }
    Ok(out)
}

/// Covariance with every parameter free, data origin at the model's `t0`.
pub fn covariance(
    model: &DecayModel,
    hist: &Histogram,
    range: (f64, f64),
) -> Result<[[f64; N_PARAMS]; N_PARAMS]> {
    let data = FitData::from_histogram(hist, range, Some(model.t0()))?;
    covariance_data(model, &data, &[false; N_PARAMS])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: DecayModel,
    /// `None` when the normal matrix is singular at the optimum.
    pub covariance: Option<[[f64; N_PARAMS]; N_PARAMS]>,
    /// Null-space direction when `covariance` is `None`.
    pub rank_deficiency: Option<String>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub n_free_params: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the χ² gradient in the internal (log-scaled) coordinates.
    pub gradient_norm: f64,
    pub fixed: [bool; N_PARAMS],
    pub range: (f64, f64),
}

impl FitResult {
    pub fn std_errors(&self) -> Option<[f64; N_PARAMS]> {
        self.covariance
            .map(|c| std::array::from_fn(|k| c[k][k].max(0.0).sqrt()))
    }

    /// Value and standard error of a parameter by name (see [`param_index`]).
    pub fn param(&self, name: &str) -> Result<(f64, Option<f64>)> {
        let k = param_index(self.params.kind(), name)?;
        Ok((self.params.values()[k], self.std_errors().map(|s| s[k])))
    }

    pub fn report(&self, channel_label: &str) -> FitReport {
        let names = self.params.param_names();
        FitReport {
            model: self.params.kind(),
            channel_label: channel_label.to_string(),
            param_names: names.iter().map(|s| s.to_string()).collect(),
            params: self.params.values().to_vec(),
            std_errors: self.std_errors().map(|s| s.to_vec()),
            covariance: self
                .covariance
                .map(|c| c.iter().map(|r| r.to_vec()).collect()),
            rank_deficiency: self.rank_deficiency.clone(),
            fixed: (0..N_PARAMS)
                .filter(|&k| self.fixed[k])
                .map(|k| names[k].to_string())
                .collect(),
            t0_ns: self.params.t0(),
            chi2: self.chi2,
            reduced_chi2: self.reduced_chi2,
            n_points: self.n_points,
            n_free_params: self.n_free_params,
            range_ns: [self.range.0, self.range.1],
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// Index of a parameter name; a missing `_ns` suffix is accepted (`tau1`).
pub fn param_index(kind: ModelKind, name: &str) -> Result<usize> {
    let names = kind.param_names();
    names
        .iter()
        .position(|n| *n == name || n.strip_suffix("_ns") == Some(name))
        .ok_or_else(|| {
            Error::Schema(format!(
                "parameter '{name}' not in {kind} model (has {})",
                names.join(", ")
            ))
        })
}

/// Levenberg-Marquardt minimization of the Pearson χ².
///
/// `kind` must match `init`. The model origin is `opts.t0` or the histogram peak.
pub fn fit(
    kind: ModelKind,
    init: &DecayModel,
    hist: &Histogram,
    opts: &FitOptions,
) -> Result<FitResult> {
    if init.kind() != kind {
        return Err(Error::Config(format!(
            "initial parameters are {} but a {kind} fit was requested",
            init.kind()
        )));
    }
    let data = FitData::from_histogram(hist, opts.range, opts.t0)?;
    fit_data(init, &data, opts)
}

/// As [`fit`], on prepared data; the model origin is `data.t0()`.
pub fn fit_data(init: &DecayModel, data: &FitData, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    init.validate()?;
    let base = init.with_t0(data.t0());
    let kind = base.kind();
    let log = log_scaled(kind);
    let free: Vec<usize> = (0..N_PARAMS).filter(|&k| !opts.fixed[k]).collect();
    let n = free.len();
    if data.len() <= n {
        return Err(Error::Config(format!(
            "fit range holds {} bins, need more than {n}",
            data.len()
        )));
    }

    // Log-scaled parameters cannot start at zero.
    let floor = 1e-9 * data.values.iter().cloned().fold(1.0, f64::max);
    let mut start = base.values();
    for &k in &free {
        if log[k] && start[k] <= 0.0 {
            start[k] = floor;
        }
    }
    let natural = |u: &[f64]| -> [f64; N_PARAMS] {
        let mut v = start;
        for (a, &k) in free.iter().enumerate() {
            v[k] = if log[k] { u[a].exp() } else { u[a] };
        }
        v
    };
    let mut u: Vec<f64> = free
        .iter()
        .map(|&k| if log[k] { start[k].ln() } else { start[k] })
        .collect();

    let mut model = base.with_values(natural(&u));
    let mut cur = evaluate(&model, data)?;
    let mut lambda = opts.damping_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm;

    'outer: loop {
        // Chain rule into internal coordinates.
        let v = model.values();
        let d: Vec<f64> = free
            .iter()
            .map(|&k| if log[k] { v[k] } else { 1.0 })
            .collect();
        let g = DVector::from_fn(n, |a, _| cur.gradient[free[a]] * d[a]);
        let mut h = DMatrix::from_fn(n, n, |a, b| 2.0 * cur.jtwj[free[a]][free[b]] * d[a] * d[b]);
        if iterations == 0 {
            if let Some(a) = (0..n).find(|&a| !(cur.jtwj[free[a]][free[a]] > 0.0)) {
                return Err(Error::RankDeficient {
                    direction: format!("+1.0000*{}", model.param_names()[free[a]]),
                });
            }
        }
        // Columns flatten when a log-scaled parameter runs off to 0 or ∞;
        // the final covariance reports that, the iteration carries on.
        let top = (0..n).map(|a| h[(a, a)]).fold(0.0, f64::max);
        for a in 0..n {
            h[(a, a)] = h[(a, a)].max(1e-30 * top);
        }
        gradient_norm = g.norm();
        if gradient_norm < opts.gradient_tolerance * cur.chi2.abs().max(1.0) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        let u_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        loop {
            let mut a = h.clone();
            for i in 0..n {
                a[(i, i)] += lambda * h[(i, i)];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    break 'outer;
                }
                continue;
            };
            let step = chol.solve(&(-&g));
            let small = step.norm() <= opts.step_tolerance * (u_norm + opts.step_tolerance);
            let trial_u: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            let trial_v = natural(&trial_u);
            // Parameters must stay finite and log-scaled ones strictly positive.
            let admissible = free
                .iter()
                .all(|&k| trial_v[k].is_finite() && (!log[k] || trial_v[k] > 0.0));
            let trial = base.with_values(trial_v);
            let outcome = if admissible {
                evaluate(&trial, data)
            } else {
                Err(Error::domain("step leaves the parameter domain"))
            };
            match outcome {
                Ok(e) if e.chi2.is_finite() && e.chi2 <= cur.chi2 => {
                    u = trial_u;
                    model = trial;
                    cur = e;
                    lambda = (lambda * 0.1).max(1e-15);
                    if small {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    if small {
                        // No representable improvement remains.
                        converged = true;
                        break 'outer;
                    }
                    lambda *= 10.0;
                    if lambda > MAX_DAMPING {
                        break 'outer;
                    }
                }
            }
        }
    }
    if !converged {
        let v = model.values();
        gradient_norm = free
            .iter()
            .map(|&k| {
                let g = cur.gradient[k] * if log[k] { v[k] } else { 1.0 };
                g * g
            })
            .sum::<f64>()
            .sqrt();
    }

    // Component order is canonical only when no parameter is pinned to a slot.
    let mut params = model;
    let fixed = opts.fixed;
    if let DecayModel::TwoExp(p) = params {
        if !fixed.iter().any(|f| *f) {
            params = DecayModel::TwoExp(p.canonical());
        }
    }
    let (covariance, rank_deficiency) = match covariance_data(&params, data, &fixed) {
        Ok(c) => (Some(c), None),
        Err(Error::RankDeficient { direction }) => (None, Some(direction)),
        Err(e) => return Err(e),
    };
    Ok(FitResult {
        params,
        covariance,
        rank_deficiency,
        chi2: cur.chi2,
        reduced_chi2: reduced_chi_squared(cur.chi2, data.len(), n)?,
        n_points: data.len(),
        n_free_params: n,
        converged,
        iterations,
        gradient_norm,
        fixed,
        range: data.range(),
    })
}

/// Signal above background aggregated in blocks of adjacent bins.
struct Blocks {
    times: Vec<f64>,
    signal: Vec<f64>,
    variance: Vec<f64>,
}

/// Leading run of blocks whose signal exceeds three standard deviations.
fn significant_blocks(data: &FitData, b: f64) -> Blocks {
    let n = data.len();
    let size = (n / 100).max(1);
    let mut out = Blocks {
        times: Vec::new(),
        signal: Vec::new(),
        variance: Vec::new(),
    };
    for chunk in (0..n).collect::<Vec<_>>().chunks(size) {
        let k = chunk.len() as f64;
        let t = chunk.iter().map(|&i| data.times[i]).sum::<f64>() / k;
        let y = chunk.iter().map(|&i| data.values[i]).sum::<f64>() / k;
        let var = y.max(1.0) / k;
        let s = y - b;
        if s <= 3.0 * var.sqrt() {
            break;
        }
        out.times.push(t);
        out.signal.push(s);
        out.variance.push(var);
    }
    out
}

/// Weighted fit of `ln s = a - (t - t0)/τ`; returns `(e^a, τ)` if decaying.
fn log_linear(times: &[f64], signal: &[f64], variance: &[f64], t0: f64) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut count = 0;
    for ((&t, &s), &v) in times.iter().zip(signal).zip(variance) {
        if s <= 0.0 {
            continue;
        }
        let w = s * s / v;
        let x = t - t0;
        let y = s.ln();
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
        count += 1;
    }
    if count < 2 {
        return None;
    }
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    (slope < 0.0 && intercept.is_finite()).then(|| (intercept.exp(), -1.0 / slope))
}

/// Weighted linear least squares of the data on `basis` functions of time,
/// weights `1/max(I_n, 1)`.
fn linear_amplitudes(data: &FitData, basis: &[&dyn Fn(f64) -> f64]) -> Option<Vec<f64>> {
    let k = basis.len();
    let mut a = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (&t, &y) in data.times.iter().zip(&data.values) {
        let w = 1.0 / y.max(1.0);
        let phi: Vec<f64> = basis.iter().map(|f| f(t)).collect();
        for i in 0..k {
            rhs[i] += w * phi[i] * y;
            for j in 0..k {
                a[(i, j)] += w * phi[i] * phi[j];
            }
        }
    }
    let x: DVector<f64> = a.cholesky()?.solve(&rhs);
    x.iter()
        .all(|v: &f64| v.is_finite())
        .then(|| x.iter().copied().collect())
}

/// Starting parameters from the data in `range`, origin at the histogram peak.
pub fn initial_guess(kind: ModelKind, hist: &Histogram, range: (f64, f64)) -> Result<DecayModel> {
    initial_guess_data(kind, &FitData::from_histogram(hist, range, None)?)
}

/// Starting parameters estimated from prepared data.
///
/// The background is the mean of the last 5% of bins. Lifetimes come from
/// weighted log-linear regressions over the leading stretch of the range
/// where the signal is significant (the far tail is pure background): the
/// slow one from its last third, the fast one from its first third after
/// subtracting the slow component. Amplitudes and background are then
/// refined by linear least squares at fixed lifetimes. The power-law model
/// takes the best node of a small `(τ, β)` grid instead.
pub fn initial_guess_data(kind: ModelKind, data: &FitData) -> Result<DecayModel> {
    if data.values.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(
            "all bins in the fit range are empty".into(),
        ));
    }
    let n = data.len();
    let t0 = data.t0();
    let tail = (n / 20).max(1);
    let b_tail = data.values[n - tail..].iter().sum::<f64>() / tail as f64;
    let blocks = significant_blocks(data, b_tail);
    let span = (data.range.1 - data.range.0).max(f64::MIN_POSITIVE);
    let mean = data.values.iter().sum::<f64>() / n as f64;

    let m = blocks.times.len();
    if m < 2 {
        // Nothing above background.
        let tau1 = span / 10.0;
        let tau2 = span / 3.0;
        return Ok(match kind {
            ModelKind::TwoExp => {
                DecayModel::TwoExp(TwoExpParams::new(0.0, tau1, 0.0, tau2, mean, t0)?)
            }
            ModelKind::NonExp => {
                DecayModel::NonExp(NonExpParams::new(0.0, tau1, 0.0, 1.5, mean, t0)?)
            }
        });
    }

    let third = (m / 3).max(2).min(m);
    let late = m - third..m;
    let (a2, tau2) = log_linear(
        &blocks.times[late.clone()],
        &blocks.signal[late.clone()],
        &blocks.variance[late],
        t0,
    )
    .unwrap_or((blocks.signal[0], span / 3.0));
    let fast: Vec<f64> = (0..third)
        .map(|j| blocks.signal[j] - a2 * (-(blocks.times[j] - t0) / tau2).exp())
        .collect();
    let (a1, mut tau1) = log_linear(&blocks.times[..third], &fast, &blocks.variance[..third], t0)
        .unwrap_or((blocks.signal[0], tau2 / 3.0));
    if !(tau1 < tau2) {
        tau1 = tau2 / 3.0;
    }

    let e1 = move |t: f64| (-(t - t0) / tau1).exp();
    let e2 = move |t: f64| (-(t - t0) / tau2).exp();
    let one = |_: f64| 1.0;
    let (c1, c2, b) = match linear_amplitudes(data, &[&e1, &e2, &one]) {
        Some(x) => (x[0], x[1], x[2]),
        None => (a1, a2, b_tail),
    };
    let (c1, c2, b) = (c1.max(0.0), c2.max(0.0), b.max(0.0));

    match kind {
        ModelKind::TwoExp => Ok(DecayModel::TwoExp(TwoExpParams::new(
            c1, tau1, c2, tau2, b, t0,
        )?)),
        ModelKind::NonExp => {
            let dt_min = data
                .times
                .iter()
                .map(|t| t - t0)
                .fold(f64::INFINITY, f64::min);
            if !(dt_min > 0.0) {
                return Err(Error::Config(format!(
                    "nonexponential model needs a fit range after t0 = {t0} ns"
                )));
            }
            nonexp_profile_guess(data, [tau1, tau2], b_tail)
        }
    }
}

/// Best of a coarse `(τ, β)` grid, amplitudes and background by linear
/// least squares at each node, scored by the Pearson χ².
fn nonexp_profile_guess(data: &FitData, taus: [f64; 2], b_tail: f64) -> Result<DecayModel> {
    let t0 = data.t0();
    let one = |_: f64| 1.0;
    let mut best: Option<(f64, NonExpParams)> = None;
    for &tau in &taus {
        for step in 0..=14 {
            let beta = 0.5 + 0.25 * step as f64;
            let e = move |t: f64| (-(t - t0) / tau).exp();
            let pw = move |t: f64| (t - t0).powf(-beta);
            let Some(x) = linear_amplitudes(data, &[&e, &pw, &one]) else {
                continue;
            };
            let mut p = NonExpParams::new(x[0].max(0.0), tau, x[1].max(0.0), beta, x[2], t0)?;
            let mut chi2 = chi_squared_data(&DecayModel::NonExp(p), data);
            if chi2.is_err() {
                // Keep the model positive on the data.
                p.b = b_tail.max(1.0);
                chi2 = chi_squared_data(&DecayModel::NonExp(p), data);
            }
            if let Ok(c) = chi2 {
                if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                    best = Some((c, p));
                }
            }
        }
    }
    let (_, p) =
        best.ok_or_else(|| Error::Degenerate("no admissible nonexponential start".into()))?;
    Ok(DecayModel::NonExp(p))
}

/// Single exponential as a two-exponential record with `C2 = 0`, `τ2 = τ1`;
/// fit it with [`FitOptions::single_exponential`].
pub fn single_exponential_guess(data: &FitData) -> Result<DecayModel> {
    if data.values.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(
            "all bins in the fit range are empty".into(),
        ));
    }
    let n = data.len();
    let t0 = data.t0();
    let tail = (n / 20).max(1);
    let b_tail = data.values[n - tail..].iter().sum::<f64>() / tail as f64;
    let blocks = significant_blocks(data, b_tail);
    let span = (data.range.1 - data.range.0).max(f64::MIN_POSITIVE);
    let (a, tau) = log_linear(&blocks.times, &blocks.signal, &blocks.variance, t0)
        .unwrap_or((0.0, span / 5.0));
    let e = move |t: f64| (-(t - t0) / tau).exp();
    let one = |_: f64| 1.0;
    let (c, b) = match linear_amplitudes(data, &[&e, &one]) {
        Some(x) => (x[0].max(0.0), x[1].max(0.0)),
        None => (a, b_tail.max(0.0)),
    };
    Ok(DecayModel::TwoExp(TwoExpParams::new(
        c, tau, 0.0, tau, b, t0,
    )?))
}

/// Serialized fit outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub model: ModelKind,
    pub channel_label: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub rank_deficiency: Option<String>,
    pub fixed: Vec<String>,
    pub t0_ns: f64,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub n_free_params: usize,
    pub range_ns: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: FitReport =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("fit report: {e}")))?;
        r.check()?;
        Ok(r)
    }

    fn check(&self) -> Result<()> {
        let names = self.model.param_names();
        if self.param_names.len() != N_PARAMS
            || self.param_names.iter().zip(names).any(|(a, b)| a != b)
        {
            return Err(Error::Schema(format!(
                "parameter names for {} must be {}",
                self.model,
                names.join(", ")
            )));
        }
        if self.params.len() != N_PARAMS {
            return Err(Error::Schema(format!(
                "expected {N_PARAMS} parameter values"
            )));
        }
        if let Some(s) = &self.std_errors {
            if s.len() != N_PARAMS {
                return Err(Error::Schema(format!(
                    "expected {N_PARAMS} standard errors"
                )));
            }
        }
        if let Some(c) = &self.covariance {
            if c.len() != N_PARAMS || c.iter().any(|r| r.len() != N_PARAMS) {
                return Err(Error::Schema(format!(
                    "covariance must be {N_PARAMS}x{N_PARAMS}"
                )));
            }
        }
        if let Some(f) = self.fixed.iter().find(|f| !names.contains(&f.as_str())) {
            return Err(Error::Schema(format!("unknown fixed parameter '{f}'")));
        }
        Ok(())
    }

    /// Value and standard error by parameter name (see [`param_index`]).
    pub fn param(&self, name: &str) -> Result<(f64, f64)> {
        let k = param_index(self.model, name)?;
        let sigma = self.std_errors.as_ref().map(|s| s[k]).ok_or_else(|| {
            Error::Schema(format!(
                "report for channel '{}' has no standard errors (rank deficient)",
                self.channel_label
            ))
        })?;
        Ok((self.params[k], sigma))
    }

    /// Fitted model.
    pub fn model(&self) -> Result<DecayModel> {
        let v = &self.params;
        Ok(match self.model {
            ModelKind::TwoExp => DecayModel::TwoExp(TwoExpParams {
                c1: v[0],
                tau1: v[1],
                c2: v[2],
                tau2: v[3],
                b: v[4],
                t0: self.t0_ns,
            }),
            ModelKind::NonExp => {
                DecayModel::NonExp(NonExpParams::new(v[0], v[1], v[2], v[3], v[4], self.t0_ns)?)
            }
        })
    }
}
