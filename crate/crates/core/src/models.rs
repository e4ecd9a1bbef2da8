//! Phenomenological decay models fitted to TCSPC histograms.
//!
//! Intensities are expressed in counts per histogram bin, the scale on which
//! measured amplitudes are usually quoted:
//!
//! ```text
//! two-exponential:  I(t) = C1 e^{-(t-t0)/τ1} + C2 e^{-(t-t0)/τ2} + b
//! nonexponential:   I(t) = C  e^{-(t-t0)/τ}  + Cp (t-t0)^{-β}    + b
//! ```
//!
//! `t0` is the time of the intensity maximum; it is data, never a fit
//! parameter. Parameter order everywhere (gradients, covariance, reports)
//! is `(C1, τ1, C2, τ2, b)` and `(C, τ, Cp, β, b)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_PARAMS: usize = 5;

pub const TWO_EXP_NAMES: [&str; N_PARAMS] = ["C1", "tau1_ns", "C2", "tau2_ns", "b"];
pub const NON_EXP_NAMES: [&str; N_PARAMS] = ["C", "tau_ns", "Cp", "beta", "b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TwoExp,
    NonExp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoExp => "twoexp",
            ModelKind::NonExp => "nonexp",
        }
    }

    pub fn param_names(self) -> [&'static str; N_PARAMS] {
        match self {
            ModelKind::TwoExp => TWO_EXP_NAMES,
            ModelKind::NonExp => NON_EXP_NAMES,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twoexp" => Ok(ModelKind::TwoExp),
            "nonexp" => Ok(ModelKind::NonExp),
            other => Err(Error::Schema(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoExpParams {
    pub c1: f64,
    pub tau1: f64,
    pub c2: f64,
    pub tau2: f64,
    pub b: f64,
    pub t0: f64,
}

impl TwoExpParams {
    /// Validated record with `tau1 ≤ tau2` (components swapped if needed).
    pub fn new(c1: f64, tau1: f64, c2: f64, tau2: f64, b: f64, t0: f64) -> Result<Self> {
        let p = TwoExpParams {
            c1,
            tau1,
            c2,
            tau2,
            b,
            t0,
        };
        p.validate()?;
        Ok(p.canonical())
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.tau1, self.c2, self.tau2, self.b, self.t0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("two-exponential parameters must be finite"));
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(Error::domain("lifetimes must be positive"));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 || self.b < 0.0 {
            return Err(Error::domain(
                "amplitudes and background must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn canonical(self) -> Self {
        if self.tau1 <= self.tau2 {
            self
        } else {
            TwoExpParams {
                c1: self.c2,
                tau1: self.tau2,
                c2: self.c1,
                tau2: self.tau1,
                ..self
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonExpParams {
    pub c: f64,
    pub tau: f64,
    pub cp: f64,
    pub beta: f64,
    pub b: f64,
    pub t0: f64,
}

impl NonExpParams {
    pub fn new(c: f64, tau: f64, cp: f64, beta: f64, b: f64, t0: f64) -> Result<Self> {
        let p = NonExpParams {
            c,
            tau,
            cp,
            beta,
            b,
            t0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c, self.tau, self.cp, self.beta, self.b, self.t0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("nonexponential parameters must be finite"));
        }
        if !(self.tau > 0.0 && self.beta > 0.0) {
            return Err(Error::domain("tau and beta must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayModel {
    TwoExp(TwoExpParams),
    NonExp(NonExpParams),
}

impl DecayModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            DecayModel::TwoExp(_) => ModelKind::TwoExp,
            DecayModel::NonExp(_) => ModelKind::NonExp,
        }
    }

    pub fn t0(&self) -> f64 {
        match self {
            DecayModel::TwoExp(p) => p.t0,
            DecayModel::NonExp(p) => p.t0,
        }
    }

    pub fn with_t0(self, t0: f64) -> Self {
        match self {
            DecayModel::TwoExp(p) => DecayModel::TwoExp(TwoExpParams { t0, ..p }),
            DecayModel::NonExp(p) => DecayModel::NonExp(NonExpParams { t0, ..p }),
        }
    }

    /// Free parameters in the frozen order.
    pub fn values(&self) -> [f64; N_PARAMS] {
        match self {
            DecayModel::TwoExp(p) => [p.c1, p.tau1, p.c2, p.tau2, p.b],
            DecayModel::NonExp(p) => [p.c, p.tau, p.cp, p.beta, p.b],
        }
    }

    /// Same kind and `t0`, new parameter values; not validated or canonicalized.
    pub fn with_values(&self, v: [f64; N_PARAMS]) -> Self {
        match self {
            DecayModel::TwoExp(p) => DecayModel::TwoExp(TwoExpParams {
                c1: v[0],
                tau1: v[1],
                c2: v[2],
                tau2: v[3],
                b: v[4],
                t0: p.t0,
            }),
            DecayModel::NonExp(p) => DecayModel::NonExp(NonExpParams {
                c: v[0],
                tau: v[1],
                cp: v[2],
                beta: v[3],
                b: v[4],
                t0: p.t0,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DecayModel::TwoExp(p) => p.validate(),
            DecayModel::NonExp(p) => p.validate(),
        }
    }

    pub fn param_names(&self) -> [&'static str; N_PARAMS] {
        self.kind().param_names()
    }

    /// Model intensity at `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            DecayModel::TwoExp(p) => {
                let dt = t - p.t0;
                Ok(p.c1 * (-dt / p.tau1).exp() + p.c2 * (-dt / p.tau2).exp() + p.b)
            }
            DecayModel::NonExp(p) => {
                let dt = t - p.t0;
                if !(dt > 0.0) {
                    return Err(Error::domain(format!(
                        "nonexponential model undefined at t = {t} ≤ t0 = {}",
                        p.t0
                    )));
                }
                Ok(p.c * (-dt / p.tau).exp() + p.cp * dt.powf(-p.beta) + p.b)
            }
        }
    }

    /// Analytic `∂I/∂θ` in the frozen parameter order.
    pub fn gradient(&self, t: f64) -> Result<[f64; N_PARAMS]> {
        match self {
            DecayModel::TwoExp(p) => {
                let dt = t - p.t0;
                let e1 = (-dt / p.tau1).exp();
                let e2 = (-dt / p.tau2).exp();
                Ok([
                    e1,
                    p.c1 * e1 * dt / (p.tau1 * p.tau1),
                    e2,
                    p.c2 * e2 * dt / (p.tau2 * p.tau2),
                    1.0,
                ])
            }
            DecayModel::NonExp(p) => {
                let dt = t - p.t0;
                if !(dt > 0.0) {
                    return Err(Error::domain(format!(
                        "nonexponential model undefined at t = {t} ≤ t0 = {}",
                        p.t0
                    )));
                }
                let e = (-dt / p.tau).exp();
                let pw = dt.powf(-p.beta);
                Ok([
                    e,
                    p.c * e * dt / (p.tau * p.tau),
                    pw,
                    -p.cp * pw * dt.ln(),
                    1.0,
                ])
            }
        }
    }

    /// Flat `key: value` block (keys `model`, the parameter names, `t0_ns`).
    pub fn to_kv(&self) -> String {
        let mut out = format!("model: {}\n", self.kind());
        for (name, value) in self.param_names().iter().zip(self.values()) {
            out.push_str(&format!("{name}: {value}\n"));
        }
        out.push_str(&format!("t0_ns: {}\n", self.t0()));
        out
    }

    /// Inverse of [`DecayModel::to_kv`]. TwoExp records are validated but kept
    /// in the order given.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::format(idx + 1, "expected 'key: value'"))?;
            if map
                .insert(k.trim().to_string(), (idx + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::format(
                    idx + 1,
                    format!("duplicate key '{}'", k.trim()),
                ));
            }
        }
        let (_, kind) = map
            .remove("model")
            .ok_or_else(|| Error::Schema("missing 'model' key".into()))?;
        let kind: ModelKind = kind.parse()?;
        let mut number = |key: &str| -> Result<f64> {
            let (line, v) = map
                .remove(key)
                .ok_or_else(|| Error::Schema(format!("missing '{key}' for {kind} model")))?;
            v.parse()
                .map_err(|_| Error::format(line, format!("'{key}' is not a number: {v}")))
        };
        let mut values = [0.0; N_PARAMS];
        for (slot, name) in values.iter_mut().zip(kind.param_names()) {
            *slot = number(name)?;
        }
        let t0 = number("t0_ns")?;
        if let Some(extra) = map.keys().next() {
            return Err(Error::Schema(format!(
                "unexpected key '{extra}' for {kind} model"
            )));
        }
        let template = match kind {
            ModelKind::TwoExp => DecayModel::TwoExp(TwoExpParams {
                c1: 0.0,
                tau1: 1.0,
                c2: 0.0,
                tau2: 1.0,
                b: 0.0,
                t0,
            }),
            ModelKind::NonExp => DecayModel::NonExp(NonExpParams {
                c: 0.0,
                tau: 1.0,
                cp: 0.0,
                beta: 1.0,
                b: 0.0,
                t0,
            }),
        };
        let model = template.with_values(values);
        model.validate()?;
        Ok(model)
    }
}
