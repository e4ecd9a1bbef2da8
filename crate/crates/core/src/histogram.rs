//! Uniformly binned photon-arrival histogram and its text file format.
//!
//! ```text
//! # channel_label: ch1
//! # bin_width_ns: 0.008
//! # window_ns: 100
//! # t_peak_ns: 2.244
//! # seed: 7
//! 0<TAB>0
//! 0.008<TAB>1
//! ...
//! ```
//!
//! `seed` is `none` for measured data. Optional `# truth.<key>: value` lines
//! after the fixed header record how a synthetic histogram was generated.
//! Floats are written in shortest round-trip form, so `parse(to_text(h)) == h`
//! bit for bit.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative slack when matching times against bin centers and edges.
const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    origin: f64,
    bin_width: f64,
    counts: Vec<u64>,
    channel_label: String,
    window: f64,
    seed: Option<u64>,
    annotations: Vec<(String, String)>,
}

const ANNOTATION_PREFIX: &str = "truth.";

impl Histogram {
    pub fn new(
        origin: f64,
        bin_width: f64,
        counts: Vec<u64>,
        channel_label: impl Into<String>,
        window: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        let channel_label = channel_label.into();
        if !(bin_width > 0.0 && bin_width.is_finite()) || !origin.is_finite() {
            return Err(Error::Config(format!(
                "invalid bin width {bin_width} or origin {origin}"
            )));
        }
        if counts.is_empty() {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        if channel_label.contains('\n') || channel_label.trim() != channel_label {
            return Err(Error::Config(
                "channel label must be a single trimmed line".into(),
            ));
        }
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::Config(format!("invalid window {window}")));
        }
        Ok(Histogram {
            origin,
            bin_width,
            counts,
            channel_label,
            window,
            seed,
            annotations: Vec::new(),
        })
    }

    /// Attach `truth.<key>: value` header lines, kept in the given order.
    pub fn with_annotations(mut self, annotations: Vec<(String, String)>) -> Result<Self> {
        for (k, v) in &annotations {
            let bad = |s: &str| s.is_empty() || s.contains(['\n', '\r']) || s.trim() != s;
            if bad(k) || k.contains(':') || bad(v) {
                return Err(Error::Config(format!("invalid annotation '{k}: {v}'")));
            }
        }
        self.annotations = annotations;
        Ok(self)
    }

    /// Generation record, keys without the `truth.` prefix.
    pub fn annotations(&self) -> &[(String, String)] {
        &self.annotations
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn channel_label(&self) -> &str {
        &self.channel_label
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.bin_width
    }

    /// All `len() + 1` bin edges.
    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.len()).map(|i| self.edge(i)).collect()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.edge(i) + 0.5 * self.bin_width
    }

    /// Center of the first bin holding the maximum count.
    pub fn t_peak(&self) -> f64 {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        self.center(best)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Indices of bins whose centers lie in `[lo, hi]`.
    pub fn range_indices(&self, lo: f64, hi: f64) -> Result<std::ops::Range<usize>> {
        let slack = TIME_SLACK * self.bin_width;
        let first_center = self.center(0);
        let last_center = self.center(self.len() - 1);
        if !(lo <= hi)
            || lo < first_center - 0.5 * self.bin_width - slack
            || hi > last_center + 0.5 * self.bin_width + slack
        {
            return Err(Error::Config(format!(
                "range [{lo}, {hi}] ns outside histogram support [{}, {}] ns",
                self.edge(0),
                self.edge(self.len())
            )));
        }
        let start = ((lo - first_center) / self.bin_width - TIME_SLACK)
            .ceil()
            .max(0.0) as usize;
        let end = (((hi - first_center) / self.bin_width + TIME_SLACK).floor() as i64 + 1)
            .clamp(0, self.len() as i64) as usize;
        Ok(start..end.max(start))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.len() + 128);
        let _ = writeln!(out, "# channel_label: {}", self.channel_label);
        let _ = writeln!(out, "# bin_width_ns: {}", self.bin_width);
        let _ = writeln!(out, "# window_ns: {}", self.window);
        let _ = writeln!(out, "# t_peak_ns: {}", self.t_peak());
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "# seed: {s}");
            }
            None => out.push_str("# seed: none\n"),
        }
        for (k, v) in &self.annotations {
            let _ = writeln!(out, "# {ANNOTATION_PREFIX}{k}: {v}");
        }
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{}\t{c}", self.edge(i));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut label = None;
        let mut bin_width: Option<f64> = None;
        let mut window = None;
        let mut t_peak: Option<(usize, f64)> = None;
        let mut seed = None;
        let mut annotations = Vec::new();
        let mut lefts = Vec::new();
        let mut counts = Vec::new();

        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix('#') {
                let (key, value) = rest
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::format(lineno, "header must read '# key: value'"))?;
                let value = value.trim();
                let num = |v: &str| -> Result<f64> {
                    v.parse()
                        .map_err(|_| Error::format(lineno, format!("'{key}' is not a number: {v}")))
                };
                match key.trim() {
                    "channel_label" => label = Some(value.to_string()),
                    "bin_width_ns" => bin_width = Some(num(value)?),
                    "window_ns" => window = Some(num(value)?),
                    "t_peak_ns" => t_peak = Some((lineno, num(value)?)),
                    "seed" => {
                        seed = Some(if value == "none" {
                            None
                        } else {
                            Some(
                                value
                                    .parse()
                                    .map_err(|_| Error::format(lineno, "bad seed"))?,
                            )
                        })
                    }
                    other => match other.strip_prefix(ANNOTATION_PREFIX) {
                        Some(k) if !k.is_empty() => {
                            annotations.push((k.to_string(), value.to_string()))
                        }
                        _ => {
                            return Err(Error::format(
                                lineno,
                                format!("unknown header key '{other}'"),
                            ))
                        }
                    },
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (t, c) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(lineno, "expected 't_left_ns<TAB>count'"))?;
            let t: f64 = t
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad bin time '{t}'")))?;
            let c: u64 = c
                .trim()
                .parse()
                .map_err(|_| Error::format(lineno, format!("bad count '{c}'")))?;
            lefts.push((lineno, t));
            counts.push(c);
        }

        let missing = |k: &str| Error::format(1, format!("missing header '{k}'"));
        let bin_width = bin_width.ok_or_else(|| missing("bin_width_ns"))?;
        let window = window.ok_or_else(|| missing("window_ns"))?;
        let label = label.ok_or_else(|| missing("channel_label"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let origin = lefts
            .first()
            .map(|&(_, t)| t)
            .ok_or_else(|| Error::format(1, "no bins"))?;
        let hist = Histogram::new(origin, bin_width, counts, label, window, seed)?
            .with_annotations(annotations)
            .map_err(|e| Error::format(1, e.to_string()))?;
        for (i, &(lineno, t)) in lefts.iter().enumerate() {
            if (t - hist.edge(i)).abs() > TIME_SLACK * bin_width.max(t.abs()) {
                return Err(Error::format(
                    lineno,
                    format!(
                        "bin edge {t} breaks uniform spacing (expected {})",
                        hist.edge(i)
                    ),
                ));
            }
        }
        if let Some((lineno, tp)) = t_peak {
            if (tp - hist.t_peak()).abs() > TIME_SLACK * bin_width.max(tp.abs()) {
                return Err(Error::format(
                    lineno,
                    format!(
                        "t_peak_ns {tp} disagrees with the maximum bin ({})",
                        hist.t_peak()
                    ),
                ));
            }
        }
        Ok(hist)
    }
}
