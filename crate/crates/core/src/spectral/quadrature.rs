//! Composite Filon-type quadrature for Fourier integrals
//! `∫ f(x) e^{-ixt} dx` over a finite interval.
//!
//! The interval is cut into panels. On each panel `f` is replaced by its
//! degree `ORDER - 1` interpolant at Gauss-Legendre nodes, stored as a
//! Legendre series. The oscillatory factor is then integrated exactly through
//!
//! ```text
//! ∫_{-1}^{1} P_k(s) e^{-iωs} ds = 2 (-i)^k j_k(ω)
//! ```
//!
//! with `j_k` the spherical Bessel functions, so the panel layout only has to
//! resolve `f`, never the oscillation. The same table serves every `t`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Interpolation points per panel.
pub const ORDER: usize = 20;

const MAX_DEPTH: u32 = 48;

struct LegendreBasis {
    nodes: [f64; ORDER],
    /// `projection[k][j] = (2k+1)/2 · w_j · P_k(s_j)`
    projection: [[f64; ORDER]; ORDER],
}

fn basis() -> &'static LegendreBasis {
    static BASIS: OnceLock<LegendreBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let (nodes, weights) = gauss_legendre(ORDER);
        let mut projection = [[0.0; ORDER]; ORDER];
        for (j, (&s, &w)) in nodes.iter().zip(&weights).enumerate() {
            let p = legendre_values(s);
            for k in 0..ORDER {
                projection[k][j] = (2 * k + 1) as f64 / 2.0 * w * p[k];
            }
        }
        let mut n = [0.0; ORDER];
        n.copy_from_slice(&nodes);
        LegendreBasis {
            nodes: n,
            projection,
        }
    })
}

/// `P_0(s) .. P_{ORDER-1}(s)` by the three-term recurrence.
fn legendre_values(s: f64) -> [f64; ORDER] {
    let mut p = [0.0; ORDER];
    p[0] = 1.0;
    if ORDER > 1 {
        p[1] = s;
    }
    for k in 2..ORDER {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * s * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Spherical Bessel functions `j_0(ω) .. j_{ORDER-1}(ω)` for `ω ≥ 0`.
pub fn spherical_bessel(omega: f64) -> [f64; ORDER] {
    let mut out = [0.0; ORDER];
    if omega == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if omega < 1.0 {
        // Power series; no cancellation for ω < 1.
        let mut lead = 1.0;
        for (k, slot) in out.iter_mut().enumerate() {
            if k > 0 {
                lead *= omega / (2 * k + 1) as f64;
            }
            let mut term = lead;
            let mut sum = lead;
            let half_sq = -omega * omega / 2.0;
            for m in 1..60 {
                term *= half_sq / (m as f64 * (2 * k + 2 * m + 1) as f64);
                sum += term;
                if term.abs() <= 1e-17 * sum.abs() {
                    break;
                }
            }
            *slot = sum;
        }
        return out;
    }
    let (s, c) = omega.sin_cos();
    let j0 = s / omega;
    let j1 = s / (omega * omega) - c / omega;
    if omega >= ORDER as f64 {
        // Upward recurrence is stable while k < ω.
        out[0] = j0;
        out[1] = j1;
        for k in 2..ORDER {
            out[k] = (2 * k - 1) as f64 / omega * out[k - 1] - out[k - 2];
        }
        return out;
    }
    // Miller's backward recurrence, normalized against the closed-form j0/j1.
    let start = ORDER + omega.ceil() as usize + 24;
    let (mut next, mut cur) = (0.0_f64, 1e-200_f64);
    for k in (1..=start).rev() {
        let prev = (2 * k + 1) as f64 / omega * cur - next;
        next = cur;
        cur = prev;
        if k - 1 < ORDER {
            out[k - 1] = cur;
        }
        if cur.abs() > 1e200 {
            cur *= 1e-200;
            next *= 1e-200;
            for v in out.iter_mut() {
                *v *= 1e-200;
            }
        }
    }
    let scale = if j0.abs() >= j1.abs() {
        j0 / out[0]
    } else {
        j1 / out[1]
    };
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// One interpolation panel `[center - half_width, center + half_width]`.
#[derive(Debug, Clone)]
pub struct Panel {
    pub center: f64,
    pub half_width: f64,
    coeffs: [f64; ORDER],
}

impl Panel {
    fn fit<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
        let b = basis();
        let center = 0.5 * (lo + hi);
        let half_width = 0.5 * (hi - lo);
        let mut values = [0.0; ORDER];
        for (v, &s) in values.iter_mut().zip(&b.nodes) {
            *v = f(center + half_width * s);
        }
        let mut coeffs = [0.0; ORDER];
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = b.projection[k]
                .iter()
                .zip(&values)
                .map(|(p, v)| p * v)
                .sum();
        }
        Panel {
            center,
            half_width,
            coeffs,
        }
    }

    fn tail(&self) -> f64 {
        self.coeffs[ORDER - 1].abs() + self.coeffs[ORDER - 2].abs()
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn integral(&self) -> f64 {
        2.0 * self.half_width * self.coeffs[0]
    }

    /// `∫ p(x) e^{-ixt} dx` over the panel, `p` the stored interpolant.
    pub fn fourier(&self, t: f64) -> Complex64 {
        let j = spherical_bessel((t * self.half_width).abs());
        let (mut re, mut im) = (0.0, 0.0);
        for k in 0..ORDER {
            let v = self.coeffs[k] * j[k];
            match k % 4 {
                0 => re += v,
                1 => im -= v,
                2 => re -= v,
                _ => im += v,
            }
        }
        // j_k(-ω) = (-1)^k j_k(ω) handles negative t.
        if t < 0.0 {
            im = -im;
        }
        let phase = Complex64::from_polar(1.0, -self.center * t);
        phase * Complex64::new(re, im) * (2.0 * self.half_width)
    }
}

/// Adaptively refined panel table for a fixed integrand.
#[derive(Debug, Clone)]
pub struct PanelSet {
    panels: Vec<Panel>,
}

impl PanelSet {
    /// Builds panels between consecutive `breaks`, bisecting each until the
    /// trailing Legendre coefficients fall below `rel_tol` of the panel's
    /// largest coefficient (or below an absolute floor tied to the total).
    pub fn build<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64) -> Result<PanelSet> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "panel breakpoints must be strictly increasing",
            ));
        }
        let initial: Vec<Panel> = breaks
            .windows(2)
            .map(|w| Panel::fit(&f, w[0], w[1]))
            .collect();
        let magnitude: f64 = initial.iter().map(|p| p.scale() * p.half_width).sum();
        let floor = 1e-17 * magnitude;

        let mut panels = Vec::with_capacity(initial.len() * 2);
        let mut worst = 0.0_f64;
        let mut stack: Vec<(Panel, u32)> = initial.into_iter().rev().map(|p| (p, 0)).collect();
        while let Some((panel, depth)) = stack.pop() {
            let tail = panel.tail();
            if tail <= rel_tol * panel.scale() || tail * panel.half_width <= floor {
                panels.push(panel);
                continue;
            }
            if depth >= MAX_DEPTH {
                worst = worst.max(tail / panel.scale().max(f64::MIN_POSITIVE));
                panels.push(panel);
                continue;
            }
            let lo = panel.center - panel.half_width;
            let hi = panel.center + panel.half_width;
            let mid = panel.center;
            stack.push((Panel::fit(&f, mid, hi), depth + 1));
            stack.push((Panel::fit(&f, lo, mid), depth + 1));
        }
        if worst > 0.0 {
            return Err(Error::Quadrature {
                requested: rel_tol,
                achieved: worst,
                context: "integrand could not be resolved by panel bisection".into(),
            });
        }
        Ok(PanelSet { panels })
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn integral(&self) -> f64 {
        self.panels.iter().map(Panel::integral).sum()
    }

    pub fn fourier(&self, t: f64) -> Complex64 {
        self.panels.iter().map(|p| p.fourier(t)).sum()
    }
}
