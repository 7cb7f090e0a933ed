//! The rank-one Dunkl kernel `E(x,y)`.
//!
//! `E` depends on `x·y` only. For real arguments the even/odd parts `e`, `o`
//! satisfy `e' = o`, `o' = e − 2k·o/s`; the scaled pair `ô = e^{−s}o`,
//! `d = e^{−s}(e − o)` is integrated so that nothing overflows. On the
//! imaginary axis `E(iζ) = a(ζ) + i·b(ζ)` with `a' = −b`, `b' = a − 2k·b/ζ`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ode::{integrate_to_nodes, OdeConfig};
use crate::quad::{adaptive, QuadConfig};

/// Below this `|z|` the power series seeds and replaces the ODE.
const SERIES_START: f64 = 0.25;
/// Beyond this `|z|` the scaled kernel uses the Bessel asymptotic expansion.
const ASYMPTOTIC_FROM: f64 = 25.0;
/// Argument guard for the unscaled kernel.
pub const MAX_ARGUMENT: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct DunklKernel1D {
    k: f64,
    pub ode: OdeConfig,
    c_k: f64,
}

impl DunklKernel1D {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidMultiplicity(format!("rank-one multiplicity {k}")));
        }
        let mut out = Self {
            k,
            ode: OdeConfig::default(),
            c_k: 0.0,
        };
        out.c_k = out.normalization_by_quadrature()?;
        Ok(out)
    }

    pub fn multiplicity(&self) -> f64 {
        self.k
    }

    /// `c_k = ∫ e^{−x²/2} dw(x)`.
    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    /// `c_k` in closed form, `2^{2k+1/2} Γ(k+1/2)`.
    pub fn c_k_closed_form(&self) -> f64 {
        (ln_gamma(self.k + 0.5) + (2.0 * self.k + 0.5) * std::f64::consts::LN_2).exp()
    }

    fn normalization_by_quadrature(&self) -> Result<f64> {
        let k = self.k;
        let cfg = QuadConfig::default().with_rel_tol(1e-13);
        let half = adaptive(
            |x| Ok(2f64.powf(k) * x.powf(2.0 * k) * (-0.5 * x * x).exp()),
            0.0,
            40.0,
            &[1.0, 4.0, 8.0],
            &cfg,
        )?;
        Ok(2.0 * half.value)
    }

    /// Density of `dw` on the line, `2^k |x|^{2k}`.
    pub fn weight(&self, x: f64) -> f64 {
        if self.k == 0.0 {
            1.0
        } else {
            2f64.powf(self.k) * x.abs().powf(2.0 * self.k)
        }
    }

    /// `w(B(x, r))` in closed form.
    pub fn ball_volume(&self, x: f64, r: f64) -> f64 {
        let p = 2.0 * self.k + 1.0;
        let prim = |u: f64| u.signum() * u.abs().powf(p) / p;
        2f64.powf(self.k) * (prim(x + r) - prim(x - r))
    }

    fn series_coefficient_next(&self, n: usize, prev: f64) -> f64 {
        let odd = if n % 2 == 1 { 2.0 * self.k } else { 0.0 };
        prev / (n as f64 + odd)
    }

    /// `E(z)` as `Σ c_n zⁿ` with `c_n(n + 2k[n odd]) = c_{n−1}`.
    pub fn series(&self, z: f64) -> f64 {
        let mut c = 1.0;
        let mut sum = 1.0;
        for n in 1..2000 {
            c = self.series_coefficient_next(n, c);
            let term = c * z.powi(n as i32);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1e-300) && (n as f64) > z.abs() {
                break;
            }
        }
        sum
    }

    /// `(a(ζ), b(ζ))` with `E(iζ) = a + i b`, by the series.
    fn imaginary_series(&self, zeta: f64) -> (f64, f64) {
        let mut c = 1.0;
        let (mut a, mut b) = (1.0, 0.0);
        let mut power = 1.0;
        for n in 1..400 {
            c = self.series_coefficient_next(n, c);
            power *= zeta;
            // iⁿ = 1, i, −1, −i
            let t = c * power;
            match n % 4 {
                0 => a += t,
                1 => b += t,
                2 => a -= t,
                _ => b -= t,
            }
            if t.abs() < 1e-18 && (n as f64) > zeta.abs() {
                break;
            }
        }
        (a, b)
    }

    /// `e^{−|z|}E(z)`.
    pub fn scaled(&self, z: f64) -> f64 {
        if self.k == 0.0 {
            return (z - z.abs()).exp();
        }
        if z.abs() <= ASYMPTOTIC_FROM {
            return (-z.abs()).exp() * self.series(z);
        }
        self.scaled_asymptotic(z)
    }

    /// Scaled kernel from `E(z) = Γ(k+½)(2/|z|)^{k−½}[I_{k−½}(|z|) ± I_{k+½}(|z|)]`
    /// and the large-argument expansion of `e^{−s}I_ν(s)`.
    fn scaled_asymptotic(&self, z: f64) -> f64 {
        let s = z.abs();
        let sign = if z > 0.0 { 1.0 } else { -1.0 };
        let (nu1, nu2) = (self.k - 0.5, self.k + 0.5);
        let (m1, m2) = (4.0 * nu1 * nu1, 4.0 * nu2 * nu2);
        let mut a1 = 1.0;
        let mut a2 = 1.0;
        let mut sum = 1.0 + sign;
        let mut last = f64::INFINITY;
        for m in 1..200 {
            let odd = (2 * m - 1) as f64;
            let f = 1.0 / (m as f64 * 8.0 * s);
            a1 *= (m1 - odd * odd) * f;
            a2 *= (m2 - odd * odd) * f;
            let alt = if m % 2 == 1 { -1.0 } else { 1.0 };
            let t = alt * (a1 + sign * a2);
            if t.abs() > last {
                break;
            }
            sum += t;
            last = t.abs();
            if t.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        let log_pref = ln_gamma(self.k + 0.5) + (self.k - 0.5) * (2.0 / s).ln() - 0.5 * (2.0 * std::f64::consts::PI * s).ln();
        log_pref.exp() * sum
    }

    /// `E(x, y)`, guarded against overflow.
    pub fn value(&self, x: f64, y: f64) -> Result<f64> {
        if x.abs() > MAX_ARGUMENT || y.abs() > MAX_ARGUMENT {
            return Err(Error::ArgumentOutOfRange(format!("E({x}, {y}) needs |x|,|y| ≤ {MAX_ARGUMENT}")));
        }
        let z = x * y;
        Ok(z.abs().exp() * self.scaled(z))
    }

    /// `e^{−|z|}E(z)` at each `z`, from the ODE.
    pub fn scaled_by_ode(&self, zs: &[f64]) -> Result<Vec<f64>> {
        let mut idx: Vec<usize> = (0..zs.len()).collect();
        idx.sort_by(|&i, &j| zs[i].abs().total_cmp(&zs[j].abs()));
        let mut out = vec![0.0; zs.len()];
        let far: Vec<usize> = idx.iter().copied().filter(|&i| zs[i].abs() > SERIES_START).collect();
        for &i in idx.iter().filter(|&&i| zs[i].abs() <= SERIES_START) {
            out[i] = (-zs[i].abs()).exp() * self.series(zs[i]);
        }
        if far.is_empty() {
            return Ok(out);
        }
        let s0 = SERIES_START;
        let (e0, o0) = (0.5 * (self.series(s0) + self.series(-s0)), 0.5 * (self.series(s0) - self.series(-s0)));
        let scale = (-s0).exp();
        let k = self.k;
        let nodes: Vec<f64> = far.iter().map(|&i| zs[i].abs()).collect();
        let states = integrate_to_nodes(
            move |s, y: &[f64; 2]| {
                let (oh, d) = (y[0], y[1]);
                let q = 2.0 * k * oh / s;
                [d - q, -2.0 * d + q]
            },
            s0,
            [scale * o0, scale * (e0 - o0)],
            &nodes,
            &self.ode,
        )?;
        for (&i, st) in far.iter().zip(&states) {
            let (oh, d) = (st[0], st[1]);
            out[i] = if zs[i] > 0.0 { d + 2.0 * oh } else { d };
        }
        Ok(out)
    }

    /// `E(x, y)` from the ODE.
    pub fn value_by_ode(&self, x: f64, y: f64) -> Result<f64> {
        if x.abs() > MAX_ARGUMENT || y.abs() > MAX_ARGUMENT {
            return Err(Error::ArgumentOutOfRange(format!("E({x}, {y}) needs |x|,|y| ≤ {MAX_ARGUMENT}")));
        }
        let z = x * y;
        Ok(z.abs().exp() * self.scaled_by_ode(&[z])?[0])
    }

    /// `E(iζ) = (a, b)` for every `ζ` in one sweep of the imaginary-axis ODE.
    pub fn imaginary(&self, zetas: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut out = vec![(0.0, 0.0); zetas.len()];
        if self.k == 0.0 {
            for (o, z) in out.iter_mut().zip(zetas) {
                *o = (z.cos(), z.sin());
            }
            return Ok(out);
        }
        let mut idx: Vec<usize> = (0..zetas.len()).collect();
        idx.sort_by(|&i, &j| zetas[i].abs().total_cmp(&zetas[j].abs()));
        let far: Vec<usize> = idx.iter().copied().filter(|&i| zetas[i].abs() > SERIES_START).collect();
        for &i in idx.iter().filter(|&&i| zetas[i].abs() <= SERIES_START) {
            out[i] = self.imaginary_series(zetas[i]);
        }
        if far.is_empty() {
            return Ok(out);
        }
        let s0 = SERIES_START;
        let (a0, b0) = self.imaginary_series(s0);
        let k = self.k;
        let nodes: Vec<f64> = far.iter().map(|&i| zetas[i].abs()).collect();
        let states = integrate_to_nodes(
            move |s, y: &[f64; 2]| [-y[1], y[0] - 2.0 * k * y[1] / s],
            s0,
            [a0, b0],
            &nodes,
            &self.ode,
        )?;
        for (&i, st) in far.iter().zip(&states) {
            // a is even and b is odd in ζ
            out[i] = (st[0], st[1] * zetas[i].signum());
        }
        Ok(out)
    }
}
