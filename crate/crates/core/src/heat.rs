//! Dunkl heat kernels for rank-one systems and their products, the Gaussian
//! envelope `𝒢_t`, the Trotter–Strang Schrödinger kernel `k_t`, and the
//! conditions (D) and (K).

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubes::DyadicCube;
use crate::error::{Error, Result};
use crate::geometry::RootSystem;
use crate::kernel::DunklKernel1D;
use crate::measure::{Region, WeightedMeasure};
use crate::potential::{PotentialMeasure, PotentialProfile};
use crate::quad::{adaptive, composite_gauss_legendre, QuadConfig};
use crate::stats::loglog_fit;

/// `e^{−tξ²}` is cut where it falls below `e^{−36.84} ≈ 1e-16`.
const SPECTRAL_CUTOFF: f64 = 36.84;
const MAX_SPECTRAL_PANELS: usize = 200_000;
/// Candidate constants `c` for the Gaussian upper bound, largest first.
pub const C_SCAN: [f64; 5] = [1.0, 0.5, 0.25, 1.0 / 6.0, 0.125];
/// A scan entry is accepted when its constant `C` stays below this cap.
pub const BOUND_CAP: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatRoute {
    /// `c_k^{−2}∫E(iξ,x)E(−iξ,y)e^{−tξ²}dw(ξ)` by Gauss–Legendre in `ξ`.
    Spectral,
    /// `c_k^{−1}(2t)^{−(1+2k)/2} e^{−(x²+y²)/4t} E(x, y/2t)` per factor.
    ClosedForm,
}

#[derive(Debug, Clone)]
pub struct HeatKernelEngine {
    factors: Vec<DunklKernel1D>,
    measure: WeightedMeasure,
    pub t_floor: f64,
    /// Gauss–Legendre order per spectral panel.
    pub spectral_order: usize,
}

impl HeatKernelEngine {
    pub fn new(rs: Arc<RootSystem>) -> Result<Self> {
        let ks = rs.axis_multiplicities().ok_or_else(|| {
            Error::Unsupported("exact heat kernels need a product of rank-one systems".into())
        })?;
        let factors = ks.iter().map(|&k| DunklKernel1D::new(k)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factors,
            measure: WeightedMeasure::new(rs),
            t_floor: 1e-6,
            spectral_order: 16,
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[DunklKernel1D] {
        &self.factors
    }

    pub fn measure(&self) -> &WeightedMeasure {
        &self.measure
    }

    pub fn root_system(&self) -> &RootSystem {
        self.measure.context()
    }

    pub fn homogeneous_dimension(&self) -> f64 {
        self.measure.homogeneous_dimension()
    }

    pub fn c_k(&self) -> f64 {
        self.factors.iter().map(|f| f.c_k()).product()
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if !(t >= self.t_floor && t.is_finite()) {
            return Err(Error::ArgumentOutOfRange(format!("t = {t} below t_floor = {}", self.t_floor)));
        }
        Ok(())
    }

    fn log_closed_form_1d(e: &DunklKernel1D, x: f64, y: f64, t: f64) -> f64 {
        let k = e.multiplicity();
        let gap = x.abs() - y.abs();
        -e.c_k().ln() - 0.5 * (1.0 + 2.0 * k) * (2.0 * t).ln() - gap * gap / (4.0 * t) + e.scaled(x * y / (2.0 * t)).ln()
    }

    /// `ln h_t(x, y)` from the closed form; finite where `h_t` underflows.
    pub fn log_closed_form(&self, x: &[f64], y: &[f64], t: f64) -> f64 {
        self.factors
            .iter()
            .enumerate()
            .map(|(i, e)| Self::log_closed_form_1d(e, x[i], y[i], t))
            .sum()
    }

    pub fn closed_form(&self, x: &[f64], y: &[f64], t: f64) -> f64 {
        self.log_closed_form(x, y, t).exp()
    }

    fn spectral_1d(&self, e: &DunklKernel1D, x: f64, y: f64, t: f64) -> Result<f64> {
        let k = e.multiplicity();
        let xi_max = (SPECTRAL_CUTOFF / t).sqrt();
        let freq = x.abs() + y.abs() + 1.0;
        let panels = ((xi_max * freq / 3.0).ceil() as usize).max(8);
        if panels > MAX_SPECTRAL_PANELS {
            return Err(Error::SpectralTruncationError(format!(
                "{panels} panels needed at t = {t}, |x|+|y| = {}",
                freq - 1.0
            )));
        }
        let (nodes, weights) = composite_gauss_legendre(0.0, xi_max, panels, self.spectral_order);
        let ex = e.imaginary(&nodes.iter().map(|xi| xi * x).collect::<Vec<_>>())?;
        let ey = e.imaginary(&nodes.iter().map(|xi| xi * y).collect::<Vec<_>>())?;
        let w0 = 2f64.powf(k);
        let mut sum = 0.0;
        for i in 0..nodes.len() {
            let xi = nodes[i];
            let re = ex[i].0 * ey[i].0 + ex[i].1 * ey[i].1;
            sum += weights[i] * re * (-t * xi * xi).exp() * w0 * xi.powf(2.0 * k);
        }
        // the real part is even in ξ; one c_k^{−1} from each of F and F^{−1}
        Ok(2.0 * sum / (e.c_k() * e.c_k()))
    }

    /// `h_t(x, y)` by the spectral formula.
    pub fn heat_kernel(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        self.kernel(x, y, t, HeatRoute::Spectral)
    }

    pub fn kernel(&self, x: &[f64], y: &[f64], t: f64, route: HeatRoute) -> Result<f64> {
        self.check_t(t)?;
        match route {
            HeatRoute::ClosedForm => Ok(self.closed_form(x, y, t)),
            HeatRoute::Spectral => {
                let mut v = 1.0;
                for (i, e) in self.factors.iter().enumerate() {
                    v *= self.spectral_1d(e, x[i], y[i], t)?;
                }
                Ok(v)
            }
        }
    }

    /// `∫ h_t(x, y) dw(y)` over a box wide enough to hold all but `e^{−64}`
    /// of the Gaussian tails around `±x`.
    pub fn normalization(&self, x: &[f64], t: f64, route: HeatRoute) -> Result<f64> {
        self.check_t(t)?;
        let reach = 16.0 * t.sqrt();
        let lo: Vec<f64> = x.iter().map(|v| -(v.abs() + reach)).collect();
        let hi: Vec<f64> = x.iter().map(|v| v.abs() + reach).collect();
        if self.dim() == 1 {
            let e = &self.factors[0];
            let breaks = [-x[0].abs(), 0.0, x[0].abs()];
            let cfg = QuadConfig::default().with_rel_tol(1e-9);
            let est = adaptive(
                |y| Ok(self.kernel(x, &[y], t, route)? * e.weight(y)),
                lo[0],
                hi[0],
                &breaks,
                &cfg,
            )?;
            return Ok(est.value);
        }
        let cfg = QuadConfig::default().with_rel_tol(1e-8);
        Ok(self
            .measure
            .integrate_cfg(
                |y| Ok(self.kernel(x, y, t, route)? * self.measure.weight(y)),
                &Region::cube(&lo, &hi),
                &cfg,
            )?
            .value)
    }

    /// `w(B(x, r))`, in closed form on the line.
    pub fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64> {
        if self.dim() == 1 {
            Ok(self.factors[0].ball_volume(x[0], r))
        } else {
            self.measure.ball_volume(x, r)
        }
    }

    /// `ln 𝒢_t(x, y)` with `𝒢_t = max(w(B(x,√t)), w(B(y,√t)))^{−1} e^{−d(x,y)²/t}`.
    pub fn log_gauss_g(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        let r = t.sqrt();
        let v = self.ball_volume(x, r)?.max(self.ball_volume(y, r)?);
        let d = self.root_system().orbit_distance(x, y);
        Ok(-v.ln() - d * d / t)
    }

    pub fn gauss_g(&self, x: &[f64], y: &[f64], t: f64) -> Result<f64> {
        Ok(self.log_gauss_g(x, y, t)?.exp())
    }

    /// Smallest `C` per scanned `c` with
    /// `h_t(x,y) ≤ C (1 + ‖x−y‖/s)^{−2} 𝒢_{t/c}(x,y)` on the sample, for the
    /// two prefactor scales `s = √t` and `s = t`.
    pub fn gaussian_bound_check(&self, t_grid: &[f64], pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<GaussianBoundReport> {
        let mut rows = Vec::new();
        for &c in &C_SCAN {
            let per_t: Vec<(f64, f64)> = t_grid
                .par_iter()
                .map(|&t| -> Result<(f64, f64)> {
                    let mut best_sqrt = f64::NEG_INFINITY;
                    let mut best_lin = f64::NEG_INFINITY;
                    for (x, y) in pairs {
                        let lh = self.log_closed_form(x, y, t);
                        let lg = self.log_gauss_g(x, y, t / c)?;
                        let sep = crate::geometry::distance(x, y);
                        let ps = 2.0 * (1.0 + sep / t.sqrt()).ln();
                        let pl = 2.0 * (1.0 + sep / t).ln();
                        best_sqrt = best_sqrt.max(lh - lg + ps);
                        best_lin = best_lin.max(lh - lg + pl);
                    }
                    Ok((best_sqrt, best_lin))
                })
                .collect::<Result<Vec<_>>>()?;
            let ls = per_t.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let ll = per_t.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            rows.push(BoundRow {
                c,
                constant_sqrt: ls.exp(),
                constant_linear: ll.exp(),
            });
        }
        let chosen = rows
            .iter()
            .find(|r| r.constant_sqrt.is_finite() && r.constant_sqrt <= BOUND_CAP)
            .ok_or(Error::BoundViolated)?;
        Ok(GaussianBoundReport {
            c: chosen.c,
            constant: chosen.constant_sqrt,
            constant_linear: chosen.constant_linear,
            rows: rows.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub c: f64,
    /// `C` with the prefactor `(1 + ‖x−y‖/√t)^{−2}`.
    pub constant_sqrt: f64,
    /// `C` with the prefactor `(1 + ‖x−y‖/t)^{−2}`.
    pub constant_linear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBoundReport {
    /// Largest scanned `c` whose `C` is at most [`BOUND_CAP`].
    pub c: f64,
    pub constant: f64,
    pub constant_linear: f64,
    pub rows: Vec<BoundRow>,
}

/// Cell-centred lattice on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub dx: f64,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 2 {
            return Err(Error::InvalidRegion(format!("grid {lo}:{hi}:{n}")));
        }
        let dx = (hi - lo) / n as f64;
        let nodes = (0..n).map(|i| lo + (i as f64 + 0.5) * dx).collect();
        Ok(Self { lo, hi, nodes, dx })
    }

    /// Parses `lo:hi:n`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::InvalidRegion(format!("grid {text:?}, expected lo:hi:n"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi, n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of nodes at distance at least `margin` from both ends.
    pub fn interior(&self, margin: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.nodes[i] - self.lo >= margin && self.hi - self.nodes[i] >= margin)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub min_kernel: f64,
    /// `max (k_t − h_t)` over grid pairs.
    pub max_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuhamelReport {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDRow {
    pub cube: usize,
    pub s: u32,
    pub t: f64,
    pub integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDReport {
    pub rows: Vec<ConditionDRow>,
    /// Log-log slope of the integral against `2^s`, per cube; `None` when
    /// fewer than two values are representable.
    pub exponents: Vec<Option<f64>>,
    pub max_exponent: f64,
    pub passed: bool,
}

/// Trotter–Strang approximation of `e^{−tL}` on a weighted lattice.
///
/// Matrices are kept in the symmetric form `D^{1/2} A D^{1/2}`, where `D` holds
/// the `dw` quadrature weights, so products of operators are plain matrix
/// products.
#[derive(Debug, Clone)]
pub struct SchrodingerKernelEngine {
    heat: HeatKernelEngine,
    profile: PotentialProfile,
    grid: Grid1D,
    weights: Vec<f64>,
    sqrt_w: Vec<f64>,
    v: Vec<f64>,
    pub trotter_steps: usize,
    /// Largest splitting step used by [`Self::steps_for`].
    pub max_step: f64,
}

fn matrix_power(s: &Array2<f64>, mut n: usize) -> Array2<f64> {
    let mut result: Option<Array2<f64>> = None;
    let mut base = s.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.dot(&base),
            });
        }
        n >>= 1;
        if n > 0 {
            base = base.dot(&base);
        }
    }
    result.unwrap_or_else(|| Array2::eye(s.nrows()))
}

impl SchrodingerKernelEngine {
    pub fn new(heat: HeatKernelEngine, profile: PotentialProfile, grid: Grid1D) -> Result<Self> {
        if heat.dim() != 1 {
            return Err(Error::Unsupported("the lattice Schrödinger engine is one-dimensional".into()));
        }
        let e = &heat.factors()[0];
        let weights: Vec<f64> = grid.nodes.iter().map(|&x| e.weight(x) * grid.dx).collect();
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidRegion("grid node on a zero of the weight".into()));
        }
        let sqrt_w = weights.iter().map(|w| w.sqrt()).collect();
        let v = grid.nodes.iter().map(|&x| profile.value(&[x])).collect();
        Ok(Self {
            heat,
            profile,
            grid,
            weights,
            sqrt_w,
            v,
            trotter_steps: 64,
            max_step: 1.0 / 16.0,
        })
    }

    pub fn heat(&self) -> &HeatKernelEngine {
        &self.heat
    }

    pub fn profile(&self) -> &PotentialProfile {
        &self.profile
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// `dw` quadrature weights of the nodes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.v
    }

    /// Same lattice and heat kernel with another potential.
    pub fn with_profile(&self, profile: PotentialProfile) -> Self {
        let v = self.grid.nodes.iter().map(|&x| profile.value(&[x])).collect();
        Self {
            profile,
            v,
            ..self.clone()
        }
    }

    /// Symmetric-form heat matrix `D^{1/2} H_τ D^{1/2}`.
    pub fn heat_step(&self, tau: f64) -> Array2<f64> {
        let n = self.grid.len();
        let x = &self.grid.nodes;
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let (a, b) = if i <= j { (i, j) } else { (j, i) };
                        self.sqrt_w[a] * self.sqrt_w[b] * self.heat.closed_form(&[x[a]], &[x[b]], tau)
                    })
                    .collect()
            })
            .collect();
        Array2::from_shape_vec((n, n), rows.concat()).expect("square")
    }

    /// `M_{τ/2} H_τ M_{τ/2}` with `M_s = diag(e^{−sV})`.
    pub fn strang_step(&self, tau: f64) -> Array2<f64> {
        let mut h = self.heat_step(tau);
        let m: Vec<f64> = self.v.iter().map(|v| (-0.5 * tau * v).exp()).collect();
        for ((i, j), e) in h.indexed_iter_mut() {
            *e *= m[i] * m[j];
        }
        h
    }

    /// Number of splitting steps used for time `t`. Steps are kept at or above
    /// `dx²`, below which the sampled heat step no longer conserves mass.
    pub fn steps_for(&self, t: f64) -> usize {
        let wanted = self.trotter_steps.max(16).max((t / self.max_step).ceil() as usize);
        let resolved = (t / (self.grid.dx * self.grid.dx)).floor() as usize;
        wanted.min(resolved).max(1)
    }

    /// Symmetric-form `K_t` with `n` Strang steps.
    pub fn propagator_with(&self, t: f64, n: usize) -> Array2<f64> {
        matrix_power(&self.strang_step(t / n as f64), n)
    }

    pub fn propagator(&self, t: f64) -> Array2<f64> {
        self.propagator_with(t, self.steps_for(t))
    }

    /// Converts a symmetric-form operator to kernel values on the nodes.
    pub fn to_kernel(&self, p: &Array2<f64>) -> Array2<f64> {
        let mut k = p.clone();
        for ((i, j), e) in k.indexed_iter_mut() {
            *e /= self.sqrt_w[i] * self.sqrt_w[j];
        }
        k
    }

    /// `k_t(x_i, x_j)` on the lattice.
    pub fn kernel_matrix(&self, t: f64) -> Array2<f64> {
        self.to_kernel(&self.propagator(t))
    }

    /// `k_t(x, y)` by bilinear interpolation of the lattice kernel.
    pub fn schrodinger_kernel(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let k = self.kernel_matrix(t);
        let locate = |u: f64| -> Result<(usize, f64)> {
            let s = (u - self.grid.nodes[0]) / self.grid.dx;
            if s < 0.0 || s > (self.grid.len() - 1) as f64 {
                return Err(Error::ArgumentOutOfRange(format!("{u} outside the lattice")));
            }
            let i = (s.floor() as usize).min(self.grid.len() - 2);
            Ok((i, s - i as f64))
        };
        let (i, a) = locate(x)?;
        let (j, b) = locate(y)?;
        Ok((1.0 - a) * (1.0 - b) * k[[i, j]] + a * (1.0 - b) * k[[i + 1, j]] + (1.0 - a) * b * k[[i, j + 1]] + a * b * k[[i + 1, j + 1]])
    }

    fn to_sym(&self, f: &[f64]) -> Array1<f64> {
        Array1::from_iter(f.iter().zip(&self.sqrt_w).map(|(v, s)| v * s))
    }

    fn from_sym(&self, u: &Array1<f64>) -> Vec<f64> {
        u.iter().zip(&self.sqrt_w).map(|(v, s)| v / s).collect()
    }

    /// `(A f)(x_i) = Σ_j a(x_i, x_j) f(x_j) ω_j` for a symmetric-form `A`.
    pub fn apply(&self, p: &Array2<f64>, f: &[f64]) -> Vec<f64> {
        self.from_sym(&p.dot(&self.to_sym(f)))
    }

    /// `Σ_j g_j f_j ω_j`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Largest `|∫ h_t(x_i, y) dw(y) − 1|` over rows at least `8√t` from the
    /// lattice ends, computed with the lattice heat semigroup.
    pub fn normalization_drift(&self, t: f64) -> f64 {
        let n = self.steps_for(t);
        let p = matrix_power(&self.heat_step(t / n as f64), n);
        let ones = vec![1.0; self.grid.len()];
        let row = self.apply(&p, &ones);
        self.grid
            .interior(8.0 * t.sqrt())
            .iter()
            .map(|&i| (row[i] - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_grid(&self, t: f64) -> Result<()> {
        let drift = self.normalization_drift(t);
        if drift > 1e-3 {
            return Err(Error::GridTooCoarse { drift });
        }
        Ok(())
    }

    /// `0 ≤ k_t ≤ h_t` on all lattice pairs, against the closed-form `h_t`.
    pub fn domination(&self, t: f64) -> DominationReport {
        let k = self.kernel_matrix(t);
        let x = &self.grid.nodes;
        let mut min_kernel = f64::INFINITY;
        let mut max_excess = f64::NEG_INFINITY;
        for ((i, j), v) in k.indexed_iter() {
            min_kernel = min_kernel.min(*v);
            max_excess = max_excess.max(v - self.heat.closed_form(&[x[i]], &[x[j]], t));
        }
        DominationReport { min_kernel, max_excess }
    }

    /// `max |H_{t₁}H_{t₂} − H_{t₁+t₂}| / max |H_{t₁+t₂}|` for lattice heat
    /// kernels on pairs at least `6√(t₁+t₂)` from the lattice ends; NaN when no
    /// such pair exists.
    pub fn semigroup_error(&self, t1: f64, t2: f64) -> f64 {
        let a = self.heat_step(t1);
        let b = self.heat_step(t2);
        let ab = self.to_kernel(&a.dot(&b));
        let c = self.to_kernel(&self.heat_step(t1 + t2));
        let inner = self.grid.interior(6.0 * (t1 + t2).sqrt());
        if inner.is_empty() {
            return f64::NAN;
        }
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for &i in &inner {
            for &j in &inner {
                err = err.max((ab[[i, j]] - c[[i, j]]).abs());
                scale = scale.max(c[[i, j]].abs());
            }
        }
        err / scale
    }

    /// `|H_t f − K_t f − ∫₀ᵗ H_{t−s} V K_s f ds| / ‖H_t f‖_∞` at every even
    /// splitting node `t_m = 2m·t/n`, with the time integral by composite
    /// Simpson on the splitting nodes and `H_0 = I`.
    pub fn duhamel_residual(&self, f: &[f64], t: f64, n: usize) -> Result<DuhamelReport> {
        if n < 2 || n % 2 == 1 {
            return Err(Error::ArgumentOutOfRange(format!("Simpson needs an even step count, got {n}")));
        }
        let tau = t / n as f64;
        let h = self.heat_step(tau);
        let s = self.strang_step(tau);
        let u0 = self.to_sym(f);
        let v = Array1::from_vec(self.v.clone());
        // g_j = V K_{s_j} f in symmetric coordinates
        let mut k_states = Vec::with_capacity(n + 1);
        k_states.push(u0.clone());
        for j in 0..n {
            let next = s.dot(&k_states[j]);
            k_states.push(next);
        }
        let mut h_states = Vec::with_capacity(n + 1);
        h_states.push(u0);
        for j in 0..n {
            let next = h.dot(&h_states[j]);
            h_states.push(next);
        }
        let mut times = Vec::new();
        let mut residuals = Vec::new();
        for m in 1..=n / 2 {
            let top = 2 * m;
            // Σ_j w_j H^{top−j} g_j by Horner
            let mut acc = Array1::<f64>::zeros(self.grid.len());
            for (j, kj) in k_states.iter().enumerate().take(top + 1) {
                let wj = if j == 0 || j == top {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                if j > 0 {
                    acc = h.dot(&acc);
                }
                acc = acc + &(kj * &v) * (wj * tau / 3.0);
            }
            let r = &h_states[top] - &k_states[top] - &acc;
            let r = self.from_sym(&r);
            let hf = self.from_sym(&h_states[top]);
            let scale = hf.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let res = r.iter().fold(0.0f64, |a, b| a.max(b.abs())) / scale;
            times.push(top as f64 * tau);
            residuals.push(res);
        }
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        Ok(DuhamelReport {
            times,
            residuals,
            max_residual,
        })
    }

    /// Condition (D): `sup_{y ∈ Q**** ∩ lattice} ∫ k_{2^s d(Q)²}(x, y) dw(x)`
    /// for `s = 1..=s_max`, with a decay exponent fitted per cube. Passes when
    /// every fitted exponent is below `−1`.
    pub fn condition_d(&self, cubes: &[DyadicCube], s_max: u32) -> Result<ConditionDReport> {
        let ones = vec![1.0; self.grid.len()];
        let mut rows = Vec::new();
        let mut exponents = Vec::new();
        for (ci, q) in cubes.iter().enumerate() {
            let (lo, hi) = q.dilate(16.0);
            let ys: Vec<usize> = (0..self.grid.len())
                .filter(|&i| self.grid.nodes[i] >= lo[0] && self.grid.nodes[i] <= hi[0])
                .collect();
            if ys.is_empty() {
                return Err(Error::ArgumentOutOfRange(format!("cube {ci}: Q**** misses the lattice")));
            }
            let d2 = q.side * q.side;
            // K_{2d²} first, then repeated squaring doubles the time
            let t1 = 2.0 * d2;
            let n1 = self.steps_for(t1).next_power_of_two();
            let mut p = self.propagator_with(t1, n1);
            let mut xs = Vec::new();
            let mut vals = Vec::new();
            for s in 1..=s_max {
                if s > 1 {
                    p = p.dot(&p);
                }
                let col = self.apply(&p, &ones);
                let sup = ys.iter().map(|&i| col[i]).fold(0.0, f64::max);
                rows.push(ConditionDRow {
                    cube: ci,
                    s,
                    t: 2f64.powi(s as i32) * d2,
                    integral: sup,
                });
                xs.push(2f64.powi(s as i32));
                vals.push(sup);
            }
            exponents.push(loglog_fit(&xs, &vals).map(|f| f.slope));
        }
        let max_exponent = exponents
            .iter()
            .map(|e| e.unwrap_or(f64::NEG_INFINITY))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(ConditionDReport {
            rows,
            exponents,
            max_exponent,
            passed: max_exponent < -1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionKRow {
    pub cube: usize,
    pub t: f64,
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionKReport {
    pub c: f64,
    pub rows: Vec<ConditionKRow>,
    /// Fitted `δ` in `lhs ≈ C (t/d(Q)²)^δ`, per cube.
    pub deltas: Vec<f64>,
    pub median_delta: f64,
    /// `1 − 𝐍/(2q)`.
    pub predicted_delta: f64,
    /// Largest `lhs / (t/d(Q)²)^δ` over rows, using each cube's own `δ`.
    pub constant: f64,
}

/// Condition (K): `lhs(Q, t) = ∫₀^{2t}∫_{Q***} V(y) 𝒢_{2s/c}(x, y) dw(y) ds`,
/// maximized over `x_per_axis^N` points of `Q***`, for `t = f·d(Q)²` with
/// `f` in `t_fractions`.
pub fn condition_k(
    heat: &HeatKernelEngine,
    pm: &PotentialMeasure,
    cubes: &[DyadicCube],
    t_fractions: &[f64],
    c: f64,
    x_per_axis: usize,
) -> Result<ConditionKReport> {
    let measure = heat.measure();
    let inner_cfg = QuadConfig::default().with_rel_tol(1e-7);
    let outer_cfg = QuadConfig::default().with_rel_tol(1e-6);
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    let mut constant: f64 = 0.0;
    for (ci, q) in cubes.iter().enumerate() {
        let (lo, hi) = q.dilate(8.0);
        let region = Region::cube(&lo, &hi);
        let xs = crate::cubes::grid_points(&lo, &hi, x_per_axis);
        let d2 = q.side * q.side;
        let lhs_at = |x: &[f64], t: f64| -> Result<f64> {
            let inner = |s: f64| -> Result<f64> {
                if s <= 0.0 {
                    return Ok(0.0);
                }
                let tt = 2.0 * s / c;
                Ok(measure
                    .integrate_cfg(
                        |y| Ok(pm.v(y) * heat.gauss_g(x, y, tt)? * measure.weight(y)),
                        &region,
                        &inner_cfg,
                    )?
                    .value)
            };
            Ok(adaptive(inner, 0.0, 2.0 * t, &[], &outer_cfg)?.value)
        };
        let results: Vec<(f64, f64)> = t_fractions
            .par_iter()
            .map(|&f| -> Result<(f64, f64)> {
                let t = f * d2;
                let mut best: f64 = 0.0;
                for x in &xs {
                    best = best.max(lhs_at(x, t)?);
                }
                Ok((t, best))
            })
            .collect::<Result<Vec<_>>>()?;
        let fr: Vec<f64> = results.iter().map(|r| r.0 / d2).collect();
        let lv: Vec<f64> = results.iter().map(|r| r.1).collect();
        let delta = loglog_fit(&fr, &lv).map_or(f64::NAN, |f| f.slope);
        for (&(t, lhs), &f) in results.iter().zip(&fr) {
            constant = constant.max(lhs / f.powf(delta));
            rows.push(ConditionKRow { cube: ci, t, lhs });
        }
        deltas.push(delta);
    }
    let predicted_delta = 1.0 - heat.homogeneous_dimension() / (2.0 * pm.profile.q);
    Ok(ConditionKReport {
        c,
        rows,
        median_delta: crate::stats::median(&deltas),
        deltas,
        predicted_delta,
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrbitMultiplicity, Preset};
    use crate::potential::PotentialKind;

    fn engine(k: f64) -> HeatKernelEngine {
        let rs = Arc::new(RootSystem::from_preset(Preset::A1, &OrbitMultiplicity(vec![k])).unwrap());
        HeatKernelEngine::new(rs).unwrap()
    }

    #[test]
    fn euclidean_heat_kernel_is_gaussian() {
        let e = engine(0.0);
        for (x, y, t) in [(0.0f64, 0.5f64, 0.3f64), (1.0, -2.0, 1.0), (3.0, 3.5, 0.1)] {
            let g = (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-(x - y) * (x - y) / (4.0 * t)).exp();
            let s = e.heat_kernel(&[x], &[y], t).unwrap();
            let c = e.closed_form(&[x], &[y], t);
            assert!((s - g).abs() < 1e-8 * g, "{s} {g}");
            assert!((c - g).abs() < 1e-12 * g);
        }
    }

    #[test]
    fn spectral_matches_closed_form() {
        let e = engine(1.0);
        for (x, y, t) in [(0.0, 1.0, 0.5), (1.5, -0.7, 0.2), (2.0, 2.5, 1.0), (-3.0, 1.0, 2.0)] {
            let s = e.heat_kernel(&[x], &[y], t).unwrap();
            let c = e.closed_form(&[x], &[y], t);
            assert!((s - c).abs() < 1e-9 * c.max(1e-3), "({x},{y},{t}): {s} vs {c}");
        }
    }

    #[test]
    fn origin_value() {
        let e = engine(1.0);
        let t = 0.7f64;
        let n = e.homogeneous_dimension();
        for x in [0.0f64, 0.8, -2.0] {
            let want = (2.0 * t).powf(-n / 2.0) * (-x * x / (4.0 * t)).exp() / e.c_k();
            assert!((e.closed_form(&[x], &[0.0], t) - want).abs() < 1e-13 * want);
        }
    }

    #[test]
    fn grid_parsing() {
        let g = Grid1D::parse("-6:6:256").unwrap();
        assert_eq!(g.len(), 256);
        assert!(g.nodes.iter().all(|x| x.abs() > 1e-3));
        assert!(Grid1D::parse("1:0:4").is_err());
        assert!(Grid1D::parse("a:b").is_err());
    }

    #[test]
    fn constant_potential_scales_semigroup() {
        let heat = engine(1.0);
        let grid = Grid1D::new(-6.0, 6.0, 96).unwrap();
        let p0 = PotentialProfile::new(PotentialKind::Constant { c: 0.0 }, 2.0, 3.0).unwrap();
        let pc = PotentialProfile::new(PotentialKind::Constant { c: 2.0 }, 2.0, 3.0).unwrap();
        let e0 = SchrodingerKernelEngine::new(heat.clone(), p0, grid.clone()).unwrap();
        let ec = SchrodingerKernelEngine::new(heat, pc, grid).unwrap();
        let t = 0.5;
        let k0 = e0.kernel_matrix(t);
        let kc = ec.kernel_matrix(t);
        let f = (-2.0 * t).exp();
        let max = k0.iter().fold(0.0f64, |m, v| m.max(*v));
        for (a, b) in k0.iter().zip(kc.iter()) {
            assert!((a * f - b).abs() < 1e-12 * max);
        }
    }

    #[test]
    fn matrix_power_matches_repeated_products() {
        let s = Array2::from_shape_vec((2, 2), vec![0.9, 0.1, 0.2, 0.7]).unwrap();
        let mut want = Array2::eye(2);
        for _ in 0..13 {
            want = want.dot(&s);
        }
        let got = matrix_power(&s, 13);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
