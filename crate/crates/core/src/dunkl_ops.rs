//! Dunkl operators on smooth fields, the Dunkl Laplacian, the quadratic form
//! of `−Δ_k + V` and the reflection Leibniz rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, reflect, RootSystem};
use crate::measure::Region;
use crate::potential::{Polynomial, PotentialMeasure};

/// Relative distance to a root hyperplane below which difference quotients
/// are replaced by their Taylor limits.
pub const HYPERPLANE_TOL: f64 = 1e-8;

/// A scalar field with analytic first and second derivatives.
pub trait ScalarField: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Row-major Hessian.
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SmoothField {
    /// `amplitude · exp(−a ‖x − center‖²)`.
    Gaussian { amplitude: f64, a: f64, center: Vec<f64> },
    Polynomial { poly: Polynomial },
    Product { factors: Vec<SmoothField> },
    Sum { terms: Vec<SmoothField> },
}

impl SmoothField {
    pub fn gaussian(amplitude: f64, a: f64, center: &[f64]) -> Self {
        SmoothField::Gaussian {
            amplitude,
            a,
            center: center.to_vec(),
        }
    }

    pub fn polynomial(poly: Polynomial) -> Self {
        SmoothField::Polynomial { poly }
    }

    pub fn product(a: SmoothField, b: SmoothField) -> Self {
        SmoothField::Product { factors: vec![a, b] }
    }

    pub fn sum(a: SmoothField, b: SmoothField) -> Self {
        SmoothField::Sum { terms: vec![a, b] }
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        SmoothField::Polynomial {
            poly: Polynomial::new(vec![(c, vec![0; dim])]),
        }
    }

    /// Value, gradient and Hessian in one pass.
    pub fn jet(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = x.len();
        match self {
            SmoothField::Gaussian { amplitude, a, center } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(u, c)| u - c).collect();
                let r2: f64 = d.iter().map(|v| v * v).sum();
                let v = amplitude * (-a * r2).exp();
                let g: Vec<f64> = d.iter().map(|di| -2.0 * a * di * v).collect();
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        h[i * n + j] = v * (4.0 * a * a * d[i] * d[j] - 2.0 * a * delta);
                    }
                }
                (v, g, h)
            }
            SmoothField::Polynomial { poly } => (poly.eval(x), poly.gradient(x), poly.hessian(x)),
            SmoothField::Product { factors } => {
                let mut v = 1.0;
                let mut g = vec![0.0; n];
                let mut h = vec![0.0; n * n];
                for f in factors {
                    let (fv, fg, fh) = f.jet(x);
                    // (v, g, h) ← product with (fv, fg, fh)
                    for i in 0..n {
                        for j in 0..n {
                            h[i * n + j] = h[i * n + j] * fv + g[i] * fg[j] + fg[i] * g[j] + v * fh[i * n + j];
                        }
                    }
                    for i in 0..n {
                        g[i] = g[i] * fv + v * fg[i];
                    }
                    v *= fv;
                }
                (v, g, h)
            }
            SmoothField::Sum { terms } => {
                let mut v = 0.0;
                let mut g = vec![0.0; n];
                let mut h = vec![0.0; n * n];
                for t in terms {
                    let (tv, tg, th) = t.jet(x);
                    v += tv;
                    g.iter_mut().zip(&tg).for_each(|(a, b)| *a += b);
                    h.iter_mut().zip(&th).for_each(|(a, b)| *a += b);
                }
                (v, g, h)
            }
        }
    }

    /// Radius beyond which `|f| < 1e-12·max|f|` for Gaussian-dominated fields,
    /// and the centre of mass of the Gaussian factors; `None` when no Gaussian
    /// factor controls the decay.
    pub fn support_hint(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            SmoothField::Gaussian { a, center, .. } => Some((center.clone(), (30.0 / a).sqrt())),
            SmoothField::Polynomial { .. } => None,
            SmoothField::Product { factors } => {
                // a decaying factor times polynomials: widen for polynomial growth
                let g = factors.iter().find_map(|f| f.support_hint())?;
                Some((g.0, g.1 * 1.5 + 2.0))
            }
            SmoothField::Sum { terms } => {
                let hints: Option<Vec<(Vec<f64>, f64)>> = terms.iter().map(|t| t.support_hint()).collect();
                let hints = hints?;
                let n = hints[0].0.len();
                let mut lo = vec![f64::INFINITY; n];
                let mut hi = vec![f64::NEG_INFINITY; n];
                for (c, r) in &hints {
                    for i in 0..n {
                        lo[i] = lo[i].min(c[i] - r);
                        hi[i] = hi[i].max(c[i] + r);
                    }
                }
                let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
                let radius = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).fold(0.0, f64::max);
                Some((center, radius))
            }
        }
    }
}

impl ScalarField for SmoothField {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            SmoothField::Gaussian { amplitude, a, center } => {
                let r2: f64 = x.iter().zip(center).map(|(u, c)| (u - c) * (u - c)).sum();
                amplitude * (-a * r2).exp()
            }
            SmoothField::Polynomial { poly } => poly.eval(x),
            SmoothField::Product { factors } => factors.iter().map(|f| f.value(x)).product(),
            SmoothField::Sum { terms } => terms.iter().map(|f| f.value(x)).sum(),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SmoothField::Polynomial { poly } => poly.gradient(x),
            _ => self.jet(x).1,
        }
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        self.jet(x).2
    }
}

fn near_hyperplane(ax: f64, x: &[f64]) -> bool {
    ax.abs() < HYPERPLANE_TOL * (1.0 + norm(x))
}

/// `(f(x) − f(σ_α x))/⟨α,x⟩`, with the limit `⟨∇f(x),α⟩` on the hyperplane.
pub fn reflection_quotient(f: &dyn ScalarField, alpha: &[f64], x: &[f64]) -> f64 {
    let ax = dot(alpha, x);
    if near_hyperplane(ax, x) {
        dot(&f.gradient(x), alpha)
    } else {
        (f.value(x) - f.value(&reflect(x, alpha))) / ax
    }
}

/// `T_ξ f(x) = ∂_ξ f(x) + Σ_α (k(α)/2)⟨α,ξ⟩(f(x) − f(σ_α x))/⟨α,x⟩`, with `ξ`
/// normalized.
pub fn dunkl_derivative(rs: &RootSystem, f: &dyn ScalarField, xi: &[f64], x: &[f64]) -> f64 {
    let nxi = norm(xi);
    let u: Vec<f64> = xi.iter().map(|v| v / nxi).collect();
    let mut out = dot(&f.gradient(x), &u);
    for (alpha, k) in rs.weighted_roots() {
        if k == 0.0 {
            continue;
        }
        let c = 0.5 * k * dot(alpha, &u);
        if c != 0.0 {
            out += c * reflection_quotient(f, alpha, x);
        }
    }
    out
}

/// `T_j f(x)` along the coordinate axis `j`.
pub fn dunkl_partial(rs: &RootSystem, f: &dyn ScalarField, j: usize, x: &[f64]) -> f64 {
    let mut e = vec![0.0; x.len()];
    e[j] = 1.0;
    dunkl_derivative(rs, f, &e, x)
}

/// `Δ_k f = Δf + Σ_α k(α)[∂_α f/⟨α,x⟩ − (‖α‖²/2)(f(x) − f(σ_α x))/⟨α,x⟩²]`,
/// with the second-order Taylor limit `αᵀ∇²f α/‖α‖²` on hyperplanes.
pub fn dunkl_laplacian(rs: &RootSystem, f: &dyn ScalarField, x: &[f64]) -> f64 {
    let n = x.len();
    let h = f.hessian(x);
    let mut out: f64 = (0..n).map(|i| h[i * n + i]).sum();
    let g = f.gradient(x);
    let fx = f.value(x);
    for (alpha, k) in rs.weighted_roots() {
        if k == 0.0 {
            continue;
        }
        let ax = dot(alpha, x);
        let a2 = dot(alpha, alpha);
        let term = if near_hyperplane(ax, x) {
            let mut aha = 0.0;
            for i in 0..n {
                for j in 0..n {
                    aha += alpha[i] * h[i * n + j] * alpha[j];
                }
            }
            aha / a2
        } else {
            dot(&g, alpha) / ax - 0.5 * a2 * (fx - f.value(&reflect(x, alpha))) / (ax * ax)
        };
        out += k * term;
    }
    out
}

/// Largest `|f|` on the boundary of a box or sphere, sampled on a grid.
fn boundary_max(f: &dyn ScalarField, region: &Region) -> f64 {
    let per_edge = 64;
    match region {
        Region::Box { lo, hi } => {
            let n = lo.len();
            let mut best: f64 = 0.0;
            for face in 0..n {
                for side in [lo[face], hi[face]] {
                    let mut flo = lo.clone();
                    let mut fhi = hi.clone();
                    flo[face] = side;
                    fhi[face] = side;
                    let per_axis = if n == 1 { 1 } else { per_edge };
                    for mut p in crate::cubes::grid_points(&flo, &fhi, per_axis) {
                        p[face] = side;
                        best = best.max(f.value(&p).abs());
                    }
                }
            }
            best
        }
        Region::Ball { center, radius } => {
            let n = center.len();
            let mut best: f64 = 0.0;
            if n == 1 {
                for s in [-1.0, 1.0] {
                    best = best.max(f.value(&[center[0] + s * radius]).abs());
                }
            } else {
                // points of a cube grid projected to the sphere
                let lo = vec![-1.0; n];
                let hi = vec![1.0; n];
                for p in crate::cubes::grid_points(&lo, &hi, 16) {
                    let r = norm(&p);
                    let q: Vec<f64> = p.iter().zip(center).map(|(v, c)| c + radius * v / r).collect();
                    best = best.max(f.value(&q).abs());
                }
            }
            best
        }
    }
}

fn interior_peak(f: &dyn ScalarField, region: &Region) -> f64 {
    let (lo, hi) = match region {
        Region::Box { lo, hi } => (lo.clone(), hi.clone()),
        Region::Ball { center, radius } => (
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        ),
    };
    let per_axis = if lo.len() == 1 { 512 } else { 48 };
    crate::cubes::grid_points(&lo, &hi, per_axis)
        .iter()
        .filter(|p| region.contains(p))
        .map(|p| f.value(p).abs())
        .fold(0.0, f64::max)
}

/// Errors unless `f` is negligible (`< 1e-10·peak`) on the boundary.
pub fn check_truncation(f: &dyn ScalarField, region: &Region) -> Result<()> {
    let peak = interior_peak(f, region);
    let edge = boundary_max(f, region);
    if peak > 0.0 && edge > 1e-10 * peak {
        return Err(Error::TruncationTooLarge { ratio: edge / peak });
    }
    Ok(())
}

/// Parts of `𝐐(f,f) = Σ_j ∫|T_j f|² dw + ∫ V|f|² dw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub gradient_part: f64,
    pub potential_part: f64,
    pub total: f64,
}

pub fn quadratic_form(f: &dyn ScalarField, pm: &PotentialMeasure, region: &Region, tol: Option<f64>) -> Result<QuadraticForm> {
    check_truncation(f, region)?;
    let rs = pm.measure.context();
    let n = rs.dim();
    let gradient_part = pm
        .measure
        .integrate(
            |x| (0..n).map(|j| dunkl_partial(rs, f, j, x).powi(2)).sum::<f64>(),
            region,
            tol,
        )?
        .value;
    let potential_part = pm.measure.integrate(|x| pm.v(x) * f.value(x).powi(2), region, tol)?.value;
    Ok(QuadraticForm {
        gradient_part,
        potential_part,
        total: gradient_part + potential_part,
    })
}

struct ProductField<'a> {
    f: &'a dyn ScalarField,
    g: &'a dyn ScalarField,
}

impl ScalarField for ProductField<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x) * self.g.value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (fv, gv) = (self.f.value(x), self.g.value(x));
        self.f
            .gradient(x)
            .iter()
            .zip(self.g.gradient(x))
            .map(|(a, b)| a * gv + fv * b)
            .collect()
    }
    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let (fv, gv) = (self.f.value(x), self.g.value(x));
        let (fg, gg) = (self.f.gradient(x), self.g.gradient(x));
        let (fh, gh) = (self.f.hessian(x), self.g.hessian(x));
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] = fh[i * n + j] * gv + fg[i] * gg[j] + fg[j] * gg[i] + fv * gh[i * n + j];
            }
        }
        h
    }
}

/// `max |T_j(fg) − [(T_j f)g + f∂_j g + Σ_α (k/2)α_j f(σ_α x)(g(x) − g(σ_α x))/⟨x,α⟩]|`.
pub fn leibniz_residual(rs: &RootSystem, f: &dyn ScalarField, g: &dyn ScalarField, j: usize, sample: &[Vec<f64>]) -> f64 {
    let fg = ProductField { f, g };
    let mut worst: f64 = 0.0;
    for x in sample {
        let lhs = dunkl_partial(rs, &fg, j, x);
        let mut rhs = dunkl_partial(rs, f, j, x) * g.value(x) + f.value(x) * g.gradient(x)[j];
        for (alpha, k) in rs.weighted_roots() {
            if k == 0.0 || alpha[j] == 0.0 {
                continue;
            }
            let fs = f.value(&reflect(x, alpha));
            rhs += 0.5 * k * alpha[j] * fs * reflection_quotient(g, alpha, x);
        }
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrbitMultiplicity, Preset};

    fn rank_one(k: f64) -> RootSystem {
        RootSystem::from_preset(Preset::A1, &OrbitMultiplicity(vec![k])).unwrap()
    }

    #[test]
    fn derivative_of_identity() {
        for k in [0.0, 0.5, 1.0, 2.5] {
            let rs = rank_one(k);
            let f = SmoothField::polynomial(Polynomial::univariate(&[0.0, 1.0]));
            for x in [-1.3, 0.0, 2.0] {
                assert!((dunkl_derivative(&rs, &f, &[1.0], &[x]) - (1.0 + 2.0 * k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn even_function_has_classical_derivative() {
        let rs = rank_one(1.7);
        let f = SmoothField::polynomial(Polynomial::univariate(&[0.0, 0.0, 1.0]));
        for x in [-2.0, 0.3, 0.0] {
            assert!((dunkl_derivative(&rs, &f, &[1.0], &[x]) - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_squared_norm() {
        let b2 = RootSystem::from_preset(Preset::B2, &OrbitMultiplicity(vec![1.0, 0.5])).unwrap();
        let f = SmoothField::polynomial(Polynomial::new(vec![(1.0, vec![2, 0]), (1.0, vec![0, 2])]));
        for x in [[0.3, -0.7], [1.0, 1.0], [0.0, 2.0]] {
            let v = dunkl_laplacian(&b2, &f, &x);
            assert!((v - 2.0 * b2.homogeneous_dimension()).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn gaussian_jet_matches_differences() {
        let f = SmoothField::product(
            SmoothField::gaussian(1.3, 0.7, &[0.2, -0.4]),
            SmoothField::polynomial(Polynomial::new(vec![(1.0, vec![1, 0]), (2.0, vec![0, 2])])),
        );
        let x = [0.5, 0.25];
        let h = 1e-5;
        let g = f.gradient(&x);
        let hs = f.hessian(&x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + g[i].abs()));
            let gp = f.gradient(&xp);
            let gm = f.gradient(&xm);
            for j in 0..2 {
                assert!(((gp[j] - gm[j]) / (2.0 * h) - hs[i * 2 + j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hyperplane_continuity() {
        let rs = rank_one(1.0);
        let f = SmoothField::product(
            SmoothField::gaussian(1.0, 1.0, &[0.3]),
            SmoothField::polynomial(Polynomial::univariate(&[1.0, 2.0, -1.0])),
        );
        let a = dunkl_derivative(&rs, &f, &[1.0], &[1e-6]);
        let b = dunkl_derivative(&rs, &f, &[1.0], &[-1e-6]);
        let c = dunkl_derivative(&rs, &f, &[1.0], &[0.0]);
        assert!((a - b).abs() < 1e-4);
        assert!((a - c).abs() < 1e-4);
        let la = dunkl_laplacian(&rs, &f, &[1e-5]);
        let lc = dunkl_laplacian(&rs, &f, &[0.0]);
        assert!((la - lc).abs() < 1e-3, "{la} {lc}");
    }

    #[test]
    fn leibniz_with_constant_factor() {
        let rs = rank_one(1.0);
        let f = SmoothField::gaussian(1.0, 0.5, &[0.4]);
        let one = SmoothField::constant(1.0, 1);
        let sample: Vec<Vec<f64>> = (0..50).map(|i| vec![-3.0 + 0.123 * i as f64]).collect();
        assert_eq!(leibniz_residual(&rs, &f, &one, 0, &sample), 0.0);
    }

    #[test]
    fn truncation_is_detected() {
        let f = SmoothField::gaussian(1.0, 0.1, &[0.0]);
        assert!(matches!(
            check_truncation(&f, &Region::cube(&[-2.0], &[2.0])),
            Err(Error::TruncationTooLarge { .. })
        ));
        assert!(check_truncation(&f, &Region::cube(&[-20.0], &[20.0])).is_ok());
    }
}
