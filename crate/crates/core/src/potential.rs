//! Potentials `V ≥ 0`, the measure `μ = V dw`, and reverse Hölder diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::norm;
use crate::measure::{Region, WeightedMeasure};

/// Polynomial in `N` variables as a list of `(coefficient, exponents)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(terms: Vec<(f64, Vec<u32>)>) -> Self {
        Self { terms }
    }

    /// Single-variable polynomial from ascending coefficients.
    pub fn univariate(coeffs: &[f64]) -> Self {
        Self {
            terms: coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| (*c, vec![i as u32]))
                .collect(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.terms.first().map(|t| t.1.len())
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, e)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().zip(x).map(|(p, xi)| xi.powi(*p as i32)).product::<f64>())
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut g = vec![0.0; n];
        for (c, e) in &self.terms {
            for (i, gi) in g.iter_mut().enumerate() {
                if e[i] == 0 {
                    continue;
                }
                let mut t = c * e[i] as f64;
                for j in 0..n {
                    let p = if j == i { e[j] - 1 } else { e[j] };
                    t *= x[j].powi(p as i32);
                }
                *gi += t;
            }
        }
        g
    }

    /// Row-major Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut h = vec![0.0; n * n];
        for (c, e) in &self.terms {
            for i in 0..n {
                for j in 0..n {
                    let mut p: Vec<i64> = e.iter().map(|v| *v as i64).collect();
                    let mut t = *c;
                    t *= p[i] as f64;
                    p[i] -= 1;
                    t *= p[j] as f64;
                    p[j] -= 1;
                    if t == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        t *= x[k].powi(p[k] as i32);
                    }
                    h[i * n + j] += t;
                }
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// `V ≡ c`.
    Constant { c: f64 },
    /// `V = ‖x‖^σ`.
    Power { sigma: f64 },
    /// `V = ‖x‖²`.
    SqNorm,
    /// `V = p(x)²`.
    PolySq { poly: Polynomial },
    /// `V = exp(‖x‖)`; not reverse Hölder, kept as a negative diagnostic.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    pub kind: PotentialKind,
    /// Overall multiplier applied to the preset.
    pub scale: f64,
    /// Claimed reverse Hölder exponent `q`.
    pub q: f64,
}

impl PotentialProfile {
    /// Validates `V ≥ 0` and `q > max(1, 𝐍/2)` against the homogeneous
    /// dimension of the context the potential will live on.
    pub fn new(kind: PotentialKind, q: f64, homogeneous_dimension: f64) -> Result<Self> {
        Self::scaled(kind, 1.0, q, homogeneous_dimension)
    }

    pub fn scaled(kind: PotentialKind, scale: f64, q: f64, homogeneous_dimension: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidPotential(format!("scale {scale}")));
        }
        match &kind {
            PotentialKind::Constant { c } if !(c.is_finite() && *c >= 0.0) => {
                return Err(Error::InvalidPotential(format!("negative constant {c}")))
            }
            PotentialKind::Power { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                return Err(Error::InvalidPotential(format!("power {sigma} < 0")))
            }
            PotentialKind::PolySq { poly } if poly.terms.is_empty() => {
                return Err(Error::InvalidPotential("empty polynomial".into()))
            }
            _ => {}
        }
        let bound = 1f64.max(homogeneous_dimension / 2.0);
        if !(q > bound) {
            return Err(Error::InvalidExponent { q, bound });
        }
        Ok(Self { kind, scale, q })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let base = match &self.kind {
            PotentialKind::Constant { c } => *c,
            PotentialKind::Power { sigma } => {
                if *sigma == 0.0 {
                    1.0
                } else {
                    norm(x).powf(*sigma)
                }
            }
            PotentialKind::SqNorm => x.iter().map(|v| v * v).sum(),
            PotentialKind::PolySq { poly } => poly.eval(x).powi(2),
            PotentialKind::Exponential => norm(x).exp(),
        };
        self.scale * base
    }

    /// `Some(c)` when the potential is the constant `c`.
    pub fn as_constant(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Constant { c } => Some(self.scale * c),
            PotentialKind::Power { sigma } if *sigma == 0.0 => Some(self.scale),
            _ => None,
        }
    }

    /// `V` multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            scale: self.scale * factor,
            ..self.clone()
        }
    }

    /// `q′ = q/(q−1)`.
    pub fn conjugate_exponent(&self) -> f64 {
        self.q / (self.q - 1.0)
    }

    /// Order of vanishing at the origin for radial presets, used to decide
    /// integrability of negative powers.
    fn radial_order(&self) -> Option<f64> {
        match &self.kind {
            PotentialKind::Constant { c } => (self.scale * c > 0.0).then_some(0.0),
            PotentialKind::Power { sigma } => Some(*sigma),
            PotentialKind::SqNorm => Some(2.0),
            PotentialKind::Exponential => Some(0.0),
            PotentialKind::PolySq { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhReport {
    pub constant: f64,
    pub witness: (Vec<f64>, f64),
    pub excluded: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub constant: f64,
    pub witness: Option<(Vec<f64>, Vec<f64>)>,
    /// Cubes on which `V^{−1/(p−1)}` is not `dw`-integrable (skipped).
    pub non_integrable: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingComparison {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct PotentialMeasure {
    pub profile: PotentialProfile,
    pub measure: WeightedMeasure,
}

impl PotentialMeasure {
    pub fn new(profile: PotentialProfile, measure: WeightedMeasure) -> Self {
        Self { profile, measure }
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        self.profile.value(x)
    }

    /// `μ(A) = ∫_A V dw`.
    pub fn mu(&self, region: &Region) -> Result<f64> {
        if let Some(c) = self.profile.as_constant() {
            return Ok(c * self.measure.region_volume(region)?);
        }
        Ok(self.measure.integrate(|x| self.v(x), region, None)?.value)
    }

    /// `w(A)` and `μ(A)` together.
    pub fn volumes(&self, region: &Region) -> Result<(f64, f64)> {
        let w = self.measure.region_volume(region)?;
        let mu = match self.profile.as_constant() {
            Some(c) => c * w,
            None => self.measure.integrate(|x| self.v(x), region, None)?.value,
        };
        Ok((w, mu))
    }

    /// Average of `V` over a region with respect to `dw`.
    pub fn average(&self, region: &Region) -> Result<f64> {
        let (w, mu) = self.volumes(region)?;
        Ok(mu / w)
    }

    /// `max_B (avg_B V^q)^{1/q} / avg_B V` over the given balls.
    pub fn reverse_holder_constant(&self, q: f64, balls: &[(Vec<f64>, f64)]) -> Result<RhReport> {
        if !(q > 1.0) {
            return Err(Error::InvalidExponent { q, bound: 1.0 });
        }
        let mut best = f64::NEG_INFINITY;
        let mut witness = None;
        let mut excluded = 0;
        for (x, r) in balls {
            let region = Region::ball(x, *r);
            let (w, mu) = self.volumes(&region)?;
            if mu <= 0.0 {
                excluded += 1;
                continue;
            }
            let vq = match self.profile.as_constant() {
                Some(c) => c.powf(q) * w,
                None => self.measure.integrate(|y| self.v(y).powf(q), &region, None)?.value,
            };
            let c = (vq / w).powf(1.0 / q) / (mu / w);
            if c > best {
                best = c;
                witness = Some((x.clone(), *r));
            }
        }
        check_exclusions(excluded, balls.len())?;
        let witness = witness.ok_or(Error::DivisionByZeroMean {
            excluded,
            total: balls.len(),
        })?;
        Ok(RhReport {
            constant: best,
            witness,
            excluded,
            total: balls.len(),
        })
    }

    /// `max μ(B(x,2r))/μ(B(x,r))`.
    pub fn mu_doubling_constant(&self, sample: &[(Vec<f64>, f64)]) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        let mut excluded = 0;
        for (x, r) in sample {
            let small = self.mu(&Region::ball(x, *r))?;
            if small <= 0.0 {
                excluded += 1;
                continue;
            }
            let big = self.mu(&Region::ball(x, 2.0 * r))?;
            best = best.max(big / small);
        }
        check_exclusions(excluded, sample.len())?;
        if best == f64::NEG_INFINITY {
            return Err(Error::DivisionByZeroMean {
                excluded,
                total: sample.len(),
            });
        }
        Ok(best)
    }

    /// `max_Q avg_Q V · (avg_Q V^{−1/(p−1)})^{p−1}`. Cubes on which the negative
    /// power is not integrable are skipped when `skip_non_integrable`, and
    /// reported as an error otherwise.
    pub fn ap_diagnostic(
        &self,
        p: f64,
        cubes: &[(Vec<f64>, Vec<f64>)],
        skip_non_integrable: bool,
    ) -> Result<ApReport> {
        if !(p > 1.0) {
            return Err(Error::InvalidExponent { q: p, bound: 1.0 });
        }
        let beta = 1.0 / (p - 1.0);
        let hd = self.measure.homogeneous_dimension();
        let mut best = f64::NEG_INFINITY;
        let mut witness = None;
        let mut bad = Vec::new();
        for (lo, hi) in cubes {
            let region = Region::cube(lo, hi);
            let contains_origin = lo.iter().zip(hi).all(|(l, h)| *l <= 0.0 && *h >= 0.0);
            let integrable = match self.profile.radial_order() {
                Some(order) if contains_origin => order * beta < hd,
                Some(_) => true,
                None => true,
            };
            let neg = if integrable {
                match self.measure.integrate(|y| self.v(y).powf(-beta), &region, None) {
                    Ok(e) => Some(e.value),
                    Err(Error::ToleranceNotReached { .. }) | Err(Error::NonFiniteIntegrand { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            let Some(neg) = neg else {
                if skip_non_integrable {
                    bad.push((lo.clone(), hi.clone()));
                    continue;
                }
                return Err(Error::NonIntegrableNegativePower {
                    cube: (lo.clone(), hi.clone()),
                });
            };
            let (w, mu) = self.volumes(&region)?;
            let c = (mu / w) * (neg / w).powf(p - 1.0);
            if c > best {
                best = c;
                witness = Some((lo.clone(), hi.clone()));
            }
        }
        Ok(ApReport {
            constant: best,
            witness,
            non_integrable: bad,
        })
    }

    /// Compares `r₁² avg_{B(x,r₁)} V` with `(r₁/r₂)^{2−𝐍/q} r₂² avg_{B(x,r₂)} V`.
    pub fn scaling_comparison(&self, x: &[f64], r1: f64, r2: f64) -> Result<ScalingComparison> {
        if !(r1 > 0.0 && r2 > r1) {
            return Err(Error::InvalidRegion(format!("need 0 < r1 < r2, got {r1}, {r2}")));
        }
        let hd = self.measure.homogeneous_dimension();
        let lhs = r1 * r1 * self.average(&Region::ball(x, r1))?;
        let rhs = (r1 / r2).powf(2.0 - hd / self.profile.q) * r2 * r2 * self.average(&Region::ball(x, r2))?;
        Ok(ScalingComparison {
            lhs,
            rhs,
            ratio: lhs / rhs,
        })
    }
}

fn check_exclusions(excluded: usize, total: usize) -> Result<()> {
    if excluded * 10 > total {
        return Err(Error::DivisionByZeroMean { excluded, total });
    }
    Ok(())
}

/// Lattice of centres in `[-extent, extent]^N` crossed with radii `2^j`.
pub fn ball_sweep(dim: usize, extent: f64, per_axis: usize, radius_exponents: &[i32]) -> Vec<(Vec<f64>, f64)> {
    let coords: Vec<f64> = if per_axis == 1 {
        vec![0.0]
    } else {
        (0..per_axis)
            .map(|i| -extent + 2.0 * extent * i as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let mut centers = vec![vec![]];
    for _ in 0..dim {
        centers = centers
            .into_iter()
            .flat_map(|c: Vec<f64>| {
                coords.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(*v);
                    c
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for c in centers {
        for j in radius_exponents {
            out.push((c.clone(), 2f64.powi(*j)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrbitMultiplicity, Preset, RootSystem};
    use std::sync::Arc;

    fn pm(k: f64, kind: PotentialKind) -> PotentialMeasure {
        let rs = Arc::new(RootSystem::from_preset(Preset::A1, &OrbitMultiplicity(vec![k])).unwrap());
        let hd = rs.homogeneous_dimension();
        PotentialMeasure::new(
            PotentialProfile::new(kind, 2.0, hd).unwrap(),
            WeightedMeasure::new(rs),
        )
    }

    #[test]
    fn mu_closed_forms() {
        let c = pm(0.0, PotentialKind::Constant { c: 3.0 });
        assert!((c.mu(&Region::cube(&[1.0], &[3.5])).unwrap() - 7.5).abs() < 1e-12);
        let sq = pm(1.0, PotentialKind::SqNorm);
        // ∫_{-1}^{1} t²·2t² dt
        assert!((sq.mu(&Region::ball(&[0.0], 1.0)).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn q_bound_is_enforced() {
        let err = PotentialProfile::new(PotentialKind::SqNorm, 1.4, 3.0).unwrap_err();
        assert!(matches!(err, Error::InvalidExponent { .. }));
        assert!(PotentialProfile::new(PotentialKind::SqNorm, 1.6, 3.0).is_ok());
        assert!(PotentialProfile::new(PotentialKind::Constant { c: -1.0 }, 2.0, 1.0).is_err());
    }

    #[test]
    fn rh_constant_on_constant_potential() {
        let c = pm(1.0, PotentialKind::Constant { c: 2.0 });
        let rep = c.reverse_holder_constant(2.0, &ball_sweep(1, 4.0, 5, &[-1, 0, 1])).unwrap();
        assert!((rep.constant - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_potential_is_excluded() {
        let z = pm(1.0, PotentialKind::Constant { c: 0.0 });
        let err = z.reverse_holder_constant(2.0, &[(vec![0.0], 1.0)]).unwrap_err();
        assert!(matches!(err, Error::DivisionByZeroMean { .. }));
    }

    #[test]
    fn mu_doubling_at_origin() {
        let sq = pm(1.0, PotentialKind::SqNorm);
        let d = sq.mu_doubling_constant(&[(vec![0.0], 0.7)]).unwrap();
        assert!((d - 32.0).abs() < 1e-9);
    }

    #[test]
    fn ap_non_integrable_at_zero() {
        let sq = pm(1.0, PotentialKind::SqNorm);
        let err = sq.ap_diagnostic(1.2, &[(vec![-1.0], vec![1.0])], false).unwrap_err();
        assert!(matches!(err, Error::NonIntegrableNegativePower { .. }));
        let rep = sq.ap_diagnostic(1.2, &[(vec![-1.0], vec![1.0]), (vec![1.0], vec![2.0])], true).unwrap();
        assert_eq!(rep.non_integrable.len(), 1);
        assert!(rep.constant.is_finite());
    }

    #[test]
    fn scaling_comparison_power_law_at_origin() {
        let sq = pm(1.0, PotentialKind::SqNorm);
        let s = sq.scaling_comparison(&[0.0], 0.5, 2.0).unwrap();
        let expected = 0.25f64.powf(2.0 + 3.0 / 2.0);
        assert!((s.ratio - expected).abs() / expected < 1e-9);
    }

    #[test]
    fn polynomial_derivatives() {
        let p = Polynomial::new(vec![(2.0, vec![2, 1]), (-1.0, vec![0, 3]), (0.5, vec![0, 0])]);
        let x = [0.3, -1.1];
        assert!((p.eval(&x) - (2.0 * 0.09 * -1.1 + 1.331 + 0.5)).abs() < 1e-14);
        let g = p.gradient(&x);
        assert!((g[0] - 4.0 * 0.3 * -1.1).abs() < 1e-14);
        assert!((g[1] - (2.0 * 0.09 - 3.0 * 1.21)).abs() < 1e-14);
        let h = p.hessian(&x);
        assert!((h[0] - 4.0 * -1.1).abs() < 1e-14);
        assert!((h[1] - 4.0 * 0.3).abs() < 1e-14);
        assert!((h[3] - (-6.0 * -1.1)).abs() < 1e-14);
    }
}
