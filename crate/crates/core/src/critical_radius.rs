//! The critical radius function `m(x)` and its growth diagnostics.

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::distance;
use crate::measure::Region;
use crate::potential::PotentialMeasure;
use crate::stats::linear_fit;

const CACHE_QUANTUM: f64 = 1e-9;
/// Octaves scanned past the first up-crossing.
const EXTRA_OCTAVES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MValue {
    pub m: f64,
    pub r_star: f64,
    pub f_at_r_star: f64,
}

#[derive(Debug)]
pub struct CriticalRadiusField {
    pm: PotentialMeasure,
    pub r_min: f64,
    pub r_max: f64,
    pub bisection_tol: f64,
    cache: RwLock<HashMap<Vec<i64>, MValue>>,
}

impl Clone for CriticalRadiusField {
    fn clone(&self) -> Self {
        Self {
            pm: self.pm.clone(),
            r_min: self.r_min,
            r_max: self.r_max,
            bisection_tol: self.bisection_tol,
            cache: RwLock::new(self.cache.read().unwrap().clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Comparability constant on pairs with `‖x−y‖ < 1/m(x)`.
    pub c_a: f64,
    pub pairs_a: usize,
    /// Upper growth: `m(y) ≤ C_B m(x)(1+‖x−y‖m(x))^{κ_B}`.
    pub c_b: f64,
    pub kappa_b: f64,
    /// Lower decay: `m(y) ≥ C_C^{-1} m(x)(1+‖x−y‖m(x))^{−κ_B/(1+κ_B)}`.
    pub c_c: f64,
}

impl CriticalRadiusField {
    pub fn new(pm: PotentialMeasure) -> Self {
        Self {
            pm,
            r_min: 1e-4,
            r_max: 1e4,
            bisection_tol: 1e-6,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_bracket(mut self, r_min: f64, r_max: f64) -> Self {
        self.r_min = r_min;
        self.r_max = r_max;
        self
    }

    pub fn potential_measure(&self) -> &PotentialMeasure {
        &self.pm
    }

    /// `F(x,r) = r² μ(B(x,r)) / w(B(x,r))`.
    pub fn stopping_functional(&self, x: &[f64], r: f64) -> Result<f64> {
        if let Some(c) = self.pm.profile.as_constant() {
            return Ok(c * r * r);
        }
        Ok(r * r * self.pm.average(&Region::ball(x, r))?)
    }

    /// `m(x)`.
    pub fn m(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(x)?.m)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<MValue> {
        let key: Vec<i64> = x.iter().map(|v| (v / CACHE_QUANTUM).round() as i64).collect();
        if let Some(v) = self.cache.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = self.compute(x)?;
        self.cache.write().unwrap().insert(key, v);
        Ok(v)
    }

    /// Evaluation that bypasses the cache.
    pub fn compute(&self, x: &[f64]) -> Result<MValue> {
        let exhausted = || Error::BracketExhausted {
            x: x.to_vec(),
            r_min: self.r_min,
            r_max: self.r_max,
        };
        let mut radii = vec![self.r_min];
        let mut values = vec![self.stopping_functional(x, self.r_min)?];
        if values[0] > 1.0 {
            return Err(exhausted());
        }
        let mut first_cross = None;
        while first_cross.map_or(true, |j| radii.len() <= j + EXTRA_OCTAVES) {
            let r = radii.last().unwrap() * 2.0;
            if r > self.r_max * (1.0 + 1e-12) {
                break;
            }
            let f = self.stopping_functional(x, r)?;
            radii.push(r);
            values.push(f);
            if first_cross.is_none() && f > 1.0 {
                first_cross = Some(radii.len() - 1);
            }
        }
        if first_cross.is_none() {
            return Err(exhausted());
        }
        // last sub-unit radius followed by a value above one
        let i = (0..values.len() - 1)
            .rev()
            .find(|&i| values[i] <= 1.0 && values[i + 1] > 1.0)
            .ok_or_else(exhausted)?;
        let (mut a, mut b) = (radii[i], radii[i + 1]);
        let (mut fa, mut fb) = (values[i], values[i + 1]);
        while b / a > 1.0 + self.bisection_tol.max(1e-3) {
            let mid = (a * b).sqrt();
            let fm = self.stopping_functional(x, mid)?;
            if fm <= 1.0 {
                a = mid;
                fa = fm;
            } else {
                b = mid;
                fb = fm;
            }
        }
        // Illinois regula falsi on the narrowed bracket
        let mut side = 0i8;
        for _ in 0..60 {
            if b - a <= 1e-15 * b {
                break;
            }
            let mut c = b - (fb - 1.0) * (b - a) / (fb - fa);
            if !(c > a && c < b) {
                c = 0.5 * (a + b);
            }
            let fc = self.stopping_functional(x, c)?;
            if (fc - 1.0).abs() <= 1e-14 {
                a = c;
                break;
            }
            if fc <= 1.0 {
                a = c;
                fa = fc;
                if side == -1 {
                    fb = 1.0 + 0.5 * (fb - 1.0);
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa = 1.0 - 0.5 * (1.0 - fa);
                }
                side = 1;
            }
        }
        let r_star = a;
        let f_at_r_star = self.stopping_functional(x, r_star)?;
        Ok(MValue {
            m: 1.0 / r_star,
            r_star,
            f_at_r_star,
        })
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// Measured constants of the three growth properties of `m` over a sample
    /// of point pairs.
    pub fn growth_diagnostics(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<GrowthReport> {
        let mut rows = Vec::with_capacity(pairs.len());
        for (x, y) in pairs {
            let mx = self.m(x)?;
            let my = self.m(y)?;
            let u = 1.0 + distance(x, y) * mx;
            rows.push((mx, my, u, distance(x, y)));
        }
        let mut c_a: f64 = 1.0;
        let mut pairs_a = 0;
        for &(mx, my, _, d) in &rows {
            if d < 1.0 / mx {
                pairs_a += 1;
                c_a = c_a.max(mx / my).max(my / mx);
            }
        }
        let lu: Vec<f64> = rows.iter().map(|r| r.2.ln()).collect();
        let lr: Vec<f64> = rows.iter().map(|r| (r.1 / r.0).ln()).collect();
        let kappa_b = linear_fit(&lu, &lr).map_or(0.0, |f| f.slope.max(0.0));
        let mut c_b: f64 = 1.0;
        let mut c_c: f64 = 1.0;
        for &(mx, my, u, _) in &rows {
            c_b = c_b.max(my / (mx * u.powf(kappa_b)));
            c_c = c_c.max(mx * u.powf(-kappa_b / (1.0 + kappa_b)) / my);
        }
        Ok(GrowthReport {
            c_a,
            pairs_a,
            c_b,
            kappa_b,
            c_c,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrbitMultiplicity, Preset, RootSystem};
    use crate::measure::WeightedMeasure;
    use crate::potential::{PotentialKind, PotentialProfile};
    use std::sync::Arc;

    fn field(k: f64, kind: PotentialKind) -> CriticalRadiusField {
        let rs = Arc::new(RootSystem::from_preset(Preset::A1, &OrbitMultiplicity(vec![k])).unwrap());
        let hd = rs.homogeneous_dimension();
        CriticalRadiusField::new(PotentialMeasure::new(
            PotentialProfile::new(kind, 2.0, hd).unwrap(),
            WeightedMeasure::new(rs),
        ))
    }

    #[test]
    fn constant_potential() {
        let f = field(1.0, PotentialKind::Constant { c: 3.0 });
        for x in [0.0, 1.3, -7.0] {
            let m = f.m(&[x]).unwrap();
            assert!((m - 3f64.sqrt()).abs() / 3f64.sqrt() < 1e-12);
        }
    }

    #[test]
    fn sqnorm_at_origin() {
        let f = field(1.0, PotentialKind::SqNorm);
        // F(0,r) = 3r⁴/5
        let fv = f.stopping_functional(&[0.0], 1.3).unwrap();
        assert!((fv - 0.6 * 1.3f64.powi(4)).abs() < 1e-11);
        let m = f.m(&[0.0]).unwrap();
        assert!((m - 0.6f64.powf(0.25)).abs() < 1e-10);
    }

    #[test]
    fn bracket_errors() {
        let f = field(1.0, PotentialKind::SqNorm).with_bracket(1e-3, 1e-2);
        assert!(matches!(f.m(&[0.0]), Err(Error::BracketExhausted { .. })));
        let g = field(1.0, PotentialKind::Constant { c: 1e10 });
        assert!(matches!(g.m(&[0.0]), Err(Error::BracketExhausted { .. })));
    }

    #[test]
    fn reflection_invariance_and_cache() {
        let f = field(1.0, PotentialKind::SqNorm);
        let a = f.m(&[2.5]).unwrap();
        let b = f.m(&[-2.5]).unwrap();
        assert!((a - b).abs() / a < 2e-6);
        let cached = f.m(&[2.5]).unwrap();
        let fresh = f.compute(&[2.5]).unwrap().m;
        assert_eq!(cached, fresh);
        assert_eq!(f.cache_len(), 2);
    }

    #[test]
    fn growth_constant_potential() {
        let f = field(0.0, PotentialKind::Constant { c: 1.0 });
        let pairs = vec![(vec![0.0], vec![0.5]), (vec![1.0], vec![9.0])];
        let g = f.growth_diagnostics(&pairs).unwrap();
        assert_eq!(g.c_a, 1.0);
        assert_eq!(g.kappa_b, 0.0);
    }
}
