//! The weight `w`, the measure `dw`, and integration over balls and boxes.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, RootSystem};
use crate::quad::{adaptive, Estimate, QuadConfig};

/// Largest dimension supported by the quadrature-backed operations.
pub const MAX_QUAD_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        Region::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn cube(lo: &[f64], hi: &[f64]) -> Self {
        Region::Box {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } => center.len(),
            Region::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => crate::geometry::distance(center, x) <= *radius,
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| v >= l && v <= h),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        match self {
            Region::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidRegion(format!("ball radius {radius}")));
                }
            }
            Region::Box { lo, hi } => {
                if hi.len() != lo.len() || lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                    return Err(Error::InvalidRegion(format!("box {lo:?}..{hi:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Doubling ratios measured over a sample, with the bounds `2^N` and `2^𝐍`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub floor: f64,
    pub ceiling: f64,
    pub witness: (Vec<f64>, f64),
}

#[derive(Debug, Clone)]
pub struct WeightedMeasure {
    context: Arc<RootSystem>,
    pub quad: QuadConfig,
}

impl WeightedMeasure {
    pub fn new(context: Arc<RootSystem>) -> Self {
        Self {
            context,
            quad: QuadConfig::default(),
        }
    }

    pub fn with_config(context: Arc<RootSystem>, quad: QuadConfig) -> Self {
        Self { context, quad }
    }

    pub fn context(&self) -> &RootSystem {
        &self.context
    }

    pub fn context_arc(&self) -> Arc<RootSystem> {
        Arc::clone(&self.context)
    }

    pub fn dim(&self) -> usize {
        self.context.dim()
    }

    pub fn homogeneous_dimension(&self) -> f64 {
        self.context.homogeneous_dimension()
    }

    /// `∏_{α∈R} |⟨x,α⟩|^{k(α)}`.
    pub fn weight(&self, x: &[f64]) -> f64 {
        let mut w = 1.0;
        for (alpha, k) in self.context.weighted_roots() {
            if k != 0.0 {
                w *= dot(x, alpha).abs().powf(k);
            }
        }
        w
    }

    /// `∫_region f w dx`.
    pub fn integrate<F>(&self, f: F, region: &Region, tol: Option<f64>) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64,
    {
        let cfg = match tol {
            Some(t) => self.quad.with_rel_tol(t),
            None => self.quad,
        };
        self.integrate_cfg(|x| Ok(f(x) * self.weight(x)), region, &cfg)
    }

    /// `∫_region f dx` with no weight (used when the caller folds `w` in).
    pub fn integrate_lebesgue<F>(&self, f: F, region: &Region, tol: Option<f64>) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64,
    {
        let cfg = match tol {
            Some(t) => self.quad.with_rel_tol(t),
            None => self.quad,
        };
        self.integrate_cfg(|x| Ok(f(x)), region, &cfg)
    }

    /// Fallible integrand, no weight applied.
    pub fn integrate_cfg<F>(&self, f: F, region: &Region, cfg: &QuadConfig) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        let n = self.dim();
        if n == 0 || n > MAX_QUAD_DIM {
            return Err(Error::Unsupported(format!("quadrature in dimension {n}")));
        }
        region.validate(n)?;
        let mut x = vec![0.0; n];
        let mut evals = 0usize;
        let value = self.nested(&f, region, 0, &mut x, cfg, &mut evals)?;
        // the outermost run's error estimate plus the inner levels' budget
        Ok(Estimate {
            value: value.value,
            error: value.error + (n as f64 - 1.0) * 0.1 * cfg.rel_tol * value.value.abs(),
            evaluations: evals,
        })
    }

    fn nested(
        &self,
        f: &dyn Fn(&[f64]) -> Result<f64>,
        region: &Region,
        level: usize,
        x: &mut [f64],
        cfg: &QuadConfig,
        evals: &mut usize,
    ) -> Result<Estimate> {
        let n = x.len();
        let last = level + 1 == n;
        let inner_cfg = if level == 0 {
            *cfg
        } else {
            cfg.with_rel_tol(cfg.rel_tol * 0.1)
        };
        let phys_breaks = self.breakpoints(region, level, x);
        match region {
            Region::Box { lo, hi } => {
                let est = adaptive(
                    |t| {
                        x[level] = t;
                        if last {
                            *evals += 1;
                            f(x)
                        } else {
                            Ok(self.nested(f, region, level + 1, x, cfg, evals)?.value)
                        }
                    },
                    lo[level],
                    hi[level],
                    &phys_breaks,
                    &inner_cfg,
                )?;
                Ok(est)
            }
            Region::Ball { center, radius } => {
                let used: f64 = (0..level).map(|j| (x[j] - center[j]).powi(2)).sum();
                let rr = (radius * radius - used).max(0.0).sqrt();
                let c = center[level];
                if rr == 0.0 {
                    return Ok(Estimate {
                        value: 0.0,
                        error: 0.0,
                        evaluations: 0,
                    });
                }
                if last {
                    adaptive(
                        |t| {
                            x[level] = t;
                            *evals += 1;
                            f(x)
                        },
                        c - rr,
                        c + rr,
                        &phys_breaks,
                        &inner_cfg,
                    )
                } else {
                    // x = c + rr sin θ removes the square-root edge behaviour
                    let theta_breaks: Vec<f64> = phys_breaks
                        .iter()
                        .filter(|p| (*p - c).abs() < rr)
                        .map(|p| ((p - c) / rr).asin())
                        .collect();
                    adaptive(
                        |th| {
                            x[level] = c + rr * th.sin();
                            let inner = self.nested(f, region, level + 1, x, cfg, evals)?;
                            Ok(inner.value * rr * th.cos())
                        },
                        -FRAC_PI_2,
                        FRAC_PI_2,
                        &theta_breaks,
                        &inner_cfg,
                    )
                }
            }
        }
    }

    /// Physical coordinates along axis `level` where the integrand may be
    /// non-smooth, given the outer coordinates `x[..level]`.
    fn breakpoints(&self, region: &Region, level: usize, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut out = vec![0.0];
        if level + 1 == n {
            for alpha in self.context.roots() {
                if alpha[level].abs() > 1e-14 {
                    let s: f64 = (0..level).map(|j| alpha[j] * x[j]).sum();
                    out.push(-s / alpha[level]);
                }
            }
        } else if n == 2 && level == 0 {
            // where each root line meets the region boundary
            for alpha in self.context.roots() {
                let (a0, a1) = (alpha[0], alpha[1]);
                if a1.abs() < 1e-14 || a0.abs() < 1e-14 {
                    continue;
                }
                // the line is {(s, -a0 s / a1)}
                let slope = -a0 / a1;
                match region {
                    Region::Box { lo, hi } => {
                        for y in [lo[1], hi[1]] {
                            out.push(y / slope);
                        }
                    }
                    Region::Ball { center, radius } => {
                        // (s - c0)^2 + (slope s - c1)^2 = r^2
                        let qa = 1.0 + slope * slope;
                        let qb = -2.0 * (center[0] + slope * center[1]);
                        let qc = center[0].powi(2) + center[1].powi(2) - radius * radius;
                        let disc = qb * qb - 4.0 * qa * qc;
                        if disc > 0.0 {
                            let sq = disc.sqrt();
                            out.push((-qb - sq) / (2.0 * qa));
                            out.push((-qb + sq) / (2.0 * qa));
                        }
                    }
                }
            }
        }
        out
    }

    /// `w(B(x, r))`.
    pub fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64> {
        Ok(self.ball_volume_estimate(x, r)?.value)
    }

    pub fn ball_volume_estimate(&self, x: &[f64], r: f64) -> Result<Estimate> {
        self.integrate(|_| 1.0, &Region::ball(x, r), None)
    }

    /// `w(Q)` for a box.
    pub fn box_volume(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        Ok(self.integrate(|_| 1.0, &Region::cube(lo, hi), None)?.value)
    }

    pub fn region_volume(&self, region: &Region) -> Result<f64> {
        Ok(self.integrate(|_| 1.0, region, None)?.value)
    }

    /// `r^N ∏_{α∈R} (|⟨x,α⟩| + r)^{k(α)}`, comparable to `w(B(x,r))`.
    pub fn surrogate_ball_volume(&self, x: &[f64], r: f64) -> f64 {
        let mut v = r.powi(self.dim() as i32);
        for (alpha, k) in self.context.weighted_roots() {
            if k != 0.0 {
                v *= (dot(x, alpha).abs() + r).powf(k);
            }
        }
        v
    }

    pub fn doubling_diagnostic(&self, sample: &[(Vec<f64>, f64)]) -> Result<DoublingReport> {
        if sample.is_empty() {
            return Err(Error::InvalidRegion("empty doubling sample".into()));
        }
        let mut max_ratio = f64::NEG_INFINITY;
        let mut min_ratio = f64::INFINITY;
        let mut witness = sample[0].clone();
        for (x, r) in sample {
            let ratio = self.ball_volume(x, 2.0 * r)? / self.ball_volume(x, *r)?;
            if ratio > max_ratio {
                max_ratio = ratio;
                witness = (x.clone(), *r);
            }
            min_ratio = min_ratio.min(ratio);
        }
        Ok(DoublingReport {
            max_ratio,
            min_ratio,
            floor: 2f64.powi(self.dim() as i32),
            ceiling: 2f64.powf(self.homogeneous_dimension()),
            witness,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrbitMultiplicity, Preset};

    fn measure(preset: Preset, k: &[f64]) -> WeightedMeasure {
        WeightedMeasure::new(Arc::new(
            RootSystem::from_preset(preset, &OrbitMultiplicity(k.to_vec())).unwrap(),
        ))
    }

    #[test]
    fn weight_formula() {
        let m = measure(Preset::A1, &[1.0]);
        // both ±α contribute: (√2·2)(√2·2)
        assert!((m.weight(&[2.0]) - 8.0).abs() < 1e-13);
        assert_eq!(m.weight(&[0.0]), 0.0);
        let e = measure(Preset::A1, &[0.0]);
        assert_eq!(e.weight(&[3.7]), 1.0);
    }

    #[test]
    fn euclidean_interval() {
        let e = measure(Preset::A1, &[0.0]);
        assert!((e.ball_volume(&[0.3], 1.7).unwrap() - 3.4).abs() < 1e-13);
    }

    #[test]
    fn rank_one_ball_at_origin() {
        let m = measure(Preset::A1, &[1.0]);
        for r in [0.5, 1.0, 3.0] {
            let exact = 4.0 * r * r * r / 3.0;
            let v = m.ball_volume(&[0.0], r).unwrap();
            assert!((v - exact).abs() / exact < 1e-12);
        }
    }

    #[test]
    fn disc_volume_euclidean() {
        let e = measure(Preset::A1Power(2), &[0.0]);
        let v = e.ball_volume(&[0.4, -1.0], 1.3).unwrap();
        let exact = std::f64::consts::PI * 1.69;
        assert!((v - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn product_box_volume() {
        let m = measure(Preset::A1Power(2), &[1.0, 0.5]);
        // ∫_{-1}^{2} 2x² dx · ∫_0^1 2^{1/2}|y| dy
        let exact = 2.0 * 3.0 * (1.0 / 2f64.sqrt());
        let v = m.box_volume(&[-1.0, 0.0], &[2.0, 1.0]).unwrap();
        assert!((v - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn weight_is_group_invariant() {
        let m = measure(Preset::Dihedral(4), &[1.0, 0.5]);
        let x = [0.7, -1.3];
        let w = m.weight(&x);
        for g in m.context().group() {
            assert!((m.weight(&g.apply(&x)) - w).abs() <= 1e-10 * w);
        }
    }

    #[test]
    fn b2_ball_reflection_invariance() {
        let m = measure(Preset::B2, &[1.0, 1.0]);
        let x = [0.8, 0.3];
        let v = m.ball_volume(&x, 0.6).unwrap();
        for g in m.context().group() {
            let gv = m.ball_volume(&g.apply(&x), 0.6).unwrap();
            assert!((gv - v).abs() / v < 1e-7, "{gv} vs {v}");
        }
    }

    #[test]
    fn surrogate_values() {
        let e = measure(Preset::A1, &[0.0]);
        assert_eq!(e.surrogate_ball_volume(&[4.0], 0.5), 0.5);
        let m = measure(Preset::A1, &[1.0]);
        assert!((m.surrogate_ball_volume(&[0.0], 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_regions() {
        let m = measure(Preset::A1, &[1.0]);
        assert!(matches!(m.ball_volume(&[0.0], -1.0), Err(Error::InvalidRegion(_))));
        assert!(matches!(
            m.ball_volume(&[0.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
