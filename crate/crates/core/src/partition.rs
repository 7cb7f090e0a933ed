//! Smooth partition of unity subordinate to the dilated cubes `Q*`.

use serde::{Deserialize, Serialize};

use crate::cubes::{grid_points, CubeCollection, SpatialIndex};
use crate::error::{Error, Result};
use crate::geometry::{dot, reflect, RootSystem};

/// Quintic taper `1 − (10u³ − 15u⁴ + 6u⁵)` on `[0, 1]` with its first two
/// derivatives.
fn taper(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        (1.0, 0.0, 0.0)
    } else if u >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let u2 = u * u;
        let v = 1.0 - u2 * u * (10.0 - 15.0 * u + 6.0 * u2);
        let d1 = -30.0 * u2 * (1.0 - u) * (1.0 - u);
        let d2 = -60.0 * u + 180.0 * u2 - 120.0 * u2 * u;
        (v, d1, d2)
    }
}

/// Value, gradient and row-major Hessian of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet {
    fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivativeBounds {
    /// `max |∇φ_Q| d(Q)`.
    pub c1: f64,
    /// `max |∂_i∂_j φ_Q| d(Q)²`.
    pub c2: f64,
    pub min_sum: f64,
    pub max_sum_error: f64,
}

#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    cc: CubeCollection,
    index: SpatialIndex,
    pub bounds: DerivativeBounds,
}

impl PartitionOfUnity {
    pub fn collection(&self) -> &CubeCollection {
        &self.cc
    }

    /// Unnormalized bump `ψ_Q`: one on `Q`, zero outside `Q*`.
    pub fn bump(&self, i: usize, x: &[f64]) -> Jet {
        let q = &self.cc.cubes[i];
        let n = x.len();
        let half = 0.5 * q.side;
        let mut f = vec![(0.0, 0.0, 0.0); n];
        for a in 0..n {
            let off = x[a] - q.center[a];
            let u = (off.abs() - half) / half;
            let (v, d1, d2) = taper(u);
            let s = off.signum() / half;
            f[a] = (v, d1 * s, d2 / (half * half));
        }
        let value: f64 = f.iter().map(|t| t.0).product();
        let mut jet = Jet::zero(n);
        jet.value = value;
        if value == 0.0 {
            return jet;
        }
        for a in 0..n {
            let others: f64 = (0..n).filter(|&b| b != a).map(|b| f[b].0).product();
            jet.grad[a] = f[a].1 * others;
            for b in 0..n {
                let h = if a == b {
                    f[a].2 * others
                } else {
                    let rest: f64 = (0..n).filter(|&c| c != a && c != b).map(|c| f[c].0).product();
                    f[a].1 * f[b].1 * rest
                };
                jet.hess[a * n + b] = h;
            }
        }
        jet
    }

    fn sum_jet(&self, x: &[f64]) -> Jet {
        let n = x.len();
        let mut s = Jet::zero(n);
        for j in self.index.containing(x) {
            let b = self.bump(j, x);
            s.value += b.value;
            for (a, g) in s.grad.iter_mut().zip(&b.grad) {
                *a += g;
            }
            for (a, h) in s.hess.iter_mut().zip(&b.hess) {
                *a += h;
            }
        }
        s
    }

    /// `φ_Q = ψ_Q / Σ ψ` with derivatives.
    pub fn phi_jet(&self, i: usize, x: &[f64]) -> Jet {
        let n = x.len();
        let p = self.bump(i, x);
        if p.value == 0.0 && p.grad.iter().all(|g| *g == 0.0) {
            return Jet::zero(n);
        }
        let s = self.sum_jet(x);
        let inv = 1.0 / s.value;
        let mut out = Jet::zero(n);
        out.value = p.value * inv;
        for a in 0..n {
            out.grad[a] = p.grad[a] * inv - p.value * s.grad[a] * inv * inv;
        }
        for a in 0..n {
            for b in 0..n {
                let k = a * n + b;
                out.hess[k] = p.hess[k] * inv
                    - (p.grad[a] * s.grad[b] + p.grad[b] * s.grad[a]) * inv * inv
                    - p.value * s.hess[k] * inv * inv
                    + 2.0 * p.value * s.grad[a] * s.grad[b] * inv * inv * inv;
            }
        }
        out
    }

    pub fn phi(&self, i: usize, x: &[f64]) -> f64 {
        let p = self.bump(i, x).value;
        if p == 0.0 {
            return 0.0;
        }
        p / self.sum_jet(x).value
    }

    /// `Σ_Q φ_Q(x)`.
    pub fn total(&self, x: &[f64]) -> f64 {
        self.index.containing(x).iter().map(|&i| self.phi(i, x)).sum()
    }

    /// Cubes whose `φ_Q` may be nonzero at `x`.
    pub fn active(&self, x: &[f64]) -> Vec<usize> {
        self.index.containing(x)
    }

    /// `max |φ_Q(x) − φ_Q(σ_α x)| d(Q) / |⟨x,α⟩|` over cubes, roots and a
    /// grid of `per_axis^N` points in each `Q*`; on hyperplanes the quotient is
    /// replaced by its limit `|⟨∇φ_Q(x), α⟩| d(Q)`.
    pub fn difference_quotient_check(&self, rs: &RootSystem, per_axis: usize) -> f64 {
        let mut best: f64 = 0.0;
        for (i, q) in self.cc.cubes.iter().enumerate() {
            let (lo, hi) = q.dilate(2.0);
            for x in grid_points(&lo, &hi, per_axis) {
                for alpha in rs.roots() {
                    let ax = dot(&x, alpha);
                    let v = if ax.abs() < 1e-8 * (1.0 + crate::geometry::norm(&x)) {
                        dot(&self.phi_jet(i, &x).grad, alpha).abs()
                    } else {
                        let sx = reflect(&x, alpha);
                        (self.phi(i, &x) - self.phi(i, &sx)).abs() / ax.abs()
                    };
                    best = best.max(v * q.side);
                }
            }
        }
        best
    }
}

/// Builds `{φ_Q}` and records derivative bounds on a grid of `per_axis^N`
/// points in each `Q*` (restricted to the domain).
pub fn build_partition(cc: &CubeCollection, per_axis: usize) -> Result<PartitionOfUnity> {
    let index = SpatialIndex::new(cc, 2.0);
    let mut pu = PartitionOfUnity {
        cc: cc.clone(),
        index,
        bounds: DerivativeBounds {
            c1: 0.0,
            c2: 0.0,
            min_sum: f64::INFINITY,
            max_sum_error: 0.0,
        },
    };
    let inside = |x: &[f64]| {
        x.iter()
            .zip(cc.domain_lo.iter().zip(&cc.domain_hi))
            .all(|(v, (l, h))| v >= l && v <= h)
    };
    let mut b = pu.bounds.clone();
    for (i, q) in cc.cubes.iter().enumerate() {
        let (lo, hi) = q.dilate(2.0);
        for x in grid_points(&lo, &hi, per_axis) {
            if !inside(&x) {
                continue;
            }
            let s = pu.sum_jet(&x).value;
            if !(s > 0.0) {
                return Err(Error::OverlapTooLarge { at: x });
            }
            b.min_sum = b.min_sum.min(s);
            let jet = pu.phi_jet(i, &x);
            let g = jet.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            b.c1 = b.c1.max(g * q.side);
            let h = jet.hess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            b.c2 = b.c2.max(h * q.side * q.side);
            b.max_sum_error = b.max_sum_error.max((pu.total(&x) - 1.0).abs());
        }
    }
    pu.bounds = b;
    Ok(pu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubes::build_stopping_time;
    use crate::geometry::{OrbitMultiplicity, Preset};
    use crate::measure::WeightedMeasure;
    use crate::potential::{PotentialKind, PotentialMeasure, PotentialProfile};
    use std::sync::Arc;

    fn collection(preset: Preset, kind: PotentialKind, lo: &[f64], hi: &[f64]) -> (CubeCollection, Arc<RootSystem>) {
        let rs = Arc::new(RootSystem::from_preset(preset, &OrbitMultiplicity(vec![1.0])).unwrap());
        let hd = rs.homogeneous_dimension();
        let pm = PotentialMeasure::new(
            PotentialProfile::new(kind, 4.0, hd).unwrap(),
            WeightedMeasure::new(rs.clone()),
        );
        (build_stopping_time(lo, hi, &pm, 20).unwrap(), rs)
    }

    #[test]
    fn taper_is_c2() {
        let (v0, d0, s0) = taper(1e-12);
        assert!((v0 - 1.0).abs() < 1e-12 && d0.abs() < 1e-12 && s0.abs() < 1e-9);
        let (v1, d1, s1) = taper(1.0 - 1e-12);
        assert!(v1.abs() < 1e-12 && d1.abs() < 1e-12 && s1.abs() < 1e-9);
        let h = 1e-6;
        for u in [0.2, 0.5, 0.8] {
            let fd = (taper(u + h).0 - taper(u - h).0) / (2.0 * h);
            assert!((fd - taper(u).1).abs() < 1e-7);
            let fd2 = (taper(u + h).1 - taper(u - h).1) / (2.0 * h);
            assert!((fd2 - taper(u).2).abs() < 1e-6);
        }
    }

    #[test]
    fn single_cube_is_one_inside() {
        let (cc, _) = collection(Preset::A1, PotentialKind::Constant { c: 0.01 }, &[0.0], &[1.0]);
        let pu = build_partition(&cc, 16).unwrap();
        for x in [0.01, 0.5, 0.99] {
            assert!((pu.phi(0, &[x]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sums_to_one_and_gradient_bounded() {
        let (cc, rs) = collection(Preset::A1, PotentialKind::SqNorm, &[-8.0], &[8.0]);
        let pu = build_partition(&cc, 64).unwrap();
        assert!(pu.bounds.max_sum_error < 1e-12);
        assert!(pu.bounds.c1 <= 8.0, "c1 = {}", pu.bounds.c1);
        let dq = pu.difference_quotient_check(&rs, 32);
        assert!(dq <= pu.bounds.c1 * 2f64.sqrt() * 1.01, "{dq} vs {}", pu.bounds.c1);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let (cc, _) = collection(Preset::A1Power(2), PotentialKind::SqNorm, &[-4.0, -4.0], &[4.0, 4.0]);
        let pu = build_partition(&cc, 6).unwrap();
        let x = [0.71, -1.23];
        let h = 1e-6;
        for i in pu.active(&x) {
            let j = pu.phi_jet(i, &x);
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let fd = (pu.phi(i, &xp) - pu.phi(i, &xm)) / (2.0 * h);
                assert!((fd - j.grad[a]).abs() < 1e-5 * (1.0 + j.grad[a].abs()));
                let gp = pu.phi_jet(i, &xp).grad;
                let gm = pu.phi_jet(i, &xm).grad;
                for b in 0..2 {
                    let fd2 = (gp[b] - gm[b]) / (2.0 * h);
                    assert!((fd2 - j.hess[a * 2 + b]).abs() < 1e-3 * (1.0 + j.hess[a * 2 + b].abs()));
                }
            }
        }
    }
}
