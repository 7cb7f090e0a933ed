//! Numerical side of the Fefferman–Phong inequality
//! `∫|f|²m² dw ≤ C 𝐐(f,f)` and the sublevel-set estimate for `V`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_radius::CriticalRadiusField;
use crate::cubes::DyadicCube;
use crate::dunkl_ops::{quadratic_form, ScalarField, SmoothField};
use crate::error::{Error, Result};
use crate::geometry::dot;
use crate::measure::Region;
use crate::potential::{Polynomial, PotentialMeasure};
use crate::quad::{adaptive, adaptive_plain, QuadConfig};
use crate::stats::loglog_fit;

/// Widths `a` of the translated Gaussians `e^{−a‖x−x₀‖²}` in the standard
/// family.
pub const FAMILY_WIDTHS: [f64; 2] = [0.2, 0.3];
/// Largest translation of the Gaussian sub-family along the first axis.
pub const FAMILY_MAX_SHIFT: f64 = 20.0;
pub const FAMILY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub id: String,
    /// Member of the translated-Gaussian sub-family.
    pub translated_gaussian: bool,
    pub field: SmoothField,
}

fn axis_point(dim: usize, x0: f64) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    c[0] = x0;
    c
}

/// The frozen 40-function family: translated Gaussians at 10 centres and 2
/// widths, 10 Gaussian×polynomial products, and 10 two-bump sums.
pub fn standard_family(dim: usize) -> Vec<TestFunction> {
    let mut out = Vec::with_capacity(40);
    for (wi, &a) in FAMILY_WIDTHS.iter().enumerate() {
        for j in 0..10 {
            let x0 = FAMILY_MAX_SHIFT * j as f64 / 9.0;
            out.push(TestFunction {
                id: format!("gauss_w{wi}_c{j}"),
                translated_gaussian: true,
                field: SmoothField::gaussian(1.0, a, &axis_point(dim, x0)),
            });
        }
    }
    for j in 0..10 {
        // (x₁ − c) + ½(x₁ − c)² mixes even and odd parts around the origin
        let c = -4.0 + j as f64;
        let mut e1 = vec![0u32; dim];
        e1[0] = 1;
        let mut e2 = vec![0u32; dim];
        e2[0] = 2;
        let zero = vec![0u32; dim];
        let poly = Polynomial::new(vec![
            (0.5, e2),
            (1.0 - c, e1),
            (0.5 * c * c - c, zero),
        ]);
        out.push(TestFunction {
            id: format!("gpoly_{j}"),
            translated_gaussian: false,
            field: SmoothField::product(
                SmoothField::gaussian(1.0, 0.5, &axis_point(dim, c)),
                SmoothField::polynomial(poly),
            ),
        });
    }
    for j in 0..10 {
        let p = 0.5 * j as f64;
        let q = -1.0 - 0.75 * j as f64;
        out.push(TestFunction {
            id: format!("twobump_{j}"),
            translated_gaussian: false,
            field: SmoothField::sum(
                SmoothField::gaussian(1.0, 1.0, &axis_point(dim, p)),
                SmoothField::gaussian(-0.6, 0.7, &axis_point(dim, q)),
            ),
        });
    }
    out
}

/// Box that holds `f` up to relative size `1e-12`, from its Gaussian factors.
pub fn support_region(f: &SmoothField, dim: usize) -> Result<Region> {
    let (c, r) = f
        .support_hint()
        .ok_or_else(|| Error::Unsupported("test function without Gaussian decay".into()))?;
    let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
    let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
    debug_assert_eq!(lo.len(), dim);
    Ok(Region::cube(&lo, &hi))
}

/// `∫ |f|² m² dw` over `region`.
pub fn fp_lhs(f: &dyn ScalarField, field: &CriticalRadiusField, region: &Region, tol: f64) -> Result<f64> {
    let measure = &field.potential_measure().measure;
    let cfg = QuadConfig::default().with_rel_tol(tol);
    let est = measure.integrate_cfg(
        |x| {
            let v = f.value(x);
            if v == 0.0 {
                return Ok(0.0);
            }
            let m = field.m(x)?;
            Ok(v * v * m * m * measure.weight(x))
        },
        region,
        &cfg,
    )?;
    Ok(est.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpEntry {
    pub f_id: String,
    pub translated_gaussian: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FPReport {
    pub version: u32,
    pub entries: Vec<FpEntry>,
    pub empirical_constant: f64,
    pub c_frozen: Option<f64>,
    /// Every ratio is at most `c_frozen` (true when nothing is frozen).
    pub within_frozen: bool,
}

impl FPReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.ratio).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("f_id,lhs,rhs,ratio\n");
        for e in &self.entries {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", e.f_id, e.lhs, e.rhs, e.ratio));
        }
        s
    }
}

/// Both sides of the inequality for every member of `family`, checked against
/// an optional frozen constant.
pub fn fp_verify(
    family: &[TestFunction],
    pm: &PotentialMeasure,
    field: &CriticalRadiusField,
    tol: f64,
    c_frozen: Option<f64>,
) -> Result<FPReport> {
    if family.is_empty() {
        return Err(Error::InvalidRegion("empty test family".into()));
    }
    let dim = pm.measure.dim();
    let entries = family
        .par_iter()
        .map(|tf| -> Result<FpEntry> {
            let region = support_region(&tf.field, dim)?;
            let lhs = fp_lhs(&tf.field, field, &region, tol)?;
            let rhs = quadratic_form(&tf.field, pm, &region, Some(tol))?.total;
            Ok(FpEntry {
                f_id: tf.id.clone(),
                translated_gaussian: tf.translated_gaussian,
                lhs,
                rhs,
                ratio: lhs / rhs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let empirical_constant = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
    if let Some(c) = c_frozen {
        if empirical_constant > 10.0 * c {
            return Err(Error::RatioUnbounded {
                ratio: empirical_constant,
                frozen: c,
            });
        }
    }
    Ok(FPReport {
        version: FAMILY_VERSION,
        within_frozen: c_frozen.map_or(true, |c| empirical_constant <= c),
        entries,
        empirical_constant,
        c_frozen,
    })
}

/// `w({y ∈ slab : V(y) ≤ level})` along the last axis with the other
/// coordinates fixed, splitting at sign changes of `V − level` and at root
/// hyperplane crossings.
fn sublevel_line(pm: &PotentialMeasure, x: &mut [f64], lo: f64, hi: f64, level: f64) -> Result<f64> {
    let n = x.len();
    let last = n - 1;
    let cells = 2048;
    let h = (hi - lo) / cells as f64;
    let g = |t: f64, x: &mut [f64]| {
        x[last] = t;
        pm.v(x) - level
    };
    let mut cuts = vec![lo];
    let mut prev = g(lo, x);
    for i in 1..=cells {
        let t = lo + i as f64 * h;
        let cur = g(t, x);
        if (prev <= 0.0) != (cur <= 0.0) {
            let (mut a, mut b) = (t - h, t);
            let fa_neg = prev <= 0.0;
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if (g(m, x) <= 0.0) == fa_neg {
                    a = m;
                } else {
                    b = m;
                }
            }
            cuts.push(0.5 * (a + b));
        }
        prev = cur;
    }
    cuts.push(hi);
    let rs = pm.measure.context();
    let mut total = 0.0;
    let cfg = QuadConfig::default().with_rel_tol(1e-11);
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        if g(mid, x) > 0.0 {
            continue;
        }
        let mut breaks = Vec::new();
        for alpha in rs.roots() {
            if alpha[last].abs() > 1e-14 {
                x[last] = 0.0;
                breaks.push(-dot(alpha, x) / alpha[last]);
            }
        }
        let mut xx = x.to_vec();
        total += adaptive(
            |t| {
                xx[last] = t;
                Ok(pm.measure.weight(&xx))
            },
            a,
            b,
            &breaks,
            &cfg,
        )?
        .value;
    }
    Ok(total)
}

fn sublevel_nested(pm: &PotentialMeasure, x: &mut Vec<f64>, lo: &[f64], hi: &[f64], level: f64, axis: usize) -> Result<f64> {
    let n = lo.len();
    if axis + 1 == n {
        return sublevel_line(pm, x, lo[axis], hi[axis], level);
    }
    let cfg = QuadConfig::default().with_rel_tol(1e-7);
    let mut err = None;
    let mut xs = x.clone();
    let est = adaptive_plain(
        |t| {
            xs[axis] = t;
            match sublevel_nested(pm, &mut xs, lo, hi, level, axis + 1) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        lo[axis],
        hi[axis],
        &[0.0],
        &cfg,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(est.value)
}

/// `w(E_ε)` with `E_ε = {y ∈ Q*: V(y) ≤ ε d(Q)^{−2}}`.
pub fn e_set_measure(q: &DyadicCube, pm: &PotentialMeasure, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::ArgumentOutOfRange(format!("ε = {eps} outside (0, 1]")));
    }
    let (lo, hi) = q.dilate(2.0);
    let level = eps / (q.side * q.side);
    if let Some(c) = pm.profile.as_constant() {
        return if c <= level { pm.measure.box_volume(&lo, &hi) } else { Ok(0.0) };
    }
    let mut x = lo.clone();
    sublevel_nested(pm, &mut x, &lo, &hi, level, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ESetReport {
    pub eps: Vec<f64>,
    pub measures: Vec<f64>,
    pub w_qstar: f64,
    /// Fitted `η` in `w(E_ε) ≈ C ε^η w(Q*)`.
    pub eta: f64,
    /// Smallest `C` putting every measured point under `C ε^η w(Q*)`.
    pub constant: f64,
}

/// Sweep over `ε = 2^{−1}, …, 2^{−levels}` with a log-log fit of `η`.
pub fn e_set_sweep(q: &DyadicCube, pm: &PotentialMeasure, levels: u32) -> Result<ESetReport> {
    let eps: Vec<f64> = (1..=levels).map(|j| 2f64.powi(-(j as i32))).collect();
    let measures = eps.iter().map(|&e| e_set_measure(q, pm, e)).collect::<Result<Vec<_>>>()?;
    let (lo, hi) = q.dilate(2.0);
    let w_qstar = pm.measure.box_volume(&lo, &hi)?;
    let eta = loglog_fit(&eps, &measures).map_or(f64::NAN, |f| f.slope);
    let constant = eps
        .iter()
        .zip(&measures)
        .map(|(e, m)| m / (e.powf(eta) * w_qstar))
        .fold(0.0, f64::max);
    Ok(ESetReport {
        eps,
        measures,
        w_qstar,
        eta,
        constant,
    })
}
