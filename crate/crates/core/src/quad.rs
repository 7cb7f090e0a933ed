//! Adaptive Gauss–Kronrod quadrature in one variable and Gauss–Legendre rules.
//!
//! Multivariate integrals are built by nesting [`adaptive`] (see `measure`).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of live subintervals in one adaptive run.
    pub max_cells: usize,
    /// Maximum bisection depth of a single subinterval.
    pub max_depth: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 0.0,
            max_cells: 4000,
            max_depth: 48,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        Self { rel_tol, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Cell {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    resabs: f64,
    depth: u32,
    id: u64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        // largest error first, ties broken by creation order
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteIntegrand { at: vec![x] })
        }
    };
    let fc = eval(center)?;
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv = [(0.0, 0.0); 7];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        *slot = (f1, f2);
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let h = half.abs();
    let value = resk * half;
    resabs *= h;
    resasc *= h;
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((value, err, resabs))
}

/// Adaptive integral of `f` over `[a, b]`; `breaks` inside the interval are
/// used as initial subdivision points (kinks, singularities).
pub fn adaptive<F>(mut f: F, a: f64, b: f64, breaks: &[f64], cfg: &QuadConfig) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidRegion(format!("interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut points = vec![lo];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|p| p.is_finite() && *p > lo && *p < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    for p in inner {
        let last = *points.last().unwrap();
        if p - last > 1e-14 * (hi - lo) {
            points.push(p);
        }
    }
    if hi - *points.last().unwrap() <= 1e-14 * (hi - lo) && points.len() > 1 {
        points.pop();
    }
    points.push(hi);

    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut evaluations = 0usize;
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    let mut finished_err = 0.0;
    let mut finished: Vec<Cell> = Vec::new();
    for w in points.windows(2) {
        let (v, e, ra) = gk15(&mut f, w[0], w[1])?;
        evaluations += 15;
        total += v;
        total_err += e;
        total_abs += ra;
        heap.push(Cell {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
            resabs: ra,
            depth: 0,
            id: next_id,
        });
        next_id += 1;
    }
    loop {
        let tol = cfg
            .abs_tol
            .max(cfg.rel_tol * total.abs())
            .max(1e-15 * total_abs);
        if total_err <= tol {
            break;
        }
        let Some(cell) = heap.pop() else {
            break;
        };
        if heap.len() + 2 > cfg.max_cells {
            let remaining: f64 = heap.iter().map(|c| c.error).sum::<f64>() + finished_err + cell.error;
            return Err(Error::ToleranceNotReached {
                value: sign * total,
                est_error: remaining,
            });
        }
        if cell.depth >= cfg.max_depth {
            // cannot refine further; keep its contribution and continue with the rest
            finished_err += cell.error;
            finished.push(cell);
            if heap.is_empty() {
                if total_err > tol {
                    return Err(Error::ToleranceNotReached {
                        value: sign * total,
                        est_error: total_err,
                    });
                }
                break;
            }
            continue;
        }
        let mid = 0.5 * (cell.a + cell.b);
        let (v1, e1, r1) = gk15(&mut f, cell.a, mid)?;
        let (v2, e2, r2) = gk15(&mut f, mid, cell.b)?;
        evaluations += 30;
        total += v1 + v2 - cell.value;
        total_err += e1 + e2 - cell.error;
        total_abs += r1 + r2 - cell.resabs;
        for (a, b, value, error, resabs) in [(cell.a, mid, v1, e1, r1), (mid, cell.b, v2, e2, r2)] {
            heap.push(Cell {
                a,
                b,
                value,
                error,
                resabs,
                depth: cell.depth + 1,
                id: next_id,
            });
            next_id += 1;
        }
    }
    // recompute the sum in a fixed order to avoid drift from the running updates
    let mut cells: Vec<Cell> = heap.into_vec();
    cells.extend(finished);
    cells.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = cells.iter().map(|c| c.value).sum();
    let error: f64 = cells.iter().map(|c| c.error).sum::<f64>();
    Ok(Estimate {
        value: sign * value,
        error,
        evaluations,
    })
}

/// Infallible convenience wrapper for plain closures.
pub fn adaptive_plain<F>(mut f: F, a: f64, b: f64, breaks: &[f64], cfg: &QuadConfig) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    adaptive(|x| Ok(f(x)), a, b, breaks, cfg)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (xi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let cfg = QuadConfig::default();
        let e = adaptive_plain(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, &[], &cfg).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((e.value - exact).abs() < 1e-13);
    }

    #[test]
    fn kink_at_breakpoint() {
        let cfg = QuadConfig::default();
        let e = adaptive_plain(|x: f64| x.abs().powf(0.6), -1.0, 3.0, &[0.0], &cfg).unwrap();
        let exact = (1.0 + 3f64.powf(1.6)) / 1.6;
        assert!((e.value - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn discontinuity_without_breakpoint() {
        let cfg = QuadConfig::default().with_rel_tol(1e-7);
        let e = adaptive_plain(|x| if x < 0.3 { 1.0 } else { 0.0 }, 0.0, 1.0, &[], &cfg).unwrap();
        assert!((e.value - 0.3).abs() < 1e-6);
    }

    #[test]
    fn reversed_interval_changes_sign() {
        let cfg = QuadConfig::default();
        let a = adaptive_plain(f64::exp, 0.0, 1.0, &[], &cfg).unwrap().value;
        let b = adaptive_plain(f64::exp, 1.0, 0.0, &[], &cfg).unwrap().value;
        assert_eq!(a, -b);
    }

    #[test]
    fn non_finite_is_reported() {
        let cfg = QuadConfig::default();
        let err = adaptive_plain(|x| 1.0 / (x - 0.5), 0.0, 1.0, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand { .. }));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = QuadConfig {
            max_cells: 8,
            ..QuadConfig::default()
        };
        let err = adaptive_plain(|x| (1.0 / x).sin(), 1e-6, 1.0, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::ToleranceNotReached { .. }));
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 2;
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((v - 2.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn composite_rule() {
        let (x, w) = composite_gauss_legendre(0.0, std::f64::consts::PI, 8, 10);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((v - 2.0).abs() < 1e-14);
    }
}
