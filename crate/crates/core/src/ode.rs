//! Dormand–Prince 5(4) with step-size control, sampled at prescribed nodes.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

fn step<const D: usize, F>(f: &F, t: f64, y: &[f64; D], h: f64) -> ([f64; D], f64, f64)
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut k = [[0.0; D]; 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for d in 0..D {
                    ys[d] += h * a * kj[d];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; D];
    for s in 0..7 {
        for d in 0..D {
            y5[d] += h * B5[s] * k[s][d];
            err[d] += h * (B5[s] - B4[s]) * k[s][d];
        }
    }
    let scale_max = (0..D).map(|d| err[d].abs()).fold(0.0, f64::max);
    let norm_y = (0..D).map(|d| y[d].abs().max(y5[d].abs())).fold(0.0, f64::max);
    (y5, scale_max, norm_y)
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the state at each of
/// the `nodes`, which must be sorted away from `t0` (increasing if
/// `nodes[0] > t0`, decreasing otherwise). Steps are clipped to land on every
/// node.
pub fn integrate_to_nodes<const D: usize, F>(f: F, t0: f64, y0: [f64; D], nodes: &[f64], cfg: &OdeConfig) -> Result<Vec<[f64; D]>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut out = Vec::with_capacity(nodes.len());
    if nodes.is_empty() {
        return Ok(out);
    }
    let dir = if nodes[nodes.len() - 1] >= t0 { 1.0 } else { -1.0 };
    let span = (nodes[nodes.len() - 1] - t0).abs().max(1e-300);
    let mut h = dir * (span * 1e-3).min(0.05).max(1e-12);
    let mut t = t0;
    let mut y = y0;
    let mut steps = 0usize;
    for &target in nodes {
        while (target - t) * dir > 0.0 {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::OdeStepFailure { at: t });
            }
            let remaining = target - t;
            let clipped = remaining.abs() <= h.abs();
            let hh = if clipped { remaining } else { h };
            let (y5, err, ny) = step(&f, t, &y, hh);
            let tol = cfg.atol + cfg.rtol * ny;
            if !err.is_finite() || !y5.iter().all(|v| v.is_finite()) {
                h *= 0.25;
                if h.abs() < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::OdeStepFailure { at: t });
                }
                continue;
            }
            let ratio = err / tol;
            if ratio <= 1.0 {
                t = if clipped { target } else { t + hh };
                y = y5;
                let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
                if !clipped || grow < 1.0 {
                    h = hh * grow;
                }
            } else {
                h = hh * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
                if h.abs() < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::OdeStepFailure { at: t });
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential() {
        let nodes = [0.5, 1.0, 2.0, 3.0];
        let ys = integrate_to_nodes(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], &nodes, &OdeConfig::default()).unwrap();
        for (t, y) in nodes.iter().zip(&ys) {
            assert!((y[0] - t.exp()).abs() < 1e-10 * t.exp());
        }
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let nodes = [-1.0, -5.0, -20.0];
        let ys = integrate_to_nodes(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], &nodes, &OdeConfig::default()).unwrap();
        for (t, y) in nodes.iter().zip(&ys) {
            assert!((y[0] - t.sin()).abs() < 1e-10);
            assert!((y[1] - t.cos()).abs() < 1e-10);
        }
    }
}
