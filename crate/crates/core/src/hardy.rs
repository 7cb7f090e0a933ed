//! Atoms, semigroup maximal functions and grid `H¹` norms on the line.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cubes::{CubeCollection, DyadicCube};
use crate::error::{Error, Result};
use crate::heat::SchrodingerKernelEngine;

/// Smallest admissible atom radius, in lattice spacings.
pub const MIN_RADIUS_CELLS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semigroup {
    Heat,
    Schrodinger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtomKind {
    /// Atom attached to a cube `Q`; `side` is `d(Q)`.
    Cube { cube: usize, side: f64, q4_lo: f64, q4_hi: f64 },
    /// Local atom at scale `T`.
    Local { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub center: f64,
    pub radius: f64,
    pub kind: AtomKind,
    /// Values on the lattice nodes.
    pub values: Vec<f64>,
}

/// `(1 − u²)³` on `|u| < 1`.
fn profile(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let v = 1.0 - u * u;
        v * v * v
    }
}

impl Atom {
    /// Bump supported in `B(center, radius)`. With `cancel`, a narrower bump
    /// is subtracted so the lattice integral against `dw` vanishes. The
    /// amplitude makes `sup|a| = w(B)^{−1}`.
    pub fn build(engine: &SchrodingerKernelEngine, center: f64, radius: f64, kind: AtomKind, cancel: bool) -> Result<Self> {
        let grid = engine.grid();
        if radius < MIN_RADIUS_CELLS * grid.dx {
            return Err(Error::ArgumentOutOfRange(format!(
                "atom radius {radius} below {MIN_RADIUS_CELLS} lattice spacings"
            )));
        }
        let outer: Vec<f64> = grid.nodes.iter().map(|x| profile((x - center) / radius)).collect();
        let mut vals = outer.clone();
        if cancel {
            let inner: Vec<f64> = grid.nodes.iter().map(|x| profile(2.0 * (x - center) / radius)).collect();
            let c = engine.integrate(&outer) / engine.integrate(&inner);
            for (v, i) in vals.iter_mut().zip(&inner) {
                *v -= c * i;
            }
        }
        let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return Err(Error::ArgumentOutOfRange("atom misses every lattice node".into()));
        }
        let wb = engine.heat().factors()[0].ball_volume(center, radius);
        let amp = 1.0 / (wb * peak);
        for v in &mut vals {
            *v *= amp;
        }
        Ok(Self {
            center,
            radius,
            kind,
            values: vals,
        })
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| lambda * v).collect(),
            ..self.clone()
        }
    }

    fn scale(&self) -> f64 {
        match self.kind {
            AtomKind::Cube { side, .. } => side,
            AtomKind::Local { scale } => scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomValidation {
    /// (A): values vanish off `B(x₀, r)`, and `B ⊆ Q****` for cube atoms.
    pub support: bool,
    /// (B): `sup|a|·w(B)`, at most one.
    pub size_ratio: f64,
    pub size: bool,
    pub cancellation_required: bool,
    /// `|∫ a dw|` on the lattice.
    pub mean: f64,
    pub cancellation: bool,
}

impl AtomValidation {
    pub fn valid(&self) -> bool {
        self.support && self.size && self.cancellation
    }
}

pub fn validate_atom(engine: &SchrodingerKernelEngine, a: &Atom) -> AtomValidation {
    let grid = engine.grid();
    let inside_ball = grid
        .nodes
        .iter()
        .zip(&a.values)
        .all(|(x, v)| *v == 0.0 || (x - a.center).abs() < a.radius);
    let inside_q4 = match a.kind {
        AtomKind::Cube { q4_lo, q4_hi, .. } => a.center - a.radius >= q4_lo && a.center + a.radius <= q4_hi,
        AtomKind::Local { .. } => true,
    };
    let wb = engine.heat().factors()[0].ball_volume(a.center, a.radius);
    let size_ratio = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * wb;
    let cancellation_required = a.radius < a.scale();
    let mean = engine.integrate(&a.values).abs();
    AtomValidation {
        support: inside_ball && inside_q4,
        size_ratio,
        size: size_ratio <= 1.0 + 1e-12,
        cancellation_required,
        mean,
        cancellation: !cancellation_required || mean <= 1e-8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximalConfig {
    pub t_min: f64,
    pub t_max: f64,
    /// Times per octave in the dyadic discretization of `sup_t`.
    pub per_octave: usize,
}

/// Maximal functions `sup_t |S_t f|` over a dyadic time grid, with `S_t` the
/// lattice heat or Schrödinger semigroup.
#[derive(Debug, Clone)]
pub struct HardyEngine {
    engine: SchrodingerKernelEngine,
    pub config: MaximalConfig,
}

impl HardyEngine {
    /// Default time grid from `h²` to `8` with four times per octave.
    pub fn new(engine: SchrodingerKernelEngine) -> Self {
        let h = engine.grid().dx;
        Self {
            engine,
            config: MaximalConfig {
                t_min: h * h,
                t_max: 8.0,
                per_octave: 4,
            },
        }
    }

    pub fn with_config(engine: SchrodingerKernelEngine, config: MaximalConfig) -> Result<Self> {
        if config.per_octave < 4 || !(config.t_max > config.t_min) || !(config.t_min > 0.0) {
            return Err(Error::GridTooCoarse { drift: f64::NAN });
        }
        Ok(Self { engine, config })
    }

    pub fn engine(&self) -> &SchrodingerKernelEngine {
        &self.engine
    }

    /// Times of the discretized supremum up to `t_cap`.
    pub fn times(&self, t_cap: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for c in 0..self.config.per_octave {
            let mut t = self.config.t_min * 2f64.powf(c as f64 / self.config.per_octave as f64);
            while t <= t_cap.min(self.config.t_max) * (1.0 + 1e-12) {
                out.push(t);
                t *= 2.0;
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// `sup_{t ≤ caps[j]} |S_t f_j|` for every column at once. Each of the
    /// `per_octave` chains starts from one splitting step and doubles the
    /// time by squaring.
    pub fn maximal_functions_capped(&self, fs: &[Vec<f64>], semigroup: Semigroup, caps: &[f64]) -> Vec<Vec<f64>> {
        let n = self.engine.grid().len();
        let m = fs.len();
        let sw: Vec<f64> = self.engine.weights().iter().map(|v| v.sqrt()).collect();
        let mut u = Array2::<f64>::zeros((n, m));
        for (j, f) in fs.iter().enumerate() {
            for i in 0..n {
                u[[i, j]] = sw[i] * f[i];
            }
        }
        let caps: Vec<f64> = caps.iter().map(|c| c.min(self.config.t_max) * (1.0 + 1e-12)).collect();
        let top = caps.iter().cloned().fold(0.0, f64::max);
        let mut best = Array2::<f64>::zeros((n, m));
        for c in 0..self.config.per_octave {
            let tau = self.config.t_min * 2f64.powf(c as f64 / self.config.per_octave as f64);
            if tau > top {
                continue;
            }
            let mut p = match semigroup {
                Semigroup::Heat => self.engine.heat_step(tau),
                Semigroup::Schrodinger => self.engine.strang_step(tau),
            };
            let mut t = tau;
            loop {
                let v = p.dot(&u);
                for ((i, j), x) in v.indexed_iter() {
                    if t <= caps[j] {
                        let val = (x / sw[i]).abs();
                        if val > best[[i, j]] {
                            best[[i, j]] = val;
                        }
                    }
                }
                t *= 2.0;
                if t > top {
                    break;
                }
                p = p.dot(&p);
            }
        }
        (0..m).map(|j| best.column(j).to_vec()).collect()
    }

    pub fn maximal_functions_upto(&self, fs: &[Vec<f64>], semigroup: Semigroup, t_cap: f64) -> Vec<Vec<f64>> {
        self.maximal_functions_capped(fs, semigroup, &vec![t_cap; fs.len()])
    }

    pub fn maximal_functions(&self, fs: &[Vec<f64>], semigroup: Semigroup) -> Vec<Vec<f64>> {
        self.maximal_functions_upto(fs, semigroup, f64::INFINITY)
    }

    pub fn maximal_function(&self, f: &[f64], semigroup: Semigroup) -> Vec<f64> {
        self.maximal_functions(&[f.to_vec()], semigroup).remove(0)
    }

    /// `‖f*‖_{L¹(dw)}` on the lattice for every column.
    pub fn h1_norms(&self, fs: &[Vec<f64>], semigroup: Semigroup) -> Vec<f64> {
        self.maximal_functions(fs, semigroup)
            .iter()
            .map(|g| self.engine.integrate(g))
            .collect()
    }

    pub fn atom_h1_norm(&self, a: &Atom) -> f64 {
        self.h1_norms(&[a.values.clone()], Semigroup::Schrodinger)[0]
    }

    /// `Σ c_j a_j` with its declared atomic norm `Σ|c_j|`.
    pub fn atomic_combination(&self, coeffs: &[f64], atoms: &[Atom]) -> Result<AtomicCombination> {
        let n = self.engine.grid().len();
        let mut values = vec![0.0; n];
        for (j, (c, a)) in coeffs.iter().zip(atoms).enumerate() {
            if !validate_atom(&self.engine, a).valid() {
                return Err(Error::InvalidAtomInCombination(j));
            }
            for (v, x) in values.iter_mut().zip(&a.values) {
                *v += c * x;
            }
        }
        Ok(AtomicCombination {
            values,
            atomic_norm: coeffs.iter().map(|c| c.abs()).sum(),
        })
    }

    /// Local norms `‖sup_{t ≤ T_j²}|S_t f_j|‖_{L¹(dw)}`.
    pub fn local_norms(&self, fs: &[Vec<f64>], scales: &[f64], semigroup: Semigroup) -> Vec<f64> {
        let caps: Vec<f64> = scales.iter().map(|s| s * s).collect();
        self.maximal_functions_capped(fs, semigroup, &caps)
            .iter()
            .map(|g| self.engine.integrate(g))
            .collect()
    }

    /// For each `(f, T, [lo, hi])`, the mass of `sup_{t ≤ T²}|H_t f|` outside
    /// `[lo, hi]` divided by `‖f‖_{L¹(dw)}`.
    pub fn tail_ratios(&self, fs: &[Vec<f64>], scales: &[f64], windows: &[(f64, f64)]) -> Vec<f64> {
        let caps: Vec<f64> = scales.iter().map(|s| s * s).collect();
        let stars = self.maximal_functions_capped(fs, Semigroup::Heat, &caps);
        let nodes = &self.engine.grid().nodes;
        stars
            .iter()
            .zip(fs)
            .zip(windows)
            .map(|((star, f), &(lo, hi))| {
                let outside: Vec<f64> = nodes
                    .iter()
                    .zip(star)
                    .map(|(x, s)| if *x < lo || *x > hi { *s } else { 0.0 })
                    .collect();
                let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
                self.engine.integrate(&outside) / self.engine.integrate(&abs)
            })
            .collect()
    }

    /// Largest relative change of the norms when the time grid is refined
    /// to twice as many times per octave.
    pub fn richardson_change(&self, fs: &[Vec<f64>], semigroup: Semigroup) -> f64 {
        let coarse = self.h1_norms(fs, semigroup);
        let fine_engine = Self {
            engine: self.engine.clone(),
            config: MaximalConfig {
                per_octave: 2 * self.config.per_octave,
                ..self.config
            },
        };
        let fine = fine_engine.h1_norms(fs, semigroup);
        coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| ((b - a) / b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicCombination {
    pub values: Vec<f64>,
    pub atomic_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub atom_id: usize,
    pub q_id: usize,
    pub r: f64,
    pub atom: Atom,
}

/// Cubes of `cc` whose `Q****` meets `[−reach, reach]`.
pub fn eligible_cubes(cc: &CubeCollection, reach: f64) -> Vec<usize> {
    (0..cc.len())
        .filter(|&i| {
            let (lo, hi) = cc.cubes[i].dilate(16.0);
            hi[0] > -reach && lo[0] < reach
        })
        .collect()
}

/// Seeded random atoms: a cube of `cc`, a log-uniform radius between
/// [`MIN_RADIUS_CELLS`] spacings and `2·d(Q)`, and a centre placing `B(x₀,r)`
/// inside `Q**** ∩ [−reach, reach]`. Cancellation is imposed exactly when
/// `r < d(Q)`.
pub fn atom_fixture(engine: &SchrodingerKernelEngine, cc: &CubeCollection, n: usize, seed: u64, reach: f64) -> Result<Vec<AtomRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cubes = eligible_cubes(cc, reach);
    if cubes.is_empty() {
        return Err(Error::ArgumentOutOfRange("no cube reaches the lattice".into()));
    }
    let r_min = MIN_RADIUS_CELLS * engine.grid().dx;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let qi = cubes[rng.gen_range(0..cubes.len())];
        let q: &DyadicCube = &cc.cubes[qi];
        let (lo4, hi4) = q.dilate(16.0);
        let (lo, hi) = (lo4[0].max(-reach), hi4[0].min(reach));
        let r_max = (2.0 * q.side).min(0.5 * (hi - lo));
        if r_max <= r_min {
            continue;
        }
        let r = (r_min.ln() + rng.gen::<f64>() * (r_max / r_min).ln()).exp();
        let x0 = lo + r + rng.gen::<f64>() * (hi - lo - 2.0 * r);
        let kind = AtomKind::Cube {
            cube: qi,
            side: q.side,
            q4_lo: lo4[0],
            q4_hi: hi4[0],
        };
        let atom = Atom::build(engine, x0, r, kind, r < q.side)?;
        out.push(AtomRecord {
            atom_id: out.len(),
            q_id: qi,
            r,
            atom,
        });
    }
    Ok(out)
}

/// A bump of the smallest admissible radius at the centre of cube `qi`, with
/// no cancellation: violates (C) whenever `r < d(Q)`.
pub fn negative_control(engine: &SchrodingerKernelEngine, cc: &CubeCollection, qi: usize) -> Result<Atom> {
    let q = &cc.cubes[qi];
    let (lo4, hi4) = q.dilate(16.0);
    let r = MIN_RADIUS_CELLS * engine.grid().dx;
    Atom::build(
        engine,
        q.center[0],
        r,
        AtomKind::Cube {
            cube: qi,
            side: q.side,
            q4_lo: lo4[0],
            q4_hi: hi4[0],
        },
        false,
    )
}
