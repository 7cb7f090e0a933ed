//! Root systems, multiplicity functions and the reflection group they generate.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Largest group the closure is allowed to produce.
pub const MAX_GROUP_ORDER: usize = 1024;
const MATRIX_TOL: f64 = 1e-10;
const ROOT_NORM_TOL: f64 = 1e-12;
const ROOT_MATCH_TOL: f64 = 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    /// Reflection in the hyperplane orthogonal to `alpha`.
    pub fn reflection(alpha: &[f64]) -> Self {
        let dim = alpha.len();
        let nsq = dot(alpha, alpha);
        let mut m = Self::identity(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] -= 2.0 * alpha[i] * alpha[j] / nsq;
            }
        }
        m
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Matrix { dim: n, data }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| dot(&self.data[i * n..(i + 1) * n], x))
            .collect()
    }

    /// Applies the transpose, which is the inverse for orthogonal matrices.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j] * x[i]).sum())
            .collect()
    }

    pub fn approx_eq(&self, other: &Matrix, tol: f64) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Preset root systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A1,
    /// Product of `n` copies of A1 acting on orthogonal coordinate axes.
    A1Power(usize),
    B2,
    /// The dihedral root system with `2m` roots and group of order `2m`.
    Dihedral(usize),
}

/// Multiplicities given once per orbit of roots (orbits in the order the
/// preset or the orbit discovery defines). A single value means "the same on
/// every orbit".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitMultiplicity(pub Vec<f64>);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootSystem {
    dim: usize,
    roots: Vec<Vec<f64>>,
    multiplicity: Vec<f64>,
    orbit_of_root: Vec<usize>,
    group: Vec<Matrix>,
    homogeneous_dimension: f64,
}

impl RootSystem {
    pub fn from_preset(preset: Preset, multiplicity: &OrbitMultiplicity) -> Result<Self> {
        let (dim, roots, orbits) = preset_roots(preset)?;
        let k = expand_orbit_multiplicity(&orbits, roots.len(), multiplicity)?;
        Self::assemble(dim, roots, k)
    }

    /// Empty root system in `dim` dimensions: the Euclidean case.
    pub fn euclidean(dim: usize) -> Self {
        Self {
            dim,
            roots: Vec::new(),
            multiplicity: Vec::new(),
            orbit_of_root: Vec::new(),
            group: vec![Matrix::identity(dim)],
            homogeneous_dimension: dim as f64,
        }
    }

    /// Explicit roots (must already satisfy ‖α‖² = 2) with one multiplicity per
    /// orbit, orbits numbered by first appearance in `roots`.
    pub fn from_roots(roots: Vec<Vec<f64>>, multiplicity: &OrbitMultiplicity) -> Result<Self> {
        let dim = check_explicit_roots(&roots)?;
        let group = generate_group(dim, &roots)?;
        let orbits = root_orbits(&roots, &group);
        let k = expand_orbit_multiplicity(&orbits, roots.len(), multiplicity)?;
        Self::assemble(dim, roots, k)
    }

    /// Explicit roots with one multiplicity per root; rejected unless the
    /// values are constant on orbits.
    pub fn with_root_multiplicities(roots: Vec<Vec<f64>>, k: Vec<f64>) -> Result<Self> {
        if k.len() != roots.len() {
            return Err(Error::InvalidMultiplicity(format!(
                "{} values for {} roots",
                k.len(),
                roots.len()
            )));
        }
        check_explicit_roots(&roots)?;
        Self::assemble(roots.first().map_or(0, |r| r.len()), roots, k)
    }

    fn assemble(dim: usize, roots: Vec<Vec<f64>>, k: Vec<f64>) -> Result<Self> {
        if let Some(bad) = k.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidMultiplicity(format!(
                "multiplicity {bad} is not a nonnegative real"
            )));
        }
        for (i, alpha) in roots.iter().enumerate() {
            let s = Matrix::reflection(alpha);
            for beta in &roots {
                if find_root(&roots, &s.apply(beta)).is_none() {
                    return Err(Error::NotClosedUnderReflection { index: i });
                }
            }
        }
        let group = generate_group(dim, &roots)?;
        for g in &group {
            for (a, alpha) in roots.iter().enumerate() {
                let b = find_root(&roots, &g.apply(alpha))
                    .ok_or(Error::NotClosedUnderReflection { index: a })?;
                if (k[a] - k[b]).abs() > 1e-12 {
                    return Err(Error::NonInvariantMultiplicity { a, b });
                }
            }
        }
        let orbit_of_root = {
            let orbits = root_orbits(&roots, &group);
            let mut of = vec![0; roots.len()];
            for (o, members) in orbits.iter().enumerate() {
                for &m in members {
                    of[m] = o;
                }
            }
            of
        };
        let homogeneous_dimension = dim as f64 + k.iter().sum::<f64>();
        Ok(Self {
            dim,
            roots,
            multiplicity: k,
            orbit_of_root,
            group,
            homogeneous_dimension,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn roots(&self) -> &[Vec<f64>] {
        &self.roots
    }

    pub fn multiplicity(&self) -> &[f64] {
        &self.multiplicity
    }

    pub fn orbit_of_root(&self) -> &[usize] {
        &self.orbit_of_root
    }

    /// Pairs `(root, k(root))`.
    pub fn weighted_roots(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.roots
            .iter()
            .map(Vec::as_slice)
            .zip(self.multiplicity.iter().copied())
    }

    pub fn group(&self) -> &[Matrix] {
        &self.group
    }

    /// `N + Σ_{α∈R} k(α)`.
    pub fn homogeneous_dimension(&self) -> f64 {
        self.homogeneous_dimension
    }

    pub fn is_euclidean(&self) -> bool {
        self.multiplicity.iter().all(|&k| k == 0.0)
    }

    /// For a product of rank-one systems on coordinate axes returns the
    /// multiplicity attached to each axis; `None` otherwise.
    pub fn axis_multiplicities(&self) -> Option<Vec<f64>> {
        let mut k = vec![0.0; self.dim];
        for (alpha, ka) in self.weighted_roots() {
            let nz: Vec<usize> = (0..self.dim).filter(|&i| alpha[i].abs() > 1e-14).collect();
            if nz.len() != 1 {
                if ka == 0.0 {
                    continue;
                }
                return None;
            }
            k[nz[0]] = ka;
        }
        Some(k)
    }

    pub fn reflect(&self, x: &[f64], alpha: &[f64]) -> Vec<f64> {
        reflect(x, alpha)
    }

    /// `min_{σ∈G} ‖σ(x) − y‖`.
    pub fn orbit_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.group
            .iter()
            .map(|g| distance(&g.apply(x), y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Images of an axis-aligned box under every group element.
    pub fn orbit_of_box(&self, lo: &[f64], hi: &[f64]) -> Vec<OrientedBox> {
        self.group
            .iter()
            .map(|g| OrientedBox {
                transform: g.clone(),
                lo: lo.to_vec(),
                hi: hi.to_vec(),
            })
            .collect()
    }
}

/// `x − 2⟨x,α⟩α/‖α‖²`.
pub fn reflect(x: &[f64], alpha: &[f64]) -> Vec<f64> {
    let c = 2.0 * dot(x, alpha) / dot(alpha, alpha);
    x.iter().zip(alpha).map(|(xi, ai)| xi - c * ai).collect()
}

/// The image `g(box)` of an axis-aligned box under an orthogonal map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrientedBox {
    pub transform: Matrix,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl OrientedBox {
    pub fn contains(&self, p: &[f64]) -> bool {
        let q = self.transform.apply_transpose(p);
        q.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.lo.len();
        (0..1usize << n)
            .map(|mask| {
                let v: Vec<f64> = (0..n)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect();
                self.transform.apply(&v)
            })
            .collect()
    }
}

fn preset_roots(preset: Preset) -> Result<(usize, Vec<Vec<f64>>, Vec<Vec<usize>>)> {
    match preset {
        Preset::A1 => Ok((1, vec![vec![SQRT_2], vec![-SQRT_2]], vec![vec![0, 1]])),
        Preset::A1Power(n) => {
            if n == 0 {
                return Err(Error::Unsupported("A1^0".into()));
            }
            let mut roots = Vec::new();
            let mut orbits = Vec::new();
            for i in 0..n {
                for s in [1.0, -1.0] {
                    let mut r = vec![0.0; n];
                    r[i] = s * SQRT_2;
                    roots.push(r);
                }
                orbits.push(vec![2 * i, 2 * i + 1]);
            }
            Ok((n, roots, orbits))
        }
        Preset::B2 => {
            // short roots ±√2 e_i first, then long roots ±e1±e2 (rescaled)
            let roots = vec![
                vec![SQRT_2, 0.0],
                vec![-SQRT_2, 0.0],
                vec![0.0, SQRT_2],
                vec![0.0, -SQRT_2],
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
            ];
            Ok((2, roots, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]))
        }
        Preset::Dihedral(m) => {
            if m < 1 {
                return Err(Error::Unsupported("dihedral(0)".into()));
            }
            let roots: Vec<Vec<f64>> = (0..2 * m)
                .map(|j| {
                    let th = PI * j as f64 / m as f64;
                    vec![SQRT_2 * th.cos(), SQRT_2 * th.sin()]
                })
                .collect();
            let orbits = if m % 2 == 1 {
                vec![(0..2 * m).collect()]
            } else {
                vec![
                    (0..2 * m).filter(|j| j % 2 == 0).collect(),
                    (0..2 * m).filter(|j| j % 2 == 1).collect(),
                ]
            };
            Ok((2, roots, orbits))
        }
    }
}

fn check_explicit_roots(roots: &[Vec<f64>]) -> Result<usize> {
    let dim = roots.first().map_or(0, |r| r.len());
    for (i, r) in roots.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        let nsq = dot(r, r);
        if (nsq - 2.0).abs() > ROOT_NORM_TOL {
            return Err(Error::NonNormalizedRoot { index: i, norm_sq: nsq });
        }
    }
    // R ∩ αℝ = {±α}
    for (i, a) in roots.iter().enumerate() {
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        if find_root(roots, &neg).is_none() {
            return Err(Error::NotClosedUnderReflection { index: i });
        }
        for (j, b) in roots.iter().enumerate() {
            if i != j {
                let c = dot(a, b) / 2.0;
                if (c.abs() - 1.0).abs() < 1e-12 && distance(a, b) > ROOT_MATCH_TOL
                    && distance(&neg, b) > ROOT_MATCH_TOL
                {
                    return Err(Error::InvalidMultiplicity(format!(
                        "roots {i} and {j} are collinear"
                    )));
                }
                if distance(a, b) < ROOT_MATCH_TOL {
                    return Err(Error::InvalidMultiplicity(format!("root {i} repeated")));
                }
            }
        }
        let s = Matrix::reflection(a);
        for b in roots {
            if find_root(roots, &s.apply(b)).is_none() {
                return Err(Error::NotClosedUnderReflection { index: i });
            }
        }
    }
    Ok(dim)
}

fn find_root(roots: &[Vec<f64>], v: &[f64]) -> Option<usize> {
    roots.iter().position(|r| distance(r, v) <= ROOT_MATCH_TOL)
}

/// Breadth-first closure of the reflection generators.
fn generate_group(dim: usize, roots: &[Vec<f64>]) -> Result<Vec<Matrix>> {
    let generators: Vec<Matrix> = roots.iter().map(|r| Matrix::reflection(r)).collect();
    let mut elements = vec![Matrix::identity(dim)];
    let mut queue = VecDeque::from([0usize]);
    while let Some(idx) = queue.pop_front() {
        for s in &generators {
            let candidate = s.mul(&elements[idx]);
            if !elements.iter().any(|e| e.approx_eq(&candidate, MATRIX_TOL)) {
                if elements.len() == MAX_GROUP_ORDER {
                    return Err(Error::GroupTooLarge(MAX_GROUP_ORDER));
                }
                elements.push(candidate);
                queue.push_back(elements.len() - 1);
            }
        }
    }
    Ok(elements)
}

fn root_orbits(roots: &[Vec<f64>], group: &[Matrix]) -> Vec<Vec<usize>> {
    let mut assigned = vec![false; roots.len()];
    let mut orbits = Vec::new();
    for i in 0..roots.len() {
        if assigned[i] {
            continue;
        }
        let mut orbit = Vec::new();
        for g in group {
            if let Some(j) = find_root(roots, &g.apply(&roots[i])) {
                if !assigned[j] {
                    assigned[j] = true;
                    orbit.push(j);
                }
            }
        }
        orbit.sort_unstable();
        orbits.push(orbit);
    }
    orbits
}

fn expand_orbit_multiplicity(
    orbits: &[Vec<usize>],
    n_roots: usize,
    m: &OrbitMultiplicity,
) -> Result<Vec<f64>> {
    let values: Vec<f64> = match m.0.len() {
        0 => vec![0.0; orbits.len()],
        1 => vec![m.0[0]; orbits.len()],
        n if n == orbits.len() => m.0.clone(),
        n => {
            return Err(Error::InvalidMultiplicity(format!(
                "{n} values supplied for {} orbits",
                orbits.len()
            )))
        }
    };
    let mut k = vec![0.0; n_roots];
    for (orbit, v) in orbits.iter().zip(values) {
        for &j in orbit {
            k[j] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a1(k: f64) -> RootSystem {
        RootSystem::from_preset(Preset::A1, &OrbitMultiplicity(vec![k])).unwrap()
    }

    #[test]
    fn a1_homogeneous_dimension_counts_both_roots() {
        let rs = a1(1.0);
        assert_eq!(rs.roots().len(), 2);
        assert_eq!(rs.homogeneous_dimension(), 3.0);
        assert_eq!(rs.group().len(), 2);
        assert!((rs.roots()[0][0] - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_multiplicity_gives_euclidean_dimension() {
        for p in [Preset::A1, Preset::A1Power(2), Preset::B2, Preset::Dihedral(3)] {
            let rs = RootSystem::from_preset(p, &OrbitMultiplicity(vec![0.0])).unwrap();
            assert_eq!(rs.homogeneous_dimension(), rs.dim() as f64);
        }
    }

    #[test]
    fn group_orders() {
        let b2 = RootSystem::from_preset(Preset::B2, &OrbitMultiplicity(vec![1.0, 0.5])).unwrap();
        assert_eq!(b2.group().len(), 8);
        assert_eq!(b2.homogeneous_dimension(), 2.0 + 4.0 + 2.0);
        for m in 1..=8 {
            let d = RootSystem::from_preset(Preset::Dihedral(m), &OrbitMultiplicity(vec![1.0]))
                .unwrap();
            assert_eq!(d.group().len(), 2 * m, "dihedral({m})");
        }
        let a13 = RootSystem::from_preset(Preset::A1Power(3), &OrbitMultiplicity(vec![1.0])).unwrap();
        assert_eq!(a13.group().len(), 8);
    }

    #[test]
    fn group_is_closed() {
        let rs = RootSystem::from_preset(Preset::Dihedral(6), &OrbitMultiplicity(vec![1.0, 2.0]))
            .unwrap();
        let g = rs.group();
        assert!(g.iter().any(|e| e.approx_eq(&Matrix::identity(2), 1e-12)));
        for a in g {
            for b in g {
                let ab = a.mul(b);
                assert!(g.iter().any(|e| e.approx_eq(&ab, 1e-9)));
            }
        }
    }

    #[test]
    fn rejects_non_normalized_root() {
        let err = RootSystem::from_roots(vec![vec![1.0], vec![-1.0]], &OrbitMultiplicity(vec![1.0]))
            .unwrap_err();
        assert!(matches!(err, Error::NonNormalizedRoot { .. }));
    }

    #[test]
    fn rejects_non_closed_root_set() {
        // two roots at 60 degrees without the rest of A2
        let r = SQRT_2;
        let roots = vec![
            vec![r, 0.0],
            vec![-r, 0.0],
            vec![r * 0.5, r * 3f64.sqrt() / 2.0],
            vec![-r * 0.5, -r * 3f64.sqrt() / 2.0],
        ];
        let err = RootSystem::from_roots(roots, &OrbitMultiplicity(vec![1.0])).unwrap_err();
        assert!(matches!(err, Error::NotClosedUnderReflection { .. }));
    }

    #[test]
    fn rejects_non_invariant_multiplicity() {
        let (_, roots, _) = preset_roots(Preset::B2).unwrap();
        let mut k = vec![1.0; 8];
        k[0] = 2.0;
        let err = RootSystem::with_root_multiplicities(roots, k).unwrap_err();
        assert!(matches!(err, Error::NonInvariantMultiplicity { .. }));
    }

    #[test]
    fn explicit_roots_orbits_follow_group() {
        let (_, roots, _) = preset_roots(Preset::B2).unwrap();
        let rs = RootSystem::from_roots(roots, &OrbitMultiplicity(vec![1.0, 3.0])).unwrap();
        assert_eq!(rs.multiplicity()[0], 1.0);
        assert_eq!(rs.multiplicity()[4], 3.0);
    }

    #[test]
    fn reflection_examples() {
        let rs = a1(1.0);
        let alpha = rs.roots()[0].clone();
        assert!((rs.reflect(&[3.0], &alpha)[0] + 3.0).abs() < 1e-14);
        let b2 = RootSystem::from_preset(Preset::B2, &OrbitMultiplicity(vec![1.0])).unwrap();
        let d = vec![1.0, 1.0];
        let x = vec![2.0, -2.0];
        assert_eq!(reflect(&x, &d), x);
        let y = vec![0.3, -1.7];
        for alpha in b2.roots() {
            let back = reflect(&reflect(&y, alpha), alpha);
            assert!(distance(&back, &y) < 1e-14);
        }
    }

    #[test]
    fn orbit_distance_examples() {
        let rs = a1(1.0);
        assert_eq!(rs.orbit_distance(&[1.0], &[-1.0]), 0.0);
        assert_eq!(rs.orbit_distance(&[0.4], &[0.4]), 0.0);
        let b2 = RootSystem::from_preset(Preset::B2, &OrbitMultiplicity(vec![1.0])).unwrap();
        assert!(b2.orbit_distance(&[1.0, 0.0], &[0.0, 1.0]) < 1e-14);
    }

    #[test]
    fn orbit_of_box_rank_one() {
        let rs = a1(1.0);
        let imgs = rs.orbit_of_box(&[1.0], &[2.0]);
        assert_eq!(imgs.len(), 2);
        assert!(imgs.iter().any(|b| b.contains(&[-1.5])));
        assert!(imgs.iter().any(|b| b.contains(&[1.5])));
        assert!(!imgs.iter().any(|b| b.contains(&[0.5])));
        let eu = RootSystem::euclidean(2);
        assert_eq!(eu.orbit_of_box(&[0.0, 0.0], &[1.0, 1.0]).len(), 1);
    }

    #[test]
    fn axis_multiplicities_detect_products() {
        let a12 = RootSystem::from_preset(Preset::A1Power(2), &OrbitMultiplicity(vec![1.0, 0.5]))
            .unwrap();
        assert_eq!(a12.axis_multiplicities(), Some(vec![1.0, 0.5]));
        let b2 = RootSystem::from_preset(Preset::B2, &OrbitMultiplicity(vec![1.0])).unwrap();
        assert_eq!(b2.axis_multiplicities(), None);
    }
}
