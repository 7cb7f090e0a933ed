//! Stopping-time dyadic cubes and the checks run on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical_radius::CriticalRadiusField;
use crate::error::{Error, Result};
use crate::geometry::RootSystem;
use crate::measure::Region;
use crate::potential::PotentialMeasure;

pub const CUBES_ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<i64>,
    pub side: f64,
    pub center: Vec<f64>,
    /// `d(Q)² μ(Q) / w(Q)`.
    pub criterion_value: f64,
    /// Criterion of the dyadic parent; `None` for the root.
    pub parent_criterion: Option<f64>,
    pub w: f64,
    pub mu: f64,
    pub boundary_flag: bool,
}

impl DyadicCube {
    pub fn lo(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - 0.5 * self.side).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + 0.5 * self.side).collect()
    }

    /// Concentric cube with side `factor·d(Q)`; `Q*` is `factor = 2`,
    /// `Q****` is `factor = 16`.
    pub fn dilate(&self, factor: f64) -> (Vec<f64>, Vec<f64>) {
        let h = 0.5 * factor * self.side;
        (
            self.center.iter().map(|c| c - h).collect(),
            self.center.iter().map(|c| c + h).collect(),
        )
    }

    pub fn region(&self) -> Region {
        Region::cube(&self.lo(), &self.hi())
    }

    pub fn stars(k: u32) -> f64 {
        2f64.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeCollection {
    pub cubes: Vec<DyadicCube>,
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    pub max_depth: u32,
}

#[derive(Serialize, Deserialize)]
struct CubeRecord {
    level: u32,
    index: Vec<i64>,
    side: f64,
    center: Vec<f64>,
    criterion_value: f64,
    boundary_flag: bool,
}

#[derive(Serialize, Deserialize)]
struct CubeArtifact {
    version: u32,
    cubes: Vec<CubeRecord>,
}

struct Node {
    level: u32,
    index: Vec<i64>,
    w: f64,
    mu: f64,
}

impl CubeCollection {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain_lo.len()
    }

    /// Cubes used by the fact checks: those not flagged, or all cubes when
    /// every cube is flagged.
    pub fn certified(&self) -> Vec<&DyadicCube> {
        let c: Vec<&DyadicCube> = self.cubes.iter().filter(|q| !q.boundary_flag).collect();
        if c.is_empty() {
            self.cubes.iter().collect()
        } else {
            c
        }
    }

    pub fn to_json(&self) -> String {
        let art = CubeArtifact {
            version: CUBES_ARTIFACT_VERSION,
            cubes: self
                .cubes
                .iter()
                .map(|q| CubeRecord {
                    level: q.level,
                    index: q.index.clone(),
                    side: q.side,
                    center: q.center.clone(),
                    criterion_value: q.criterion_value,
                    boundary_flag: q.boundary_flag,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&art).expect("cube artifact serializes")
    }

    /// Reads the artifact written by [`to_json`](Self::to_json). Quadrature
    /// values not stored in the artifact are left as NaN.
    pub fn from_json(text: &str, domain_lo: &[f64], domain_hi: &[f64]) -> Result<Self> {
        let art: CubeArtifact =
            serde_json::from_str(text).map_err(|e| Error::InvalidRegion(format!("cube artifact: {e}")))?;
        Ok(Self {
            cubes: art
                .cubes
                .into_iter()
                .map(|r| DyadicCube {
                    level: r.level,
                    index: r.index,
                    side: r.side,
                    center: r.center,
                    criterion_value: r.criterion_value,
                    parent_criterion: None,
                    w: f64::NAN,
                    mu: f64::NAN,
                    boundary_flag: r.boundary_flag,
                })
                .collect(),
            domain_lo: domain_lo.to_vec(),
            domain_hi: domain_hi.to_vec(),
            max_depth: 0,
        })
    }

    /// Index of the cube containing `x` (half-open on the upper faces).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.cubes.iter().position(|q| {
            q.center
                .iter()
                .zip(x)
                .all(|(c, v)| *v >= c - 0.5 * q.side && *v < c + 0.5 * q.side)
        })
    }
}

/// Builds the maximal dyadic cubes `Q ⊂ domain` with `d(Q)² μ(Q)/w(Q) ≤ 1`,
/// with the dyadic grid anchored at the lower corner of the domain.
pub fn build_stopping_time(
    domain_lo: &[f64],
    domain_hi: &[f64],
    pm: &PotentialMeasure,
    max_depth: u32,
) -> Result<CubeCollection> {
    let n = domain_lo.len();
    if n == 0 || domain_hi.len() != n || n != pm.measure.dim() {
        return Err(Error::NotDyadicDomain("dimension mismatch".into()));
    }
    let side = domain_hi[0] - domain_lo[0];
    if !(side > 0.0) || domain_lo.iter().zip(domain_hi).any(|(l, h)| ((h - l) - side).abs() > 1e-12 * side) {
        return Err(Error::NotDyadicDomain(format!("{domain_lo:?}..{domain_hi:?} is not a cube")));
    }
    if max_depth < 1 {
        return Err(Error::NotDyadicDomain("max_depth must be at least 1".into()));
    }
    let geom = Geometry {
        lo: domain_lo.to_vec(),
        hi: domain_hi.to_vec(),
        side,
    };
    let children = geom.children(&vec![0; n], 0);
    let child_vals = children
        .par_iter()
        .map(|(lvl, idx)| geom.node(pm, *lvl, idx.clone()))
        .collect::<Result<Vec<Node>>>()?;
    let root = Node {
        level: 0,
        index: vec![0; n],
        w: child_vals.iter().map(|c| c.w).sum(),
        mu: child_vals.iter().map(|c| c.mu).sum(),
    };
    let crit = geom.criterion(&root);
    let cubes = if crit <= 1.0 {
        vec![geom.emit(&root, None)]
    } else {
        let lists = child_vals
            .into_par_iter()
            .map(|c| geom.descend(pm, c, crit, max_depth))
            .collect::<Result<Vec<Vec<DyadicCube>>>>()?;
        lists.into_iter().flatten().collect()
    };
    Ok(CubeCollection {
        cubes,
        domain_lo: domain_lo.to_vec(),
        domain_hi: domain_hi.to_vec(),
        max_depth,
    })
}

struct Geometry {
    lo: Vec<f64>,
    hi: Vec<f64>,
    side: f64,
}

impl Geometry {
    fn side(&self, level: u32) -> f64 {
        self.side / 2f64.powi(level as i32)
    }

    fn bounds(&self, level: u32, index: &[i64]) -> (Vec<f64>, Vec<f64>) {
        let s = self.side(level);
        let lo: Vec<f64> = self.lo.iter().zip(index).map(|(l, i)| l + *i as f64 * s).collect();
        let hi = lo.iter().map(|v| v + s).collect();
        (lo, hi)
    }

    fn children(&self, index: &[i64], level: u32) -> Vec<(u32, Vec<i64>)> {
        let n = index.len();
        (0..1usize << n)
            .map(|mask| {
                let idx = (0..n).map(|i| 2 * index[i] + ((mask >> i) & 1) as i64).collect();
                (level + 1, idx)
            })
            .collect()
    }

    fn node(&self, pm: &PotentialMeasure, level: u32, index: Vec<i64>) -> Result<Node> {
        let (lo, hi) = self.bounds(level, &index);
        let (w, mu) = pm.volumes(&Region::cube(&lo, &hi))?;
        Ok(Node { level, index, w, mu })
    }

    fn criterion(&self, node: &Node) -> f64 {
        let s = self.side(node.level);
        s * s * node.mu / node.w
    }

    fn emit(&self, node: &Node, parent: Option<f64>) -> DyadicCube {
        let s = self.side(node.level);
        let (lo, hi) = self.bounds(node.level, &node.index);
        let tol = 1e-12 * self.side;
        let touches = lo
            .iter()
            .zip(&hi)
            .zip(self.lo.iter().zip(&self.hi))
            .any(|((l, h), (dl, dh))| (l - dl).abs() < tol || (h - dh).abs() < tol);
        DyadicCube {
            level: node.level,
            index: node.index.clone(),
            side: s,
            center: lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            criterion_value: self.criterion(node),
            parent_criterion: parent,
            w: node.w,
            mu: node.mu,
            boundary_flag: parent.is_none() || touches,
        }
    }

    fn descend(&self, pm: &PotentialMeasure, node: Node, parent_crit: f64, max_depth: u32) -> Result<Vec<DyadicCube>> {
        let crit = self.criterion(&node);
        if crit <= 1.0 {
            return Ok(vec![self.emit(&node, Some(parent_crit))]);
        }
        if node.level >= max_depth {
            return Err(Error::DepthExhausted(max_depth));
        }
        let kids = self.children(&node.index, node.level);
        let lists = kids
            .into_par_iter()
            .map(|(lvl, idx)| {
                let child = self.node(pm, lvl, idx)?;
                self.descend(pm, child, crit, max_depth)
            })
            .collect::<Result<Vec<Vec<DyadicCube>>>>()?;
        Ok(lists.into_iter().flatten().collect())
    }
}

/// Audit of the stopping rule on every emitted cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingAudit {
    pub all_below_one: bool,
    pub all_parents_above_one: bool,
    pub tiles_domain: bool,
    pub max_criterion: f64,
    pub min_parent_criterion: f64,
}

pub fn audit_stopping(cc: &CubeCollection) -> StoppingAudit {
    let max_criterion = cc.cubes.iter().map(|q| q.criterion_value).fold(f64::NEG_INFINITY, f64::max);
    let min_parent = cc
        .cubes
        .iter()
        .filter_map(|q| q.parent_criterion)
        .fold(f64::INFINITY, f64::min);
    let n = cc.dim() as i32;
    // tiling: dyadic volumes add to one and no cube is an ancestor of another
    let total: f64 = cc.cubes.iter().map(|q| 2f64.powi(-(q.level as i32) * n)).sum();
    let mut keys: Vec<(u32, Vec<i64>)> = cc.cubes.iter().map(|q| (q.level, q.index.clone())).collect();
    keys.sort();
    let set: std::collections::HashSet<(u32, Vec<i64>)> = keys.iter().cloned().collect();
    let mut nested = false;
    for (lvl, idx) in &keys {
        let mut l = *lvl;
        let mut i = idx.clone();
        while l > 0 {
            l -= 1;
            i = i.iter().map(|v| v.div_euclid(2)).collect();
            if set.contains(&(l, i.clone())) {
                nested = true;
            }
        }
    }
    StoppingAudit {
        all_below_one: cc.cubes.iter().all(|q| q.criterion_value <= 1.0),
        all_parents_above_one: cc.cubes.iter().all(|q| q.parent_criterion.map_or(true, |p| p > 1.0)),
        tiles_domain: (total - 1.0).abs() < 1e-12 && !nested && set.len() == cc.cubes.len(),
        max_criterion,
        min_parent_criterion: min_parent,
    }
}

/// `min_Q d(Q)² μ(Q)/w(Q)` over certified cubes.
pub fn verify_lower_bound(cc: &CubeCollection) -> f64 {
    cc.certified()
        .iter()
        .map(|q| q.criterion_value)
        .fold(f64::INFINITY, f64::min)
}

/// `max max(m(x)d(Q), 1/(m(x)d(Q)))` over certified cubes and a grid of
/// `samples_per_cube` points (per cube, total) in `Q****`.
pub fn verify_m_comparison(cc: &CubeCollection, field: &CriticalRadiusField, samples_per_cube: usize) -> Result<f64> {
    let n = cc.dim();
    let per_axis = ((samples_per_cube as f64).powf(1.0 / n as f64).round() as usize).max(1);
    let cubes = cc.certified();
    let values = cubes
        .par_iter()
        .map(|q| {
            let (lo, hi) = q.dilate(16.0);
            let mut best: f64 = 0.0;
            for x in grid_points(&lo, &hi, per_axis) {
                let md = field.m(&x)? * q.side;
                best = best.max(md).max(1.0 / md);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Cell-centred grid with `per_axis` points per axis in a box.
pub fn grid_points(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut pts = vec![vec![]];
    for i in 0..n {
        let h = (hi[i] - lo[i]) / per_axis as f64;
        pts = pts
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                (0..per_axis).map(move |j| {
                    let mut p = p.clone();
                    p.push(lo[i] + (j as f64 + 0.5) * h);
                    p
                })
            })
            .collect();
    }
    pts
}

/// Sweep-and-prune index of dilated cubes along the first axis.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    factor: f64,
    order: Vec<usize>,
    lo0: Vec<f64>,
    boxes: Vec<(Vec<f64>, Vec<f64>)>,
    max_width: f64,
}

impl SpatialIndex {
    pub fn new(cc: &CubeCollection, factor: f64) -> Self {
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = cc.cubes.iter().map(|q| q.dilate(factor)).collect();
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        order.sort_by(|&a, &b| boxes[a].0[0].total_cmp(&boxes[b].0[0]).then(a.cmp(&b)));
        let lo0 = order.iter().map(|&i| boxes[i].0[0]).collect();
        let max_width = cc.cubes.iter().map(|q| factor * q.side).fold(0.0, f64::max);
        Self {
            factor,
            order,
            lo0,
            boxes,
            max_width,
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn dilated(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.boxes[i].0, &self.boxes[i].1)
    }

    /// Cubes whose dilation contains `x` (closed boxes), in index order.
    pub fn containing(&self, x: &[f64]) -> Vec<usize> {
        let start = self.lo0.partition_point(|v| *v < x[0] - self.max_width);
        let end = self.lo0.partition_point(|v| *v <= x[0]);
        let mut out: Vec<usize> = self.order[start..end]
            .iter()
            .copied()
            .filter(|&i| {
                let (lo, hi) = &self.boxes[i];
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h)
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// All unordered pairs of intersecting dilations.
    pub fn intersecting_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (a, &i) in self.order.iter().enumerate() {
            let (lo_i, hi_i) = &self.boxes[i];
            for &j in &self.order[a + 1..] {
                let (lo_j, hi_j) = &self.boxes[j];
                if lo_j[0] > hi_i[0] {
                    break;
                }
                if lo_i.iter().zip(hi_i).zip(lo_j.iter().zip(hi_j)).all(|((l1, h1), (l2, h2))| l2 <= h1 && l1 <= h2) {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// Cubes whose dilation meets the dilation of cube `i` (including `i`).
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let (lo_i, hi_i) = &self.boxes[i];
        let start = self.lo0.partition_point(|v| *v < lo_i[0] - self.max_width);
        let end = self.lo0.partition_point(|v| *v <= hi_i[0]);
        let mut out: Vec<usize> = self.order[start..end]
            .iter()
            .copied()
            .filter(|&j| {
                let (lo_j, hi_j) = &self.boxes[j];
                lo_i.iter().zip(hi_i).zip(lo_j.iter().zip(hi_j)).all(|((l1, h1), (l2, h2))| l2 <= h1 && l1 <= h2)
            })
            .collect();
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// `max d(Q₁)/d(Q₂)` over pairs with `Q₁**** ∩ Q₂**** ≠ ∅`.
    pub c0: f64,
    pub pairs: usize,
    /// Largest number of `Q****` containing a single cube centre.
    pub max_multiplicity: usize,
}

pub fn verify_finite_overlap(cc: &CubeCollection) -> OverlapReport {
    let index = SpatialIndex::new(cc, 16.0);
    let pairs = index.intersecting_pairs();
    let mut c0: f64 = 1.0;
    for &(i, j) in &pairs {
        let (a, b) = (cc.cubes[i].side, cc.cubes[j].side);
        c0 = c0.max(a / b).max(b / a);
    }
    let max_multiplicity = cc
        .cubes
        .iter()
        .map(|q| index.containing(&q.center).len())
        .max()
        .unwrap_or(0);
    OverlapReport {
        c0,
        pairs: pairs.len(),
        max_multiplicity,
    }
}

/// Whether the multiset of side lengths is invariant under the group acting on
/// cube centres.
pub fn group_invariant(cc: &CubeCollection, rs: &RootSystem) -> bool {
    let tol = 1e-9;
    cc.cubes.iter().all(|q| {
        rs.group().iter().all(|g| {
            let img = g.apply(&q.center);
            cc.cubes.iter().any(|p| {
                (p.side - q.side).abs() < tol * q.side
                    && p.center.iter().zip(&img).all(|(a, b)| (a - b).abs() < tol * cc.domain_hi[0].abs().max(1.0))
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{OrbitMultiplicity, Preset};
    use crate::measure::WeightedMeasure;
    use crate::potential::{PotentialKind, PotentialProfile};
    use std::sync::Arc;

    fn pm(preset: Preset, k: f64, kind: PotentialKind) -> PotentialMeasure {
        let rs = Arc::new(RootSystem::from_preset(preset, &OrbitMultiplicity(vec![k])).unwrap());
        let hd = rs.homogeneous_dimension();
        PotentialMeasure::new(PotentialProfile::new(kind, 4.0, hd).unwrap(), WeightedMeasure::new(rs))
    }

    #[test]
    fn constant_potential_uniform_sides() {
        let p = pm(Preset::A1, 0.0, PotentialKind::Constant { c: 4.0 });
        let cc = build_stopping_time(&[-4.0], &[4.0], &p, 10).unwrap();
        // c d² ≤ 1 ⇒ d = 1/2
        assert!(cc.cubes.iter().all(|q| (q.side - 0.5).abs() < 1e-15));
        assert_eq!(cc.len(), 16);
        let a = audit_stopping(&cc);
        assert!(a.all_below_one && a.all_parents_above_one && a.tiles_domain);
        assert!(verify_lower_bound(&cc) >= 0.25);
    }

    #[test]
    fn quadrupling_constant_halves_sides() {
        let p1 = pm(Preset::A1, 1.0, PotentialKind::Constant { c: 1.0 });
        let p4 = pm(Preset::A1, 1.0, PotentialKind::Constant { c: 4.0 });
        let a = build_stopping_time(&[-8.0], &[8.0], &p1, 12).unwrap();
        let b = build_stopping_time(&[-8.0], &[8.0], &p4, 12).unwrap();
        assert!((a.cubes[0].side / b.cubes[0].side - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sqnorm_origin_cube() {
        let p = pm(Preset::A1, 1.0, PotentialKind::SqNorm);
        let cc = build_stopping_time(&[-8.0], &[8.0], &p, 20).unwrap();
        let i = cc.locate(&[0.5]).unwrap();
        let q = &cc.cubes[i];
        assert_eq!(q.side, 1.0);
        assert!((q.criterion_value - 0.6).abs() < 1e-10);
        assert!(audit_stopping(&cc).tiles_domain);
        assert!(group_invariant(&cc, p.measure.context()));
    }

    #[test]
    fn rejects_non_cube_domain() {
        let p = pm(Preset::A1Power(2), 1.0, PotentialKind::SqNorm);
        assert!(matches!(
            build_stopping_time(&[0.0, 0.0], &[1.0, 2.0], &p, 5),
            Err(Error::NotDyadicDomain(_))
        ));
    }

    #[test]
    fn depth_exhaustion() {
        let p = pm(Preset::A1, 1.0, PotentialKind::Constant { c: 1e6 });
        assert!(matches!(build_stopping_time(&[-8.0], &[8.0], &p, 4), Err(Error::DepthExhausted(4))));
    }

    #[test]
    fn single_cube_lower_bound() {
        let p = pm(Preset::A1, 1.0, PotentialKind::Constant { c: 0.01 });
        let cc = build_stopping_time(&[0.0], &[1.0], &p, 3).unwrap();
        assert_eq!(cc.len(), 1);
        assert!(cc.cubes[0].boundary_flag);
        assert!((verify_lower_bound(&cc) - 0.01).abs() < 1e-14);
    }

    #[test]
    fn overlap_of_uniform_grid() {
        let p = pm(Preset::A1Power(2), 0.0, PotentialKind::Constant { c: 1.0 });
        let cc = build_stopping_time(&[-2.0, -2.0], &[2.0, 2.0], &p, 6).unwrap();
        let rep = verify_finite_overlap(&cc);
        assert_eq!(rep.c0, 1.0);
        assert!(rep.pairs > 0);
    }

    #[test]
    fn spatial_index_matches_brute_force() {
        let p = pm(Preset::A1, 1.0, PotentialKind::SqNorm);
        let cc = build_stopping_time(&[-8.0], &[8.0], &p, 20).unwrap();
        let idx = SpatialIndex::new(&cc, 4.0);
        for x in [-7.9, -3.3, 0.0, 0.5, 6.2] {
            let brute: Vec<usize> = (0..cc.len())
                .filter(|&i| {
                    let (lo, hi) = cc.cubes[i].dilate(4.0);
                    x >= lo[0] && x <= hi[0]
                })
                .collect();
            assert_eq!(idx.containing(&[x]), brute);
        }
    }

    #[test]
    fn json_roundtrip() {
        let p = pm(Preset::A1, 1.0, PotentialKind::SqNorm);
        let cc = build_stopping_time(&[-4.0], &[4.0], &p, 20).unwrap();
        let text = cc.to_json();
        assert!(text.contains("\"version\": 1"));
        let back = CubeCollection::from_json(&text, &[-4.0], &[4.0]).unwrap();
        assert_eq!(back.len(), cc.len());
        assert_eq!(back.cubes[3].side, cc.cubes[3].side);
    }
}
