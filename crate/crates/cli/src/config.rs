//! Run configuration and the objects built from it.

use std::path::Path;
use std::sync::Arc;

use dunklab::geometry::{OrbitMultiplicity, Preset, RootSystem};
use dunklab::heat::Grid1D;
use dunklab::potential::Polynomial;
use dunklab::{PotentialKind, PotentialMeasure, PotentialProfile, WeightedMeasure};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Measure,
    Potential,
    MField,
    Cubes,
    Ops,
    Heat,
    Fp,
    Hardy,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Measure,
        Stage::Potential,
        Stage::MField,
        Stage::Cubes,
        Stage::Ops,
        Stage::Heat,
        Stage::Fp,
        Stage::Hardy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Measure => "measure",
            Stage::Potential => "potential",
            Stage::MField => "m-field",
            Stage::Cubes => "cubes",
            Stage::Ops => "ops",
            Stage::Heat => "heat",
            Stage::Fp => "fp",
            Stage::Hardy => "hardy",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootSystemSpec {
    pub preset: Preset,
    /// One value per orbit, or a single value for all orbits.
    pub multiplicity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Constant,
    Power,
    Sqnorm,
    Polysq,
    Exponential,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialName,
    /// `[c]` for constant, `[σ]` for power, ascending coefficients of a
    /// polynomial in `x₁` for polysq.
    #[serde(default)]
    pub params: Vec<f64>,
    /// Multivariate polynomial for polysq; overrides `params`.
    #[serde(default)]
    pub poly: Option<Polynomial>,
    pub q: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatSpec {
    pub t: f64,
    pub grid: String,
    pub t_grid: Vec<f64>,
}

impl Default for HeatSpec {
    fn default() -> Self {
        Self {
            t: 0.5,
            grid: "-6:6:256".into(),
            t_grid: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardySpec {
    pub n: usize,
    pub grid: String,
    /// Atoms stay inside `[−reach, reach]`.
    pub reach: f64,
}

impl Default for HardySpec {
    fn default() -> Self {
        Self {
            n: 100,
            grid: "-6:6:768".into(),
            reach: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub measure: String,
    pub potential: String,
    pub m_field: String,
    pub cubes: String,
    pub ops: String,
    pub heat: String,
    pub fp: String,
    pub atoms: String,
    pub hardy_summary: String,
    pub manifest: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            measure: "measure.json".into(),
            potential: "rh.csv".into(),
            m_field: "m.csv".into(),
            cubes: "cubes.json".into(),
            ops: "ops.json".into(),
            heat: "heat_report.json".into(),
            fp: "fp_report.csv".into(),
            atoms: "atoms.csv".into(),
            hardy_summary: "hardy_summary.json".into(),
            manifest: "run.json".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub root_system: RootSystemSpec,
    pub potential: PotentialSpec,
    pub domain: DomainSpec,
    pub max_depth: u32,
    pub tol: f64,
    /// Per-axis `lo:hi:n` grid of the m-field sweep, endpoints included.
    pub m_grid: String,
    pub heat: HeatSpec,
    pub hardy: HardySpec,
    /// Frozen Fefferman-Phong constant; `None` skips the check.
    pub fp_c_frozen: Option<f64>,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub outputs: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            root_system: RootSystemSpec {
                preset: Preset::A1,
                multiplicity: vec![1.0],
            },
            potential: PotentialSpec {
                kind: PotentialName::Sqnorm,
                params: vec![],
                poly: None,
                q: 2.0,
                scale: 1.0,
            },
            domain: DomainSpec {
                lo: vec![-8.0],
                hi: vec![8.0],
            },
            max_depth: 48,
            tol: 1e-6,
            m_grid: "-8:8:65".into(),
            heat: HeatSpec::default(),
            hardy: HardySpec::default(),
            fp_c_frozen: None,
            seed: 7,
            stages: Stage::ALL.to_vec(),
            outputs: OutputSpec::default(),
        }
    }
}

/// Validated objects shared by the stages.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub rs: Arc<RootSystem>,
    pub pm: PotentialMeasure,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))
    }

    pub fn potential_kind(&self) -> Result<PotentialKind, CliError> {
        let p = &self.potential;
        let want = |n: usize| -> Result<(), CliError> {
            if p.params.len() == n {
                Ok(())
            } else {
                Err(CliError::ConfigInvalid(format!("potential {:?} takes {n} params", p.kind)))
            }
        };
        Ok(match p.kind {
            PotentialName::Constant => {
                want(1)?;
                PotentialKind::Constant { c: p.params[0] }
            }
            PotentialName::Power => {
                want(1)?;
                PotentialKind::Power { sigma: p.params[0] }
            }
            PotentialName::Sqnorm => {
                want(0)?;
                PotentialKind::SqNorm
            }
            PotentialName::Exponential => {
                want(0)?;
                PotentialKind::Exponential
            }
            PotentialName::Polysq => match &p.poly {
                Some(poly) => PotentialKind::PolySq { poly: poly.clone() },
                None if !p.params.is_empty() => PotentialKind::PolySq {
                    poly: univariate_in(self.domain.lo.len(), &p.params),
                },
                None => return Err(CliError::ConfigInvalid("polysq needs params or poly".into())),
            },
        })
    }

    pub fn context(&self) -> Result<Context, CliError> {
        let rs = Arc::new(RootSystem::from_preset(
            self.root_system.preset,
            &OrbitMultiplicity(self.root_system.multiplicity.clone()),
        )?);
        let n = rs.dim();
        if self.domain.lo.len() != n || self.domain.hi.len() != n {
            return Err(CliError::ConfigInvalid(format!("domain must have {n} coordinates")));
        }
        if self.domain.lo.iter().zip(&self.domain.hi).any(|(a, b)| !(b > a)) {
            return Err(CliError::ConfigInvalid("domain needs lo < hi on every axis".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::ConfigInvalid(format!("tol {} outside (0, 1)", self.tol)));
        }
        Grid1D::parse(&self.heat.grid)?;
        Grid1D::parse(&self.hardy.grid)?;
        parse_axis(&self.m_grid)?;
        let profile = PotentialProfile::scaled(self.potential_kind()?, self.potential.scale, self.potential.q, rs.homogeneous_dimension())?;
        let mut measure = WeightedMeasure::new(rs.clone());
        measure.quad = measure.quad.with_rel_tol(self.tol);
        Ok(Context {
            config: self.clone(),
            pm: PotentialMeasure::new(profile, measure),
            rs,
        })
    }
}

fn univariate_in(dim: usize, coeffs: &[f64]) -> Polynomial {
    Polynomial::new(
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut e = vec![0u32; dim];
                e[0] = i as u32;
                (c, e)
            })
            .collect(),
    )
}

/// `lo:hi:n` with endpoints included.
pub fn parse_axis(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::ConfigInvalid(format!("axis {text:?}, expected lo:hi:n"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(hi >= lo) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// `lo:hi` applied to every axis.
pub fn parse_interval(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::ConfigInvalid(format!("interval {text:?}, expected lo:hi"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.stages, Stage::ALL.to_vec());
        back.context().unwrap();
    }

    #[test]
    fn exponent_below_half_dimension_is_rejected() {
        let mut c = RunConfig::default();
        c.potential.q = 1.4;
        assert!(matches!(c.context(), Err(CliError::ConfigInvalid(_))));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"potential": {"kind": "constant", "params": [1.0], "q": 2}}"#).unwrap();
        assert_eq!(c.potential_kind().unwrap(), PotentialKind::Constant { c: 1.0 });
        assert_eq!(c.max_depth, 48);
    }

    #[test]
    fn axis_specs() {
        assert_eq!(parse_axis("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_axis("1:0:3").is_err());
        assert_eq!(parse_interval("-8:8").unwrap(), (-8.0, 8.0));
    }
}
