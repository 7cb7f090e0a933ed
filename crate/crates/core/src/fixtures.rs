//! Regression constants measured on the committed fixtures and frozen with a
//! margin.

use serde::Deserialize;

const REGRESSION_JSON: &str = include_str!("../fixtures/regression.json");

#[derive(Debug, Clone, Deserialize)]
pub struct Regression {
    pub version: u32,
    pub fefferman_phong: FpFrozen,
    pub gaussian_bound: BoundFrozen,
    pub hardy: HardyFrozen,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FpFrozen {
    pub family_version: u32,
    pub measured_max_ratio: f64,
    pub c_frozen: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BoundFrozen {
    pub c: f64,
    pub measured_constant: f64,
    pub c_frozen: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HardyFrozen {
    pub grid: String,
    pub seed: u64,
    pub atoms: usize,
    pub reach: f64,
    pub measured_max_norm: f64,
    pub c_frozen: f64,
    pub tail_measured: f64,
    pub tail_frozen: f64,
    pub local_global_measured: [f64; 2],
    pub local_global_frozen: [f64; 2],
}

pub fn regression() -> Regression {
    serde_json::from_str(REGRESSION_JSON).expect("committed regression fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_values_cover_measurements() {
        let r = regression();
        assert_eq!(r.fefferman_phong.family_version, crate::fefferman_phong::FAMILY_VERSION);
        assert!(r.fefferman_phong.measured_max_ratio < r.fefferman_phong.c_frozen);
        assert!(r.gaussian_bound.measured_constant < r.gaussian_bound.c_frozen);
        assert!(r.hardy.measured_max_norm < r.hardy.c_frozen);
        assert!(r.hardy.tail_measured < r.hardy.tail_frozen);
        let (m, f) = (r.hardy.local_global_measured, r.hardy.local_global_frozen);
        assert!(f[0] < m[0] && m[1] < f[1]);
    }
}
