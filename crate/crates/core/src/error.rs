use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("root {index} has squared norm {norm_sq}, expected 2")]
    NonNormalizedRoot { index: usize, norm_sq: f64 },
    #[error("root set is not closed under the reflection in root {index}")]
    NotClosedUnderReflection { index: usize },
    #[error("multiplicity is not invariant under the reflection group (roots {a} and {b})")]
    NonInvariantMultiplicity { a: usize, b: usize },
    #[error("invalid multiplicity: {0}")]
    InvalidMultiplicity(String),
    #[error("reflection group exceeds {0} elements")]
    GroupTooLarge(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature tolerance not reached: value {value}, estimated error {est_error}")]
    ToleranceNotReached { value: f64, est_error: f64 },
    #[error("non-finite integrand value at {at:?}")]
    NonFiniteIntegrand { at: Vec<f64> },
    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("reverse Holder exponent q = {q} must exceed max(1, N/2) = {bound}")]
    InvalidExponent { q: f64, bound: f64 },
    #[error("potential has zero mean on {excluded} of {total} sample regions")]
    DivisionByZeroMean { excluded: usize, total: usize },
    #[error("negative power of the potential is not integrable on cube {cube:?}")]
    NonIntegrableNegativePower { cube: (Vec<f64>, Vec<f64>) },

    #[error("no up-crossing of the stopping functional in ({r_min}, {r_max}) at {x:?}")]
    BracketExhausted { x: Vec<f64>, r_min: f64, r_max: f64 },

    #[error("domain is not a dyadic cube: {0}")]
    NotDyadicDomain(String),
    #[error("stopping-time recursion reached depth {0} without satisfying the criterion")]
    DepthExhausted(u32),
    #[error("partition of unity cannot be normalized at {at:?}")]
    OverlapTooLarge { at: Vec<f64> },

    #[error("test function is not negligible on the region boundary (ratio {ratio:e})")]
    TruncationTooLarge { ratio: f64 },

    #[error("ODE integration failed at s = {at}")]
    OdeStepFailure { at: f64 },
    #[error("kernel argument out of range: {0}")]
    ArgumentOutOfRange(String),
    #[error("spectral integral cannot be truncated: {0}")]
    SpectralTruncationError(String),
    #[error("no (C, c) pair on the scan grid certifies the Gaussian bound")]
    BoundViolated,
    #[error("spatial grid too coarse: normalization drift {drift:e}")]
    GridTooCoarse { drift: f64 },

    #[error("Fefferman-Phong ratio {ratio} exceeds ten times the frozen constant {frozen}")]
    RatioUnbounded { ratio: f64, frozen: f64 },
    #[error("atom {0} in combination is invalid")]
    InvalidAtomInCombination(usize),
}
