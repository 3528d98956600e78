use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("phase-space dimension must be even and >= 2, got {0}")]
    OddDimension(usize),

    #[error("matrix is not symplectic (residual {residual:.3e} > tol {tol:.1e})")]
    NotSymplectic { residual: f64, tol: f64 },

    #[error("matrix is not symmetric (defect {0:.3e})")]
    NotSymmetric(f64),

    #[error("symplectic matrix is not free: |det B| = {0:.3e}")]
    NotFree(f64),

    #[error("generators are not composable as a single free generator: |det(P'+Q)| = {0:.3e}")]
    NotComposableAsFree(f64),

    #[error("generator data invalid: {0}")]
    InvalidGenerator(String),

    #[error("S - I is singular (|det| = {0:.3e}); S is outside Sp0")]
    NotInSp0(f64),

    #[error("S + I is singular (|det| = {0:.3e}); Weyl symbol form unavailable")]
    SPlusISingular(f64),

    #[error("M - J/2 is singular (|det| = {0:.3e})")]
    CayleyInverseSingular(f64),

    #[error("chirp under-resolved: {which} = {value:.3} exceeds pi")]
    AliasingRisk { which: &'static str, value: f64 },

    #[error("input does not decay at the grid edge (relative edge magnitude {0:.3e})")]
    EdgeDecay(f64),

    #[error("shift {0} is not an integer multiple of the grid spacing")]
    OffLattice(f64),

    #[error("symplectic residual {residual:.3e} at t = {t} exceeds {tol:.1e}; step too coarse")]
    StepTooCoarse { t: f64, residual: f64, tol: f64 },

    #[error("tracked phase jumped by {jump:.3} rad at t = {t}; grid too coarse for lifting")]
    PhaseJump { t: f64, jump: f64 },

    #[error("time {0} is at or outside the sampled range; centered differences unavailable")]
    BoundaryTime(f64),

    #[error("time {0} is outside the sampled range")]
    TimeOutOfRange(f64),

    #[error("Newton inverse failed to converge after {0} iterations")]
    NewtonDiverged(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Nyquist condition violated: {0}")]
    Nyquist(String),

    #[error("monomial degree {0} exceeds the cap of 12")]
    DegreeCap(u32),

    #[error("time {0} is excluded for this closed form")]
    ExcludedTime(f64),

    #[error("dense stepping limited to N <= {max}, got {got}")]
    DenseTooLarge { max: usize, got: usize },

    #[error("commutator error estimate {estimate:.3e} exceeds budget {budget:.1e}; increase steps")]
    TooFewSteps { estimate: f64, budget: f64 },

    #[error("factorization search failed: no candidate rotation gives free factors")]
    FactorSearchFailed,

    #[error("invalid input: {0}")]
    Invalid(String),
}
