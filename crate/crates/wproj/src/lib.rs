//! # wproj
//!
//! Tangential Wasserstein projections between discrete probability measures
//! on ℝᵈ.
//!
//! Given a target measure and a set of control measures, the library finds
//! simplex weights λ* minimizing
//!
//! ```text
//! ‖ Σⱼ λⱼ (b_j − id) ‖²_{L²(P₀)},    λ ∈ Δᴶ,
//! ```
//!
//! where `b_j` is the barycentric projection of an optimal transport plan
//! from the target `P₀` to control `P_j`. The minimizer exists and is the
//! metric projection of the identity onto the convex hull of the maps `b_j`
//! in `L²(P₀)`; pushing `P₀` forward through `Σⱼ λ*ⱼ b_j` yields the
//! projected measure.
//!
//! The pipeline is:
//!
//! 1. [`ot`] — solve discrete optimal transport between the target and each
//!    control (exact network simplex, or log-stabilized Sinkhorn);
//! 2. [`tangent`] — collapse each plan to a map via barycentric projection
//!    and express it as a displacement field on the target support;
//! 3. [`projection`] — assemble the Gram matrix of displacement fields and
//!    solve the simplex-constrained quadratic program for λ*;
//! 4. [`synthctl`] — drive the distributional synthetic-controls workflow:
//!    pooled pre-period fitting, per-period counterfactual mixtures, and
//!    pre-trend diagnostics.
//!
//! [`measures`] holds the shared data model ([`DiscreteMeasure`]) and all
//! ingestion paths (sample matrices, CSV panels, grayscale images), and
//! [`sim`] provides the seeded Gaussian/mixture samplers used by the
//! simulation commands of the companion CLI.
//!
//! All types are immutable after construction and safe to share across
//! threads; every operation is a pure function of its inputs. Given equal
//! inputs and options the whole pipeline is deterministic, including under
//! varying thread counts (parallelism is over independent subproblems only).

use thiserror::Error;

pub mod measures;
pub mod ot;
pub mod projection;
pub mod sim;
pub mod synthctl;
pub mod tangent;

pub use measures::DiscreteMeasure;
pub use ot::TransportPlan;
pub use projection::{project, ProjectOptions, ProjectionResult};
pub use tangent::TangentField;

/// Errors for every operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input with zero rows where at least one sample is required.
    #[error("input is empty: {0}")]
    EmptyInput(&'static str),

    /// NaN or infinite entries where finite reals are required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Weight vector does not sum to one within tolerance.
    #[error("weights sum to {sum}, expected 1 within {tol}")]
    WeightSum { sum: f64, tol: f64 },

    /// A weight that must be strictly positive is zero or negative.
    #[error("weight at index {index} is {value}; atoms must carry positive mass")]
    NonPositiveWeight { index: usize, value: f64 },

    /// Support row count and weight length disagree.
    #[error("support has {rows} rows but weights has {weights} entries")]
    LengthMismatch { rows: usize, weights: usize },

    /// Two measures live in different ambient dimensions.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// Declared CSV column absent from the header.
    #[error("missing column {column:?} in CSV header")]
    MissingColumn { column: String },

    /// A CSV cell failed numeric parsing (1-based data row).
    #[error("parse error at row {row}, column {column:?}: {value:?} is not a finite number")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },

    /// A negative entry in the declared weight column.
    #[error("negative weight {value} at row {row}")]
    NegativeWeight { row: usize, value: f64 },

    /// Every row was dropped by the missing-value / transform policy.
    #[error("all {rows_read} rows dropped during ingestion")]
    AllRowsDropped { rows_read: usize },

    /// Image carries no positive-intensity pixel.
    #[error("image has no strictly positive pixel")]
    AllZeroImage,

    /// Malformed PGM/PNG input.
    #[error("image format error: {0}")]
    ImageFormat(String),

    /// Header declares more pixels than the ingestion limit allows.
    #[error("image declares {pixels} pixels, limit is {limit}")]
    ImageTooLarge { pixels: u64, limit: u64 },

    /// Mixture weights outside the simplex.
    #[error("bad mixture weights: {0}")]
    BadMixWeights(String),

    /// λ is not a simplex vector within tolerance.
    #[error("bad weights: {0}")]
    BadWeights(String),

    /// Problem exceeds the configured dense-size budget.
    #[error("problem size {entries} entries exceeds budget {budget}")]
    SizeBudgetExceeded { entries: u128, budget: u128 },

    /// Brute-force oracle limits exceeded.
    #[error("oracle supports equal-size uniform instances with n ≤ {limit}, got n0={n0}, n1={n1}")]
    OracleSizeExceeded { n0: usize, n1: usize, limit: usize },

    /// Brute-force oracle requires uniform weights.
    #[error("oracle requires uniform weights on both measures")]
    OracleRequiresUniform,

    /// A transport-plan row carries no mass (corrupted plan).
    #[error("transport plan row {row} has zero mass")]
    ZeroRowMass { row: usize },

    /// Tangent field does not originate at the given base measure.
    #[error("tangent field base does not match the given measure")]
    BaseMismatch,

    /// Interpolation parameter outside [0, 1].
    #[error("interpolation parameter t={t} outside [0, 1]")]
    InvalidInterpolation { t: f64 },

    /// Requested W₂ from an entropic plan; its cost is only an upper bound.
    #[error("plan is entropic; its cost is an upper bound, not the W₂ distance")]
    ApproximatePlan,

    /// Equicorrelated covariance with an inadmissible correlation.
    #[error("covariance not positive semidefinite: rho={rho} requires -1/(d-1) <= rho <= 1 for d={d}")]
    NonPsdCovariance { rho: f64, d: usize },

    /// A unit has too few pooled samples to fit.
    #[error("unit {unit:?} has {got} pooled samples, need at least {need}")]
    InsufficientSamples {
        unit: String,
        got: usize,
        need: usize,
    },

    /// A (unit, period) data source is absent.
    #[error("missing data for unit {unit:?}, period {period:?}")]
    MissingPeriodData { unit: String, period: String },

    /// A per-control subproblem failed inside the projection orchestrator.
    #[error("control {index} failed: {source}")]
    PartialFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Invalid option value.
    #[error("invalid option: {0}")]
    InvalidOption(String),

    /// The exact solver exceeded its pivot budget (should not occur; the
    /// Bland fallback guarantees finite termination on exact arithmetic).
    #[error("exact solver stalled after {pivots} pivots")]
    SolverStalled { pivots: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Tolerance for simplex membership of weight vectors.
pub const WEIGHT_TOL: f64 = 1e-9;
