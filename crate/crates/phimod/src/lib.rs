//! Exact arithmetic for semilinear φ-modules over p-adic divided-power rings.
//!
//! The crate models three nested coefficient rings attached to an Eisenstein
//! polynomial E(u) over Z_p: the power-series ring in u, its divided-power
//! envelope, and an intermediate subring, all truncated to finite precision
//! in both p and the divided-power filtration. On top of the ring arithmetic
//! it implements semilinear modules with Frobenius (and optionally monodromy),
//! classification predicates (étale, multiplicative, nilpotent, unipotent),
//! duality, base-change functors between the rings with machine-checkable
//! certificates, filtered (φ,N)-module invariants over Q_p, and lattice
//! admissibility checks.
//!
//! Everything is exact at a tracked precision: operations either return a
//! result trusted to the precision they report or fail loudly. Nothing
//! rounds.

use thiserror::Error as ThisError;

pub mod context;
pub mod decompose;
pub mod element;
pub mod functors;
pub mod linalg;
pub mod literal;
pub mod modules;
pub mod smatrix;
#[cfg(feature = "testkit")]
#[doc(hidden)]
pub mod testkit;
pub mod padic;

pub use context::{ArithCtx, EisensteinData, PrecisionProfile, Ring, RingTag};
pub use element::SElement;
pub use padic::{divmod_monic, vp_binomial, vp_factorial, ArithError, PadicInt, Poly};

#[derive(Debug, ThisError)]
pub enum Error {
    /// The requested computation does not fit the truncation profile (or a
    /// precision budget ran dry). Carries a human-readable diagnosis.
    #[error("profile overflow: {0}")]
    ProfileOverflow(String),
    /// An element fed to φ_r (or a filtration-indexed map) is not in Fil^r.
    #[error("element is not in Fil^{0}")]
    NotInFiltration(u32),
    #[error("element is not a unit")]
    NotUnit,
    #[error("not divisible: {0}")]
    NotDivisible(String),
    /// An element claimed for a subring fails its valuation criterion.
    #[error("element is not in the requested ring ({0:?})")]
    NotInSourceRing(Ring),
    /// No inverse-matrix witness exists at the tracked precision.
    #[error("no witness: {0}")]
    NoWitness(String),
    #[error("matrix has no finite-height structure: {0}")]
    NotFiniteHeight(String),
    /// An iteration failed to stabilize within its step budget.
    #[error("no convergence after {steps} steps: {diag}")]
    NoConvergence { steps: u32, diag: String },
    #[error("module is not unipotent")]
    NotUnipotent,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not a lattice: {0}")]
    NotALattice(String),
    #[error("candidate is not stable: {0}")]
    NotStableCandidate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

pub type Result<T> = std::result::Result<T, Error>;
