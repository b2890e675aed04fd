//! Maximal violation of the four-partite Svetlichny inequality.
//!
//! The crate computes `S(ρ) = max_S tr(Sρ)` for four-qubit density
//! operators and the normalized measure `N(ρ) = max(0, (S − 8)/(8√2 − 8))`.
//!
//! * [`qstate`] holds density operators, Pauli correlation tensors, X-type
//!   classification and partial traces of multi-mode pure states.
//! * [`svetlichny`] builds the Svetlichny operator, reduces the inner
//!   maximization over Charlie's settings to a closed form, and evaluates
//!   X-type states exactly.
//! * [`spacetime`] constructs GHZ states degraded by the Hawking effect in
//!   Schwarzschild and Schwarzschild–de Sitter backgrounds.
//! * [`oracle`] is a multistart numerical maximizer over measurement angles,
//!   used as ground truth for every closed form.
//! * [`sweep`] runs parameter grids and reports regions of genuine
//!   four-partite nonlocality.
//!
//! Data-parallel work (grid cells, oracle restarts) runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod error;
pub mod exec;
pub mod oracle;
pub mod qstate;
pub mod spacetime;
pub mod svetlichny;
pub mod sweep;

pub use error::{Error, Result};
pub use exec::Execution;
pub use oracle::{maximize, AngleVector, OracleConfig, OracleOutcome};
pub use qstate::{CorrelationTensor, DensityOperator, ModeKind, ModeLabel, ModeState, XTypeState};
pub use svetlichny::{Branch, LambdaPair, MeasurementSettings, SvetlichnyResult};

/// The quantum maximum `8√2` of the Svetlichny expression.
pub const S_MAX: f64 = 8.0 * std::f64::consts::SQRT_2;

/// Bound obeyed by every hybrid local/bipartite-nonlocal model.
pub const SVETLICHNY_BOUND: f64 = 8.0;

/// Evaluates `S(ρ)` by the fastest exact route available.
///
/// X-type operators (within `tol`) use the closed form; everything else goes
/// through the numerical oracle and carries its certificate.
pub fn evaluate(rho: &DensityOperator, tol: f64, cfg: &OracleConfig) -> Result<SvetlichnyResult> {
    match qstate::classify_xtype(rho, tol) {
        Ok(x) => svetlichny::svetlichny_xtype(&x),
        Err(Error::NotXType(_)) => {
            let outcome = oracle::maximize(rho, cfg)?;
            SvetlichnyResult::numeric(outcome.value, outcome.settings)
        }
        Err(e) => Err(e),
    }
}
