//! Error types shared across the crate.

use thiserror::Error;

/// Convenience alias for results produced by this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by design construction, inference, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A pool references a patient index outside `[0, n_patients)`.
    #[error("patient index {index} out of range for {n_patients} patients")]
    PatientIndexOutOfRange { index: usize, n_patients: usize },

    /// A pool is empty or contains a repeated patient index.
    #[error("invalid pool: {reason}")]
    InvalidPool { reason: String },

    /// The requested design parameters admit no valid configuration.
    #[error("infeasible design: {reason}")]
    InfeasibleDesign { reason: String },

    /// Noise parameters outside the assumed region `0 <= p_fp < 0.5 <= p_tp <= 1`.
    #[error("invalid noise model: p_tp={p_tp}, p_fp={p_fp} (need 0 <= p_fp < 0.5 <= p_tp <= 1)")]
    InvalidNoiseModel { p_tp: f64, p_fp: f64 },

    /// A probability parameter outside `[0, 1]`.
    #[error("invalid probability {value} for {name}")]
    InvalidProbability { name: &'static str, value: f64 },

    /// Exhaustive enumeration requested above the size cap.
    #[error("exact enumeration over {n_patients} patients exceeds the cap of {cap}")]
    EnumerationTooLarge { n_patients: usize, cap: usize },

    /// The posterior weights sum to zero (contradictory inputs).
    #[error("degenerate posterior: all configurations have zero probability")]
    DegeneratePosterior,

    /// Every candidate pool was excluded from selection.
    #[error("no eligible candidate pools remain after exclusions")]
    NoEligiblePools,

    /// An experiment configuration failed validation.
    #[error("invalid experiment config: {reason}")]
    InvalidConfig { reason: String },
}
