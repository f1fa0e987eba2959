//! Bayesian group testing with noisy outcomes and active pool design.
//!
//! Infected patients are identified from tests performed on pools of
//! specimens rather than on individuals. Each pool's true state is the
//! logical OR of its members' infection states, observed through a noisy
//! channel with true-positive rate `p_tp` and false-positive rate `p_fp`.
//! Posterior infection probabilities are inferred by loopy belief
//! propagation on the patient-pool bipartite graph, and subsequent pools
//! are chosen adaptively so that the predicted outcome of the next test is
//! maximally uncertain.
//!
//! The crate is organized around the experiment pipeline:
//!
//! - [`graph`] — pooling designs (the bipartite incidence structure) and
//!   constrained random generation for the initial testing stage.
//! - [`model`] — ground-truth generation and the Bernoulli test channel.
//! - [`bp`] — belief propagation for marginal infection probabilities,
//!   plus clamped runs for conditional marginals and susceptibilities.
//! - [`oracle`] — exact posterior quantities by exhaustive enumeration,
//!   used to validate the approximate inference at small sizes.
//! - [`active`] — the predictive-entropy selection criterion and the
//!   candidate pool spaces.
//! - [`harness`] — end-to-end adaptive trials, replication, aggregation,
//!   and CSV/JSON emission.

pub mod active;
pub mod bp;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod pairs;

pub use error::{Error, Result};
