//! Exact posterior quantities by exhaustive enumeration over all 2^N
//! infection states.
//!
//! Feasible only for small populations, but exact: the results serve as
//! ground truth for validating the message-passing approximations and the
//! pool-selection quantities built on them. State weights are accumulated
//! in the log domain and exponentiated against the running maximum, so the
//! enumeration stays stable even when many tests drive individual
//! likelihoods toward zero.

use crate::error::{Error, Result};
use crate::graph::PoolingDesign;
use crate::model::{outcome_likelihood, NoiseModel, OutcomeRecord};
use crate::pairs::{n_pairs, pair_index};

/// Largest population for which exhaustive enumeration is permitted.
pub const ENUMERATION_CAP: usize = 22;

/// Exact posterior summaries from full enumeration.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// Per-patient posterior infection probability.
    pub marginals: Vec<f64>,
    /// Posterior probability that both members of each unordered pair are
    /// infected, in [`pair_index`] order.
    pub pair_expectations: Vec<f64>,
    /// Total unnormalized posterior mass (relative to the peak state).
    pub normalizer: f64,
}

impl ExactPosterior {
    /// The posterior covariance of the pair `(i, j)`.
    pub fn susceptibility(&self, i: usize, j: usize) -> f64 {
        let n = self.marginals.len();
        self.pair_expectations[pair_index(i, j, n)] - self.marginals[i] * self.marginals[j]
    }
}

/// Walk every state in {0,1}^N, handing each state's bitmask and
/// log-weight to `visit`. Returns the maximum log-weight seen.
fn enumerate_log_weights(
    design: &PoolingDesign,
    outcomes: &OutcomeRecord,
    noise: &NoiseModel,
    rho: f64,
    mut visit: impl FnMut(u32, f64),
) -> Result<f64> {
    let n = design.n_patients();
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            n_patients: n,
            cap: ENUMERATION_CAP,
        });
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidProbability {
            name: "rho",
            value: rho,
        });
    }
    if outcomes.len() != design.n_pools() {
        return Err(Error::InvalidConfig {
            reason: format!("{} outcomes for {} pools", outcomes.len(), design.n_pools()),
        });
    }

    let pool_masks: Vec<u32> = design
        .pools()
        .iter()
        .map(|pool| pool.iter().fold(0u32, |m, &i| m | (1 << i)))
        .collect();
    // Per pool, the log-likelihood of its observed outcome under each
    // truth value.
    let log_lik: Vec<[f64; 2]> = outcomes
        .outcomes
        .iter()
        .map(|&y| {
            [
                outcome_likelihood(y, false, noise).ln(),
                outcome_likelihood(y, true, noise).ln(),
            ]
        })
        .collect();
    let log_prior = [(1.0 - rho).ln(), rho.ln()];

    let mut max_log = f64::NEG_INFINITY;
    for state in 0u32..(1u32 << n) {
        let mut log_w = state.count_ones() as f64 * log_prior[1]
            + (n as u32 - state.count_ones()) as f64 * log_prior[0];
        for (mask, ll) in pool_masks.iter().zip(&log_lik) {
            log_w += ll[usize::from(state & mask != 0)];
        }
        if log_w > max_log {
            max_log = log_w;
        }
        visit(state, log_w);
    }
    Ok(max_log)
}

/// Compute the exact posterior marginals and pair expectations given the
/// observed outcomes.
///
/// Errors if the population exceeds [`ENUMERATION_CAP`] or if every state
/// has zero posterior mass (possible only with a degenerate prior).
pub fn exact_posterior(
    design: &PoolingDesign,
    outcomes: &OutcomeRecord,
    noise: &NoiseModel,
    rho: f64,
) -> Result<ExactPosterior> {
    let n = design.n_patients();
    let mut states: Vec<(u32, f64)> = Vec::with_capacity(1 << n);
    let max_log = enumerate_log_weights(design, outcomes, noise, rho, |state, log_w| {
        states.push((state, log_w));
    })?;
    if !max_log.is_finite() {
        return Err(Error::DegeneratePosterior);
    }

    let mut total = 0.0;
    let mut marginals = vec![0.0; n];
    let mut pair_expectations = vec![0.0; n_pairs(n)];
    for &(state, log_w) in &states {
        let w = (log_w - max_log).exp();
        total += w;
        let mut rest = state;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            marginals[i] += w;
            let mut higher = rest;
            while higher != 0 {
                let j = higher.trailing_zeros() as usize;
                higher &= higher - 1;
                pair_expectations[pair_index(i, j, n)] += w;
            }
        }
    }
    if !(total > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    for m in &mut marginals {
        *m /= total;
    }
    for e in &mut pair_expectations {
        *e /= total;
    }
    Ok(ExactPosterior {
        marginals,
        pair_expectations,
        normalizer: total,
    })
}

/// The exact posterior probability that every patient in `pool` is
/// uninfected.
pub fn exact_pool_negative_prob(
    design: &PoolingDesign,
    outcomes: &OutcomeRecord,
    noise: &NoiseModel,
    rho: f64,
    pool: &[usize],
) -> Result<f64> {
    for &i in pool {
        if i >= design.n_patients() {
            return Err(Error::PatientIndexOutOfRange {
                index: i,
                n_patients: design.n_patients(),
            });
        }
    }
    let target: u32 = pool.iter().fold(0u32, |m, &i| m | (1 << i));
    let mut weights: Vec<(bool, f64)> = Vec::with_capacity(1 << design.n_patients());
    let max_log = enumerate_log_weights(design, outcomes, noise, rho, |state, log_w| {
        weights.push((state & target == 0, log_w));
    })?;
    if !max_log.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let mut total = 0.0;
    let mut negative = 0.0;
    for &(all_clear, log_w) in &weights {
        let w = (log_w - max_log).exp();
        total += w;
        if all_clear {
            negative += w;
        }
    }
    if !(total > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    Ok(negative / total)
}

/// Mean squared deviation between two pairwise quantities over all
/// unordered pairs of `n` patients.
///
/// Both slices use [`pair_index`] order and must cover all `n(n-1)/2`
/// pairs.
pub fn epsilon_metric(chi_exact: &[f64], chi_approx: &[f64], n: usize) -> f64 {
    let m = n_pairs(n);
    assert_eq!(chi_exact.len(), m, "expected {m} pair entries");
    assert_eq!(chi_approx.len(), m, "expected {m} pair entries");
    let sum: f64 = chi_exact
        .iter()
        .zip(chi_approx)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    sum / m as f64
}
