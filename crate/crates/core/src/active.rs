//! Active pool selection: choose the next pool whose outcome is most
//! informative.
//!
//! For a candidate pool the posterior probability `q` that all its members
//! are uninfected determines the predictive outcome distribution, and the
//! outcome entropy is maximal when `q` hits the noise-dependent target
//! `q*`. Selection therefore reduces to an argmin of `|q - q*|` over the
//! candidate space: all singletons, or all pools of size at most two. For
//! pairs, `q` is either the one-body product of posterior negatives or the
//! susceptibility-corrected value.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bp::SusceptibilityMatrix;
use crate::error::{Error, Result};
use crate::model::NoiseModel;

/// Candidate pool families for the adaptive stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolSpaceKind {
    /// Every single-patient pool.
    Singletons,
    /// Every pool of size one or two.
    UpToPairs,
}

/// The candidate set for one selection: a pool family minus explicit
/// exclusions.
///
/// Exclusions are compared as sorted member sets, so `[2, 5]` and `[5, 2]`
/// name the same pool.
#[derive(Debug, Clone)]
pub struct PoolSpace {
    pub kind: PoolSpaceKind,
    exclusions: HashSet<Vec<usize>>,
}

impl PoolSpace {
    pub fn new(kind: PoolSpaceKind) -> Self {
        Self {
            kind,
            exclusions: HashSet::new(),
        }
    }

    pub fn singletons() -> Self {
        Self::new(PoolSpaceKind::Singletons)
    }

    pub fn up_to_pairs() -> Self {
        Self::new(PoolSpaceKind::UpToPairs)
    }

    /// Remove one pool from the candidate set.
    pub fn exclude(&mut self, pool: &[usize]) {
        let mut key = pool.to_vec();
        key.sort_unstable();
        self.exclusions.insert(key);
    }

    pub fn is_excluded(&self, sorted_pool: &[usize]) -> bool {
        self.exclusions.contains(sorted_pool)
    }

    pub fn n_exclusions(&self) -> usize {
        self.exclusions.len()
    }
}

/// How ties in the selection argmin are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Smallest pool in lexicographic member order.
    #[default]
    Lexicographic,
    /// Uniformly at random among the tied pools, driven by the
    /// experiment's random stream.
    Random,
}

/// Knobs of the selection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionPolicy {
    /// Score size-2 pools with the susceptibility-corrected `q` instead of
    /// the one-body product.
    pub use_susceptibility: bool,
    /// Exclude pools that have already been tested from the candidates.
    pub exclude_tested: bool,
    pub tie_break: TieBreak,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            use_susceptibility: false,
            exclude_tested: true,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

/// The all-uninfected probability at which a pool's outcome entropy is
/// maximal: `(p_tp - 0.5) / (p_tp - p_fp)`.
pub fn q_star(noise: &NoiseModel) -> f64 {
    (noise.p_tp() - 0.5) / (noise.p_tp() - noise.p_fp())
}

/// One-body approximation of the probability that every pool member is
/// uninfected: the product of `1 - marginal` over members.
pub fn onebody_pool_negative_prob(marginals: &[f64], pool: &[usize]) -> f64 {
    assert!(!pool.is_empty(), "pool must be non-empty");
    pool.iter().map(|&i| 1.0 - marginals[i]).product()
}

/// Susceptibility-corrected all-uninfected probability for the pair
/// `(i, j)`: `chi_ij + (1 - theta_i)(1 - theta_j)`.
///
/// Approximation error can push the raw value outside [0, 1]; the result
/// is clipped and the second component reports whether clipping occurred.
pub fn chi_corrected_pool_negative_prob(
    marginals: &[f64],
    chi_ij: f64,
    i: usize,
    j: usize,
) -> (f64, bool) {
    assert_ne!(i, j, "pair must consist of two distinct patients");
    let raw = chi_ij + (1.0 - marginals[i]) * (1.0 - marginals[j]);
    let clipped = raw.clamp(0.0, 1.0);
    (clipped, clipped != raw)
}

/// The predictive probability that a test on a pool with all-uninfected
/// probability `q` comes back positive.
pub fn predictive_probability(q: f64, noise: &NoiseModel) -> f64 {
    noise.p_tp() * (1.0 - q) + noise.p_fp() * q
}

/// Entropy (natural log) of the predictive outcome distribution.
pub fn predictive_entropy(q: f64, noise: &NoiseModel) -> f64 {
    binary_entropy(predictive_probability(q, noise))
}

fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Pick the eligible candidate pool minimizing `|q(pool) - q*|`.
///
/// Candidates are scanned in a fixed order (singletons ascending, then
/// pairs in lexicographic order), so the result is deterministic for a
/// given stream state. `chi` must be provided when
/// `policy.use_susceptibility` is set; it is ignored otherwise.
///
/// Errors when every candidate is excluded, or when the susceptibility
/// correction is requested without a susceptibility source.
pub fn select_next_pool(
    marginals: &[f64],
    space: &PoolSpace,
    noise: &NoiseModel,
    policy: &SelectionPolicy,
    chi: Option<&SusceptibilityMatrix>,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let n = marginals.len();
    if policy.use_susceptibility && space.kind == PoolSpaceKind::UpToPairs && chi.is_none() {
        return Err(Error::InvalidConfig {
            reason: "susceptibility-corrected selection requires a susceptibility source".into(),
        });
    }
    let target = q_star(noise);

    // Exclusion lookups are deferred until a candidate would enter the
    // running optimum, keeping the scan over O(N^2) pairs allocation-free.
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut n_tied = 0usize;
    let mut consider = |distance: f64, candidate: &[usize], rng: &mut dyn rand::RngCore| {
        let improves = match &best {
            None => true,
            Some((best_distance, _)) => distance < *best_distance,
        };
        let ties = matches!(&best, Some((best_distance, _)) if distance == *best_distance);
        if !(improves || ties) {
            return;
        }
        if space.is_excluded(candidate) {
            return;
        }
        if improves {
            best = Some((distance, candidate.to_vec()));
            n_tied = 1;
        } else {
            n_tied += 1;
            match policy.tie_break {
                TieBreak::Lexicographic => {
                    let (_, incumbent) = best.as_ref().unwrap();
                    if candidate < &incumbent[..] {
                        best = Some((distance, candidate.to_vec()));
                    }
                }
                TieBreak::Random => {
                    if rng.gen_range(0..n_tied) == 0 {
                        best = Some((distance, candidate.to_vec()));
                    }
                }
            }
        }
    };

    for i in 0..n {
        let q = 1.0 - marginals[i];
        consider((q - target).abs(), &[i], rng);
    }
    if space.kind == PoolSpaceKind::UpToPairs {
        for i in 0..n {
            let neg_i = 1.0 - marginals[i];
            for j in i + 1..n {
                let q = if policy.use_susceptibility {
                    let chi_ij = chi.unwrap().chi(i, j);
                    chi_corrected_pool_negative_prob(marginals, chi_ij, i, j).0
                } else {
                    neg_i * (1.0 - marginals[j])
                };
                consider((q - target).abs(), &[i, j], rng);
            }
        }
    }

    match best {
        Some((_, pool)) => Ok(pool),
        None => Err(Error::NoEligiblePools),
    }
}
