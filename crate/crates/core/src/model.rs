//! The generative model: ground-truth infection states and the noisy
//! test channel.
//!
//! A test reports positive with probability `p_tp` when its pool truly
//! contains an infected patient and with probability `p_fp` when it does
//! not. Test errors are independent across pools, so an outcome vector is
//! a product of per-pool Bernoulli draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{pool_truth, PoolingDesign};

/// Per-test error rates of the testing device.
///
/// The regime `p_fp < 0.5 <= p_tp` is assumed throughout: a test must be
/// more likely to fire on an infected pool than on a clean one, and better
/// than a coin flip on infected pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRepr", into = "NoiseRepr")]
pub struct NoiseModel {
    p_tp: f64,
    p_fp: f64,
}

#[derive(Serialize, Deserialize)]
struct NoiseRepr {
    p_tp: f64,
    p_fp: f64,
}

impl TryFrom<NoiseRepr> for NoiseModel {
    type Error = Error;

    fn try_from(repr: NoiseRepr) -> Result<Self> {
        NoiseModel::new(repr.p_tp, repr.p_fp)
    }
}

impl From<NoiseModel> for NoiseRepr {
    fn from(noise: NoiseModel) -> Self {
        NoiseRepr {
            p_tp: noise.p_tp,
            p_fp: noise.p_fp,
        }
    }
}

impl NoiseModel {
    /// Validate and construct. Requires `0 <= p_fp < 0.5 <= p_tp <= 1`.
    pub fn new(p_tp: f64, p_fp: f64) -> Result<Self> {
        let ok = (0.0..0.5).contains(&p_fp) && (0.5..=1.0).contains(&p_tp);
        if !ok {
            return Err(Error::InvalidNoiseModel { p_tp, p_fp });
        }
        Ok(Self { p_tp, p_fp })
    }

    /// Probability a test on a truly infected pool reports positive.
    pub fn p_tp(&self) -> f64 {
        self.p_tp
    }

    /// Probability a test on a clean pool reports positive.
    pub fn p_fp(&self) -> f64 {
        self.p_fp
    }
}

/// The hidden infection states the experiment tries to recover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    states: Vec<bool>,
}

impl GroundTruth {
    /// Wrap explicit per-patient states.
    pub fn from_states(states: Vec<bool>) -> Self {
        Self { states }
    }

    pub fn states(&self) -> &[bool] {
        &self.states
    }

    pub fn n_patients(&self) -> usize {
        self.states.len()
    }

    pub fn n_infected(&self) -> usize {
        self.states.iter().filter(|&&x| x).count()
    }
}

/// Draw a ground truth with exactly `round(n * rho)` infected patients,
/// chosen uniformly without replacement.
///
/// The infected count is pinned rather than binomial so that every
/// replicate of an experiment faces the same prevalence.
pub fn generate_ground_truth(n: usize, rho: f64, rng: &mut impl Rng) -> GroundTruth {
    let n_infected = (n as f64 * rho).round() as usize;
    let mut states = vec![false; n];
    for i in rand::seq::index::sample(rng, n, n_infected.min(n)) {
        states[i] = true;
    }
    GroundTruth::from_states(states)
}

/// Outcomes of the tests performed so far, aligned one-to-one with the
/// pools of a growing [`PoolingDesign`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub outcomes: Vec<bool>,
}

impl OutcomeRecord {
    pub fn new(outcomes: Vec<bool>) -> Self {
        Self { outcomes }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn push(&mut self, y: bool) {
        self.outcomes.push(y);
    }
}

/// `P(Y = y | T = t)` for a single test under `noise`.
pub fn outcome_likelihood(y: bool, t: bool, noise: &NoiseModel) -> f64 {
    let p_positive = if t { noise.p_tp() } else { noise.p_fp() };
    if y {
        p_positive
    } else {
        1.0 - p_positive
    }
}

/// Sample one noisy test outcome for `pool` given the hidden states.
pub fn sample_test_outcome(
    truth: &GroundTruth,
    pool: &[usize],
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> bool {
    let t = pool_truth(truth.states(), pool);
    rng.gen_bool(outcome_likelihood(true, t, noise))
}

/// Sample one independent outcome per pool of `design`, in pool order.
pub fn sample_outcome_vector(
    truth: &GroundTruth,
    design: &PoolingDesign,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> OutcomeRecord {
    let outcomes = design
        .pools()
        .iter()
        .map(|pool| sample_test_outcome(truth, pool, noise, rng))
        .collect();
    OutcomeRecord::new(outcomes)
}
