//! Grid config files: experiment configs whose fields may be arrays,
//! expanded into the Cartesian product of all choices.

use anyhow::{Context, Result};
use pooltest::active::SelectionPolicy;
use pooltest::bp::BpConfig;
use pooltest::harness::{ExperimentConfig, Strategy};
use pooltest::model::NoiseModel;
use serde::Deserialize;

/// A scalar or a list of alternatives for one field.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

/// Noise rates, each independently sweepable.
#[derive(Debug, Deserialize)]
pub struct NoiseGrid {
    pub p_tp: OneOrMany<f64>,
    pub p_fp: OneOrMany<f64>,
}

/// The sweep config file: the same keys as a single experiment config,
/// with arrays allowed everywhere except the BP schedule and the
/// selection policy, which apply to all grid points.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub n_patients: OneOrMany<usize>,
    pub m_initial: OneOrMany<usize>,
    pub m_adaptive: OneOrMany<usize>,
    pub pool_size_initial: OneOrMany<usize>,
    pub rho: OneOrMany<f64>,
    pub noise: NoiseGrid,
    pub strategy: OneOrMany<Strategy>,
    #[serde(default)]
    pub bp: BpConfig,
    #[serde(default)]
    pub policy: SelectionPolicy,
    pub replications: OneOrMany<usize>,
    pub seed: OneOrMany<u64>,
}

impl GridFile {
    /// Expand into configs, iterating fields in a fixed order (strategy
    /// slowest; then N, M_ini, M_ada, N_G, rho, p_tp, p_fp, replications;
    /// seed fastest), so row order is reproducible.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::new();
        for strategy in self.strategy.values() {
            for n_patients in self.n_patients.values() {
                for m_initial in self.m_initial.values() {
                    for m_adaptive in self.m_adaptive.values() {
                        for pool_size_initial in self.pool_size_initial.values() {
                            for rho in self.rho.values() {
                                for p_tp in self.noise.p_tp.values() {
                                    for p_fp in self.noise.p_fp.values() {
                                        let noise =
                                            NoiseModel::new(p_tp, p_fp).with_context(|| {
                                                format!(
                                                    "invalid noise point p_tp={p_tp}, p_fp={p_fp}"
                                                )
                                            })?;
                                        for replications in self.replications.values() {
                                            for seed in self.seed.values() {
                                                out.push(ExperimentConfig {
                                                    n_patients,
                                                    m_initial,
                                                    m_adaptive,
                                                    pool_size_initial,
                                                    rho,
                                                    noise,
                                                    strategy,
                                                    bp: self.bp,
                                                    policy: self.policy,
                                                    replications,
                                                    seed,
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        anyhow::ensure!(!out.is_empty(), "grid expands to zero configs");
        Ok(out)
    }
}
