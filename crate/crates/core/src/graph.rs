//! Pooling designs: the patient-pool incidence structure.
//!
//! A design is the 0/1 matrix whose rows are pools and whose columns are
//! patients, stored as a bipartite adjacency so that both directions are
//! cheap to query: the patients in a pool, and the pools containing a
//! patient. Initial-stage designs are random under two degree constraints:
//! every pool contains exactly `pool_size` patients and every patient
//! appears in exactly `patient_degree` pools.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of repair swap attempts per pool before the constrained
/// generator declares the configuration infeasible.
const REPAIR_SWAPS_PER_POOL: usize = 100;

/// An ordered list of pools over a fixed patient population.
///
/// Each pool is a non-empty set of distinct patient indices, stored sorted.
/// Pool identity (for duplicate checks and exclusion sets) is the sorted
/// index set. The design grows only by appending pools; existing pools are
/// never modified, so shared read-only access across replicates is safe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DesignRepr", into = "DesignRepr")]
pub struct PoolingDesign {
    n_patients: usize,
    pools: Vec<Vec<usize>>,
    /// For each patient, the indices of the pools containing it, ascending.
    patient_pools: Vec<Vec<usize>>,
}

/// Wire representation: `{"n_patients": int, "pools": [[int, ...], ...]}`.
#[derive(Serialize, Deserialize)]
struct DesignRepr {
    n_patients: usize,
    pools: Vec<Vec<usize>>,
}

impl TryFrom<DesignRepr> for PoolingDesign {
    type Error = Error;

    fn try_from(repr: DesignRepr) -> Result<Self> {
        PoolingDesign::new(repr.n_patients, repr.pools)
    }
}

impl From<PoolingDesign> for DesignRepr {
    fn from(design: PoolingDesign) -> Self {
        DesignRepr {
            n_patients: design.n_patients,
            pools: design.pools,
        }
    }
}

impl PoolingDesign {
    /// Create a design from explicit pools, validating every pool.
    pub fn new(n_patients: usize, pools: Vec<Vec<usize>>) -> Result<Self> {
        let mut design = Self::empty(n_patients);
        for pool in pools {
            design.append_pool(&pool)?;
        }
        Ok(design)
    }

    /// A design with no pools yet.
    pub fn empty(n_patients: usize) -> Self {
        Self {
            n_patients,
            pools: Vec::new(),
            patient_pools: vec![Vec::new(); n_patients],
        }
    }

    pub fn n_patients(&self) -> usize {
        self.n_patients
    }

    pub fn n_pools(&self) -> usize {
        self.pools.len()
    }

    /// The patients in pool `mu`, sorted ascending.
    pub fn pool(&self, mu: usize) -> &[usize] {
        &self.pools[mu]
    }

    /// All pools in test order.
    pub fn pools(&self) -> &[Vec<usize>] {
        &self.pools
    }

    /// The pools containing patient `i`, ascending.
    pub fn pools_of(&self, i: usize) -> &[usize] {
        &self.patient_pools[i]
    }

    /// Total number of patient-pool incidences.
    pub fn n_edges(&self) -> usize {
        self.pools.iter().map(|p| p.len()).sum()
    }

    /// Append a pool, updating both adjacency directions.
    ///
    /// The pool must be non-empty, contain no repeated index, and reference
    /// only valid patients. Appending a pool identical to an existing one is
    /// allowed here; exclusion of duplicates is the selector's concern.
    /// Returns the index of the new pool.
    pub fn append_pool(&mut self, pool: &[usize]) -> Result<usize> {
        if pool.is_empty() {
            return Err(Error::InvalidPool {
                reason: "pool is empty".into(),
            });
        }
        let mut members = pool.to_vec();
        members.sort_unstable();
        for &i in &members {
            if i >= self.n_patients {
                return Err(Error::PatientIndexOutOfRange {
                    index: i,
                    n_patients: self.n_patients,
                });
            }
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPool {
                reason: format!("duplicate patient index in pool {members:?}"),
            });
        }
        let mu = self.pools.len();
        for &i in &members {
            self.patient_pools[i].push(mu);
        }
        self.pools.push(members);
        Ok(mu)
    }

    /// Serialize to the JSON wire format.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("design serialization cannot fail")
    }

    /// Parse and validate a design from the JSON wire format.
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidPool {
            reason: format!("malformed design JSON: {e}"),
        })
    }
}

/// Parameters of the doubly-constrained random initial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitialDesignSpec {
    pub n_patients: usize,
    pub n_pools: usize,
    pub pool_size: usize,
}

impl InitialDesignSpec {
    /// The number of pools each patient joins, `pool_size * n_pools / n_patients`.
    ///
    /// Rejects parameter sets where this is not a positive integer: the
    /// degree identity is exact, and rounding would silently break the
    /// row/column-sum invariants.
    pub fn patient_degree(&self) -> Result<usize> {
        if self.n_patients == 0 || self.n_pools == 0 || self.pool_size == 0 {
            return Err(Error::InfeasibleDesign {
                reason: "n_patients, n_pools, and pool_size must all be positive".into(),
            });
        }
        let incidences = self.pool_size * self.n_pools;
        if incidences % self.n_patients != 0 {
            return Err(Error::InfeasibleDesign {
                reason: format!(
                    "patient degree {}*{}/{} is not an integer",
                    self.pool_size, self.n_pools, self.n_patients
                ),
            });
        }
        Ok(incidences / self.n_patients)
    }
}

/// Generate a random design where every pool has exactly `pool_size`
/// patients and every patient appears in exactly `patient_degree` pools.
///
/// Uses configuration-model pairing: one stub per patient-slot, shuffled and
/// dealt into pools, followed by random stub swaps to repair pools that drew
/// the same patient twice. Sampling is approximately uniform over valid
/// incidence matrices; exact uniformity is not claimed. The same seed always
/// produces the same design.
pub fn generate_random_design(
    spec: &InitialDesignSpec,
    rng: &mut impl Rng,
) -> Result<PoolingDesign> {
    let degree = spec.patient_degree()?;
    if spec.pool_size > spec.n_patients {
        return Err(Error::InfeasibleDesign {
            reason: format!(
                "pool size {} exceeds population {}",
                spec.pool_size, spec.n_patients
            ),
        });
    }

    // Stub list: patient i appears `degree` times; pool mu owns the slots
    // [mu * pool_size, (mu + 1) * pool_size).
    let mut stubs: Vec<usize> = (0..spec.n_patients)
        .flat_map(|i| std::iter::repeat(i).take(degree))
        .collect();
    debug_assert_eq!(stubs.len(), spec.n_pools * spec.pool_size);
    stubs.shuffle(rng);

    let pool_of = |slot: usize| slot / spec.pool_size;
    let mut budget = REPAIR_SWAPS_PER_POOL * spec.n_pools;
    loop {
        let collisions = collision_slots(&stubs, spec.n_pools, spec.pool_size);
        if collisions.is_empty() {
            break;
        }
        for &slot in &collisions {
            if budget == 0 {
                return Err(Error::InfeasibleDesign {
                    reason: format!(
                        "could not resolve duplicate patients within {} repair swaps",
                        REPAIR_SWAPS_PER_POOL * spec.n_pools
                    ),
                });
            }
            budget -= 1;
            let other = rng.gen_range(0..stubs.len());
            if pool_of(other) == pool_of(slot) {
                continue;
            }
            // Accept the swap only if it removes this collision without
            // creating one in either pool.
            let (a, b) = (stubs[slot], stubs[other]);
            if a == b {
                continue;
            }
            let src = pool_slice(&stubs, pool_of(slot), spec.pool_size);
            let dst = pool_slice(&stubs, pool_of(other), spec.pool_size);
            if src.contains(&b) || dst.contains(&a) {
                continue;
            }
            stubs[slot] = b;
            stubs[other] = a;
        }
    }

    let pools: Vec<Vec<usize>> = stubs
        .chunks(spec.pool_size)
        .map(<[usize]>::to_vec)
        .collect();
    PoolingDesign::new(spec.n_patients, pools)
}

fn pool_slice(stubs: &[usize], mu: usize, pool_size: usize) -> &[usize] {
    &stubs[mu * pool_size..(mu + 1) * pool_size]
}

/// Slots whose patient already occurs earlier in the same pool.
fn collision_slots(stubs: &[usize], n_pools: usize, pool_size: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for mu in 0..n_pools {
        let pool = pool_slice(stubs, mu, pool_size);
        for (k, &patient) in pool.iter().enumerate() {
            if pool[..k].contains(&patient) {
                out.push(mu * pool_size + k);
            }
        }
    }
    out
}

/// The noiseless state of a pool: `true` iff any member of `pool` is
/// infected in `states`.
///
/// # Panics
///
/// Panics if any pool index is out of range for `states`.
pub fn pool_truth(states: &[bool], pool: &[usize]) -> bool {
    pool.iter().any(|&i| states[i])
}
