//! Python bindings: pooling designs, posterior inference, pool selection,
//! and the replicated experiment harness.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pooltest::{active, bp, graph, harness, model, oracle};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn bp_config(max_iterations: usize, tolerance: f64, damping: f64) -> PyResult<bp::BpConfig> {
    let config = bp::BpConfig {
        max_iterations,
        tolerance,
        damping,
        ..bp::BpConfig::default()
    };
    if max_iterations == 0 || !(tolerance > 0.0) || !(0.0..1.0).contains(&damping) {
        return Err(value_error("invalid belief-propagation settings"));
    }
    Ok(config)
}

/// A pooling design: which patients make up each pool.
#[pyclass(name = "Design")]
struct PyDesign {
    inner: graph::PoolingDesign,
}

#[pymethods]
impl PyDesign {
    #[new]
    fn new(n_patients: usize, pools: Vec<Vec<usize>>) -> PyResult<Self> {
        Ok(Self {
            inner: graph::PoolingDesign::new(n_patients, pools).map_err(value_error)?,
        })
    }

    /// Draw a design with exact pool size and per-patient membership count.
    #[staticmethod]
    fn random(n_patients: usize, n_pools: usize, pool_size: usize, seed: u64) -> PyResult<Self> {
        let spec = graph::InitialDesignSpec {
            n_patients,
            n_pools,
            pool_size,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: graph::generate_random_design(&spec, &mut rng).map_err(value_error)?,
        })
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::PoolingDesign::from_json(json).map_err(value_error)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Add one pool and return its index.
    fn append_pool(&mut self, pool: Vec<usize>) -> PyResult<usize> {
        self.inner.append_pool(&pool).map_err(value_error)
    }

    #[getter]
    fn n_patients(&self) -> usize {
        self.inner.n_patients()
    }

    #[getter]
    fn n_pools(&self) -> usize {
        self.inner.n_pools()
    }

    fn pools(&self) -> Vec<Vec<usize>> {
        self.inner.pools().to_vec()
    }

    /// Indices of the pools containing the given patient.
    fn pools_of(&self, patient: usize) -> PyResult<Vec<usize>> {
        if patient >= self.inner.n_patients() {
            return Err(value_error("patient index out of range"));
        }
        Ok(self.inner.pools_of(patient).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(n_patients={}, n_pools={})",
            self.inner.n_patients(),
            self.inner.n_pools()
        )
    }
}

/// The test error model: hit and false-alarm probabilities.
#[pyclass(name = "Noise")]
struct PyNoise {
    inner: model::NoiseModel,
}

#[pymethods]
impl PyNoise {
    #[new]
    fn new(p_tp: f64, p_fp: f64) -> PyResult<Self> {
        Ok(Self {
            inner: model::NoiseModel::new(p_tp, p_fp).map_err(value_error)?,
        })
    }

    #[getter]
    fn p_tp(&self) -> f64 {
        self.inner.p_tp()
    }

    #[getter]
    fn p_fp(&self) -> f64 {
        self.inner.p_fp()
    }

    fn __repr__(&self) -> String {
        format!(
            "Noise(p_tp={}, p_fp={})",
            self.inner.p_tp(),
            self.inner.p_fp()
        )
    }
}

/// Marginals and diagnostics from one belief-propagation run.
#[pyclass(name = "Inference")]
struct PyInference {
    #[pyo3(get)]
    marginals: Vec<f64>,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations_used: usize,
}

#[pymethods]
impl PyInference {
    /// Point estimate: marginal above one half.
    fn map(&self) -> Vec<bool> {
        self.marginals.iter().map(|&t| t > 0.5).collect()
    }
}

fn checked_inputs(
    design: &PyDesign,
    outcomes: &[bool],
    rho: f64,
) -> PyResult<model::OutcomeRecord> {
    if outcomes.len() != design.inner.n_pools() {
        return Err(value_error(format!(
            "got {} outcomes for {} pools",
            outcomes.len(),
            design.inner.n_pools()
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(value_error(format!("rho = {rho} outside [0, 1]")));
    }
    Ok(model::OutcomeRecord::new(outcomes.to_vec()))
}

/// Posterior infection marginals by loopy belief propagation.
///
/// `clamped` patients are fixed to the infected state, yielding
/// conditional marginals.
#[pyfunction]
#[pyo3(signature = (design, outcomes, noise, rho, *, max_iterations=1000, tolerance=1e-8, damping=0.0, clamped=None))]
#[allow(clippy::too_many_arguments)]
fn infer(
    design: &PyDesign,
    outcomes: Vec<bool>,
    noise: &PyNoise,
    rho: f64,
    max_iterations: usize,
    tolerance: f64,
    damping: f64,
    clamped: Option<Vec<usize>>,
) -> PyResult<PyInference> {
    let record = checked_inputs(design, &outcomes, rho)?;
    let config = bp_config(max_iterations, tolerance, damping)?;
    let clamped = clamped.unwrap_or_default();
    if clamped.iter().any(|&i| i >= design.inner.n_patients()) {
        return Err(value_error("clamped patient index out of range"));
    }
    let state = bp::run_bp(
        &design.inner,
        &record,
        &noise.inner,
        rho,
        &config,
        &bp::ClampSet::new(clamped),
    );
    Ok(PyInference {
        marginals: state.marginals,
        converged: state.converged,
        iterations_used: state.iterations_used,
    })
}

/// Posterior infection marginals by exhaustive enumeration.
#[pyfunction]
fn exact_marginals(
    design: &PyDesign,
    outcomes: Vec<bool>,
    noise: &PyNoise,
    rho: f64,
) -> PyResult<Vec<f64>> {
    let record = checked_inputs(design, &outcomes, rho)?;
    let posterior =
        oracle::exact_posterior(&design.inner, &record, &noise.inner, rho).map_err(value_error)?;
    Ok(posterior.marginals)
}

/// Posterior marginals plus the full pairwise-susceptibility matrix,
/// estimated by one clamped belief-propagation run per patient.
///
/// Returns `(marginals, chi, convergence_failures)` with `chi` as a
/// symmetric square matrix whose diagonal is zero.
#[pyfunction]
#[pyo3(signature = (design, outcomes, noise, rho, *, max_iterations=1000, tolerance=1e-8, damping=0.0))]
fn susceptibility(
    design: &PyDesign,
    outcomes: Vec<bool>,
    noise: &PyNoise,
    rho: f64,
    max_iterations: usize,
    tolerance: f64,
    damping: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let record = checked_inputs(design, &outcomes, rho)?;
    let config = bp_config(max_iterations, tolerance, damping)?;
    let matrix = bp::susceptibility_matrix(&design.inner, &record, &noise.inner, rho, &config);
    let n = matrix.n_patients();
    let square: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { matrix.chi(i, j) })
                .collect()
        })
        .collect();
    Ok((matrix.marginals, square, matrix.convergence_failures))
}

/// The all-negative probability at which the next test outcome is
/// uniformly distributed.
#[pyfunction]
fn q_star(noise: &PyNoise) -> f64 {
    active::q_star(&noise.inner)
}

/// Entropy of the predicted outcome of a pool whose members are all
/// uninfected with probability `q`.
#[pyfunction]
fn predictive_entropy(q: f64, noise: &PyNoise) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(value_error(format!("q = {q} outside [0, 1]")));
    }
    Ok(active::predictive_entropy(q, &noise.inner))
}

fn pool_space(pairs: bool, exclude: Vec<Vec<usize>>) -> active::PoolSpace {
    let mut space = if pairs {
        active::PoolSpace::up_to_pairs()
    } else {
        active::PoolSpace::singletons()
    };
    for pool in &exclude {
        space.exclude(pool);
    }
    space
}

/// The entropy-maximizing next pool under the product approximation of
/// the all-negative probability.
#[pyfunction]
#[pyo3(signature = (marginals, noise, *, pairs=true, exclude=vec![]))]
fn select_pool(
    marginals: Vec<f64>,
    noise: &PyNoise,
    pairs: bool,
    exclude: Vec<Vec<usize>>,
) -> PyResult<Vec<usize>> {
    if marginals.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(value_error("marginals must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    active::select_next_pool(
        &marginals,
        &pool_space(pairs, exclude),
        &noise.inner,
        &active::SelectionPolicy::default(),
        None,
        &mut rng,
    )
    .map_err(value_error)
}

/// The entropy-maximizing next pool with pair scores corrected by the
/// belief-propagation susceptibility.
#[pyfunction]
#[pyo3(signature = (design, outcomes, noise, rho, *, exclude=vec![], max_iterations=1000, tolerance=1e-8, damping=0.0))]
#[allow(clippy::too_many_arguments)]
fn select_pool_corrected(
    design: &PyDesign,
    outcomes: Vec<bool>,
    noise: &PyNoise,
    rho: f64,
    exclude: Vec<Vec<usize>>,
    max_iterations: usize,
    tolerance: f64,
    damping: f64,
) -> PyResult<Vec<usize>> {
    let record = checked_inputs(design, &outcomes, rho)?;
    let config = bp_config(max_iterations, tolerance, damping)?;
    let matrix = bp::susceptibility_matrix(&design.inner, &record, &noise.inner, rho, &config);
    let policy = active::SelectionPolicy {
        use_susceptibility: true,
        ..active::SelectionPolicy::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    active::select_next_pool(
        &matrix.marginals,
        &pool_space(true, exclude),
        &noise.inner,
        &policy,
        Some(&matrix),
        &mut rng,
    )
    .map_err(value_error)
}

/// Run a replicated experiment from a JSON configuration and return the
/// aggregated report as JSON, matching the command-line `trial` output.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<String> {
    let config: harness::ExperimentConfig = serde_json::from_str(config_json)
        .map_err(|e| value_error(format!("parsing config: {e}")))?;
    let result = harness::run_replicated(&config).map_err(value_error)?;
    let report = serde_json::json!({ "config": config, "result": result });
    serde_json::to_string_pretty(&report).map_err(value_error)
}

#[pymodule]
fn pooltest_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesign>()?;
    m.add_class::<PyNoise>()?;
    m.add_class::<PyInference>()?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(exact_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(susceptibility, m)?)?;
    m.add_function(wrap_pyfunction!(q_star, m)?)?;
    m.add_function(wrap_pyfunction!(predictive_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(select_pool, m)?)?;
    m.add_function(wrap_pyfunction!(select_pool_corrected, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
