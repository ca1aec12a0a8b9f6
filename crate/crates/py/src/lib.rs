//! Python bindings: descriptors, both memories, GMM fitting, diagnostics,
//! the synthetic stream and the paired simulation.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mcm_core::descriptors::{Descriptor, DescriptorKind, Image};
use mcm_core::diagnostics;
use mcm_core::gmm::{self, FitConfig, GmmModel};
use mcm_core::harness::{simulate_paired, ExperimentConfig, Variant};
use mcm_core::memory::{self as core_memory, InsertOutcome, MemoryParams, MemorySample, SampleMemory, ScmParams};
use mcm_core::stream::{PttaStream, StreamConfig};

fn err(e: mcm_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = mcm_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// `(kind, cluster, evicted id)` with kind one of `assigned`, `replaced`, `spawned`.
type Outcome = (&'static str, usize, Option<u64>);

fn outcome(o: InsertOutcome) -> Outcome {
    match o {
        InsertOutcome::Assigned { cluster } => ("assigned", cluster, None),
        InsertOutcome::Replaced { cluster, evicted } => ("replaced", cluster, Some(evicted)),
        InsertOutcome::Spawned { cluster, .. } => ("spawned", cluster, None),
    }
}

fn counters(c: &core_memory::MemoryCounters) -> HashMap<&'static str, u64> {
    HashMap::from([
        ("inserts", c.inserts),
        ("spawns", c.spawns),
        ("evictions", c.evictions),
        ("merges", c.merges),
        ("centroid_comparisons", c.centroid_comparisons),
        ("consolidation_comparisons", c.consolidation_comparisons),
        ("merge_dropped", c.merge_dropped),
        ("retrievals", c.retrievals),
    ])
}

/// Descriptor of a flat channel-major image with values in `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (pixels, channels, height, width, kind = "channel_stats"))]
fn describe(pixels: Vec<f64>, channels: usize, height: usize, width: usize, kind: &str) -> PyResult<Vec<f64>> {
    let img = Image::new(channels, height, width, pixels).map_err(err)?;
    let kind: DescriptorKind = parse(kind)?;
    Ok(kind.compute(&img).map_err(err)?.into_values())
}

#[pyclass(name = "MultiClusterMemory")]
struct PyMultiClusterMemory {
    inner: core_memory::MultiClusterMemory,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyMultiClusterMemory {
    #[new]
    #[pyo3(signature = (
        capacity = 64, max_clusters = 5, tau = 0.3, metric = "euclidean", strategy = "acc",
        lambda_time = 1.0, lambda_uncertainty = 1.0, lambda_distance = 1.0, num_classes = 100,
        descriptor = "channel_stats", seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        capacity: usize,
        max_clusters: usize,
        tau: f64,
        metric: &str,
        strategy: &str,
        lambda_time: f64,
        lambda_uncertainty: f64,
        lambda_distance: f64,
        num_classes: usize,
        descriptor: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let params = MemoryParams {
            capacity,
            max_clusters,
            tau,
            metric: parse(metric)?,
            strategy: parse(strategy)?,
            lambda_time,
            lambda_uncertainty,
            lambda_distance,
            num_classes,
            descriptor: parse(descriptor)?,
            ..MemoryParams::default()
        };
        Ok(Self {
            inner: core_memory::MultiClusterMemory::new(params).map_err(err)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[pyo3(signature = (id, descriptor, uncertainty, step = 0, mode = 0, cls = 0))]
    fn insert(&mut self, id: u64, descriptor: Vec<f64>, uncertainty: f64, step: u64, mode: usize, cls: usize) -> PyResult<Outcome> {
        let d = Descriptor::new(self.inner.params().descriptor, descriptor);
        let s = MemorySample::new(id, d, uncertainty).with_labels(mode, cls);
        self.inner.insert(s, step).map(outcome).map_err(err)
    }

    fn age_tick(&mut self) {
        self.inner.age_tick();
    }

    /// Ids drawn by uniform cluster retrieval.
    #[pyo3(signature = (n_adapt, step = 0))]
    fn retrieve(&mut self, n_adapt: usize, step: u64) -> PyResult<Vec<u64>> {
        let got = self.inner.retrieve_ucr(n_adapt, step, &mut self.rng).map_err(err)?;
        Ok(got.iter().map(|s| s.id).collect())
    }

    /// Merges one pair; returns `(pair, comparisons, dropped ids)`.
    #[pyo3(signature = (strategy = None))]
    fn consolidate(&mut self, strategy: Option<&str>) -> PyResult<((usize, usize), usize, Vec<u64>)> {
        let strategy = match strategy {
            Some(s) => parse(s)?,
            None => self.inner.params().strategy,
        };
        let r = self.inner.consolidate_with(strategy).map_err(err)?;
        Ok((r.merged_pair, r.comparisons, r.dropped_ids))
    }

    fn cluster_sizes(&self) -> Vec<usize> {
        self.inner.clusters().iter().map(|c| c.len()).collect()
    }

    fn centroids(&self) -> Vec<Vec<f64>> {
        self.inner.clusters().iter().map(|c| c.centroid().values().to_vec()).collect()
    }

    fn member_ids(&self) -> Vec<Vec<u64>> {
        self.inner
            .clusters()
            .iter()
            .map(|c| c.members().iter().map(|m| m.id).collect())
            .collect()
    }

    fn counters(&self) -> HashMap<&'static str, u64> {
        counters(self.inner.counters())
    }

    fn snapshot_json(&self) -> PyResult<String> {
        self.inner
            .snapshot()
            .to_json()
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "SingleClusterMemory")]
struct PySingleClusterMemory {
    inner: core_memory::SingleClusterMemory,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PySingleClusterMemory {
    #[new]
    #[pyo3(signature = (capacity = 320, lambda_time = 1.0, lambda_uncertainty = 1.0, num_classes = 100, descriptor = "channel_stats", seed = 0))]
    fn new(
        capacity: usize,
        lambda_time: f64,
        lambda_uncertainty: f64,
        num_classes: usize,
        descriptor: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let params = ScmParams {
            capacity,
            lambda_time,
            lambda_uncertainty,
            num_classes,
            descriptor: parse(descriptor)?,
        };
        Ok(Self {
            inner: core_memory::SingleClusterMemory::new(params).map_err(err)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[pyo3(signature = (id, descriptor, uncertainty, step = 0, mode = 0, cls = 0))]
    fn insert(&mut self, id: u64, descriptor: Vec<f64>, uncertainty: f64, step: u64, mode: usize, cls: usize) -> PyResult<Outcome> {
        let d = Descriptor::new(self.inner.params().descriptor, descriptor);
        let s = MemorySample::new(id, d, uncertainty).with_labels(mode, cls);
        self.inner.insert(s, step).map(outcome).map_err(err)
    }

    fn age_tick(&mut self) {
        self.inner.age_tick();
    }

    fn retrieve(&mut self, n_adapt: usize) -> PyResult<Vec<u64>> {
        let got = self.inner.retrieve(n_adapt, &mut self.rng).map_err(err)?;
        Ok(got.iter().map(|s| s.id).collect())
    }

    fn member_ids(&self) -> Vec<u64> {
        self.inner.pool().iter().map(|m| m.id).collect()
    }

    fn counters(&self) -> HashMap<&'static str, u64> {
        counters(self.inner.counters())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "GaussianMixture", frozen)]
struct PyGaussianMixture {
    inner: GmmModel,
}

#[pymethods]
impl PyGaussianMixture {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means.clone()
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        self.inner.variances.clone()
    }

    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }

    #[getter]
    fn ll_history(&self) -> Vec<f64> {
        self.inner.ll_history.clone()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        self.inner.predict(&x).map_err(err)
    }

    fn bic(&self, data: Vec<Vec<f64>>) -> PyResult<f64> {
        gmm::bic(&self.inner, &data).map_err(err)
    }
}

fn fit_config(seed: u64, restarts: usize, max_iter: usize) -> FitConfig {
    FitConfig {
        seed,
        restarts,
        max_iter,
        ..FitConfig::default()
    }
}

#[pyfunction]
#[pyo3(signature = (data, k, seed = 0, restarts = 3, max_iter = 200))]
fn fit_gmm(data: Vec<Vec<f64>>, k: usize, seed: u64, restarts: usize, max_iter: usize) -> PyResult<PyGaussianMixture> {
    let inner = gmm::fit_em(&data, k, &fit_config(seed, restarts, max_iter)).map_err(err)?;
    Ok(PyGaussianMixture { inner })
}

/// Returns `(best K, [(K, BIC)], best model)`.
#[pyfunction]
#[pyo3(signature = (data, ks, seed = 0, restarts = 3, max_iter = 200))]
fn select_k(
    data: Vec<Vec<f64>>,
    ks: Vec<usize>,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> PyResult<(usize, Vec<(usize, f64)>, PyGaussianMixture)> {
    let sel = gmm::select_k(&data, &ks, &fit_config(seed, restarts, max_iter)).map_err(err)?;
    let table = sel.table.iter().map(|e| (e.k, e.bic)).collect();
    Ok((sel.best_k, table, PyGaussianMixture { inner: sel.model }))
}

#[pyfunction]
fn imbalance_ratio(counts: Vec<usize>) -> PyResult<f64> {
    diagnostics::imbalance_ratio(&counts).map_err(err)
}

#[pyfunction]
fn occupancy_entropy(counts: Vec<usize>) -> PyResult<f64> {
    diagnostics::occupancy_entropy(&counts).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (counts, threshold = diagnostics::DEFAULT_COVERAGE_THRESHOLD))]
fn mode_coverage(counts: Vec<usize>, threshold: f64) -> PyResult<f64> {
    diagnostics::mode_coverage(&counts, threshold).map_err(err)
}

#[pyfunction]
fn energy_distance(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    diagnostics::energy_distance(&a, &b).map_err(err)
}

#[pyclass(name = "Stream", frozen)]
struct PyStream {
    inner: PttaStream,
}

#[pymethods]
impl PyStream {
    #[new]
    #[pyo3(signature = (seed = 0, total_steps = 1000, batch_size = 64, num_classes = 100, images_per_class = 10, delta = 0.1))]
    fn new(
        seed: u64,
        total_steps: usize,
        batch_size: usize,
        num_classes: usize,
        images_per_class: usize,
        delta: f64,
    ) -> PyResult<Self> {
        let cfg = StreamConfig {
            seed,
            total_steps,
            batch_size,
            num_classes,
            images_per_class,
            dirichlet_delta: delta,
            ..StreamConfig::default()
        };
        Ok(Self {
            inner: PttaStream::new(cfg).map_err(err)?,
        })
    }

    #[getter]
    fn total_steps(&self) -> usize {
        self.inner.total_steps()
    }

    fn mode_at(&self, t: usize) -> PyResult<usize> {
        self.inner.mode_at(t).map_err(err)
    }

    /// Flat channel-major pixels of sample `i` at step `t`.
    fn image(&self, t: usize, i: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.sample_at(t, i).map_err(err)?.image.into_data())
    }

    /// `(id, class, mode, uncertainty, descriptor)` for every sample of step `t`.
    #[pyo3(signature = (t, kind = "channel_stats"))]
    fn batch(&self, t: usize, kind: &str) -> PyResult<Vec<(u64, usize, usize, f64, Vec<f64>)>> {
        let kind: DescriptorKind = parse(kind)?;
        self.inner
            .next_batch(t)
            .map_err(err)?
            .into_iter()
            .map(|s| {
                let d = kind.compute(&s.image).map_err(err)?;
                Ok((s.id, s.class, s.mode, s.uncertainty, d.into_values()))
            })
            .collect()
    }
}

/// Paired MCM/SCM run; returns diagnostic rows per variant.
#[pyfunction]
#[pyo3(signature = (seed = 0, steps = None, config_path = None))]
fn simulate(seed: u64, steps: Option<usize>, config_path: Option<&str>) -> PyResult<HashMap<String, Vec<HashMap<&'static str, f64>>>> {
    let mut cfg = match config_path {
        Some(p) => ExperimentConfig::from_json_file(p).map_err(err)?,
        None => ExperimentConfig::default(),
    }
    .seeded(seed);
    if let Some(s) = steps {
        cfg.stream.total_steps = s;
    }
    let run = simulate_paired(&cfg, &[Variant::Mcm, Variant::Scm], None).map_err(err)?;
    Ok(run
        .metrics
        .iter()
        .map(|m| {
            let rows = m
                .rows
                .iter()
                .map(|r| {
                    HashMap::from([
                        ("step", r.step as f64),
                        ("imbalance", r.imbalance),
                        ("entropy", r.entropy),
                        ("coverage", r.coverage),
                        ("energy_distance", r.energy_distance),
                    ])
                })
                .collect();
            (m.variant.name().to_string(), rows)
        })
        .collect())
}

#[pymodule]
fn mcm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMultiClusterMemory>()?;
    m.add_class::<PySingleClusterMemory>()?;
    m.add_class::<PyGaussianMixture>()?;
    m.add_class::<PyStream>()?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(imbalance_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(occupancy_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mode_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(energy_distance, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
