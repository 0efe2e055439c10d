//! Python bindings for the d2d-core solver.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyComplex;

use d2d_core::alloc::{exact_allocate_with, greedy_allocate_with, AllocOptions};
use d2d_core::harness::{self, Distributions, InstanceSpec, ScenarioConfig, Shape};
use d2d_core::model::{self, Allocation, BeamformingState, ChannelSet, EnergyBreakdown, NetworkInstance};
use d2d_core::optimizer::{self, AllocatorKind, RunConfig};

fn value_error(e: d2d_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Energy", frozen, get_all, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyEnergy {
    total: f64,
    communication: f64,
    computation: f64,
}

impl From<EnergyBreakdown> for PyEnergy {
    fn from(e: EnergyBreakdown) -> Self {
        Self {
            total: e.total,
            communication: e.communication,
            computation: e.computation,
        }
    }
}

#[pymethods]
impl PyEnergy {
    fn __repr__(&self) -> String {
        format!(
            "Energy(total={}, communication={}, computation={})",
            self.total, self.communication, self.computation
        )
    }
}

#[pyclass(name = "Solution", frozen, get_all)]
struct PySolution {
    /// `(tx, rx, subchannel)` triples.
    links: Vec<(usize, usize, usize)>,
    energy: PyEnergy,
    /// Total energy at the start and after each alternation.
    trajectory: Vec<f64>,
    alternations: usize,
}

fn links_of(alloc: &Allocation) -> Vec<(usize, usize, usize)> {
    alloc.links().iter().map(|l| (l.tx, l.rx, l.subchannel)).collect()
}

#[pymethods]
impl PySolution {
    #[getter]
    fn num_links(&self) -> usize {
        self.links.len()
    }

    fn __repr__(&self) -> String {
        format!("Solution(links={:?}, total={})", self.links, self.energy.total)
    }
}

#[pyclass(name = "Instance", frozen)]
struct PyInstance {
    net: NetworkInstance,
    ch: ChannelSet,
}

fn allocator(name: &str) -> PyResult<AllocatorKind> {
    match name {
        "greedy" => Ok(AllocatorKind::Greedy),
        "exact" => Ok(AllocatorKind::Exact),
        other => Err(PyValueError::new_err(format!("unknown allocator {other:?}"))),
    }
}

#[pymethods]
impl PyInstance {
    /// Draws a random instance with the default task distributions.
    #[staticmethod]
    #[pyo3(signature = (nodes, antennas, subchannels, seed, power_budget=5.0, bandwidth=1e6, noise_power=1.0))]
    fn generate(
        nodes: usize,
        antennas: usize,
        subchannels: usize,
        seed: u64,
        power_budget: f64,
        bandwidth: f64,
        noise_power: f64,
    ) -> PyResult<Self> {
        let spec = InstanceSpec {
            shape: Shape {
                nodes,
                antennas,
                subchannels,
            },
            power_budget,
            bandwidth,
            noise_power,
            distributions: Distributions::default(),
        };
        let (net, ch) = harness::generate_instance(&spec, seed).map_err(value_error)?;
        Ok(Self { net, ch })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (net, ch) = harness::restore_instance(text).map_err(value_error)?;
        Ok(Self { net, ch })
    }

    fn to_json(&self) -> String {
        harness::dump_instance(&self.net, &self.ch)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.net.num_nodes()
    }

    #[getter]
    fn num_subchannels(&self) -> usize {
        self.net.num_subchannels
    }

    #[getter]
    fn power_budget(&self) -> f64 {
        self.net.power_budget
    }

    fn local_energy(&self, node: usize) -> PyResult<f64> {
        if node >= self.net.num_nodes() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(model::local_energy(node, &self.net))
    }

    fn local_baseline(&self) -> PyEnergy {
        model::local_baseline(&self.net).into()
    }

    /// Ordered pairs whose offloading can beat local processing.
    fn candidate_links(&self) -> Vec<(usize, usize)> {
        model::candidate_links(&self.net)
    }

    /// Channel matrix from `tx` to `rx` as nested lists of complex numbers.
    fn channel<'py>(&self, py: Python<'py>, tx: usize, rx: usize) -> PyResult<Vec<Vec<Bound<'py, PyComplex>>>> {
        let k = self.net.num_nodes();
        if tx >= k || rx >= k || tx == rx {
            return Err(PyValueError::new_err(format!("no channel ({tx}, {rx})")));
        }
        let h = self.ch.get(tx, rx);
        Ok((0..h.nrows())
            .map(|i| (0..h.ncols()).map(|j| PyComplex::from_doubles(py, h[(i, j)].re, h[(i, j)].im)).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Instance(nodes={}, subchannels={})", self.net.num_nodes(), self.net.num_subchannels)
    }
}

/// One allocation step under the random initial signals of `seed`.
#[pyfunction]
#[pyo3(signature = (instance, method="greedy", seed=0, max_links=None))]
fn allocate(instance: &PyInstance, method: &str, seed: u64, max_links: Option<usize>) -> PyResult<PySolution> {
    let net = &instance.net;
    let (_, bf) = optimizer::initialize(net, seed);
    let opts = AllocOptions::with_max_links(max_links);
    let result = match allocator(method)? {
        AllocatorKind::Greedy => greedy_allocate_with(net, &bf, &instance.ch, &opts),
        AllocatorKind::Exact => exact_allocate_with(net, &bf, &instance.ch, &opts),
    }
    .map_err(value_error)?;
    Ok(PySolution {
        links: links_of(&result.allocation),
        energy: result.energy.into(),
        trajectory: vec![result.energy.total],
        alternations: 0,
    })
}

/// Total energy of an allocation with every link using its dominant
/// singular vectors at the default per-link power.
#[pyfunction]
fn evaluate(instance: &PyInstance, links: Vec<(usize, usize, usize)>) -> PyResult<PyEnergy> {
    let alloc = Allocation::new(links.into_iter().map(|(t, r, s)| model::Link::new(t, r, s)).collect());
    alloc.validate(&instance.net).map_err(value_error)?;
    let pairs: Vec<(usize, usize)> = alloc.links().iter().map(|l| l.pair()).collect();
    let empty = BeamformingState::empty(instance.net.num_nodes());
    let plan = d2d_core::alloc::SignalPlan::new(&instance.net, &instance.ch, &empty, &pairs);
    Ok(plan.energy(&alloc).map_err(value_error)?.into())
}

/// Alternating allocation and beamformer design with random restarts.
#[pyfunction]
#[pyo3(signature = (instance, allocator="greedy", restarts=10, alternations=10, seed=0, max_links=None))]
fn optimize(
    py: Python<'_>,
    instance: &PyInstance,
    allocator: &str,
    restarts: usize,
    alternations: usize,
    seed: u64,
    max_links: Option<usize>,
) -> PyResult<PySolution> {
    let cfg = RunConfig {
        num_restarts: restarts,
        alternations,
        allocator: self::allocator(allocator)?,
        rng_seed: seed,
        max_links,
        ..RunConfig::default()
    };
    let out = py
        .detach(|| optimizer::alternate(&instance.net, &instance.ch, &cfg))
        .map_err(value_error)?;
    let best = out.best;
    Ok(PySolution {
        links: links_of(&best.allocation),
        energy: best.energy.into(),
        trajectory: best.trajectory.iter().map(|r| r.energy.total).collect(),
        alternations: best.alternations,
    })
}

/// Random matching followed by beamformer design.
#[pyfunction]
#[pyo3(signature = (instance, seed=0))]
fn random_baseline(instance: &PyInstance, seed: u64) -> PyResult<PySolution> {
    let wmmse = RunConfig::default().wmmse;
    let sol = optimizer::random_wmmse_baseline(&instance.net, &instance.ch, seed, &wmmse).map_err(value_error)?;
    Ok(PySolution {
        links: links_of(&sol.allocation),
        energy: sol.energy.into(),
        trajectory: sol.trajectory.iter().map(|r| r.energy.total).collect(),
        alternations: sol.alternations,
    })
}

/// Runs a scenario from TOML text and returns the results CSV.
#[pyfunction]
fn run_scenario(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let cfg = ScenarioConfig::from_toml(config_toml).map_err(value_error)?;
    cfg.validate().map_err(value_error)?;
    let rows = py.detach(|| harness::run_scenario(&cfg)).map_err(value_error)?;
    Ok(harness::results_csv(&cfg, &rows))
}

#[pymodule]
fn d2d_energy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyEnergy>()?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
