//! Python bindings for the symbolic regression core.

use momes_core::baseline;
use momes_core::loss;
use momes_core::metrics;
use momes_core::momes::{FrontMember as CoreMember, RunResult};
use momes_core::{
    Bounds, CgpParams, ConstInit, Dataset as CoreDataset, Genotype as CoreGenotype, KernelSet,
    MomesConfig,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: momes_core::Error) -> PyErr {
    match e {
        momes_core::Error::RankDeficient | momes_core::Error::Io { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Shape of a CGP grid plus its kernel set.
#[pyclass(name = "CgpParams", module = "momes", skip_from_py_object)]
#[derive(Clone)]
pub struct Params {
    inner: CgpParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (n_features, n_constants, rows=2, columns=20, levels_back=20, kernels=None))]
    fn new(
        n_features: usize,
        n_constants: usize,
        rows: usize,
        columns: usize,
        levels_back: usize,
        kernels: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let names = kernels.unwrap_or_else(|| {
            ["add", "sub", "mul", "div", "log"].map(String::from).to_vec()
        });
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let kernels = KernelSet::from_names(&names).map_err(err)?;
        let inner = CgpParams::new(n_features, n_constants, rows, columns, levels_back, kernels)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features
    }

    #[getter]
    fn n_constants(&self) -> usize {
        self.inner.n_constants
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_genes(&self) -> usize {
        self.inner.n_genes()
    }

    #[getter]
    fn kernels(&self) -> Vec<String> {
        self.inner.kernels.names()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "CgpParams(n_features={}, n_constants={}, rows={}, columns={}, levels_back={}, kernels={:?})",
            p.n_features,
            p.n_constants,
            p.rows,
            p.columns,
            p.levels_back,
            p.kernels.names()
        )
    }
}

/// Integer genes plus the ephemeral constant values.
#[pyclass(name = "Genotype", module = "momes", skip_from_py_object)]
#[derive(Clone)]
pub struct Genotype {
    inner: CoreGenotype,
}

#[pymethods]
impl Genotype {
    #[new]
    fn new(genes: Vec<usize>, constants: Vec<f64>, params: &Params) -> PyResult<Self> {
        let inner = CoreGenotype::new(genes, constants, &params.inner).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (params, seed, low=-1.0, high=1.0))]
    fn random(params: &Params, seed: u64, low: f64, high: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = ConstInit::Uniform { low, high };
        Self {
            inner: CoreGenotype::random(&params.inner, &mut rng, &init),
        }
    }

    #[getter]
    fn genes(&self) -> Vec<usize> {
        self.inner.genes.clone()
    }

    #[getter]
    fn constants(&self) -> Vec<f64> {
        self.inner.constants.clone()
    }

    fn with_constants(&self, constants: Vec<f64>, params: &Params) -> PyResult<Self> {
        Self::new(self.inner.genes.clone(), constants, params)
    }

    /// Program output for one feature row.
    fn evaluate(&self, params: &Params, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != params.inner.n_features {
            return Err(err(momes_core::Error::DimensionMismatch {
                expected: params.inner.n_features,
                got: x.len(),
            }));
        }
        Ok(self.inner.evaluate::<f64>(&params.inner, &x))
    }

    #[pyo3(signature = (params, names=None))]
    fn infix(&self, params: &Params, names: Option<Vec<String>>) -> String {
        self.inner.decode_infix(&params.inner, names.as_deref())
    }

    fn complexity(&self, params: &Params) -> usize {
        self.inner.complexity(&params.inner)
    }

    fn active_nodes(&self, params: &Params) -> Vec<usize> {
        self.inner.active_nodes(&params.inner)
    }

    fn mutate(&self, params: &Params, max_mutations: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            inner: self.inner.mutate(&params.inner, max_mutations, &mut rng),
        }
    }

    fn __repr__(&self) -> String {
        format!("Genotype(genes={:?}, constants={:?})", self.inner.genes, self.inner.constants)
    }
}

/// Feature rows, targets and optional per-row bounds.
#[pyclass(name = "Dataset", module = "momes", skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (rows, targets, lower=None, upper=None, names=None))]
    fn new(
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
        names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let bounds = match (lower, upper) {
            (Some(lower), Some(upper)) => Some(Bounds { lower, upper }),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("lower and upper must be given together")),
        };
        let inner = CoreDataset::new(rows, targets, bounds, names).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn targets(&self) -> Vec<f64> {
        self.inner.targets().to_vec()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }
}

/// Loss with its gradient and Hessian over the constants.
#[pyclass(name = "LossReport", module = "momes", get_all)]
pub struct LossReport {
    loss: f64,
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
    active: Vec<usize>,
}

#[pyclass(name = "Metrics", module = "momes", get_all)]
pub struct Metrics {
    mse: f64,
    rmse: f64,
    mae: f64,
    avg_overestimate: f64,
    avg_underestimate: f64,
    precision: Option<f64>,
}

#[pyclass(name = "FrontMember", module = "momes", get_all)]
pub struct FrontMember {
    genotype: Genotype,
    infix: String,
    loss: f64,
    complexity: usize,
}

impl From<&CoreMember> for FrontMember {
    fn from(m: &CoreMember) -> Self {
        Self {
            genotype: Genotype { inner: m.genotype() },
            infix: m.infix.clone(),
            loss: m.loss,
            complexity: m.complexity,
        }
    }
}

#[pyfunction]
fn mse_loss(genotype: &Genotype, params: &Params, data: &Dataset) -> PyResult<f64> {
    loss::mse_loss(&genotype.inner, &params.inner, &data.inner).map_err(err)
}

#[pyfunction]
fn loss_with_derivatives(genotype: &Genotype, params: &Params, data: &Dataset) -> PyResult<LossReport> {
    let r = loss::loss_with_derivatives(&genotype.inner, &params.inner, &data.inner).map_err(err)?;
    Ok(LossReport {
        loss: r.loss,
        grad: r.grad,
        hess: r.hess,
        active: r.active,
    })
}

/// One Newton step on the active constants; returns the updated genotype.
#[pyfunction]
fn newton_step(genotype: &Genotype, params: &Params, data: &Dataset) -> PyResult<Genotype> {
    let g = &genotype.inner;
    let r = loss::loss_with_derivatives(g, &params.inner, &data.inner).map_err(err)?;
    let constants = loss::newton_step(&g.constants, &r);
    Ok(Genotype {
        inner: CoreGenotype {
            genes: g.genes.clone(),
            constants,
        },
    })
}

#[pyfunction]
fn predict(genotype: &Genotype, params: &Params, data: &Dataset) -> PyResult<Vec<f64>> {
    loss::predict(&genotype.inner, &params.inner, &data.inner).map_err(err)
}

#[pyfunction(name = "metrics")]
fn compute_metrics(predictions: Vec<f64>, data: &Dataset) -> PyResult<Metrics> {
    let m = metrics::metrics(&predictions, &data.inner).map_err(err)?;
    Ok(Metrics {
        mse: m.mse,
        rmse: m.rmse,
        mae: m.mae,
        avg_overestimate: m.avg_overestimate,
        avg_underestimate: m.avg_underestimate,
        precision: m.precision,
    })
}

/// Ordinary least squares; returns `(coefficients, intercept)`.
#[pyfunction]
fn fit_linear(data: &Dataset) -> PyResult<(Vec<f64>, f64)> {
    let m = baseline::fit_linear(&data.inner).map_err(err)?;
    Ok((m.coefficients, m.intercept))
}

fn config(params: &Params, population_size: usize, generations: usize, max_mutations: usize, seed: u64) -> MomesConfig {
    MomesConfig {
        population_size,
        generations,
        max_mutations,
        cgp: params.inner.clone(),
        const_init: ConstInit::default(),
        seed,
    }
}

fn front(run: &RunResult) -> Vec<FrontMember> {
    run.front.members.iter().map(FrontMember::from).collect()
}

/// One evolutionary run; returns its Pareto front ordered by complexity.
#[pyfunction]
#[pyo3(signature = (data, params, generations, population_size=40, max_mutations=4, seed=0))]
fn run(
    py: Python<'_>,
    data: &Dataset,
    params: &Params,
    generations: usize,
    population_size: usize,
    max_mutations: usize,
    seed: u64,
) -> PyResult<Vec<FrontMember>> {
    let cfg = config(params, population_size, generations, max_mutations, seed);
    let data = &data.inner;
    let result = py.detach(|| momes_core::run(data, &cfg)).map_err(err)?;
    Ok(front(&result))
}

/// Runs seeds `seed, seed+1, ...`; returns one front per start.
#[pyfunction]
#[pyo3(signature = (data, params, generations, n_starts, population_size=40, max_mutations=4, seed=0, parallelism=1))]
#[allow(clippy::too_many_arguments)]
fn multi_start(
    py: Python<'_>,
    data: &Dataset,
    params: &Params,
    generations: usize,
    n_starts: usize,
    population_size: usize,
    max_mutations: usize,
    seed: u64,
    parallelism: usize,
) -> PyResult<Vec<Vec<FrontMember>>> {
    let cfg = config(params, population_size, generations, max_mutations, seed);
    let data = &data.inner;
    let ms = py
        .detach(|| momes_core::multi_start(data, &cfg, n_starts, parallelism))
        .map_err(err)?;
    Ok(ms.runs.iter().map(front).collect())
}

#[pymodule]
fn momes(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_class::<Genotype>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<LossReport>()?;
    m.add_class::<Metrics>()?;
    m.add_class::<FrontMember>()?;
    m.add_function(wrap_pyfunction!(mse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(loss_with_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(newton_step, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(multi_start, m)?)?;
    Ok(())
}
