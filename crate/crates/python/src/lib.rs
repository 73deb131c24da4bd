//! Python bindings: compile sources to guest images, inspect offload
//! plans, run images under a scheme and drive the workload matrix.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use hvm_core::analyzer::{classify as classify_module, Coverage, Thresholds};
use hvm_core::frontend::{parse_files, TypedModule};
use hvm_core::guest::GuestImage;
use hvm_core::harness::{self, build_module, discover, parse_schemes, plan_for, MatrixOptions, RunMetrics, Scheme};
use hvm_core::runtime::{run_images, RunConfig, RunOutcome};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A string or a list of strings.
fn sources(obj: &Bound<'_, PyAny>) -> PyResult<Vec<String>> {
    if let Ok(s) = obj.extract::<String>() {
        return Ok(vec![s]);
    }
    obj.extract::<Vec<String>>()
}

fn module(src: &Bound<'_, PyAny>, library: bool) -> PyResult<TypedModule> {
    let texts = sources(src)?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    parse_files(&refs, library).map_err(value_err)
}

fn scheme(name: &str) -> PyResult<Scheme> {
    name.parse().map_err(value_err)
}

fn thresholds(t: Option<&str>) -> PyResult<Thresholds> {
    t.map_or(Ok(Thresholds::default()), |t| t.parse().map_err(value_err))
}

/// A linked guest image.
#[pyclass(module = "hvm", frozen)]
struct Image {
    inner: GuestImage,
    /// Scheme the image was built for; unknown for images read from bytes.
    scheme: Option<Scheme>,
    coverage: Option<Coverage>,
}

#[pymethods]
impl Image {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Image> {
        Ok(Image {
            inner: GuestImage::from_bytes(data).map_err(value_err)?,
            scheme: None,
            coverage: None,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Image> {
        let data = std::fs::read(&path).map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
        Image::from_bytes(&data)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(&path, self.inner.to_bytes()).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the serialized image.
    #[getter]
    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn scheme(&self) -> Option<String> {
        self.scheme.map(|s| s.name().to_string())
    }

    /// `(offloaded, total)` function counts, when built in this session.
    #[getter]
    fn coverage(&self) -> Option<(usize, usize)> {
        self.coverage.map(|c| (c.offloaded, c.total))
    }

    fn __repr__(&self) -> String {
        format!(
            "Image(scheme={}, digest={})",
            self.scheme.map_or("?", |s| s.name()),
            &self.inner.digest()[..16]
        )
    }
}

/// Compiles mini-language source (a string or list of strings) into an image.
#[pyfunction]
#[pyo3(signature = (source, scheme="gfp", thresholds=None, library=false))]
fn compile(source: &Bound<'_, PyAny>, scheme: &str, thresholds: Option<&str>, library: bool) -> PyResult<Image> {
    let m = module(source, library)?;
    let s = self::scheme(scheme)?;
    let (img, _, cov) = build_module(&m, s, self::thresholds(thresholds)?, "python").map_err(value_err)?;
    Ok(Image {
        inner: img,
        scheme: Some(s),
        coverage: Some(cov),
    })
}

/// Per-function verdicts: `{name: (status, [reasons])}`.
#[pyfunction]
#[pyo3(signature = (source, thresholds=None, library=false))]
fn classify<'py>(
    py: Python<'py>,
    source: &Bound<'py, PyAny>,
    thresholds: Option<&str>,
    library: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let m = module(source, library)?;
    let out = PyDict::new(py);
    for (name, v) in classify_module(&m, self::thresholds(thresholds)?) {
        let reasons: Vec<String> = v.reasons.iter().map(|r| r.to_string()).collect();
        out.set_item(name, (v.status.to_string(), reasons))?;
    }
    Ok(out)
}

/// The offload plan dump for `source` under `scheme`.
#[pyfunction]
#[pyo3(signature = (source, scheme="gfp", thresholds=None, library=false))]
fn plan(source: &Bound<'_, PyAny>, scheme: &str, thresholds: Option<&str>, library: bool) -> PyResult<String> {
    let m = module(source, library)?;
    Ok(plan_for(&m, self::scheme(scheme)?, self::thresholds(thresholds)?).dump())
}

fn outcome_dict<'py>(py: Python<'py>, o: &RunOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("exit_code", o.exit_code)?;
    d.set_item("output", PyBytes::new(py, &o.output))?;
    d.set_item("fault", o.fault.map(|f| f.to_string()))?;
    d.set_item("wall_s", o.wall.as_secs_f64())?;
    let c = &o.counters;
    let counters = PyDict::new(py);
    counters.set_item("interpreted_instructions", c.interpreted_instructions)?;
    counters.set_item("guest_to_host_calls", c.guest_to_host_calls)?;
    counters.set_item("host_to_guest_callbacks", c.host_to_guest_callbacks)?;
    counters.set_item("fcp_direct_calls", c.fcp_direct_calls)?;
    counters.set_item("grt_constructions", c.grt_constructions)?;
    d.set_item("counters", counters)?;
    Ok(d)
}

/// Runs `image` with optional library images. The scheme selects the
/// runtime flags and defaults to the one the image was built for.
#[pyfunction]
#[pyo3(signature = (image, libs=Vec::new(), scheme=None, args=Vec::new(), budget=0))]
fn run<'py>(
    py: Python<'py>,
    image: &Image,
    libs: Vec<PyRef<'py, Image>>,
    scheme: Option<&str>,
    args: Vec<i64>,
    budget: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let s = match scheme {
        Some(n) => self::scheme(n)?,
        None => image.scheme.unwrap_or(Scheme::GFP),
    };
    let f = s.flags();
    let config = RunConfig {
        budget,
        ..RunConfig::with_flags(f.grt, f.fcp)
    };
    let mut images = vec![&image.inner];
    images.extend(libs.iter().map(|l| &l.inner));
    let o = py.detach(|| run_images(&images, config, &args)).map_err(runtime_err)?;
    outcome_dict(py, &o)
}

fn metrics_dict<'py>(py: Python<'py>, m: &RunMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("workload", &m.workload)?;
    d.set_item("scheme", m.scheme.name())?;
    d.set_item("rep", m.rep)?;
    d.set_item("wall_s", m.wall_s)?;
    d.set_item("instr", m.interpreted_instructions)?;
    d.set_item("g2h", m.guest_to_host_calls)?;
    d.set_item("h2g", m.host_to_guest_callbacks)?;
    d.set_item("fcp", m.fcp_direct_calls)?;
    d.set_item("grt", m.grt_constructions)?;
    d.set_item("coverage", (m.coverage.offloaded, m.coverage.total))?;
    d.set_item("digest", &m.digest)?;
    d.set_item("exit_code", m.exit_code)?;
    Ok(d)
}

/// Runs every workload under `path` under each scheme. Returns metric
/// rows; raises `RuntimeError` if any scheme disagrees.
#[pyfunction]
#[pyo3(signature = (path, schemes="all", reps=1, thresholds=None, budget=0))]
fn matrix<'py>(
    py: Python<'py>,
    path: PathBuf,
    schemes: &str,
    reps: usize,
    thresholds: Option<&str>,
    budget: u64,
) -> PyResult<Bound<'py, PyList>> {
    let schemes = parse_schemes(schemes).map_err(value_err)?;
    let opts = MatrixOptions {
        reps,
        budget,
        thresholds: thresholds.map(|t| t.parse()).transpose().map_err(value_err)?,
    };
    let rows = py
        .detach(|| -> Result<Vec<RunMetrics>, harness::HarnessError> {
            let mut all = Vec::new();
            for spec in discover(&path)? {
                all.extend(harness::run_matrix(&spec, &schemes, opts)?);
            }
            Ok(all)
        })
        .map_err(runtime_err)?;
    let out = PyList::empty(py);
    for m in &rows {
        out.append(metrics_dict(py, m)?)?;
    }
    Ok(out)
}

/// Scheme names in matrix order.
#[pyfunction]
fn schemes() -> Vec<&'static str> {
    Scheme::ALL.iter().map(|s| s.name()).collect()
}

#[pymodule]
fn hvm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Image>()?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(matrix, m)?)?;
    m.add_function(wrap_pyfunction!(schemes, m)?)?;
    Ok(())
}
