//! Python bindings: netlist execution and waveform post-processing
//! driven from Python, in process.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use simctl_core::engine::{self, RunOptions};
use simctl_core::error::Error;
use simctl_core::netlist::parse_netlist;
use simctl_core::{postproc, WaveformSet};
use std::path::PathBuf;

/// (f1, a0, [(k, magnitude, phase), ...])
type SpectrumTuple = (f64, f64, Vec<(usize, f64, f64)>);

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::Parse { .. } | Error::Flatten { .. } | Error::Validation { .. } => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Simulated results: a time grid plus named columns.
#[pyclass(name = "Waveforms", skip_from_py_object)]
#[derive(Clone)]
struct PyWaveforms {
    inner: WaveformSet,
}

#[pymethods]
impl PyWaveforms {
    /// Load a waveform file written by a run.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyWaveforms { inner: WaveformSet::read_file(&path).map_err(to_py_err)? })
    }

    /// Analysis kind that produced the data ("startup", "trns", "ssw").
    #[getter]
    fn kind(&self) -> Option<String> {
        self.inner.kind.clone()
    }

    /// Period metadata, if the producing solve block declared one.
    #[getter]
    fn period(&self) -> Option<f64> {
        self.inner.period
    }

    fn time(&self) -> Vec<f64> {
        self.inner.time.clone()
    }

    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .column(name)
            .map(|c| c.to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("no column `{name}`")))
    }

    /// Mean of a column over [t1, t2] (defaults to the full span).
    #[pyo3(signature = (name, t1=None, t2=None))]
    fn average(&self, name: &str, t1: Option<f64>, t2: Option<f64>) -> PyResult<f64> {
        let col = self.column_ref(name)?;
        let (t1, t2) = self.window(t1, t2);
        postproc::average(&self.inner.time, col, t1, t2).map_err(to_py_err)
    }

    /// Root-mean-square of a column over [t1, t2].
    #[pyo3(signature = (name, t1=None, t2=None))]
    fn rms(&self, name: &str, t1: Option<f64>, t2: Option<f64>) -> PyResult<f64> {
        let col = self.column_ref(name)?;
        let (t1, t2) = self.window(t1, t2);
        postproc::rms(&self.inner.time, col, t1, t2).map_err(to_py_err)
    }

    /// Fourier spectrum of one period starting at t1.
    ///
    /// Returns (f1, a0, [(k, magnitude, phase), ...]).
    #[pyo3(signature = (name, t1, period, k=50))]
    fn fourier(
        &self,
        name: &str,
        t1: f64,
        period: f64,
        k: usize,
    ) -> PyResult<SpectrumTuple> {
        let col = self.column_ref(name)?;
        let s = postproc::fourier(&self.inner.time, col, t1, period, k).map_err(to_py_err)?;
        Ok((s.f1, s.a0, s.harmonics))
    }

    /// Total harmonic distortion of one period starting at t1.
    #[pyo3(signature = (name, t1, period, k=50))]
    fn thd(&self, name: &str, t1: f64, period: f64, k: usize) -> PyResult<f64> {
        let col = self.column_ref(name)?;
        let s = postproc::fourier(&self.inner.time, col, t1, period, k).map_err(to_py_err)?;
        postproc::thd(&s).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Waveforms(kind={:?}, rows={}, columns={:?})",
            self.inner.kind,
            self.inner.len(),
            self.inner.names
        )
    }
}

impl PyWaveforms {
    fn column_ref(&self, name: &str) -> PyResult<&[f64]> {
        self.inner
            .column(name)
            .ok_or_else(|| PyValueError::new_err(format!("no column `{name}`")))
    }

    fn window(&self, t1: Option<f64>, t2: Option<f64>) -> (f64, f64) {
        (
            t1.unwrap_or_else(|| self.inner.t_start()),
            t2.unwrap_or_else(|| self.inner.t_end()),
        )
    }
}

/// Per-solve-block run statistics.
#[pyclass(name = "BlockReport", skip_from_py_object)]
#[derive(Clone)]
struct PyBlockReport {
    #[pyo3(get)]
    kind: String,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    rejected_steps: usize,
    #[pyo3(get)]
    nr_iterations: usize,
    #[pyo3(get)]
    ssw_newton_iterations: usize,
    #[pyo3(get)]
    ssw_periods_integrated: usize,
    #[pyo3(get)]
    out_file: Option<PathBuf>,
}

#[pymethods]
impl PyBlockReport {
    fn __repr__(&self) -> String {
        format!(
            "BlockReport(kind={}, steps={}, nr_iterations={})",
            self.kind, self.steps, self.nr_iterations
        )
    }
}

fn convert_report(report: engine::RunReport) -> (Vec<PyBlockReport>, Vec<PyWaveforms>) {
    let blocks = report
        .blocks
        .iter()
        .map(|b| PyBlockReport {
            kind: b.kind.keyword().to_string(),
            steps: b.steps,
            rejected_steps: b.rejected_steps,
            nr_iterations: b.nr_iterations,
            ssw_newton_iterations: b.ssw_newton_iterations,
            ssw_periods_integrated: b.ssw_periods_integrated,
            out_file: b.out_file.clone(),
        })
        .collect();
    let waveforms = report
        .waveforms
        .into_iter()
        .map(|inner| PyWaveforms { inner })
        .collect();
    (blocks, waveforms)
}

/// Parse a literal with an engineering suffix ("600u" -> 6e-4).
#[pyfunction]
fn parse_value(token: &str) -> PyResult<f64> {
    simctl_core::netlist::parse_value(token).map_err(to_py_err)
}

/// Parse and validate a netlist, returning diagnostic strings
/// (empty means ready to run).
#[pyfunction]
fn check(text: &str) -> PyResult<Vec<String>> {
    let doc = parse_netlist(text).map_err(to_py_err)?;
    let registry = simctl_core::elements::builtin_registry();
    let flat = simctl_core::netlist::flatten(&doc, &registry).map_err(to_py_err)?;
    Ok(simctl_core::netlist::validate(&flat, &registry)
        .iter()
        .map(|d| d.to_string())
        .collect())
}

/// Run a netlist given as text. Output files are only written when
/// `write_files` is set; waveforms are always returned.
#[pyfunction]
#[pyo3(signature = (text, write_files=false, base_dir=None))]
fn run(
    text: &str,
    write_files: bool,
    base_dir: Option<PathBuf>,
) -> PyResult<(Vec<PyBlockReport>, Vec<PyWaveforms>)> {
    let options = RunOptions {
        check_only: false,
        verbose: false,
        write_files,
        base_dir: base_dir.unwrap_or_default(),
    };
    Ok(convert_report(engine::run_text(text, &options).map_err(to_py_err)?))
}

/// Run a netlist file, writing its output files next to it.
#[pyfunction]
fn run_file(path: PathBuf) -> PyResult<(Vec<PyBlockReport>, Vec<PyWaveforms>)> {
    let options = RunOptions {
        check_only: false,
        verbose: false,
        write_files: true,
        base_dir: PathBuf::new(),
    };
    Ok(convert_report(engine::run_file(&path, &options).map_err(to_py_err)?))
}

#[pymodule]
fn simctl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyWaveforms>()?;
    m.add_class::<PyBlockReport>()?;
    m.add_function(wrap_pyfunction!(parse_value, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_file, m)?)?;
    Ok(())
}
