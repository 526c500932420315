//! Python bindings for `qtraj-core`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qtraj_core::floyd::{self, EnergyStencil};
use qtraj_core::qshje::{self, SolveOptions};
use qtraj_core::spin3d::{self, LinearDensityFamily, InterferenceFamily, PlaneWaveFamily, SceneFamily};
use qtraj_core::{Error, Residual};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_)
        | Error::OutOfRange { .. }
        | Error::DegenerateMicrostate { .. }
        | Error::Domain(_)
        | Error::Io(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn residual_dict<'py>(py: Python<'py>, r: &Residual) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("max", r.max)?;
    d.set_item("rms", r.rms)?;
    d.set_item("nodes", r.nodes)?;
    Ok(d)
}

#[pyclass(name = "Constants", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyConstants(qshje::Constants);

#[pymethods]
impl PyConstants {
    #[new]
    #[pyo3(signature = (m = 1.0, hbar = 1.0))]
    fn new(m: f64, hbar: f64) -> PyResult<Self> {
        Ok(PyConstants(qshje::Constants::new(m, hbar).map_err(to_py)?))
    }

    #[getter]
    fn m(&self) -> f64 {
        self.0.m
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar
    }

    fn __repr__(&self) -> String {
        format!("Constants(m={}, hbar={})", self.0.m, self.0.hbar)
    }
}

#[pyclass(name = "Potential", frozen, from_py_object)]
#[derive(Clone)]
struct PyPotential(qtraj_core::Potential);

#[pymethods]
impl PyPotential {
    #[staticmethod]
    fn free() -> Self {
        PyPotential(qtraj_core::Potential::Free)
    }

    #[staticmethod]
    fn linear(slope: f64) -> PyResult<Self> {
        Ok(PyPotential(qtraj_core::Potential::linear(slope).map_err(to_py)?))
    }

    #[staticmethod]
    fn harmonic(stiffness: f64) -> PyResult<Self> {
        Ok(PyPotential(qtraj_core::Potential::harmonic(stiffness).map_err(to_py)?))
    }

    #[staticmethod]
    fn square_well(depth: f64, half_width: f64) -> PyResult<Self> {
        Ok(PyPotential(qtraj_core::Potential::square_well(depth, half_width).map_err(to_py)?))
    }

    /// Tabulated `V(q)` with cubic interpolation between nodes.
    #[staticmethod]
    fn tabulated(q: Vec<f64>, v: Vec<f64>) -> PyResult<Self> {
        let t = qtraj_core::potentials::TabulatedPotential::new(q, v).map_err(to_py)?;
        Ok(PyPotential(qtraj_core::Potential::Tabulated(t)))
    }

    fn evaluate(&self, q: f64) -> PyResult<f64> {
        self.0.evaluate(q).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn __repr__(&self) -> String {
        format!("Potential.{}", self.0.name())
    }
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyGrid(qtraj_core::Grid1D);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(q_min: f64, q_max: f64, n: usize) -> PyResult<Self> {
        Ok(PyGrid(qtraj_core::Grid1D::new(q_min, q_max, n).map_err(to_py)?))
    }

    fn nodes(&self) -> Vec<f64> {
        self.0.nodes()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }
}

#[pyclass(name = "Microstate", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyMicrostate(qshje::Microstate);

#[pymethods]
impl PyMicrostate {
    #[new]
    #[pyo3(signature = (a = 1.0, b = 0.0, c = 0.0, d = 1.0, w0 = 0.0, q0 = 0.0))]
    fn new(a: f64, b: f64, c: f64, d: f64, w0: f64, q0: f64) -> PyResult<Self> {
        Ok(PyMicrostate(qshje::Microstate::new(a, b, c, d, w0, q0).map_err(to_py)?))
    }

    /// Applies the Möbius map with matrix `[[a, b], [c, d]]`.
    fn mobius(&self, a: f64, b: f64, c: f64, d: f64) -> PyResult<Self> {
        Ok(PyMicrostate(qshje::mobius_apply(&self.0, a, b, c, d).map_err(to_py)?))
    }

    #[getter]
    fn det(&self) -> f64 {
        self.0.det()
    }

    fn __repr__(&self) -> String {
        let m = &self.0;
        format!("Microstate({}, {}, {}, {}, w0={}, q0={})", m.a, m.b, m.c, m.d, m.w0, m.q0)
    }
}

/// Reduced action of one microstate at fixed energy.
#[pyclass(name = "ActionSlice", frozen)]
struct PyActionSlice(qshje::ActionSlice);

#[pymethods]
impl PyActionSlice {
    #[getter]
    fn energy(&self) -> f64 {
        self.0.energy
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.0.grid.nodes()
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.0.w.values().to_vec()
    }

    #[getter]
    fn wp(&self) -> Vec<f64> {
        self.0.wp.values().to_vec()
    }

    #[getter]
    fn rho(&self) -> Vec<f64> {
        self.0.rho.values().to_vec()
    }

    #[getter]
    fn quantum_potential(&self) -> Vec<f64> {
        self.0.q.values().to_vec()
    }

    #[getter]
    fn script_w(&self) -> Vec<f64> {
        self.0.script_w.values().to_vec()
    }

    fn qshje_residual<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        residual_dict(py, &self.0.qshje_residual())
    }

    fn continuity_residual<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        residual_dict(py, &self.0.continuity_residual())
    }

    fn quantum_potential_routes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        residual_dict(py, &self.0.quantum_potential_routes().map_err(to_py)?)
    }

    /// `𝒲 − (V − E)` against `potential`.
    fn script_w_residual<'py>(&self, py: Python<'py>, potential: &PyPotential) -> PyResult<Bound<'py, PyDict>> {
        residual_dict(py, &qshje::verify_script_w(&self.0, &potential.0).map_err(to_py)?)
    }
}

#[pyfunction]
#[pyo3(signature = (potential, energy, grid, microstate = None, constants = None))]
fn build_slice(
    py: Python<'_>,
    potential: PyPotential,
    energy: f64,
    grid: PyGrid,
    microstate: Option<PyMicrostate>,
    constants: Option<PyConstants>,
) -> PyResult<PyActionSlice> {
    let micro = microstate.map(|m| m.0).unwrap_or_else(qshje::Microstate::identity);
    let c = constants.map(|c| c.0).unwrap_or_else(qshje::Constants::natural);
    py.detach(|| qshje::build_slice(&potential.0, energy, &grid.0, &micro, &c, SolveOptions::default()))
        .map(PyActionSlice)
        .map_err(to_py)
}

/// Floydian time, `τ` and velocities along one microstate.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: floyd::Trajectory,
    identity: floyd::IdentityReport,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.clone()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    #[getter]
    fn tau(&self) -> Vec<f64> {
        self.inner.tau.clone()
    }

    #[getter]
    fn qdot(&self) -> Vec<f64> {
        self.inner.qdot.clone()
    }

    #[getter]
    fn dtau_dt(&self) -> Vec<f64> {
        self.inner.dtau_dt.clone()
    }

    /// Relative residual of `W' W'_E = m(1 − Q_E)`.
    #[getter]
    fn identity_relative(&self) -> f64 {
        self.identity.relative
    }

    fn time_formula_agreement<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        residual_dict(py, &self.inner.time_formula_agreement())
    }

    /// Position at time `t` inside the monotone window around `q0`.
    fn position_at(&self, t: f64) -> PyResult<f64> {
        floyd::trajectory_at(&self.inner.monotone_window(), t).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (potential, energy, grid, microstate = None, constants = None, q0 = 0.0, step_e = None))]
#[allow(clippy::too_many_arguments)]
fn trajectory(
    py: Python<'_>,
    potential: PyPotential,
    energy: f64,
    grid: PyGrid,
    microstate: Option<PyMicrostate>,
    constants: Option<PyConstants>,
    q0: f64,
    step_e: Option<f64>,
) -> PyResult<PyTrajectory> {
    let micro = microstate.map(|m| m.0).unwrap_or_else(qshje::Microstate::identity);
    let c = constants.map(|c| c.0).unwrap_or_else(qshje::Constants::natural);
    let step = step_e.unwrap_or(floyd::default_step(energy));
    py.detach(|| -> qtraj_core::Result<PyTrajectory> {
        let st = EnergyStencil::build(&potential.0, &micro, energy, step, &grid.0, &c)?;
        let d = st.derivatives()?;
        Ok(PyTrajectory {
            inner: floyd::floyd_time(st.center(), &d, q0)?,
            identity: floyd::identity_wp_wpe(st.center(), &d)?,
        })
    })
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (potential, energies, q, grid, microstate = None, constants = None))]
fn legendre_check<'py>(
    py: Python<'py>,
    potential: PyPotential,
    energies: Vec<f64>,
    q: f64,
    grid: PyGrid,
    microstate: Option<PyMicrostate>,
    constants: Option<PyConstants>,
) -> PyResult<Bound<'py, PyDict>> {
    let micro = microstate.map(|m| m.0).unwrap_or_else(qshje::Microstate::identity);
    let c = constants.map(|c| c.0).unwrap_or_else(qshje::Constants::natural);
    let r = py
        .detach(|| floyd::legendre_check(&potential.0, &micro, &energies, q, &grid.0, &c))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("q", r.q)?;
    d.set_item("energies", r.energies)?;
    d.set_item("w", r.w)?;
    d.set_item("t", r.t)?;
    d.set_item("s", r.s)?;
    d.set_item("roundtrip", residual_dict(py, &r.roundtrip)?)?;
    d.set_item("conjugate", residual_dict(py, &r.conjugate)?)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (potential, center, width, momentum, bounds = (-20.0, 20.0), n = 400, t_span = 1.0, dt = 5e-4, constants = None))]
#[allow(clippy::too_many_arguments)]
fn ehrenfest_check<'py>(
    py: Python<'py>,
    potential: PyPotential,
    center: f64,
    width: f64,
    momentum: f64,
    bounds: (f64, f64),
    n: usize,
    t_span: f64,
    dt: f64,
    constants: Option<PyConstants>,
) -> PyResult<Bound<'py, PyDict>> {
    let c = constants.map(|c| c.0).unwrap_or_else(qshje::Constants::natural);
    let packet = floyd::Packet {
        center,
        width,
        momentum,
    };
    let r = py
        .detach(|| floyd::ehrenfest_check(&potential.0, &c, bounds, n, packet, t_span, dt))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("steps", r.steps)?;
    d.set_item("commutator", residual_dict(py, &r.commutator)?)?;
    d.set_item("momentum", residual_dict(py, &r.momentum)?)?;
    d.set_item("min_margin", r.min_margin)?;
    d.set_item("max_norm_drift", r.max_norm_drift)?;
    d.set_item("max_energy_drift", r.max_energy_drift)?;
    Ok(d)
}

/// Unit spin vector for one node: `(s or None, multiplicity)`.
#[pyfunction]
fn solve_spin(v_b: [f64; 3], v_s: [f64; 3]) -> (Option<[f64; 3]>, &'static str) {
    let sol = spin3d::solve_spin(v_b, v_s);
    let kind = match sol.multiplicity {
        spin3d::Multiplicity::IsolatedPair => "isolated_pair",
        spin3d::Multiplicity::OneParameterFamily => "one_parameter_family",
        spin3d::Multiplicity::Degenerate => "degenerate",
    };
    (sol.s, kind)
}

#[pyfunction]
fn spin_constraints(v_b: [f64; 3], v_s: [f64; 3], s: [f64; 3]) -> [f64; 3] {
    spin3d::spin_constraints(v_b, v_s, s)
}

/// Current-velocity versus trajectory-velocity verdict for a shipped family.
#[pyfunction]
#[pyo3(signature = (family, energy, x, y, z, constants = None, sampled = false, alpha = 1.0, beta = 1.0, step_e = None))]
#[allow(clippy::too_many_arguments)]
fn velocity_verdict<'py>(
    py: Python<'py>,
    family: &str,
    energy: f64,
    x: (f64, f64, usize),
    y: (f64, f64, usize),
    z: (f64, f64, usize),
    constants: Option<PyConstants>,
    sampled: bool,
    alpha: f64,
    beta: f64,
    step_e: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let c = constants.map(|c| c.0).unwrap_or_else(qshje::Constants::natural);
    let grid = spin3d::Grid3D::new(x, y, z).map_err(to_py)?;
    let representation = if sampled {
        spin3d::Representation::Sampled
    } else {
        spin3d::Representation::Analytic
    };
    let fam: Box<dyn SceneFamily + Send> = match family {
        "plane_wave" => Box::new(PlaneWaveFamily {
            grid,
            constants: c,
            representation,
        }),
        "linear_density" => Box::new(LinearDensityFamily {
            grid,
            constants: c,
            alpha,
            beta,
            representation,
        }),
        "interference" => Box::new(InterferenceFamily {
            grid,
            constants: c,
            representation,
        }),
        other => return Err(PyValueError::new_err(format!("unknown family `{other}`"))),
    };
    let step = step_e.unwrap_or(floyd::default_step(energy));
    let v = py
        .detach(|| spin3d::current_vs_trajectory_report(fam.as_ref(), energy, &c, step))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("family", v.family)?;
    d.set_item("energy", v.energy)?;
    d.set_item("one_minus_qe_min", v.one_minus_qe_min)?;
    d.set_item("one_minus_qe_max", v.one_minus_qe_max)?;
    d.set_item("three_m", v.three_m)?;
    d.set_item("mismatch_min", v.mismatch_min)?;
    d.set_item("mismatch_max", v.mismatch_max)?;
    d.set_item("dimensionless_mismatch_min", v.dimensionless_mismatch_min)?;
    d.set_item("time_identity", residual_dict(py, &v.time_identity)?)?;
    d.set_item("v_dot_vb", residual_dict(py, &v.v_dot_vb)?)?;
    d.set_item("distinct", v.distinct)?;
    Ok(d)
}

#[pymodule]
fn qtraj(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstants>()?;
    m.add_class::<PyPotential>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyMicrostate>()?;
    m.add_class::<PyActionSlice>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(build_slice, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(legendre_check, m)?)?;
    m.add_function(wrap_pyfunction!(ehrenfest_check, m)?)?;
    m.add_function(wrap_pyfunction!(solve_spin, m)?)?;
    m.add_function(wrap_pyfunction!(spin_constraints, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_verdict, m)?)?;
    Ok(())
}
