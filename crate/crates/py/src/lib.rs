//! Python bindings: material parameters, the closed-form curve functions,
//! kinetic laws and the two point drivers. Driver results come back as
//! lists of dicts keyed like the CLI CSV columns.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sinterpress::integrator::{
    dilatometer_run as core_dilatometer, oedometric_press_run as core_press, IntegratorSettings,
    TimeSeriesRecord,
};
use sinterpress::material::{self, MaterialParams, PARAM_KEYS};
use sinterpress::micromech;

fn value_err(e: sinterpress::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: sinterpress::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Material parameter set with the built-in table defaults.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: MaterialParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new() -> Self {
        PyParams {
            inner: MaterialParams::default(),
        }
    }

    /// All accepted parameter keys.
    #[staticmethod]
    fn keys() -> Vec<String> {
        PARAM_KEYS.iter().map(|k| k.to_string()).collect()
    }

    fn get(&self, key: &str) -> PyResult<f64> {
        self.inner
            .get_key(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown parameter key `{key}`")))
    }

    fn set(&mut self, key: &str, value: f64) -> PyResult<()> {
        self.inner.set_key(key, value).map_err(value_err)?;
        self.inner.finalize().map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(sigma_m={}, E={}, rho_hat0={}, eta_v1={})",
            self.inner.sigma_m, self.inner.e_mod, self.inner.rho_hat0, self.inner.eta_v1
        )
    }
}

/// Plane-strain upper-bound compaction pressure p_c(rho_hat), MPa.
#[pyfunction]
fn compaction_pressure_plane(rho_hat: f64, sigma_m: f64) -> PyResult<f64> {
    micromech::compaction_pressure_plane(rho_hat, sigma_m).map_err(value_err)
}

/// Modified limit-analysis compaction pressure p_c(rho_hat), MPa (unfloored).
#[pyfunction]
fn compaction_pressure_mla(rho_hat: f64, sigma_m: f64) -> PyResult<f64> {
    micromech::compaction_pressure_mla(rho_hat, sigma_m).map_err(value_err)
}

/// Yield-surface parameters (p_c, c, M, A_c) at a density and temperature.
#[pyfunction]
fn hardening(params: &PyParams, rho_hat: f64, t_celsius: f64) -> PyResult<(f64, f64, f64, f64)> {
    let h = micromech::hardening_bundle(rho_hat, t_celsius, &params.inner).map_err(value_err)?;
    Ok((h.p_c, h.c, h.m_slope, h.a_c))
}

/// Sintering stress in MPa at a density and grain radius.
#[pyfunction]
fn sintering_stress(params: &PyParams, rho_hat: f64, r_grain_m: f64) -> PyResult<f64> {
    material::sintering_stress(rho_hat, r_grain_m, &params.inner).map_err(value_err)
}

/// Thermal softening factor f_T(T).
#[pyfunction]
fn thermal_softening(params: &PyParams, t_celsius: f64) -> f64 {
    material::thermal_softening(t_celsius, &params.inner)
}

/// Viscosity in MPa·s at a temperature and grain radius.
#[pyfunction]
fn viscosity(params: &PyParams, t_celsius: f64, r_grain_m: f64) -> f64 {
    material::viscosity(t_celsius, r_grain_m, &params.inner)
}

/// Constant-temperature grain-growth update over dt seconds.
#[pyfunction]
fn grain_growth_step(params: &PyParams, r_grain_m: f64, t_celsius: f64, dt_s: f64) -> f64 {
    material::grain_growth_step(r_grain_m, t_celsius, dt_s, &params.inner)
}

/// Meridian section of the yield surface: list of (p, q) pairs.
#[pyfunction]
#[pyo3(signature = (params, rho_hat, t_celsius=20.0, n=200))]
fn yield_surface(
    params: &PyParams,
    rho_hat: f64,
    t_celsius: f64,
    n: usize,
) -> PyResult<Vec<(f64, f64)>> {
    if n < 2 {
        return Err(PyValueError::new_err("n must be at least 2"));
    }
    let h = micromech::hardening_bundle(rho_hat, t_celsius, &params.inner).map_err(value_err)?;
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i == 0 {
            -h.c
        } else if i == n - 1 {
            h.p_c
        } else {
            -h.c + (h.p_c + h.c) * i as f64 / (n - 1) as f64
        };
        if let Some(q) = material::bp_meridian_q(p, -1.0, &h, &params.inner) {
            pts.push((p, q));
        }
    }
    Ok(pts)
}

fn records_to_dicts(records: Vec<TimeSeriesRecord>) -> Vec<BTreeMap<String, f64>> {
    records
        .into_iter()
        .map(|r| {
            let mut m = BTreeMap::new();
            m.insert("time_s".to_string(), r.time_s);
            m.insert("T_C".to_string(), r.t_c);
            m.insert("p_MPa".to_string(), r.p_mpa());
            m.insert("q_MPa".to_string(), r.q_mpa());
            m.insert("eps_axial".to_string(), r.eps_axial());
            m.insert("eps_p_trace".to_string(), r.eps_p_trace());
            m.insert("rho_hat".to_string(), r.rho_hat);
            m.insert("R_grain_m".to_string(), r.r_grain_m);
            m.insert("yield_value_MPa".to_string(), r.yield_value_mpa);
            m.insert("dissipation_MPa".to_string(), r.dissipation_mpa);
            m.insert("substeps".to_string(), r.substeps as f64);
            m.insert("sigma_axial_MPa".to_string(), r.sigma.c[0]);
            m.insert("sigma_lateral_MPa".to_string(), r.sigma.c[1]);
            m
        })
        .collect()
}

/// Free-sintering dilatometer ramp from 20 °C. Returns one dict per step.
#[pyfunction]
#[pyo3(signature = (params, ramp_rate_c_min=30.0, t_max_c=1200.0, max_dt_s=2.0))]
fn dilatometer(
    params: &PyParams,
    ramp_rate_c_min: f64,
    t_max_c: f64,
    max_dt_s: f64,
) -> PyResult<Vec<BTreeMap<String, f64>>> {
    let settings = IntegratorSettings::default();
    let records = core_dilatometer(&params.inner, ramp_rate_c_min, t_max_c, max_dt_s, &settings)
        .map_err(run_err)?;
    Ok(records_to_dicts(records))
}

/// Die pressing (rate-independent) with axial unload.
#[pyfunction]
#[pyo3(signature = (params, stroke_ratio=12.6/22.0, duration_s=10.0, unload_s=2.5, viscosity_mpa_s=1e-12, max_dt_s=0.05))]
fn press(
    params: &PyParams,
    stroke_ratio: f64,
    duration_s: f64,
    unload_s: f64,
    viscosity_mpa_s: f64,
    max_dt_s: f64,
) -> PyResult<Vec<BTreeMap<String, f64>>> {
    let settings = IntegratorSettings::default();
    let records = core_press(
        &params.inner,
        stroke_ratio,
        duration_s,
        unload_s,
        viscosity_mpa_s,
        max_dt_s,
        &settings,
    )
    .map_err(run_err)?;
    Ok(records_to_dicts(records))
}

#[pymodule]
fn sinterpress_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(compaction_pressure_plane, m)?)?;
    m.add_function(wrap_pyfunction!(compaction_pressure_mla, m)?)?;
    m.add_function(wrap_pyfunction!(hardening, m)?)?;
    m.add_function(wrap_pyfunction!(sintering_stress, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_softening, m)?)?;
    m.add_function(wrap_pyfunction!(viscosity, m)?)?;
    m.add_function(wrap_pyfunction!(grain_growth_step, m)?)?;
    m.add_function(wrap_pyfunction!(yield_surface, m)?)?;
    m.add_function(wrap_pyfunction!(dilatometer, m)?)?;
    m.add_function(wrap_pyfunction!(press, m)?)?;
    Ok(())
}
