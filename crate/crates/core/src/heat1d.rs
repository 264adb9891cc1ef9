//! One-dimensional transient heat conduction driving a column of material
//! points through a firing schedule.
//!
//! The temperature evolution is uncoupled from plastic flow: conduction is a
//! plain linear diffusion solve (backward Euler, tridiagonal), and the
//! mechanical points respond to their local temperature with zero-stress
//! visco-plastic steps. Density feeds back into the thermal capacity between
//! conduction steps.

use crate::error::{Error, Result};
use crate::integrator::{
    drive_program, piecewise_linear, Control, IntegratorSettings, LoadSegment, TemperatureSchedule,
    TimeSeriesRecord,
};
use crate::material::{MaterialParams, MaterialState};
use crate::tensor::SymTensor3;

/// Uniform 1D grid with prescribed-temperature boundaries on both faces.
#[derive(Debug, Clone)]
pub struct ThermalGrid {
    pub length_m: f64,
    /// Node temperatures, °C.
    pub temps_c: Vec<f64>,
    /// Node mass densities, kg/m³ (ρ̂ · ρ_fd of the attached points).
    pub density_kg_m3: Vec<f64>,
    /// Specific heat, J/(kg·K).
    pub c_h: f64,
    /// Thermal conductivity, W/(m·K).
    pub k_th: f64,
}

impl ThermalGrid {
    pub fn uniform(length_m: f64, n_nodes: usize, t_c: f64, density_kg_m3: f64, params: &MaterialParams) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::InvalidInput(format!(
                "thermal grid needs at least 3 nodes, got {n_nodes}"
            )));
        }
        if !(length_m > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid length must be positive, got {length_m}"
            )));
        }
        Ok(Self {
            length_m,
            temps_c: vec![t_c; n_nodes],
            density_kg_m3: vec![density_kg_m3; n_nodes],
            c_h: params.c_h,
            k_th: params.k_th,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.temps_c.len()
    }

    pub fn spacing(&self) -> f64 {
        self.length_m / (self.n_nodes() - 1) as f64
    }

    pub fn node_x(&self, i: usize) -> f64 {
        self.spacing() * i as f64
    }

    /// Interior enthalpy Σ ρ c_h T h over the interior nodes, J/m².
    pub fn interior_enthalpy(&self) -> f64 {
        let h = self.spacing();
        let n = self.n_nodes();
        (1..n - 1)
            .map(|i| self.density_kg_m3[i] * self.c_h * self.temps_c[i] * h)
            .sum()
    }
}

/// Boundary temperature history, piecewise linear in time, prescribed on
/// both faces. The far face follows the same curve unless a second one is
/// supplied.
#[derive(Debug, Clone)]
pub struct FiringSchedule {
    pub points: Vec<(f64, f64)>,
    pub points_far: Option<Vec<(f64, f64)>>,
}

fn check_points(points: &[(f64, f64)]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("firing schedule is empty".into()));
    }
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidInput(
                "firing schedule times must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

impl FiringSchedule {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        check_points(&points)?;
        Ok(Self {
            points,
            points_far: None,
        })
    }

    /// Separate histories for the two faces.
    pub fn with_faces(near: Vec<(f64, f64)>, far: Vec<(f64, f64)>) -> Result<Self> {
        check_points(&near)?;
        check_points(&far)?;
        Ok(Self {
            points: near,
            points_far: Some(far),
        })
    }

    pub fn eval(&self, t_s: f64) -> f64 {
        piecewise_linear(&self.points, t_s)
    }

    pub fn eval_far(&self, t_s: f64) -> f64 {
        match &self.points_far {
            Some(p) => piecewise_linear(p, t_s),
            None => self.eval(t_s),
        }
    }

    pub fn end_time(&self) -> f64 {
        let near = self.points.last().map(|p| p.0).unwrap_or(0.0);
        let far = self
            .points_far
            .as_ref()
            .and_then(|p| p.last().map(|q| q.0))
            .unwrap_or(0.0);
        near.max(far)
    }
}

/// One backward-Euler conduction step. Boundary temperatures are taken from
/// the schedule at t + dt; coefficients are frozen over the step.
///
/// Returns the boundary heat inflow of the step (J/m², both faces, evaluated
/// consistently with the implicit scheme) for energy accounting.
pub fn conduction_step(grid: &mut ThermalGrid, schedule: &FiringSchedule, t_s: f64, dt_s: f64) -> Result<f64> {
    if !(dt_s > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt_s}")));
    }
    let n = grid.n_nodes();
    let h = grid.spacing();
    if !(grid.k_th > 0.0) || !(grid.c_h > 0.0) {
        return Err(Error::SingularThermalSystem {
            reason: format!("non-physical coefficients k = {}, c_h = {}", grid.k_th, grid.c_h),
        });
    }
    for (i, &rho) in grid.density_kg_m3.iter().enumerate() {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::SingularThermalSystem {
                reason: format!("non-physical density {rho} at node {i}"),
            });
        }
    }

    let t_bc_near = schedule.eval(t_s + dt_s);
    let t_bc_far = schedule.eval_far(t_s + dt_s);

    // backward Euler in correction form: solve A δ = b for δ = T⁺ - T, so a
    // uniform equilibrium state is preserved bit-exactly (b vanishes there)
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 1.0;
    rhs[0] = t_bc_near - grid.temps_c[0];
    diag[n - 1] = 1.0;
    rhs[n - 1] = t_bc_far - grid.temps_c[n - 1];
    for i in 1..n - 1 {
        let r = grid.k_th * dt_s / (grid.density_kg_m3[i] * grid.c_h * h * h);
        sub[i] = -r;
        diag[i] = 1.0 + 2.0 * r;
        sup[i] = -r;
        rhs[i] = r * (grid.temps_c[i - 1] - 2.0 * grid.temps_c[i] + grid.temps_c[i + 1]);
    }

    // Thomas algorithm
    let mut c_star = vec![0.0; n];
    let mut d_star = vec![0.0; n];
    if diag[0].abs() <= 1e-300 {
        return Err(Error::SingularThermalSystem {
            reason: "zero pivot in tridiagonal solve".into(),
        });
    }
    c_star[0] = sup[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c_star[i - 1];
        if denom.abs() <= 1e-300 {
            return Err(Error::SingularThermalSystem {
                reason: format!("zero pivot in tridiagonal solve at node {i}"),
            });
        }
        c_star[i] = sup[i] / denom;
        d_star[i] = (rhs[i] - sub[i] * d_star[i - 1]) / denom;
    }
    let mut delta = vec![0.0; n];
    delta[n - 1] = d_star[n - 1];
    for i in (0..n - 1).rev() {
        delta[i] = d_star[i] - c_star[i] * delta[i + 1];
    }
    let new_t: Vec<f64> = grid.temps_c.iter().zip(&delta).map(|(t, d)| t + d).collect();

    // boundary inflow consistent with the interior stencil at t + dt
    let flux = grid.k_th * dt_s / h
        * ((new_t[0] - new_t[1]) + (new_t[n - 1] - new_t[n - 2]));

    grid.temps_c = new_t;
    Ok(flux)
}

/// Grid layout and stepping for a coupled firing run.
#[derive(Debug, Clone, Copy)]
pub struct ColumnSpec {
    pub length_m: f64,
    pub n_nodes: usize,
    pub t_initial_c: f64,
    /// Conduction/mechanics staggering step, s.
    pub dt_s: f64,
    /// Keep every k-th record per node (the final step is always kept).
    pub record_every: usize,
}

/// Staggered one-way-coupled run: each conduction step is followed by a
/// zero-stress visco-plastic step of every node at its local temperature;
/// node densities then refresh the thermal capacity.
///
/// Returns one record list per node.
pub fn coupled_column_run(
    params: &MaterialParams,
    spec: &ColumnSpec,
    schedule: &FiringSchedule,
    settings: &IntegratorSettings,
) -> Result<Vec<Vec<TimeSeriesRecord>>> {
    if spec.record_every == 0 {
        return Err(Error::InvalidInput("record_every must be at least 1".into()));
    }
    let mut grid = ThermalGrid::uniform(
        spec.length_m,
        spec.n_nodes,
        spec.t_initial_c,
        params.rho_hat0 * params.rho_fd_kg_m3(),
        params,
    )?;
    let n = grid.n_nodes();
    let mut states: Vec<MaterialState> =
        vec![MaterialState::initial(params, spec.t_initial_c); n];
    let mut records: Vec<Vec<TimeSeriesRecord>> = vec![Vec::new(); n];
    for (i, state) in states.iter().enumerate() {
        records[i].push(TimeSeriesRecord {
            time_s: 0.0,
            t_c: state.t_celsius,
            sigma: SymTensor3::zero(),
            eps_e: state.eps_e,
            eps_p: state.eps_p,
            rho_hat: state.rho_hat,
            r_grain_m: state.r_grain_m,
            yield_value_mpa: 0.0,
            dlambda: 0.0,
            dissipation_mpa: 0.0,
            substeps: 0,
        });
    }

    let t_end = schedule.end_time();
    let n_steps = (t_end / spec.dt_s).ceil() as usize;
    let mut t = 0.0;
    for step in 0..n_steps {
        let dt = spec.dt_s.min(t_end - t);
        if dt <= 0.0 {
            break;
        }
        conduction_step(&mut grid, schedule, t, dt)?;
        t += dt;

        for i in 0..n {
            let t_node = grid.temps_c[i];
            // zero-stress step at the node's new temperature
            let seg = LoadSegment {
                duration_s: dt,
                control: Control::StressTarget(SymTensor3::zero()),
                temperature: TemperatureSchedule::Constant(t_node),
                max_dt_s: dt,
            };
            let rows = drive_program(&states[i], &[seg], params, settings)?;
            let last = *rows.last().expect("driver emits at least one row");
            states[i] = MaterialState {
                eps_e: last.eps_e,
                eps_p: last.eps_p,
                rho_hat: last.rho_hat,
                r_grain_m: last.r_grain_m,
                t_celsius: last.t_c,
            };
            if step % spec.record_every == 0 || step == n_steps - 1 {
                let mut rec = last;
                rec.time_s = t;
                records[i].push(rec);
            }
            grid.density_kg_m3[i] = states[i].rho_hat * params.rho_fd_kg_m3();
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> MaterialParams {
        MaterialParams::default()
    }

    #[test]
    fn equilibrium_is_preserved() {
        let p = params();
        let mut grid = ThermalGrid::uniform(0.02, 11, 300.0, 2000.0, &p).unwrap();
        let schedule = FiringSchedule::new(vec![(0.0, 300.0), (1e6, 300.0)]).unwrap();
        for k in 0..50 {
            conduction_step(&mut grid, &schedule, k as f64, 1.0).unwrap();
        }
        for &t in &grid.temps_c {
            assert_relative_eq!(t, 300.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn steady_state_profile_is_uniform_with_equal_faces() {
        // both faces share the schedule, so the steady solution is flat even
        // from a non-uniform start
        let p = params();
        let mut grid = ThermalGrid::uniform(0.02, 21, 20.0, 2000.0, &p).unwrap();
        for (i, t) in grid.temps_c.iter_mut().enumerate() {
            *t = 20.0 + (i % 5) as f64 * 7.0;
        }
        let schedule = FiringSchedule::new(vec![(0.0, 120.0), (1e9, 120.0)]).unwrap();
        for k in 0..20000 {
            conduction_step(&mut grid, &schedule, k as f64, 1.0).unwrap();
        }
        for &t in &grid.temps_c {
            assert_relative_eq!(t, 120.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn steady_state_with_unequal_faces_is_linear() {
        // fixed unequal boundary temperatures relax to the Laplace solution:
        // a linear interior profile
        let p = params();
        let n = 21;
        let mut grid = ThermalGrid::uniform(0.02, n, 150.0, 2000.0, &p).unwrap();
        let schedule = FiringSchedule::with_faces(
            vec![(0.0, 100.0), (1e9, 100.0)],
            vec![(0.0, 300.0), (1e9, 300.0)],
        )
        .unwrap();
        let mut time = 0.0;
        for _ in 0..50000 {
            conduction_step(&mut grid, &schedule, time, 0.5).unwrap();
            time += 0.5;
        }
        for (i, &t) in grid.temps_c.iter().enumerate() {
            let expect = 100.0 + 200.0 * i as f64 / (n - 1) as f64;
            assert_relative_eq!(t, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn maximum_principle_holds() {
        let p = params();
        let mut grid = ThermalGrid::uniform(0.02, 31, 25.0, 2000.0, &p).unwrap();
        let schedule =
            FiringSchedule::new(vec![(0.0, 25.0), (100.0, 900.0), (200.0, 400.0)]).unwrap();
        let mut t = 0.0;
        let mut lo = 25.0f64;
        let mut hi = 25.0f64;
        for _ in 0..400 {
            conduction_step(&mut grid, &schedule, t, 0.5).unwrap();
            t += 0.5;
            lo = lo.min(schedule.eval(t));
            hi = hi.max(schedule.eval(t));
            for &temp in &grid.temps_c {
                assert!(temp >= lo - 1e-9 && temp <= hi + 1e-9, "T = {temp} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn energy_balance_closes() {
        let p = params();
        let mut grid = ThermalGrid::uniform(0.02, 41, 20.0, 2000.0, &p).unwrap();
        let schedule = FiringSchedule::new(vec![(0.0, 20.0), (50.0, 700.0), (400.0, 700.0)]).unwrap();
        let h0 = grid.interior_enthalpy();
        let mut inflow = 0.0;
        let mut t = 0.0;
        for _ in 0..800 {
            inflow += conduction_step(&mut grid, &schedule, t, 0.5).unwrap();
            t += 0.5;
        }
        let dh = grid.interior_enthalpy() - h0;
        assert_relative_eq!(dh, inflow, max_relative = 1e-8);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let p = params();
        assert!(ThermalGrid::uniform(0.02, 2, 20.0, 2000.0, &p).is_err());
        assert!(ThermalGrid::uniform(-1.0, 5, 20.0, 2000.0, &p).is_err());
        assert!(FiringSchedule::new(vec![]).is_err());
        assert!(FiringSchedule::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        let mut grid = ThermalGrid::uniform(0.02, 5, 20.0, 2000.0, &p).unwrap();
        grid.density_kg_m3[2] = -5.0;
        let schedule = FiringSchedule::new(vec![(0.0, 20.0), (10.0, 30.0)]).unwrap();
        assert!(matches!(
            conduction_step(&mut grid, &schedule, 0.0, 1.0),
            Err(Error::SingularThermalSystem { .. })
        ));
    }

    #[test]
    fn uniform_schedule_keeps_nodes_identical() {
        let p = params();
        let spec = ColumnSpec {
            length_m: 0.022,
            n_nodes: 5,
            t_initial_c: 1100.0,
            dt_s: 5.0,
            record_every: 1,
        };
        // initial field equal to the constant boundary value: conduction is
        // trivial and every node sees the same history
        let schedule = FiringSchedule::new(vec![(0.0, 1100.0), (60.0, 1100.0)]).unwrap();
        let settings = IntegratorSettings::default();
        let recs = coupled_column_run(&p, &spec, &schedule, &settings).unwrap();
        let reference = &recs[0];
        for node in &recs[1..] {
            assert_eq!(node.len(), reference.len());
            for (a, b) in node.iter().zip(reference.iter()) {
                assert!((a.rho_hat - b.rho_hat).abs() < 1e-12);
                assert!((a.t_c - b.t_c).abs() < 1e-12);
            }
        }
        // it actually sinters at 1100 C
        assert!(reference.last().unwrap().rho_hat > p.rho_hat0 + 1e-3);
    }

    #[test]
    fn boundary_nodes_densify_before_the_center() {
        let p = params();
        let spec = ColumnSpec {
            length_m: 0.04,
            n_nodes: 5,
            t_initial_c: 20.0,
            dt_s: 2.0,
            record_every: 1,
        };
        // fast boundary ramp: the center lags by diffusion
        let schedule = FiringSchedule::new(vec![(0.0, 20.0), (30.0, 1150.0), (240.0, 1150.0)]).unwrap();
        let settings = IntegratorSettings::default();
        let recs = coupled_column_run(&p, &spec, &schedule, &settings).unwrap();
        let boundary = &recs[0];
        let center = &recs[2];
        let mut strictly_ahead = 0;
        for (b, c) in boundary.iter().zip(center.iter()) {
            assert!(b.rho_hat >= c.rho_hat - 1e-12, "lag ordering violated at t = {}", b.time_s);
            if b.rho_hat > c.rho_hat + 1e-9 {
                strictly_ahead += 1;
            }
        }
        assert!(strictly_ahead > 3, "boundary never led the center");
        assert!(boundary.last().unwrap().rho_hat > p.rho_hat0 + 1e-3);
    }

    #[test]
    fn high_conductivity_collapses_to_a_single_point() {
        let mut p = params();
        p.k_th = 1e6;
        p.finalize().unwrap();
        let spec = ColumnSpec {
            length_m: 0.022,
            n_nodes: 5,
            t_initial_c: 20.0,
            dt_s: 2.0,
            record_every: 1,
        };
        let schedule = FiringSchedule::new(vec![(0.0, 20.0), (30.0, 1150.0), (120.0, 1150.0)]).unwrap();
        let settings = IntegratorSettings::default();
        let recs = coupled_column_run(&p, &spec, &schedule, &settings).unwrap();
        let last_per_node: Vec<f64> = recs.iter().map(|r| r.last().unwrap().rho_hat).collect();
        let spread = last_per_node
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - last_per_node.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread < 1e-6, "density spread {spread} too large for the lumped limit");
        assert!(last_per_node[0] > p.rho_hat0 + 1e-3);
    }
}
