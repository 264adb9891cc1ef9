//! Time integration of the visco-plastic law (elastic predictor plus a fully
//! implicit Perzyna return mapping) and material-point drivers for
//! compaction and free sintering.
//!
//! The return mapping solves the six-component tensor residual
//!
//!   (η_v/dt) Δε_p - ⟨ℱ(σ̂)⟩ Q(σ̂) = 0
//!
//! with stress, density, sintering stress and hardening all evaluated at the
//! end of the step. The density update ρ̂ ← ρ̂ exp(-tr Δε_p) is exact, and
//! the grain radius is advanced beforehand with the midpoint temperature and
//! held fixed inside the stress Newton.

use crate::error::{Error, Result};
use crate::material::{
    bp_yield, bp_yield_gradient, elastic_stress, grain_growth_step, sintering_stress, viscosity,
    MaterialParams, MaterialState,
};
use crate::micromech::hardening_bundle;
use crate::tensor::SymTensor3;

/// How the flow viscosity is evaluated during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityMode {
    /// Full law η_v1 (R/R0)^w exp(Q_E/(R_g T)).
    Arrhenius,
    /// Fixed value in MPa·s; pressing is modeled in the rate-independent
    /// limit with a low constant viscosity.
    Constant(f64),
}

/// Newton / substepping knobs.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorSettings {
    /// Relative residual tolerance (scaled by sigma_m).
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Recursive bisection depth for the local step.
    pub substep_max_levels: usize,
    /// Starting time step of the drivers, s.
    pub dt_initial: f64,
    pub viscosity_mode: ViscosityMode,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            substep_max_levels: 20,
            dt_initial: 0.25,
            viscosity_mode: ViscosityMode::Arrhenius,
        }
    }
}

/// Temperature as a function of segment-local time.
#[derive(Debug, Clone)]
pub enum TemperatureSchedule {
    Constant(f64),
    /// Linear ramp from `start_c` at `rate_c_per_min`.
    Ramp { start_c: f64, rate_c_per_min: f64 },
    /// Piecewise-linear (time s, temperature °C); clamped at the ends.
    Table(Vec<(f64, f64)>),
}

impl TemperatureSchedule {
    pub fn eval(&self, tau_s: f64) -> f64 {
        match self {
            Self::Constant(t) => *t,
            Self::Ramp { start_c, rate_c_per_min } => start_c + rate_c_per_min * tau_s / 60.0,
            Self::Table(pts) => piecewise_linear(pts, tau_s),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Table(pts) = self {
            if pts.is_empty() {
                return Err(Error::InvalidInput("temperature table is empty".into()));
            }
            for w in pts.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(Error::InvalidInput(
                        "temperature table times must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn piecewise_linear(pts: &[(f64, f64)], x: f64) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    if x <= pts[0].0 {
        return pts[0].1;
    }
    if x >= pts[pts.len() - 1].0 {
        return pts[pts.len() - 1].1;
    }
    for w in pts.windows(2) {
        if x <= w[1].0 {
            let f = (x - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + f * (w[1].1 - w[0].1);
        }
    }
    pts[pts.len() - 1].1
}

/// Control condition for one tensor component in mixed mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisCondition {
    /// Prescribed strain rate, 1/s.
    StrainRate(f64),
    /// Stress target at segment end, MPa (reached linearly from the value at
    /// segment entry).
    Stress(f64),
}

/// Loading mode of a segment.
#[derive(Debug, Clone)]
pub enum Control {
    /// Full prescribed strain-rate tensor, 1/s.
    StrainRate(SymTensor3),
    /// Full stress-tensor target at segment end, MPa.
    StressTarget(SymTensor3),
    /// Exactly one condition per tensor component (order 11 22 33 12 13 23).
    Mixed([AxisCondition; 6]),
}

/// One time-ordered control segment of a load program.
#[derive(Debug, Clone)]
pub struct LoadSegment {
    pub duration_s: f64,
    pub control: Control,
    pub temperature: TemperatureSchedule,
    pub max_dt_s: f64,
}

impl LoadSegment {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "segment duration must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.max_dt_s > 0.0) {
            return Err(Error::InvalidInput("segment max_dt must be positive".into()));
        }
        self.temperature.validate()
    }
}

/// Outcome of one integrated step.
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    pub state: MaterialState,
    pub sigma: SymTensor3,
    /// Yield value ℱ at the converged state, MPa.
    pub yield_value: f64,
    /// Plastic multiplier increment ‖Δε_p‖.
    pub dlambda: f64,
    /// Mechanical dissipation σ̂ · Δε_p of the step, MPa.
    pub dissipation: f64,
    pub converged: bool,
    /// Number of leaf substeps the increment was split into.
    pub substeps_used: usize,
}

/// One output row of a driver run. Carries the full state snapshot; the CSV
/// writers derive their columns from it.
#[derive(Debug, Clone, Copy)]
pub struct TimeSeriesRecord {
    pub time_s: f64,
    pub t_c: f64,
    pub sigma: SymTensor3,
    pub eps_e: SymTensor3,
    pub eps_p: SymTensor3,
    pub rho_hat: f64,
    pub r_grain_m: f64,
    pub yield_value_mpa: f64,
    /// Plastic multiplier increment of the step (zero for elastic steps).
    pub dlambda: f64,
    pub dissipation_mpa: f64,
    pub substeps: usize,
}

impl TimeSeriesRecord {
    pub fn p_mpa(&self) -> f64 {
        -self.sigma.trace() / 3.0
    }

    pub fn q_mpa(&self) -> f64 {
        let dev = self.sigma.dev();
        (1.5 * dev.double_dot(&dev)).max(0.0).sqrt()
    }

    /// Total axial logarithmic strain (11 component).
    pub fn eps_axial(&self) -> f64 {
        self.eps_e.c[0] + self.eps_p.c[0]
    }

    pub fn eps_p_trace(&self) -> f64 {
        self.eps_p.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.time_s.is_finite()
            && self.t_c.is_finite()
            && self.sigma.is_finite()
            && self.eps_e.is_finite()
            && self.eps_p.is_finite()
            && self.rho_hat.is_finite()
            && self.r_grain_m.is_finite()
            && self.yield_value_mpa.is_finite()
            && self.dissipation_mpa.is_finite()
    }
}

fn record_from(state: &MaterialState, time_s: f64, sigma: SymTensor3, yield_value: f64, dlambda: f64, dissipation: f64, substeps: usize) -> TimeSeriesRecord {
    TimeSeriesRecord {
        time_s,
        t_c: state.t_celsius,
        sigma,
        eps_e: state.eps_e,
        eps_p: state.eps_p,
        rho_hat: state.rho_hat,
        r_grain_m: state.r_grain_m,
        yield_value_mpa: yield_value,
        dlambda,
        dissipation_mpa: dissipation,
        substeps,
    }
}

/// C¹ positive part: zero for f ≤ 0, quadratic ramp over [0, band], linear
/// beyond. Keeps the Newton residual smooth at the yield onset without
/// introducing creep below yield.
fn smooth_pos(f: f64, band: f64) -> f64 {
    if f <= 0.0 {
        0.0
    } else if f >= band {
        f - 0.5 * band
    } else {
        f * f / (2.0 * band)
    }
}

/// Gaussian elimination with partial pivoting on the leading n×n block.
fn solve_dense<const N: usize>(n: usize, a: &mut [[f64; N]; N], b: &mut [f64; N]) -> Result<()> {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col][col].abs();
        for row in (col + 1)..n {
            let mag = a[row][col].abs();
            if mag > best {
                best = mag;
                piv = row;
            }
        }
        if best <= 1e-300 {
            return Err(Error::InvalidInput("singular Newton system".into()));
        }
        if piv != col {
            a.swap(piv, col);
            b.swap(piv, col);
        }
        let d = a[col][col];
        for row in (col + 1)..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * b[k];
        }
        b[col] = s / a[col][col];
    }
    Ok(())
}

struct ResidualEval {
    /// Flow-rule residual (Δε_p - Δλ Q) scaled to stress units, plus the
    /// overstress equation (η/dt) Δλ - ⟨ℱ⟩ in the last slot.
    r: [f64; 7],
    sigma: SymTensor3,
    sigma_hat: SymTensor3,
    f_raw: f64,
    rho_new: f64,
}

fn norm7(r: &[f64; 7]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct LocalProblem<'a> {
    eps_e_trial: SymTensor3,
    rho_n: f64,
    r_new: f64,
    t_new: f64,
    lam: f64, // eta_v / dt, MPa
    band: f64,
    /// Rate-independent limit: the viscous term is negligible against the
    /// overstress band, so the last residual slot carries plain consistency
    /// ℱ = 0 instead of (η/dt)Δλ - ⟨ℱ⟩. Avoids inverting the quadratic
    /// smoothing ramp through a square root at convergence.
    consistency: bool,
    /// Restrict the flow direction to ±I/√3. Engaged for numerically
    /// hydrostatic trial states, where the deviatoric direction is noise and
    /// the apex singularity of the normalized gradient defeats the tensor
    /// Newton.
    volumetric: bool,
    params: &'a MaterialParams,
}

impl LocalProblem<'_> {
    /// z = (Δε_p components, Δλ).
    fn eval(&self, z: &[f64; 7]) -> Result<ResidualEval> {
        let p = self.params;
        let x = SymTensor3::from_components([z[0], z[1], z[2], z[3], z[4], z[5]]);
        let dlambda = z[6];
        let eps_e = self.eps_e_trial.sub(&x);
        let sigma = elastic_stress(&eps_e, self.t_new, p);
        let rho_new = self.rho_n * (-x.trace()).exp();
        // full density is a hard wall: beyond the hardening clamp the
        // compaction curve saturates and spurious flow roots would appear
        if rho_new >= 1.0 - 1e-12 {
            return Err(crate::error::Error::Domain {
                name: "rho_hat",
                value: rho_new,
                domain: "(0, 1)",
            });
        }
        let sigma_s = sintering_stress(rho_new, self.r_new, p)?;
        let sigma_hat = sigma.sub(&SymTensor3::spherical(sigma_s));
        let h = hardening_bundle(rho_new, self.t_new, p)?;
        let f_raw = bp_yield(&sigma_hat, &h, p);
        let f_sm = smooth_pos(f_raw, self.band);
        let q_dir = if self.volumetric {
            let grad = crate::material::bp_yield_gradient_raw(&sigma_hat, &h, p);
            let sign = if grad.trace() >= 0.0 { 1.0 } else { -1.0 };
            SymTensor3::spherical(sign / 3.0f64.sqrt())
        } else {
            bp_yield_gradient(&sigma_hat, &h, p)?
        };
        let flow = x.add_scaled(&q_dir, -dlambda);
        let scale = 2.0 * p.mu_e;
        let overstress = if self.consistency {
            f_raw
        } else {
            self.lam * dlambda - f_sm
        };
        let r = [
            flow.c[0] * scale,
            flow.c[1] * scale,
            flow.c[2] * scale,
            flow.c[3] * scale,
            flow.c[4] * scale,
            flow.c[5] * scale,
            overstress,
        ];
        Ok(ResidualEval {
            r,
            sigma,
            sigma_hat,
            f_raw,
            rho_new,
        })
    }
}

struct LeafOutcome {
    state: MaterialState,
    sigma: SymTensor3,
    yield_value: f64,
    dlambda: f64,
    dissipation: f64,
}

/// One unsplit implicit step. `Err` means the Newton loop failed and the
/// caller should bisect.
fn single_step(
    state: &MaterialState,
    delta_eps: &SymTensor3,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    settings: &IntegratorSettings,
) -> Result<LeafOutcome> {
    let t_mid = 0.5 * (state.t_celsius + t_new);
    let r_new = grain_growth_step(state.r_grain_m, t_mid, dt, params);
    let eps_e_trial = state.eps_e.add(delta_eps);

    let sigma_trial = elastic_stress(&eps_e_trial, t_new, params);
    let sigma_s_trial = sintering_stress(state.rho_hat, r_new, params)?;
    let sigma_hat_trial = sigma_trial.sub(&SymTensor3::spherical(sigma_s_trial));
    let h_trial = hardening_bundle(state.rho_hat, t_new, params)?;
    let f_trial = bp_yield(&sigma_hat_trial, &h_trial, params);

    if f_trial <= 0.0 {
        let mut new_state = *state;
        new_state.eps_e = eps_e_trial;
        new_state.r_grain_m = r_new;
        new_state.t_celsius = t_new;
        return Ok(LeafOutcome {
            state: new_state,
            sigma: sigma_trial,
            yield_value: f_trial,
            dlambda: 0.0,
            dissipation: 0.0,
        });
    }

    let eta = match settings.viscosity_mode {
        ViscosityMode::Arrhenius => viscosity(t_new, r_new, params),
        ViscosityMode::Constant(v) => v,
    };
    let q_trial = {
        let dev = sigma_hat_trial.dev();
        (1.5 * dev.double_dot(&dev)).max(0.0).sqrt()
    };
    let lam = eta / dt;
    let band = 1e-6 * params.sigma_m;
    let problem = LocalProblem {
        eps_e_trial,
        rho_n: state.rho_hat,
        r_new,
        t_new,
        lam,
        band,
        consistency: lam * (delta_eps.norm() + 1e-9) < 1e-3 * band,
        volumetric: q_trial <= 1e-6 * params.sigma_m,
        params,
    };

    let tol = settings.newton_tol * params.sigma_m;
    let q_trial_dir = if problem.volumetric {
        let grad = crate::material::bp_yield_gradient_raw(&sigma_hat_trial, &h_trial, params);
        let sign = if grad.trace() >= 0.0 { 1.0 } else { -1.0 };
        SymTensor3::spherical(sign / 3.0f64.sqrt())
    } else {
        bp_yield_gradient(&sigma_hat_trial, &h_trial, params)?
    };

    // Newton from zero handles the viscous-regularized and mildly
    // overstressed regimes in a few iterations; states deep outside a small
    // surface defeat it (the overstress falls hyperbolically along the
    // flow), so on failure a bracketed scalar presolve along the frozen
    // trial direction restarts it inside the basin.
    let first_budget = settings.newton_max_iter.min(12);
    let (z, eval) = match newton_solve(&problem, [0.0; 7], first_budget, tol, dt) {
        Ok(solution) => solution,
        Err(first_err) => {
            let dl0 = presolve_multiplier(&problem, &q_trial_dir, state.rho_hat, delta_eps.norm(), f_trial);
            let z0 = [
                dl0 * q_trial_dir.c[0],
                dl0 * q_trial_dir.c[1],
                dl0 * q_trial_dir.c[2],
                dl0 * q_trial_dir.c[3],
                dl0 * q_trial_dir.c[4],
                dl0 * q_trial_dir.c[5],
                dl0,
            ];
            if problem.eval(&z0).is_err() {
                return Err(first_err);
            }
            newton_solve(&problem, z0, settings.newton_max_iter, tol, dt)?
        }
    };

    let delta_eps_p = SymTensor3::from_components([z[0], z[1], z[2], z[3], z[4], z[5]]);
    let mut new_state = *state;
    new_state.eps_e = eps_e_trial.sub(&delta_eps_p);
    new_state.eps_p = state.eps_p.add(&delta_eps_p);
    new_state.rho_hat = eval.rho_new;
    new_state.r_grain_m = r_new;
    new_state.t_celsius = t_new;
    Ok(LeafOutcome {
        state: new_state,
        sigma: eval.sigma,
        yield_value: eval.f_raw,
        dlambda: delta_eps_p.norm(),
        dissipation: eval.sigma_hat.double_dot(&delta_eps_p),
    })
}

fn non_convergence(dt: f64, residual: f64, levels: usize) -> Error {
    Error::NonConvergence {
        time_s: 0.0,
        dt_s: dt,
        residual,
        levels,
    }
}

/// Damped Newton with central-difference Jacobians on the 7-residual.
/// Central differences are exact on the quadratic overstress band, where
/// forward differences stall; probes that leave the admissible domain
/// (density wall) fall back to one-sided differences.
fn newton_solve(
    problem: &LocalProblem<'_>,
    z_init: [f64; 7],
    budget: usize,
    tol: f64,
    dt: f64,
) -> Result<([f64; 7], ResidualEval)> {
    let mut z = z_init;
    let mut eval = problem.eval(&z)?;
    let fd_step = 1e-8;
    let mut prev_rnorm = f64::INFINITY;

    for _ in 0..budget {
        let rnorm = norm7(&eval.r);
        // once inside tolerance, keep polishing while convergence is still
        // fast: the quadratic overstress band widens the residual tolerance
        // into a square-root tolerance on ℱ, so cheap extra digits matter in
        // the rate-independent limit
        if rnorm <= tol && (rnorm <= 1e-4 * tol || prev_rnorm < 2.0 * rnorm) {
            break;
        }
        prev_rnorm = rnorm;
        let mut jac = [[0.0; 7]; 7];
        for k in 0..7 {
            let mut zp = z;
            zp[k] += fd_step;
            let mut zm = z;
            zm[k] -= fd_step;
            match (problem.eval(&zp), problem.eval(&zm)) {
                (Ok(ep), Ok(em)) => {
                    for i in 0..7 {
                        jac[i][k] = (ep.r[i] - em.r[i]) / (2.0 * fd_step);
                    }
                }
                (Ok(ep), Err(_)) => {
                    for i in 0..7 {
                        jac[i][k] = (ep.r[i] - eval.r[i]) / fd_step;
                    }
                }
                (Err(_), Ok(em)) => {
                    for i in 0..7 {
                        jac[i][k] = (eval.r[i] - em.r[i]) / fd_step;
                    }
                }
                (Err(_), Err(_)) => return Err(non_convergence(dt, rnorm, 0)),
            }
        }
        let mut rhs = [0.0; 7];
        for i in 0..7 {
            rhs[i] = -eval.r[i];
        }
        solve_dense(7, &mut jac, &mut rhs).map_err(|_| non_convergence(dt, rnorm, 0))?;

        // backtracking on the residual norm; the multiplier stays non-negative
        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1.0 / 1024.0 {
            let mut cand = z;
            for k in 0..7 {
                cand[k] += step * rhs[k];
            }
            cand[6] = cand[6].max(0.0);
            match problem.eval(&cand) {
                Ok(e) if norm7(&e.r) < rnorm => {
                    z = cand;
                    eval = e;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            if rnorm <= tol {
                break;
            }
            return Err(non_convergence(dt, rnorm, 0));
        }
    }
    let rnorm = norm7(&eval.r);
    if !(rnorm <= tol) {
        return Err(non_convergence(dt, rnorm, 0));
    }
    Ok((z, eval))
}

/// Scalar multiplier estimate along the frozen trial flow direction: finds
/// the first zero of the overstress balance on the ray. The balance need
/// not be unimodal (regularization crossovers put positive local minima on
/// the approach), so positive minima are stepped over and the expansion
/// resumes; the best point seen is the fallback when no crossing exists
/// before the full-density wall.
fn presolve_balance(
    problem: &LocalProblem<'_>,
    q_trial_dir: &SymTensor3,
    rho_n: f64,
    delta_norm: f64,
    f_trial: f64,
) -> f64 {
    // positive while the state is overstressed, decreasing on the approach
    let balance = |dl: f64| -> Result<f64> {
        let zc = [
            dl * q_trial_dir.c[0],
            dl * q_trial_dir.c[1],
            dl * q_trial_dir.c[2],
            dl * q_trial_dir.c[3],
            dl * q_trial_dir.c[4],
            dl * q_trial_dir.c[5],
            dl,
        ];
        let r6 = problem.eval(&zc)?.r[6];
        Ok(if problem.consistency { r6 } else { -r6 })
    };
    let tr_q = q_trial_dir.trace();
    let dl_cap = if tr_q < 0.0 {
        0.999 * ((1.0 - 1e-9) / rho_n).ln() / (-tr_q)
    } else {
        f64::INFINITY
    };

    let bisect_crossing = |mut a: f64, mut b: f64| -> f64 {
        for _ in 0..48 {
            let mid = 0.5 * (a + b);
            match balance(mid) {
                Ok(v) if v > 0.0 => a = mid,
                _ => b = mid,
            }
        }
        0.5 * (a + b)
    };
    // golden-section minimum of the balance on [a, b]
    let minimize = |mut a: f64, mut b: f64| -> f64 {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = balance(x1).unwrap_or(f64::INFINITY);
        let mut f2 = balance(x2).unwrap_or(f64::INFINITY);
        for _ in 0..60 {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = balance(x1).unwrap_or(f64::INFINITY);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = balance(x2).unwrap_or(f64::INFINITY);
            }
        }
        0.5 * (a + b)
    };

    let mut prev = 0.0;
    let mut bal_prev = f_trial;
    let mut best = (0.0, f_trial);
    let mut dl = (delta_norm + 1e-9).max(1e-12).min(dl_cap);
    let mut dips = 0;
    for _ in 0..110 {
        match balance(dl) {
            Ok(v) if v <= 0.0 => return bisect_crossing(prev, dl),
            Ok(v) if v > bal_prev && dips < 5 => {
                // jumped over a dip; resolve it, then either finish at a
                // crossing or step past a positive local minimum
                dips += 1;
                let dl_min = minimize(prev, dl);
                match balance(dl_min) {
                    Ok(vm) if vm <= 0.0 => return bisect_crossing(prev, dl_min),
                    Ok(vm) => {
                        if vm < best.1 {
                            best = (dl_min, vm);
                        }
                        prev = dl;
                        bal_prev = v;
                    }
                    Err(_) => return best.0,
                }
            }
            Ok(v) => {
                if v < best.1 {
                    best = (dl, v);
                }
                prev = dl;
                bal_prev = v;
            }
            Err(_) => return best.0,
        }
        if dl >= dl_cap {
            return best.0;
        }
        dl = (dl * 2.0).min(dl_cap);
    }
    best.0
}

/// Second multiplier estimate: bisect the effective pressure onto the
/// center of the admissible pressure band [-c, p_c] along the frozen ray.
/// Both sides of that equation are monotone in the multiplier for
/// compactive rays, so the root is found robustly even when the admissible
/// window of the yield value itself is a needle too narrow to scan.
fn presolve_band_center(
    problem: &LocalProblem<'_>,
    q_trial_dir: &SymTensor3,
    rho_n: f64,
    delta_norm: f64,
) -> Option<f64> {
    let p = problem.params;
    let gap = |dl: f64| -> Result<f64> {
        let x = q_trial_dir.scale(dl);
        let eps_e = problem.eps_e_trial.sub(&x);
        let sigma = elastic_stress(&eps_e, problem.t_new, p);
        let rho_new = problem.rho_n * (-x.trace()).exp();
        if rho_new >= 1.0 - 1e-12 {
            return Err(Error::Domain {
                name: "rho_hat",
                value: rho_new,
                domain: "(0, 1)",
            });
        }
        let sigma_s = sintering_stress(rho_new, problem.r_new, p)?;
        let p_hat = -sigma.trace() / 3.0 + sigma_s;
        let h = hardening_bundle(rho_new, problem.t_new, p)?;
        Ok(p_hat - 0.5 * (h.p_c - h.c))
    };
    let start = gap(0.0).ok()?;
    let sign = if start >= 0.0 { 1.0 } else { -1.0 };
    let tr_q = q_trial_dir.trace();
    let dl_cap = if sign * tr_q < 0.0 {
        // marching direction must densify (or dilate) toward the band
        0.999 * ((1.0 - 1e-9) / rho_n).ln().abs() / tr_q.abs()
    } else {
        f64::INFINITY
    };
    let mut lo = 0.0;
    let mut dl = (delta_norm + 1e-9).max(1e-12).min(dl_cap);
    let mut crossed = false;
    for _ in 0..90 {
        match gap(dl) {
            Ok(v) if sign * v <= 0.0 => {
                crossed = true;
                break;
            }
            Ok(_) => lo = dl,
            Err(_) => break,
        }
        if dl >= dl_cap {
            break;
        }
        dl = (dl * 2.0).min(dl_cap);
    }
    if !crossed {
        return None;
    }
    let mut hi = dl;
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        match gap(mid) {
            Ok(v) if sign * v > 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    Some(0.5 * (lo + hi))
}

/// Best multiplier start among the presolve candidates, judged by the full
/// residual norm.
fn presolve_multiplier(
    problem: &LocalProblem<'_>,
    q_trial_dir: &SymTensor3,
    rho_n: f64,
    delta_norm: f64,
    f_trial: f64,
) -> f64 {
    let mut candidates = vec![presolve_balance(problem, q_trial_dir, rho_n, delta_norm, f_trial)];
    if let Some(dl) = presolve_band_center(problem, q_trial_dir, rho_n, delta_norm) {
        candidates.push(dl);
    }
    let mut best = (0.0, f64::INFINITY);
    for dl in candidates {
        let z = [
            dl * q_trial_dir.c[0],
            dl * q_trial_dir.c[1],
            dl * q_trial_dir.c[2],
            dl * q_trial_dir.c[3],
            dl * q_trial_dir.c[4],
            dl * q_trial_dir.c[5],
            dl,
        ];
        if let Ok(e) = problem.eval(&z) {
            let n = norm7(&e.r);
            if n < best.1 {
                best = (dl, n);
            }
        }
    }
    best.0
}

/// Cap on single-step attempts per return-mapping call; bounds the cost of
/// a failing recursion tree, which is otherwise exponential in the
/// substepping depth.
const MAX_STEP_ATTEMPTS: usize = 4096;

#[allow(clippy::too_many_arguments)]
fn step_recursive(
    state: &MaterialState,
    delta_eps: &SymTensor3,
    t_start: f64,
    t_end: f64,
    dt: f64,
    level: usize,
    params: &MaterialParams,
    settings: &IntegratorSettings,
    attempts: &mut usize,
    leaves: &mut usize,
    dlambda: &mut f64,
    dissipation: &mut f64,
) -> Result<LeafOutcome> {
    *attempts += 1;
    if *attempts > MAX_STEP_ATTEMPTS {
        return Err(Error::NonConvergence {
            time_s: 0.0,
            dt_s: dt,
            residual: f64::NAN,
            levels: level,
        });
    }
    match single_step(state, delta_eps, t_end, dt, params, settings) {
        Ok(out) => {
            *leaves += 1;
            *dlambda += out.dlambda;
            *dissipation += out.dissipation;
            Ok(out)
        }
        Err(err) => {
            if level >= settings.substep_max_levels {
                return Err(match err {
                    Error::NonConvergence { dt_s, residual, .. } => Error::NonConvergence {
                        time_s: 0.0,
                        dt_s,
                        residual,
                        levels: level,
                    },
                    other => other,
                });
            }
            let half = delta_eps.scale(0.5);
            let t_half = 0.5 * (t_start + t_end);
            let first = step_recursive(
                state, &half, t_start, t_half, dt / 2.0, level + 1, params, settings, attempts,
                leaves, dlambda, dissipation,
            )?;
            step_recursive(
                &first.state, &half, t_half, t_end, dt / 2.0, level + 1, params, settings,
                attempts, leaves, dlambda, dissipation,
            )
        }
    }
}

/// Implicit visco-plastic step: elastic predictor, Perzyna return mapping,
/// recursive bisection of the increment on non-convergence.
pub fn return_map_step(
    state: &MaterialState,
    delta_eps: &SymTensor3,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    settings: &IntegratorSettings,
) -> Result<StepResult> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut attempts = 0;
    let mut leaves = 0;
    let mut dlambda = 0.0;
    let mut dissipation = 0.0;
    let out = step_recursive(
        state,
        delta_eps,
        state.t_celsius,
        t_new,
        dt,
        0,
        params,
        settings,
        &mut attempts,
        &mut leaves,
        &mut dlambda,
        &mut dissipation,
    )?;
    debug_assert!(out.state.rho_hat <= 1.0 + 1e-12);
    Ok(StepResult {
        state: out.state,
        sigma: out.sigma,
        yield_value: out.yield_value,
        dlambda,
        dissipation,
        converged: true,
        substeps_used: leaves,
    })
}

/// Consistent tangent dσ/dΔε of the converged step, by central differences
/// of the full return mapping. Exposed for element-level use; the point
/// drivers do not need it.
pub fn consistent_tangent_fd(
    state: &MaterialState,
    delta_eps: &SymTensor3,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    settings: &IntegratorSettings,
) -> Result<[[f64; 6]; 6]> {
    let h = 1e-7;
    let mut tangent = [[0.0; 6]; 6];
    for k in 0..6 {
        let mut plus = *delta_eps;
        plus.c[k] += h;
        let mut minus = *delta_eps;
        minus.c[k] -= h;
        let sp = return_map_step(state, &plus, t_new, dt, params, settings)?.sigma;
        let sm = return_map_step(state, &minus, t_new, dt, params, settings)?.sigma;
        for i in 0..6 {
            tangent[i][k] = (sp.c[i] - sm.c[i]) / (2.0 * h);
        }
    }
    Ok(tangent)
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

const STRESS_TOL_REL: f64 = 1e-8;
const OUTER_MAX_ITER: usize = 30;

/// Solves one step under the segment control, returning the accepted step
/// and the total strain increment that realized it.
#[allow(clippy::too_many_arguments)]
fn step_with_control(
    state: &MaterialState,
    control: &Control,
    sigma_seg_start: &SymTensor3,
    seg_progress_end: f64, // (tau + dt)/duration in [0, 1]
    rate_guess: &SymTensor3,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    settings: &IntegratorSettings,
) -> Result<(StepResult, SymTensor3)> {
    match control {
        Control::StrainRate(rate) => {
            let delta = rate.scale(dt);
            let res = return_map_step(state, &delta, t_new, dt, params, settings)?;
            Ok((res, delta))
        }
        Control::StressTarget(target) => {
            let conds = [
                AxisCondition::Stress(target.c[0]),
                AxisCondition::Stress(target.c[1]),
                AxisCondition::Stress(target.c[2]),
                AxisCondition::Stress(target.c[3]),
                AxisCondition::Stress(target.c[4]),
                AxisCondition::Stress(target.c[5]),
            ];
            mixed_step(
                state, &conds, sigma_seg_start, seg_progress_end, rate_guess, t_new, dt, params,
                settings,
            )
        }
        Control::Mixed(conds) => mixed_step(
            state, conds, sigma_seg_start, seg_progress_end, rate_guess, t_new, dt, params,
            settings,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn mixed_step(
    state: &MaterialState,
    conds: &[AxisCondition; 6],
    sigma_seg_start: &SymTensor3,
    seg_progress_end: f64,
    rate_guess: &SymTensor3,
    t_new: f64,
    dt: f64,
    params: &MaterialParams,
    settings: &IntegratorSettings,
) -> Result<(StepResult, SymTensor3)> {
    let mut delta = SymTensor3::zero();
    let mut free: Vec<usize> = Vec::with_capacity(6);
    let mut targets = [0.0; 6];
    for (k, cond) in conds.iter().enumerate() {
        match cond {
            AxisCondition::StrainRate(rate) => delta.c[k] = rate * dt,
            AxisCondition::Stress(sig_end) => {
                free.push(k);
                // stress path interpolated linearly across the segment
                targets[k] =
                    sigma_seg_start.c[k] + (sig_end - sigma_seg_start.c[k]) * seg_progress_end;
                delta.c[k] = rate_guess.c[k] * dt;
            }
        }
    }
    if free.is_empty() {
        let res = return_map_step(state, &delta, t_new, dt, params, settings)?;
        return Ok((res, delta));
    }

    let m = free.len();
    let tol = STRESS_TOL_REL * params.sigma_m;
    let fd_step = 1e-8;
    let mut res = return_map_step(state, &delta, t_new, dt, params, settings)?;

    for _ in 0..OUTER_MAX_ITER {
        let mut r = [0.0; 6];
        let mut rnorm: f64 = 0.0;
        for (i, &k) in free.iter().enumerate() {
            r[i] = res.sigma.c[k] - targets[k];
            rnorm = rnorm.max(r[i].abs());
        }
        if rnorm <= tol {
            return Ok((res, delta));
        }
        let mut jac = [[0.0; 6]; 6];
        for (j, &kj) in free.iter().enumerate() {
            let mut dp = delta;
            dp.c[kj] += fd_step;
            let probe = return_map_step(state, &dp, t_new, dt, params, settings)?;
            for (i, &ki) in free.iter().enumerate() {
                jac[i][j] = (probe.sigma.c[ki] - res.sigma.c[ki]) / fd_step;
            }
        }
        let mut rhs = [0.0; 6];
        for i in 0..m {
            rhs[i] = -r[i];
        }
        solve_dense(m, &mut jac, &mut rhs).map_err(|_| Error::ControlNonConvergence {
            segment: 0,
            time_s: 0.0,
            residual: rnorm,
        })?;

        let mut step = 1.0;
        let mut accepted = false;
        while step >= 1.0 / 64.0 {
            let mut cand = delta;
            for (j, &kj) in free.iter().enumerate() {
                cand.c[kj] += step * rhs[j];
            }
            if let Ok(probe) = return_map_step(state, &cand, t_new, dt, params, settings) {
                let mut pnorm: f64 = 0.0;
                for &k in &free {
                    pnorm = pnorm.max((probe.sigma.c[k] - targets[k]).abs());
                }
                if pnorm < rnorm {
                    delta = cand;
                    res = probe;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::ControlNonConvergence {
                segment: 0,
                time_s: 0.0,
                residual: rnorm,
            });
        }
    }
    let mut rnorm: f64 = 0.0;
    for &k in &free {
        rnorm = rnorm.max((res.sigma.c[k] - targets[k]).abs());
    }
    if rnorm <= tol {
        Ok((res, delta))
    } else {
        Err(Error::ControlNonConvergence {
            segment: 0,
            time_s: 0.0,
            residual: rnorm,
        })
    }
}

/// Runs a load program, threading the state through all segments.
///
/// Emits one record per accepted step plus the initial state. The time step
/// adapts: it doubles after three consecutive clean steps (capped by the
/// segment `max_dt_s`) and halves when the step solver rejects.
pub fn drive_program(
    state0: &MaterialState,
    program: &[LoadSegment],
    params: &MaterialParams,
    settings: &IntegratorSettings,
) -> Result<Vec<TimeSeriesRecord>> {
    if program.is_empty() {
        return Err(Error::InvalidInput("load program is empty".into()));
    }
    for seg in program {
        seg.validate()?;
    }
    let mut state = *state0;
    let mut records = Vec::new();
    let sigma0 = elastic_stress(&state.eps_e, state.t_celsius, params);
    records.push(record_from(&state, 0.0, sigma0, f64::NAN, 0.0, 0.0, 0));
    // the initial row has no step diagnostics; keep it finite for the writers
    records[0].yield_value_mpa = 0.0;

    let mut t_global = 0.0;
    for (i_seg, seg) in program.iter().enumerate() {
        let sigma_seg_start = elastic_stress(&state.eps_e, state.t_celsius, params);
        let mut tau = 0.0;
        let mut dt = settings.dt_initial.min(seg.max_dt_s);
        let mut clean_streak = 0usize;
        let mut rate_guess = SymTensor3::zero();
        let dt_min = seg.duration_s / 2f64.powi(40);

        while seg.duration_s - tau > 1e-12 * seg.duration_s {
            let dt_eff = dt.min(seg.duration_s - tau);
            let t_new = seg.temperature.eval(tau + dt_eff);
            let attempt = step_with_control(
                &state,
                &seg.control,
                &sigma_seg_start,
                (tau + dt_eff) / seg.duration_s,
                &rate_guess,
                t_new,
                dt_eff,
                params,
                settings,
            );
            match attempt {
                Ok((res, delta)) => {
                    state = res.state;
                    tau += dt_eff;
                    t_global += dt_eff;
                    records.push(record_from(
                        &state,
                        t_global,
                        res.sigma,
                        res.yield_value,
                        res.dlambda,
                        res.dissipation,
                        res.substeps_used,
                    ));
                    rate_guess = delta.scale(1.0 / dt_eff);
                    if res.substeps_used <= 1 {
                        clean_streak += 1;
                        if clean_streak >= 3 {
                            dt = (2.0 * dt).min(seg.max_dt_s);
                            clean_streak = 0;
                        }
                    } else {
                        clean_streak = 0;
                    }
                }
                Err(err) => {
                    dt = dt_eff / 2.0;
                    clean_streak = 0;
                    if dt < dt_min {
                        return Err(match err {
                            Error::ControlNonConvergence { residual, .. } => {
                                Error::ControlNonConvergence {
                                    segment: i_seg,
                                    time_s: t_global,
                                    residual,
                                }
                            }
                            Error::NonConvergence { dt_s, residual, levels, .. } => {
                                Error::NonConvergence {
                                    time_s: t_global,
                                    dt_s,
                                    residual,
                                    levels,
                                }
                            }
                            other => other,
                        });
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Free-sintering dilatometer run: zero stress from 20 °C to `t_max_c` at
/// `ramp_rate_c_min`.
pub fn dilatometer_run(
    params: &MaterialParams,
    ramp_rate_c_min: f64,
    t_max_c: f64,
    max_dt_s: f64,
    settings: &IntegratorSettings,
) -> Result<Vec<TimeSeriesRecord>> {
    if !(ramp_rate_c_min > 0.0) {
        return Err(Error::InvalidInput(format!(
            "ramp rate must be positive, got {ramp_rate_c_min}"
        )));
    }
    const T_START: f64 = 20.0;
    if !(t_max_c > T_START) {
        return Err(Error::InvalidInput(format!(
            "t_max must exceed the 20 °C start, got {t_max_c}"
        )));
    }
    let duration = (t_max_c - T_START) / ramp_rate_c_min * 60.0;
    let program = [LoadSegment {
        duration_s: duration,
        control: Control::StressTarget(SymTensor3::zero()),
        temperature: TemperatureSchedule::Ramp {
            start_c: T_START,
            rate_c_per_min: ramp_rate_c_min,
        },
        max_dt_s,
    }];
    let state0 = MaterialState::initial(params, T_START);
    drive_program(&state0, &program, params, settings)
}

/// Die-pressing run at a material point: axial log strain ramped to
/// ln(1 - stroke_ratio) under zero lateral strain, then axial unload to zero
/// stress with the lateral constraint kept.
///
/// Pressing runs in the rate-independent limit: the viscosity is overridden
/// with the constant `press_eta_mpa_s` for the whole run.
pub fn oedometric_press_run(
    params: &MaterialParams,
    stroke_ratio: f64,
    duration_s: f64,
    unload_s: f64,
    press_eta_mpa_s: f64,
    max_dt_s: f64,
    settings: &IntegratorSettings,
) -> Result<Vec<TimeSeriesRecord>> {
    if !(stroke_ratio > 0.0 && stroke_ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "stroke ratio must lie in (0, 1), got {stroke_ratio}"
        )));
    }
    if !(duration_s > 0.0 && unload_s > 0.0) {
        return Err(Error::InvalidInput("press durations must be positive".into()));
    }
    let mut press_settings = *settings;
    press_settings.viscosity_mode = ViscosityMode::Constant(press_eta_mpa_s);

    let t_room = 20.0;
    let eps_axial_final = (1.0 - stroke_ratio).ln();
    let program = [
        LoadSegment {
            duration_s,
            control: Control::StrainRate(SymTensor3::diag(
                eps_axial_final / duration_s,
                0.0,
                0.0,
            )),
            temperature: TemperatureSchedule::Constant(t_room),
            max_dt_s,
        },
        LoadSegment {
            duration_s: unload_s,
            control: Control::Mixed([
                AxisCondition::Stress(0.0),
                AxisCondition::StrainRate(0.0),
                AxisCondition::StrainRate(0.0),
                AxisCondition::StrainRate(0.0),
                AxisCondition::StrainRate(0.0),
                AxisCondition::StrainRate(0.0),
            ]),
            temperature: TemperatureSchedule::Constant(t_room),
            max_dt_s,
        },
    ];
    let state0 = MaterialState::initial(params, t_room);
    drive_program(&state0, &program, params, &press_settings)
}
