//! Constitutive core: material parameters and state, thermoelastic stress,
//! sintering stress, effective stress, the BP yield surface and its gradient,
//! thermal softening, Arrhenius viscosity and grain growth.
//!
//! Unit conventions: stresses in MPa, lengths in m, temperatures in °C
//! (converted to K strictly inside Arrhenius factors), energies in J, times
//! in s.

use crate::error::{Error, Result};
use crate::micromech::HardeningState;
use crate::tensor::{stress_invariants, StressInvariants, SymTensor3};

/// Relative half-width of the Φ boundary layer in which the meridian
/// function is replaced by its tangent.
pub const PHI_CLAMP_DELTA: f64 = 1e-6;

/// All material constants: the consolidated parameter table plus the
/// elasticity/thermal plumbing the source data leaves implicit.
///
/// `nu`, `alpha0`, `c_h`, `k_th` and `t0_c` are plumbing defaults, not
/// calibrated values; override them per material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    /// Young's modulus, MPa.
    pub e_mod: f64,
    /// Poisson ratio (not given by the parameter table; default 0.3).
    pub nu: f64,
    /// First Lamé modulus, MPa (derived from E, nu).
    pub lambda_e: f64,
    /// Shear modulus, MPa (derived).
    pub mu_e: f64,
    /// Bulk modulus, MPa (derived).
    pub k_b: f64,
    /// Volumetric thermal expansion coefficient entering the stress law as
    /// K_b α₀ (T - T0) I, 1/K.
    pub alpha0: f64,
    /// Stress-free reference temperature, °C.
    pub t0_c: f64,
    /// Yield strength of the fully dense material, MPa.
    pub sigma_m: f64,
    /// BP meridian exponent m.
    pub m_bp: f64,
    /// BP meridian parameter α.
    pub alpha_bp: f64,
    /// BP deviatoric shape parameter β.
    pub beta_bp: f64,
    /// BP deviatoric shape parameter γ.
    pub gamma_bp: f64,
    /// Initial relative density of the powder.
    pub rho_hat0: f64,
    /// Fully dense mass density, g/cm³.
    pub rho_fd_g_cm3: f64,
    /// Initial grain (particle) radius, m.
    pub r0_m: f64,
    /// Surface energy, J/m².
    pub gamma_s: f64,
    /// Grain-boundary energy, J/m².
    pub gamma_b: f64,
    /// Grain-boundary mobility coefficient, m²·s/kg.
    pub m_gc0: f64,
    /// Activation energy for grain coarsening, J/mol.
    pub q_gc: f64,
    /// Activation energy for the viscosity, J/mol.
    pub q_e: f64,
    /// Gas constant, J/(mol·K).
    pub r_gas: f64,
    /// Viscosity constant, MPa·s.
    pub eta_v1: f64,
    /// Grain-size exponent of the viscosity law.
    pub w_exp: f64,
    /// Softening cutoff temperature, °C.
    pub t_c1: f64,
    /// Residual softening factor above the cutoff.
    pub c_t: f64,
    /// Softening exponent.
    pub b1: f64,
    /// Geometric correction factor of the modified limit analysis.
    pub zeta: f64,
    /// Quinney-Taylor coefficient. Fixed at zero: temperature evolution is
    /// uncoupled from plastic flow and no plastic-heating path exists.
    pub chi: f64,
    /// Specific heat, J/(kg·K).
    pub c_h: f64,
    /// Thermal conductivity, W/(m·K).
    pub k_th: f64,
    /// Floor for the compressive yield strength, MPa.
    pub p_c_floor: f64,
    /// Lower bound on p_c as a fraction of the cohesion; regularizes the
    /// yield-surface shape where the raw compaction curve is non-positive.
    pub pc_over_c_floor: f64,
    /// Value of M when the cohesion vanishes.
    pub m_floor: f64,
    /// Deviatoric degeneracy threshold on q, MPa. Negative means automatic
    /// (1e-10 times sigma_m), resolved by `finalize`.
    pub q_eps: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        let mut p = MaterialParams {
            e_mod: 5000.0,
            nu: 0.3,
            lambda_e: 0.0,
            mu_e: 0.0,
            k_b: 0.0,
            alpha0: 6e-6,
            t0_c: 20.0,
            sigma_m: 150.0,
            m_bp: 4.38,
            alpha_bp: 1.0,
            beta_bp: 0.0,
            gamma_bp: 0.0,
            rho_hat0: 0.38,
            rho_fd_g_cm3: 2.375,
            r0_m: 11.24e-6,
            gamma_s: 1.10,
            gamma_b: 1.10,
            m_gc0: 2.25,
            q_gc: 354e3,
            q_e: 354e3,
            r_gas: 8.314,
            eta_v1: 1e-8,
            w_exp: 3.0,
            t_c1: 800.0,
            c_t: 1e-4,
            b1: 0.9,
            zeta: 2.7,
            chi: 0.0,
            c_h: 900.0,
            k_th: 1.5,
            p_c_floor: 1e-3,
            pc_over_c_floor: 0.05,
            m_floor: 0.1,
            q_eps: -1.0,
        };
        p.finalize().expect("default parameter set is valid");
        p
    }
}

/// Config keys accepted by [`MaterialParams::set_key`], in documentation
/// order.
pub const PARAM_KEYS: &[&str] = &[
    "E", "nu", "alpha0", "T0", "sigma_m", "m_bp", "alpha_bp", "beta_bp", "gamma_bp", "rho_hat0",
    "rho_fd", "R0", "gamma_s", "gamma_b", "M_gc0", "Q_gc", "Q_E", "R_g", "eta_v1", "w", "T_C1",
    "C_T", "b1", "zeta", "chi", "c_h", "k_th", "p_c_floor", "pc_over_c_floor", "M_floor", "q_eps",
];

impl MaterialParams {
    /// Recomputes the derived moduli and resolves automatic values, then
    /// validates every invariant of the parameter set.
    pub fn finalize(&mut self) -> Result<()> {
        if !(self.e_mod > 0.0) {
            return Err(Error::InvalidInput(format!("E must be positive, got {}", self.e_mod)));
        }
        if !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(Error::InvalidInput(format!("nu must lie in (-1, 0.5), got {}", self.nu)));
        }
        self.lambda_e = self.e_mod * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        self.mu_e = self.e_mod / (2.0 * (1.0 + self.nu));
        self.k_b = self.e_mod / (3.0 * (1.0 - 2.0 * self.nu));
        if self.q_eps < 0.0 {
            self.q_eps = 1e-10 * self.sigma_m;
        }
        let positive: [(&str, f64); 12] = [
            ("sigma_m", self.sigma_m),
            ("rho_fd", self.rho_fd_g_cm3),
            ("R0", self.r0_m),
            ("gamma_s", self.gamma_s),
            ("gamma_b", self.gamma_b),
            ("R_g", self.r_gas),
            ("eta_v1", self.eta_v1),
            ("c_h", self.c_h),
            ("k_th", self.k_th),
            ("p_c_floor", self.p_c_floor),
            ("M_floor", self.m_floor),
            ("zeta", self.zeta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho_hat0 > 0.0 && self.rho_hat0 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "rho_hat0 must lie in (0, 1), got {}",
                self.rho_hat0
            )));
        }
        if !(self.m_bp > 1.0) {
            return Err(Error::InvalidInput(format!("m_bp must exceed 1, got {}", self.m_bp)));
        }
        if !(self.alpha_bp > 0.0 && self.alpha_bp <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "alpha_bp must lie in (0, 2], got {}",
                self.alpha_bp
            )));
        }
        if !(self.gamma_bp >= 0.0 && self.gamma_bp < 1.0) {
            return Err(Error::InvalidInput(format!(
                "gamma_bp must lie in [0, 1), got {}",
                self.gamma_bp
            )));
        }
        if !(self.beta_bp >= 0.0 && self.beta_bp <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "beta_bp must lie in [0, 2], got {}",
                self.beta_bp
            )));
        }
        if self.chi != 0.0 {
            return Err(Error::InvalidInput(
                "chi must be 0: plastic heating is not part of the model".into(),
            ));
        }
        if !(self.pc_over_c_floor >= 0.0 && self.pc_over_c_floor < 1.0) {
            return Err(Error::InvalidInput(format!(
                "pc_over_c_floor must lie in [0, 1), got {}",
                self.pc_over_c_floor
            )));
        }
        if !(self.t_c1 > 0.0) || !(self.c_t > 0.0) || !(self.b1 > 0.0) {
            return Err(Error::InvalidInput(
                "softening constants T_C1, C_T, b1 must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Sets a parameter by its config key. Derived quantities are refreshed
    /// by a subsequent `finalize`.
    pub fn set_key(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "E" => self.e_mod = value,
            "nu" => self.nu = value,
            "alpha0" => self.alpha0 = value,
            "T0" => self.t0_c = value,
            "sigma_m" => self.sigma_m = value,
            "m_bp" => self.m_bp = value,
            "alpha_bp" => self.alpha_bp = value,
            "beta_bp" => self.beta_bp = value,
            "gamma_bp" => self.gamma_bp = value,
            "rho_hat0" => self.rho_hat0 = value,
            "rho_fd" => self.rho_fd_g_cm3 = value,
            "R0" => self.r0_m = value,
            "gamma_s" => self.gamma_s = value,
            "gamma_b" => self.gamma_b = value,
            "M_gc0" => self.m_gc0 = value,
            "Q_gc" => self.q_gc = value,
            "Q_E" => self.q_e = value,
            "R_g" => self.r_gas = value,
            "eta_v1" => self.eta_v1 = value,
            "w" => self.w_exp = value,
            "T_C1" => self.t_c1 = value,
            "C_T" => self.c_t = value,
            "b1" => self.b1 = value,
            "zeta" => self.zeta = value,
            "chi" => self.chi = value,
            "c_h" => self.c_h = value,
            "k_th" => self.k_th = value,
            "p_c_floor" => self.p_c_floor = value,
            "pc_over_c_floor" => self.pc_over_c_floor = value,
            "M_floor" => self.m_floor = value,
            "q_eps" => self.q_eps = value,
            _ => {
                return Err(Error::InvalidInput(format!("unknown material parameter key `{key}`")));
            }
        }
        Ok(())
    }

    /// Reads a parameter by its config key.
    pub fn get_key(&self, key: &str) -> Option<f64> {
        Some(match key {
            "E" => self.e_mod,
            "nu" => self.nu,
            "alpha0" => self.alpha0,
            "T0" => self.t0_c,
            "sigma_m" => self.sigma_m,
            "m_bp" => self.m_bp,
            "alpha_bp" => self.alpha_bp,
            "beta_bp" => self.beta_bp,
            "gamma_bp" => self.gamma_bp,
            "rho_hat0" => self.rho_hat0,
            "rho_fd" => self.rho_fd_g_cm3,
            "R0" => self.r0_m,
            "gamma_s" => self.gamma_s,
            "gamma_b" => self.gamma_b,
            "M_gc0" => self.m_gc0,
            "Q_gc" => self.q_gc,
            "Q_E" => self.q_e,
            "R_g" => self.r_gas,
            "eta_v1" => self.eta_v1,
            "w" => self.w_exp,
            "T_C1" => self.t_c1,
            "C_T" => self.c_t,
            "b1" => self.b1,
            "zeta" => self.zeta,
            "chi" => self.chi,
            "c_h" => self.c_h,
            "k_th" => self.k_th,
            "p_c_floor" => self.p_c_floor,
            "pc_over_c_floor" => self.pc_over_c_floor,
            "M_floor" => self.m_floor,
            "q_eps" => self.q_eps,
            _ => return None,
        })
    }

    /// Fully dense mass density in kg/m³.
    pub fn rho_fd_kg_m3(&self) -> f64 {
        self.rho_fd_g_cm3 * 1000.0
    }
}

/// Per-point evolving state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialState {
    /// Elastic logarithmic strain.
    pub eps_e: SymTensor3,
    /// Plastic logarithmic strain.
    pub eps_p: SymTensor3,
    /// Inelastic relative density; equals rho_hat0 · exp(-tr eps_p) at all
    /// times.
    pub rho_hat: f64,
    /// Grain radius, m; never decreases.
    pub r_grain_m: f64,
    /// Temperature, °C.
    pub t_celsius: f64,
}

impl MaterialState {
    pub fn initial(params: &MaterialParams, t_celsius: f64) -> Self {
        Self {
            eps_e: SymTensor3::zero(),
            eps_p: SymTensor3::zero(),
            rho_hat: params.rho_hat0,
            r_grain_m: params.r0_m,
            t_celsius,
        }
    }

    /// Total logarithmic strain.
    pub fn eps_total(&self) -> SymTensor3 {
        self.eps_e.add(&self.eps_p)
    }

    /// Checks the density/plastic-strain bookkeeping identity.
    pub fn density_consistent(&self, params: &MaterialParams) -> bool {
        let rho = density_from_plastic_strain(&self.eps_p, params);
        (self.rho_hat - rho).abs() <= 1e-12 * self.rho_hat.max(1.0)
    }
}

/// Pore free energy and the sintering stress derived from it.
#[derive(Debug, Clone, Copy)]
pub struct PoreEnergy {
    /// Specific pore surface energy, J/kg.
    pub psi_pore: f64,
    /// Sintering stress (Laplace pressure), MPa.
    pub sigma_s: f64,
    /// Raised when the density input had to be capped just below one.
    pub saturated: bool,
}

/// Exact prefactor (8π/3)(3/4π)^(2/3) of the sintering-stress law (≈ 3.224).
pub fn sintering_prefactor() -> f64 {
    let pi = std::f64::consts::PI;
    (8.0 * pi / 3.0) * (3.0 / (4.0 * pi)).powf(2.0 / 3.0)
}

/// Pore energy and sintering stress at a density and current grain radius.
///
/// The length scale of the law is the current particle diameter 2R, so the
/// sintering stress decays as grains coarsen. Densities at or above one are
/// capped at 1 - 1e-9 and flagged.
pub fn pore_energy(rho_hat: f64, r_grain_m: f64, params: &MaterialParams) -> Result<PoreEnergy> {
    if !(rho_hat > 0.0) {
        return Err(Error::Domain {
            name: "rho_hat",
            value: rho_hat,
            domain: "(0, 1)",
        });
    }
    let saturated = rho_hat >= 1.0 - 1e-9;
    let rho = if saturated { 1.0 - 1e-9 } else { rho_hat };
    let pi = std::f64::consts::PI;
    let diameter = 2.0 * r_grain_m;
    let psi_pore = params.gamma_s / (params.rho_fd_kg_m3() * diameter)
        * 4.0
        * pi
        * (3.0 * (1.0 - rho) / (4.0 * pi * rho)).powf(2.0 / 3.0);
    let sigma_s_pa = sintering_prefactor() * params.gamma_s / diameter * (rho / (1.0 - rho)).powf(1.0 / 3.0);
    Ok(PoreEnergy {
        psi_pore,
        sigma_s: sigma_s_pa * 1e-6,
        saturated,
    })
}

/// Sintering stress in MPa; see [`pore_energy`].
pub fn sintering_stress(rho_hat: f64, r_grain_m: f64, params: &MaterialParams) -> Result<f64> {
    Ok(pore_energy(rho_hat, r_grain_m, params)?.sigma_s)
}

/// Isotropic thermoelastic stress σ = λ tr(ε_e) I + 2μ ε_e - K_b α₀ (T - T0) I.
pub fn elastic_stress(eps_e: &SymTensor3, t_celsius: f64, params: &MaterialParams) -> SymTensor3 {
    let vol = params.lambda_e * eps_e.trace() - params.k_b * params.alpha0 * (t_celsius - params.t0_c);
    eps_e
        .scale(2.0 * params.mu_e)
        .add(&SymTensor3::spherical(vol))
}

/// Elastic free-energy density ρψ_e (MPa); its strain derivative is
/// [`elastic_stress`].
pub fn elastic_energy_density(eps_e: &SymTensor3, t_celsius: f64, params: &MaterialParams) -> f64 {
    let tr = eps_e.trace();
    0.5 * params.lambda_e * tr * tr + params.mu_e * eps_e.double_dot(eps_e)
        - params.k_b * params.alpha0 * (t_celsius - params.t0_c) * tr
}

/// Effective stress σ̂ = σ - σ_s I driving visco-plastic flow.
pub fn effective_stress(sigma: &SymTensor3, rho_hat: f64, r_grain_m: f64, params: &MaterialParams) -> Result<SymTensor3> {
    let sigma_s = sintering_stress(rho_hat, r_grain_m, params)?;
    Ok(sigma.sub(&SymTensor3::spherical(sigma_s)))
}

/// Thermal softening factor f_T(T) = ⟨1 - T/T_C1⟩^b1 + C_T.
pub fn thermal_softening(t_celsius: f64, params: &MaterialParams) -> f64 {
    let base = (1.0 - t_celsius / params.t_c1).max(0.0);
    base.powf(params.b1) + params.c_t
}

/// Viscosity η_v = η_v1 (R/R0)^w exp(Q_E / (R_g T_K)), MPa·s.
pub fn viscosity(t_celsius: f64, r_grain_m: f64, params: &MaterialParams) -> f64 {
    let t_k = t_celsius + 273.15;
    params.eta_v1 * (r_grain_m / params.r0_m).powf(params.w_exp) * (params.q_e / (params.r_gas * t_k)).exp()
}

/// Grain-boundary mobility M_gc(T) = M_gc0 exp(-Q_gc / (R_g T_K)), m²/s
/// (after multiplication by γ_b).
pub fn grain_mobility(t_celsius: f64, params: &MaterialParams) -> f64 {
    let t_k = t_celsius + 273.15;
    params.m_gc0 * (-params.q_gc / (params.r_gas * t_k)).exp()
}

/// Constant-temperature closed-form update of the grain-growth law
/// Ṙ = γ_b M_gc / (4R):  R(t+dt) = √(R² + γ_b M_gc dt / 2).
pub fn grain_growth_step(r_grain_m: f64, t_celsius: f64, dt_s: f64, params: &MaterialParams) -> f64 {
    (r_grain_m * r_grain_m + params.gamma_b * grain_mobility(t_celsius, params) * dt_s / 2.0).sqrt()
}

/// Relative density from the plastic strain, ρ̂ = ρ̂₀ exp(-tr ε_p).
pub fn density_from_plastic_strain(eps_p: &SymTensor3, params: &MaterialParams) -> f64 {
    params.rho_hat0 * (-eps_p.trace()).exp()
}

/// Porosity f = 1 - ρ/ρ_fd. With the elastic strain supplied the current
/// density includes the elastic volume change; otherwise the unloaded
/// (inelastic) density is used.
pub fn porosity(rho_hat: f64, eps_e: Option<&SymTensor3>) -> f64 {
    match eps_e {
        Some(e) => 1.0 - rho_hat * (-e.trace()).exp(),
        None => 1.0 - rho_hat,
    }
}

// ---------------------------------------------------------------------------
// BP yield surface
// ---------------------------------------------------------------------------

/// Meridian factor g1(Φ) = (Φ - Φ^m)(2(1-α)Φ + α) and its derivative.
fn meridian_bracket(phi: f64, m: f64, alpha: f64) -> (f64, f64) {
    let pm = phi.powf(m);
    let lin = 2.0 * (1.0 - alpha) * phi + alpha;
    let g1 = (phi - pm) * lin;
    let dg1 = (1.0 - m * phi.powf(m - 1.0)) * lin + (phi - pm) * 2.0 * (1.0 - alpha);
    (g1, dg1)
}

/// Raw meridian function F(Φ) = -M p_c √(g1(Φ)) on Φ ∈ [0, 1], with its
/// derivative dF/dΦ. Outside the open interval the value is 0 and the
/// derivative unbounded; callers needing a total function use
/// [`meridian_f_extended`].
fn meridian_f_raw(phi: f64, h: &HardeningState, params: &MaterialParams) -> (f64, f64) {
    let (g1, dg1) = meridian_bracket(phi, params.m_bp, params.alpha_bp);
    if g1 <= 0.0 {
        return (0.0, f64::INFINITY);
    }
    let sq = g1.sqrt();
    let f = -h.m_slope * h.p_c * sq;
    let df = -h.m_slope * h.p_c * dg1 / (2.0 * sq);
    (f, df)
}

/// Meridian function with the C¹ tangent extension: for Φ outside
/// [δ, 1-δ] the value continues linearly with the slope frozen at the
/// nearest clamp point, keeping overstress and Newton iterations defined
/// beyond the cap and the tensile apex.
fn meridian_f_extended(phi: f64, h: &HardeningState, params: &MaterialParams) -> (f64, f64) {
    let d = PHI_CLAMP_DELTA;
    if phi < d {
        let (f0, df0) = meridian_f_raw(d, h, params);
        (f0 + df0 * (phi - d), df0)
    } else if phi > 1.0 - d {
        let (f1, df1) = meridian_f_raw(1.0 - d, h, params);
        (f1 + df1 * (phi - 1.0 + d), df1)
    } else {
        meridian_f_raw(phi, h, params)
    }
}

/// Deviatoric shape g(Θc) = cos[β π/6 - ⅓ cos⁻¹(γ cos 3Θc)].
/// With β = γ = 0 this is identically √3/2.
fn deviatoric_g(cos3theta: f64, params: &MaterialParams) -> f64 {
    let inner = (params.gamma_bp * cos3theta).clamp(-1.0, 1.0).acos();
    (params.beta_bp * std::f64::consts::FRAC_PI_6 - inner / 3.0).cos()
}

/// BP yield value ℱ(σ̂) = F(p) + q g(Θc), MPa. Total function thanks to the
/// meridian extension; negative inside the elastic domain.
pub fn bp_yield(sigma_hat: &SymTensor3, h: &HardeningState, params: &MaterialParams) -> f64 {
    let inv = stress_invariants(sigma_hat, params.q_eps);
    bp_yield_from_invariants(&inv, h, params)
}

/// BP yield value from precomputed invariants.
pub fn bp_yield_from_invariants(inv: &StressInvariants, h: &HardeningState, params: &MaterialParams) -> f64 {
    let phi = (inv.p + h.c) / (h.p_c + h.c);
    let (f, _) = meridian_f_extended(phi, h, params);
    f + inv.q * deviatoric_g(inv.cos3theta, params)
}

/// Solves ℱ = 0 for q on the raw meridian at a given pressure and Lode
/// angle. Returns None when p lies outside [-c, p_c]. Endpoints map to
/// exactly q = 0.
pub fn bp_meridian_q(p: f64, cos3theta: f64, h: &HardeningState, params: &MaterialParams) -> Option<f64> {
    let phi = (p + h.c) / (h.p_c + h.c);
    if !(0.0..=1.0).contains(&phi) {
        return None;
    }
    let (g1, _) = meridian_bracket(phi, params.m_bp, params.alpha_bp);
    let g = deviatoric_g(cos3theta, params);
    Some(h.m_slope * h.p_c * g1.max(0.0).sqrt() / g)
}

/// Unnormalized yield gradient ∂ℱ/∂σ̂.
///
/// At q = 0 the deviatoric direction is undefined and the gradient is purely
/// volumetric with the sign of ∂F/∂p. The 1/q factor of the deviatoric term
/// is regularized as 1/max(q, q_eps), which fades that term linearly to zero
/// below q_eps instead of switching it off; a hard switch would make the
/// return-mapping residual discontinuous across the hydrostatic axis.
pub fn bp_yield_gradient_raw(sigma_hat: &SymTensor3, h: &HardeningState, params: &MaterialParams) -> SymTensor3 {
    let inv = stress_invariants(sigma_hat, params.q_eps);
    let phi = (inv.p + h.c) / (h.p_c + h.c);
    let (_, dfdphi) = meridian_f_extended(phi, h, params);
    let dfdp = dfdphi / (h.p_c + h.c);
    // ∂p/∂σ = -I/3
    let mut grad = SymTensor3::spherical(-dfdp / 3.0);
    let dev = sigma_hat.dev();
    let g = deviatoric_g(inv.cos3theta, params);
    grad = grad.add_scaled(&dev, g * 1.5 / inv.q.max(params.q_eps));
    if inv.lode_degenerate {
        return grad;
    }
    if params.gamma_bp != 0.0 {
        // Lode-angle contribution q g'(θ) ∂θ/∂σ; the sin(3θ) factor cancels
        // the 1/√(1-x²) from d(acos)/dx, leaving a bounded coefficient.
        let x = inv.cos3theta;
        let gamma = params.gamma_bp;
        let inner = (gamma * x).clamp(-1.0, 1.0).acos();
        let sin_term = (params.beta_bp * std::f64::consts::FRAC_PI_6 - inner / 3.0).sin();
        let coeff = -inv.q * gamma * sin_term / (3.0 * (1.0 - gamma * gamma * x * x).sqrt());
        // ∂x/∂σ with x = 27 J3 / (2 q³), J3 = tr(s³)/3
        let j2 = 0.5 * dev.double_dot(&dev);
        let j3 = dev.trace_cubed() / 3.0;
        let s2 = dev.squared();
        let q3 = inv.q.powi(3);
        let dx = s2
            .add(&SymTensor3::spherical(-2.0 * j2 / 3.0))
            .scale(27.0 / (2.0 * q3))
            .add_scaled(&dev, -243.0 * j3 / (4.0 * q3 * inv.q * inv.q));
        grad = grad.add_scaled(&dx, coeff);
    }
    grad
}

/// Unit-norm flow direction Q = (∂ℱ/∂σ̂)/‖∂ℱ/∂σ̂‖.
pub fn bp_yield_gradient(sigma_hat: &SymTensor3, h: &HardeningState, params: &MaterialParams) -> Result<SymTensor3> {
    let grad = bp_yield_gradient_raw(sigma_hat, h, params);
    let n = grad.norm();
    if !(n > 1e-10) {
        return Err(Error::DegenerateDirection { norm: n });
    }
    Ok(grad.scale(1.0 / n))
}
