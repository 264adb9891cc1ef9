//! Density-driven evolution of the yield-surface parameters p_c, c and M
//! from a plane-strain limit analysis of the particle unit cell and a
//! contact-area model.
//!
//! Two closed forms are provided for the compaction curve: the plane-strain
//! upper bound and the modified limit-analysis ("MLA") solution with the
//! geometric correction factor ζ. The raw dissipation sum P/R is kept as an
//! independent diagnostic; it does not reproduce the closed-form constants
//! and is never used by the constitutive update.

use crate::error::{Error, Result};
use crate::material::{thermal_softening, MaterialParams};

const PI: f64 = std::f64::consts::PI;

/// Current unit-cell geometry at a given relative density.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub rho_hat: f64,
    /// Current unit-cell half-side (same length unit as `r0`).
    pub r_cell: f64,
    /// Deformable-block height.
    pub h: f64,
    /// Contact half-length a = R - h; negative values flag breakdown.
    pub a: f64,
    pub r0: f64,
    pub zeta: f64,
}

impl CellGeometry {
    /// Builds the cell for a relative density; `zeta = 1` is the unmodified
    /// plane-strain geometry.
    pub fn new(rho_hat: f64, r0: f64, zeta: f64) -> Result<Self> {
        let r_cell = cell_side(rho_hat, r0)?;
        let h = block_height(rho_hat, r0, zeta)?;
        Ok(Self {
            rho_hat,
            r_cell,
            h,
            a: r_cell - h,
            r0,
            zeta,
        })
    }

    /// Geometry holds only while the contact half-length stays non-negative.
    pub fn is_valid(&self) -> bool {
        self.a >= 0.0 && self.h > 0.0
    }
}

/// Hardening parameters of the yield surface at a given density and
/// temperature.
#[derive(Debug, Clone, Copy)]
pub struct HardeningState {
    /// Hydrostatic compressive yield strength, MPa (post-floor).
    pub p_c: f64,
    /// Cohesion (hydrostatic tensile strength), MPa.
    pub c: f64,
    /// Pressure-sensitivity parameter of the yield surface.
    pub m_slope: f64,
    /// Normalized contact area, in [0, π/3].
    pub a_c: f64,
}

/// Unit-cell half-side R = (R0/2) √(π/ρ̂) from in-plane incompressibility.
pub fn cell_side(rho_hat: f64, r0: f64) -> Result<f64> {
    if !(rho_hat > 0.0) {
        return Err(Error::Domain {
            name: "rho_hat",
            value: rho_hat,
            domain: "(0, 1]",
        });
    }
    Ok(r0 / 2.0 * (PI / rho_hat).sqrt())
}

/// Deformable-block height h = ζ R0 √(π (1-ρ̂) / (ρ̂ (4-π))).
pub fn block_height(rho_hat: f64, r0: f64, zeta: f64) -> Result<f64> {
    if !(rho_hat > 0.0 && rho_hat < 1.0) {
        return Err(Error::Domain {
            name: "rho_hat",
            value: rho_hat,
            domain: "(0, 1)",
        });
    }
    if !(zeta > 0.0) {
        return Err(Error::Domain {
            name: "zeta",
            value: zeta,
            domain: "(0, inf)",
        });
    }
    Ok(zeta * r0 * (PI * (1.0 - rho_hat) / (rho_hat * (4.0 - PI))).sqrt())
}

/// Collapse pressure of the unit cell from the dissipation sum,
/// p = P / R with P = k (3a + a²/(2h) + h/2).
///
/// Diagnostic only; see module docs.
pub fn geometric_limit_pressure(geom: &CellGeometry, k: f64) -> Result<f64> {
    if !geom.is_valid() {
        return Err(Error::GeometryBreakdown {
            rho_hat: geom.rho_hat,
        });
    }
    let p = k * (3.0 * geom.a + geom.a * geom.a / (2.0 * geom.h) + geom.h / 2.0);
    Ok(p / geom.r_cell)
}

fn check_open_unit(rho_hat: f64) -> Result<()> {
    if !(rho_hat > 0.0 && rho_hat < 1.0) {
        return Err(Error::Domain {
            name: "rho_hat",
            value: rho_hat,
            domain: "(0, 1)",
        });
    }
    Ok(())
}

/// Plane-strain upper-bound compaction curve,
/// p_c = k √π (-8 + (12 + π - 16ρ̂) s + 8ρ̂) / (8 ρ̂ (ρ̂-1)), s = √((ρ̂-1)/(π-4)),
/// with k = σ_m/√3.
pub fn compaction_pressure_plane(rho_hat: f64, sigma_m: f64) -> Result<f64> {
    check_open_unit(rho_hat)?;
    let k = sigma_m / 3.0f64.sqrt();
    let s = ((rho_hat - 1.0) / (PI - 4.0)).sqrt();
    let num = PI.sqrt() * (-8.0 + (12.0 + PI - 16.0 * rho_hat) * s + 8.0 * rho_hat);
    Ok(k * num / (8.0 * rho_hat * (rho_hat - 1.0)))
}

/// Modified limit-analysis compaction curve (ζ = 2.7 geometry),
/// p_c = σ_m (-530 + (619 + 25π - 719ρ̂) s + 530ρ̂) / (210 √3 (ρ̂-1)).
///
/// The raw value turns negative below ρ̂* ≈ 0.4756; flooring is applied by
/// [`hardening_bundle`], not here.
pub fn compaction_pressure_mla(rho_hat: f64, sigma_m: f64) -> Result<f64> {
    check_open_unit(rho_hat)?;
    let s = ((rho_hat - 1.0) / (PI - 4.0)).sqrt();
    let num = -530.0 + (619.0 + 25.0 * PI - 719.0 * rho_hat) * s + 530.0 * rho_hat;
    Ok(sigma_m * num / (210.0 * 3.0f64.sqrt() * (rho_hat - 1.0)))
}

/// Algebraically equivalent factored form of the MLA curve,
/// p_c = σ_m (25 + 530 s - 719 s²) / (210 √3 s). Used as a cross-check.
pub fn compaction_pressure_mla_factored(rho_hat: f64, sigma_m: f64) -> Result<f64> {
    check_open_unit(rho_hat)?;
    let s = ((rho_hat - 1.0) / (PI - 4.0)).sqrt();
    Ok(sigma_m * (25.0 + 530.0 * s - 719.0 * s * s) / (210.0 * 3.0f64.sqrt() * s))
}

/// Normalized contact area A_c = (4π/12) (ρ̂ - ρ̂₀) / (1 - ρ̂₀), clamped to 0
/// below the initial density.
pub fn contact_area(rho_hat: f64, rho_hat0: f64) -> f64 {
    let a = (4.0 * PI / 12.0) * (rho_hat - rho_hat0) / (1.0 - rho_hat0);
    a.max(0.0)
}

/// Cohesion c = σ_m A_c(ρ̂), the yield stress under hydrostatic tension.
pub fn cohesion(rho_hat: f64, rho_hat0: f64, sigma_m: f64) -> f64 {
    sigma_m * contact_area(rho_hat, rho_hat0)
}

/// Pressure-sensitivity parameter from the pure-shear failure condition,
/// M = √3 σ_m A_c / (p_c 2 √([Φ - Φᵐ][2(1-α)Φ + α])), Φ = c/(p_c + c).
///
/// Inputs are the post-floor p_c and the cohesion. `m_floor` acts as a lower
/// bound: the raw expression is singular at c = 0 but tends to zero as
/// c → 0⁺, so pinning only the exact zero would leave M (and the yield
/// value) discontinuous at the loose state. The bound keeps M continuous
/// while the formula governs everywhere it exceeds the floor.
pub fn friction_m_from(
    p_c: f64,
    c: f64,
    a_c: f64,
    params: &MaterialParams,
) -> Result<f64> {
    if p_c + c <= 0.0 {
        return Err(Error::DegenerateSurface);
    }
    if c <= 0.0 || a_c <= 0.0 {
        return Ok(params.m_floor);
    }
    let phi = c / (p_c + c);
    let bracket = (phi - phi.powf(params.m_bp))
        * (2.0 * (1.0 - params.alpha_bp) * phi + params.alpha_bp);
    if bracket <= 0.0 {
        return Ok(params.m_floor);
    }
    let m = 3.0f64.sqrt() * params.sigma_m * a_c / (p_c * 2.0 * bracket.sqrt());
    Ok(m.max(params.m_floor))
}

/// Compressive strength floor. Besides the absolute `p_c_floor`, the
/// strength never falls below a small fraction of the cohesion: the raw MLA
/// curve is negative below ρ̂* ≈ 0.4756 while the contact cohesion keeps
/// growing, and a surface with c/(p_c + c) → 1 degenerates into a needle of
/// spurious tensile-side shear strength (the pure-shear expression for M
/// blows up there). The fractional floor bounds M without touching any
/// density at which the MLA curve itself is competitive.
fn floored_pc(p_c_raw: f64, c: f64, params: &MaterialParams) -> f64 {
    p_c_raw.max(params.pc_over_c_floor * c).max(params.p_c_floor)
}

/// M at a given density, using the floored MLA pressure and the contact-area
/// cohesion.
pub fn friction_m(rho_hat: f64, params: &MaterialParams) -> Result<f64> {
    let p_c_raw = compaction_pressure_mla(rho_hat, params.sigma_m)?;
    let c = cohesion(rho_hat, params.rho_hat0, params.sigma_m);
    let a_c = contact_area(rho_hat, params.rho_hat0);
    friction_m_from(floored_pc(p_c_raw, c, params), c, a_c, params)
}

/// Density used for hardening evaluations: keeps the closed forms inside
/// their (0, 1) domain when the state approaches full density.
pub(crate) fn clamp_density_for_hardening(rho_hat: f64) -> f64 {
    rho_hat.clamp(1e-6, 1.0 - 1e-12)
}

/// Full hardening set (p_c, c, M, A_c) at a density and temperature.
///
/// Thermal softening multiplies p_c and c; the floor is applied after
/// softening. M is computed from the unsoftened (but floored) pair so the
/// surface shape is temperature-independent.
pub fn hardening_bundle(rho_hat: f64, t_celsius: f64, params: &MaterialParams) -> Result<HardeningState> {
    let rho = clamp_density_for_hardening(rho_hat);
    let f_t = thermal_softening(t_celsius, params);
    let p_c_raw = compaction_pressure_mla(rho, params.sigma_m)?;
    let c_raw = cohesion(rho, params.rho_hat0, params.sigma_m);
    let a_c = contact_area(rho, params.rho_hat0);
    let m_slope = friction_m_from(floored_pc(p_c_raw, c_raw, params), c_raw, a_c, params)?;
    Ok(HardeningState {
        p_c: floored_pc(f_t * p_c_raw, f_t * c_raw, params),
        c: f_t * c_raw,
        m_slope,
        a_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialParams;
    use approx::assert_relative_eq;

    // frozen reference values from a 50-digit evaluation of the closed forms
    const PC_MLA_06_RATIO: f64 = 0.208436166371691666;
    const PC_MLA_038_RATIO: f64 = -0.141960260275531051;
    const PC_MLA_09_RATIO: f64 = 0.983810820484207534;
    const PC_PLANE_09_SM150: f64 = 116.591986612674560;
    const RHO_STAR: f64 = 0.475573223499426923;
    const M_09: f64 = 1.17295109215181316;

    #[test]
    fn cell_side_anchors() {
        let r = cell_side(PI / 4.0, 1.0).unwrap();
        assert_relative_eq!(r, 1.0, max_relative = 1e-14);
        let r = cell_side(1.0, 1.0).unwrap();
        assert_relative_eq!(r, PI.sqrt() / 2.0, max_relative = 1e-14);
        assert_relative_eq!(r, 0.8862, max_relative = 1e-4);
        let r = cell_side(PI / 16.0, 1.0).unwrap();
        assert_relative_eq!(r, 2.0, max_relative = 1e-14);
        assert!(cell_side(0.0, 1.0).is_err());
        assert!(cell_side(-0.2, 1.0).is_err());
    }

    #[test]
    fn block_height_anchors() {
        // close to full density the deformable block vanishes
        let h = block_height(1.0 - 1e-12, 1.0, 1.0).unwrap();
        assert!(h < 1e-5);
        // at plane-strain close packing the block height equals the cell side
        let h = block_height(PI / 4.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(h, 1.0, max_relative = 1e-14);
        assert_relative_eq!(h, cell_side(PI / 4.0, 1.0).unwrap(), max_relative = 1e-14);
        // loose powder with the fitted correction factor: geometry breaks down
        let geom = CellGeometry::new(0.38, 1.0, 2.7).unwrap();
        assert_relative_eq!(geom.h, 6.59775271495369, max_relative = 1e-12);
        assert_relative_eq!(geom.r_cell, 1.43764991291293, max_relative = 1e-12);
        assert!(!geom.is_valid());
        assert!(block_height(1.0, 1.0, 1.0).is_err());
        assert!(block_height(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn geometry_round_trip_identity() {
        // rho * R^2 = R^2 - h^2 (4 - pi) / 4 for zeta = 1
        for i in 1..1000 {
            let rho = i as f64 / 1000.0;
            let r = cell_side(rho, 1.0).unwrap();
            let h = block_height(rho, 1.0, 1.0).unwrap();
            let lhs = rho * r * r;
            let rhs = r * r - h * h * (4.0 - PI) / 4.0;
            assert!(
                (lhs - rhs).abs() <= 1e-12 * r * r,
                "identity failed at rho = {rho}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn geometric_pressure_anchors() {
        let geom = CellGeometry::new(PI / 4.0, 1.0, 1.0).unwrap();
        // a = 0, h = R: p = k h / (2R) = k/2
        assert!(geom.a.abs() < 1e-14);
        let p = geometric_limit_pressure(&geom, 1.0).unwrap();
        assert_relative_eq!(p, 0.5, max_relative = 1e-12);
        // divergence as h -> 0 at fixed a
        let tight = CellGeometry {
            rho_hat: 0.999,
            r_cell: 1.0,
            h: 1e-9,
            a: 0.5,
            r0: 1.0,
            zeta: 1.0,
        };
        assert!(geometric_limit_pressure(&tight, 1.0).unwrap() > 1e7);
        // breakdown error carries the density
        let geom = CellGeometry::new(0.38, 1.0, 2.7).unwrap();
        match geometric_limit_pressure(&geom, 1.0) {
            Err(Error::GeometryBreakdown { rho_hat }) => assert_eq!(rho_hat, 0.38),
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn plane_curve_anchors() {
        // at rho = pi/4 with k = 1 the closed form reduces to 1/sqrt(pi)
        let pc = compaction_pressure_plane(PI / 4.0, 3.0f64.sqrt()).unwrap();
        assert_relative_eq!(pc, 1.0 / PI.sqrt(), max_relative = 1e-13);
        let pc = compaction_pressure_plane(0.9, 150.0).unwrap();
        assert_relative_eq!(pc, PC_PLANE_09_SM150, max_relative = 1e-12);
        assert!(compaction_pressure_plane(1.0, 150.0).is_err());
        assert!(compaction_pressure_plane(0.0, 150.0).is_err());
    }

    #[test]
    fn mla_curve_anchors() {
        let pc = compaction_pressure_mla(0.6, 150.0).unwrap();
        assert_relative_eq!(pc / 150.0, PC_MLA_06_RATIO, max_relative = 1e-12);
        assert_relative_eq!(pc, 31.2654249557537, max_relative = 1e-12);
        // raw curve is negative at the loose state and vanishes at rho*
        let pc038 = compaction_pressure_mla(0.38, 150.0).unwrap();
        assert_relative_eq!(pc038 / 150.0, PC_MLA_038_RATIO, max_relative = 1e-12);
        assert!(pc038 < 0.0);
        let pc_star = compaction_pressure_mla(RHO_STAR, 150.0).unwrap();
        assert!(pc_star.abs() < 1e-9 * 150.0, "pc(rho*) = {pc_star}");
        let pc09 = compaction_pressure_mla(0.9, 150.0).unwrap();
        assert_relative_eq!(pc09 / 150.0, PC_MLA_09_RATIO, max_relative = 1e-12);
    }

    #[test]
    fn mla_matches_factored_form() {
        for i in 1..1000 {
            let rho = 0.001 + 0.998 * (i as f64 / 1000.0);
            let a = compaction_pressure_mla(rho, 150.0).unwrap();
            let b = compaction_pressure_mla_factored(rho, 150.0).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                "mismatch at rho = {rho}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn curves_increase_and_diverge() {
        let mut prev_mla = f64::NEG_INFINITY;
        let mut prev_plane = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let rho = RHO_STAR + 1e-3 + (1.0 - 2e-6 - RHO_STAR - 1e-3) * (i as f64 / 1000.0);
            let mla = compaction_pressure_mla(rho, 150.0).unwrap();
            let plane = compaction_pressure_plane(rho, 150.0).unwrap();
            assert!(mla > prev_mla, "MLA not increasing at rho = {rho}");
            assert!(plane > prev_plane, "plane form not increasing at rho = {rho}");
            prev_mla = mla;
            prev_plane = plane;
        }
        // both forms diverge like (1 - rho)^(-1/2) as rho -> 1
        let pc_ref = compaction_pressure_mla(0.9, 150.0).unwrap();
        assert!(compaction_pressure_mla(1.0 - 1e-10, 150.0).unwrap() > 1e3 * pc_ref);
        let pc_ref = compaction_pressure_plane(0.9, 150.0).unwrap();
        assert!(compaction_pressure_plane(1.0 - 1e-10, 150.0).unwrap() > 1e3 * pc_ref);
    }

    #[test]
    fn contact_area_anchors() {
        assert_eq!(contact_area(0.38, 0.38), 0.0);
        assert_eq!(contact_area(0.2, 0.38), 0.0); // clamped below rho0
        assert_relative_eq!(contact_area(1.0, 0.38), PI / 3.0, max_relative = 1e-14);
        let mid = (1.0 + 0.38) / 2.0;
        assert_relative_eq!(contact_area(mid, 0.38), PI / 6.0, max_relative = 1e-14);
    }

    #[test]
    fn contact_and_cohesion_are_affine() {
        // finite-difference slope matches sigma_m (4 pi / 12) / (1 - rho0)
        let rho0 = 0.38;
        let sm = 150.0;
        let slope_ref = sm * (4.0 * PI / 12.0) / (1.0 - rho0);
        for i in 0..1000 {
            let rho = 0.39 + 0.6 * (i as f64 / 1000.0);
            let d = 1e-6;
            let slope = (cohesion(rho + d, rho0, sm) - cohesion(rho - d, rho0, sm)) / (2.0 * d);
            assert_relative_eq!(slope, slope_ref, max_relative = 1e-9);
        }
    }

    #[test]
    fn cohesion_anchors() {
        assert_eq!(cohesion(0.38, 0.38, 150.0), 0.0);
        assert_relative_eq!(cohesion(1.0, 0.38, 150.0), 150.0 * PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(cohesion(0.69, 0.38, 150.0), 25.0 * PI, max_relative = 1e-13);
    }

    #[test]
    fn friction_m_anchors() {
        let params = MaterialParams::default();
        // c = 0 at the loose state pins M to the floor
        let m = friction_m(0.38, &params).unwrap();
        assert_eq!(m, params.m_floor);
        // frozen high-precision value at rho = 0.9
        let m = friction_m(0.9, &params).unwrap();
        assert_relative_eq!(m, M_09, max_relative = 1e-12);
    }

    #[test]
    fn friction_m_is_continuous_at_the_loose_state() {
        // the raw pure-shear expression tends to zero as c -> 0+, so M must
        // sit at the floor on both sides of rho_hat0
        let params = MaterialParams::default();
        let m0 = friction_m(0.38, &params).unwrap();
        for drho in [1e-13, 1e-11, 1e-9, 1e-8] {
            let m = friction_m(0.38 + drho, &params).unwrap();
            assert_eq!(m, m0, "M jumped by {} at drho = {drho}", (m - m0).abs());
        }
        // and grows smoothly away from it
        let m_far = friction_m(0.38 + 1e-4, &params).unwrap();
        assert!(m_far > m0);
    }

    #[test]
    fn friction_m_is_scale_free() {
        let params = MaterialParams::default();
        let mut doubled = params.clone();
        doubled.sigma_m = 2.0 * params.sigma_m;
        for rho in [0.5, 0.6, 0.75, 0.9, 0.99] {
            let m1 = friction_m(rho, &params).unwrap();
            let m2 = friction_m(rho, &doubled).unwrap();
            assert_relative_eq!(m1, m2, max_relative = 1e-12);
        }
    }

    #[test]
    fn hardening_bundle_behaviour() {
        let params = MaterialParams::default();
        // softening anchors: f_T(0) = 1 + C_T, f_T(>=800) = C_T
        let h0 = hardening_bundle(0.9, 0.0, &params).unwrap();
        let h_raw = compaction_pressure_mla(0.9, params.sigma_m).unwrap();
        assert_relative_eq!(h0.p_c, h_raw * 1.0001, max_relative = 1e-12);
        let h_hot = hardening_bundle(0.9, 800.0, &params).unwrap();
        assert_relative_eq!(h_hot.p_c, h_raw * 1e-4, max_relative = 1e-12);
        let h_hotter = hardening_bundle(0.9, 1200.0, &params).unwrap();
        assert_relative_eq!(h_hotter.p_c, h_hot.p_c, max_relative = 1e-12);
        // M is temperature independent
        assert_relative_eq!(h0.m_slope, h_hot.m_slope, max_relative = 1e-14);
        // loose state floors
        let h_loose = hardening_bundle(0.38, 20.0, &params).unwrap();
        assert_eq!(h_loose.p_c, params.p_c_floor);
        assert_eq!(h_loose.c, 0.0);
        assert_eq!(h_loose.m_slope, params.m_floor);
        // M invariant under sigma_m scaling inside the bundle as well
        let mut doubled = params.clone();
        doubled.sigma_m *= 2.0;
        let h2 = hardening_bundle(0.9, 0.0, &doubled).unwrap();
        assert_relative_eq!(h0.m_slope, h2.m_slope, max_relative = 1e-12);
    }
}
