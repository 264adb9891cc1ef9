//! Constitutive-model engine for cold compaction and non-isothermal
//! solid-state sintering of ceramic powders.
//!
//! The model is thermo-elastic-visco-plastic on logarithmic strains with a
//! single internal variable, the inelastic relative density ρ̂. Yielding is
//! governed by a seven-parameter pressure-sensitive surface whose size
//! parameters (p_c, c, M) evolve with ρ̂ through a plane-strain
//! limit-analysis micromechanics; densification under zero load is driven by
//! the sintering stress derived from the pore surface energy. Temperature
//! enters through thermal softening of the yield strength, an Arrhenius
//! viscosity with grain-size dependence, and grain growth kinetics.
//!
//! Modules:
//! - [`tensor`]: symmetric-tensor algebra, logarithmic strain, invariants;
//! - [`micromech`]: compaction curve, cohesion and friction parameter;
//! - [`material`]: parameters, state, stress laws, yield surface, kinetics;
//! - [`integrator`]: implicit Perzyna return mapping and point drivers;
//! - [`heat1d`]: transient conduction coupled one-way to a point column.

pub mod error;
pub mod heat1d;
pub mod integrator;
pub mod material;
pub mod micromech;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use integrator::{
    dilatometer_run, drive_program, oedometric_press_run, return_map_step, AxisCondition, Control,
    IntegratorSettings, LoadSegment, StepResult, TemperatureSchedule, TimeSeriesRecord,
    ViscosityMode,
};
pub use material::{MaterialParams, MaterialState, PoreEnergy};
pub use micromech::{CellGeometry, HardeningState};
pub use tensor::{log_strain_from_defgrad, stress_invariants, StressInvariants, SymTensor3};
