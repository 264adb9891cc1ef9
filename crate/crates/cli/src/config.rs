//! Run configuration: compiled-in defaults, optional config file, `--set`
//! overrides (highest precedence). Flat `key = value` lines with `#`
//! comments; unknown keys are rejected by name.

use std::fmt::Write as _;
use std::path::PathBuf;

use sinterpress::material::PARAM_KEYS;
use sinterpress::{IntegratorSettings, MaterialParams};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
pub struct CurveOptions {
    pub rho_min: f64,
    pub rho_max: f64,
    pub n: usize,
    /// ζ used for the geometric diagnostic column; 1.0 is the unmodified
    /// plane-strain geometry.
    pub zeta_geometric: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceOptions {
    pub densities: Vec<f64>,
    pub n_p: usize,
    pub temperature_c: f64,
}

#[derive(Debug, Clone)]
pub struct DilatometerOptions {
    pub ramp_rate_c_min: f64,
    pub t_max_c: f64,
    pub max_dt_s: f64,
}

#[derive(Debug, Clone)]
pub struct PressOptions {
    pub stroke_ratio: f64,
    pub duration_s: f64,
    pub unload_s: f64,
    pub viscosity_mpa_s: f64,
    pub max_dt_s: f64,
}

#[derive(Debug, Clone)]
pub struct HeatOptions {
    pub length_m: f64,
    pub n_nodes: usize,
    pub t_initial_c: f64,
    pub dt_s: f64,
    pub record_every: usize,
    pub schedule_csv: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PointOptions {
    pub program: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub material: MaterialParams,
    pub integrator: IntegratorSettings,
    pub out: Option<PathBuf>,
    pub curve: CurveOptions,
    pub surface: SurfaceOptions,
    pub dilatometer: DilatometerOptions,
    pub press: PressOptions,
    pub heat: HeatOptions,
    pub point: PointOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            material: MaterialParams::default(),
            integrator: IntegratorSettings::default(),
            out: None,
            curve: CurveOptions {
                rho_min: 0.40,
                rho_max: 0.99,
                n: 60,
                zeta_geometric: 1.0,
            },
            surface: SurfaceOptions {
                densities: vec![0.5, 0.7, 0.9],
                n_p: 200,
                temperature_c: 20.0,
            },
            dilatometer: DilatometerOptions {
                ramp_rate_c_min: 30.0,
                t_max_c: 1200.0,
                max_dt_s: 2.0,
            },
            press: PressOptions {
                stroke_ratio: 12.6 / 22.0,
                duration_s: 10.0,
                unload_s: 2.5,
                viscosity_mpa_s: 1e-12,
                max_dt_s: 0.05,
            },
            heat: HeatOptions {
                length_m: 0.022,
                n_nodes: 21,
                t_initial_c: 20.0,
                dt_s: 1.0,
                record_every: 10,
                schedule_csv: None,
            },
            point: PointOptions { program: None },
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("key `{key}`: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("key `{key}`: `{v}` is not a non-negative integer")))
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if PARAM_KEYS.contains(&key) {
            let v = parse_f64(key, value)?;
            self.material
                .set_key(key, v)
                .map_err(|e| ConfigError(e.to_string()))?;
            return Ok(());
        }
        match key {
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "integrator.newton_tol" => self.integrator.newton_tol = parse_f64(key, value)?,
            "integrator.newton_max_iter" => {
                self.integrator.newton_max_iter = parse_usize(key, value)?
            }
            "integrator.substep_max_levels" => {
                self.integrator.substep_max_levels = parse_usize(key, value)?
            }
            "integrator.dt_initial_s" => self.integrator.dt_initial = parse_f64(key, value)?,
            "curve.rho_min" => self.curve.rho_min = parse_f64(key, value)?,
            "curve.rho_max" => self.curve.rho_max = parse_f64(key, value)?,
            "curve.n" => self.curve.n = parse_usize(key, value)?,
            "curve.zeta_geometric" => self.curve.zeta_geometric = parse_f64(key, value)?,
            "surface.densities" => {
                let mut densities = Vec::new();
                for part in value.split(',') {
                    densities.push(parse_f64(key, part)?);
                }
                if densities.is_empty() {
                    return Err(ConfigError("surface.densities is empty".into()));
                }
                self.surface.densities = densities;
            }
            "surface.n_p" => self.surface.n_p = parse_usize(key, value)?,
            "surface.temperature_C" => self.surface.temperature_c = parse_f64(key, value)?,
            "dilatometer.ramp_rate_C_min" => {
                self.dilatometer.ramp_rate_c_min = parse_f64(key, value)?
            }
            "dilatometer.t_max_C" => self.dilatometer.t_max_c = parse_f64(key, value)?,
            "dilatometer.max_dt_s" => self.dilatometer.max_dt_s = parse_f64(key, value)?,
            "press.stroke_ratio" => self.press.stroke_ratio = parse_f64(key, value)?,
            "press.duration_s" => self.press.duration_s = parse_f64(key, value)?,
            "press.unload_s" => self.press.unload_s = parse_f64(key, value)?,
            "press.viscosity_MPa_s" => self.press.viscosity_mpa_s = parse_f64(key, value)?,
            "press.max_dt_s" => self.press.max_dt_s = parse_f64(key, value)?,
            "heat.length_m" => self.heat.length_m = parse_f64(key, value)?,
            "heat.n_nodes" => self.heat.n_nodes = parse_usize(key, value)?,
            "heat.t_initial_C" => self.heat.t_initial_c = parse_f64(key, value)?,
            "heat.dt_s" => self.heat.dt_s = parse_f64(key, value)?,
            "heat.record_every" => self.heat.record_every = parse_usize(key, value)?,
            "heat.schedule_csv" => self.heat.schedule_csv = Some(PathBuf::from(value.trim())),
            "point.program" => self.point.program = Some(PathBuf::from(value.trim())),
            _ => return Err(ConfigError(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines (with `#` comments) from config-file text.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!(
                    "{source}:{}: expected `key = value`, got `{raw}`",
                    lineno + 1
                ))
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("{source}:{}: {}", lineno + 1, e.0)))?;
        }
        Ok(())
    }

    /// Applies a `--set KEY=VALUE` argument.
    pub fn apply_set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            ConfigError(format!("--set expects KEY=VALUE, got `{assignment}`"))
        })?;
        self.apply(key.trim(), value.trim())
    }

    /// Refreshes derived parameters and validates everything.
    pub fn finalize(&mut self) -> Result<()> {
        self.material
            .finalize()
            .map_err(|e| ConfigError(e.to_string()))?;
        if !(self.integrator.newton_tol > 0.0) {
            return Err(ConfigError("integrator.newton_tol must be positive".into()));
        }
        if !(self.integrator.dt_initial > 0.0) {
            return Err(ConfigError("integrator.dt_initial_s must be positive".into()));
        }
        Ok(())
    }

    /// Serializes the effective configuration as reloadable `key = value`
    /// text. Floats use shortest round-trip formatting, so a reload
    /// reproduces the identical run.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for key in PARAM_KEYS {
            let v = self.material.get_key(key).expect("key table is exhaustive");
            let _ = writeln!(s, "{key} = {v}");
        }
        let _ = writeln!(s, "integrator.newton_tol = {}", self.integrator.newton_tol);
        let _ = writeln!(
            s,
            "integrator.newton_max_iter = {}",
            self.integrator.newton_max_iter
        );
        let _ = writeln!(
            s,
            "integrator.substep_max_levels = {}",
            self.integrator.substep_max_levels
        );
        let _ = writeln!(s, "integrator.dt_initial_s = {}", self.integrator.dt_initial);
        let _ = writeln!(s, "curve.rho_min = {}", self.curve.rho_min);
        let _ = writeln!(s, "curve.rho_max = {}", self.curve.rho_max);
        let _ = writeln!(s, "curve.n = {}", self.curve.n);
        let _ = writeln!(s, "curve.zeta_geometric = {}", self.curve.zeta_geometric);
        let densities: Vec<String> = self
            .surface
            .densities
            .iter()
            .map(|d| format!("{d}"))
            .collect();
        let _ = writeln!(s, "surface.densities = {}", densities.join(","));
        let _ = writeln!(s, "surface.n_p = {}", self.surface.n_p);
        let _ = writeln!(s, "surface.temperature_C = {}", self.surface.temperature_c);
        let _ = writeln!(
            s,
            "dilatometer.ramp_rate_C_min = {}",
            self.dilatometer.ramp_rate_c_min
        );
        let _ = writeln!(s, "dilatometer.t_max_C = {}", self.dilatometer.t_max_c);
        let _ = writeln!(s, "dilatometer.max_dt_s = {}", self.dilatometer.max_dt_s);
        let _ = writeln!(s, "press.stroke_ratio = {}", self.press.stroke_ratio);
        let _ = writeln!(s, "press.duration_s = {}", self.press.duration_s);
        let _ = writeln!(s, "press.unload_s = {}", self.press.unload_s);
        let _ = writeln!(s, "press.viscosity_MPa_s = {}", self.press.viscosity_mpa_s);
        let _ = writeln!(s, "press.max_dt_s = {}", self.press.max_dt_s);
        let _ = writeln!(s, "heat.length_m = {}", self.heat.length_m);
        let _ = writeln!(s, "heat.n_nodes = {}", self.heat.n_nodes);
        let _ = writeln!(s, "heat.t_initial_C = {}", self.heat.t_initial_c);
        let _ = writeln!(s, "heat.dt_s = {}", self.heat.dt_s);
        let _ = writeln!(s, "heat.record_every = {}", self.heat.record_every);
        if let Some(p) = &self.heat.schedule_csv {
            let _ = writeln!(s, "heat.schedule_csv = {}", p.display());
        }
        if let Some(p) = &self.point.program {
            let _ = writeln!(s, "point.program = {}", p.display());
        }
        if let Some(p) = &self.out {
            let _ = writeln!(s, "out = {}", p.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply("sigma_n", "150").unwrap_err();
        assert!(err.0.contains("sigma_n"), "{err}");
        let err = cfg.apply_text("curve.rho_mni = 0.5\n", "test").unwrap_err();
        assert!(err.0.contains("curve.rho_mni"), "{err}");
    }

    #[test]
    fn file_syntax_and_precedence() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nsigma_m = 120   # trailing\n\ncurve.n = 7\n", "test")
            .unwrap();
        cfg.apply_set("sigma_m=130").unwrap();
        cfg.finalize().unwrap();
        assert_eq!(cfg.material.sigma_m, 130.0);
        assert_eq!(cfg.curve.n, 7);
        assert!(cfg.apply_set("nonsense").is_err());
    }

    #[test]
    fn dump_reload_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_set("nu=0.27").unwrap();
        cfg.apply_set("surface.densities=0.55,0.8").unwrap();
        cfg.finalize().unwrap();
        let dump = cfg.dump();
        let mut reloaded = RunConfig::default();
        reloaded.apply_text(&dump, "dump").unwrap();
        reloaded.finalize().unwrap();
        assert_eq!(reloaded.material, cfg.material);
        assert_eq!(reloaded.surface.densities, cfg.surface.densities);
        assert_eq!(reloaded.dump(), dump);
    }
}
