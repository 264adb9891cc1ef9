//! Load-program files for the `point-run` command: flat `key = value` lines
//! describing numbered segments.
//!
//! ```text
//! segment.1.duration_s = 100
//! segment.1.max_dt_s = 1
//! segment.1.temperature = ramp 20 30          # start_C rate_C_per_min
//! segment.1.control = strain_rate
//! segment.1.rate = -1e-3 0 0 0 0 0            # order 11 22 33 12 13 23
//! segment.2.duration_s = 50
//! segment.2.temperature = constant 20
//! segment.2.control = mixed
//! segment.2.axis.11 = stress 0
//! segment.2.axis.22 = strain_rate 0
//! ...
//! ```
//!
//! `stress_target` segments take `segment.N.target = s11 ... s23`; `mixed`
//! segments need exactly one condition per axis. Temperature tables are
//! written `table 0:20,60:400,120:400`.

use std::collections::BTreeMap;

use sinterpress::{AxisCondition, Control, LoadSegment, SymTensor3, TemperatureSchedule};

use crate::config::ConfigError;

type Result<T> = std::result::Result<T, ConfigError>;

const AXIS_NAMES: [&str; 6] = ["11", "22", "33", "12", "13", "23"];

#[derive(Default)]
struct SegmentDraft {
    duration_s: Option<f64>,
    max_dt_s: Option<f64>,
    temperature: Option<TemperatureSchedule>,
    control: Option<String>,
    rate: Option<[f64; 6]>,
    target: Option<[f64; 6]>,
    axes: BTreeMap<usize, AxisCondition>,
}

fn parse_six(key: &str, value: &str) -> Result<[f64; 6]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(ConfigError(format!(
            "{key}: expected 6 components (11 22 33 12 13 23), got {}",
            parts.len()
        )));
    }
    let mut out = [0.0; 6];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .parse()
            .map_err(|_| ConfigError(format!("{key}: `{p}` is not a number")))?;
    }
    Ok(out)
}

fn parse_temperature(key: &str, value: &str) -> Result<TemperatureSchedule> {
    let mut it = value.split_whitespace();
    let kind = it
        .next()
        .ok_or_else(|| ConfigError(format!("{key}: empty temperature spec")))?;
    let rest: Vec<&str> = it.collect();
    match kind {
        "constant" => {
            if rest.len() != 1 {
                return Err(ConfigError(format!("{key}: `constant` takes one value")));
            }
            Ok(TemperatureSchedule::Constant(rest[0].parse().map_err(
                |_| ConfigError(format!("{key}: `{}` is not a number", rest[0])),
            )?))
        }
        "ramp" => {
            if rest.len() != 2 {
                return Err(ConfigError(format!(
                    "{key}: `ramp` takes start_C and rate_C_per_min"
                )));
            }
            Ok(TemperatureSchedule::Ramp {
                start_c: rest[0]
                    .parse()
                    .map_err(|_| ConfigError(format!("{key}: bad ramp start")))?,
                rate_c_per_min: rest[1]
                    .parse()
                    .map_err(|_| ConfigError(format!("{key}: bad ramp rate")))?,
            })
        }
        "table" => {
            if rest.len() != 1 {
                return Err(ConfigError(format!(
                    "{key}: `table` takes t1:T1,t2:T2,... without spaces"
                )));
            }
            let mut pts = Vec::new();
            for pair in rest[0].split(',') {
                let (t, temp) = pair.split_once(':').ok_or_else(|| {
                    ConfigError(format!("{key}: table entry `{pair}` is not t:T"))
                })?;
                pts.push((
                    t.parse()
                        .map_err(|_| ConfigError(format!("{key}: bad table time `{t}`")))?,
                    temp.parse()
                        .map_err(|_| ConfigError(format!("{key}: bad table value `{temp}`")))?,
                ));
            }
            Ok(TemperatureSchedule::Table(pts))
        }
        other => Err(ConfigError(format!(
            "{key}: unknown temperature kind `{other}` (constant | ramp | table)"
        ))),
    }
}

fn parse_axis(key: &str, value: &str) -> Result<AxisCondition> {
    let mut it = value.split_whitespace();
    let kind = it
        .next()
        .ok_or_else(|| ConfigError(format!("{key}: empty axis condition")))?;
    let num = it
        .next()
        .ok_or_else(|| ConfigError(format!("{key}: missing value")))?;
    if it.next().is_some() {
        return Err(ConfigError(format!("{key}: too many fields")));
    }
    let v: f64 = num
        .parse()
        .map_err(|_| ConfigError(format!("{key}: `{num}` is not a number")))?;
    match kind {
        "strain_rate" => Ok(AxisCondition::StrainRate(v)),
        "stress" => Ok(AxisCondition::Stress(v)),
        other => Err(ConfigError(format!(
            "{key}: unknown axis condition `{other}` (strain_rate | stress)"
        ))),
    }
}

/// Parses a load-program file into segments.
pub fn parse_program(text: &str, source: &str) -> Result<Vec<LoadSegment>> {
    let mut drafts: BTreeMap<usize, SegmentDraft> = BTreeMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let err_at = |msg: String| ConfigError(format!("{source}:{}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err_at(format!("expected `key = value`, got `{raw}`")))?;
        let key = key.trim();
        let value = value.trim();

        let rest = key
            .strip_prefix("segment.")
            .ok_or_else(|| err_at(format!("unknown program key `{key}`")))?;
        let (idx_str, field) = rest
            .split_once('.')
            .ok_or_else(|| err_at(format!("malformed segment key `{key}`")))?;
        let idx: usize = idx_str
            .parse()
            .map_err(|_| err_at(format!("bad segment index `{idx_str}`")))?;
        if idx == 0 {
            return Err(err_at("segments are numbered from 1".into()));
        }
        let draft = drafts.entry(idx).or_default();

        match field {
            "duration_s" => {
                draft.duration_s = Some(
                    value
                        .parse()
                        .map_err(|_| err_at(format!("bad duration `{value}`")))?,
                )
            }
            "max_dt_s" => {
                draft.max_dt_s = Some(
                    value
                        .parse()
                        .map_err(|_| err_at(format!("bad max_dt `{value}`")))?,
                )
            }
            "temperature" => draft.temperature = Some(parse_temperature(key, value).map_err(|e| err_at(e.0))?),
            "control" => draft.control = Some(value.to_string()),
            "rate" => draft.rate = Some(parse_six(key, value).map_err(|e| err_at(e.0))?),
            "target" => draft.target = Some(parse_six(key, value).map_err(|e| err_at(e.0))?),
            other => {
                if let Some(axis) = other.strip_prefix("axis.") {
                    let slot = AXIS_NAMES
                        .iter()
                        .position(|a| *a == axis)
                        .ok_or_else(|| err_at(format!("unknown axis `{axis}`")))?;
                    draft
                        .axes
                        .insert(slot, parse_axis(key, value).map_err(|e| err_at(e.0))?);
                } else {
                    return Err(err_at(format!("unknown segment field `{other}`")));
                }
            }
        }
    }

    if drafts.is_empty() {
        return Err(ConfigError(format!("{source}: program defines no segments")));
    }
    let n = drafts.len();
    let mut segments = Vec::with_capacity(n);
    for i in 1..=n {
        let draft = drafts
            .remove(&i)
            .ok_or_else(|| ConfigError(format!("{source}: segment {i} is missing (segments must be contiguous from 1)")))?;
        let duration_s = draft
            .duration_s
            .ok_or_else(|| ConfigError(format!("{source}: segment {i} has no duration_s")))?;
        let temperature = draft
            .temperature
            .ok_or_else(|| ConfigError(format!("{source}: segment {i} has no temperature")))?;
        let control_kind = draft
            .control
            .ok_or_else(|| ConfigError(format!("{source}: segment {i} has no control")))?;
        let control = match control_kind.as_str() {
            "strain_rate" => Control::StrainRate(SymTensor3::from_components(
                draft.rate.ok_or_else(|| {
                    ConfigError(format!("{source}: segment {i} needs `rate` for strain_rate control"))
                })?,
            )),
            "stress_target" => Control::StressTarget(SymTensor3::from_components(
                draft.target.ok_or_else(|| {
                    ConfigError(format!(
                        "{source}: segment {i} needs `target` for stress_target control"
                    ))
                })?,
            )),
            "mixed" => {
                let mut conds = [AxisCondition::StrainRate(0.0); 6];
                for (slot, name) in AXIS_NAMES.iter().enumerate() {
                    conds[slot] = *draft.axes.get(&slot).ok_or_else(|| {
                        ConfigError(format!(
                            "{source}: segment {i} mixed control is missing axis.{name}"
                        ))
                    })?;
                }
                Control::Mixed(conds)
            }
            other => {
                return Err(ConfigError(format!(
                    "{source}: segment {i}: unknown control `{other}` (strain_rate | stress_target | mixed)"
                )))
            }
        };
        segments.push(LoadSegment {
            duration_s,
            control,
            temperature,
            max_dt_s: draft.max_dt_s.unwrap_or(duration_s / 100.0),
        });
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_three_segment_program() {
        let text = "
# compress, hold, unload
segment.1.duration_s = 10
segment.1.max_dt_s = 0.1
segment.1.temperature = constant 20
segment.1.control = strain_rate
segment.1.rate = -0.05 0 0 0 0 0

segment.2.duration_s = 5
segment.2.temperature = ramp 20 30
segment.2.control = stress_target
segment.2.target = -10 -10 -10 0 0 0

segment.3.duration_s = 5
segment.3.max_dt_s = 0.5
segment.3.temperature = table 0:20,5:400
segment.3.control = mixed
segment.3.axis.11 = stress 0
segment.3.axis.22 = strain_rate 0
segment.3.axis.33 = strain_rate 0
segment.3.axis.12 = strain_rate 0
segment.3.axis.13 = strain_rate 0
segment.3.axis.23 = strain_rate 0
";
        let segments = parse_program(text, "test").unwrap();
        assert_eq!(segments.len(), 3);
        assert!(matches!(segments[0].control, Control::StrainRate(_)));
        assert!(matches!(segments[1].control, Control::StressTarget(_)));
        assert!(matches!(segments[2].control, Control::Mixed(_)));
        assert_eq!(segments[2].max_dt_s, 0.5);
    }

    #[test]
    fn mixed_requires_every_axis() {
        let text = "
segment.1.duration_s = 1
segment.1.temperature = constant 20
segment.1.control = mixed
segment.1.axis.11 = stress 0
";
        let err = parse_program(text, "test").unwrap_err();
        assert!(err.0.contains("axis.22"), "{err}");
    }

    #[test]
    fn gaps_and_unknown_fields_rejected() {
        let text = "
segment.2.duration_s = 1
segment.2.temperature = constant 20
segment.2.control = strain_rate
segment.2.rate = 0 0 0 0 0 0
";
        assert!(parse_program(text, "test").unwrap_err().0.contains("segment 1"));
        let err = parse_program("segment.1.durations = 2\n", "test").unwrap_err();
        assert!(err.0.contains("durations"), "{err}");
    }
}
