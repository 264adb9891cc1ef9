//! Deterministic CSV field formatting: 12 significant digits, '.' decimal
//! separator, '\n' line endings. Identical configs must yield byte-identical
//! files.

/// Formats a float with 12 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{x:.11e}")
}

/// Joins fields with commas and terminates the row with '\n'.
pub fn row(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_is_stable() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(150.0), "1.50000000000e2");
        assert_eq!(fmt_f64(0.38), "3.80000000000e-1");
        assert_eq!(fmt_f64(-1.25e-7), "-1.25000000000e-7");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn twelve_significant_digits_round_trip_closely() {
        let x = std::f64::consts::PI * 1e6;
        let s = fmt_f64(x);
        let back: f64 = s.parse().unwrap();
        assert!((back - x).abs() / x < 1e-11);
    }
}
