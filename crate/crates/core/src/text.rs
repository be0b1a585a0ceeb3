//! Float formatting shared by the measure text format and CSV emitters.

/// Format a float with 17 significant digits.
///
/// 17 digits round-trip every f64 exactly, which makes file output both
/// deterministic and lossless to re-parse.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

#[cfg(test)]
mod tests {
    use super::fmt_f64;

    #[test]
    fn round_trips_exactly() {
        for &x in &[
            0.0,
            1.0,
            -0.7,
            0.1 + 0.2,
            std::f64::consts::PI,
            1e-300,
            -3.5e280,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
