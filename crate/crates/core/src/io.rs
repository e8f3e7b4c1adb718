//! Shared output helpers.

/// Format with 17 significant digits, which round-trips every `f64`.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_roundtrips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123_456_789.123_456_79, 0.0] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt17(f64::NAN), "NaN");
    }
}
