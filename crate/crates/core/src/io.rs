//! Number formatting shared by the CSV writers.

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for &x in &[0.0, -0.0, 1.0 / 3.0, std::f64::consts::PI * 1e-300, 7.068583470577035, -1e300] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(fmt17(f64::NAN), "NaN");
    }
}
