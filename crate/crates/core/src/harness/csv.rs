//! Plain CSV rows with full-precision floats.

/// Formats one float the way every CSV in this crate does.
pub fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// A comma-separated row of floats terminated by a newline.
pub fn row(values: &[f64]) -> String {
    let mut s = values.iter().map(|&v| float(v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 1.0, -2.5e-300, std::f64::consts::PI, 1.0 / 3.0] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(row(&[1.0, f64::INFINITY]), "1.0000000000000000e0,inf\n");
    }
}
