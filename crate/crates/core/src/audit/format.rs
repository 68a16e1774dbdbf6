//! Fixed-precision number rendering for reports.

use serde_json::Value;

pub const DASH: &str = "–";

/// Rounds to six significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Six significant digits in plain decimal notation.
pub fn sig6(x: f64) -> String {
    format!("{}", round_sig6(x))
}

pub fn sig6_or_dash(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| DASH.to_string())
}

/// Rounds every non-integer number in a JSON tree to six significant digits.
pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig6).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_digits() {
        assert_eq!(sig6(0.0096), "0.0096");
        assert_eq!(sig6(138.70000000001), "138.7");
        assert_eq!(sig6(2.0 / 3.0), "0.666667");
        assert_eq!(sig6(1234567.0), "1234570");
        assert_eq!(sig6_or_dash(None), DASH);
    }

    #[test]
    fn json_rounding_keeps_integers() {
        let mut v = serde_json::json!({"a": 0.123456789, "n": 12345678901u64, "l": [1.0000001]});
        round_json(&mut v);
        assert_eq!(v.to_string(), r#"{"a":0.123457,"l":[1.0],"n":12345678901}"#);
    }
}
