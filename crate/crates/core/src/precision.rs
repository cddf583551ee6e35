//! Rounding of floating-point output to 9 significant digits.

use serde_json::Value;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Nearest value with at most 9 significant decimal digits; non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every non-integer number in a JSON tree.
pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Compact JSON with all floats rounded.
pub fn to_json_line<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    serde_json::to_string(&v)
}

/// Pretty JSON with all floats rounded.
pub fn to_json_pretty<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    serde_json::to_string_pretty(&v)
}

/// Formats a float for CSV output.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    format!("{}", round_sig(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_nine_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig(213.333333333333), 213.333333);
        assert_eq!(round_sig(-1234567891234.0), -1234567890000.0);
        assert_eq!(round_sig(0.0), 0.0);
        assert!(round_sig(f64::NAN).is_nan());
        assert_eq!(round_sig(round_sig(2.0f64.sqrt())), round_sig(2.0f64.sqrt()));
    }

    #[test]
    fn json_tree_is_rounded() {
        let mut v = serde_json::json!({"a": [std::f64::consts::PI, 3], "b": {"c": 2.0 / 3.0}, "s": "x"});
        round_json(&mut v);
        assert_eq!(v.to_string(), r#"{"a":[3.14159265,3],"b":{"c":0.666666667},"s":"x"}"#);
        assert_eq!(fmt_sig(0.1 + 0.2), "0.3");
    }
}
