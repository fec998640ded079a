//! Deterministic JSON output: object keys sorted, floats always printed with
//! twelve significant digits. Two runs over the same data produce the same
//! bytes, and a written report reparsed and rewritten is byte-identical,
//! which makes reports diffable across runs and machines.

use serde_json::Value;

pub fn to_deterministic_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().expect("serde_json numbers are i64, u64 or f64");
                // Eleven digits after the leading one: twelve significant.
                out.push_str(&format!("{f:.11e}"));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
        }
        Value::Array(items) => {
            out.push('[');
            for (idx, item) in items.iter().enumerate() {
                if idx > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is a BTreeMap, so iteration is
            // already key-sorted.
            out.push('{');
            for (idx, (key, item)) in map.iter().enumerate() {
                if idx > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("strings always serialize"));
                out.push(':');
                write_value(item, out);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_get_twelve_significant_digits() {
        let s = to_deterministic_string(&json!(6.5));
        assert_eq!(s, "6.50000000000e0");
        let s = to_deterministic_string(&json!(-0.0001));
        assert_eq!(s, "-1.00000000000e-4");
    }

    #[test]
    fn integers_stay_integers() {
        assert_eq!(to_deterministic_string(&json!(42)), "42");
        assert_eq!(to_deterministic_string(&json!(-7)), "-7");
    }

    #[test]
    fn keys_come_out_sorted() {
        let v = json!({"zeta": 1, "alpha": 2, "mid": {"b": 1, "a": 2}});
        assert_eq!(
            to_deterministic_string(&v),
            r#"{"alpha":2,"mid":{"a":2,"b":1},"zeta":1}"#
        );
    }

    #[test]
    fn strings_are_escaped() {
        let v = json!({"msg": "a \"quoted\" line\nwith a break"});
        let s = to_deterministic_string(&v);
        assert!(s.contains(r#"\"quoted\""#));
        assert!(s.contains(r"\n"));
    }

    #[test]
    fn write_parse_write_is_a_fixed_point() {
        // Twelve significant digits is coarser than f64 precision, so the
        // reparsed float rounds back to the same printed form.
        let v = json!({
            "payments": [0.1 + 0.2, 1.0 / 3.0, 2.5e-13, -17.125],
            "welfare": 6.666666666666667,
            "count": 3,
            "note": "stable",
        });
        let first = to_deterministic_string(&v);
        let reparsed: Value = serde_json::from_str(&first).unwrap();
        let second = to_deterministic_string(&reparsed);
        assert_eq!(first, second);
    }
}
