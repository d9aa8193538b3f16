use chrono::{DateTime, NaiveDate, NaiveTime};
use regex::Regex;
use serde_json::Value;

use crate::oas::Constraint;
use crate::trace::Literal;

/// Whether `value` breaks `constraint`. `nullable` is the schema's flag, so
/// `null` is not a type violation where the schema allows it. `happy` is the
/// valid value the override replaces; it only matters for formats that
/// cannot be checked mechanically.
pub fn violates(constraint: &Constraint, nullable: bool, value: &Literal, happy: Option<&Literal>) -> bool {
    let v = match value {
        Literal::Absent => return matches!(constraint, Constraint::Required),
        Literal::Json(v) => v,
    };
    match constraint {
        Constraint::Required => false,
        Constraint::Type { expected } => !(expected.admits(v) || nullable && v.is_null()),
        Constraint::Format { format } => match v {
            Value::String(s) => match format_holds(format, s) {
                Some(ok) => !ok,
                None => happy.and_then(Literal::as_json) != Some(v),
            },
            Value::Number(n) => match format.as_str() {
                "int32" => n.as_i64().is_none_or(|i| i32::try_from(i).is_err()),
                "int64" => n.as_i64().is_none(),
                _ => false,
            },
            _ => false,
        },
        Constraint::Enum { values } => !values.contains(v),
        Constraint::Range {
            minimum,
            maximum,
            exclusive_minimum,
            exclusive_maximum,
        } => {
            let Some(x) = v.as_f64() else { return false };
            let below = minimum.is_some_and(|m| if *exclusive_minimum { x <= m } else { x < m });
            let above = maximum.is_some_and(|m| if *exclusive_maximum { x >= m } else { x > m });
            below || above
        }
        Constraint::Length { min, max } => {
            let len = match v {
                Value::String(s) => s.chars().count() as u64,
                Value::Array(a) => a.len() as u64,
                _ => return false,
            };
            min.is_some_and(|m| len < m) || max.is_some_and(|m| len > m)
        }
        Constraint::Pattern { pattern } => match (v, Regex::new(pattern)) {
            (Value::String(s), Ok(re)) => !re.is_match(s),
            _ => false,
        },
    }
}

/// `None` for formats this checker does not know.
fn format_holds(format: &str, s: &str) -> Option<bool> {
    let ok = match format {
        "date" => s.len() == 10 && NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok(),
        "date-time" => DateTime::parse_from_rfc3339(s).is_ok(),
        "time" => NaiveTime::parse_from_str(s.trim_end_matches('Z'), "%H:%M:%S%.f").is_ok(),
        "email" => {
            let mut parts = s.split('@');
            matches!(
                (parts.next(), parts.next(), parts.next()),
                (Some(local), Some(domain), None) if !local.is_empty() && domain.contains('.') && !domain.starts_with('.') && !domain.ends_with('.')
            ) && !s.contains(char::is_whitespace)
        }
        "uuid" => {
            let groups: Vec<&str> = s.split('-').collect();
            groups.len() == 5
                && groups.iter().map(|g| g.len()).eq([8, 4, 4, 4, 12])
                && groups.iter().all(|g| g.chars().all(|c| c.is_ascii_hexdigit()))
        }
        "ipv4" => s.parse::<std::net::Ipv4Addr>().is_ok(),
        "ipv6" => s.parse::<std::net::Ipv6Addr>().is_ok(),
        "int32" => s.parse::<i32>().is_ok(),
        "int64" => s.parse::<i64>().is_ok(),
        "uri" | "url" => {
            let scheme_end = s.find(':');
            scheme_end.is_some_and(|i| {
                i > 0
                    && s[..i]
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
            }) && !s.contains(char::is_whitespace)
        }
        _ => return None,
    };
    Some(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oas::SchemaKind;
    use serde_json::json;

    fn lit(v: Value) -> Literal {
        Literal::Json(v)
    }

    #[test]
    fn type_violation() {
        let c = Constraint::Type {
            expected: SchemaKind::String,
        };
        assert!(violates(&c, false, &lit(json!(12345)), None));
        assert!(!violates(&c, false, &lit(json!("std")), None));
        assert!(violates(&c, false, &lit(json!(null)), None));
        assert!(!violates(&c, true, &lit(json!(null)), None));
        assert!(!violates(&c, false, &Literal::Absent, None));
    }

    #[test]
    fn range_violation() {
        let c = Constraint::Range {
            minimum: Some(1.0),
            maximum: Some(10.0),
            exclusive_minimum: false,
            exclusive_maximum: false,
        };
        for bad in [json!(11), json!(0), json!(-3), json!(10.5)] {
            assert!(violates(&c, false, &lit(bad.clone()), None), "{bad}");
        }
        for good in [json!(1), json!(10), json!(5)] {
            assert!(!violates(&c, false, &lit(good.clone()), None), "{good}");
        }
        assert!(!violates(&c, false, &lit(json!("11")), None));
    }

    #[test]
    fn required_needs_absent() {
        assert!(violates(&Constraint::Required, false, &Literal::Absent, None));
        assert!(!violates(&Constraint::Required, false, &lit(json!(null)), None));
    }

    #[test]
    fn formats() {
        let date = Constraint::Format { format: "date".into() };
        assert!(violates(&date, false, &lit(json!("2024-13-01")), None));
        assert!(violates(&date, false, &lit(json!("01/02/2024")), None));
        assert!(!violates(&date, false, &lit(json!("2024-02-29")), None));
        let custom = Constraint::Format { format: "room-code".into() };
        let happy = lit(json!("R1"));
        assert!(!violates(&custom, false, &lit(json!("R1")), Some(&happy)));
        assert!(violates(&custom, false, &lit(json!("??")), Some(&happy)));
    }

    #[test]
    fn enum_length_pattern() {
        let e = Constraint::Enum {
            values: vec![json!("a"), json!("b")],
        };
        assert!(violates(&e, false, &lit(json!("c")), None));
        assert!(!violates(&e, false, &lit(json!("a")), None));
        let l = Constraint::Length { min: Some(1), max: Some(3) };
        assert!(violates(&l, false, &lit(json!("")), None));
        assert!(violates(&l, false, &lit(json!("abcd")), None));
        assert!(!violates(&l, false, &lit(json!("ab")), None));
        let p = Constraint::Pattern {
            pattern: "^[A-Z]{2}$".into(),
        };
        assert!(violates(&p, false, &lit(json!("abc")), None));
        assert!(!violates(&p, false, &lit(json!("AB")), None));
    }
}
