//! Dynamically typed attribute values exchanged between requests, policy
//! rules and stub functions.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum nesting depth of attribute maps.
pub const MAX_VALUE_DEPTH: usize = 16;

/// An attribute value: boolean, number (f64 semantics, integers exact up to
/// 2^53), string, or a string-keyed map for nested access like
/// `r.sub.project_id`.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Bool(bool),
    Num(f64),
    Str(String),
    Map(BTreeMap<String, Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn map(entries: impl IntoIterator<Item = (String, Value)>) -> Self {
        Value::Map(entries.into_iter().collect())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "boolean",
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Map(_) => "map",
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Nesting depth: scalars are 1, a map is 1 + the deepest entry.
    pub fn depth(&self) -> usize {
        match self {
            Value::Map(m) => 1 + m.values().map(Value::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    /// Rejects values nested deeper than [`MAX_VALUE_DEPTH`]. Called at the
    /// boundaries where values enter the engine (JSON, Python, requests).
    pub fn check_depth(&self) -> Result<(), ValueError> {
        let depth = self.depth();
        if depth > MAX_VALUE_DEPTH {
            Err(ValueError::TooDeep { depth })
        } else {
            Ok(())
        }
    }

    /// Converts from a JSON value. Arrays and null have no PML counterpart
    /// and are rejected.
    pub fn from_json(json: &serde_json::Value) -> Result<Self, ValueError> {
        let value = Self::from_json_inner(json)?;
        value.check_depth()?;
        Ok(value)
    }

    fn from_json_inner(json: &serde_json::Value) -> Result<Self, ValueError> {
        match json {
            serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Value::Num)
                .ok_or_else(|| ValueError::Unsupported("non-finite number".into())),
            serde_json::Value::String(s) => Ok(Value::Str(s.clone())),
            serde_json::Value::Object(entries) => {
                let mut map = BTreeMap::new();
                for (k, v) in entries {
                    map.insert(k.clone(), Self::from_json_inner(v)?);
                }
                Ok(Value::Map(map))
            }
            serde_json::Value::Null => Err(ValueError::Unsupported("null".into())),
            serde_json::Value::Array(_) => Err(ValueError::Unsupported("array".into())),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Num(n) => serde_json::Number::from_f64(*n)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Map(m) => serde_json::Value::Object(
                m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            ),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Num(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Num(n)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Num(n as f64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("value nested {depth} levels deep exceeds the limit of {MAX_VALUE_DEPTH}")]
    TooDeep { depth: usize },
    #[error("unsupported value type: {0}")]
    Unsupported(String),
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Num(n) => serializer.serialize_f64(*n),
            Value::Str(s) => serializer.serialize_str(s),
            Value::Map(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ValueVisitor;

        impl<'de> Visitor<'de> for ValueVisitor {
            type Value = Value;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a boolean, number, string, or map of values")
            }

            fn visit_bool<E>(self, b: bool) -> Result<Value, E> {
                Ok(Value::Bool(b))
            }

            fn visit_i64<E>(self, n: i64) -> Result<Value, E> {
                Ok(Value::Num(n as f64))
            }

            fn visit_u64<E>(self, n: u64) -> Result<Value, E> {
                Ok(Value::Num(n as f64))
            }

            fn visit_f64<E>(self, n: f64) -> Result<Value, E> {
                Ok(Value::Num(n))
            }

            fn visit_str<E: de::Error>(self, s: &str) -> Result<Value, E> {
                Ok(Value::Str(s.to_owned()))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Value, A::Error> {
                let mut map = BTreeMap::new();
                while let Some((key, value)) = access.next_entry::<String, Value>()? {
                    map.insert(key, value);
                }
                Ok(Value::Map(map))
            }
        }

        deserializer.deserialize_any(ValueVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_for_nested_map() {
        let v = Value::map([
            ("role".to_string(), Value::str("admin")),
            ("is_admin".to_string(), Value::Bool(true)),
            ("quota".to_string(), Value::Num(3.0)),
        ]);
        let json = v.to_json();
        assert_eq!(Value::from_json(&json).unwrap(), v);
    }

    #[test]
    fn arrays_and_null_are_rejected() {
        assert!(Value::from_json(&serde_json::json!([1, 2])).is_err());
        assert!(Value::from_json(&serde_json::json!(null)).is_err());
    }

    #[test]
    fn depth_limit_enforced() {
        let mut v = Value::str("leaf");
        for _ in 0..MAX_VALUE_DEPTH {
            v = Value::map([("k".to_string(), v)]);
        }
        assert_eq!(v.depth(), MAX_VALUE_DEPTH + 1);
        assert!(v.check_depth().is_err());
    }

    #[test]
    fn serde_deserialize_matches_from_json() {
        let text = r#"{"sub":{"project_id":"p1"},"n":2,"ok":true}"#;
        let direct: Value = serde_json::from_str(text).unwrap();
        let via_json = Value::from_json(&serde_json::from_str(text).unwrap()).unwrap();
        assert_eq!(direct, via_json);
    }
}
