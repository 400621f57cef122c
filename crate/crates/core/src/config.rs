//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! strategy = proposed
//! cell_size = 64
//! adam.alpha = 0.001
//! clip = none
//! ```
//!
//! Keys are the field names of the target struct, with `.` reaching into
//! nested structs. Unknown keys are errors. `none` clears an optional field.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One `key = value` assignment with its 1-based line number (0 for
/// assignments that did not come from a file).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Assignment {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            value: value.into(),
            line: 0,
        }
    }

    /// Parses `key=value` as given on a command line.
    pub fn parse(s: &str) -> Result<Self> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got {s:?}")))?;
        Ok(Self::new(k.trim(), v.trim()))
    }
}

pub fn parse_kv(text: &str, path: &Path) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, k + 1, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::format(path, k + 1, "empty key"));
        }
        out.push(Assignment {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: k + 1,
        });
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<Assignment>> {
    parse_kv(&fs::read_to_string(path)?, path)
}

fn scalar_value(raw: &str) -> Value {
    match raw {
        "none" | "null" => Value::Null,
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => {
            if let Ok(i) = raw.parse::<u64>() {
                Value::from(i)
            } else if let Ok(i) = raw.parse::<i64>() {
                Value::from(i)
            } else if let Ok(f) = raw.parse::<f64>() {
                Value::from(f)
            } else {
                Value::String(raw.to_string())
            }
        }
    }
}

fn locate<'a>(root: &'a mut Map<String, Value>, key: &str) -> Option<&'a mut Value> {
    let mut parts = key.split('.');
    let mut cur = root.get_mut(parts.next()?)?;
    for p in parts {
        cur = cur.as_object_mut()?.get_mut(p)?;
    }
    Some(cur)
}

/// Applies assignments on top of `base`, in order.
pub fn apply<T: Serialize + DeserializeOwned>(base: &T, assignments: &[Assignment]) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    let root = value
        .as_object_mut()
        .ok_or_else(|| Error::InvalidArgument("configuration target is not a struct".into()))?;
    for a in assignments {
        let slot = locate(root, &a.key).ok_or_else(|| {
            let at = if a.line > 0 { format!(" (line {})", a.line) } else { String::new() };
            Error::InvalidArgument(format!("unknown configuration key {:?}{at}", a.key))
        })?;
        let mut v = scalar_value(&a.value);
        // Integer-looking input for a float field and plain words for string fields
        // both deserialize correctly; only string fields that look numeric need help.
        if slot.is_string() && !v.is_string() && !v.is_null() {
            v = Value::String(a.value.clone());
        }
        *slot = v;
    }
    serde_json::from_value(value).map_err(|e| Error::InvalidArgument(format!("invalid configuration: {e}")))
}

/// Renders `value` as a configuration file that [`apply`] reads back.
pub fn render<T: Serialize>(value: &T) -> Result<String> {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            Value::Null => out.push_str(&format!("{prefix} = none\n")),
            Value::String(s) => out.push_str(&format!("{prefix} = {s}\n")),
            other => out.push_str(&format!("{prefix} = {other}\n")),
        }
    }
    let mut out = String::new();
    walk("", &serde_json::to_value(value)?, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthSpec;
    use crate::train::{Strategy, TrainConfig};

    #[test]
    fn overrides_and_nested_keys() {
        let text = "# run\nstrategy = finetune\ncell_size = 32\nadam.alpha = 0.01\ntarget_max_epochs = 4\nclip = 5\n";
        let a = parse_kv(text, Path::new("x.cfg")).unwrap();
        let c: TrainConfig = apply(&TrainConfig::default(), &a).unwrap();
        assert_eq!(c.strategy, Strategy::FineTune);
        assert_eq!(c.cell_size, 32);
        assert_eq!(c.adam.alpha, 0.01);
        assert_eq!(c.target_max_epochs, Some(4));
        assert_eq!(c.clip, Some(5.0));
        let back: TrainConfig = apply(&c, &[Assignment::new("clip", "none")]).unwrap();
        assert_eq!(back.clip, None);
    }

    #[test]
    fn unknown_key_and_bad_value() {
        assert!(apply(&TrainConfig::default(), &[Assignment::new("cell", "3")]).is_err());
        assert!(apply(&TrainConfig::default(), &[Assignment::new("cell_size", "big")]).is_err());
        assert!(matches!(
            parse_kv("a = 1\nbroken\n", Path::new("c")),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn render_round_trips() {
        let spec = SynthSpec {
            seed: 7,
            ..SynthSpec::default()
        };
        let text = render(&spec).unwrap();
        let back: SynthSpec = apply(&SynthSpec::default(), &parse_kv(&text, Path::new("s")).unwrap()).unwrap();
        assert_eq!(back, spec);
        let cfg = TrainConfig::default();
        let back: TrainConfig =
            apply(&TrainConfig::default(), &parse_kv(&render(&cfg).unwrap(), Path::new("t")).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
