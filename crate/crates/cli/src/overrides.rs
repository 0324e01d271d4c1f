//! `key=value` edits applied to the parsed scenario tree before it is
//! validated, so misspelled keys are caught by the schema.

use toml::Value;

use crate::error::{CliError, CliResult};

/// Parses `raw` as a TOML value, falling back to a bare string.
pub fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Splits `key=value`.
pub fn parse_assignment(text: &str) -> CliResult<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{text}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("override '{text}' has an empty key")));
    }
    Ok((key.to_string(), parse_value(raw.trim())))
}

/// Sets the value at a dotted path. Missing tables are created; numeric
/// segments index into arrays.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> CliResult<()> {
    let segments: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| Value::Table(toml::Table::new()))
            }
            Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{key}: '{seg}' is not an array index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Usage(format!("{key}: index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "{key}: '{}' is not a table",
                    segments[..i].join(".")
                )))
            }
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_parse_as_toml_or_string() {
        assert_eq!(parse_value("2.5"), Value::Float(2.5));
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("[1, 2]"), Value::Array(vec![Value::Integer(1), Value::Integer(2)]));
        assert_eq!(parse_value("gauss-legendre"), Value::String("gauss-legendre".into()));
    }

    #[test]
    fn nested_assignment() {
        let mut root: Value = toml::from_str("[a]\nb = 1\nc = [1, 2]").unwrap();
        set_path(&mut root, "a.b", Value::Integer(5)).unwrap();
        set_path(&mut root, "a.c.1", Value::Integer(7)).unwrap();
        set_path(&mut root, "x.y", Value::Boolean(true)).unwrap();
        assert_eq!(root["a"]["b"].as_integer(), Some(5));
        assert_eq!(root["a"]["c"][1].as_integer(), Some(7));
        assert_eq!(root["x"]["y"].as_bool(), Some(true));
        assert!(set_path(&mut root, "a.b.z", Value::Integer(1)).is_err());
        assert!(parse_assignment("novalue").is_err());
    }
}
