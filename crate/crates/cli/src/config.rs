//! Config resolution: a TOML (or JSON) table, then flag overrides, then a
//! typed struct that rejects unknown keys.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

/// Key-value overrides collected from command-line flags.
#[derive(Debug, Default)]
pub struct Overrides(pub Vec<(String, toml::Value)>);

impl Overrides {
    pub fn put<T: Serialize>(&mut self, key: &str, value: Option<T>) -> Result<(), CliError> {
        if let Some(v) = value {
            let v = toml::Value::try_from(v).map_err(|e| CliError::Config(format!("--{key}: {e}")))?;
            self.0.push((key.to_string(), v));
        }
        Ok(())
    }
}

/// Read a config file; `.json` files are accepted so that a persisted
/// `config.json` can be replayed.
pub fn load_table(path: Option<&Path>) -> Result<toml::Table, CliError> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let mut json: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(&e))?;
        strip_nulls(&mut json);
        match toml::Value::try_from(json).map_err(|e| bad(&e))? {
            toml::Value::Table(t) => Ok(t),
            _ => Err(bad(&"top level must be an object")),
        }
    } else {
        toml::from_str(&text).map_err(|e| bad(&e))
    }
}

fn strip_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|_, x| !x.is_null());
            map.values_mut().for_each(strip_nulls);
        }
        serde_json::Value::Array(xs) => xs.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

/// Parse `key.path=value`; the value is read as a TOML literal and falls
/// back to a bare string.
pub fn parse_assignment(s: &str) -> Result<(String, toml::Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("--set has an empty key: {s:?}")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    Ok((key.to_string(), value))
}

/// Set a dotted key, creating intermediate tables.
pub fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("cannot set {key}: {p} is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn typed<T: DeserializeOwned>(table: toml::Table) -> Result<T, CliError> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignments_parse_as_toml_literals() {
        let (k, v) = parse_assignment("chain.n_iter=200").unwrap();
        assert_eq!(k, "chain.n_iter");
        assert_eq!(v, toml::Value::Integer(200));
        let (_, v) = parse_assignment("setting=fixed_design").unwrap();
        assert_eq!(v, toml::Value::String("fixed_design".into()));
        let (_, v) = parse_assignment("n_grid=[10, 20]").unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert!(parse_assignment("no_equals").is_err());
    }

    #[test]
    fn dotted_keys_create_tables() {
        let mut t = toml::Table::new();
        set_path(&mut t, "chain.anchors.kind", toml::Value::String("qmc".into())).unwrap();
        assert_eq!(t["chain"]["anchors"]["kind"].as_str(), Some("qmc"));
        set_path(&mut t, "x", toml::Value::Integer(1)).unwrap();
        assert!(set_path(&mut t, "x.y", toml::Value::Integer(1)).is_err());
    }

    #[test]
    fn json_nulls_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"a": null, "b": {"c": 1.5, "d": null}}"#).unwrap();
        let t = load_table(Some(&p)).unwrap();
        assert!(!t.contains_key("a"));
        assert_eq!(t["b"]["c"].as_float(), Some(1.5));
    }
}
