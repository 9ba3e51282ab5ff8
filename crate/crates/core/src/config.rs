//! Four-table configuration documents (`env`, `agent`, `optim`, `train`),
//! dotted-path command-line overrides and `config.<agent>.<env>` reference
//! resolution.
//!
//! Documents are JSON objects with exactly the four tables; every table maps
//! keys to scalars (`bool`, integer, real, string or `null`). Integers and
//! reals are kept distinct so that overrides coerce predictably.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use indexmap::IndexMap;
use thiserror::Error;

pub const TABLES: [&str; 4] = ["env", "agent", "optim", "train"];

/// Keys every `train` table must carry.
pub const TRAIN_KEYS: [&str; 8] = [
    "training",
    "load_path",
    "run_step",
    "print_period",
    "save_period",
    "eval_iteration",
    "update_period",
    "num_workers",
];

/// The built-in default: DQN on CartPole.
pub const DEFAULT_CONFIG: &str = include_str!("../../../config/dqn/cartpole.json");

pub const CONFIG_EXTENSION: &str = "json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    File { path: String, reason: String },
    #[error("cannot parse {source_name}: {reason}")]
    Parse { source_name: String, reason: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown {registry} '{name}'; available: {available}")]
    Registry {
        registry: String,
        name: String,
        available: String,
    },
    #[error("type error: {key} expects {expected}, got '{raw}'")]
    Type {
        key: String,
        expected: String,
        raw: String,
    },
    #[error("bad override '{0}': expected <table>.<key> with table one of env, agent, optim, train")]
    KeyPath(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Null => "null",
            Self::Bool(_) => "bool",
            Self::Int(_) => "int",
            Self::Real(_) => "real",
            Self::Str(_) => "string",
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Null => serde_json::Value::Null,
            Self::Bool(b) => (*b).into(),
            Self::Int(i) => (*i).into(),
            Self::Real(r) => serde_json::Number::from_f64(*r)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Self::Str(s) => s.clone().into(),
        }
    }

    fn from_json(v: &serde_json::Value) -> Option<Self> {
        Some(match v {
            serde_json::Value::Null => Self::Null,
            serde_json::Value::Bool(b) => Self::Bool(*b),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Self::Int(i)
                } else {
                    Self::Real(n.as_f64()?)
                }
            }
            serde_json::Value::String(s) => Self::Str(s.clone()),
            _ => return None,
        })
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Null => write!(f, "null"),
            Self::Bool(b) => write!(f, "{b}"),
            Self::Int(i) => write!(f, "{i}"),
            Self::Real(r) => write!(f, "{r:?}"),
            Self::Str(s) => write!(f, "{s}"),
        }
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw {
        "true" | "True" | "TRUE" => Some(true),
        "false" | "False" | "FALSE" => Some(false),
        _ => None,
    }
}

/// An ordered key → scalar map with typed accessors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    name: String,
    entries: IndexMap<String, Value>,
}

impl Table {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            entries: IndexMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: &str, value: Value) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn type_err(&self, key: &str, expected: &str, v: &Value) -> ConfigError {
        ConfigError::Type {
            key: format!("{}.{key}", self.name),
            expected: expected.to_string(),
            raw: v.to_string(),
        }
    }

    /// Real-valued key; integers widen.
    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(Value::Real(r)) => Ok(*r),
            Some(Value::Int(i)) => Ok(*i as f64),
            Some(v) => Err(self.type_err(key, "real", v)),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(Value::Int(i)) if *i >= 0 => Ok(*i as usize),
            Some(v) => Err(self.type_err(key, "non-negative int", v)),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.usize_or(key, default as usize).map(|v| v as u64)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(v) => Err(self.type_err(key, "bool", v)),
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(default.to_string()),
            Some(Value::Str(s)) => Ok(s.clone()),
            Some(v) => Err(self.type_err(key, "string", v)),
        }
    }

    /// String key that may be `null`.
    pub fn opt_str(&self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Str(s)) if s.is_empty() => Ok(None),
            Some(Value::Str(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.type_err(key, "string or null", v)),
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None | Some(Value::Null) => Ok(None),
            _ => self.f64_or(key, 0.0).map(Some),
        }
    }

    /// Fills keys missing here from `defaults`, keeping existing values.
    pub fn with_defaults(&self, defaults: &[(&str, Value)]) -> Table {
        let mut out = self.clone();
        for (k, v) in defaults {
            if !out.contains(k) {
                out.insert(k, v.clone());
            }
        }
        out
    }

    /// Sets `key` from a raw command-line string.
    ///
    /// Existing keys keep their type; new keys are inferred as int, then
    /// real, then bool, then string.
    pub fn set_raw(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let expect = |expected: &str| ConfigError::Type {
            key: format!("{}.{key}", self.name),
            expected: expected.to_string(),
            raw: raw.to_string(),
        };
        let value = match self.get(key) {
            Some(Value::Int(_)) => Value::Int(raw.parse().map_err(|_| expect("int"))?),
            Some(Value::Real(_)) => Value::Real(raw.parse().map_err(|_| expect("real"))?),
            Some(Value::Bool(_)) => Value::Bool(parse_bool(raw).ok_or_else(|| expect("bool"))?),
            Some(Value::Str(_)) => Value::Str(raw.to_string()),
            None | Some(Value::Null) => infer_value(raw),
        };
        if matches!(value, Value::Real(r) if !r.is_finite()) {
            return Err(expect("finite real"));
        }
        self.insert(key, value);
        Ok(())
    }
}

/// int → real → bool → string.
pub fn infer_value(raw: &str) -> Value {
    if let Ok(i) = raw.parse::<i64>() {
        Value::Int(i)
    } else if let Ok(r) = raw.parse::<f64>() {
        Value::Real(r)
    } else if let Some(b) = parse_bool(raw) {
        Value::Bool(b)
    } else {
        Value::Str(raw.to_string())
    }
}

/// `--<table>.<key> <value>` from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverrideSpec {
    pub table: String,
    pub key: String,
    pub raw_value: String,
}

impl OverrideSpec {
    pub fn parse(key_path: &str, raw_value: &str) -> Result<Self, ConfigError> {
        let mut parts = key_path.split('.');
        let (Some(table), Some(key), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ConfigError::KeyPath(key_path.to_string()));
        };
        if key.is_empty() || !TABLES.contains(&table) {
            return Err(ConfigError::KeyPath(key_path.to_string()));
        }
        Ok(Self {
            table: table.to_string(),
            key: key.to_string(),
            raw_value: raw_value.to_string(),
        })
    }

    pub fn key_path(&self) -> String {
        format!("{}.{}", self.table, self.key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigTree {
    pub env: Table,
    pub agent: Table,
    pub optim: Table,
    pub train: Table,
}

impl ConfigTree {
    /// Parses a document without checking registry names.
    pub fn parse_str(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            source_name: source_name.to_string(),
            reason: e.to_string(),
        })?;
        let obj = doc
            .as_object()
            .ok_or_else(|| ConfigError::Schema("document must be an object of four tables".into()))?;
        if let Some(extra) = obj.keys().find(|k| !TABLES.contains(&k.as_str())) {
            return Err(ConfigError::Schema(format!(
                "unexpected top-level table '{extra}'"
            )));
        }
        let table = |name: &str| -> Result<Table, ConfigError> {
            let raw = obj
                .get(name)
                .ok_or_else(|| ConfigError::Schema(format!("missing table '{name}'")))?;
            let map = raw
                .as_object()
                .ok_or_else(|| ConfigError::Schema(format!("'{name}' must be a table")))?;
            let mut t = Table::new(name);
            for (k, v) in map {
                let value = Value::from_json(v).ok_or_else(|| {
                    ConfigError::Schema(format!("{name}.{k} must be a scalar"))
                })?;
                t.insert(k, value);
            }
            Ok(t)
        };
        let tree = Self {
            env: table("env")?,
            agent: table("agent")?,
            optim: table("optim")?,
            train: table("train")?,
        };
        for key in TRAIN_KEYS {
            if !tree.train.contains(key) {
                return Err(ConfigError::Schema(format!("train table is missing '{key}'")));
            }
        }
        for t in [&tree.env, &tree.agent, &tree.optim] {
            if !matches!(t.get("name"), Some(Value::Str(_))) {
                return Err(ConfigError::Schema(format!("{}.name must be a string", t.name())));
            }
        }
        Ok(tree)
    }

    /// Parses and checks that agent, env and optimizer names are registered.
    pub fn from_str_checked(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let tree = Self::parse_str(text, source_name)?;
        tree.check_registries()?;
        Ok(tree)
    }

    pub fn default_config() -> Self {
        Self::from_str_checked(DEFAULT_CONFIG, "built-in default").expect("default config is valid")
    }

    pub fn check_registries(&self) -> Result<(), ConfigError> {
        let check = |registry: &str, name: String, names: &[&str]| {
            if names.contains(&name.as_str()) {
                Ok(())
            } else {
                Err(ConfigError::Registry {
                    registry: registry.to_string(),
                    name,
                    available: names.join(", "),
                })
            }
        };
        check("agent", self.agent_name(), &crate::agents::agent_names())?;
        check("env", self.env_name(), &crate::envs::env_names())?;
        check("optimizer", self.optim.str_or("name", "")?, &crate::nn::OptimizerKind::NAMES)?;
        Ok(())
    }

    pub fn agent_name(&self) -> String {
        self.agent.str_or("name", "").unwrap_or_default()
    }

    pub fn env_name(&self) -> String {
        self.env.str_or("name", "").unwrap_or_default()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        match name {
            "env" => Some(&self.env),
            "agent" => Some(&self.agent),
            "optim" => Some(&self.optim),
            "train" => Some(&self.train),
            _ => None,
        }
    }

    fn table_mut(&mut self, name: &str) -> Option<&mut Table> {
        match name {
            "env" => Some(&mut self.env),
            "agent" => Some(&mut self.agent),
            "optim" => Some(&mut self.optim),
            "train" => Some(&mut self.train),
            _ => None,
        }
    }

    pub fn apply_override(&self, o: &OverrideSpec) -> Result<ConfigTree, ConfigError> {
        let mut out = self.clone();
        out.apply_override_in_place(o)?;
        Ok(out)
    }

    pub fn apply_override_in_place(&mut self, o: &OverrideSpec) -> Result<(), ConfigError> {
        let table = self
            .table_mut(&o.table)
            .ok_or_else(|| ConfigError::KeyPath(o.key_path()))?;
        table.set_raw(&o.key, &o.raw_value)
    }

    /// Pretty JSON with tables and keys in their original order.
    pub fn to_json_string(&self) -> String {
        let mut doc = serde_json::Map::new();
        for t in [&self.env, &self.agent, &self.optim, &self.train] {
            let map: serde_json::Map<String, serde_json::Value> =
                t.iter().map(|(k, v)| (k.to_string(), v.to_json())).collect();
            doc.insert(t.name().to_string(), serde_json::Value::Object(map));
        }
        let mut s = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
            .expect("scalars always serialize");
        s.push('\n');
        s
    }
}

/// Reads and validates a document from disk.
pub fn load_config(path: &Path) -> Result<ConfigTree, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    ConfigTree::from_str_checked(&text, &path.display().to_string())
}

/// Maps `config.<agent>.<env>` to `<root>/config/<agent>/<env>.json`, trying
/// each root in turn. An existing `.json` path is used as is.
pub fn resolve_config_ref(reference: &str, roots: &[PathBuf]) -> Result<PathBuf, ConfigError> {
    let direct = PathBuf::from(reference);
    if direct.extension().is_some_and(|e| e == CONFIG_EXTENSION) && direct.is_file() {
        return Ok(direct);
    }
    let parts: Vec<&str> = reference.split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::File {
            path: reference.to_string(),
            reason: "config references look like config.<agent>.<env>".into(),
        });
    }
    let mut searched = Vec::new();
    for root in roots {
        let mut p = root.clone();
        for part in &parts[..parts.len() - 1] {
            p.push(part);
        }
        p.push(format!("{}.{CONFIG_EXTENSION}", parts[parts.len() - 1]));
        if p.is_file() {
            return Ok(p);
        }
        searched.push(p.display().to_string());
    }
    Err(ConfigError::File {
        path: reference.to_string(),
        reason: format!("no such config; searched {}", searched.join(", ")),
    })
}

/// Logs a warning for keys a component does not read, once per key.
pub fn warn_unknown_keys(table: &Table, known: &[&str]) {
    static SEEN: OnceLock<Mutex<HashSet<String>>> = OnceLock::new();
    let seen = SEEN.get_or_init(|| Mutex::new(HashSet::new()));
    for key in table.keys() {
        if key == "name" || known.contains(&key) {
            continue;
        }
        let full = format!("{}.{key}", table.name());
        if seen.lock().map(|mut s| s.insert(full.clone())).unwrap_or(false) {
            log::warn!("unused config key {full}; passing it through");
        }
    }
}
