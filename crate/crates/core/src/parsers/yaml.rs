//! Plugin-dispatched YAML configuration with `<name>` substitution and
//! `loop` expansion.
//!
//! A document is a sequence of single-key maps. `parameters` entries bind
//! scope variables, `loop` entries are unrolled, and every other key is
//! handed to the plugin registered under it.
//!
//! Loops run over the half-open range `[start, stop)`:
//!
//! ```yaml
//! - loop:
//!     loop_variable: [i, 0, <n>, 1]
//!     loop_body:
//!       - zip: {id: load_<ld_buses(<i>)>}
//! ```
//!
//! Inside strings `<name>` is replaced by a bound value and `<arr(<i>)>`
//! indexes an array (0-based) after the inner substitution. `<<` is a
//! literal `<`. A string consisting of exactly one substitution keeps the
//! type of the bound value.

use std::collections::{HashMap, HashSet};
use std::error::Error as StdError;
use std::path::{Path, PathBuf};

use serde_yaml::{Mapping, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum YamlError {
    #[error("YAML syntax: {0}")]
    Syntax(#[from] serde_yaml::Error),
    #[error("{0}: cannot read file: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("{path}: {msg}")]
    Malformed { path: String, msg: String },
    #[error("{path}: unknown keyword '{key}'")]
    UnknownKeyword { path: String, key: String },
    #[error("{path}: unbound variable '{name}'")]
    Unbound { path: String, name: String },
    #[error("{path}: loop bounds must be integers")]
    NonIntegerBound { path: String },
    #[error("{path}: loop step is zero")]
    ZeroStep { path: String },
    #[error("{path}.{key}: {source}")]
    Plugin { path: String, key: String, source: Box<dyn StdError + Send + Sync> },
}

fn malformed(path: &str, msg: impl Into<String>) -> YamlError {
    YamlError::Malformed { path: path.to_string(), msg: msg.into() }
}

/// Variable bindings visible to substitutions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct YamlScope {
    vars: HashMap<String, Value>,
    fixed: HashSet<String>,
}

impl YamlScope {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: Value) {
        self.vars.insert(name.into(), value);
    }

    /// Binds a value that `parameters` entries cannot override.
    pub fn bind_fixed(&mut self, name: impl Into<String>, value: Value) {
        let name = name.into();
        self.fixed.insert(name.clone());
        self.vars.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    fn lookup(&self, expr: &str, path: &str) -> Result<Value, YamlError> {
        let expr = expr.trim();
        let unbound = |name: &str| YamlError::Unbound { path: path.to_string(), name: name.to_string() };
        if let Some(open) = expr.find('(') {
            let name = expr[..open].trim();
            let inner = expr[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| malformed(path, format!("bad index expression '{expr}'")))?;
            let idx: usize = inner
                .trim()
                .parse()
                .map_err(|_| malformed(path, format!("index '{inner}' is not a non-negative integer")))?;
            let arr = self.vars.get(name).ok_or_else(|| unbound(name))?;
            let seq = arr.as_sequence().ok_or_else(|| malformed(path, format!("'{name}' is not an array")))?;
            return seq
                .get(idx)
                .cloned()
                .ok_or_else(|| malformed(path, format!("index {idx} out of range for '{name}'")));
        }
        self.vars.get(expr).cloned().ok_or_else(|| unbound(expr))
    }

    /// Applies substitutions to one string.
    pub fn substitute_str(&self, s: &str, path: &str) -> Result<Value, YamlError> {
        const ESC: char = '\u{1}';
        if !s.contains('<') {
            return Ok(Value::String(s.to_string()));
        }
        let mut text = s.replace("<<", &ESC.to_string());
        let mut whole: Option<Value> = None;
        // innermost first: a '<' whose matching '>' contains no further '<'
        loop {
            let Some(close) = text.find('>').filter(|&c| text[..c].contains('<')) else { break };
            let open = text[..close].rfind('<').expect("checked");
            let value = self.lookup(&text[open + 1..close], path)?;
            let rendered = render(&value);
            whole = (open == 0 && close == text.len() - 1).then_some(value);
            text.replace_range(open..=close, &rendered);
        }
        if text.contains('<') {
            return Err(malformed(path, format!("unbalanced '<' in '{s}'")));
        }
        match whole {
            Some(v) if !text.contains(ESC) => Ok(v),
            _ => Ok(Value::String(text.replace(ESC, "<"))),
        }
    }

    /// Applies substitutions to every string (keys included) in a value.
    pub fn substitute(&self, v: &Value, path: &str) -> Result<Value, YamlError> {
        Ok(match v {
            Value::String(s) => self.substitute_str(s, path)?,
            Value::Sequence(items) => Value::Sequence(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, x)| self.substitute(x, &format!("{path}[{i}]")))
                    .collect::<Result<_, _>>()?,
            ),
            Value::Mapping(m) => {
                let mut out = Mapping::new();
                for (k, x) in m {
                    let key = self.substitute(k, path)?;
                    let sub = format!("{path}.{}", render(&key));
                    out.insert(key, self.substitute(x, &sub)?);
                }
                Value::Mapping(out)
            }
            Value::Tagged(t) => self.substitute(&t.value, path)?,
            other => other.clone(),
        })
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Null => String::new(),
        other => serde_yaml::to_string(other).unwrap_or_default().trim().to_string(),
    }
}

fn integer(v: &Value, path: &str) -> Result<i64, YamlError> {
    match v {
        Value::Number(n) => n.as_i64().ok_or_else(|| YamlError::NonIntegerBound { path: path.to_string() }),
        Value::String(s) => s.trim().parse().map_err(|_| YamlError::NonIntegerBound { path: path.to_string() }),
        _ => Err(YamlError::NonIntegerBound { path: path.to_string() }),
    }
}

/// Splits a single-key map entry into (key, value).
pub fn entry_key<'a>(entry: &'a Value, path: &str) -> Result<(&'a str, &'a Value), YamlError> {
    let map = entry.as_mapping().ok_or_else(|| malformed(path, "entry must be a single-key map"))?;
    if map.len() != 1 {
        return Err(malformed(path, "entry must be a single-key map"));
    }
    let (k, v) = map.iter().next().expect("one entry");
    let key = k.as_str().ok_or_else(|| malformed(path, "entry key must be a string"))?;
    Ok((key, v))
}

/// Unrolls one loop node (`{loop_variable, loop_body}`) in `scope`.
pub fn loop_expand(node: &Value, scope: &YamlScope, path: &str) -> Result<Vec<Value>, YamlError> {
    let lv = node
        .get("loop_variable")
        .ok_or_else(|| malformed(path, "loop needs loop_variable"))?;
    let lv = scope.substitute(lv, &format!("{path}.loop_variable"))?;
    let spec = lv
        .as_sequence()
        .filter(|s| s.len() == 4)
        .ok_or_else(|| malformed(path, "loop_variable must be [name, start, stop, step]"))?;
    let name = spec[0].as_str().ok_or_else(|| malformed(path, "loop variable name must be a string"))?;
    let (start, stop, step) = (integer(&spec[1], path)?, integer(&spec[2], path)?, integer(&spec[3], path)?);
    if step == 0 {
        return Err(YamlError::ZeroStep { path: path.to_string() });
    }
    let body = node
        .get("loop_body")
        .and_then(Value::as_sequence)
        .ok_or_else(|| malformed(path, "loop needs a loop_body sequence"))?;
    let mut out = Vec::new();
    let mut i = start;
    while (step > 0 && i < stop) || (step < 0 && i > stop) {
        let mut inner = scope.clone();
        inner.bind(name, Value::from(i));
        out.extend(expand_entries(body, &mut inner, &format!("{path}[{name}={i}]"))?);
        i += step;
    }
    Ok(out)
}

/// Expands loops and parameters, substituting every other entry.
pub fn expand_entries(entries: &[Value], scope: &mut YamlScope, path: &str) -> Result<Vec<Value>, YamlError> {
    let mut out = Vec::new();
    for (n, entry) in entries.iter().enumerate() {
        let p = format!("{path}[{n}]");
        let (key, body) = entry_key(entry, &p)?;
        match key {
            "loop" => out.extend(loop_expand(body, scope, &format!("{p}.loop"))?),
            "parameters" => {
                let body = scope.substitute(body, &p)?;
                let map = body.as_mapping().ok_or_else(|| malformed(&p, "parameters must be a map"))?;
                for (k, v) in map {
                    let name = k.as_str().ok_or_else(|| malformed(&p, "parameter names must be strings"))?;
                    if !scope.fixed.contains(name) {
                        scope.bind(name, v.clone());
                    }
                }
            }
            _ => out.push(scope.substitute(entry, &p)?),
        }
    }
    Ok(out)
}

/// Parses a document and returns the fully expanded entry list.
pub fn expand_document(text: &str) -> Result<Vec<Value>, YamlError> {
    expand_document_with(text, YamlScope::new())
}

/// Like [`expand_document`] with caller-supplied bindings in scope.
pub fn expand_document_with(text: &str, mut scope: YamlScope) -> Result<Vec<Value>, YamlError> {
    let doc: Value = serde_yaml::from_str(text)?;
    let entries = match &doc {
        Value::Sequence(s) => s.as_slice(),
        Value::Null => &[],
        _ => return Err(malformed("$", "document must be a sequence")),
    };
    expand_entries(entries, &mut scope, "$")
}

/// Context handed to plugins.
#[derive(Debug, Clone, Default)]
pub struct ParseContext {
    /// Directory against which relative file names resolve.
    pub base_dir: PathBuf,
}

impl ParseContext {
    pub fn resolve(&self, file: &str) -> PathBuf {
        let p = Path::new(file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub type PluginResult = Result<(), Box<dyn StdError + Send + Sync>>;
type Plugin<T> = Box<dyn Fn(&Value, &mut T, &ParseContext) -> PluginResult>;

/// Keyword to plugin mapping for one kind of target.
pub struct ParserRegistry<T> {
    plugins: Vec<(String, Plugin<T>)>,
}

impl<T> Default for ParserRegistry<T> {
    fn default() -> Self {
        ParserRegistry { plugins: Vec::new() }
    }
}

impl<T> ParserRegistry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a plugin; a repeated keyword replaces the earlier plugin.
    pub fn register(&mut self, key: &str, plugin: impl Fn(&Value, &mut T, &ParseContext) -> PluginResult + 'static) {
        self.plugins.retain(|(k, _)| k != key);
        self.plugins.push((key.to_string(), Box::new(plugin)));
    }

    pub fn keywords(&self) -> Vec<&str> {
        self.plugins.iter().map(|(k, _)| k.as_str()).collect()
    }

    fn find(&self, key: &str) -> Option<&Plugin<T>> {
        self.plugins.iter().find(|(k, _)| k == key).map(|(_, p)| p)
    }

    /// Dispatches already-expanded entries in order.
    pub fn apply_entries(&self, entries: &[Value], target: &mut T, ctx: &ParseContext) -> Result<(), YamlError> {
        for (n, entry) in entries.iter().enumerate() {
            let path = format!("$[{n}]");
            let (key, body) = entry_key(entry, &path)?;
            let plugin = self
                .find(key)
                .ok_or_else(|| YamlError::UnknownKeyword { path: path.clone(), key: key.to_string() })?;
            plugin(body, target, ctx).map_err(|source| YamlError::Plugin { path, key: key.to_string(), source })?;
        }
        Ok(())
    }

    pub fn apply_str(&self, text: &str, target: &mut T, ctx: &ParseContext) -> Result<(), YamlError> {
        self.apply_str_with(text, YamlScope::new(), target, ctx)
    }

    pub fn apply_str_with(&self, text: &str, scope: YamlScope, target: &mut T, ctx: &ParseContext) -> Result<(), YamlError> {
        let entries = expand_document_with(text, scope)?;
        self.apply_entries(&entries, target, ctx)
    }

    pub fn apply_file(&self, path: &Path, target: &mut T) -> Result<(), YamlError> {
        self.apply_file_with(path, YamlScope::new(), target)
    }

    pub fn apply_file_with(&self, path: &Path, scope: YamlScope, target: &mut T) -> Result<(), YamlError> {
        let text = std::fs::read_to_string(path).map_err(|e| YamlError::Io(path.to_path_buf(), e))?;
        let ctx = ParseContext { base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default() };
        self.apply_str_with(&text, scope, target, &ctx)
    }
}
