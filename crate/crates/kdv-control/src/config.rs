//! Scenario files: flat `key = value` lines, `#` comments, optional
//! `[section]` headers that prefix the keys below them (`[mesh]` + `n = 64`
//! is the same as `mesh.n = 64`).

use crate::error::{KdvError, Result};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, Entry>,
}

pub fn parse(text: &str) -> Result<RawConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| KdvError::Config { line, msg: format!("malformed section header '{body}'") })?
                .trim();
            if !valid_key(name) {
                return Err(KdvError::Config { line, msg: format!("bad section name '{name}'") });
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| KdvError::Config { line, msg: format!("expected 'key = value', got '{body}'") })?;
        let k = k.trim();
        if !valid_key(k) {
            return Err(KdvError::Config { line, msg: format!("bad key '{k}'") });
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        let value = unquote(v.trim()).to_string();
        if let Some(prev) = entries.get(&key) {
            return Err(KdvError::Config { line, msg: format!("duplicate key '{key}' (first set on line {})", prev.line) });
        }
        entries.insert(key, Entry { value, line });
    }
    Ok(RawConfig { entries })
}

pub fn load(path: &Path) -> Result<RawConfig> {
    parse(&std::fs::read_to_string(path)?)
}

fn strip_comment(s: &str) -> &str {
    let mut quoted = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &s[..i],
            _ => {}
        }
    }
    s
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|t| t.strip_suffix('"')).unwrap_or(s)
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
}

impl RawConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    /// Overrides `key`; the entry gets line 0 since it no longer comes from
    /// the file.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), Entry { value: value.to_string(), line: 0 });
    }

    /// Rejects keys outside `allowed` (by line) and then lists every missing
    /// key of `required`.
    pub fn check(&self, allowed: &[&str], required: &[&str]) -> Result<()> {
        let mut unknown: Vec<(&String, &Entry)> =
            self.entries.iter().filter(|(k, _)| !allowed.contains(&k.as_str())).collect();
        unknown.sort_by_key(|(_, e)| e.line);
        if let Some((k, e)) = unknown.first() {
            return Err(KdvError::Config { line: e.line, msg: format!("unknown key '{k}'") });
        }
        let missing: Vec<String> = required.iter().filter(|k| !self.entries.contains_key(**k)).map(|k| k.to_string()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(KdvError::MissingKeys(missing))
        }
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|_| {
                let msg = format!("'{key}' must be {what}, got '{}'", e.value);
                // line 0 marks a value set outside the file, e.g. by a scan
                if e.line == 0 {
                    KdvError::Invalid(msg)
                } else {
                    KdvError::Config { line: e.line, msg }
                }
            }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.typed::<f64>(key, "a number")?.unwrap_or(default))
    }

    pub fn f64_req(&self, key: &str) -> Result<f64> {
        self.typed::<f64>(key, "a number")?.ok_or_else(|| KdvError::MissingKeys(vec![key.into()]))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.typed::<usize>(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn usize_req(&self, key: &str) -> Result<usize> {
        self.typed::<usize>(key, "a nonnegative integer")?.ok_or_else(|| KdvError::MissingKeys(vec![key.into()]))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.typed::<u64>(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.typed::<bool>(key, "true or false")?.unwrap_or(default))
    }

    /// Normalized `key = value` text, sorted by key.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, e)| format!("{k} = {}\n", e.value)).collect()
    }
}

/// Values for a scan: a comma list, or `a:b:step` (inclusive of `b` up to
/// rounding).  An empty string yields no values.
pub fn parse_values(spec: &str) -> Result<Vec<String>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| KdvError::Invalid(format!("bad range bound '{s}' in '{spec}'")))
        };
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(KdvError::Invalid(format!("range '{spec}' needs a <= b and step > 0")));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|k| format!("{}", a + k as f64 * step)).map(|s| tidy(&s)).collect());
    }
    if parts.len() != 1 {
        return Err(KdvError::Invalid(format!("values must be a list or a:b:step, got '{spec}'")));
    }
    Ok(spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
}

/// Rounds away representation noise such as `5.8999999999999995`.
fn tidy(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) => {
            let r: f64 = format!("{v:.12}").parse().unwrap_or(v);
            format!("{r}")
        }
        Err(_) => s.to_string(),
    }
}
