//! Config-file handling: a flat `key = value` grammar (JSON object accepted
//! as an alternative), typed parameter resolution with defaults, rejection of
//! unknown keys, and the literal grammars for sequences and motifs.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use measure_infinity::rgg::Motif;
use measure_infinity::sequences::{TailDescriptor, TailedSequence};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Raw key-value pairs from a config file plus command-line overrides.
#[derive(Debug, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, Entry>,
}

impl ConfigMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses either format: a JSON object if the first non-space byte is
    /// `{`, otherwise flat `key = value` lines with `#` comments.
    pub fn from_text(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_flat(text)
        }
    }

    fn from_flat(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "config parse error at line {}, column 1: expected 'key = value', got '{line}'",
                    i + 1
                );
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                bail!("config parse error at line {}, column 1: empty key", i + 1);
            }
            if entries
                .insert(
                    key.clone(),
                    Entry {
                        value: value.trim().to_string(),
                        line: Some(i + 1),
                    },
                )
                .is_some()
            {
                bail!("config parse error at line {}: duplicate key '{key}'", i + 1);
            }
        }
        Ok(ConfigMap { entries })
    }

    fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            anyhow!(
                "config JSON parse error at line {}, column {}: {e}",
                e.line(),
                e.column()
            )
        })?;
        let serde_json::Value::Object(object) = value else {
            bail!("config JSON must be an object of key/value pairs");
        };
        let mut entries = BTreeMap::new();
        for (key, v) in object {
            let rendered = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Array(items) => {
                    let mut parts = Vec::with_capacity(items.len());
                    for item in items {
                        match item {
                            serde_json::Value::Number(n) => parts.push(n.to_string()),
                            serde_json::Value::String(s) => parts.push(s),
                            other => bail!(
                                "config key '{key}': array elements must be numbers or strings, \
                                 got {other}"
                            ),
                        }
                    }
                    parts.join(",")
                }
                other => bail!("config key '{key}': unsupported value {other}"),
            };
            entries.insert(
                key,
                Entry {
                    value: rendered,
                    line: None,
                },
            );
        }
        Ok(ConfigMap { entries })
    }

    fn set_override(&mut self, key: &str, value: String) {
        self.entries.insert(
            key.to_string(),
            Entry { value, line: None },
        );
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }
}

/// Typed view over a [`ConfigMap`]: every parameter a subcommand reads gets a
/// default, the raw resolved strings are collected for the artifact header,
/// and any key left unread is an error.
pub struct Params {
    map: ConfigMap,
    resolved: Vec<(String, String)>,
}

impl Params {
    pub fn new(map: ConfigMap) -> Self {
        Params {
            map,
            resolved: Vec::new(),
        }
    }

    /// Command-line flags beat config-file values.
    pub fn set_override(&mut self, key: &str, value: String) {
        self.map.set_override(key, value);
    }

    fn grab(&mut self, key: &str, default: &str) -> (String, Option<usize>) {
        let (value, line) = match self.map.take(key) {
            Some(e) => (e.value, e.line),
            None => (default.to_string(), None),
        };
        self.resolved.push((key.to_string(), value.clone()));
        (value, line)
    }

    fn located(key: &str, line: Option<usize>) -> String {
        match line {
            Some(l) => format!("config key '{key}' (line {l})"),
            None => format!("config key '{key}'"),
        }
    }

    pub fn string(&mut self, key: &str, default: &str) -> String {
        self.grab(key, default).0
    }

    pub fn f64(&mut self, key: &str, default: &str) -> Result<f64> {
        let (v, line) = self.grab(key, default);
        v.parse()
            .map_err(|_| anyhow!("{}: '{v}' is not a real number", Self::located(key, line)))
    }

    pub fn u64(&mut self, key: &str, default: &str) -> Result<u64> {
        let (v, line) = self.grab(key, default);
        v.parse()
            .map_err(|_| anyhow!("{}: '{v}' is not a non-negative integer", Self::located(key, line)))
    }

    pub fn u32(&mut self, key: &str, default: &str) -> Result<u32> {
        let (v, line) = self.grab(key, default);
        v.parse()
            .map_err(|_| anyhow!("{}: '{v}' is not a non-negative integer", Self::located(key, line)))
    }

    pub fn usize(&mut self, key: &str, default: &str) -> Result<usize> {
        let (v, line) = self.grab(key, default);
        v.parse()
            .map_err(|_| anyhow!("{}: '{v}' is not a non-negative integer", Self::located(key, line)))
    }

    pub fn bool(&mut self, key: &str, default: &str) -> Result<bool> {
        let (v, line) = self.grab(key, default);
        match v.as_str() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(anyhow!(
                "{}: '{v}' is not a boolean (true/false)",
                Self::located(key, line)
            )),
        }
    }

    pub fn list_f64(&mut self, key: &str, default: &str) -> Result<Vec<f64>> {
        let (v, line) = self.grab(key, default);
        parse_float_list(&v).map_err(|e| anyhow!("{}: {e}", Self::located(key, line)))
    }

    pub fn list_u64(&mut self, key: &str, default: &str) -> Result<Vec<u64>> {
        let (v, line) = self.grab(key, default);
        let trimmed = v.trim().trim_start_matches('[').trim_end_matches(']');
        trimmed
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse()
                    .map_err(|_| anyhow!("{}: '{t}' is not an integer", Self::located(key, line)))
            })
            .collect()
    }

    pub fn sequence(&mut self, key: &str, default: &str) -> Result<TailedSequence> {
        let (v, line) = self.grab(key, default);
        parse_sequence(&v).map_err(|e| anyhow!("{}: {e}", Self::located(key, line)))
    }

    pub fn motif(&mut self, key: &str, default: &str) -> Result<Motif> {
        let (v, line) = self.grab(key, default);
        parse_motif(&v).map_err(|e| anyhow!("{}: {e}", Self::located(key, line)))
    }

    /// Optional key with no default: resolved (and echoed) only when present.
    pub fn optional_string(&mut self, key: &str) -> Option<String> {
        let e = self.map.take(key)?;
        self.resolved.push((key.to_string(), e.value.clone()));
        Some(e.value)
    }

    /// Rejects unread keys and returns the resolved pairs sorted by key.
    pub fn finish(mut self) -> Result<Vec<(String, String)>> {
        if let Some((key, entry)) = self.map.entries.iter().next() {
            let mut msg = format!("unknown {}", Self::located(key, entry.line));
            if self.map.entries.len() > 1 {
                let rest: Vec<&str> = self
                    .map
                    .entries
                    .keys()
                    .skip(1)
                    .map(String::as_str)
                    .collect();
                msg.push_str(&format!(" (and {} more: {})", rest.len(), rest.join(", ")));
            }
            bail!(msg);
        }
        self.resolved.sort();
        Ok(self.resolved)
    }
}

fn parse_float_list(text: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim().trim_start_matches('[').trim_end_matches(']');
    trimmed
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse()
                .map_err(|_| anyhow!("'{t}' is not a real number"))
        })
        .collect()
}

/// Sequence literal grammar:
///
/// ```text
/// sequence := [ "[" float ("," float)* "]" "++" ] tail
/// tail     := "constant(" float ")"
///           | "power(" base "," a "," p ")"       -- term_i = base + a * i^(-p)
///           | "geometric(" base "," a "," q ")"   -- term_i = base + a * q^i
///           | "periodic(" float ("," float)* ")"
/// ```
pub fn parse_sequence(text: &str) -> Result<TailedSequence> {
    let t = text.trim();
    let (prefix, tail_text) = match t.split_once("++") {
        Some((p, rest)) => {
            let p = p.trim();
            if !(p.starts_with('[') && p.ends_with(']')) {
                bail!("sequence literal '{text}': prefix must be bracketed, like [0.5, 2]");
            }
            let inner = &p[1..p.len() - 1];
            let prefix = if inner.trim().is_empty() {
                Vec::new()
            } else {
                parse_float_list(inner)?
            };
            (prefix, rest.trim())
        }
        None => (Vec::new(), t),
    };
    let tail = parse_tail(tail_text).map_err(|e| anyhow!("sequence literal '{text}': {e}"))?;
    TailedSequence::new(prefix, tail).map_err(|e| anyhow!("sequence literal '{text}': {e}"))
}

fn parse_tail(text: &str) -> Result<TailDescriptor> {
    let t = text.trim();
    let Some(open) = t.find('(') else {
        bail!("tail '{t}' is missing its argument list");
    };
    if !t.ends_with(')') {
        bail!("tail '{t}' is missing a closing parenthesis");
    }
    let name = t[..open].trim();
    let args = parse_float_list(&t[open + 1..t.len() - 1])?;
    match (name, args.len()) {
        ("constant", 1) => Ok(TailDescriptor::Constant(args[0])),
        ("power", 3) => Ok(TailDescriptor::PowerDrift {
            base: args[0],
            a: args[1],
            p: args[2],
        }),
        ("geometric", 3) => Ok(TailDescriptor::GeometricDrift {
            base: args[0],
            a: args[1],
            q: args[2],
        }),
        ("periodic", n) if n >= 1 => Ok(TailDescriptor::Periodic(args)),
        ("constant", n) => bail!("constant takes 1 argument, got {n}"),
        ("power", n) => bail!("power takes 3 arguments (base, a, p), got {n}"),
        ("geometric", n) => bail!("geometric takes 3 arguments (base, a, q), got {n}"),
        ("periodic", _) => bail!("periodic needs at least one value"),
        _ => bail!("unknown tail kind '{name}' (expected constant, power, geometric, periodic)"),
    }
}

/// Motif presets: `k2`, `path3`, `triangle`, `star<k>` (e.g. `star5`).
pub fn parse_motif(text: &str) -> Result<Motif> {
    let t = text.trim().to_ascii_lowercase();
    match t.as_str() {
        "k2" => Ok(Motif::k2()),
        "path3" => Ok(Motif::path3()),
        "triangle" => Ok(Motif::triangle()),
        _ => {
            if let Some(rest) = t.strip_prefix("star") {
                let k: usize = rest
                    .trim_matches(|c| c == '(' || c == ')')
                    .parse()
                    .map_err(|_| anyhow!("motif 'star' needs an order, like star5"))?;
                Motif::star(k).map_err(|e| anyhow!("motif '{text}': {e}"))
            } else {
                bail!("unknown motif '{text}' (expected k2, path3, triangle, or star<k>)")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_parsing_reports_line_numbers() {
        let map = ConfigMap::from_text("a = 1\n# comment\n\nb = two words\n").unwrap();
        let mut p = Params::new(map);
        assert_eq!(p.f64("a", "0").unwrap(), 1.0);
        assert_eq!(p.string("b", ""), "two words");
        assert!(p.finish().is_ok());

        let err = ConfigMap::from_text("just a line\n").unwrap_err();
        assert!(err.to_string().contains("line 1, column 1"));
        let err = ConfigMap::from_text("a = 1\na = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key 'a'"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let map = ConfigMap::from_text("known = 1\nmystery = 2\n").unwrap();
        let mut p = Params::new(map);
        p.f64("known", "0").unwrap();
        let err = p.finish().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mystery") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn json_configs_flatten_to_the_same_shape() {
        let map = ConfigMap::from_text(r#"{"eps": 0.5, "sizes": [100, 200], "name": "k2"}"#)
            .unwrap();
        let mut p = Params::new(map);
        assert_eq!(p.f64("eps", "0").unwrap(), 0.5);
        assert_eq!(p.list_u64("sizes", "").unwrap(), vec![100, 200]);
        assert_eq!(p.string("name", ""), "k2");
        p.finish().unwrap();

        let err = ConfigMap::from_text("{\"a\": 1,}").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn sequence_literals_cover_all_tail_kinds() {
        let s = parse_sequence("constant(1)").unwrap();
        assert_eq!(s.term(5), 1.0);
        let s = parse_sequence("[0.5, 2] ++ constant(1)").unwrap();
        assert_eq!((s.term(1), s.term(2), s.term(3)), (0.5, 2.0, 1.0));
        let s = parse_sequence("power(1, 2, 1.5)").unwrap();
        assert_eq!(s.term(4), 1.0 + 2.0 * 4f64.powf(-1.5));
        let s = parse_sequence("geometric(0, 1, 0.5)").unwrap();
        assert_eq!(s.term(3), 0.125);
        let s = parse_sequence("periodic(0.5, 2)").unwrap();
        assert_eq!((s.term(1), s.term(2), s.term(3)), (0.5, 2.0, 0.5));

        assert!(parse_sequence("constant(oops)").is_err());
        assert!(parse_sequence("wedge(1)").is_err());
        assert!(parse_sequence("0.5, 2 ++ constant(1)").is_err());
        assert!(parse_sequence("power(1, 2)").is_err());
    }

    #[test]
    fn motif_presets_parse() {
        assert_eq!(parse_motif("k2").unwrap().vertex_count(), 2);
        assert_eq!(parse_motif("star5").unwrap().vertex_count(), 5);
        assert_eq!(parse_motif("star(7)").unwrap().vertex_count(), 7);
        assert!(parse_motif("clique9").is_err());
        assert!(parse_motif("star1").is_err());
    }

    #[test]
    fn resolved_pairs_come_back_sorted() {
        let mut p = Params::new(ConfigMap::empty());
        p.string("zeta", "z");
        p.string("alpha", "a");
        let resolved = p.finish().unwrap();
        assert_eq!(
            resolved,
            vec![
                ("alpha".to_string(), "a".to_string()),
                ("zeta".to_string(), "z".to_string())
            ]
        );
    }
}
