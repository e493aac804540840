//! Flat key-value configuration files and flag/config/default merging.
//!
//! Precedence: command-line flag, then config-file entry, then built-in
//! default. The resolved configuration of every run is echoed into a
//! manifest next to the data files; data files themselves carry no
//! timestamps so identical configurations produce bit-identical outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, String> {
        self.get(key)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| format!("config key {key}: {e}"))
            })
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, String> {
        self.get(key)
            .map(|s| {
                s.parse::<u64>()
                    .map_err(|e| format!("config key {key}: {e}"))
            })
            .transpose()
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.get(key).map(|s| s.to_string())
    }
}

/// flag, then config, then default
pub fn resolve<T: Clone>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// "WxH" grid syntax, e.g. 257x129.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid {s:?}: expected WxH"))?;
    let w = a
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("grid width: {e}"))?;
    let h = b
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("grid height: {e}"))?;
    Ok((w, h))
}

/// "a:b:step" inclusive range syntax for sweeps.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => Ok(vec![parts[0]
            .parse::<f64>()
            .map_err(|e| format!("range {s:?}: {e}"))?]),
        3 => {
            let a: f64 = parts[0].parse().map_err(|e| format!("range {s:?}: {e}"))?;
            let b: f64 = parts[1].parse().map_err(|e| format!("range {s:?}: {e}"))?;
            let step: f64 = parts[2].parse().map_err(|e| format!("range {s:?}: {e}"))?;
            if !(step > 0.0) || b < a {
                return Err(format!("range {s:?}: need a <= b and step > 0"));
            }
            let mut out = Vec::new();
            let mut v = a;
            while v <= b + 1e-12 * step {
                out.push(v);
                v = a + (out.len() as f64) * step;
            }
            Ok(out)
        }
        _ => Err(format!("range {s:?}: expected value or a:b:step")),
    }
}

/// Renders the resolved configuration as a manifest JSON string; the
/// timestamp lives here and only here.
pub fn manifest_json(command: &str, resolved: &BTreeMap<String, String>) -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut body = String::new();
    let _ = write!(body, "{{\n  \"command\": {:?},\n  \"unix_time\": {now}", command);
    for (k, v) in resolved {
        let _ = write!(body, ",\n  \"{k}\": {v:?}");
    }
    body.push_str("\n}\n");
    body
}
