//! Line-oriented run configuration: `key = value` pairs, `#` comments, and
//! strict key checking so a typo cannot silently fall back to a default. An
//! empty file (or no file) is the standard benchmark setting.

use std::collections::HashMap;

use crate::sim::{ProtocolKind, SimConfig};
use crate::time::SimDuration;

/// One experiment: a protocol configuration plus replication bookkeeping.
/// Field names double as the config-file keys.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub node_count: u32,
    pub fragment_payload: u32,
    pub duration_s: u64,
    /// Seconds excluded from measurement at the start of each replication.
    pub warmup_s: u64,
    pub replications: u32,
    pub master_seed: u64,
    /// Zero disables the urgent generator.
    pub urgent_mean_ms: u64,
    /// Zero disables the normal generator.
    pub normal_period_ms: u64,
    /// Destination for CSV output; standard output when absent.
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: ProtocolKind::Bop,
            node_count: 2,
            fragment_payload: 16,
            duration_s: 1000,
            warmup_s: 0,
            replications: 5,
            master_seed: 1,
            urgent_mean_ms: 2000,
            normal_period_ms: 200,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Settings for one replication under the given seed.
    pub fn sim_config(&self, seed: u64) -> SimConfig {
        SimConfig {
            protocol: self.protocol,
            node_count: self.node_count,
            duration: SimDuration::from_secs(self.duration_s),
            warmup: SimDuration::from_secs(self.warmup_s),
            seed,
            urgent_mean: SimDuration::from_ms(self.urgent_mean_ms),
            normal_period: SimDuration::from_ms(self.normal_period_ms),
            frag_payload: self.fragment_payload,
            ..SimConfig::default()
        }
    }

    /// Replication r always runs under `master_seed + r`.
    pub fn rep_seed(&self, rep: u32) -> u64 {
        self.master_seed.wrapping_add(rep as u64)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.replications == 0 {
            return Err("replications must be at least 1".into());
        }
        // Bounds keep the nanosecond clock far from u64 range; checked here
        // because flag values bypass the file parser.
        if self.duration_s > 10_000_000 || self.warmup_s > 10_000_000 {
            return Err("duration_s and warmup_s must be at most 10000000".into());
        }
        if self.urgent_mean_ms > 10_000_000_000 || self.normal_period_ms > 10_000_000_000 {
            return Err("arrival periods must be at most 10000000000 ms".into());
        }
        self.sim_config(self.master_seed).validate()
    }
}

/// Parse failure with the offending line when one is known.
#[derive(Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Applies one `key = value` setting. Rejects unknown keys and values that
/// fail per-field range rules; cross-field rules stay in `validate`.
pub fn apply_setting(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    fn number<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, String> {
        value
            .parse()
            .map_err(|_| format!("{key}: expected a number, got `{value}`"))
    }
    match key {
        "protocol" => {
            cfg.protocol = ProtocolKind::parse(value)
                .ok_or_else(|| format!("protocol must be `bop` or `frog`, got `{value}`"))?;
        }
        "node_count" => {
            cfg.node_count = number(value, key)?;
            if cfg.node_count < 2 {
                return Err("node_count must be at least 2".into());
            }
        }
        "fragment_payload" => {
            cfg.fragment_payload = number(value, key)?;
            if !(2..=121).contains(&cfg.fragment_payload) {
                return Err("fragment_payload must be in 2..=121".into());
            }
        }
        "duration_s" => {
            cfg.duration_s = number(value, key)?;
            if cfg.duration_s == 0 {
                return Err("duration_s must be positive".into());
            }
        }
        "warmup_s" => cfg.warmup_s = number(value, key)?,
        "replications" => {
            cfg.replications = number(value, key)?;
            if cfg.replications == 0 {
                return Err("replications must be at least 1".into());
            }
        }
        "master_seed" => cfg.master_seed = number(value, key)?,
        "urgent_mean_ms" => cfg.urgent_mean_ms = number(value, key)?,
        "normal_period_ms" => cfg.normal_period_ms = number(value, key)?,
        "output" => cfg.output = Some(value.to_string()),
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(line_no, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(err(line_no, "expected `key = value` with both sides present"));
        }
        if let Some(first) = seen.insert(key.to_string(), line_no) {
            return Err(err(
                line_no,
                format!("duplicate key `{key}` (first set on line {first})"),
            ));
        }
        apply_setting(&mut cfg, key, value).map_err(|m| err(line_no, m))?;
    }
    if cfg.warmup_s >= cfg.duration_s {
        let line = seen.get("warmup_s").copied().unwrap_or(0);
        return Err(err(line, "warmup_s must be shorter than duration_s"));
    }
    Ok(cfg)
}
