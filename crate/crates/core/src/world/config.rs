use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`")]
    BadValue { line: usize, key: String, value: String },
    #[error("`{0}` is out of range")]
    OutOfRange(&'static str),
}

/// Scheduler and selection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardConfig {
    pub max_processes: usize,
    pub overflow_kill_fraction: f64,
    pub clone_check_probability: f64,
    pub corpse_age_limit_s: f64,
    pub process_age_limit_s: f64,
    pub instruction_budget: u64,
    pub quantum: u64,
    pub ms_per_tick: u64,
    /// Guards other than fault handling never take the population below this.
    pub guard_floor: usize,
    /// Ticks between sampled population exports; 0 disables them.
    pub export_every_ticks: u64,
    pub export_fraction: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            max_processes: 350,
            overflow_kill_fraction: 0.75,
            clone_check_probability: 1.0 / 59.0,
            corpse_age_limit_s: 30.0,
            process_age_limit_s: 100.0,
            instruction_budget: 5_000_000,
            quantum: 1000,
            ms_per_tick: 1,
            guard_floor: 1,
            export_every_ticks: 180_000,
            export_fraction: 0.1,
        }
    }
}

fn parse_fraction(v: &str) -> Option<f64> {
    match v.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => v.parse().ok(),
    }
}

impl GuardConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// probabilities may be written as `n/d`.
    pub fn parse(text: &str) -> Result<GuardConfig, ConfigError> {
        let mut c = GuardConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || ConfigError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            };
            let int = || value.replace('_', "").parse::<u64>().map_err(|_| bad());
            let float = || parse_fraction(value).ok_or_else(bad);
            match key {
                "max_processes" => c.max_processes = int()? as usize,
                "overflow_kill_fraction" => c.overflow_kill_fraction = float()?,
                "clone_check_probability" => c.clone_check_probability = float()?,
                "corpse_age_limit_s" => c.corpse_age_limit_s = float()?,
                "process_age_limit_s" => c.process_age_limit_s = float()?,
                "instruction_budget" => c.instruction_budget = int()?,
                "quantum" => c.quantum = int()?,
                "ms_per_tick" => c.ms_per_tick = int()?,
                "guard_floor" => c.guard_floor = int()? as usize,
                "export_every_ticks" => c.export_every_ticks = int()?,
                "export_fraction" => c.export_fraction = float()?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.overflow_kill_fraction) {
            return Err(ConfigError::OutOfRange("overflow_kill_fraction"));
        }
        if !unit(self.clone_check_probability) {
            return Err(ConfigError::OutOfRange("clone_check_probability"));
        }
        if !unit(self.export_fraction) {
            return Err(ConfigError::OutOfRange("export_fraction"));
        }
        if self.max_processes == 0 {
            return Err(ConfigError::OutOfRange("max_processes"));
        }
        if !(self.corpse_age_limit_s > 0.0) {
            return Err(ConfigError::OutOfRange("corpse_age_limit_s"));
        }
        if !(self.process_age_limit_s > 0.0) {
            return Err(ConfigError::OutOfRange("process_age_limit_s"));
        }
        if self.instruction_budget == 0 {
            return Err(ConfigError::OutOfRange("instruction_budget"));
        }
        if self.quantum == 0 {
            return Err(ConfigError::OutOfRange("quantum"));
        }
        if self.ms_per_tick == 0 {
            return Err(ConfigError::OutOfRange("ms_per_tick"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "max_processes = {}", self.max_processes);
        let _ = writeln!(s, "overflow_kill_fraction = {}", self.overflow_kill_fraction);
        let _ = writeln!(s, "clone_check_probability = {}", self.clone_check_probability);
        let _ = writeln!(s, "corpse_age_limit_s = {}", self.corpse_age_limit_s);
        let _ = writeln!(s, "process_age_limit_s = {}", self.process_age_limit_s);
        let _ = writeln!(s, "instruction_budget = {}", self.instruction_budget);
        let _ = writeln!(s, "quantum = {}", self.quantum);
        let _ = writeln!(s, "ms_per_tick = {}", self.ms_per_tick);
        let _ = writeln!(s, "guard_floor = {}", self.guard_floor);
        let _ = writeln!(s, "export_every_ticks = {}", self.export_every_ticks);
        let _ = writeln!(s, "export_fraction = {}", self.export_fraction);
        s
    }

    pub(crate) fn corpse_age_limit_ms(&self) -> f64 {
        self.corpse_age_limit_s * 1000.0
    }

    pub(crate) fn process_age_limit_ms(&self) -> f64 {
        self.process_age_limit_s * 1000.0
    }
}
