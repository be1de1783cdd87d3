//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! tau_ms = 2
//! p0 = [0.9, 0.8, 0.7, 0.6, 0.5]
//! allocator = msms
//! ```
//!
//! Every error names the offending line. Values given through
//! [`RawConfig::set`] (command-line overrides) carry no line.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alloc::DEFAULT_REPEAT_CAP;
use crate::energy::{EnergyConfig, EnergyError};
use crate::model::{ChannelProfile, DetectorModel, ModelError, SensingQuality, TimingConfig};
use crate::throughput::{Objective, SearchOptions, SearchSpace};

pub const DEFAULT_P0: [f64; 5] = [0.9, 0.8, 0.7, 0.6, 0.5];

/// Where a value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Line {
    At(usize),
    Override,
    Default,
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Line::At(n) => write!(f, "line {n}"),
            Line::Override => write!(f, "override"),
            Line::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{line}: expected `key = value`")]
    Syntax { line: Line },
    #[error("{line}: unknown key `{key}`")]
    UnknownKey { line: Line, key: String },
    #[error("{line}: `{key}` already set on {first}")]
    DuplicateKey { line: Line, key: String, first: Line },
    #[error("{line}: invalid `{key}`: {reason}")]
    InvalidValue { line: Line, key: String, reason: String },
}

impl ConfigError {
    pub fn line(&self) -> Line {
        match self {
            ConfigError::Syntax { line }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::DuplicateKey { line, .. }
            | ConfigError::InvalidValue { line, .. } => *line,
        }
    }
}

pub const KEYS: &[&str] = &[
    "slot_ms",
    "tau_ms",
    "tau_ho_ms",
    "rate",
    "np",
    "ns",
    "p0",
    "sensing",
    "p_fa",
    "p_d",
    "persistence",
    "fs_hz",
    "snr_db",
    "target_pd",
    "e_sense",
    "e_ho",
    "n_slots",
    "seed",
    "allocator",
    "rebuild_per_slot",
    "repeat_cap",
    "budget",
    "objective",
    "search_space",
    "sweep_values",
    "sweep_pmsms_p",
];

/// How `(P_fa, P_d)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingMode {
    ErrorFree,
    /// `p_fa` and `p_d` as configured.
    Fixed,
    /// `P_fa` from the energy-detector map at each sensing time, `P_d = target_pd`.
    Detector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocatorKind {
    Sms,
    Msms,
    Pmsms,
    /// Exhaustive-search optimum, held fixed for every slot.
    Optimal,
}

macro_rules! named_enum {
    ($ty:ty, $($name:literal => $variant:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("expected one of {}", [$($name),+].join(", "))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

named_enum!(SensingMode, "error_free" => SensingMode::ErrorFree, "fixed" => SensingMode::Fixed, "detector" => SensingMode::Detector);
named_enum!(AllocatorKind, "sms" => AllocatorKind::Sms, "msms" => AllocatorKind::Msms, "pmsms" => AllocatorKind::Pmsms, "optimal" => AllocatorKind::Optimal);
named_enum!(Objective, "exact" => Objective::Exact, "closed_form" => Objective::ClosedForm);
named_enum!(SearchSpace, "repetition_free" => SearchSpace::RepetitionFree, "full" => SearchSpace::Full);

/// Unresolved key/value pairs with their source lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Line)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let at = Line::At(i + 1);
            let content = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line: at });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line: at });
            }
            if let Some((_, first)) = raw.entries.get(key) {
                return Err(ConfigError::DuplicateKey {
                    line: at,
                    key: key.to_string(),
                    first: *first,
                });
            }
            raw.insert(key, value, at)?;
        }
        Ok(raw)
    }

    /// Sets or replaces a value, e.g. from a command-line flag.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.insert(key, value.trim(), Line::Override)
    }

    fn insert(&mut self, key: &str, value: &str, line: Line) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        self.entries.insert(key.to_string(), (value.to_string(), line));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn line_of(&self, key: &str) -> Line {
        self.entries.get(key).map_or(Line::Default, |(_, l)| *l)
    }

    fn invalid(&self, key: &str, reason: impl fmt::Display) -> ConfigError {
        ConfigError::InvalidValue {
            line: self.line_of(key),
            key: key.to_string(),
            reason: reason.to_string(),
        }
    }

    fn value<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(text) => text.parse().map_err(|e| self.invalid(key, e)),
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.value(key, default)?;
        if !v.is_finite() {
            return Err(self.invalid(key, "must be finite"));
        }
        Ok(v)
    }

    fn float_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(text) = self.get(key) else {
            return Ok(None);
        };
        parse_list(text).map(Some).map_err(|e| self.invalid(key, e))
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let cfg = ExperimentConfig {
            slot_ms: self.float("slot_ms", 200.0)?,
            tau_ms: self.float("tau_ms", 1.0)?,
            tau_ho_ms: self.float("tau_ho_ms", 0.1)?,
            rate: self.float("rate", 1.0)?,
            np: self.value("np", 5)?,
            ns: self.value("ns", 3)?,
            p0: self.float_list("p0")?.unwrap_or_else(|| DEFAULT_P0.to_vec()),
            sensing: self.value("sensing", SensingMode::Fixed)?,
            p_fa: self.float("p_fa", 0.1)?,
            p_d: self.float("p_d", 0.9)?,
            persistence: self.float("persistence", 1.0)?,
            fs_hz: self.float("fs_hz", 6e6)?,
            snr_db: self.float("snr_db", -15.0)?,
            target_pd: self.float("target_pd", 0.9)?,
            e_sense: self.float("e_sense", 1.0)?,
            e_ho: self.float("e_ho", 0.0)?,
            n_slots: self.value("n_slots", 10_000)?,
            seed: self.value("seed", 0)?,
            allocator: self.value("allocator", AllocatorKind::Sms)?,
            rebuild_per_slot: self.value("rebuild_per_slot", true)?,
            repeat_cap: self.value("repeat_cap", DEFAULT_REPEAT_CAP)?,
            budget: self.value("budget", 5_000_000)?,
            objective: self.value("objective", Objective::Exact)?,
            search_space: self.value("search_space", SearchSpace::RepetitionFree)?,
            sweep_values: self.float_list("sweep_values")?,
            sweep_pmsms_p: self.float("sweep_pmsms_p", 0.5)?,
        };
        cfg.validate(self)?;
        Ok(cfg)
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or("expected a bracketed list like [0.5, 0.7]")?
        .trim();
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|item| {
            let item = item.trim();
            match item.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("`{item}` is not a finite number")),
            }
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    RawConfig::parse(text)?.resolve()
}

/// Fully resolved and validated settings; times in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub slot_ms: f64,
    pub tau_ms: f64,
    pub tau_ho_ms: f64,
    pub rate: f64,
    pub np: usize,
    pub ns: usize,
    pub p0: Vec<f64>,
    pub sensing: SensingMode,
    pub p_fa: f64,
    pub p_d: f64,
    pub persistence: f64,
    pub fs_hz: f64,
    pub snr_db: f64,
    pub target_pd: f64,
    pub e_sense: f64,
    pub e_ho: f64,
    pub n_slots: u64,
    pub seed: u64,
    pub allocator: AllocatorKind,
    pub rebuild_per_slot: bool,
    pub repeat_cap: usize,
    pub budget: u64,
    pub objective: Objective,
    pub search_space: SearchSpace,
    pub sweep_values: Option<Vec<f64>>,
    /// Persistence used for the PMSMS curve of the sensing-time sweep.
    pub sweep_pmsms_p: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        RawConfig::default().resolve().expect("defaults are valid")
    }
}

impl ExperimentConfig {
    fn validate(&self, raw: &RawConfig) -> Result<(), ConfigError> {
        let model = |key: &str, e: ModelError| raw.invalid(key, e);
        if self.np == 0 || self.np > u16::MAX as usize {
            return Err(raw.invalid("np", "must be between 1 and 65535"));
        }
        if self.ns == 0 {
            return Err(raw.invalid("ns", "must be at least 1"));
        }
        if self.p0.len() != self.np {
            return Err(raw.invalid(
                "p0",
                format!("has {} entries but np = {}", self.p0.len(), self.np),
            ));
        }
        ChannelProfile::new(self.p0.clone()).map_err(|e| model("p0", e))?;
        TimingConfig::new(self.slot_ms * 1e-3, self.tau_ms * 1e-3, self.tau_ho_ms * 1e-3, self.rate)
            .map_err(|e| model("tau_ms", e))?;
        self.timing_at(self.tau_ms).map_err(|e| model("tau_ms", e))?;
        if let Some(values) = &self.sweep_values {
            if values.is_empty() {
                return Err(raw.invalid("sweep_values", "must not be empty"));
            }
        }
        SensingQuality::new(self.p_fa, self.p_d, self.persistence).map_err(|e| {
            let key = match e {
                ModelError::InvalidProbability { name: "persistence_p", .. } => "persistence",
                ModelError::InvalidProbability { name: "p_d", .. } => "p_d",
                _ => "p_fa",
            };
            model(key, e)
        })?;
        if !(self.fs_hz > 0.0) {
            return Err(raw.invalid("fs_hz", "must be positive"));
        }
        if !(self.target_pd > 0.0 && self.target_pd < 1.0) {
            return Err(raw.invalid("target_pd", "must lie strictly between 0 and 1"));
        }
        EnergyConfig::new(self.e_sense, self.e_ho).map_err(|e| {
            let key = match e {
                EnergyError::Negative { name, .. } => name,
                EnergyError::SequenceTooLong { .. } => "e_sense",
            };
            raw.invalid(key, e)
        })?;
        if self.n_slots == 0 {
            return Err(raw.invalid("n_slots", "must be at least 1"));
        }
        if self.repeat_cap == 0 {
            return Err(raw.invalid("repeat_cap", "must be at least 1"));
        }
        if self.budget == 0 {
            return Err(raw.invalid("budget", "must be at least 1"));
        }
        if !(self.sweep_pmsms_p > 0.0 && self.sweep_pmsms_p <= 1.0) {
            return Err(raw.invalid("sweep_pmsms_p", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn profile(&self) -> ChannelProfile {
        ChannelProfile::new(self.p0.clone()).expect("validated")
    }

    pub fn timing(&self) -> TimingConfig {
        self.timing_at(self.tau_ms).expect("validated")
    }

    /// Timing with the sensing time replaced, checked against the channel count.
    pub fn timing_at(&self, tau_ms: f64) -> Result<TimingConfig, ModelError> {
        let t = TimingConfig::new(self.slot_ms * 1e-3, tau_ms * 1e-3, self.tau_ho_ms * 1e-3, self.rate)?;
        t.check_fits(self.np)?;
        Ok(t)
    }

    pub fn detector(&self) -> DetectorModel {
        DetectorModel {
            fs_hz: self.fs_hz,
            snr_db: self.snr_db,
            target_pd: self.target_pd,
        }
    }

    pub fn quality(&self) -> SensingQuality {
        self.quality_at(self.tau_ms).expect("validated")
    }

    /// Sensing quality when each channel is sensed for `tau_ms`.
    pub fn quality_at(&self, tau_ms: f64) -> Result<SensingQuality, ModelError> {
        match self.sensing {
            SensingMode::ErrorFree => SensingQuality::error_free().with_persistence(self.persistence),
            SensingMode::Fixed => SensingQuality::new(self.p_fa, self.p_d, self.persistence),
            SensingMode::Detector => {
                let (p_fa, p_d) = self.detector().operating_point(tau_ms * 1e-3)?;
                SensingQuality::new(p_fa, p_d, self.persistence)
            }
        }
    }

    pub fn energy(&self) -> EnergyConfig {
        EnergyConfig::new(self.e_sense, self.e_ho).expect("validated")
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions {
            objective: self.objective,
            space: self.search_space,
            budget: self.budget,
        }
    }

    /// Every setting as `key = value` lines in a fixed order.
    pub fn canonical(&self) -> String {
        let list = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("slot_ms", format!("{:?}", self.slot_ms));
        put("tau_ms", format!("{:?}", self.tau_ms));
        put("tau_ho_ms", format!("{:?}", self.tau_ho_ms));
        put("rate", format!("{:?}", self.rate));
        put("np", self.np.to_string());
        put("ns", self.ns.to_string());
        put("p0", list(&self.p0));
        put("sensing", self.sensing.to_string());
        put("p_fa", format!("{:?}", self.p_fa));
        put("p_d", format!("{:?}", self.p_d));
        put("persistence", format!("{:?}", self.persistence));
        put("fs_hz", format!("{:?}", self.fs_hz));
        put("snr_db", format!("{:?}", self.snr_db));
        put("target_pd", format!("{:?}", self.target_pd));
        put("e_sense", format!("{:?}", self.e_sense));
        put("e_ho", format!("{:?}", self.e_ho));
        put("n_slots", self.n_slots.to_string());
        put("seed", self.seed.to_string());
        put("allocator", self.allocator.to_string());
        put("rebuild_per_slot", self.rebuild_per_slot.to_string());
        put("repeat_cap", self.repeat_cap.to_string());
        put("budget", self.budget.to_string());
        put("objective", self.objective.to_string());
        put("search_space", self.search_space.to_string());
        if let Some(v) = &self.sweep_values {
            put("sweep_values", list(v));
        }
        put("sweep_pmsms_p", format!("{:?}", self.sweep_pmsms_p));
        out
    }

    /// Hex SHA-256 of [`ExperimentConfig::canonical`].
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
