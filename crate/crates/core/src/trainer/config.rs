use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::milhead::{AggConfig, AggKind, TrainMode};

/// Hyperparameters of one training run and of a sweep.
///
/// On disk this is flat `key=value` text with one key per line; `#` starts a
/// comment. Keys are the field names. Every key except `seed` may be omitted
/// and takes its default.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub global_agg: AggKind,
    pub local_agg: AggKind,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub runs: usize,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            global_agg: AggKind::Max,
            local_agg: AggKind::Attention,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 300,
            seed: 0,
            init_scale: 1.0,
            runs: 36,
            mode: TrainMode::Mil,
        }
    }
}

const KEYS: [&str; 11] = [
    "global_agg",
    "local_agg",
    "lr",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "epochs",
    "seed",
    "init_scale",
    "runs",
    "mode",
];

impl TrainConfig {
    pub fn agg(&self) -> Result<AggConfig> {
        AggConfig::new(self.global_agg, self.local_agg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.epochs == 0 || self.runs == 0 {
            return bad("epochs and runs must be at least 1".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!("init_scale must be finite and non-negative, got {}", self.init_scale));
        }
        self.agg()?;
        if self.mode.is_sil() && (self.global_agg == AggKind::None || self.local_agg != AggKind::None) {
            return bad(format!(
                "mode {} trains the global stream alone: set local_agg=none and a global aggregator",
                self.mode
            ));
        }
        Ok(())
    }

    /// Parses config text; `seed` is required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { line, reason };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key {key:?}; known keys: {}", KEYS.join(", "))));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            fn num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
                value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
            }
            let set = |cfg: &mut TrainConfig| -> std::result::Result<(), String> {
                match key {
                    "global_agg" => cfg.global_agg = value.parse().map_err(|e: Error| e.to_string())?,
                    "local_agg" => cfg.local_agg = value.parse().map_err(|e: Error| e.to_string())?,
                    "mode" => cfg.mode = value.parse().map_err(|e: Error| e.to_string())?,
                    "lr" => cfg.lr = num(key, value)?,
                    "adam_beta1" => cfg.adam_beta1 = num(key, value)?,
                    "adam_beta2" => cfg.adam_beta2 = num(key, value)?,
                    "adam_eps" => cfg.adam_eps = num(key, value)?,
                    "epochs" => cfg.epochs = num(key, value)?,
                    "seed" => cfg.seed = num(key, value)?,
                    "init_scale" => cfg.init_scale = num(key, value)?,
                    "runs" => cfg.runs = num(key, value)?,
                    _ => unreachable!(),
                }
                Ok(())
            };
            set(&mut cfg).map_err(err)?;
        }
        if !seen.contains("seed") {
            return Err(Error::Config {
                line: 0,
                reason: "missing required key \"seed\"".into(),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "global_agg={}", self.global_agg)?;
        writeln!(f, "local_agg={}", self.local_agg)?;
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "adam_beta1={}", self.adam_beta1)?;
        writeln!(f, "adam_beta2={}", self.adam_beta2)?;
        writeln!(f, "adam_eps={}", self.adam_eps)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "init_scale={}", self.init_scale)?;
        writeln!(f, "runs={}", self.runs)?;
        writeln!(f, "mode={}", self.mode)
    }
}

impl FromStr for TrainConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainConfig::parse(s)
    }
}
