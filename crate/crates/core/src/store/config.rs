use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::locmodel::{Key, KeypadLayout, KEY_LABELS};
use crate::neural::TrainConfig;
use crate::sigsim::{ChirpSpec, HumanPerturbation, PlateConfig};
use crate::Point;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' given twice (first on line {first})")]
    Duplicate {
        line: usize,
        key: String,
        first: usize,
    },
    #[error("line {line}: bad value for '{key}': {detail}")]
    BadValue {
        line: usize,
        key: String,
        detail: String,
    },
    #[error("'{key}' out of range: {detail}")]
    OutOfRange { key: String, detail: String },
    #[error("cannot read config {path}: {detail}")]
    Read { path: String, detail: String },
}

/// Every configurable value, with defaults for anything the file omits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub plate: PlateConfig,
    pub chirp: ChirpSpec,
    pub train: TrainConfig,
    pub human: HumanPerturbation,
    pub keypad: KeypadLayout,
}

struct Value<'a> {
    line: usize,
    key: &'a str,
    raw: &'a str,
}

impl Value<'_> {
    fn bad(&self, detail: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            line: self.line,
            key: self.key.to_string(),
            detail: detail.into(),
        }
    }

    fn reals(&self, n: usize) -> Result<Vec<f64>, ConfigError> {
        let parts: Vec<&str> = self.raw.split(',').map(str::trim).collect();
        if parts.len() != n {
            return Err(self.bad(format!(
                "expected {n} comma-separated numbers, found {:?}",
                self.raw
            )));
        }
        parts
            .iter()
            .map(|p| match p.parse::<f64>() {
                Ok(v) if !v.is_nan() => Ok(v),
                _ => Err(self.bad(format!("{p:?} is not a number"))),
            })
            .collect()
    }

    fn real(&self) -> Result<f64, ConfigError> {
        let v = self.reals(1)?[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad("must be finite"))
        }
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v = self.real()?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.bad(format!("{v} must be positive")))
        }
    }

    fn point(&self) -> Result<Point, ConfigError> {
        let v = self.reals(2)?;
        Ok([v[0], v[1]])
    }

    fn count(&self) -> Result<usize, ConfigError> {
        match self.raw.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(self.bad(format!("{:?} is not a positive integer", self.raw))),
        }
    }

    fn flag(&self) -> Result<bool, ConfigError> {
        match self.raw {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(self.bad(format!("{other:?} is not a boolean"))),
        }
    }
}

fn apply(cfg: &mut Config, keys: &mut BTreeMap<String, Key>, v: &Value) -> Result<(), ConfigError> {
    let (p, c, t, h) = (
        &mut cfg.plate,
        &mut cfg.chirp,
        &mut cfg.train,
        &mut cfg.human,
    );
    match v.key {
        "plate.width" => p.width_cm = v.positive()?,
        "plate.height" => p.height_cm = v.positive()?,
        "plate.emitter" => p.emitter_pos = v.point()?,
        "plate.receiver1" => p.receiver_pos[0] = v.point()?,
        "plate.receiver2" => p.receiver_pos[1] = v.point()?,
        "plate.receiver3" => p.receiver_pos[2] = v.point()?,
        "plate.receiver4" => p.receiver_pos[3] = v.point()?,
        "plate.velocity" => p.group_velocity_cm_per_s = v.positive()?,
        "plate.scatter_gain" => p.scatter_gain = v.real()?,
        "plate.snr_db" => {
            let s = v.reals(1)?[0];
            if s == f64::NEG_INFINITY {
                return Err(v.bad("must be finite or inf"));
            }
            p.snr_db = s;
        }
        "plate.dispersion_slope" => p.dispersion_slope = v.real()?,
        "plate.edge_reflections" => p.edge_reflections = v.flag()?,
        "plate.reflection_coeff" => p.reflection_coeff = v.real()?,
        "chirp.f0" => c.f0_hz = v.positive()?,
        "chirp.f1" => c.f1_hz = v.positive()?,
        "chirp.duration" => c.duration_s = v.positive()?,
        "chirp.emit_rate" => c.emit_rate_hz = v.positive()?,
        "chirp.acquire_rate" => c.acquire_rate_hz = v.positive()?,
        "chirp.samples" => c.acquire_samples = v.count()?,
        "train.learning_rate" => t.learning_rate = v.positive()?,
        "train.batch_size" => t.batch_size = v.count()?,
        "train.max_epochs" => t.max_epochs = v.count()?,
        "train.patience" => t.patience = v.count()?,
        "train.beta1" => t.adam_beta1 = v.real()?,
        "train.beta2" => t.adam_beta2 = v.real()?,
        "train.adam_eps" => t.adam_eps = v.positive()?,
        "train.bn_eps" => t.bn_eps = v.positive()?,
        "train.bn_momentum" => t.bn_momentum = v.positive()?,
        "human.pressure_sd" => h.pressure_sd = v.real()?,
        "human.pressure_min" => h.pressure_clamp.0 = v.real()?,
        "human.pressure_max" => h.pressure_clamp.1 = v.real()?,
        "human.jitter_sd" => h.jitter_sd_samples = v.real()?,
        key => {
            let label = key.strip_prefix("key.").filter(|l| KEY_LABELS.contains(l));
            let Some(label) = label else {
                return Err(ConfigError::UnknownKey {
                    line: v.line,
                    key: key.to_string(),
                });
            };
            let r = v.reals(3)?;
            if !(r[2] > 0.0) {
                return Err(v.bad("half size must be positive"));
            }
            keys.insert(
                label.to_string(),
                Key {
                    label: label.to_string(),
                    center: [r[0], r[1]],
                    half_size_cm: r[2],
                },
            );
        }
    }
    Ok(())
}

/// A comment starts at a `#` that opens the line or follows whitespace, so
/// the `#` keypad label in `key.# = ...` is not a comment.
fn strip_comment(line: &str) -> &str {
    let mut prev_space = true;
    for (i, ch) in line.char_indices() {
        if ch == '#' && prev_space {
            return &line[..i];
        }
        prev_space = ch.is_whitespace();
    }
    line
}

fn range(key: &str, detail: impl ToString) -> ConfigError {
    ConfigError::OutOfRange {
        key: key.to_string(),
        detail: detail.to_string(),
    }
}

/// Parses configuration text. Blank lines and `#` comments are ignored;
/// keypad keys given in the file replace the matching default keys.
pub fn load_config(text: &str) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    let mut keys = BTreeMap::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let content = strip_comment(raw_line).trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, raw)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: raw_line.to_string(),
            });
        };
        let (key, raw) = (key.trim(), raw.trim());
        if key.is_empty() || raw.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: raw_line.to_string(),
            });
        }
        if let Some(&first) = seen.get(key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first,
            });
        }
        seen.insert(key.to_string(), line);
        apply(&mut cfg, &mut keys, &Value { line, key, raw })?;
    }

    cfg.plate.validate().map_err(|e| range("plate", e))?;
    cfg.chirp.validate().map_err(|e| range("chirp", e))?;
    cfg.train.validate().map_err(|e| range("train", e))?;
    let (lo, hi) = cfg.human.pressure_clamp;
    if !(cfg.human.pressure_sd >= 0.0
        && cfg.human.jitter_sd_samples >= 0.0
        && lo > 0.0
        && lo <= 1.0
        && hi >= 1.0)
    {
        return Err(range(
            "human",
            "spreads must be nonnegative and the pressure clamp must bracket 1",
        ));
    }

    cfg.keypad.plate_width_cm = cfg.plate.width_cm;
    cfg.keypad.plate_height_cm = cfg.plate.height_cm;
    for key in &mut cfg.keypad.keys {
        if let Some(k) = keys.remove(&key.label) {
            *key = k;
        }
    }
    for key in &cfg.keypad.keys {
        let [x, y] = key.center;
        let h = key.half_size_cm;
        if x - h < 0.0 || y - h < 0.0 || x + h > cfg.plate.width_cm || y + h > cfg.plate.height_cm {
            return Err(range(
                &format!("key.{}", key.label),
                "key extends outside the plate",
            ));
        }
    }
    cfg.keypad.validate().map_err(|e| range("key", e))?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<(Config, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok((load_config(&text)?, text))
}
