//! Run configuration assembled from a key-value file and command-line flags.

use std::path::{Path, PathBuf};

use crate::data::Format;
use crate::jac::{PlugIn, Sampler};
use crate::model::Hyperparams;

/// Every setting a run can take. Keys in config files are the long flag
/// names; `-` and `_` are interchangeable.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub format: Option<Format>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub family: Option<String>,
    pub iters: Option<usize>,
    pub seed: u64,
    pub sampler: Sampler,
    pub samples: usize,
    pub plug_in: PlugIn,
    pub gamma_init: f64,
    pub seeds: Option<PathBuf>,
    pub replication: usize,
    pub workers: usize,
    pub parallel: bool,
    /// Restricts a run to items with this ground-truth label.
    pub class: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub hyper: Hyperparams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: None,
            labels: None,
            out: None,
            family: None,
            iters: None,
            seed: 0,
            sampler: Sampler::Importance,
            samples: 50,
            plug_in: PlugIn::Predictive,
            gamma_init: 1.0,
            seeds: None,
            replication: 1,
            workers: 1,
            parallel: false,
            class: None,
            checkpoint: None,
            hyper: Hyperparams::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value '{value}' for {key}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("invalid value '{value}' for {key}, expected true or false")),
    }
}

impl RunConfig {
    /// Applies one setting. Unknown keys and malformed values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "in" | "input" => self.input = Some(PathBuf::from(value)),
            "format" => self.format = Some(Format::from_name(value).map_err(|e| e.to_string())?),
            "labels" => self.labels = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "family" => self.family = Some(value.to_string()),
            "iters" => self.iters = Some(parse(k, value)?),
            "seed" => self.seed = parse(k, value)?,
            "sampler" => {
                self.sampler = match value {
                    "1" | "blocked" => Sampler::Blocked,
                    "2" | "importance" => Sampler::Importance,
                    _ => return Err(format!("invalid sampler '{value}', expected 1 or 2")),
                }
            }
            "L" | "samples" => self.samples = parse(k, value)?,
            "plug-in" => {
                self.plug_in = match value {
                    "mode" => PlugIn::Mode,
                    "predictive" => PlugIn::Predictive,
                    _ => return Err(format!("invalid plug-in '{value}', expected mode or predictive")),
                }
            }
            "gamma-init" => self.gamma_init = parse(k, value)?,
            "seeds" => {
                self.seeds = match value {
                    "none" | "" => None,
                    path => Some(PathBuf::from(path)),
                }
            }
            "replication" => self.replication = parse(k, value)?,
            "workers" => self.workers = parse(k, value)?,
            "parallel" => self.parallel = parse_bool(k, value)?,
            "class" => self.class = Some(parse(k, value)?),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            _ => return self.set_hyper(k, value),
        }
        Ok(())
    }

    fn set_hyper(&mut self, key: &str, value: &str) -> Result<(), String> {
        let h = &mut self.hyper;
        let slot = match key {
            "beta-a" => &mut h.beta_a,
            "beta-b" => &mut h.beta_b,
            "beta-strength" => &mut h.beta_strength,
            "mu0" => &mut h.mu0,
            "kappa0" => &mut h.kappa0,
            "a0" => &mut h.a0,
            "b0" => &mut h.b0,
            "transform-a" => &mut h.transform_a,
            "transform-var-fraction" => &mut h.transform_var_fraction,
            "gamma-a" => &mut h.gamma_a,
            "gamma-b" => &mut h.gamma_b,
            _ => return Err(format!("unknown setting '{key}'")),
        };
        *slot = parse(key, value)?;
        Ok(())
    }

    /// Applies `key value` / `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => line
                    .split_once(char::is_whitespace)
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .unwrap_or((line, "")),
            };
            self.set(key, value)
                .map_err(|e| format!("{origin}:{}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Checks cross-field constraints once all settings are in.
    pub fn validate(&self) -> Result<(), String> {
        self.hyper.validate().map_err(|e| e.to_string())?;
        if self.samples == 0 {
            return Err("L must be at least 1".into());
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        if self.replication == 0 {
            return Err("replication must be at least 1".into());
        }
        if !(self.gamma_init.is_finite() && self.gamma_init >= 0.0) {
            return Err(format!("gamma-init must be >= 0, got {}", self.gamma_init));
        }
        if self.gamma_init == 0.0 && self.seeds.is_none() && self.checkpoint.is_none() {
            return Err("gamma-init 0 requires --seeds (or a checkpoint)".into());
        }
        if self.parallel && self.sampler != Sampler::Importance {
            return Err("--parallel supports sampler 2 only".into());
        }
        Ok(())
    }
}
