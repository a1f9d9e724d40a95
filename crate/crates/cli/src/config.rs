//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use graphrec::model::AblationConfig;
use graphrec::training::TrainConfig;

/// A config problem, optionally tied to a file line.
#[derive(Debug)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub msg: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{} line {l}: {}", p.display(), self.msg),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.msg),
            _ => f.write_str(&self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub ratings: Option<PathBuf>,
    pub trust: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub r_max: u8,
    pub round_fractional: bool,
    pub symmetrize: bool,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub scalar: ScalarKind,
    pub clamp: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ratings: None,
            trust: None,
            out_dir: PathBuf::from("graphrec-out"),
            r_max: graphrec::graphdata::DEFAULT_R_MAX,
            round_fractional: false,
            symmetrize: false,
            train_fraction: 0.8,
            split_seed: 0,
            train: TrainConfig::default(),
            ablation: AblationConfig::FULL,
            scalar: ScalarKind::F64,
            clamp: false,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, found {v:?}")),
    }
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?} as {}", std::any::type_name::<T>()))
}

/// Every recognised key, in manifest order.
pub const KEYS: &[&str] = &[
    "ratings",
    "trust",
    "out_dir",
    "r_max",
    "round_fractional",
    "symmetrize",
    "train_fraction",
    "split_seed",
    "embed_dim",
    "mlp_layers",
    "learning_rate",
    "batch_size",
    "dropout",
    "rmsprop_decay",
    "rmsprop_epsilon",
    "max_epochs",
    "patience",
    "seed",
    "neighbor_cap",
    "eval_batch_size",
    "variant",
    "use_social",
    "use_opinion",
    "attn_item",
    "attn_social",
    "attn_user",
    "scalar",
    "clamp",
];

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let t = &mut self.train;
        let a = &mut self.ablation;
        match key {
            "ratings" => self.ratings = Some(PathBuf::from(value)),
            "trust" => self.trust = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "r_max" => self.r_max = parse(value)?,
            "round_fractional" => self.round_fractional = parse_bool(value)?,
            "symmetrize" => self.symmetrize = parse_bool(value)?,
            "train_fraction" => self.train_fraction = parse(value)?,
            "split_seed" => self.split_seed = parse(value)?,
            "embed_dim" => t.embed_dim = parse(value)?,
            "mlp_layers" => t.mlp_layers = parse(value)?,
            "learning_rate" => t.learning_rate = parse(value)?,
            "batch_size" => t.batch_size = parse(value)?,
            "dropout" => t.dropout = parse(value)?,
            "rmsprop_decay" => t.rmsprop_decay = parse(value)?,
            "rmsprop_epsilon" => t.rmsprop_epsilon = parse(value)?,
            "max_epochs" => t.max_epochs = parse(value)?,
            "patience" => t.patience = parse(value)?,
            "seed" => t.seed = parse(value)?,
            "neighbor_cap" => {
                t.neighbor_cap = match value {
                    "none" | "off" => None,
                    v => Some(parse(v)?),
                }
            }
            "eval_batch_size" => t.eval_batch_size = parse(value)?,
            "variant" => *a = value.parse().map_err(|e: graphrec::Error| e.to_string())?,
            "use_social" => a.use_social = parse_bool(value)?,
            "use_opinion" => a.use_opinion = parse_bool(value)?,
            "attn_item" => a.attn_item = parse_bool(value)?,
            "attn_social" => a.attn_social = parse_bool(value)?,
            "attn_user" => a.attn_user = parse_bool(value)?,
            "scalar" => {
                self.scalar = match value {
                    "f32" => ScalarKind::F32,
                    "f64" => ScalarKind::F64,
                    _ => return Err(format!("scalar must be f32 or f64, found {value:?}")),
                }
            }
            "clamp" => self.clamp = parse_bool(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Reads assignments from a file on top of `self`. `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError {
                path: Some(path.to_path_buf()),
                line: Some(n + 1),
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |msg: String| ConfigError {
            path: None,
            line: None,
            msg,
        };
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(err(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.r_max == 0 {
            return Err(err("r_max must be at least 1".into()));
        }
        self.train.validate().map_err(|e| err(e.to_string()))
    }

    /// Every key with its current value.
    pub fn to_map(&self) -> BTreeMap<&'static str, String> {
        let t = &self.train;
        let a = &self.ablation;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values = [
            path(&self.ratings),
            path(&self.trust),
            self.out_dir.display().to_string(),
            self.r_max.to_string(),
            self.round_fractional.to_string(),
            self.symmetrize.to_string(),
            self.train_fraction.to_string(),
            self.split_seed.to_string(),
            t.embed_dim.to_string(),
            t.mlp_layers.to_string(),
            t.learning_rate.to_string(),
            t.batch_size.to_string(),
            t.dropout.to_string(),
            t.rmsprop_decay.to_string(),
            t.rmsprop_epsilon.to_string(),
            t.max_epochs.to_string(),
            t.patience.to_string(),
            t.seed.to_string(),
            t.neighbor_cap.map_or("none".into(), |c| c.to_string()),
            t.eval_batch_size.to_string(),
            a.name(),
            a.use_social.to_string(),
            a.use_opinion.to_string(),
            a.attn_item.to_string(),
            a.attn_social.to_string(),
            a.attn_user.to_string(),
            match self.scalar {
                ScalarKind::F32 => "f32".into(),
                ScalarKind::F64 => "f64".into(),
            },
            self.clamp.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    /// The config as a replayable `key = value` file. Custom ablations are
    /// written flag by flag, so `variant` is omitted.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_map() {
            if k == "variant" || (v.is_empty() && (k == "ratings" || k == "trust")) {
                continue;
            }
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
