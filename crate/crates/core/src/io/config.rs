//! Flat key=value configuration files with line-numbered diagnostics.
//!
//! Blank lines and lines starting with `#` are ignored. Every other line
//! must be `key=value`; unknown or duplicate keys are errors.

use std::collections::HashMap;

use crate::autograd::{LossKind, TrainConfig};
use crate::error::{Error, Result};
use crate::groupfc::BilinearConvention;
use crate::specklesim::SceneSpec;
use crate::transdeno::{AttentionAxis, TransDenoConfig};

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// Parses `key=value` lines, returning `(line_number, key, value)` triples.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(line_no, format!("expected key=value, got {line:?}")))?;
        out.push((line_no, key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

struct KvMap {
    entries: HashMap<String, (usize, String)>,
}

impl KvMap {
    fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = HashMap::new();
        for (line, key, value) in parse_kv(text)? {
            if !allowed.contains(&key.as_str()) {
                return Err(config_err(line, format!("unknown key {key:?}")));
            }
            if entries.insert(key.clone(), (line, value)).is_some() {
                return Err(config_err(line, format!("duplicate key {key:?}")));
            }
        }
        Ok(KvMap { entries })
    }

    fn required<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        let (line, value) = self
            .entries
            .get(key)
            .ok_or_else(|| config_err(0, format!("missing required key {key:?}")))?;
        parse(value).ok_or_else(|| config_err(*line, format!("invalid value for {key}: {value:?}")))
    }

    fn optional<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => parse(value)
                .map(Some)
                .ok_or_else(|| config_err(*line, format!("invalid value for {key}: {value:?}"))),
        }
    }
}

fn parse_usize(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn parse_u64(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Scene-set description consumed by `gen-data`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub scene: SceneSpec,
    pub count: usize,
}

/// Keys: H, W, C, n_targets, target_size, amplitude, background, looks,
/// seed, count.
pub fn parse_data_spec(text: &str) -> Result<DataSpec> {
    let kv = KvMap::parse(
        text,
        &["H", "W", "C", "n_targets", "target_size", "amplitude", "background", "looks", "seed", "count"],
    )?;
    let scene = SceneSpec {
        h: kv.required("H", parse_usize)?,
        w: kv.required("W", parse_usize)?,
        c: kv.required("C", parse_usize)?,
        n_targets: kv.required("n_targets", parse_usize)?,
        target_size: kv.required("target_size", parse_usize)?,
        target_amplitude: kv.required("amplitude", parse_f64)?,
        background_level: kv.required("background", parse_f64)?,
        looks: kv.required("looks", |s| s.parse::<u32>().ok().filter(|&l| l >= 1))?,
        seed: kv.required("seed", parse_u64)?,
    };
    let count = kv.required("count", |s| parse_usize(s).filter(|&c| c >= 1))?;
    scene.validate().map_err(|e| config_err(0, e.to_string()))?;
    Ok(DataSpec { scene, count })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Everything `train` needs: optimizer settings plus module hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetup {
    pub train: TrainConfig,
    pub module: TransDenoConfig,
    pub precision: Precision,
    /// Seed for parameter initialization; defaults to the training seed.
    pub init_seed: u64,
}

/// Required keys: learning_rate, steps, batch, seed. Optional: loss (mse),
/// reduction, group_counts (comma-separated), convention (paper|standard),
/// axis (spatial|channel), precision (32|64), init_seed.
pub fn parse_train_setup(text: &str) -> Result<TrainSetup> {
    let kv = KvMap::parse(
        text,
        &["learning_rate", "steps", "batch", "seed", "loss", "reduction", "group_counts", "convention", "axis", "precision", "init_seed"],
    )?;
    let seed = kv.required("seed", parse_u64)?;
    let train = TrainConfig {
        learning_rate: kv.required("learning_rate", |s| parse_f64(s).filter(|&v| v >= 0.0))?,
        steps: kv.required("steps", |s| parse_usize(s).filter(|&v| v >= 1))?,
        batch: kv.required("batch", |s| parse_usize(s).filter(|&v| v >= 1))?,
        seed,
        loss: kv
            .optional("loss", |s| match s {
                "mse" => Some(LossKind::Mse),
                _ => None,
            })?
            .unwrap_or(LossKind::Mse),
    };
    let defaults = TransDenoConfig::default();
    let module = TransDenoConfig {
        reduction: kv
            .optional("reduction", |s| parse_usize(s).filter(|&v| v >= 1))?
            .unwrap_or(defaults.reduction),
        group_counts: kv
            .optional("group_counts", |s| {
                let parsed: Option<Vec<usize>> = s.split(',').map(|p| p.trim().parse().ok()).collect();
                parsed.filter(|v| !v.is_empty())
            })?
            .unwrap_or(defaults.group_counts),
        convention: kv
            .optional("convention", |s| match s {
                "paper" => Some(BilinearConvention::Paper),
                "standard" => Some(BilinearConvention::Standard),
                _ => None,
            })?
            .unwrap_or(defaults.convention),
        axis: kv
            .optional("axis", |s| match s {
                "spatial" => Some(AttentionAxis::Spatial),
                "channel" => Some(AttentionAxis::Channel),
                _ => None,
            })?
            .unwrap_or(defaults.axis),
    };
    let precision = kv
        .optional("precision", |s| match s {
            "32" => Some(Precision::F32),
            "64" => Some(Precision::F64),
            _ => None,
        })?
        .unwrap_or_default();
    let init_seed = kv.optional("init_seed", parse_u64)?.unwrap_or(seed);
    Ok(TrainSetup {
        train,
        module,
        precision,
        init_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD_SPEC: &str = "\
# benchmark scenes
H=16
W=16
C=4
n_targets=3
target_size=2
amplitude=3.0
background=1.0
looks=1
seed=7
count=4
";

    #[test]
    fn data_spec_parses() {
        let spec = parse_data_spec(GOOD_SPEC).unwrap();
        assert_eq!(spec.count, 4);
        assert_eq!(spec.scene.h, 16);
        assert_eq!(spec.scene.looks, 1);
        assert_eq!(spec.scene.target_amplitude, 3.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = GOOD_SPEC.replace("looks=1", "looks=zero");
        match parse_data_spec(&bad) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 9),
            other => panic!("expected config error, got {other:?}"),
        }
        let unknown = format!("{GOOD_SPEC}extra=1\n");
        match parse_data_spec(&unknown) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 12),
            other => panic!("expected config error, got {other:?}"),
        }
        match parse_data_spec("H=16\nnot a kv line\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_keys_are_reported() {
        let missing = GOOD_SPEC.replace("count=4\n", "");
        let err = parse_data_spec(&missing).unwrap_err();
        assert!(err.to_string().contains("count"), "{err}");
    }

    #[test]
    fn train_setup_defaults_and_overrides() {
        let setup = parse_train_setup("learning_rate=0.1\nsteps=100\nbatch=4\nseed=3\n").unwrap();
        assert_eq!(setup.module.reduction, 4);
        assert_eq!(setup.module.group_counts, vec![2, 4, 8, 16]);
        assert_eq!(setup.precision, Precision::F32);
        assert_eq!(setup.init_seed, 3);

        let setup = parse_train_setup(
            "learning_rate=0.1\nsteps=10\nbatch=2\nseed=3\nreduction=2\ngroup_counts=2,4\nconvention=standard\naxis=channel\nprecision=64\ninit_seed=55\nloss=mse\n",
        )
        .unwrap();
        assert_eq!(setup.module.reduction, 2);
        assert_eq!(setup.module.group_counts, vec![2, 4]);
        assert_eq!(setup.module.convention, BilinearConvention::Standard);
        assert_eq!(setup.module.axis, AttentionAxis::Channel);
        assert_eq!(setup.precision, Precision::F64);
        assert_eq!(setup.init_seed, 55);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let dup = format!("{GOOD_SPEC}count=9\n");
        match parse_data_spec(&dup) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 12),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
