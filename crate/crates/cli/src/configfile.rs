//! Run configuration: a TOML file with `data`, `model`, `train` and `eval`
//! sections, overridable from the command line. Unknown keys are rejected
//! with a nearest-key suggestion, and the fully resolved configuration is
//! echoed into every report so a run can be reproduced bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stransformer_core::config::ModelConfig;
use stransformer_core::data::{load_csv, synth, ForecastDataset, Splits, SynthKind};
use stransformer_core::train::TrainConfig;
use stransformer_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// CSV path; when absent a synthetic dataset is generated instead.
    pub path: Option<String>,
    pub synth_kind: String,
    pub synth_variables: usize,
    pub synth_length: usize,
    pub synth_noise: f64,
    pub synth_seed: u64,
    pub train_ratio: f64,
    pub val_ratio: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            synth_kind: "sines".to_string(),
            synth_variables: 3,
            synth_length: 400,
            synth_noise: 0.05,
            synth_seed: 0,
            train_ratio: 0.7,
            val_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Horizons to report; empty means the model horizon.
    pub horizons: Vec<usize>,
    pub normalized_scale: bool,
    pub short_term_metrics: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizons: Vec::new(),
            normalized_scale: true,
            short_term_metrics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

const SECTIONS: [&str; 4] = ["data", "model", "train", "eval"];
const DATA_KEYS: [&str; 8] = [
    "path", "synth_kind", "synth_variables", "synth_length", "synth_noise", "synth_seed",
    "train_ratio", "val_ratio",
];
const MODEL_KEYS: [&str; 17] = [
    "variables", "lookback", "horizon", "embed", "scn_channels", "mask_hidden", "ffn_hidden",
    "mask_blocks", "blocks", "tcn_layers", "tcn_kernel", "scn_kernels", "dropout", "variant",
    "scn_padding", "mask_source", "seed",
];
const TRAIN_KEYS: [&str; 10] = [
    "lr", "beta1", "beta2", "eps", "batch_size", "max_steps", "patience", "eval_every",
    "grad_clip", "seed",
];
const EVAL_KEYS: [&str; 3] = ["horizons", "normalized_scale", "short_term_metrics"];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "data" => &DATA_KEYS,
        "model" => &MODEL_KEYS,
        "train" => &TRAIN_KEYS,
        "eval" => &EVAL_KEYS,
        _ => &[],
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

fn suggest(unknown: &str, candidates: &'static [&'static str]) -> Option<&'static str> {
    candidates
        .iter()
        .map(|&c| (levenshtein(unknown, c), c))
        .filter(|(d, _)| *d <= 3)
        .min_by_key(|(d, _)| *d)
        .map(|(_, c)| c)
}

fn unknown_key_error(path: &str, candidates: &'static [&'static str]) -> Error {
    match suggest(path.rsplit('.').next().unwrap_or(path), candidates) {
        Some(s) => Error::config(format!("unknown config key `{path}` (did you mean `{s}`?)")),
        None => Error::config(format!("unknown config key `{path}`")),
    }
}

/// Rejects unknown sections and keys before deserialization so the error can
/// carry a suggestion.
fn check_keys(table: &toml::Table) -> Result<()> {
    for (section, value) in table {
        if !SECTIONS.contains(&section.as_str()) {
            return Err(unknown_key_error(section, &SECTIONS));
        }
        let keys = section_keys(section);
        let inner = value.as_table().ok_or_else(|| {
            Error::config(format!("config section `{section}` must be a table"))
        })?;
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(unknown_key_error(&format!("{section}.{key}"), keys));
            }
        }
    }
    Ok(())
}

fn parse_toml_value(raw: &str) -> toml::Value {
    let wrapped = format!("x = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        Error::usage(format!("--set expects SECTION.KEY=VALUE, got `{assignment}`"))
    })?;
    let (section, field) = key.trim().split_once('.').ok_or_else(|| {
        Error::usage(format!("--set key must be SECTION.KEY, got `{key}`"))
    })?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let inner = entry.as_table_mut().ok_or_else(|| {
        Error::config(format!("config section `{section}` must be a table"))
    })?;
    inner.insert(field.to_string(), parse_toml_value(value.trim()));
    Ok(())
}

/// Loads the config file (if any), applies `--set` overrides, validates keys
/// and deserializes.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfigFile> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                Error::config(format!("cannot read config `{}`: {e}", p.display()))
            })?;
            text.parse().map_err(|e| {
                Error::parse(p.display().to_string(), format!("invalid TOML: {e}"))
            })?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        apply_set(&mut table, s)?;
    }
    check_keys(&table)?;
    let cfg: RunConfigFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::config(format!("invalid config value: {e}")))?;
    cfg.model.validate()?;
    cfg.train.validate()?;
    if !(cfg.data.train_ratio > 0.0 && cfg.data.val_ratio >= 0.0
        && cfg.data.train_ratio + cfg.data.val_ratio < 1.0)
    {
        return Err(Error::config(format!(
            "split ratios must satisfy 0 < train and train + val < 1, got {} + {}",
            cfg.data.train_ratio, cfg.data.val_ratio
        )));
    }
    Ok(cfg)
}

impl RunConfigFile {
    /// One `--seed` drives every random stream.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.model.seed = s;
            self.train.seed = s;
            self.data.synth_seed = s;
        }
    }

    pub fn eval_horizons(&self) -> Vec<usize> {
        if self.eval.horizons.is_empty() {
            vec![self.model.horizon]
        } else {
            self.eval.horizons.clone()
        }
    }

    /// The resolved configuration as echoed into reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    /// Deterministic run identifier: FNV-1a over the resolved config JSON.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Loads the configured dataset: CSV when a path is given, otherwise a
    /// seeded synthetic series. Split ratios from the config apply to both.
    pub fn load_dataset(&self) -> Result<ForecastDataset> {
        let mut ds = match &self.data.path {
            Some(p) => {
                let path = Path::new(p);
                if !path.exists() {
                    return Err(Error::config(format!("dataset not found: {p}")));
                }
                load_csv(path)?
            }
            None => {
                let kind: SynthKind = self.data.synth_kind.parse()?;
                synth(
                    kind,
                    self.data.synth_variables,
                    self.data.synth_length,
                    self.data.synth_noise,
                    self.data.synth_seed,
                )?
            }
        };
        ds.splits = Splits::by_ratio(ds.len(), self.data.train_ratio, self.data.val_ratio);
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfigFile::default();
        let text = toml::to_string(&cfg).unwrap();
        let table: toml::Table = text.parse().unwrap();
        check_keys(&table).unwrap();
        let back: RunConfigFile = toml::Value::Table(table).try_into().unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let mut table = toml::Table::new();
        apply_set(&mut table, "model.embd=32").unwrap();
        let err = check_keys(&table).unwrap_err().to_string();
        assert!(err.contains("model.embd") && err.contains("embed"), "{err}");
    }

    #[test]
    fn unknown_section_suggests_nearest() {
        let mut table = toml::Table::new();
        apply_set(&mut table, "trian.lr=0.001").unwrap();
        let err = check_keys(&table).unwrap_err().to_string();
        assert!(err.contains("trian") && err.contains("train"), "{err}");
    }

    #[test]
    fn set_overrides_file_value() {
        let cfg = load(None, &["train.lr=0.001".to_string()]).unwrap();
        assert_eq!(cfg.train.lr, 0.001);
    }

    #[test]
    fn set_parses_lists_and_strings() {
        let cfg = load(
            None,
            &[
                "model.scn_kernels=[3, 3]".to_string(),
                "model.variant=\"full_attention\"".to_string(),
                "data.synth_kind=ar1".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.model.scn_kernels, vec![3, 3]);
        assert_eq!(
            cfg.model.variant,
            stransformer_core::AblationVariant::FullAttention
        );
        assert_eq!(cfg.data.synth_kind, "ar1");
    }

    #[test]
    fn run_id_depends_on_config() {
        let a = load(None, &[]).unwrap();
        let b = load(None, &["train.lr=0.001".to_string()]).unwrap();
        assert_ne!(a.run_id(), b.run_id());
        assert_eq!(a.run_id(), load(None, &[]).unwrap().run_id());
    }
}
