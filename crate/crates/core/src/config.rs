//! Training configuration: TOML file, dotted `key=value` overrides, echo and
//! content hash.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::AdamConfig;
use crate::data::SplitSpec;
use crate::error::{JstnError, Result};
use crate::losses::LossWeights;

/// Which source domains take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSelection {
    #[default]
    Both,
    SnOnly,
    SiOnly,
}

impl SourceSelection {
    pub fn uses_sn(self) -> bool {
        self != SourceSelection::SiOnly
    }

    pub fn uses_si(self) -> bool {
        self != SourceSelection::SnOnly
    }
}

/// Switches for components that are not simply a zero coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSwitches {
    /// Accept every classifier pseudo-label without the geometric check.
    pub no_plr: bool,
    /// Fix both source weights to 1.
    pub no_weighting: bool,
    pub sources: SourceSelection,
}

/// Labelled:unlabelled split of the target domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub labeled: usize,
    pub unlabeled: usize,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { labeled: 1, unlabeled: 10, stratified: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
    pub t1: f64,
    pub t2: f64,
    pub d_c: usize,
    pub hidden: usize,
    pub slope: f64,
    pub r: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Rows per domain per step; 0 trains full-batch.
    pub batch_size: usize,
    /// Epoch interval between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Divide class sums by the domain size instead of the class size when
    /// forming centroids.
    pub literal_normalization: bool,
    /// Report pseudo-label precision and interim accuracy against the
    /// held-out target labels. Evaluation only; never feeds training.
    pub monitor_target: bool,
    pub adam: AdamConfig,
    pub split: SplitConfig,
    pub ablation: AblationSwitches,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.004,
            lambda: 0.001,
            gamma: 0.1,
            eta: 0.001,
            t1: 10.0,
            t2: 5.0,
            d_c: 3,
            hidden: 128,
            slope: 0.01,
            r: 3,
            epochs: 1000,
            seed: 0,
            batch_size: 0,
            checkpoint_every: 100,
            literal_normalization: false,
            monitor_target: false,
            adam: AdamConfig::default(),
            split: SplitConfig::default(),
            ablation: AblationSwitches::default(),
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights { beta: self.beta, lambda: self.lambda, gamma: self.gamma, eta: self.eta }
    }

    /// Target split drawn with the run seed.
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            labeled: self.split.labeled,
            unlabeled: self.split.unlabeled,
            stratified: self.split.stratified,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("eta", self.eta),
            ("adam.lr", self.adam.lr),
            ("adam.eps", self.adam.eps),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(JstnError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.alpha > 1.0 {
            return Err(JstnError::Config(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        for (name, v) in [("t1", self.t1), ("t2", self.t2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(JstnError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [("adam.beta1", self.adam.beta1), ("adam.beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(JstnError::Config(format!("{name} must lie in [0,1), got {v}")));
            }
        }
        for (name, v) in [("d_c", self.d_c), ("hidden", self.hidden), ("r", self.r)] {
            if v == 0 {
                return Err(JstnError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(JstnError::Config(format!("slope must lie in (0,1), got {}", self.slope)));
        }
        if self.split.labeled == 0 || self.split.unlabeled == 0 {
            return Err(JstnError::Config("split ratio terms must be positive".into()));
        }
        Ok(())
    }

    /// Parses a TOML document, applies `key=value` overrides, validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| JstnError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| JstnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| JstnError::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Full effective configuration as TOML. Parses back to an equal value.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`TrainConfig::echo`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.echo().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Sets a dotted key in `table`. The value is parsed as a TOML value, falling
/// back to a bare string (`ablation.sources=sn_only`).
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| JstnError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(JstnError::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| JstnError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.alpha, c.beta, c.lambda, c.gamma, c.eta, c.t1, c.t2),
            (0.1, 0.004, 0.001, 0.1, 0.001, 10.0, 5.0)
        );
        assert_eq!((c.d_c, c.epochs, c.r, c.hidden), (3, 1000, 3, 128));
        assert_eq!(c.adam.lr, 1e-3);
        c.validate().unwrap();
    }

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(TrainConfig::from_toml_with_overrides("", &[]).unwrap(), TrainConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = TrainConfig::default();
        c.alpha = 0.25;
        c.ablation.sources = SourceSelection::SiOnly;
        c.adam.lr = 3e-4;
        let back = TrainConfig::from_toml_with_overrides(&c.echo(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn overrides_apply_after_file() {
        let text = "alpha = 0.3\n[adam]\nlr = 0.01\n";
        let c = TrainConfig::from_toml_with_overrides(
            text,
            &[
                "alpha=0".into(),
                "adam.beta1=0.5".into(),
                "ablation.sources=sn_only".into(),
                "ablation.no_plr=true".into(),
                "epochs = 7".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.alpha, 0.0);
        assert_eq!(c.adam.lr, 0.01);
        assert_eq!(c.adam.beta1, 0.5);
        assert_eq!(c.ablation.sources, SourceSelection::SnOnly);
        assert!(c.ablation.no_plr);
        assert_eq!(c.epochs, 7);
        assert_ne!(c.hash(), TrainConfig::default().hash());
    }

    #[test]
    fn integer_literal_accepted_for_float_field() {
        let c = TrainConfig::from_toml_with_overrides("", &["gamma=1".into()]).unwrap();
        assert_eq!(c.gamma, 1.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for bad in ["alhpa=0.1", "alpha=1.5", "t1=0.0", "beta=-0.1", "adam.beta1=1.0", "r=0", "noequals"] {
            let err = TrainConfig::from_toml_with_overrides("", &[bad.into()]).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{bad}: {err}");
        }
        let err = TrainConfig::from_toml_with_overrides("alpha = [", &[]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn dotted_key_through_scalar_is_rejected() {
        let err = TrainConfig::from_toml_with_overrides("", &["alpha.x=1".into(), "alpha.y=2".into()]);
        assert!(err.is_err());
    }
}
