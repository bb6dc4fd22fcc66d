use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::DEFAULT_EXPANSION_CAP;
use crate::structure::{DEFAULT_EXACT_LIMIT, DEFAULT_MIN_RANGE, DEFAULT_MIN_RUN};

use super::{DetectorKind, RiskDegree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzerConfig {
    pub fixed_number_allowlist: Vec<f64>,
    pub jealousy_min_refs: usize,
    pub jealousy_fraction: f64,
    pub multi_function_threshold: usize,
    pub many_ref_groups_threshold: usize,
    pub long_chain_threshold: usize,
    pub copy_block_min_cells: u64,
    pub degree_overrides: BTreeMap<DetectorKind, RiskDegree>,
    /// Sheet score at or above which a sheet is red.
    pub red_score: f64,
    /// Sheet score at or above which a sheet is at least orange.
    pub orange_score: f64,
    pub min_run: usize,
    pub min_range: u64,
    pub expansion_cap: u64,
    pub exact_rectangle_limit: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            fixed_number_allowlist: vec![0.0, 1.0, -1.0],
            jealousy_min_refs: 4,
            jealousy_fraction: 0.5,
            multi_function_threshold: 4,
            many_ref_groups_threshold: 8,
            long_chain_threshold: 8,
            copy_block_min_cells: 6,
            degree_overrides: BTreeMap::new(),
            red_score: 0.5,
            orange_score: 0.1,
            min_run: DEFAULT_MIN_RUN,
            min_range: DEFAULT_MIN_RANGE,
            expansion_cap: DEFAULT_EXPANSION_CAP,
            exact_rectangle_limit: DEFAULT_EXACT_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("jealousy_min_refs", self.jealousy_min_refs as u64),
            ("multi_function_threshold", self.multi_function_threshold as u64),
            ("many_ref_groups_threshold", self.many_ref_groups_threshold as u64),
            ("long_chain_threshold", self.long_chain_threshold as u64),
            ("copy_block_min_cells", self.copy_block_min_cells),
            ("min_run", self.min_run as u64),
            ("min_range", self.min_range),
            ("expansion_cap", self.expansion_cap),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("jealousy_fraction", self.jealousy_fraction),
            ("red_score", self.red_score),
            ("orange_score", self.orange_score),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ConfigError::Invalid(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.orange_score > self.red_score {
            return Err(ConfigError::Invalid("orange_score must not exceed red_score".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: AnalyzerConfig = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value`. The value is read as JSON when it parses as
    /// JSON, else as a string; lists may also be written `a,b,c`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let obj = doc.as_object_mut().expect("config is an object");
        if !obj.contains_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        let parsed = serde_json::from_str::<serde_json::Value>(value).unwrap_or_else(|_| {
            if obj[key].is_array() {
                serde_json::Value::Array(
                    value
                        .split(',')
                        .map(|p| {
                            serde_json::from_str(p.trim()).unwrap_or_else(|_| serde_json::Value::String(p.trim().into()))
                        })
                        .collect(),
                )
            } else {
                serde_json::Value::String(value.to_string())
            }
        });
        obj.insert(key.to_string(), parsed);
        let cfg: AnalyzerConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Invalid(format!("{key}: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
