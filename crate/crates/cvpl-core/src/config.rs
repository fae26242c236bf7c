//! Experiment configuration: YAML file with `data`, `blocking`,
//! `vectorization`, `projection`, `similarity`, `thresholds`, `protection`,
//! `evaluation`, and `scalability` sections. Unknown keys are rejected;
//! omitted fields take the standard experiment defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::AttributeSchema;
use crate::linkage::{
    BlockKey, BlockingScheme, EncodingPlan, FitStrategy, Generalization, PipelineConfig, Similarity,
};
use crate::sim::SimConfig;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("config error at `{path}`: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsSection {
    pub level1: Vec<String>,
    pub level2: Vec<String>,
}

impl Default for RegionsSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self { level1: d.region_level1, level2: d.region_level2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_records: usize,
    pub seed: u64,
    pub outlier_fraction: Vec<f64>,
    pub age_distribution: String,
    pub age_mean: f64,
    pub age_std: f64,
    pub age_min: f64,
    pub age_max: f64,
    pub regions: RegionsSection,
    pub channels: Vec<String>,
    pub channel_weights: Vec<f64>,
    pub products: usize,
    pub product_distribution: String,
    pub product_alpha: f64,
    /// Base date t0, epoch seconds.
    pub base_date: i64,
    /// Mean response lag per channel, days.
    pub lag_mean_days: Vec<f64>,
    pub diurnal_profile: Vec<f64>,
    pub weekly_profile: Vec<f64>,
    pub time_noise_sd: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            n_records: d.n_records,
            seed: d.seed,
            outlier_fraction: vec![0.0, 0.01, 0.05],
            age_distribution: "truncated_normal".into(),
            age_mean: d.age_mean,
            age_std: d.age_std,
            age_min: d.age_min,
            age_max: d.age_max,
            regions: RegionsSection { level1: d.region_level1, level2: d.region_level2 },
            channels: d.channels,
            channel_weights: d.channel_weights,
            products: d.n_products,
            product_distribution: "zipf".into(),
            product_alpha: d.product_zipf_alpha,
            base_date: d.t0,
            lag_mean_days: d.lag_mean_days,
            diurnal_profile: d.diurnal_profile,
            weekly_profile: d.weekly_profile,
            time_noise_sd: d.time_noise_sd,
        }
    }
}

impl DataSection {
    /// Generator configuration for one run.
    pub fn sim_config(&self, seed: u64, outlier_fraction: f64) -> SimConfig {
        SimConfig {
            n_records: self.n_records,
            seed,
            age_mean: self.age_mean,
            age_std: self.age_std,
            age_min: self.age_min,
            age_max: self.age_max,
            region_level1: self.regions.level1.clone(),
            region_level2: self.regions.level2.clone(),
            channels: self.channels.clone(),
            channel_weights: self.channel_weights.clone(),
            n_products: self.products,
            product_zipf_alpha: self.product_alpha,
            t0: self.base_date,
            lag_mean_days: self.lag_mean_days.clone(),
            diurnal_profile: self.diurnal_profile.clone(),
            weekly_profile: self.weekly_profile.clone(),
            time_noise_sd: self.time_noise_sd,
            outlier_fraction,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BlockingSection {
    pub quasi_identifiers: Vec<String>,
    pub age_bin_width: u32,
    pub region_level: u8,
    /// Optional relaxation ladder: ordered key lists, each entry a scheme.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<Vec<String>>>,
}

impl Default for BlockingSection {
    fn default() -> Self {
        Self {
            quasi_identifiers: vec!["age_bin".into(), "region_level".into(), "gender".into()],
            age_bin_width: 10,
            region_level: 1,
            ladder: None,
        }
    }
}

impl BlockingSection {
    fn key_from_token(&self, token: &str) -> Result<BlockKey, ConfigError> {
        let (name, param) = match token.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (token, None),
        };
        let parse_u32 = |p: &str| {
            p.parse::<u32>().map_err(|_| invalid("blocking", format!("bad parameter in {token:?}")))
        };
        match name {
            "age_bin" => {
                let width = match param {
                    Some(p) => parse_u32(p)?,
                    None => self.age_bin_width,
                };
                Ok(BlockKey::new("age", Generalization::AgeBin(width)))
            }
            "region_level" => {
                let level = match param {
                    Some(p) => parse_u32(p)? as u8,
                    None => self.region_level,
                };
                Ok(BlockKey::new("region", Generalization::RegionLevel(level)))
            }
            "region_level1" => Ok(BlockKey::new("region", Generalization::RegionLevel(1))),
            "region_level2" => Ok(BlockKey::new("region", Generalization::RegionLevel(2))),
            other => Ok(BlockKey::new(other, Generalization::Identity)),
        }
    }

    fn scheme_from_tokens(&self, tokens: &[String]) -> Result<BlockingScheme, ConfigError> {
        let keys = tokens
            .iter()
            .map(|t| self.key_from_token(t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BlockingScheme::new(keys, &tokens.join("+")))
    }

    /// The configured single blocking scheme.
    pub fn scheme(&self) -> Result<BlockingScheme, ConfigError> {
        self.scheme_from_tokens(&self.quasi_identifiers)
    }

    /// The relaxation ladder: configured key lists, or the default four-step
    /// ladder (fine region, coarse region, no region, doubled age bins).
    pub fn ladder_schemes(&self) -> Result<Vec<BlockingScheme>, ConfigError> {
        match &self.ladder {
            Some(entries) => entries.iter().map(|ts| self.scheme_from_tokens(ts)).collect(),
            None => {
                let defaults: Vec<Vec<String>> = vec![
                    vec!["age_bin".into(), "gender".into(), "region_level:2".into()],
                    vec!["age_bin".into(), "gender".into(), "region_level:1".into()],
                    vec!["age_bin".into(), "gender".into()],
                    vec![format!("age_bin:{}", self.age_bin_width * 2), "gender".into()],
                ];
                defaults.iter().map(|ts| self.scheme_from_tokens(ts)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VectorizationSection {
    pub numeric: Vec<String>,
    pub categorical: Vec<String>,
    pub encoding: String,
    pub scaling: String,
}

impl Default for VectorizationSection {
    fn default() -> Self {
        Self {
            numeric: vec!["age".into(), "days_after_ad".into(), "hour".into(), "dow".into()],
            // Gender participates in the feature space alongside the listed
            // categoricals; it is a quasi-identifier the attacker observes.
            categorical: vec![
                "region".into(),
                "place".into(),
                "brand_product".into(),
                "channel".into(),
                "gender".into(),
            ],
            encoding: "one_hot".into(),
            scaling: "z_score".into(),
        }
    }
}

fn resolve_alias(name: &str) -> &str {
    match name {
        "place" => "purchase_place",
        "channel" => "ad_channel",
        "time" => "purchase_time",
        other => other,
    }
}

impl VectorizationSection {
    /// Encoding plan against a concrete schema. Derived feature names (hour,
    /// dow) imply their timestamp attribute.
    pub fn encoding_plan(&self, schema: &AttributeSchema) -> Result<EncodingPlan, ConfigError> {
        let mut include: Vec<String> = Vec::new();
        let mut push = |name: &str| {
            if !include.iter().any(|n| n == name) {
                include.push(name.to_string());
            }
        };
        for raw in self.numeric.iter().chain(&self.categorical) {
            let name = resolve_alias(raw);
            if name == "hour" || name == "dow" {
                // Derived from every timestamp attribute.
                for attr in schema.attrs() {
                    if attr.kind == crate::data::AttrKind::Timestamp {
                        push(&attr.name);
                    }
                }
                continue;
            }
            if schema.position(name).is_none() {
                return Err(invalid(
                    "vectorization",
                    format!("attribute {raw:?} not present in the schema"),
                ));
            }
            push(name);
        }
        // Keep schema order for deterministic column layout.
        let ordered: Vec<String> = schema
            .attrs()
            .iter()
            .filter(|a| include.iter().any(|n| n == &a.name))
            .map(|a| a.name.clone())
            .collect();
        Ok(EncodingPlan { include: Some(ordered) })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSection {
    pub method: String,
    pub variance_retained: f64,
    pub min_components: usize,
    pub max_components: usize,
    pub fit_on: String,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        Self {
            method: "pca".into(),
            variance_retained: 0.90,
            min_components: 3,
            max_components: 50,
            fit_on: "joint".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimilaritySection {
    pub metric: String,
}

impl Default for SimilaritySection {
    fn default() -> Self {
        Self { metric: "cosine".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdsSection {
    pub range: [f64; 2],
    pub step: f64,
    pub default: f64,
}

impl Default for ThresholdsSection {
    fn default() -> Self {
        Self { range: [0.70, 0.99], step: 0.01, default: 0.90 }
    }
}

impl ThresholdsSection {
    /// The sweep grid, inclusive of both endpoints.
    pub fn tau_grid(&self) -> Vec<f64> {
        let [lo, hi] = self.range;
        let n = ((hi - lo) / self.step).round() as usize;
        (0..=n).map(|i| ((lo + i as f64 * self.step) * 1e9).round() / 1e9).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseLevel {
    pub age: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseLevels {
    pub low: NoiseLevel,
    pub medium: NoiseLevel,
    pub high: NoiseLevel,
}

impl Default for NoiseLevel {
    fn default() -> Self {
        Self { age: 1.0, time: 3_600.0 }
    }
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            low: NoiseLevel { age: 1.0, time: 3_600.0 },
            medium: NoiseLevel { age: 3.0, time: 86_400.0 },
            high: NoiseLevel { age: 5.0, time: 604_800.0 },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProtectionSection {
    pub k_anonymity: Vec<usize>,
    pub noise_levels: NoiseLevels,
    /// Named correlation-retention presets.
    pub synthetic_correlation: BTreeMap<String, f64>,
    /// Correlation-retention sweep used by the grid.
    pub synthetic_grid: Vec<f64>,
}

impl Default for ProtectionSection {
    fn default() -> Self {
        let mut named = BTreeMap::new();
        named.insert("high".to_string(), 0.95);
        named.insert("medium".to_string(), 0.80);
        named.insert("low".to_string(), 0.60);
        Self {
            k_anonymity: vec![2, 3, 5, 7, 10, 15, 20, 30, 50],
            noise_levels: NoiseLevels::default(),
            synthetic_correlation: named,
            synthetic_grid: vec![0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.60],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub seeds: usize,
    pub bootstrap: usize,
    pub confidence_level: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { seeds: 5, bootstrap: 100, confidence_level: 0.95 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScalabilitySection {
    pub max_block_size: Option<usize>,
    /// Approximate-index keys are recognized but unsupported.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ann_threshold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ann_method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ann_nprobe: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub blocking: BlockingSection,
    pub vectorization: VectorizationSection,
    pub projection: ProjectionSection,
    pub similarity: SimilaritySection,
    pub thresholds: ThresholdsSection,
    pub protection: ProtectionSection,
    pub evaluation: EvaluationSection,
    pub scalability: ScalabilitySection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.data;
        if d.n_records == 0 {
            return Err(invalid("data.n_records", "must be positive"));
        }
        if d.age_distribution != "truncated_normal" {
            return Err(invalid("data.age_distribution", "only truncated_normal is supported"));
        }
        if d.product_distribution != "zipf" {
            return Err(invalid("data.product_distribution", "only zipf is supported"));
        }
        d.sim_config(d.seed, 0.0)
            .validate()
            .map_err(|e| invalid("data", e.to_string()))?;
        for &p in &d.outlier_fraction {
            if !(0.0..=0.5).contains(&p) {
                return Err(invalid("data.outlier_fraction", format!("{p} outside [0, 0.5]")));
            }
        }

        if self.blocking.age_bin_width == 0 {
            return Err(invalid("blocking.age_bin_width", "must be positive"));
        }
        if !(1..=2).contains(&self.blocking.region_level) {
            return Err(invalid("blocking.region_level", "must be 1 or 2"));
        }
        self.blocking.scheme()?;
        self.blocking.ladder_schemes()?;

        if self.vectorization.encoding != "one_hot" {
            return Err(invalid("vectorization.encoding", "only one_hot is supported"));
        }
        if self.vectorization.scaling != "z_score" {
            return Err(invalid("vectorization.scaling", "only z_score is supported"));
        }

        let p = &self.projection;
        if p.method != "pca" {
            return Err(invalid("projection.method", "only pca is supported"));
        }
        if !(0.0 < p.variance_retained && p.variance_retained <= 1.0) {
            return Err(invalid("projection.variance_retained", "must lie in (0, 1]"));
        }
        if p.min_components == 0 || p.min_components > p.max_components {
            return Err(invalid("projection.min_components", "need 1 <= min <= max"));
        }
        if FitStrategy::parse(&p.fit_on).is_none() {
            return Err(invalid("projection.fit_on", format!("unknown strategy {:?}", p.fit_on)));
        }

        if Similarity::parse(&self.similarity.metric).is_none() {
            return Err(invalid("similarity.metric", format!("unknown metric {:?}", self.similarity.metric)));
        }

        let t = &self.thresholds;
        if !(t.range[0] < t.range[1]) || t.step <= 0.0 {
            return Err(invalid("thresholds", "need range[0] < range[1] and step > 0"));
        }
        if !(t.range[0]..=t.range[1]).contains(&t.default) {
            return Err(invalid("thresholds.default", "must lie inside range"));
        }

        if self.protection.k_anonymity.iter().any(|&k| k == 0) {
            return Err(invalid("protection.k_anonymity", "k values must be positive"));
        }
        for (name, rho) in &self.protection.synthetic_correlation {
            if !(0.0..=1.0).contains(rho) {
                return Err(invalid(
                    "protection.synthetic_correlation",
                    format!("{name}: {rho} outside [0, 1]"),
                ));
            }
        }
        for rho in &self.protection.synthetic_grid {
            if !(0.0..=1.0).contains(rho) {
                return Err(invalid("protection.synthetic_grid", format!("{rho} outside [0, 1]")));
            }
        }

        let e = &self.evaluation;
        if e.seeds == 0 || e.bootstrap == 0 {
            return Err(invalid("evaluation", "seeds and bootstrap must be positive"));
        }
        if !(0.0 < e.confidence_level && e.confidence_level < 1.0) {
            return Err(invalid("evaluation.confidence_level", "must lie in (0, 1)"));
        }

        let s = &self.scalability;
        if s.ann_threshold.is_some() || s.ann_method.is_some() || s.ann_nprobe.is_some() {
            return Err(invalid(
                "scalability.ann_method",
                "approximate nearest-neighbor search is unsupported in this build",
            ));
        }
        if s.max_block_size == Some(0) {
            return Err(invalid("scalability.max_block_size", "must be positive when set"));
        }
        Ok(())
    }

    /// Pipeline configuration for one run with the given seed, resolved
    /// against the dataset schema.
    pub fn pipeline_config(
        &self,
        seed: u64,
        schema: &AttributeSchema,
    ) -> Result<PipelineConfig, ConfigError> {
        Ok(PipelineConfig {
            scheme: self.blocking.scheme()?,
            plan: self.vectorization.encoding_plan(schema)?,
            variance_retained: self.projection.variance_retained,
            min_components: self.projection.min_components,
            max_components: self.projection.max_components,
            strategy: FitStrategy::parse(&self.projection.fit_on)
                .ok_or_else(|| invalid("projection.fit_on", "unknown strategy"))?,
            similarity: Similarity::parse(&self.similarity.metric)
                .ok_or_else(|| invalid("similarity.metric", "unknown metric"))?,
            max_block_size: self.scalability.max_block_size.or(Some(5_000)),
            nonmatch_sample_size: 100,
            seed,
        })
    }

    /// Resolved configuration as a JSON value, for embedding into reports.
    pub fn resolved_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Load and validate a config file; a missing path yields pure defaults.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
            serde_yaml::from_str::<ExperimentConfig>(&text)?
        }
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::touchpoint_schema;

    #[test]
    fn defaults_validate_and_expose_standard_values() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.data.n_records, 10_000);
        assert_eq!(cfg.data.seed, 42);
        assert_eq!(cfg.projection.variance_retained, 0.90);
        assert_eq!(cfg.protection.k_anonymity, vec![2, 3, 5, 7, 10, 15, 20, 30, 50]);
        assert_eq!(cfg.evaluation.seeds, 5);
        assert_eq!(cfg.evaluation.bootstrap, 100);
        let grid = cfg.thresholds.tau_grid();
        assert_eq!(grid.len(), 30);
        assert_eq!(grid[0], 0.70);
        assert_eq!(*grid.last().unwrap(), 0.99);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let yaml = "data:\n  n_records: 100\n  bogus_key: 1\n";
        let err = serde_yaml::from_str::<ExperimentConfig>(yaml).unwrap_err();
        assert!(err.to_string().contains("bogus_key"));
    }

    #[test]
    fn ann_keys_are_recognized_but_rejected() {
        let yaml = "scalability:\n  max_block_size: 5000\n  ann_method: faiss\n";
        let cfg: ExperimentConfig = serde_yaml::from_str(yaml).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("unsupported in this build"));
    }

    #[test]
    fn default_scheme_matches_standard_blocking() {
        let cfg = ExperimentConfig::default();
        let scheme = cfg.blocking.scheme().unwrap();
        assert_eq!(scheme.keys.len(), 3);
        assert_eq!(scheme.keys[0], BlockKey::new("age", Generalization::AgeBin(10)));
        assert_eq!(scheme.keys[1], BlockKey::new("region", Generalization::RegionLevel(1)));
        assert_eq!(scheme.keys[2], BlockKey::new("gender", Generalization::Identity));
    }

    #[test]
    fn default_ladder_is_four_relaxation_steps() {
        let cfg = ExperimentConfig::default();
        let ladder = cfg.blocking.ladder_schemes().unwrap();
        assert_eq!(ladder.len(), 4);
        assert_eq!(ladder[0].keys[2], BlockKey::new("region", Generalization::RegionLevel(2)));
        assert_eq!(ladder[3].keys[0], BlockKey::new("age", Generalization::AgeBin(20)));
    }

    #[test]
    fn ladder_tokens_parse_with_parameters() {
        let yaml = "blocking:\n  ladder:\n    - [age_bin:5, gender]\n    - [age_bin:10, gender]\n";
        let cfg: ExperimentConfig = serde_yaml::from_str(yaml).unwrap();
        let ladder = cfg.blocking.ladder_schemes().unwrap();
        assert_eq!(ladder[0].keys[0], BlockKey::new("age", Generalization::AgeBin(5)));
        assert_eq!(ladder[1].keys[0], BlockKey::new("age", Generalization::AgeBin(10)));
    }

    #[test]
    fn encoding_plan_resolves_aliases_and_derived_features() {
        let cfg = ExperimentConfig::default();
        let plan = cfg.vectorization.encoding_plan(&touchpoint_schema()).unwrap();
        let include = plan.include.unwrap();
        assert!(include.contains(&"purchase_place".to_string()));
        assert!(include.contains(&"ad_channel".to_string()));
        assert!(include.contains(&"purchase_time".to_string()));
        assert!(include.contains(&"gender".to_string()));
        assert!(!include.contains(&"person_id".to_string()));
    }

    #[test]
    fn bad_threshold_default_is_rejected() {
        let yaml = "thresholds:\n  range: [0.7, 0.99]\n  step: 0.01\n  default: 0.5\n";
        let cfg: ExperimentConfig = serde_yaml::from_str(yaml).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_yaml_round_trip() {
        let cfg = ExperimentConfig::default();
        let yaml = serde_yaml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_yaml::from_str(&yaml).unwrap();
        assert_eq!(cfg, back);
    }
}
