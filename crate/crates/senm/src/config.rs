//! Run configuration for the staged pipeline: one TOML file covering every
//! stage's knobs, with paths resolved relative to the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circles::CircleParams;
use crate::error::{Error, Result};
use crate::preprocessing::{ActivityThresholds, ClassifierConfig};
use crate::signing::{ProviderConfig, DEFAULT_SIGN_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    /// Circle count the per-circle tables condition on.
    pub circles_filter: usize,
    /// Average per-ego percentages instead of pooling counts.
    pub per_ego_averaging: bool,
    /// CSV mapping declared location -> country, continent.
    pub location_map: Option<PathBuf>,
    /// Countries with fewer egos than this are folded out of the country
    /// table; the continent table is never filtered.
    pub min_country_egos: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            circles_filter: 5,
            per_ego_averaging: false,
            location_map: None,
            min_country_egos: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsOptions {
    /// Directory of per-language stopword lists.
    pub stopword_dir: Option<PathBuf>,
    /// CSV mapping term -> topic.
    pub labelmap: Option<PathBuf>,
    pub top_k: usize,
}

impl Default for TopicsOptions {
    fn default() -> Self {
        TopicsOptions {
            stopword_dir: None,
            labelmap: None,
            top_k: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub thresholds: ActivityThresholds,
    pub classifier: ClassifierConfig,
    pub provider: ProviderConfig,
    /// Negative-share above which a relationship is negative.
    pub sign_threshold: f64,
    pub circles: CircleParams,
    pub analysis: AnalysisOptions,
    pub topics: TopicsOptions,
    pub seed: u64,
    /// Second provider for the side-by-side negativity comparison.
    pub drift_provider: Option<ProviderConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            thresholds: ActivityThresholds::default(),
            classifier: ClassifierConfig {
                name: "heuristic".to_string(),
                ..Default::default()
            },
            provider: ProviderConfig::named("precomputed"),
            sign_threshold: DEFAULT_SIGN_THRESHOLD,
            circles: CircleParams::default(),
            analysis: AnalysisOptions::default(),
            topics: TopicsOptions::default(),
            seed: 0,
            drift_provider: None,
        }
    }
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&p);
        }
    }
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.classifier.labels_file);
        resolve(base, &mut config.provider.sidecar);
        resolve(base, &mut config.provider.lexicon);
        if let Some(drift) = &mut config.drift_provider {
            resolve(base, &mut drift.sidecar);
            resolve(base, &mut drift.lexicon);
        }
        resolve(base, &mut config.analysis.location_map);
        resolve(base, &mut config.topics.stopword_dir);
        resolve(base, &mut config.topics.labelmap);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sign_threshold) {
            return Err(Error::InvalidConfig(format!(
                "sign_threshold {} out of [0,1)",
                self.sign_threshold
            )));
        }
        if !(0.0 < self.circles.bandwidth_quantile && self.circles.bandwidth_quantile <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth_quantile {} out of (0,1]",
                self.circles.bandwidth_quantile
            )));
        }
        if self.circles.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.analysis.circles_filter == 0 {
            return Err(Error::InvalidConfig("circles_filter must be positive".into()));
        }
        if self.topics.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be positive".into()));
        }
        if self.thresholds.active_min_frequency < 0.0 {
            return Err(Error::InvalidConfig(
                "active_min_frequency must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Referenced files are checked by the stage that consumes them, so the
/// failure carries the right stage name.
pub fn require_file(label: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{label} {} does not exist",
            path.display()
        )))
    }
}
