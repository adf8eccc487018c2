//! Ego and alter filtering: drop non-person egos, drop egos that were not
//! active enough for their circles to be meaningful, and split each ego's
//! alters into the full and active networks.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::EgoTimeline;
use crate::{DAY_SECONDS, YEAR_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EgoClass {
    Person,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    TooFewTweets,
    TooShortSpan,
    TooSparseMonths,
    NotPerson,
}

/// Outcome of the keep/drop decision for one ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityVerdict {
    pub ego_id: String,
    pub kept: bool,
    pub reasons: Vec<DropReason>,
}

impl ActivityVerdict {
    fn from_reasons(ego_id: &str, reasons: Vec<DropReason>) -> Self {
        ActivityVerdict {
            ego_id: ego_id.to_string(),
            kept: reasons.is_empty(),
            reasons,
        }
    }
}

/// Per-alter interaction summary for one ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipAggregate {
    pub ego_id: String,
    pub alter_id: String,
    pub interaction_count: u32,
    pub first_ts: i64,
    pub last_ts: i64,
    pub annualized_frequency: f64,
    pub text_interactions: u32,
}

/// Activity thresholds; defaults are the published filter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityThresholds {
    pub min_total_posts: usize,
    pub min_span_days: f64,
    pub min_posts_per_month: usize,
    pub max_sparse_month_fraction: f64,
    pub active_min_frequency: f64,
}

impl Default for ActivityThresholds {
    fn default() -> Self {
        ActivityThresholds {
            min_total_posts: 2000,
            min_span_days: 182.0,
            min_posts_per_month: 10,
            max_sparse_month_fraction: 0.5,
            active_min_frequency: 1.0,
        }
    }
}

/// Pluggable person/other decision. Implementations must be deterministic
/// and safe to call concurrently.
pub trait EgoClassifier: Send + Sync {
    fn name(&self) -> &'static str;
    fn classify(&self, timeline: &EgoTimeline) -> Result<EgoClass>;
}

/// Baseline heuristic: an account posting faster than `max_posts_per_day` or
/// almost never addressing anyone (`interaction-to-post ratio below
/// `min_interaction_ratio`) is not treated as a person.
#[derive(Debug, Clone)]
pub struct HeuristicClassifier {
    pub max_posts_per_day: f64,
    pub min_interaction_ratio: f64,
}

impl Default for HeuristicClassifier {
    fn default() -> Self {
        HeuristicClassifier {
            max_posts_per_day: 72.0,
            min_interaction_ratio: 0.01,
        }
    }
}

impl EgoClassifier for HeuristicClassifier {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn classify(&self, timeline: &EgoTimeline) -> Result<EgoClass> {
        let span_days =
            ((timeline.last_activity - timeline.first_activity) as f64 / DAY_SECONDS).max(1.0);
        let total = timeline.total_posts() as f64;
        let rate = total / span_days;
        let ratio = if total > 0.0 {
            timeline.records.len() as f64 / total
        } else {
            0.0
        };
        if rate > self.max_posts_per_day || ratio < self.min_interaction_ratio {
            Ok(EgoClass::Other)
        } else {
            Ok(EgoClass::Person)
        }
    }
}

/// Classifier backed by an external labels file. Every ego under evaluation
/// must appear in the file.
#[derive(Debug, Clone, Default)]
pub struct ExternalLabelClassifier {
    labels: BTreeMap<String, EgoClass>,
}

impl ExternalLabelClassifier {
    pub fn new(labels: BTreeMap<String, EgoClass>) -> Self {
        ExternalLabelClassifier { labels }
    }

    /// Load from CSV with header `ego_id,label`, label one of
    /// `person`/`other`.
    pub fn from_csv(path: &std::path::Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::BadInputFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut labels = BTreeMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::BadInputFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let ego_id = row.get(0).unwrap_or_default().to_string();
            let label = match row.get(1).map(str::trim) {
                Some("person") => EgoClass::Person,
                Some("other") => EgoClass::Other,
                other => {
                    return Err(Error::BadInputFile {
                        path: path.to_path_buf(),
                        message: format!("ego {ego_id}: bad label {other:?}"),
                    })
                }
            };
            labels.insert(ego_id, label);
        }
        Ok(ExternalLabelClassifier { labels })
    }
}

impl EgoClassifier for ExternalLabelClassifier {
    fn name(&self) -> &'static str {
        "external"
    }

    fn classify(&self, timeline: &EgoTimeline) -> Result<EgoClass> {
        self.labels
            .get(&timeline.ego_id)
            .copied()
            .ok_or_else(|| Error::ClassifierUnavailable(timeline.ego_id.clone()))
    }
}

/// Name-keyed classifier registry. `builtin()` registers the heuristic and
/// external-labels strategies; callers may add their own.
pub struct ClassifierRegistry {
    factories: BTreeMap<String, Box<dyn Fn(&ClassifierConfig) -> Result<Box<dyn EgoClassifier>>>>,
}

/// Settings consumed by classifier factories.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub name: String,
    pub max_posts_per_day: Option<f64>,
    pub min_interaction_ratio: Option<f64>,
    pub labels_file: Option<std::path::PathBuf>,
}

impl ClassifierRegistry {
    pub fn empty() -> Self {
        ClassifierRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut registry = Self::empty();
        registry.register("heuristic", |cfg| {
            let defaults = HeuristicClassifier::default();
            Ok(Box::new(HeuristicClassifier {
                max_posts_per_day: cfg.max_posts_per_day.unwrap_or(defaults.max_posts_per_day),
                min_interaction_ratio: cfg
                    .min_interaction_ratio
                    .unwrap_or(defaults.min_interaction_ratio),
            }))
        });
        registry.register("external", |cfg| {
            let path = cfg.labels_file.as_deref().ok_or_else(|| {
                Error::InvalidConfig("external classifier needs a labels file".into())
            })?;
            Ok(Box::new(ExternalLabelClassifier::from_csv(path)?))
        });
        registry
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&ClassifierConfig) -> Result<Box<dyn EgoClassifier>> + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn build(&self, config: &ClassifierConfig) -> Result<Box<dyn EgoClassifier>> {
        match self.factories.get(&config.name) {
            Some(factory) => factory(config),
            None => Err(Error::UnknownStrategy {
                name: config.name.clone(),
                known: self.names(),
            }),
        }
    }
}

fn month_index(ts: i64) -> i64 {
    let dt = DateTime::from_timestamp(ts, 0).expect("timestamp within datetime range");
    dt.year() as i64 * 12 + (dt.month0() as i64)
}

/// Activity-only verdict: enough posts, long enough span, and dense enough
/// months. Calendar months are bucketed in UTC over every post the ego made,
/// communicative or not; months inside the span with no posts at all count
/// as sparse.
pub fn check_activity(timeline: &EgoTimeline, thresholds: &ActivityThresholds) -> ActivityVerdict {
    let mut reasons = Vec::new();
    if timeline.total_posts() < thresholds.min_total_posts {
        reasons.push(DropReason::TooFewTweets);
    }
    let span_days = (timeline.last_activity - timeline.first_activity) as f64 / DAY_SECONDS;
    if span_days < thresholds.min_span_days {
        reasons.push(DropReason::TooShortSpan);
    }

    let first_month = month_index(timeline.first_activity);
    let last_month = month_index(timeline.last_activity);
    let total_months = (last_month - first_month + 1) as usize;
    let mut per_month: BTreeMap<i64, usize> = BTreeMap::new();
    for ts in timeline.all_post_timestamps() {
        *per_month.entry(month_index(ts)).or_insert(0) += 1;
    }
    let sparse = (first_month..=last_month)
        .filter(|m| per_month.get(m).copied().unwrap_or(0) < thresholds.min_posts_per_month)
        .count();
    if sparse as f64 / total_months as f64 > thresholds.max_sparse_month_fraction {
        reasons.push(DropReason::TooSparseMonths);
    }

    ActivityVerdict::from_reasons(&timeline.ego_id, reasons)
}

/// Combined verdict: classification plus activity checks.
pub fn evaluate_ego(
    timeline: &EgoTimeline,
    classifier: &dyn EgoClassifier,
    thresholds: &ActivityThresholds,
) -> Result<ActivityVerdict> {
    let mut verdict = check_activity(timeline, thresholds);
    if classifier.classify(timeline)? == EgoClass::Other {
        verdict.reasons.push(DropReason::NotPerson);
        verdict.kept = false;
    }
    Ok(verdict)
}

/// One aggregate per distinct alter. A record with several addressees counts
/// one interaction toward each of them. Frequency is annualized over the
/// window from the relationship's first interaction to the ego's last
/// activity, floored at one month.
pub fn aggregate_relationships(timeline: &EgoTimeline) -> Vec<RelationshipAggregate> {
    struct Acc {
        count: u32,
        first_ts: i64,
        last_ts: i64,
        text: u32,
    }
    let mut by_alter: BTreeMap<&str, Acc> = BTreeMap::new();
    for record in &timeline.records {
        let has_text = record.text.is_some();
        for alter in &record.alter_ids {
            let acc = by_alter.entry(alter.as_str()).or_insert(Acc {
                count: 0,
                first_ts: record.ts,
                last_ts: record.ts,
                text: 0,
            });
            acc.count += 1;
            acc.first_ts = acc.first_ts.min(record.ts);
            acc.last_ts = acc.last_ts.max(record.ts);
            if has_text {
                acc.text += 1;
            }
        }
    }

    by_alter
        .into_iter()
        .map(|(alter_id, acc)| {
            let duration_years =
                (timeline.last_activity - acc.first_ts) as f64 / YEAR_SECONDS;
            let frequency = acc.count as f64 / duration_years.max(1.0 / 12.0);
            RelationshipAggregate {
                ego_id: timeline.ego_id.clone(),
                alter_id: alter_id.to_string(),
                interaction_count: acc.count,
                first_ts: acc.first_ts,
                last_ts: acc.last_ts,
                annualized_frequency: frequency,
                text_interactions: acc.text,
            }
        })
        .collect()
}

/// Full network (every alter) and active network (alters contacted at least
/// `active_min_frequency` times a year, boundary included).
pub fn split_full_active(
    aggregates: Vec<RelationshipAggregate>,
    active_min_frequency: f64,
) -> (Vec<RelationshipAggregate>, Vec<RelationshipAggregate>) {
    let active = aggregates
        .iter()
        .filter(|a| a.annualized_frequency >= active_min_frequency)
        .cloned()
        .collect();
    (aggregates, active)
}
