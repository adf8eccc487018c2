//! Synthetic timeline generator. Plants circle structure (geometric
//! frequency levels), relationship signs with safe label margins, and term
//! distributions, then emits timelines plus a truth file that downstream
//! tests use as the oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingestion::{
    serialize_timeline, EgoTimeline, InteractionKind, InteractionRecord, Sentiment,
};
use crate::signing::Sign;
use crate::topics::{self, StopwordSets, TermKind, Topic};
use crate::YEAR_SECONDS;

/// One planted circle level: target mean cumulative size and mean contact
/// frequency per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub cumulative: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub term: String,
    pub topic: String,
    #[serde(default = "default_weight")]
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationSpec {
    pub label: String,
    pub country: String,
    pub continent: String,
    #[serde(default = "default_weight")]
    pub weight: u32,
}

fn default_weight() -> u32 {
    1
}
fn default_sigma() -> f64 {
    0.1
}
fn default_neutral() -> f64 {
    0.4
}
fn default_window() -> f64 {
    2.0
}
fn default_filler() -> usize {
    2200
}
fn default_lang() -> String {
    "en".to_string()
}
/// 2020-01-01T00:00:00Z.
fn default_start() -> i64 {
    1_577_836_800
}

/// One synthetic dataset. Loaded from a `[[dataset]]` entry in a scenario
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub ego_count: usize,
    #[serde(rename = "level")]
    pub levels: Vec<LevelSpec>,
    /// Lognormal spread of alter frequencies around their level mean.
    #[serde(default = "default_sigma")]
    pub frequency_sigma: f64,
    /// Fraction of each level's relationships planted negative.
    pub negativity_by_level: Vec<f64>,
    /// Fraction of the full network contacted less than once a year.
    #[serde(default)]
    pub inactive_fraction: f64,
    #[serde(default)]
    pub inactive_negativity: f64,
    /// Fraction of non-negative labels emitted neutral.
    #[serde(default = "default_neutral")]
    pub neutral_fraction: f64,
    #[serde(default = "default_window")]
    pub window_years: f64,
    /// Noncommunicative posts spread evenly over the window; they satisfy
    /// the activity filters and pin every ego's observation window.
    #[serde(default = "default_filler")]
    pub filler_posts: usize,
    #[serde(default = "default_lang")]
    pub lang: String,
    #[serde(default, rename = "term")]
    pub terms: Vec<TermSpec>,
    #[serde(default, rename = "location")]
    pub locations: Vec<LocationSpec>,
    /// Strip inline labels and write them to a sidecar file instead.
    #[serde(default)]
    pub emit_sidecar: bool,
    /// Emit valence-bearing template text so lexicon scoring reproduces the
    /// planted labels.
    #[serde(default)]
    pub emit_valence_text: bool,
    #[serde(default = "default_start")]
    pub start_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetSpec>,
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ScenarioConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("scenario has no datasets".into()));
        }
        let mut names = BTreeSet::new();
        for spec in &self.datasets {
            spec.validate()?;
            if !names.insert(spec.name.clone()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate dataset name {}",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.name)));
        if self.name.is_empty() || self.name.contains(['/', '\\', '.']) {
            return Err(Error::InvalidConfig(format!(
                "dataset name {:?} must be a plain directory name",
                self.name
            )));
        }
        if self.ego_count == 0 {
            return bad("ego_count must be positive".into());
        }
        if self.levels.is_empty() {
            return bad("at least one level required".into());
        }
        if self.negativity_by_level.len() != self.levels.len() {
            return bad(format!(
                "negativity_by_level has {} entries for {} levels",
                self.negativity_by_level.len(),
                self.levels.len()
            ));
        }
        let mut prev_cum = 0.0;
        let mut prev_freq = f64::INFINITY;
        for (i, level) in self.levels.iter().enumerate() {
            if level.cumulative <= prev_cum {
                return bad(format!("cumulative sizes must strictly increase (level {i})"));
            }
            if level.frequency >= prev_freq {
                return bad(format!("frequencies must strictly decrease (level {i})"));
            }
            if level.frequency < 1.0 {
                return bad(format!(
                    "level {i} frequency {} is below 1/yr; circle alters must stay active",
                    level.frequency
                ));
            }
            prev_cum = level.cumulative;
            prev_freq = level.frequency;
        }
        for (i, q) in self.negativity_by_level.iter().enumerate() {
            if !(0.0..=1.0).contains(q) {
                return bad(format!("negativity_by_level[{i}] out of [0,1]"));
            }
        }
        if !(0.0..1.0).contains(&self.inactive_fraction) {
            return bad("inactive_fraction must be in [0,1)".into());
        }
        if !(0.0..=1.0).contains(&self.inactive_negativity) {
            return bad("inactive_negativity must be in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.neutral_fraction) {
            return bad("neutral_fraction must be in [0,1]".into());
        }
        if self.frequency_sigma < 0.0 {
            return bad("frequency_sigma must be nonnegative".into());
        }
        if self.window_years <= 0.0 {
            return bad("window_years must be positive".into());
        }
        if self.inactive_fraction > 0.0 && self.window_years <= 1.0 {
            return bad("inactive alters need window_years > 1".into());
        }
        if self.filler_posts == 1 {
            return bad("filler_posts must be 0 or at least 2".into());
        }
        for term in &self.terms {
            if term.weight == 0 {
                return bad(format!("term {} has zero weight", term.term));
            }
            if Topic::parse(&term.topic).is_none() {
                return bad(format!("term {} has unknown topic {}", term.term, term.topic));
            }
        }
        for location in &self.locations {
            if location.weight == 0 {
                return bad(format!("location {} has zero weight", location.label));
            }
        }
        // Adjacent levels must stay separable under the frequency noise:
        // the probability that a draw from the slower level exceeds a draw
        // from the faster one is capped at 1%.
        if self.frequency_sigma > 0.0 {
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            for i in 0..self.levels.len() - 1 {
                let ratio = self.levels[i].frequency / self.levels[i + 1].frequency;
                let p = normal.cdf(-ratio.ln() / (self.frequency_sigma * f64::sqrt(2.0)));
                if p > 0.01 {
                    return Err(Error::InfeasibleConfig(format!(
                        "{}: levels {} and {} would swap with probability {:.4} under sigma {}",
                        self.name,
                        i,
                        i + 1,
                        p,
                        self.frequency_sigma
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Planted truth for one relationship.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlterTruth {
    pub alter_id: String,
    /// Circle level index (0 = innermost); None for sub-annual alters.
    pub level: Option<usize>,
    /// Level mean frequency after lognormal noise, before quantization.
    pub target_frequency: f64,
    /// Annualized frequency the aggregation stage will observe.
    pub frequency: f64,
    pub interaction_count: u32,
    pub sign: Sign,
    pub labeled: u32,
    pub negative_labels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoTruth {
    pub ego_id: String,
    pub location: Option<String>,
    pub planted_circles: usize,
    pub cumulative_sizes: Vec<u32>,
    pub alters: Vec<AlterTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCount {
    pub term: String,
    pub count: u64,
}

/// Ground truth for one generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTruth {
    pub name: String,
    pub seed: u64,
    pub ego_count: usize,
    pub level_frequencies: Vec<f64>,
    /// Smallest log-gap between adjacent level frequencies.
    pub min_log_level_gap: f64,
    /// Relationships with frequency >= 1/yr over all relationships.
    pub active_fraction: f64,
    pub full_negativity_pct: f64,
    pub active_negativity_pct: f64,
    /// Pooled negativity of nested circles 1..=L by planted level.
    pub per_circle_negativity_pct: Vec<f64>,
    pub mean_cumulative_sizes: Vec<f64>,
    pub top_hashtags_full: Vec<TermCount>,
    pub top_hashtags_active: Vec<TermCount>,
    pub top_words_full: Vec<TermCount>,
    pub top_words_active: Vec<TermCount>,
    pub egos: Vec<EgoTruth>,
}

impl DatasetTruth {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::BadInputFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Sentiment labels for one ego keyed by record index after canonical
/// ordering, for sidecar emission.
pub type SidecarLabels = Vec<(usize, Sentiment)>;

fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Integer increments of the ramp floor(target * i): egos get sizes whose
/// running total tracks `target * ego_count` within one.
fn ramp_count(target: f64, i: usize) -> u32 {
    let hi = (target * (i as f64 + 1.0)).floor() as i64;
    let lo = (target * i as f64).floor() as i64;
    (hi - lo).max(0) as u32
}

fn ramp_base(target: f64, i: usize) -> u64 {
    (target * i as f64).floor().max(0.0) as u64
}

/// True when the ramp floor(fraction * g) increments at global ordinal `g`.
fn ramp_hit(fraction: f64, g: u64) -> bool {
    let hi = (fraction * (g as f64 + 1.0)).floor() as i64;
    let lo = (fraction * g as f64).floor() as i64;
    hi > lo
}

/// Mark `count` of the positions currently equal to `from` with `to`,
/// spread evenly.
fn mark_even(labels: &mut [Sentiment], from: Sentiment, to: Sentiment, count: u64) {
    let open: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == from)
        .map(|(i, _)| i)
        .collect();
    let n = open.len() as u64;
    if n == 0 || count == 0 {
        return;
    }
    let mut prev = 0u64;
    for (j, &idx) in open.iter().enumerate() {
        let cur = count * (j as u64 + 1) / n;
        if cur > prev {
            labels[idx] = to;
        }
        prev = cur;
    }
}

/// Label sequence for one relationship. Negative relationships carry
/// ceil(c/4) negative labels (25%), positive ones floor(c/10) (10%), leaving
/// a margin of at least 7 percentage points on either side of the 17%
/// threshold. Part of the remainder is emitted neutral.
pub fn relationship_labels(count: u32, sign: Sign, neutral_fraction: f64) -> Vec<Sentiment> {
    let c = count as u64;
    let negatives = match sign {
        Sign::Negative => c.div_ceil(4),
        _ => c / 10,
    };
    let mut labels = vec![Sentiment::Positive; count as usize];
    mark_even(&mut labels, Sentiment::Positive, Sentiment::Negative, negatives);
    let neutrals = (neutral_fraction * (c - negatives) as f64).round() as u64;
    mark_even(&mut labels, Sentiment::Positive, Sentiment::Neutral, neutrals);
    labels
}

const KIND_CYCLE: [InteractionKind; 3] = [
    InteractionKind::Reply,
    InteractionKind::Mention,
    InteractionKind::Quote,
];

struct TermWheel {
    expansion: Vec<usize>,
}

impl TermWheel {
    fn new(terms: &[TermSpec]) -> Self {
        let mut expansion = Vec::new();
        for (i, term) in terms.iter().enumerate() {
            expansion.extend(std::iter::repeat_n(i, term.weight as usize));
        }
        TermWheel { expansion }
    }

    fn pick<'a>(&self, terms: &'a [TermSpec], counter: usize) -> Option<&'a TermSpec> {
        if self.expansion.is_empty() {
            return None;
        }
        Some(&terms[self.expansion[counter % self.expansion.len()]])
    }
}

fn pick_location(spec: &DatasetSpec, ego_index: usize) -> Option<&LocationSpec> {
    if spec.locations.is_empty() {
        return None;
    }
    let total: usize = spec.locations.iter().map(|l| l.weight as usize).sum();
    let mut slot = ego_index % total;
    for location in &spec.locations {
        if slot < location.weight as usize {
            return Some(location);
        }
        slot -= location.weight as usize;
    }
    unreachable!("weights sum covers all slots")
}

fn generate_ego(spec: &DatasetSpec, ego_index: usize) -> (EgoTimeline, EgoTruth, SidecarLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, ego_index as u64));
    let ego_id = format!("e{ego_index:04}");
    let span_secs = (spec.window_years * YEAR_SECONDS).round() as i64;
    let start = spec.start_ts;
    let wheel = TermWheel::new(&spec.terms);
    let mut term_counter = 0usize;

    let ring_targets: Vec<f64> = spec
        .levels
        .iter()
        .enumerate()
        .map(|(l, level)| {
            let inner = if l == 0 { 0.0 } else { spec.levels[l - 1].cumulative };
            level.cumulative - inner
        })
        .collect();
    let rings: Vec<u32> = ring_targets
        .iter()
        .map(|&w| ramp_count(w, ego_index))
        .collect();
    let total_target = spec.levels.last().expect("validated nonempty").cumulative;
    let inactive_target = spec.inactive_fraction / (1.0 - spec.inactive_fraction) * total_target;
    let inactive_count = ramp_count(inactive_target, ego_index);

    let mut records = Vec::new();
    let mut alters = Vec::new();
    let mut alter_ordinal = 0usize;

    let emit_relationship = |records: &mut Vec<InteractionRecord>,
                             term_counter: &mut usize,
                             level: Option<usize>,
                             target_frequency: f64,
                             count: u32,
                             sign: Sign,
                             ordinal: usize|
     -> AlterTruth {
        let alter_id = format!("a{ordinal:04}");
        let labels = relationship_labels(count, sign, spec.neutral_fraction);
        let negative_labels = labels.iter().filter(|l| **l == Sentiment::Negative).count() as u32;
        let step = (span_secs / count as i64).max(1);
        for (j, label) in labels.iter().enumerate() {
            let term = wheel.pick(&spec.terms, *term_counter);
            *term_counter += 1;
            let text = term.map(|t| {
                if spec.emit_valence_text {
                    match label {
                        Sentiment::Negative => format!("awful {}", t.term),
                        Sentiment::Positive => format!("great {}", t.term),
                        Sentiment::Neutral => t.term.clone(),
                    }
                } else {
                    t.term.clone()
                }
            });
            let hashtags = term.map(|t| vec![t.term.clone()]).unwrap_or_default();
            records.push(InteractionRecord {
                ego_id: ego_id.clone(),
                alter_ids: vec![alter_id.clone()],
                ts: start + j as i64 * step,
                kind: KIND_CYCLE[(ordinal + j) % 3],
                text,
                lang: Some(spec.lang.clone()),
                sentiment: Some(*label),
                hashtags,
            });
        }
        AlterTruth {
            alter_id,
            level,
            target_frequency,
            frequency: 0.0,
            interaction_count: count,
            sign,
            labeled: count,
            negative_labels,
        }
    };

    for (l, &ring) in rings.iter().enumerate() {
        let base = ramp_base(ring_targets[l], ego_index);
        for m in 0..ring {
            let z: f64 = StandardNormal.sample(&mut rng);
            let target = spec.levels[l].frequency * (spec.frequency_sigma * z).exp();
            let count = ((target * spec.window_years).round() as u32).max(2);
            let negative = ramp_hit(spec.negativity_by_level[l], base + m as u64);
            let sign = if negative { Sign::Negative } else { Sign::Positive };
            let truth = emit_relationship(
                &mut records,
                &mut term_counter,
                Some(l),
                target,
                count,
                sign,
                alter_ordinal,
            );
            alters.push(truth);
            alter_ordinal += 1;
        }
    }
    let inactive_base = ramp_base(inactive_target, ego_index);
    for m in 0..inactive_count {
        let negative = ramp_hit(spec.inactive_negativity, inactive_base + m as u64);
        let sign = if negative { Sign::Negative } else { Sign::Positive };
        let truth = emit_relationship(
            &mut records,
            &mut term_counter,
            None,
            1.0 / spec.window_years,
            1,
            sign,
            alter_ordinal,
        );
        alters.push(truth);
        alter_ordinal += 1;
    }

    let mut noncommunicative_ts = Vec::with_capacity(spec.filler_posts);
    if spec.filler_posts >= 2 {
        let slots = spec.filler_posts as i64 - 1;
        for j in 0..spec.filler_posts as i64 {
            noncommunicative_ts.push(start + j * span_secs / slots);
        }
    }

    records.sort_by(|a, b| {
        a.ts.cmp(&b.ts)
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.alter_ids.cmp(&b.alter_ids))
            .then_with(|| a.text.cmp(&b.text))
    });
    let sidecar: SidecarLabels = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.sentiment.map(|s| (i, s)))
        .collect();
    if spec.emit_sidecar {
        for record in &mut records {
            record.sentiment = None;
        }
    }

    let last_comm = records.last().map(|r| r.ts).unwrap_or(start);
    let last_filler = noncommunicative_ts.last().copied().unwrap_or(start);
    let last_activity = last_comm.max(last_filler);
    // The aggregation stage divides by the span from each relationship's
    // first interaction (always the window start here) to the ego's last
    // activity, floored at one month.
    let duration_years = ((last_activity - start) as f64 / YEAR_SECONDS).max(1.0 / 12.0);
    for alter in &mut alters {
        alter.frequency = alter.interaction_count as f64 / duration_years;
    }

    let cumulative_sizes: Vec<u32> = rings
        .iter()
        .scan(0u32, |acc, &r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    let planted_circles = rings.iter().filter(|&&r| r > 0).count();

    let timeline = EgoTimeline {
        ego_id: ego_id.clone(),
        records,
        noncommunicative_ts,
        declared_location: pick_location(spec, ego_index).map(|l| l.label.clone()),
        first_activity: start,
        last_activity,
    };
    let truth = EgoTruth {
        ego_id,
        location: timeline.declared_location.clone(),
        planted_circles,
        cumulative_sizes,
        alters,
    };
    (timeline, truth, sidecar)
}

fn top20(tally: &BTreeMap<String, u64>, kind: TermKind) -> Vec<TermCount> {
    let (stats, _) = topics::top_k_terms(tally, kind, 20);
    stats
        .into_iter()
        .map(|s| TermCount {
            term: s.term,
            count: s.mentions,
        })
        .collect()
}

/// Generate every ego of one dataset. Returns the timelines in ego order,
/// the dataset truth, and per-ego sidecar labels.
pub fn generate_dataset(
    spec: &DatasetSpec,
) -> Result<(Vec<EgoTimeline>, DatasetTruth, Vec<(String, SidecarLabels)>)> {
    spec.validate()?;
    let mut egos: Vec<(EgoTimeline, EgoTruth, SidecarLabels)> = (0..spec.ego_count)
        .into_par_iter()
        .map(|i| generate_ego(spec, i))
        .collect();

    let mut hashtags_full = BTreeMap::new();
    let mut hashtags_active = BTreeMap::new();
    let mut words_full = BTreeMap::new();
    let mut words_active = BTreeMap::new();
    let stopwords = StopwordSets::default();
    let mut total_relationships = 0u64;
    let mut active_relationships = 0u64;
    let mut full_negative = 0u64;
    let mut active_negative = 0u64;
    let levels = spec.levels.len();
    let mut circle_sizes = vec![0u64; levels];
    let mut circle_negatives = vec![0u64; levels];
    let mut cumulative_sums = vec![0u64; levels];

    for (timeline, truth, _) in &egos {
        let active_ids: BTreeSet<&str> = truth
            .alters
            .iter()
            .filter(|a| a.frequency >= 1.0)
            .map(|a| a.alter_id.as_str())
            .collect();
        for record in &timeline.records {
            let active = record
                .alter_ids
                .iter()
                .any(|a| active_ids.contains(a.as_str()));
            topics::tally_hashtags(&record.hashtags, &mut hashtags_full);
            if active {
                topics::tally_hashtags(&record.hashtags, &mut hashtags_active);
            }
            if let Some(text) = &record.text {
                topics::tally_words(text, record.lang.as_deref(), &stopwords, &mut words_full);
                if active {
                    topics::tally_words(text, record.lang.as_deref(), &stopwords, &mut words_active);
                }
            }
        }
        for alter in &truth.alters {
            total_relationships += 1;
            let negative = alter.sign == Sign::Negative;
            if negative {
                full_negative += 1;
            }
            if alter.frequency >= 1.0 {
                active_relationships += 1;
                if negative {
                    active_negative += 1;
                }
            }
            if let Some(level) = alter.level {
                circle_sizes[level] += 1;
                if negative {
                    circle_negatives[level] += 1;
                }
            }
        }
        for (l, &cum) in truth.cumulative_sizes.iter().enumerate() {
            cumulative_sums[l] += cum as u64;
        }
    }

    let mut per_circle = Vec::with_capacity(levels);
    let mut neg_acc = 0u64;
    let mut size_acc = 0u64;
    for l in 0..levels {
        neg_acc += circle_negatives[l];
        size_acc += circle_sizes[l];
        per_circle.push(if size_acc == 0 {
            0.0
        } else {
            100.0 * neg_acc as f64 / size_acc as f64
        });
    }
    let min_log_level_gap = spec
        .levels
        .windows(2)
        .map(|w| (w[0].frequency / w[1].frequency).ln())
        .fold(f64::INFINITY, f64::min);

    let truth = DatasetTruth {
        name: spec.name.clone(),
        seed: spec.seed,
        ego_count: spec.ego_count,
        level_frequencies: spec.levels.iter().map(|l| l.frequency).collect(),
        min_log_level_gap,
        active_fraction: if total_relationships == 0 {
            0.0
        } else {
            active_relationships as f64 / total_relationships as f64
        },
        full_negativity_pct: if total_relationships == 0 {
            0.0
        } else {
            100.0 * full_negative as f64 / total_relationships as f64
        },
        active_negativity_pct: if active_relationships == 0 {
            0.0
        } else {
            100.0 * active_negative as f64 / active_relationships as f64
        },
        per_circle_negativity_pct: per_circle,
        mean_cumulative_sizes: cumulative_sums
            .iter()
            .map(|&s| s as f64 / spec.ego_count as f64)
            .collect(),
        top_hashtags_full: top20(&hashtags_full, TermKind::Hashtag),
        top_hashtags_active: top20(&hashtags_active, TermKind::Hashtag),
        top_words_full: top20(&words_full, TermKind::Word),
        top_words_active: top20(&words_active, TermKind::Word),
        egos: egos.iter().map(|(_, t, _)| t.clone()).collect(),
    };
    let sidecars = egos
        .iter_mut()
        .map(|(timeline, _, sidecar)| (timeline.ego_id.clone(), std::mem::take(sidecar)))
        .collect();
    Ok((egos.into_iter().map(|(t, _, _)| t).collect(), truth, sidecars))
}

/// Everything written for one dataset.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub name: String,
    pub dir: PathBuf,
    pub truth_path: PathBuf,
    pub sidecar_path: Option<PathBuf>,
    pub truth: DatasetTruth,
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Generate and write one dataset under `out_dir/<name>/`.
pub fn write_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<GeneratedDataset> {
    let (timelines, truth, sidecars) = generate_dataset(spec)?;
    let dir = out_dir.join(&spec.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for timeline in &timelines {
        let path = dir.join(format!("{}.jsonl", timeline.ego_id));
        let mut buffer = Vec::new();
        serialize_timeline(timeline, &mut buffer).map_err(|e| Error::io(&path, e))?;
        fs::write(&path, buffer).map_err(|e| Error::io(&path, e))?;
    }
    let truth_path = out_dir.join(format!("{}.truth.json", spec.name));
    let json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    write_file(&truth_path, &json)?;
    let sidecar_path = if spec.emit_sidecar {
        let path = out_dir.join(format!("{}.labels.csv", spec.name));
        let mut text = String::from("ego_id,interaction_index,label\n");
        for (ego_id, labels) in &sidecars {
            for (index, label) in labels {
                text.push_str(&format!("{ego_id},{index},{}\n", label.as_str()));
            }
        }
        write_file(&path, &text)?;
        Some(path)
    } else {
        None
    };
    Ok(GeneratedDataset {
        name: spec.name.clone(),
        dir,
        truth_path,
        sidecar_path,
        truth,
    })
}

/// Quote a CSV field when it would otherwise break the row apart.
fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

/// Generate every dataset of a scenario plus the shared input files: a
/// dataset manifest, a term-topic map, a location map, and (when template
/// text is on) a small valence lexicon.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<GeneratedDataset>> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut generated = Vec::new();
    for spec in &config.datasets {
        generated.push(write_dataset(spec, out_dir)?);
    }

    let mut manifest = String::from("[datasets]\n");
    for dataset in &generated {
        manifest.push_str(&format!("{} = \"{}\"\n", dataset.name, dataset.name));
    }
    write_file(&out_dir.join("datasets.toml"), &manifest)?;

    let mut labelmap: BTreeMap<String, String> = BTreeMap::new();
    for spec in &config.datasets {
        for term in &spec.terms {
            let canonical = topics::canonicalize(&term.term);
            if let Some(existing) = labelmap.get(&canonical) {
                if existing != &term.topic {
                    return Err(Error::InvalidConfig(format!(
                        "term {} mapped to both {existing} and {}",
                        term.term, term.topic
                    )));
                }
            }
            labelmap.insert(canonical, term.topic.clone());
        }
    }
    if !labelmap.is_empty() {
        let mut text = String::from("term,topic\n");
        for (term, topic) in &labelmap {
            text.push_str(&format!("{term},{}\n", csv_field(topic)));
        }
        write_file(&out_dir.join("labelmap.csv"), &text)?;
    }

    let mut locations: BTreeMap<String, (String, String)> = BTreeMap::new();
    for spec in &config.datasets {
        for location in &spec.locations {
            locations.insert(
                location.label.clone(),
                (location.country.clone(), location.continent.clone()),
            );
        }
    }
    if !locations.is_empty() {
        let mut text = String::from("location,country,continent\n");
        for (label, (country, continent)) in &locations {
            text.push_str(&format!(
                "{},{},{}\n",
                csv_field(label),
                csv_field(country),
                csv_field(continent)
            ));
        }
        write_file(&out_dir.join("locations_map.csv"), &text)?;
    }

    if config.datasets.iter().any(|s| s.emit_valence_text) {
        write_file(
            &out_dir.join("lexicon.csv"),
            "token,valence\nawful,-1.0\ngreat,1.0\n",
        )?;
    }
    Ok(generated)
}
