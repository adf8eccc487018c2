//! Sentiment labeling through pluggable providers and relationship signing
//! via the negative-fraction threshold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circles::CircleStructure;
use crate::error::{Error, Result};
use crate::ingestion::{EgoTimeline, InteractionRecord, Sentiment};
use crate::topics::{canonicalize, word_tokens};

pub const DEFAULT_SIGN_THRESHOLD: f64 = 0.17;
pub const DEFAULT_LEXICON_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Unsigned,
}

/// One record presented for labeling: the ego it belongs to and the record's
/// position in that ego's deduplicated, time-sorted timeline.
pub struct LabelQuery<'a> {
    pub ego_id: &'a str,
    pub index: usize,
    pub record: &'a InteractionRecord,
}

/// A sentiment strategy. `label` returns `None` when the record cannot be
/// labeled (no text and no precomputed label); such records are excluded
/// from signing and surface in diagnostics. Implementations must be
/// deterministic and safe for concurrent use.
pub trait SentimentProvider: Send + Sync {
    fn name(&self) -> &str;
    fn label(&self, query: &LabelQuery) -> Option<Sentiment>;
}

/// Returns stored labels: the sidecar entry for (ego, index) when a sidecar
/// is loaded, otherwise the record's inline sentiment.
#[derive(Debug, Default)]
pub struct PrecomputedProvider {
    sidecar: Option<BTreeMap<(String, usize), Sentiment>>,
}

impl PrecomputedProvider {
    pub fn inline_only() -> Self {
        PrecomputedProvider { sidecar: None }
    }

    pub fn with_sidecar(sidecar: BTreeMap<(String, usize), Sentiment>) -> Self {
        PrecomputedProvider {
            sidecar: Some(sidecar),
        }
    }

    /// Load a sidecar CSV with header `ego_id,interaction_index,label`.
    pub fn from_sidecar_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::BadInputFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut sidecar = BTreeMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::BadInputFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let ego_id = row.get(0).unwrap_or_default().to_string();
            let index: usize = row
                .get(1)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| Error::BadInputFile {
                    path: path.to_path_buf(),
                    message: format!("ego {ego_id}: bad interaction index"),
                })?;
            let label = row
                .get(2)
                .and_then(|s| Sentiment::parse(s.trim()))
                .ok_or_else(|| Error::BadInputFile {
                    path: path.to_path_buf(),
                    message: format!("ego {ego_id}: bad label"),
                })?;
            sidecar.insert((ego_id, index), label);
        }
        Ok(Self::with_sidecar(sidecar))
    }
}

impl SentimentProvider for PrecomputedProvider {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn label(&self, query: &LabelQuery) -> Option<Sentiment> {
        if let Some(sidecar) = &self.sidecar {
            if let Some(&label) = sidecar.get(&(query.ego_id.to_string(), query.index)) {
                return Some(label);
            }
        }
        query.record.sentiment
    }
}

/// Sums per-token valences from a lexicon over the record's text. The
/// language-specific lexicon is chosen by the record's `lang`; records with
/// no language (or no lexicon for theirs) use the merged table. The sum is
/// compared against `tau`: above it positive, below its negation negative,
/// otherwise neutral.
#[derive(Debug, Default)]
pub struct LexiconProvider {
    by_lang: BTreeMap<String, BTreeMap<String, f64>>,
    merged: BTreeMap<String, f64>,
    tau: f64,
}

impl LexiconProvider {
    pub fn new(by_lang: BTreeMap<String, BTreeMap<String, f64>>, tau: f64) -> Self {
        let mut merged = BTreeMap::new();
        for table in by_lang.values() {
            for (token, &valence) in table {
                merged.entry(token.clone()).or_insert(valence);
            }
        }
        LexiconProvider {
            by_lang,
            merged,
            tau,
        }
    }

    /// Load every `<lang>.csv` under `dir`, each with header `token,valence`.
    /// A single CSV file path is also accepted and read as one merged table.
    pub fn from_path(path: &Path, tau: f64) -> Result<Self> {
        let mut by_lang = BTreeMap::new();
        if path.is_dir() {
            let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(path, e))?;
                let file = entry.path();
                if file.extension().and_then(|e| e.to_str()) != Some("csv") {
                    continue;
                }
                let lang = match file.file_stem().and_then(|s| s.to_str()) {
                    Some(l) => l.to_string(),
                    None => continue,
                };
                by_lang.insert(lang, Self::read_table(&file)?);
            }
        } else {
            by_lang.insert("und".to_string(), Self::read_table(path)?);
        }
        Ok(Self::new(by_lang, tau))
    }

    fn read_table(path: &Path) -> Result<BTreeMap<String, f64>> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::BadInputFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut table = BTreeMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::BadInputFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let token = canonicalize(row.get(0).unwrap_or_default());
            let valence: f64 = row
                .get(1)
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|_| Error::BadInputFile {
                    path: path.to_path_buf(),
                    message: format!("token {token}: bad valence"),
                })?;
            table.insert(token, valence);
        }
        Ok(table)
    }
}

impl SentimentProvider for LexiconProvider {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn label(&self, query: &LabelQuery) -> Option<Sentiment> {
        let text = query.record.text.as_deref()?;
        let table = query
            .record
            .lang
            .as_deref()
            .and_then(|l| self.by_lang.get(l))
            .unwrap_or(&self.merged);
        let mut sum = 0.0;
        for token in word_tokens(text) {
            let canonical = canonicalize(token);
            if let Some(valence) = table.get(&canonical) {
                sum += valence;
            }
        }
        Some(if sum > self.tau {
            Sentiment::Positive
        } else if sum < -self.tau {
            Sentiment::Negative
        } else {
            Sentiment::Neutral
        })
    }
}

/// Drift harness: wraps a base provider and relabels a seeded, deterministic
/// fraction of its neutral answers as negative. The decision depends only on
/// (seed, ego, index), never on thread interleaving.
pub struct ShiftedProvider {
    base: Box<dyn SentimentProvider>,
    probability: f64,
    seed: u64,
    name: String,
}

impl ShiftedProvider {
    pub fn new(base: Box<dyn SentimentProvider>, probability: f64, seed: u64) -> Self {
        let name = format!("shifted:{}", base.name());
        ShiftedProvider {
            base,
            probability,
            seed,
            name,
        }
    }

    fn flips(&self, ego_id: &str, index: usize) -> bool {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for byte in ego_id.as_bytes() {
            h = (h ^ *byte as u64).wrapping_mul(0x100_0000_01b3);
        }
        h = (h ^ index as u64).wrapping_mul(0x100_0000_01b3);
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.probability
    }
}

impl SentimentProvider for ShiftedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn label(&self, query: &LabelQuery) -> Option<Sentiment> {
        match self.base.label(query)? {
            Sentiment::Neutral if self.flips(query.ego_id, query.index) => {
                Some(Sentiment::Negative)
            }
            other => Some(other),
        }
    }
}

/// Resources a provider factory may draw on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub name: String,
    pub sidecar: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub tau: f64,
    /// Base provider name for the shifted wrapper.
    pub base: Option<String>,
    pub shift_probability: f64,
    pub shift_seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            name: String::new(),
            sidecar: None,
            lexicon: None,
            tau: DEFAULT_LEXICON_TAU,
            base: None,
            shift_probability: 0.25,
            shift_seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn named(name: &str) -> Self {
        ProviderConfig {
            name: name.to_string(),
            ..Default::default()
        }
    }
}

type ProviderFactory = Box<dyn Fn(&ProviderConfig) -> Result<Box<dyn SentimentProvider>>>;

/// Name-keyed provider registry. `builtin()` registers `precomputed`,
/// `lexicon`, and `shifted` (a wrapper over any registered base).
pub struct ProviderRegistry {
    factories: BTreeMap<String, ProviderFactory>,
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        ProviderRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut registry = Self::empty();
        registry.register("precomputed", |cfg| {
            Ok(Box::new(match &cfg.sidecar {
                Some(path) => PrecomputedProvider::from_sidecar_csv(path)?,
                None => PrecomputedProvider::inline_only(),
            }))
        });
        registry.register("lexicon", |cfg| {
            let path = cfg.lexicon.as_deref().ok_or_else(|| {
                Error::InvalidConfig("lexicon provider needs a lexicon file or directory".into())
            })?;
            let tau = if cfg.tau > 0.0 {
                cfg.tau
            } else {
                DEFAULT_LEXICON_TAU
            };
            Ok(Box::new(LexiconProvider::from_path(path, tau)?))
        });
        registry
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&ProviderConfig) -> Result<Box<dyn SentimentProvider>> + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.factories.keys().cloned().collect();
        names.push("shifted".to_string());
        names.sort();
        names
    }

    pub fn build(&self, config: &ProviderConfig) -> Result<Box<dyn SentimentProvider>> {
        if config.name == "shifted" {
            let base_name = config.base.clone().unwrap_or_else(|| "precomputed".into());
            let mut base_config = config.clone();
            base_config.name = base_name;
            let base = self.build(&base_config)?;
            return Ok(Box::new(ShiftedProvider::new(
                base,
                config.shift_probability,
                config.shift_seed,
            )));
        }
        match self.factories.get(&config.name) {
            Some(factory) => factory(config),
            None => Err(Error::UnknownStrategy {
                name: config.name.clone(),
                known: self.names(),
            }),
        }
    }
}

/// A relationship with its aggregated labels and resulting sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedRelationship {
    pub ego_id: String,
    pub alter_id: String,
    pub labeled_count: u32,
    pub negative_count: u32,
    pub sign: Sign,
    pub circle_index: Option<usize>,
}

/// Circles and signs joined for one ego. `relationships` covers the active
/// network (each entry carrying its smallest containing circle when the ego
/// has a circle structure); `full_relationships` covers every alter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedEgoNetwork {
    pub ego_id: String,
    pub circles: Option<CircleStructure>,
    pub relationships: Vec<SignedRelationship>,
    pub full_relationships: Vec<SignedRelationship>,
}

/// The threshold rule: negative when the negative share of labeled
/// interactions strictly exceeds `threshold`; the boundary itself stays
/// positive; no labels at all means no sign.
pub fn sign_relationship(negative_count: u32, labeled_count: u32, threshold: f64) -> Sign {
    if labeled_count == 0 {
        Sign::Unsigned
    } else if negative_count as f64 / labeled_count as f64 > threshold {
        Sign::Negative
    } else {
        Sign::Positive
    }
}

/// Per-relationship label tallies for one ego's timeline under a provider.
/// Returns (per-alter (labeled, negative) counts, unlabeled record count).
pub fn tally_labels(
    timeline: &EgoTimeline,
    provider: &dyn SentimentProvider,
) -> (BTreeMap<String, (u32, u32)>, usize) {
    let mut by_alter: BTreeMap<String, (u32, u32)> = BTreeMap::new();
    let mut unlabeled = 0usize;
    for (index, record) in timeline.records.iter().enumerate() {
        let query = LabelQuery {
            ego_id: &timeline.ego_id,
            index,
            record,
        };
        match provider.label(&query) {
            Some(label) => {
                for alter in &record.alter_ids {
                    let entry = by_alter.entry(alter.clone()).or_insert((0, 0));
                    entry.0 += 1;
                    if label == Sentiment::Negative {
                        entry.1 += 1;
                    }
                }
            }
            None => unlabeled += 1,
        }
    }
    (by_alter, unlabeled)
}

/// Sign a set of alters from label tallies. Alters missing from the tally
/// (no labeled interactions) come out unsigned.
pub fn sign_alters(
    ego_id: &str,
    alter_ids: impl IntoIterator<Item = String>,
    tallies: &BTreeMap<String, (u32, u32)>,
    threshold: f64,
) -> Vec<SignedRelationship> {
    alter_ids
        .into_iter()
        .map(|alter_id| {
            let &(labeled, negative) = tallies.get(&alter_id).unwrap_or(&(0, 0));
            SignedRelationship {
                ego_id: ego_id.to_string(),
                alter_id,
                labeled_count: labeled,
                negative_count: negative,
                sign: sign_relationship(negative, labeled, threshold),
                circle_index: None,
            }
        })
        .collect()
}

/// Attach circle indices to signed active relationships. Every signed
/// relationship must reference an alter present in the circle structure.
pub fn build_senm(
    circles: &CircleStructure,
    mut signed: Vec<SignedRelationship>,
) -> Result<Vec<SignedRelationship>> {
    for relationship in &mut signed {
        match circles.membership.get(&relationship.alter_id) {
            Some(&index) => relationship.circle_index = Some(index),
            None => {
                return Err(Error::AlterMismatch {
                    ego_id: relationship.ego_id.clone(),
                    alter_id: relationship.alter_id.clone(),
                })
            }
        }
    }
    Ok(signed)
}
