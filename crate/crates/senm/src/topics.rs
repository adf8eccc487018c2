//! Term normalization and ranking, topic labels, and the correlation between
//! topic features and dataset negativity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Hashtag,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    Political,
    Covid,
    Climate,
    Religious,
    News,
    General,
}

impl Topic {
    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Political => "political",
            Topic::Covid => "covid",
            Topic::Climate => "climate",
            Topic::Religious => "religious",
            Topic::News => "news",
            Topic::General => "general",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "political" => Some(Topic::Political),
            "covid" => Some(Topic::Covid),
            "climate" => Some(Topic::Climate),
            "religious" => Some(Topic::Religious),
            "news" => Some(Topic::News),
            "general" => Some(Topic::General),
            _ => None,
        }
    }

    pub const ALL: [Topic; 6] = [
        Topic::Political,
        Topic::Covid,
        Topic::Climate,
        Topic::Religious,
        Topic::News,
        Topic::General,
    ];
}

/// One ranked term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStats {
    pub term: String,
    pub kind: TermKind,
    pub mentions: u64,
    pub rank: usize,
    pub topic: Option<Topic>,
}

/// Stopword lists keyed by language tag, with a merged fallback used when a
/// record has no language.
#[derive(Debug, Clone, Default)]
pub struct StopwordSets {
    by_lang: BTreeMap<String, BTreeSet<String>>,
    merged: BTreeSet<String>,
}

impl StopwordSets {
    pub fn new(by_lang: BTreeMap<String, BTreeSet<String>>) -> Self {
        let merged = by_lang.values().flatten().cloned().collect();
        StopwordSets { by_lang, merged }
    }

    /// Load every `<lang>.txt` under `dir`: one stopword per line, already
    /// in canonical form (or canonicalized here as a safety net).
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut by_lang = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let lang = match path.file_stem().and_then(|s| s.to_str()) {
                Some(l) => l.to_string(),
                None => continue,
            };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let words: BTreeSet<String> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(canonicalize)
                .filter(|w| !w.is_empty())
                .collect();
            by_lang.insert(lang, words);
        }
        Ok(Self::new(by_lang))
    }

    pub fn contains(&self, word: &str, lang: Option<&str>) -> bool {
        match lang.and_then(|l| self.by_lang.get(l)) {
            Some(set) => set.contains(word),
            None => self.merged.contains(word),
        }
    }
}

/// Lowercase, strip diacritics (canonical decomposition, combining marks
/// dropped), drop everything that is not alphanumeric.
pub fn canonicalize(token: &str) -> String {
    token
        .to_lowercase()
        .nfd()
        .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
        .filter(|c| c.is_alphanumeric())
        .collect()
}

/// Canonicalize a term and decide whether it survives: words of 4 or fewer
/// letters and stopwords are dropped, hashtags are exempt from both rules.
pub fn normalize_token(
    token: &str,
    kind: TermKind,
    stopwords: &StopwordSets,
    lang: Option<&str>,
) -> Option<String> {
    let canonical = canonicalize(token);
    if canonical.is_empty() {
        return None;
    }
    if kind == TermKind::Word {
        if canonical.chars().count() <= 4 {
            return None;
        }
        if stopwords.contains(&canonical, lang) {
            return None;
        }
    }
    Some(canonical)
}

/// Split text into word tokens at non-word characters. `#` also terminates a
/// token, so hashtag bodies show up as words.
pub fn word_tokens(text: &str) -> Vec<&str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '’'))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Count normalized occurrences into an existing tally.
pub fn tally_words(
    text: &str,
    lang: Option<&str>,
    stopwords: &StopwordSets,
    tally: &mut BTreeMap<String, u64>,
) {
    for token in word_tokens(text) {
        if let Some(term) = normalize_token(token, TermKind::Word, stopwords, lang) {
            *tally.entry(term).or_insert(0) += 1;
        }
    }
}

pub fn tally_hashtags(hashtags: &[String], tally: &mut BTreeMap<String, u64>) {
    let stopwords = StopwordSets::default();
    for tag in hashtags {
        if let Some(term) = normalize_token(tag, TermKind::Hashtag, &stopwords, None) {
            *tally.entry(term).or_insert(0) += 1;
        }
    }
}

/// The `k` most frequent terms, ties broken lexicographically. The boolean
/// is true when fewer than `k` distinct terms exist (all are returned).
pub fn top_k_terms(
    tally: &BTreeMap<String, u64>,
    kind: TermKind,
    k: usize,
) -> (Vec<TermStats>, bool) {
    let mut entries: Vec<(&String, &u64)> = tally.iter().collect();
    entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let fewer = entries.len() < k;
    let stats = entries
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (term, &mentions))| TermStats {
            term: term.clone(),
            kind,
            mentions,
            rank: i + 1,
            topic: None,
        })
        .collect();
    (stats, fewer)
}

/// Term-to-topic map; lookup keys are canonical term forms.
#[derive(Debug, Clone, Default)]
pub struct TopicLabelMap {
    map: BTreeMap<String, Topic>,
}

impl TopicLabelMap {
    pub fn new(map: BTreeMap<String, Topic>) -> Self {
        TopicLabelMap { map }
    }

    /// Load from CSV with header `term,topic`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::BadInputFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut map = BTreeMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::BadInputFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let term = canonicalize(row.get(0).unwrap_or_default());
            let topic_raw = row.get(1).unwrap_or_default().trim();
            let topic = Topic::parse(topic_raw).ok_or_else(|| Error::BadInputFile {
                path: path.to_path_buf(),
                message: format!("unknown topic {topic_raw:?} for term {term:?}"),
            })?;
            map.insert(term, topic);
        }
        Ok(TopicLabelMap { map })
    }

    pub fn topic_of(&self, term: &str) -> Topic {
        self.map.get(term).copied().unwrap_or(Topic::General)
    }
}

/// Fill in each term's topic; unmapped terms default to `general`.
pub fn assign_topic_labels(terms: &mut [TermStats], labelmap: &TopicLabelMap) {
    for t in terms {
        t.topic = Some(labelmap.topic_of(&t.term));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub feature: String,
    pub r: f64,
    pub df: usize,
    pub p_two_tailed: f64,
}

/// Pearson product-moment correlation with a two-tailed p-value from the
/// exact t transform `t = r * sqrt(df / (1 - r^2))`, `df = n - 2`.
pub fn pearson_with_p(x: &[f64], y: &[f64], feature: &str) -> Result<CorrelationResult> {
    let n = x.len();
    assert_eq!(n, y.len(), "paired samples must have equal length");
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let r = (cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0);
    let df = n - 2;
    let p = if 1.0 - r * r < 1e-15 {
        0.0
    } else {
        let t = r * (df as f64 / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("valid dof");
        2.0 * dist.cdf(-t.abs())
    };
    Ok(CorrelationResult {
        feature: feature.to_string(),
        r,
        df,
        p_two_tailed: p,
    })
}

/// Per-dataset, per-topic features over a top-k hashtag list: how many
/// entries carry the topic, their total mentions, and those mentions as a
/// share of all mentions in the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicFeatures {
    pub dataset: String,
    pub topic: Topic,
    pub entry_count: usize,
    pub total_mentions: u64,
    pub proportional_mentions: f64,
}

pub fn topic_features(dataset: &str, top_terms: &[TermStats]) -> Vec<TopicFeatures> {
    let all_mentions: u64 = top_terms.iter().map(|t| t.mentions).sum();
    Topic::ALL
        .iter()
        .map(|&topic| {
            let entries: Vec<&TermStats> = top_terms
                .iter()
                .filter(|t| t.topic == Some(topic))
                .collect();
            let total: u64 = entries.iter().map(|t| t.mentions).sum();
            TopicFeatures {
                dataset: dataset.to_string(),
                topic,
                entry_count: entries.len(),
                total_mentions: total,
                proportional_mentions: if all_mentions == 0 {
                    0.0
                } else {
                    total as f64 / all_mentions as f64
                },
            }
        })
        .collect()
}

/// Correlate each (topic, feature) pair against per-dataset negativity.
/// `rows` pairs one dataset's feature list with its negativity percentage;
/// datasets are processed in the given order. Degenerate features (zero
/// variance) are skipped.
pub fn correlate_topic_features(
    rows: &[(Vec<TopicFeatures>, f64)],
) -> Result<Vec<CorrelationResult>> {
    if rows.len() < 3 {
        return Ok(Vec::new());
    }
    let negativity: Vec<f64> = rows.iter().map(|(_, n)| *n).collect();
    let mut results = Vec::new();
    for &topic in &Topic::ALL {
        let pull = |f: &dyn Fn(&TopicFeatures) -> f64| -> Vec<f64> {
            rows.iter()
                .map(|(features, _)| {
                    features
                        .iter()
                        .find(|tf| tf.topic == topic)
                        .map(f)
                        .unwrap_or(0.0)
                })
                .collect()
        };
        let features: [(&str, Vec<f64>); 3] = [
            ("count", pull(&|tf| tf.entry_count as f64)),
            ("mentions", pull(&|tf| tf.total_mentions as f64)),
            ("proportion", pull(&|tf| tf.proportional_mentions)),
        ];
        for (kind, values) in features {
            let name = format!("{}_{kind}", topic.as_str());
            match pearson_with_p(&values, &negativity, &name) {
                Ok(result) => results.push(result),
                Err(Error::DegenerateVariance) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_stopwords() -> StopwordSets {
        StopwordSets::default()
    }

    fn stopwords(words: &[&str]) -> StopwordSets {
        let mut by_lang = BTreeMap::new();
        by_lang.insert(
            "en".to_string(),
            words.iter().map(|w| w.to_string()).collect(),
        );
        StopwordSets::new(by_lang)
    }

    #[test]
    fn short_words_rejected_after_canonicalization() {
        assert_eq!(
            normalize_token("Café!", TermKind::Word, &no_stopwords(), None),
            None
        );
        assert_eq!(
            normalize_token("Cafés", TermKind::Word, &no_stopwords(), None),
            Some("cafes".to_string())
        );
    }

    #[test]
    fn hashtags_exempt_from_length_and_stopword_rules() {
        let sw = stopwords(&["gfvip"]);
        assert_eq!(
            normalize_token("GFVIP", TermKind::Hashtag, &sw, Some("en")),
            Some("gfvip".to_string())
        );
        assert_eq!(
            normalize_token("ok", TermKind::Hashtag, &sw, None),
            Some("ok".to_string())
        );
    }

    #[test]
    fn diacritics_stripped() {
        assert_eq!(
            normalize_token("Señorita", TermKind::Word, &no_stopwords(), None),
            Some("senorita".to_string())
        );
        assert_eq!(canonicalize("Grüße"), "gruße");
        assert_eq!(canonicalize("àéîõü"), "aeiou");
    }

    #[test]
    fn punctuation_dropped_entirely() {
        assert_eq!(canonicalize("it's-fine!"), "itsfine");
        assert_eq!(canonicalize("..."), "");
        assert_eq!(
            normalize_token("---", TermKind::Hashtag, &no_stopwords(), None),
            None
        );
    }

    #[test]
    fn normalize_is_idempotent() {
        for token in ["Señorita", "GRÜSSE", "covid19", "Allah", "ół"] {
            let once = canonicalize(token);
            assert_eq!(canonicalize(&once), once);
        }
    }

    #[test]
    fn stopwords_respect_language_and_fall_back_merged() {
        let mut by_lang = BTreeMap::new();
        by_lang.insert("en".to_string(), BTreeSet::from(["hello".to_string()]));
        by_lang.insert("es".to_string(), BTreeSet::from(["entonces".to_string()]));
        let sw = StopwordSets::new(by_lang);
        assert_eq!(
            normalize_token("hello", TermKind::Word, &sw, Some("en")),
            None
        );
        assert_eq!(
            normalize_token("hello", TermKind::Word, &sw, Some("es")),
            Some("hello".to_string())
        );
        // No language: merged list applies.
        assert_eq!(normalize_token("entonces", TermKind::Word, &sw, None), None);
    }

    #[test]
    fn word_tokens_split_on_nonword_and_hash() {
        assert_eq!(
            word_tokens("a#x b#x c#y"),
            vec!["a", "x", "b", "x", "c", "y"]
        );
        assert_eq!(word_tokens("one, two...three"), vec!["one", "two", "three"]);
    }

    #[test]
    fn hashtag_tally_counts_occurrences() {
        let mut tally = BTreeMap::new();
        tally_hashtags(&["X".into(), "x".into(), "Y".into()], &mut tally);
        assert_eq!(tally["x"], 2);
        assert_eq!(tally["y"], 1);
        let (top, fewer) = top_k_terms(&tally, TermKind::Hashtag, 20);
        assert!(fewer);
        assert_eq!(top[0].term, "x");
        assert_eq!(top[0].mentions, 2);
        assert_eq!(top[0].rank, 1);
        assert_eq!(top[1].term, "y");
    }

    #[test]
    fn top_k_breaks_ties_lexicographically() {
        let mut tally = BTreeMap::new();
        for term in ["zulu", "alpha", "mike"] {
            tally.insert(term.to_string(), 7u64);
        }
        tally.insert("big".to_string(), 9);
        let (top, _) = top_k_terms(&tally, TermKind::Word, 3);
        let names: Vec<&str> = top.iter().map(|t| t.term.as_str()).collect();
        assert_eq!(names, vec!["big", "alpha", "mike"]);
        assert_eq!(top[2].rank, 3);
    }

    #[test]
    fn labelmap_lookup_defaults_to_general() {
        let mut map = BTreeMap::new();
        map.insert("covid19".to_string(), Topic::Covid);
        let labels = TopicLabelMap::new(map);
        assert_eq!(labels.topic_of("covid19"), Topic::Covid);
        assert_eq!(labels.topic_of("sunsets"), Topic::General);

        let mut terms = vec![
            TermStats {
                term: "covid19".into(),
                kind: TermKind::Hashtag,
                mentions: 5,
                rank: 1,
                topic: None,
            },
            TermStats {
                term: "sunsets".into(),
                kind: TermKind::Hashtag,
                mentions: 3,
                rank: 2,
                topic: None,
            },
        ];
        assign_topic_labels(&mut terms, &labels);
        assert_eq!(terms[0].topic, Some(Topic::Covid));
        assert_eq!(terms[1].topic, Some(Topic::General));
    }

    #[test]
    fn pearson_hand_computed() {
        let r = pearson_with_p(&[1.0, 2.0, 3.0], &[6.0, 4.0, 5.0], "t").unwrap();
        assert!((r.r - (-0.5)).abs() < 1e-12);
        assert_eq!(r.df, 1);
    }

    #[test]
    fn pearson_perfect_line() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson_with_p(&x, &y, "t").unwrap();
        assert!((r.r - 1.0).abs() < 1e-12);
        assert!(r.p_two_tailed < 1e-12);
    }

    #[test]
    fn pearson_degenerate_variance() {
        assert!(matches!(
            pearson_with_p(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], "t"),
            Err(Error::DegenerateVariance)
        ));
        assert!(matches!(
            pearson_with_p(&[1.0, 2.0], &[1.0, 2.0], "t"),
            Err(Error::TooFewPoints(2))
        ));
    }

    #[test]
    fn topic_features_cover_counts_and_proportions() {
        let mk = |term: &str, mentions: u64, topic: Topic| TermStats {
            term: term.into(),
            kind: TermKind::Hashtag,
            mentions,
            rank: 0,
            topic: Some(topic),
        };
        let terms = vec![
            mk("a", 300, Topic::Political),
            mk("b", 500, Topic::General),
            mk("c", 400, Topic::General),
        ];
        let features = topic_features("d1", &terms);
        let political = features
            .iter()
            .find(|f| f.topic == Topic::Political)
            .unwrap();
        assert_eq!(political.entry_count, 1);
        assert_eq!(political.total_mentions, 300);
        assert!((political.proportional_mentions - 0.25).abs() < 1e-12);
        let general = features.iter().find(|f| f.topic == Topic::General).unwrap();
        assert_eq!(general.entry_count, 2);
        assert!((general.proportional_mentions - 0.75).abs() < 1e-12);
        let total: f64 = features.iter().map(|f| f.proportional_mentions).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_general_dataset() {
        let terms: Vec<TermStats> = (0..20)
            .map(|i| TermStats {
                term: format!("t{i}"),
                kind: TermKind::Hashtag,
                mentions: 50,
                rank: i + 1,
                topic: Some(Topic::General),
            })
            .collect();
        let features = topic_features("d", &terms);
        let general = features.iter().find(|f| f.topic == Topic::General).unwrap();
        assert_eq!(general.entry_count, 20);
        assert_eq!(general.total_mentions, 1000);
        assert!((general.proportional_mentions - 1.0).abs() < 1e-12);
    }
}
