//! Parsing of line-delimited timeline files into validated ego timelines.
//!
//! A timeline file holds one JSON object per line. Communicative lines carry
//! `ego_id`, `alter_ids`, `ts`, `kind` and optionally `text`, `lang`,
//! `sentiment`, `hashtags`; plain posts carry `noncommunicative: true` and a
//! timestamp only. A line may also carry `location`, the ego's declared
//! free-form location.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionKind {
    Reply,
    Mention,
    Quote,
}

impl InteractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Reply => "reply",
            InteractionKind::Mention => "mention",
            InteractionKind::Quote => "quote",
        }
    }

    fn from_str(s: &str) -> Option<Self> {
        match s {
            "reply" => Some(InteractionKind::Reply),
            "mention" => Some(InteractionKind::Mention),
            "quote" => Some(InteractionKind::Quote),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Positive => "positive",
            Sentiment::Neutral => "neutral",
            Sentiment::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Sentiment::Positive),
            "neutral" => Some(Sentiment::Neutral),
            "negative" => Some(Sentiment::Negative),
            _ => None,
        }
    }
}

/// One directed, timestamped ego-to-alter communication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub ego_id: String,
    pub alter_ids: Vec<String>,
    pub ts: i64,
    pub kind: InteractionKind,
    pub text: Option<String>,
    pub lang: Option<String>,
    pub sentiment: Option<Sentiment>,
    pub hashtags: Vec<String>,
}

/// Everything one ego authored: communicative records, timestamps of plain
/// posts, and profile metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoTimeline {
    pub ego_id: String,
    /// Sorted ascending by timestamp.
    pub records: Vec<InteractionRecord>,
    /// Timestamps of posts that address nobody, sorted ascending. Kept so
    /// activity checks can see the ego's whole posting history.
    pub noncommunicative_ts: Vec<i64>,
    pub declared_location: Option<String>,
    pub first_activity: i64,
    pub last_activity: i64,
}

impl EgoTimeline {
    pub fn noncommunicative_post_count(&self) -> usize {
        self.noncommunicative_ts.len()
    }

    pub fn total_posts(&self) -> usize {
        self.records.len() + self.noncommunicative_ts.len()
    }

    /// All post timestamps, communicative or not, in ascending order.
    pub fn all_post_timestamps(&self) -> Vec<i64> {
        let mut ts: Vec<i64> = self
            .records
            .iter()
            .map(|r| r.ts)
            .chain(self.noncommunicative_ts.iter().copied())
            .collect();
        ts.sort_unstable();
        ts
    }
}

/// Counters for lines that were tolerated rather than ingested verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestDiagnostics {
    pub unknown_kind_lines: usize,
    pub deduplicated: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    ego_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alter_ids: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ts: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sentiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hashtags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    noncommunicative: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<String>,
}

/// Parse one ego's timeline. Records come back sorted by timestamp, exact
/// duplicates (same timestamp, kind, alters, and text) collapsed, and plain
/// posts counted but not materialized as interactions.
pub fn parse_timeline<R: BufRead>(reader: R, ego_id: &str) -> Result<EgoTimeline> {
    parse_timeline_diag(reader, ego_id).map(|(t, _)| t)
}

/// As [`parse_timeline`], also reporting how many lines were skipped for an
/// unknown kind and how many duplicates were collapsed.
pub fn parse_timeline_diag<R: BufRead>(
    reader: R,
    ego_id: &str,
) -> Result<(EgoTimeline, IngestDiagnostics)> {
    let mut records: Vec<InteractionRecord> = Vec::new();
    let mut noncomm: Vec<i64> = Vec::new();
    let mut location: Option<String> = None;
    let mut diag = IngestDiagnostics::default();
    let mut any_line = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|_| Error::MalformedRecord(line_no))?;
        if line.trim().is_empty() {
            continue;
        }
        any_line = true;
        let raw: RawLine =
            serde_json::from_str(&line).map_err(|_| Error::MalformedRecord(line_no))?;

        if let Some(l) = &raw.ego_id {
            if l != ego_id {
                return Err(Error::MalformedRecord(line_no));
            }
        }
        let ts = match raw.ts {
            Some(t) if t > 0 => t,
            _ => return Err(Error::MalformedRecord(line_no)),
        };
        if location.is_none() {
            if let Some(loc) = raw.location.filter(|l| !l.is_empty()) {
                location = Some(loc);
            }
        }

        if raw.noncommunicative {
            noncomm.push(ts);
            continue;
        }

        let kind = match raw.kind.as_deref() {
            Some(k) => match InteractionKind::from_str(k) {
                Some(k) => k,
                None => {
                    diag.unknown_kind_lines += 1;
                    continue;
                }
            },
            None => return Err(Error::MalformedRecord(line_no)),
        };
        let alter_ids = match raw.alter_ids {
            Some(a) if !a.is_empty() => a,
            _ => return Err(Error::MalformedRecord(line_no)),
        };
        for (i, alter) in alter_ids.iter().enumerate() {
            if alter == ego_id || alter_ids[..i].contains(alter) {
                return Err(Error::MalformedRecord(line_no));
            }
        }
        let sentiment = match raw.sentiment.as_deref() {
            Some(s) => Some(Sentiment::parse(s).ok_or(Error::MalformedRecord(line_no))?),
            None => None,
        };
        let text = raw.text.filter(|t| !t.is_empty());
        let mut hashtags = raw.hashtags.unwrap_or_default();
        if hashtags.is_empty() {
            if let Some(t) = &text {
                hashtags = extract_hashtags(t);
            }
        }

        records.push(InteractionRecord {
            ego_id: ego_id.to_string(),
            alter_ids,
            ts,
            kind,
            text,
            lang: raw.lang,
            sentiment,
            hashtags,
        });
    }

    if !any_line {
        return Err(Error::EmptyTimeline);
    }

    records.sort_by(|a, b| {
        (a.ts, &a.kind, &a.alter_ids, &a.text).cmp(&(b.ts, &b.kind, &b.alter_ids, &b.text))
    });
    let before = records.len();
    records.dedup_by(|a, b| {
        a.ts == b.ts && a.kind == b.kind && a.alter_ids == b.alter_ids && a.text == b.text
    });
    diag.deduplicated = before - records.len();
    noncomm.sort_unstable();

    let first_activity = records
        .first()
        .map(|r| r.ts)
        .into_iter()
        .chain(noncomm.first().copied())
        .min()
        .expect("at least one post");
    let last_activity = records
        .last()
        .map(|r| r.ts)
        .into_iter()
        .chain(noncomm.last().copied())
        .max()
        .expect("at least one post");

    Ok((
        EgoTimeline {
            ego_id: ego_id.to_string(),
            records,
            noncommunicative_ts: noncomm,
            declared_location: location,
            first_activity,
            last_activity,
        },
        diag,
    ))
}

/// Write a timeline back out in the same line format [`parse_timeline`]
/// accepts; parsing the output reproduces the input timeline exactly.
pub fn serialize_timeline<W: Write>(timeline: &EgoTimeline, mut out: W) -> std::io::Result<()> {
    struct Line<'a> {
        ts: i64,
        comm: Option<&'a InteractionRecord>,
    }
    let mut lines: Vec<Line> = timeline
        .records
        .iter()
        .map(|r| Line {
            ts: r.ts,
            comm: Some(r),
        })
        .chain(timeline.noncommunicative_ts.iter().map(|&ts| Line {
            ts,
            comm: None,
        }))
        .collect();
    lines.sort_by_key(|l| (l.ts, l.comm.is_none()));

    for (i, line) in lines.iter().enumerate() {
        let location = if i == 0 {
            timeline.declared_location.clone()
        } else {
            None
        };
        let raw = match line.comm {
            Some(r) => RawLine {
                ego_id: Some(r.ego_id.clone()),
                alter_ids: Some(r.alter_ids.clone()),
                ts: Some(r.ts),
                kind: Some(r.kind.as_str().to_string()),
                text: r.text.clone(),
                lang: r.lang.clone(),
                sentiment: r.sentiment.map(|s| s.as_str().to_string()),
                hashtags: Some(r.hashtags.clone()),
                noncommunicative: false,
                location,
            },
            None => RawLine {
                ego_id: Some(timeline.ego_id.clone()),
                ts: Some(line.ts),
                noncommunicative: true,
                location,
                ..RawLine::default()
            },
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Every maximal run of word characters following a `#`, original casing
/// kept. Word characters are Unicode alphanumerics and `_`.
pub fn extract_hashtags(text: &str) -> Vec<String> {
    let mut tags = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '#' {
            continue;
        }
        let mut tag = String::new();
        while let Some(&n) = chars.peek() {
            if n.is_alphanumeric() || n == '_' {
                tag.push(n);
                chars.next();
            } else {
                break;
            }
        }
        if !tag.is_empty() {
            tags.push(tag);
        }
    }
    tags
}

/// A dataset directory: one `<ego_id>.jsonl` per ego.
pub fn load_dataset_dir(dir: &Path) -> Result<Vec<EgoTimeline>> {
    let mut files: Vec<(String, std::path::PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::BadInputFile {
                    path: path.clone(),
                    message: "file name is not valid UTF-8".into(),
                })?
                .to_string();
            files.push((stem, path));
        }
    }
    files.sort();

    let mut timelines = Vec::with_capacity(files.len());
    for (ego_id, path) in files {
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let reader = std::io::BufReader::new(file);
        let timeline = parse_timeline(reader, &ego_id).map_err(|e| match e {
            Error::MalformedRecord(line) => Error::BadInputFile {
                path: path.clone(),
                message: format!("line {line}: malformed record"),
            },
            other => other,
        })?;
        timelines.push(timeline);
    }
    Ok(timelines)
}

/// Dataset manifest: `[datasets]` table mapping dataset name to a directory,
/// relative paths resolved against the manifest's own directory.
#[derive(Debug, Deserialize, Serialize)]
pub struct DatasetManifest {
    pub datasets: BTreeMap<String, String>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| Error::BadInputFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(manifest
        .datasets
        .into_iter()
        .map(|(name, dir)| {
            let dir_path = Path::new(&dir);
            let resolved = if dir_path.is_absolute() {
                dir_path.to_path_buf()
            } else {
                base.join(dir_path)
            };
            (name, resolved)
        })
        .collect())
}
