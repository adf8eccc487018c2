//! Staged orchestration. Each stage reads the previous stage's files from
//! the output directory, does its work in parallel over egos, and writes
//! line-delimited intermediates with a version header, so any stage can be
//! rerun or inspected on its own. Reports are plain CSV plus one structured
//! JSON summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate_by_location, full_vs_active_row, mean_circle_sizes, mean_optimum_circles,
    negativity_percentage, per_circle_negativity, CiMean, CircleNegativityRow, LocationMapping,
    LocationTables,
};
use crate::circles::{cluster_ego, CircleStructure};
use crate::config::{require_file, PipelineConfig};
use crate::error::{Error, Result};
use crate::ingestion::{load_manifest, parse_timeline, EgoTimeline};
use crate::preprocessing::{
    aggregate_relationships, evaluate_ego, split_full_active, ActivityVerdict, ClassifierRegistry,
    RelationshipAggregate,
};
use crate::signing::{
    build_senm, sign_alters, tally_labels, ProviderConfig, ProviderRegistry, SentimentProvider,
    SignedEgoNetwork,
};
use crate::topics::{
    self, top_k_terms, topic_features, StopwordSets, TermKind, TermStats, TopicLabelMap,
};

pub const STAGE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StageHeader {
    stage: String,
    version: u32,
}

/// One ego after preprocessing. Dropped egos keep their verdict and lose
/// their relationships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedEgo {
    pub ego_id: String,
    pub declared_location: Option<String>,
    pub verdict: ActivityVerdict,
    pub aggregates: Vec<RelationshipAggregate>,
}

/// Circle structure for one kept ego; None when the active network is too
/// small or degenerate to cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleRow {
    pub ego_id: String,
    pub circles: Option<CircleStructure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderDriftRow {
    pub provider: String,
    pub full_pct: f64,
    pub active_pct: f64,
    pub delta: f64,
}

/// Per-dataset statistics bundle mirrored into `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub full_negativity: f64,
    pub active_negativity: f64,
    pub delta: f64,
    pub mean_optimum_circles: Option<CiMean>,
    pub egos_with_filter_circles: usize,
    pub mean_circle_sizes: Option<Vec<f64>>,
    pub per_circle_negativity: Option<Vec<CircleNegativityRow>>,
    pub provider_drift: Option<Vec<ProviderDriftRow>>,
}

fn stage_dir(out: &Path, label: &str) -> PathBuf {
    out.join(label)
}

fn stage_path(out: &Path, label: &str, dataset: &str) -> PathBuf {
    stage_dir(out, label).join(format!("{dataset}.jsonl"))
}

/// Subcommand that produces a given stage directory.
fn producer(label: &str) -> &'static str {
    match label {
        "ingested" => "ingest",
        "preprocessed" => "preprocess",
        "circles" => "circles",
        "signed" | "signed_drift" => "sign",
        _ => unreachable!("unknown stage label"),
    }
}

fn write_stage_rows<T: Serialize + Sync>(
    out: &Path,
    label: &str,
    dataset: &str,
    rows: &[T],
) -> Result<()> {
    let dir = stage_dir(out, label);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = stage_path(out, label, dataset);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = BufWriter::new(file);
    let header = StageHeader {
        stage: label.to_string(),
        version: STAGE_VERSION,
    };
    let lines: Vec<String> = rows
        .par_iter()
        .map(|row| serde_json::to_string(row).expect("stage rows serialize"))
        .collect();
    let mut emit = || -> std::io::Result<()> {
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for line in &lines {
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    };
    emit().map_err(|e| Error::io(&path, e))
}

fn read_stage_rows<T: DeserializeOwned + Send>(
    out: &Path,
    label: &str,
    dataset: &str,
) -> Result<Vec<T>> {
    let path = stage_path(out, label, dataset);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingStage {
                stage: producer(label),
                path,
            })
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| Error::BadInputFile {
        path: path.clone(),
        message: "empty stage file".into(),
    })?;
    let header: StageHeader =
        serde_json::from_str(header_line).map_err(|e| Error::BadInputFile {
            path: path.clone(),
            message: format!("bad stage header: {e}"),
        })?;
    if header.stage != label {
        return Err(Error::BadInputFile {
            path: path.clone(),
            message: format!("stage header says {}, expected {label}", header.stage),
        });
    }
    if header.version != STAGE_VERSION {
        return Err(Error::StageVersionMismatch {
            path,
            found: header.version,
            expected: STAGE_VERSION,
        });
    }
    let numbered: Vec<(usize, &str)> = lines.enumerate().collect();
    numbered
        .into_par_iter()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::BadInputFile {
                path: path.clone(),
                message: format!("line {}: {e}", i + 2),
            })
        })
        .collect()
}

/// Datasets already present in a stage directory, in name order.
fn stage_datasets(out: &Path, label: &str) -> Result<Vec<String>> {
    let dir = stage_dir(out, label);
    let entries = match fs::read_dir(&dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingStage {
                stage: producer(label),
                path: dir,
            })
        }
        Err(e) => return Err(Error::io(&dir, e)),
    };
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            if let Some(stem) = path.file_stem() {
                names.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    if names.is_empty() {
        return Err(Error::MissingStage {
            stage: producer(label),
            path: dir,
        });
    }
    names.sort();
    Ok(names)
}

/// Resolve the data argument into (name, directory) pairs: a manifest file,
/// a directory containing `datasets.toml`, or a single dataset directory.
pub fn resolve_datasets(data: &Path) -> Result<Vec<(String, PathBuf)>> {
    if data.is_file() {
        return load_manifest(data);
    }
    if data.is_dir() {
        let manifest = data.join("datasets.toml");
        if manifest.is_file() {
            return load_manifest(&manifest);
        }
        let name = data
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        return Ok(vec![(name, data.to_path_buf())]);
    }
    Err(Error::BadInputFile {
        path: data.to_path_buf(),
        message: "not a dataset directory or manifest file".into(),
    })
}

fn load_dataset_dir_parallel(dir: &Path) -> Result<Vec<EgoTimeline>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::BadInputFile {
            path: dir.to_path_buf(),
            message: "no .jsonl timelines found".into(),
        });
    }
    files
        .par_iter()
        .map(|path| {
            let ego_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let text = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_timeline(&text[..], &ego_id).map_err(|e| match e {
                Error::MalformedRecord(line) => Error::BadInputFile {
                    path: path.clone(),
                    message: format!("malformed record at line {line}"),
                },
                other => other,
            })
        })
        .collect()
}

/// Parse every dataset's raw timelines and write the `ingested` stage.
pub fn run_ingest(data: &Path, out: &Path) -> Result<Vec<String>> {
    let datasets = resolve_datasets(data)?;
    let mut notes = Vec::new();
    for (name, dir) in &datasets {
        let timelines = load_dataset_dir_parallel(dir)?;
        write_stage_rows(out, "ingested", name, &timelines)?;
        notes.push(format!("{name}: {} egos ingested", timelines.len()));
    }
    Ok(notes)
}

/// Apply the person classifier and activity filters, then aggregate
/// per-alter relationships for the kept egos.
pub fn run_preprocess(out: &Path, config: &PipelineConfig) -> Result<Vec<String>> {
    if let Some(path) = &config.classifier.labels_file {
        require_file("classifier labels file", path)?;
    }
    let classifier = ClassifierRegistry::builtin().build(&config.classifier)?;
    let mut notes = Vec::new();
    for name in stage_datasets(out, "ingested")? {
        let timelines: Vec<EgoTimeline> = read_stage_rows(out, "ingested", &name)?;
        let rows: Vec<PreprocessedEgo> = timelines
            .par_iter()
            .map(|timeline| {
                let verdict = evaluate_ego(timeline, classifier.as_ref(), &config.thresholds)?;
                let aggregates = if verdict.kept {
                    aggregate_relationships(timeline)
                } else {
                    Vec::new()
                };
                Ok(PreprocessedEgo {
                    ego_id: timeline.ego_id.clone(),
                    declared_location: timeline.declared_location.clone(),
                    verdict,
                    aggregates,
                })
            })
            .collect::<Result<_>>()?;
        let kept = rows.iter().filter(|r| r.verdict.kept).count();
        write_stage_rows(out, "preprocessed", &name, &rows)?;
        notes.push(format!("{name}: {kept} of {} egos kept", rows.len()));
    }
    Ok(notes)
}

/// Cluster each kept ego's active network into circles.
pub fn run_circles(out: &Path, config: &PipelineConfig) -> Result<Vec<String>> {
    let mut notes = Vec::new();
    for name in stage_datasets(out, "preprocessed")? {
        let egos: Vec<PreprocessedEgo> = read_stage_rows(out, "preprocessed", &name)?;
        let rows: Vec<CircleRow> = egos
            .par_iter()
            .filter(|ego| ego.verdict.kept)
            .map(|ego| {
                let (_, active) = split_full_active(
                    ego.aggregates.clone(),
                    config.thresholds.active_min_frequency,
                );
                let circles = match cluster_ego(&ego.ego_id, &active, &config.circles) {
                    Ok(structure) => Some(structure),
                    Err(Error::EmptyNetwork(_)) | Err(Error::DegenerateInput) => None,
                    Err(e) => return Err(e),
                };
                Ok(CircleRow {
                    ego_id: ego.ego_id.clone(),
                    circles,
                })
            })
            .collect::<Result<_>>()?;
        let clustered = rows.iter().filter(|r| r.circles.is_some()).count();
        write_stage_rows(out, "circles", &name, &rows)?;
        notes.push(format!("{name}: {clustered} of {} egos clustered", rows.len()));
    }
    Ok(notes)
}

fn check_provider_files(label: &str, config: &ProviderConfig) -> Result<()> {
    if let Some(path) = &config.sidecar {
        require_file(&format!("{label} sidecar"), path)?;
    }
    if let Some(path) = &config.lexicon {
        require_file(&format!("{label} lexicon"), path)?;
    }
    Ok(())
}

fn sign_dataset(
    timelines: &BTreeMap<String, &EgoTimeline>,
    egos: &[PreprocessedEgo],
    circle_rows: &BTreeMap<String, &CircleRow>,
    provider: &dyn SentimentProvider,
    config: &PipelineConfig,
) -> Result<Vec<SignedEgoNetwork>> {
    egos.par_iter()
        .filter(|ego| ego.verdict.kept)
        .map(|ego| {
            let timeline = timelines.get(&ego.ego_id).ok_or_else(|| Error::BadInputFile {
                path: PathBuf::from("ingested"),
                message: format!("ego {} missing from the ingested stage", ego.ego_id),
            })?;
            let circles = circle_rows
                .get(&ego.ego_id)
                .and_then(|row| row.circles.clone());
            let (tallies, _unlabeled) = tally_labels(timeline, provider);
            let (full, active) = split_full_active(
                ego.aggregates.clone(),
                config.thresholds.active_min_frequency,
            );
            let full_rel = sign_alters(
                &ego.ego_id,
                full.iter().map(|a| a.alter_id.clone()),
                &tallies,
                config.sign_threshold,
            );
            let active_ids: BTreeSet<&str> = active.iter().map(|a| a.alter_id.as_str()).collect();
            let active_rel: Vec<_> = full_rel
                .iter()
                .filter(|r| active_ids.contains(r.alter_id.as_str()))
                .cloned()
                .collect();
            let active_rel = match &circles {
                Some(structure) => build_senm(structure, active_rel)?,
                None => active_rel,
            };
            Ok(SignedEgoNetwork {
                ego_id: ego.ego_id.clone(),
                circles,
                relationships: active_rel,
                full_relationships: full_rel,
            })
        })
        .collect()
}

/// Label every interaction through the configured provider and sign each
/// relationship; also runs the drift provider when one is configured.
pub fn run_sign(out: &Path, config: &PipelineConfig) -> Result<Vec<String>> {
    check_provider_files("sentiment provider", &config.provider)?;
    if let Some(drift) = &config.drift_provider {
        check_provider_files("drift provider", drift)?;
    }
    let registry = ProviderRegistry::builtin();
    let provider = registry.build(&config.provider)?;
    let drift_provider = config
        .drift_provider
        .as_ref()
        .map(|cfg| registry.build(cfg))
        .transpose()?;

    let mut notes = Vec::new();
    for name in stage_datasets(out, "preprocessed")? {
        let timelines: Vec<EgoTimeline> = read_stage_rows(out, "ingested", &name)?;
        let egos: Vec<PreprocessedEgo> = read_stage_rows(out, "preprocessed", &name)?;
        let circle_rows: Vec<CircleRow> = read_stage_rows(out, "circles", &name)?;
        let timeline_map: BTreeMap<String, &EgoTimeline> = timelines
            .iter()
            .map(|t| (t.ego_id.clone(), t))
            .collect();
        let circle_map: BTreeMap<String, &CircleRow> = circle_rows
            .iter()
            .map(|r| (r.ego_id.clone(), r))
            .collect();
        let networks = sign_dataset(&timeline_map, &egos, &circle_map, provider.as_ref(), config)?;
        write_stage_rows(out, "signed", &name, &networks)?;
        let signed_count: usize = networks.iter().map(|n| n.full_relationships.len()).sum();
        notes.push(format!(
            "{name}: {} egos signed, {signed_count} relationships",
            networks.len()
        ));
        if let Some(drift) = &drift_provider {
            let drifted =
                sign_dataset(&timeline_map, &egos, &circle_map, drift.as_ref(), config)?;
            write_stage_rows(out, "signed_drift", &name, &drifted)?;
        }
    }
    Ok(notes)
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn write_report_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn provider_display_name(config: &ProviderConfig) -> String {
    if config.name == "shifted" {
        format!(
            "shifted:{}",
            config.base.clone().unwrap_or_else(|| "precomputed".into())
        )
    } else {
        config.name.clone()
    }
}

fn dataset_negativity(networks: &[SignedEgoNetwork], dataset: &str) -> Result<(f64, f64, f64)> {
    let row = full_vs_active_row(dataset, networks)?;
    Ok((row.full_pct, row.active_pct, row.delta))
}

/// Compute per-dataset statistics and write the summary tables.
pub fn run_analyze(out: &Path, config: &PipelineConfig) -> Result<Vec<String>> {
    let mapping = match &config.analysis.location_map {
        Some(path) => {
            require_file("location map", path)?;
            LocationMapping::from_csv(path)?
        }
        None => LocationMapping::default(),
    };
    let filter = config.analysis.circles_filter;

    let mut table2 = String::from("dataset,provider,full_pct,active_pct,delta\n");
    let mut table3 = String::from("dataset,full_pct,active_pct,delta\n");
    let mut table4 =
        String::from("dataset,total_egos,kept_egos,full_relationships,active_relationships,interactions\n");
    let mut table5 = String::from("dataset,mean_circles,ci_low,ci_high,egos,egos_at_filter\n");
    let mut table6 = String::from("dataset,circle,mean_size\n");
    let mut table7 = String::from("dataset,circle,mean_negative_count,negativity_pct\n");
    let mut reports = Vec::new();
    let mut location_inputs: Vec<(Option<String>, usize)> = Vec::new();
    let mut notes = Vec::new();

    for name in stage_datasets(out, "signed")? {
        let egos: Vec<PreprocessedEgo> = read_stage_rows(out, "preprocessed", &name)?;
        let networks: Vec<SignedEgoNetwork> = read_stage_rows(out, "signed", &name)?;

        let (full_pct, active_pct, delta) = dataset_negativity(&networks, &name)?;
        table3.push_str(&format!(
            "{name},{},{},{}\n",
            fmt4(full_pct),
            fmt4(active_pct),
            fmt4(delta)
        ));

        let base_name = provider_display_name(&config.provider);
        table2.push_str(&format!(
            "{name},{base_name},{},{},{}\n",
            fmt4(full_pct),
            fmt4(active_pct),
            fmt4(delta)
        ));
        let mut drift_rows = vec![ProviderDriftRow {
            provider: base_name,
            full_pct,
            active_pct,
            delta,
        }];
        if let Some(drift_config) = &config.drift_provider {
            let drifted: Vec<SignedEgoNetwork> = read_stage_rows(out, "signed_drift", &name)?;
            let (d_full, d_active, d_delta) = dataset_negativity(&drifted, &name)?;
            let drift_name = provider_display_name(drift_config);
            table2.push_str(&format!(
                "{name},{drift_name},{},{},{}\n",
                fmt4(d_full),
                fmt4(d_active),
                fmt4(d_delta)
            ));
            drift_rows.push(ProviderDriftRow {
                provider: drift_name,
                full_pct: d_full,
                active_pct: d_active,
                delta: d_delta,
            });
        }

        let total_egos = egos.len();
        let kept: Vec<&PreprocessedEgo> = egos.iter().filter(|e| e.verdict.kept).collect();
        let full_relationships: usize = networks.iter().map(|n| n.full_relationships.len()).sum();
        let active_relationships: usize = networks.iter().map(|n| n.relationships.len()).sum();
        let interactions: u64 = kept
            .iter()
            .flat_map(|e| &e.aggregates)
            .map(|a| a.interaction_count as u64)
            .sum();
        table4.push_str(&format!(
            "{name},{total_egos},{},{full_relationships},{active_relationships},{interactions}\n",
            kept.len()
        ));

        let summary = match mean_optimum_circles(&name, &networks, filter) {
            Ok(summary) => Some(summary),
            Err(Error::InsufficientEgos { .. }) => None,
            Err(e) => return Err(e),
        };
        let egos_at_filter = networks
            .iter()
            .filter_map(|n| n.circles.as_ref())
            .filter(|c| c.optimum_circles == filter)
            .count();
        match &summary {
            Some(s) => table5.push_str(&format!(
                "{name},{},{},{},{},{egos_at_filter}\n",
                fmt4(s.mean.mean),
                fmt4(s.mean.ci_low),
                fmt4(s.mean.ci_high),
                s.mean.n
            )),
            None => table5.push_str(&format!("{name},,,,,{egos_at_filter}\n")),
        }

        let sizes = match mean_circle_sizes(&networks, filter) {
            Ok(sizes) => Some(sizes),
            Err(Error::NoMatchingEgos(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(sizes) = &sizes {
            for (i, size) in sizes.iter().enumerate() {
                table6.push_str(&format!("{name},{},{}\n", i + 1, fmt4(*size)));
            }
        }

        let per_circle = match per_circle_negativity(&networks, filter, config.analysis.per_ego_averaging)
        {
            Ok(rows) => Some(rows),
            Err(Error::NoMatchingEgos(_)) => None,
            Err(e) => return Err(e),
        };
        if let Some(rows) = &per_circle {
            for row in rows {
                table7.push_str(&format!(
                    "{name},{},{},{}\n",
                    row.circle,
                    fmt4(row.mean_negative_count),
                    fmt4(row.negativity_pct)
                ));
            }
        }

        for network in &networks {
            let location = kept
                .iter()
                .find(|e| e.ego_id == network.ego_id)
                .and_then(|e| e.declared_location.clone());
            location_inputs.push((location, network.relationships.len()));
        }

        reports.push(DatasetReport {
            dataset: name.clone(),
            full_negativity: full_pct,
            active_negativity: active_pct,
            delta,
            mean_optimum_circles: summary.map(|s| s.mean),
            egos_with_filter_circles: egos_at_filter,
            mean_circle_sizes: sizes,
            per_circle_negativity: per_circle,
            provider_drift: if config.drift_provider.is_some() {
                Some(drift_rows)
            } else {
                None
            },
        });
        notes.push(format!(
            "{name}: full {} / active {} negativity, {egos_at_filter} egos at {filter} circles",
            fmt4(full_pct),
            fmt4(active_pct)
        ));
    }

    let LocationTables {
        by_country,
        by_continent,
    } = aggregate_by_location(&location_inputs, &mapping);
    let mut locations = String::from("scope,name,egos,relationships\n");
    for row in by_country
        .iter()
        .filter(|r| r.egos >= config.analysis.min_country_egos)
    {
        locations.push_str(&format!(
            "country,{},{},{}\n",
            row.name, row.egos, row.relationships
        ));
    }
    for row in &by_continent {
        locations.push_str(&format!(
            "continent,{},{},{}\n",
            row.name, row.egos, row.relationships
        ));
    }

    write_report_file(&out.join("table2.csv"), &table2)?;
    write_report_file(&out.join("table3.csv"), &table3)?;
    write_report_file(&out.join("table4.csv"), &table4)?;
    write_report_file(&out.join("table5.csv"), &table5)?;
    write_report_file(&out.join("table6.csv"), &table6)?;
    write_report_file(&out.join("table7.csv"), &table7)?;
    write_report_file(&out.join("locations.csv"), &locations)?;
    let report_json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_report_file(&out.join("report.json"), &report_json)?;
    Ok(notes)
}

struct TermTallies {
    hashtags_full: BTreeMap<String, u64>,
    hashtags_active: BTreeMap<String, u64>,
    words_full: BTreeMap<String, u64>,
    words_active: BTreeMap<String, u64>,
}

fn merge_tally(into: &mut BTreeMap<String, u64>, from: BTreeMap<String, u64>) {
    for (term, count) in from {
        *into.entry(term).or_insert(0) += count;
    }
}

/// Count terms over kept egos. A record contributes to the active tables
/// when it addresses at least one active alter.
fn tally_dataset_terms(
    timelines: &BTreeMap<String, &EgoTimeline>,
    egos: &[PreprocessedEgo],
    stopwords: &StopwordSets,
    active_min_frequency: f64,
) -> Result<TermTallies> {
    let per_ego: Vec<TermTallies> = egos
        .par_iter()
        .filter(|ego| ego.verdict.kept)
        .map(|ego| {
            let timeline = timelines.get(&ego.ego_id).ok_or_else(|| Error::BadInputFile {
                path: PathBuf::from("ingested"),
                message: format!("ego {} missing from the ingested stage", ego.ego_id),
            })?;
            let active_ids: BTreeSet<&str> = ego
                .aggregates
                .iter()
                .filter(|a| a.annualized_frequency >= active_min_frequency)
                .map(|a| a.alter_id.as_str())
                .collect();
            let mut tallies = TermTallies {
                hashtags_full: BTreeMap::new(),
                hashtags_active: BTreeMap::new(),
                words_full: BTreeMap::new(),
                words_active: BTreeMap::new(),
            };
            for record in &timeline.records {
                let active = record
                    .alter_ids
                    .iter()
                    .any(|a| active_ids.contains(a.as_str()));
                topics::tally_hashtags(&record.hashtags, &mut tallies.hashtags_full);
                if active {
                    topics::tally_hashtags(&record.hashtags, &mut tallies.hashtags_active);
                }
                if let Some(text) = &record.text {
                    topics::tally_words(
                        text,
                        record.lang.as_deref(),
                        stopwords,
                        &mut tallies.words_full,
                    );
                    if active {
                        topics::tally_words(
                            text,
                            record.lang.as_deref(),
                            stopwords,
                            &mut tallies.words_active,
                        );
                    }
                }
            }
            Ok(tallies)
        })
        .collect::<Result<_>>()?;
    let mut merged = TermTallies {
        hashtags_full: BTreeMap::new(),
        hashtags_active: BTreeMap::new(),
        words_full: BTreeMap::new(),
        words_active: BTreeMap::new(),
    };
    for tallies in per_ego {
        merge_tally(&mut merged.hashtags_full, tallies.hashtags_full);
        merge_tally(&mut merged.hashtags_active, tallies.hashtags_active);
        merge_tally(&mut merged.words_full, tallies.words_full);
        merge_tally(&mut merged.words_active, tallies.words_active);
    }
    Ok(merged)
}

fn push_term_rows(csv: &mut String, dataset: &str, terms: &[TermStats]) {
    for term in terms {
        let topic = term.topic.map(|t| t.as_str()).unwrap_or("");
        csv.push_str(&format!(
            "{dataset},{},{},{},{topic}\n",
            term.rank, term.term, term.mentions
        ));
    }
}

/// Rank terms, label topics, and correlate topic features against active
/// negativity across datasets.
pub fn run_topics(out: &Path, config: &PipelineConfig) -> Result<Vec<String>> {
    let stopwords = match &config.topics.stopword_dir {
        Some(dir) => {
            require_file("stopword dir", dir)?;
            StopwordSets::from_dir(dir)?
        }
        None => StopwordSets::default(),
    };
    let labelmap = match &config.topics.labelmap {
        Some(path) => {
            require_file("topic labelmap", path)?;
            TopicLabelMap::from_csv(path)?
        }
        None => TopicLabelMap::default(),
    };
    let k = config.topics.top_k;

    let mut hashtags_full_csv = String::from("dataset,rank,term,mentions,topic\n");
    let mut hashtags_active_csv = hashtags_full_csv.clone();
    let mut words_full_csv = hashtags_full_csv.clone();
    let mut words_active_csv = hashtags_full_csv.clone();
    let mut correlation_inputs = Vec::new();
    let mut notes = Vec::new();

    for name in stage_datasets(out, "signed")? {
        let timelines: Vec<EgoTimeline> = read_stage_rows(out, "ingested", &name)?;
        let egos: Vec<PreprocessedEgo> = read_stage_rows(out, "preprocessed", &name)?;
        let networks: Vec<SignedEgoNetwork> = read_stage_rows(out, "signed", &name)?;
        let timeline_map: BTreeMap<String, &EgoTimeline> = timelines
            .iter()
            .map(|t| (t.ego_id.clone(), t))
            .collect();
        let tallies = tally_dataset_terms(
            &timeline_map,
            &egos,
            &stopwords,
            config.thresholds.active_min_frequency,
        )?;

        let rank = |tally: &BTreeMap<String, u64>, kind| -> Vec<TermStats> {
            let (mut terms, _) = top_k_terms(tally, kind, k);
            topics::assign_topic_labels(&mut terms, &labelmap);
            terms
        };
        let hashtags_full = rank(&tallies.hashtags_full, TermKind::Hashtag);
        let hashtags_active = rank(&tallies.hashtags_active, TermKind::Hashtag);
        let words_full = rank(&tallies.words_full, TermKind::Word);
        let words_active = rank(&tallies.words_active, TermKind::Word);
        push_term_rows(&mut hashtags_full_csv, &name, &hashtags_full);
        push_term_rows(&mut hashtags_active_csv, &name, &hashtags_active);
        push_term_rows(&mut words_full_csv, &name, &words_full);
        push_term_rows(&mut words_active_csv, &name, &words_active);

        let active: Vec<_> = networks
            .iter()
            .flat_map(|n| n.relationships.iter().cloned())
            .collect();
        let active_negativity = negativity_percentage(&active)?;
        correlation_inputs.push((topic_features(&name, &hashtags_active), active_negativity));
        notes.push(format!(
            "{name}: {} hashtags, {} words ranked",
            hashtags_full.len(),
            words_full.len()
        ));
    }

    let correlations = topics::correlate_topic_features(&correlation_inputs)?;
    let mut correlations_csv = String::from("feature,r,df,p_two_tailed\n");
    for result in &correlations {
        correlations_csv.push_str(&format!(
            "{},{:.6},{},{:.6}\n",
            result.feature, result.r, result.df, result.p_two_tailed
        ));
    }

    write_report_file(&out.join("top20_hashtags_full.csv"), &hashtags_full_csv)?;
    write_report_file(&out.join("top20_hashtags_active.csv"), &hashtags_active_csv)?;
    write_report_file(&out.join("top20_words_full.csv"), &words_full_csv)?;
    write_report_file(&out.join("top20_words_active.csv"), &words_active_csv)?;
    write_report_file(&out.join("correlations.csv"), &correlations_csv)?;
    notes.push(format!(
        "{} topic features correlated over {} datasets",
        correlations.len(),
        correlation_inputs.len()
    ));
    Ok(notes)
}
