//! Dataset-level statistics over signed ego networks: negativity
//! percentages, circle-count and circle-size summaries, per-circle
//! negativity, and location aggregation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::signing::{Sign, SignedEgoNetwork, SignedRelationship};

/// Mean with a Student-t 95% confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiMean {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// `100 * negatives / (negatives + positives)`; unsigned relationships are
/// invisible to both counts.
pub fn negativity_percentage(relationships: &[SignedRelationship]) -> Result<f64> {
    let mut negative = 0u64;
    let mut signed = 0u64;
    for r in relationships {
        match r.sign {
            Sign::Negative => {
                negative += 1;
                signed += 1;
            }
            Sign::Positive => signed += 1,
            Sign::Unsigned => {}
        }
    }
    if signed == 0 {
        return Err(Error::NoSignedRelationships);
    }
    Ok(100.0 * negative as f64 / signed as f64)
}

/// Full and active negativity for one dataset, delta in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityRow {
    pub dataset: String,
    pub full_pct: f64,
    pub active_pct: f64,
    pub delta: f64,
}

pub fn full_vs_active_row(dataset: &str, egos: &[SignedEgoNetwork]) -> Result<NegativityRow> {
    let full: Vec<SignedRelationship> = egos
        .iter()
        .flat_map(|e| e.full_relationships.iter().cloned())
        .collect();
    let active: Vec<SignedRelationship> = egos
        .iter()
        .flat_map(|e| e.relationships.iter().cloned())
        .collect();
    let full_pct = negativity_percentage(&full)?;
    let active_pct = negativity_percentage(&active)?;
    Ok(NegativityRow {
        dataset: dataset.to_string(),
        full_pct,
        active_pct,
        delta: active_pct - full_pct,
    })
}

/// Two-sided 95% Student-t interval around the sample mean.
pub fn t_interval_95(values: &[f64]) -> Result<CiMean> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientEgos {
            needed: 2,
            found: n,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let half = if variance == 0.0 {
        0.0
    } else {
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("valid dof")
            .inverse_cdf(0.975);
        t * (variance / n as f64).sqrt()
    };
    Ok(CiMean {
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
        n,
    })
}

/// Summary of circle counts over non-degenerate egos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleCountSummary {
    pub dataset: String,
    pub mean: CiMean,
    /// Egos whose optimum circle count is exactly the analysis filter
    /// (usually 5).
    pub matching_egos: usize,
}

pub fn mean_optimum_circles(
    dataset: &str,
    egos: &[SignedEgoNetwork],
    filter: usize,
) -> Result<CircleCountSummary> {
    let counts: Vec<f64> = egos
        .iter()
        .filter_map(|e| e.circles.as_ref())
        .map(|c| c.optimum_circles as f64)
        .collect();
    let mean = t_interval_95(&counts).map_err(|e| match e {
        Error::InsufficientEgos { needed, .. } => Error::InsufficientEgos {
            needed,
            found: counts.len(),
        },
        other => other,
    })?;
    let matching = egos
        .iter()
        .filter_map(|e| e.circles.as_ref())
        .filter(|c| c.optimum_circles == filter)
        .count();
    Ok(CircleCountSummary {
        dataset: dataset.to_string(),
        mean,
        matching_egos: matching,
    })
}

/// Per-level mean nested sizes over egos with exactly `filter` circles.
pub fn mean_circle_sizes(egos: &[SignedEgoNetwork], filter: usize) -> Result<Vec<f64>> {
    let mut sums = vec![0.0f64; filter];
    let mut count = 0usize;
    for circles in egos.iter().filter_map(|e| e.circles.as_ref()) {
        if circles.optimum_circles == filter {
            for (i, &s) in circles.nested_sizes.iter().enumerate() {
                sums[i] += s as f64;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoMatchingEgos(filter));
    }
    Ok(sums.into_iter().map(|s| s / count as f64).collect())
}

/// One nested circle's negativity: mean negative count per ego and the
/// percentage of signed members that are negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleNegativityRow {
    pub circle: usize,
    pub mean_negative_count: f64,
    pub negativity_pct: f64,
}

/// Negativity per nested circle over egos with exactly `filter` circles.
/// Counts are cumulative: circle `k` covers clusters `0..=k`. The percentage
/// pools negatives and signed members across egos; with `per_ego_averaging`
/// it instead averages per-ego percentages (egos with no signed member in a
/// circle are skipped for that circle).
pub fn per_circle_negativity(
    egos: &[SignedEgoNetwork],
    filter: usize,
    per_ego_averaging: bool,
) -> Result<Vec<CircleNegativityRow>> {
    let matching: Vec<&SignedEgoNetwork> = egos
        .iter()
        .filter(|e| {
            e.circles
                .as_ref()
                .is_some_and(|c| c.optimum_circles == filter)
        })
        .collect();
    if matching.is_empty() {
        return Err(Error::NoMatchingEgos(filter));
    }

    let mut rows = Vec::with_capacity(filter);
    for circle in 0..filter {
        let mut neg_count_sum = 0u64;
        let mut pooled_neg = 0u64;
        let mut pooled_signed = 0u64;
        let mut pct_sum = 0.0f64;
        let mut pct_egos = 0usize;
        for ego in &matching {
            let mut neg = 0u64;
            let mut signed = 0u64;
            for r in &ego.relationships {
                if r.circle_index.is_some_and(|c| c <= circle) {
                    match r.sign {
                        Sign::Negative => {
                            neg += 1;
                            signed += 1;
                        }
                        Sign::Positive => signed += 1,
                        Sign::Unsigned => {}
                    }
                }
            }
            neg_count_sum += neg;
            pooled_neg += neg;
            pooled_signed += signed;
            if signed > 0 {
                pct_sum += 100.0 * neg as f64 / signed as f64;
                pct_egos += 1;
            }
        }
        let negativity_pct = if per_ego_averaging {
            if pct_egos == 0 {
                0.0
            } else {
                pct_sum / pct_egos as f64
            }
        } else if pooled_signed == 0 {
            0.0
        } else {
            100.0 * pooled_neg as f64 / pooled_signed as f64
        };
        rows.push(CircleNegativityRow {
            circle: circle + 1,
            mean_negative_count: neg_count_sum as f64 / matching.len() as f64,
            negativity_pct,
        });
    }
    Ok(rows)
}

/// Mapping from a declared location string to country and continent.
#[derive(Debug, Clone, Default)]
pub struct LocationMapping {
    map: BTreeMap<String, (String, String)>,
}

impl LocationMapping {
    pub fn new(map: BTreeMap<String, (String, String)>) -> Self {
        LocationMapping { map }
    }

    /// Load from CSV with header `location,country,continent`.
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
            let location = row.get(0).unwrap_or_default().to_string();
            let country = row.get(1).unwrap_or_default().trim().to_string();
            let continent = row.get(2).unwrap_or_default().trim().to_string();
            map.insert(location, (country, continent));
        }
        Ok(LocationMapping { map })
    }

    pub fn resolve(&self, location: Option<&str>) -> (String, String) {
        location
            .and_then(|l| self.map.get(l).cloned())
            .unwrap_or_else(|| ("UNK".to_string(), "UNK".to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub name: String,
    pub egos: usize,
    pub relationships: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationTables {
    pub by_country: Vec<LocationRow>,
    pub by_continent: Vec<LocationRow>,
}

/// Ego and active-relationship counts per country and per continent.
/// Unmapped or missing locations land in `UNK`, which always sorts last.
/// Both tables are unfiltered; report emission may apply a minimum-ego
/// cutoff to the country table.
pub fn aggregate_by_location(
    egos: &[(Option<String>, usize)],
    mapping: &LocationMapping,
) -> LocationTables {
    let mut countries: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut continents: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (location, relationships) in egos {
        let (country, continent) = mapping.resolve(location.as_deref());
        let c = countries.entry(country).or_insert((0, 0));
        c.0 += 1;
        c.1 += relationships;
        let c = continents.entry(continent).or_insert((0, 0));
        c.0 += 1;
        c.1 += relationships;
    }
    let to_rows = |map: BTreeMap<String, (usize, usize)>| -> Vec<LocationRow> {
        let mut rows: Vec<LocationRow> = map
            .into_iter()
            .map(|(name, (egos, relationships))| LocationRow {
                name,
                egos,
                relationships,
            })
            .collect();
        rows.sort_by(|a, b| {
            (a.name == "UNK")
                .cmp(&(b.name == "UNK"))
                .then_with(|| b.egos.cmp(&a.egos))
                .then_with(|| a.name.cmp(&b.name))
        });
        rows
    };
    LocationTables {
        by_country: to_rows(countries),
        by_continent: to_rows(continents),
    }
}
