//! Nested circle structure per ego: 1-D flat-kernel mean shift over
//! annualized contact frequencies, bandwidth estimated from nearest-neighbor
//! distances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocessing::RelationshipAggregate;

/// Mean-shift tuning. `bandwidth_quantile` picks which nearest neighbor
/// drives the bandwidth estimate; `log_scale` clusters `ln(frequency)`
/// instead of the raw value, which suits geometrically spaced circle levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleParams {
    pub bandwidth_quantile: f64,
    pub max_iterations: usize,
    pub convergence_factor: f64,
    pub log_scale: bool,
}

impl Default for CircleParams {
    fn default() -> Self {
        CircleParams {
            bandwidth_quantile: 0.3,
            max_iterations: 500,
            convergence_factor: 1e-6,
            log_scale: false,
        }
    }
}

/// Mean-shift result for one ego's active network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleStructure {
    pub ego_id: String,
    pub optimum_circles: usize,
    /// Mean raw frequency per cluster, strictly decreasing; cluster 0 is the
    /// highest-frequency (innermost) circle.
    pub cluster_means: Vec<f64>,
    pub membership: BTreeMap<String, usize>,
    /// Entry `k` counts the alters in clusters `0..=k`.
    pub nested_sizes: Vec<usize>,
}

/// Mean distance to each point's `ceil(quantile * (n-1))`-th nearest
/// neighbor; falls back to 10% of the data range when that distance is zero.
pub fn estimate_bandwidth(frequencies: &[f64], quantile: f64) -> Result<f64> {
    let n = frequencies.len();
    if n < 2 {
        return Err(Error::DegenerateInput);
    }
    let mut sorted = frequencies.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
    let range = sorted[n - 1] - sorted[0];
    if range == 0.0 {
        return Err(Error::DegenerateInput);
    }

    let k = ((quantile * (n - 1) as f64).ceil() as usize).clamp(1, n - 1);
    let mut sum = 0.0;
    for i in 0..n {
        // k-th smallest |sorted[j] - sorted[i]| via two-pointer walk.
        let mut lo = i;
        let mut hi = i;
        let mut dist = 0.0;
        for _ in 0..k {
            let left = if lo > 0 {
                sorted[i] - sorted[lo - 1]
            } else {
                f64::INFINITY
            };
            let right = if hi + 1 < n {
                sorted[hi + 1] - sorted[i]
            } else {
                f64::INFINITY
            };
            if left <= right {
                lo -= 1;
                dist = left;
            } else {
                hi += 1;
                dist = right;
            }
        }
        sum += dist;
    }
    let bandwidth = sum / n as f64;
    if bandwidth > 0.0 {
        Ok(bandwidth)
    } else {
        Ok(0.1 * range)
    }
}

/// Flat-kernel mean shift on a line. Every point seeds an iteration that
/// moves to the mean of the points within `bandwidth` until the shift drops
/// below `convergence_factor * bandwidth` or `max_iterations` passes.
/// Converged seeds closer than `bandwidth` merge; each merged mode is the
/// mean of its member points. Modes come back sorted descending, assignments
/// map each input point to its nearest mode (index into `modes`).
pub fn mean_shift_1d(
    frequencies: &[f64],
    bandwidth: f64,
    params: &CircleParams,
) -> (Vec<f64>, Vec<usize>) {
    assert!(bandwidth > 0.0, "bandwidth must be positive");
    let n = frequencies.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        frequencies[a]
            .partial_cmp(&frequencies[b])
            .expect("finite frequencies")
    });
    let sorted: Vec<f64> = order.iter().map(|&i| frequencies[i]).collect();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let window_mean = |x: f64| -> f64 {
        let lo = sorted.partition_point(|&v| v < x - bandwidth);
        let hi = sorted.partition_point(|&v| v <= x + bandwidth);
        (prefix[hi] - prefix[lo]) / (hi - lo) as f64
    };

    let tolerance = params.convergence_factor * bandwidth;
    // Seeds in ascending value order; equal values converge identically.
    let mut converged = vec![0.0f64; n];
    let mut last_seed = f64::NAN;
    let mut last_result = 0.0;
    for s in 0..n {
        let seed = sorted[s];
        if seed == last_seed {
            converged[s] = last_result;
            continue;
        }
        let mut x = seed;
        for _ in 0..params.max_iterations {
            let next = window_mean(x);
            let shift = (next - x).abs();
            x = next;
            if shift < tolerance {
                break;
            }
        }
        converged[s] = x;
        last_seed = seed;
        last_result = x;
    }

    // Ascending merge of converged seeds: a seed joins the open group while
    // it stays within bandwidth of the group's running converged mean. Each
    // merged mode is the mean of the member points behind its seeds.
    let mut modes_asc: Vec<f64> = Vec::new();
    let mut group_sizes: Vec<usize> = Vec::new();
    let mut group_conv_sum = 0.0;
    let mut group_count = 0usize;
    for s in 0..n {
        if group_count > 0 && (converged[s] - group_conv_sum / group_count as f64) > bandwidth {
            group_sizes.push(group_count);
            group_conv_sum = 0.0;
            group_count = 0;
        }
        if group_count == 0 {
            modes_asc.push(0.0);
        }
        let g = modes_asc.len() - 1;
        modes_asc[g] += sorted[s];
        group_conv_sum += converged[s];
        group_count += 1;
    }
    group_sizes.push(group_count);
    for (g, &count) in group_sizes.iter().enumerate() {
        modes_asc[g] /= count as f64;
    }

    // Cluster 0 is the highest mode.
    let mut modes: Vec<f64> = modes_asc;
    modes.reverse();

    let assignment: Vec<usize> = {
        let mut by_original = vec![0usize; n];
        for s in 0..n {
            let x = sorted[s];
            let mut best = 0usize;
            let mut best_dist = f64::INFINITY;
            for (m, &mode) in modes.iter().enumerate() {
                let d = (x - mode).abs();
                if d < best_dist {
                    best_dist = d;
                    best = m;
                }
            }
            by_original[order[s]] = best;
        }
        by_original
    };

    (modes, assignment)
}

/// Cluster an ego's active alters into circles. Frequencies are optionally
/// log-transformed for bandwidth estimation and mode seeking; reported
/// cluster means are always raw-frequency means of the members.
pub fn cluster_ego(
    ego_id: &str,
    active: &[RelationshipAggregate],
    params: &CircleParams,
) -> Result<CircleStructure> {
    if active.is_empty() {
        return Err(Error::EmptyNetwork(ego_id.to_string()));
    }
    let raw: Vec<f64> = active.iter().map(|a| a.annualized_frequency).collect();
    let space: Vec<f64> = if params.log_scale {
        raw.iter().map(|f| f.ln()).collect()
    } else {
        raw.clone()
    };
    let bandwidth = estimate_bandwidth(&space, params.bandwidth_quantile)?;
    let (modes, assignment) = mean_shift_1d(&space, bandwidth, params);
    build_circles(ego_id, active, &assignment, modes.len())
}

/// Assemble the nested structure from a cluster assignment. Clusters are
/// reordered by mean raw frequency descending and empty clusters dropped.
pub fn build_circles(
    ego_id: &str,
    active: &[RelationshipAggregate],
    assignment: &[usize],
    cluster_count: usize,
) -> Result<CircleStructure> {
    if active.is_empty() {
        return Err(Error::EmptyNetwork(ego_id.to_string()));
    }
    assert_eq!(
        active.len(),
        assignment.len(),
        "assignment must cover all active alters"
    );

    let mut sums = vec![0.0f64; cluster_count];
    let mut counts = vec![0usize; cluster_count];
    for (agg, &c) in active.iter().zip(assignment) {
        sums[c] += agg.annualized_frequency;
        counts[c] += 1;
    }
    let mut clusters: Vec<(f64, usize)> = (0..cluster_count)
        .filter(|&c| counts[c] > 0)
        .map(|c| (sums[c] / counts[c] as f64, c))
        .collect();
    clusters.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite means"));

    let mut remap = vec![usize::MAX; cluster_count];
    for (new_idx, &(_, old_idx)) in clusters.iter().enumerate() {
        remap[old_idx] = new_idx;
    }

    let mut membership = BTreeMap::new();
    let mut sizes = vec![0usize; clusters.len()];
    for (agg, &c) in active.iter().zip(assignment) {
        let idx = remap[c];
        membership.insert(agg.alter_id.clone(), idx);
        sizes[idx] += 1;
    }
    let mut nested_sizes = Vec::with_capacity(sizes.len());
    let mut acc = 0usize;
    for s in sizes {
        acc += s;
        nested_sizes.push(acc);
    }

    Ok(CircleStructure {
        ego_id: ego_id.to_string(),
        optimum_circles: clusters.len(),
        cluster_means: clusters.iter().map(|&(m, _)| m).collect(),
        membership,
        nested_sizes,
    })
}
