//! End-to-end acceptance checks. Each test prints exactly one
//! `ACCEPTANCE cNN PASS/FAIL` line so a full run can be scanned at a glance.
//! The clustering checks (c02, c03, c05) share one generated 200-ego panel.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use senm::analysis::{mean_circle_sizes, per_circle_negativity, t_interval_95};
use senm::config::PipelineConfig;
use senm::pipeline::{run_circles, run_ingest, run_preprocess, run_sign, CircleRow};
use senm::signing::{sign_relationship, Sign, SignedEgoNetwork};
use senm::simgen::DatasetTruth;
use senm::topics::pearson_with_p;
use tempfile::TempDir;

fn finish(id: &str, note: &str, problems: Vec<String>) {
    if problems.is_empty() {
        println!("ACCEPTANCE {id} PASS: {note}");
    } else {
        let detail = problems.join("; ");
        println!("ACCEPTANCE {id} FAIL: {detail}");
        panic!("{id}: {detail}");
    }
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    let text =
        fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    text.lines()
        .skip(1)
        .map(|line| {
            serde_json::from_str(line).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
        })
        .collect()
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_senm"))
        .args(args)
        .output()
        .expect("spawn senm")
}

fn cli_ok(args: &[&str]) {
    let output = cli(args);
    assert!(
        output.status.success(),
        "senm {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text =
        fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    text.lines()
        .skip(1)
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect()
}

// c01: the sign rule must match exact integer arithmetic on every small
// tally. `neg/total > 0.17` with total <= 50 never lands on the boundary,
// so `100*neg > 17*total` is an equivalent integer oracle.

#[test]
fn c01_sign_rule_matches_integer_oracle_on_all_small_tallies() {
    let started = Instant::now();
    let mut problems = Vec::new();
    let mut checked = 0u32;
    for total in 0u32..=50 {
        for neg in 0..=total {
            let got = sign_relationship(neg, total, 0.17);
            let want = if total == 0 {
                Sign::Unsigned
            } else if 100 * neg > 17 * total {
                Sign::Negative
            } else {
                Sign::Positive
            };
            if got != want {
                problems.push(format!("tally ({neg}/{total}) signed {got:?}, wanted {want:?}"));
            }
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(1) {
        problems.push(format!("exhaustive sweep took {elapsed:?}, budget 1s"));
    }
    finish(
        "c01",
        &format!("{checked} tallies match the integer rule in {elapsed:?}"),
        problems,
    );
}

// Shared 200-ego panel: five frequency levels in geometric ratio 3, lognormal
// spread 0.15, planted per-level negativity declining outward. c02, c03, and
// c05 all read this one run.

const PLANTED_SIZES: [f64; 5] = [1.5, 5.0, 15.0, 45.0, 135.0];
const PLANTED_NEGATIVITY_PCT: [f64; 5] = [80.0, 70.0, 60.0, 50.0, 40.0];

const PANEL_SCENARIO: &str = r#"
[[dataset]]
name = "panel"
seed = 777
ego_count = 200
frequency_sigma = 0.15
negativity_by_level = [0.8, 0.7, 0.6, 0.5, 0.4]
inactive_fraction = 0.25
inactive_negativity = 0.1
neutral_fraction = 0.4
window_years = 2.0
filler_posts = 1000

[[dataset.level]]
cumulative = 1.5
frequency = 121.5

[[dataset.level]]
cumulative = 5.0
frequency = 40.5

[[dataset.level]]
cumulative = 15.0
frequency = 13.5

[[dataset.level]]
cumulative = 45.0
frequency = 4.5

[[dataset.level]]
cumulative = 135.0
frequency = 1.5
"#;

struct SharedRun {
    _dir: TempDir,
    truth: DatasetTruth,
    circles: Vec<CircleRow>,
    networks: Vec<SignedEgoNetwork>,
    elapsed: Duration,
}

static SHARED: OnceLock<SharedRun> = OnceLock::new();

fn shared_run() -> &'static SharedRun {
    SHARED.get_or_init(|| {
        let dir = TempDir::new().expect("tempdir");
        let gen_dir = dir.path().join("gen");
        let out = dir.path().join("out");
        let scenario_path = dir.path().join("scenario.toml");
        fs::write(&scenario_path, PANEL_SCENARIO).expect("write scenario");
        let scenario =
            senm::simgen::ScenarioConfig::from_path(&scenario_path).expect("parse scenario");
        senm::simgen::run_scenario(&scenario, &gen_dir).expect("generate panel");
        let truth =
            DatasetTruth::from_path(&gen_dir.join("panel.truth.json")).expect("truth manifest");

        let mut config = PipelineConfig::default();
        config.circles.log_scale = true;
        config.circles.bandwidth_quantile = 0.4;

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool");
        let started = Instant::now();
        pool.install(|| {
            run_ingest(&gen_dir, &out)?;
            run_preprocess(&out, &config)?;
            run_circles(&out, &config)
        })
        .expect("staged run");
        let elapsed = started.elapsed();
        run_sign(&out, &config).expect("sign stage");

        let circles = read_rows(&out.join("circles").join("panel.jsonl"));
        let networks = read_rows(&out.join("signed").join("panel.jsonl"));
        SharedRun {
            _dir: dir,
            truth,
            circles,
            networks,
            elapsed,
        }
    })
}

#[test]
fn c02_clustering_recovers_planted_levels_quickly() {
    let run = shared_run();
    let mut problems = Vec::new();

    let by_id: BTreeMap<&str, &CircleRow> =
        run.circles.iter().map(|r| (r.ego_id.as_str(), r)).collect();
    let mut egos_at_five = 0usize;
    let mut alters_total = 0u64;
    let mut alters_matched = 0u64;
    for ego in &run.truth.egos {
        let circles = by_id
            .get(ego.ego_id.as_str())
            .and_then(|r| r.circles.as_ref());
        if circles.map(|c| c.optimum_circles) == Some(5) {
            egos_at_five += 1;
        }
        for alter in &ego.alters {
            let Some(level) = alter.level else { continue };
            alters_total += 1;
            if let Some(c) = circles {
                if c.membership.get(&alter.alter_id) == Some(&level) {
                    alters_matched += 1;
                }
            }
        }
    }
    let ego_rate = 100.0 * egos_at_five as f64 / run.truth.egos.len() as f64;
    let alter_rate = 100.0 * alters_matched as f64 / alters_total as f64;
    if ego_rate < 95.0 {
        problems.push(format!(
            "only {egos_at_five}/{} egos ({ego_rate:.1}%) recovered 5 circles",
            run.truth.egos.len()
        ));
    }
    if alter_rate < 95.0 {
        problems.push(format!(
            "only {alters_matched}/{alters_total} alters ({alter_rate:.1}%) on their planted level"
        ));
    }
    if run.elapsed >= Duration::from_secs(10) {
        problems.push(format!(
            "single-threaded run took {:?}, budget 10s",
            run.elapsed
        ));
    }
    finish(
        "c02",
        &format!(
            "{ego_rate:.1}% egos at 5 circles, {alter_rate:.1}% alters on level, {:?} single-threaded",
            run.elapsed
        ),
        problems,
    );
}

#[test]
fn c03_mean_circle_sizes_track_planted_sizes() {
    let run = shared_run();
    let mut problems = Vec::new();
    let sizes = mean_circle_sizes(&run.networks, 5).expect("egos at the 5-circle filter");
    if sizes.len() != PLANTED_SIZES.len() {
        problems.push(format!("{} mean sizes, wanted 5", sizes.len()));
    }
    for (k, (&got, &want)) in sizes.iter().zip(PLANTED_SIZES.iter()).enumerate() {
        let rel = (got - want).abs() / want;
        if rel > 0.10 {
            problems.push(format!(
                "circle {} mean size {got:.3} is {:.1}% off the planted {want}",
                k + 1,
                100.0 * rel
            ));
        }
    }
    finish(
        "c03",
        &format!(
            "mean sizes {:?} within 10% of {:?}",
            sizes.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            PLANTED_SIZES
        ),
        problems,
    );
}

#[test]
fn c05_circle_negativity_declines_outward_near_plants() {
    let run = shared_run();
    let mut problems = Vec::new();
    let rows = per_circle_negativity(&run.networks, 5, false).expect("per-circle rows");
    if rows.len() != 5 {
        problems.push(format!("{} circle rows, wanted 5", rows.len()));
    }
    for pair in rows.windows(2) {
        if pair[0].negativity_pct <= pair[1].negativity_pct {
            problems.push(format!(
                "circle {} ({:.2}%) not more negative than circle {} ({:.2}%)",
                pair[0].circle, pair[0].negativity_pct, pair[1].circle, pair[1].negativity_pct
            ));
        }
    }
    for (row, &want) in rows.iter().zip(PLANTED_NEGATIVITY_PCT.iter()) {
        let off = (row.negativity_pct - want).abs();
        if off > 5.0 {
            problems.push(format!(
                "circle {} negativity {:.2}% is {off:.2}pp from the planted {want}%",
                row.circle, row.negativity_pct
            ));
        }
    }
    finish(
        "c05",
        &format!(
            "circle negativity {:?} monotone and within 5pp of {:?}",
            rows.iter()
                .map(|r| (r.negativity_pct * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            PLANTED_NEGATIVITY_PCT
        ),
        problems,
    );
}

// c04: when contact frequency and planted negativity rise together, every
// dataset's active network must read more negative than its full network.

#[test]
fn c04_active_networks_read_more_negative_than_full() {
    let dir = TempDir::new().expect("tempdir");
    let gen_dir = dir.path().join("gen");
    let out = dir.path().join("out");
    let scenario_path = dir.path().join("scenario.toml");
    let mut scenario = String::new();
    let plants: [(&str, [f64; 3]); 4] = [
        ("alpha", [0.60, 0.40, 0.25]),
        ("bravo", [0.50, 0.35, 0.20]),
        ("carol", [0.70, 0.50, 0.30]),
        ("delta", [0.45, 0.30, 0.18]),
    ];
    for (i, (name, negativity)) in plants.iter().enumerate() {
        scenario.push_str(&format!(
            r#"
[[dataset]]
name = "{name}"
seed = {seed}
ego_count = 8
frequency_sigma = 0.1
negativity_by_level = [{n0}, {n1}, {n2}]
inactive_fraction = 0.3
inactive_negativity = 0.05
filler_posts = 2000

[[dataset.level]]
cumulative = 2.0
frequency = 52.0

[[dataset.level]]
cumulative = 5.0
frequency = 12.0

[[dataset.level]]
cumulative = 15.0
frequency = 2.0
"#,
            seed = 100 + i,
            n0 = negativity[0],
            n1 = negativity[1],
            n2 = negativity[2],
        ));
    }
    fs::write(&scenario_path, scenario).expect("write scenario");
    cli_ok(&[
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    cli_ok(&[
        "pipeline",
        "--data",
        gen_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let mut problems = Vec::new();
    let rows = read_csv_rows(&out.join("table3.csv"));
    if rows.len() != plants.len() {
        problems.push(format!("{} table rows, wanted {}", rows.len(), plants.len()));
    }
    let mut deltas = Vec::new();
    for row in &rows {
        let delta: f64 = row[3].parse().expect("delta column");
        deltas.push(format!("{}: {delta:+.2}pp", row[0]));
        if delta <= 0.0 {
            problems.push(format!(
                "dataset {} active {} not above full {}",
                row[0], row[2], row[1]
            ));
        }
    }
    finish(
        "c04",
        &format!("active beats full everywhere ({})", deltas.join(", ")),
        problems,
    );
}

// c06: p-value calibration at the r=-0.64, n=11 operating point, plus
// symmetry and affine invariance over 1,000 random vectors.

fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn c06_correlation_p_value_is_calibrated_and_invariant() {
    let mut problems = Vec::new();

    // Build y along x with an exactly planted correlation: y = r*u + s*e
    // where u is standardized x and e an orthogonal standardized carrier.
    let r_target = -0.6371f64;
    let x: Vec<f64> = (1..=11).map(|i| i as f64).collect();
    let carrier: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let xm = mean(&x);
    let u: Vec<f64> = x.iter().map(|v| v - xm).collect();
    let unorm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = u.iter().map(|v| v / unorm).collect();
    let cm = mean(&carrier);
    let mut e: Vec<f64> = carrier.iter().map(|v| v - cm).collect();
    let proj: f64 = e.iter().zip(&u).map(|(a, b)| a * b).sum();
    for (ei, ui) in e.iter_mut().zip(&u) {
        *ei -= proj * ui;
    }
    let enorm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e: Vec<f64> = e.iter().map(|v| v / enorm).collect();
    let spread = (1.0 - r_target * r_target).sqrt();
    let y: Vec<f64> = u
        .iter()
        .zip(&e)
        .map(|(ui, ei)| r_target * ui + spread * ei)
        .collect();
    assert_eq!(y.len(), 11);

    let result = pearson_with_p(&x, &y, "pair").expect("correlation");
    if (result.r * 100.0).round() as i64 != -64 {
        problems.push(format!("r {:.4} does not round to -0.64", result.r));
    }
    if result.df != 9 {
        problems.push(format!("df {} for 11 points, wanted 9", result.df));
    }
    if (result.p_two_tailed - 0.035).abs() > 0.001 {
        problems.push(format!(
            "p {:.6} outside 0.035 +/- 0.001 at r {:.4}",
            result.p_two_tailed, result.r
        ));
    }

    let mut state = 0x5eed_c06u64;
    let mut trials = 0;
    for _ in 0..1000 {
        let len = 3 + (lcg(&mut state) * 14.0) as usize;
        let mut xs: Vec<f64> = (0..len).map(|_| lcg(&mut state)).collect();
        let ys: Vec<f64> = (0..len).map(|_| lcg(&mut state)).collect();
        xs[0] += 1.5;
        let Ok(base) = pearson_with_p(&xs, &ys, "t") else {
            continue;
        };
        trials += 1;
        let flipped = pearson_with_p(&ys, &xs, "t").expect("swap keeps variance");
        if (base.r - flipped.r).abs() > 1e-12 || (base.p_two_tailed - flipped.p_two_tailed).abs() > 1e-12
        {
            problems.push(format!(
                "asymmetric at n={len}: r {} vs {}",
                base.r, flipped.r
            ));
            break;
        }
        let a = 0.5 + 3.0 * lcg(&mut state);
        let b = 10.0 * lcg(&mut state) - 5.0;
        let scaled: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
        let affine = pearson_with_p(&scaled, &ys, "t").expect("scaling keeps variance");
        if (affine.r - base.r).abs() > 1e-9 {
            problems.push(format!(
                "affine drift at n={len}: r {} vs {}",
                affine.r, base.r
            ));
            break;
        }
        let negated: Vec<f64> = xs.iter().map(|v| -a * v + b).collect();
        let mirrored = pearson_with_p(&negated, &ys, "t").expect("negation keeps variance");
        if (mirrored.r + base.r).abs() > 1e-9 {
            problems.push(format!(
                "sign flip drift at n={len}: r {} vs {}",
                mirrored.r, base.r
            ));
            break;
        }
    }
    if trials < 990 {
        problems.push(format!("only {trials} usable random trials"));
    }
    finish(
        "c06",
        &format!(
            "r {:.4} gives p {:.4}; symmetry and affine invariance over {trials} trials",
            result.r, result.p_two_tailed
        ),
        problems,
    );
}

// c07: the t interval around {4,5,6} and the 1/sqrt(n) width law.

#[test]
fn c07_interval_width_follows_root_n() {
    let mut problems = Vec::new();
    let ci = t_interval_95(&[4.0, 5.0, 6.0]).expect("interval");
    let half = (ci.ci_high - ci.ci_low) / 2.0;
    if (ci.mean - 5.0).abs() > 1e-9 {
        problems.push(format!("mean {} for {{4,5,6}}", ci.mean));
    }
    if (half - 2.484).abs() > 1e-3 {
        problems.push(format!("half-width {half:.6}, wanted 2.484 +/- 0.001"));
    }

    let half_at = |n: usize| {
        let values: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 4.0 } else { 6.0 }).collect();
        let ci = t_interval_95(&values).expect("interval");
        (ci.ci_high - ci.ci_low) / 2.0
    };
    let h25 = half_at(25);
    let h100 = half_at(100);
    let h400 = half_at(400);
    for (label, ratio) in [("25/100", h25 / h100), ("100/400", h100 / h400)] {
        if !(2.0 * 0.85..=2.0 * 1.15).contains(&ratio) {
            problems.push(format!(
                "width ratio {label} = {ratio:.3}, outside 2.0 +/- 15%"
            ));
        }
    }
    finish(
        "c07",
        &format!(
            "{{4,5,6}} gives 5.0 +/- {half:.4}; width ratios {:.3} and {:.3} track sqrt(n)",
            h25 / h100,
            h100 / h400
        ),
        problems,
    );
}

// c08: two planted dataset families, one general-topic-heavy with low
// negativity, one specific-topic-heavy with high negativity. The count of
// general-topic terms must correlate negatively with dataset negativity.

#[test]
fn c08_general_topic_count_correlates_negatively_with_negativity() {
    let dir = TempDir::new().expect("tempdir");
    let gen_dir = dir.path().join("gen");
    let out = dir.path().join("out");
    let scenario_path = dir.path().join("scenario.toml");

    let general_pool = ["cooking", "gardening", "hiking", "movies", "music", "travel", "weather", "sports"];
    let specific_pool = [
        ("election", "political"),
        ("vaccines", "covid"),
        ("emissions", "climate"),
        ("scripture", "religious"),
        ("headlines", "news"),
        ("senate", "political"),
    ];
    let mut scenario = String::new();
    for i in 0..6 {
        let base = 0.14 + 0.03 * i as f64;
        let general_terms = 6 + i % 3;
        scenario.push_str(&dataset_block(
            &format!("chatter{i}"),
            200 + i as u64,
            [base, base * 0.8, base * 0.6],
        ));
        for term in general_pool.iter().take(general_terms) {
            scenario.push_str(&term_block(term, "general", 2));
        }
        scenario.push_str(&term_block("election", "political", 1));
    }
    for i in 0..6 {
        let base = 0.55 + 0.05 * i as f64;
        let general_terms = 1 + i % 2;
        scenario.push_str(&dataset_block(
            &format!("debate{i}"),
            300 + i as u64,
            [base, base * 0.9, base * 0.8],
        ));
        for (term, topic) in &specific_pool {
            scenario.push_str(&term_block(term, topic, 2));
        }
        for term in general_pool.iter().take(general_terms) {
            scenario.push_str(&term_block(term, "general", 1));
        }
    }
    fs::write(&scenario_path, scenario).expect("write scenario");

    cli_ok(&[
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    let config_path = dir.path().join("config.toml");
    fs::write(
        &config_path,
        format!(
            "[topics]\nlabelmap = \"{}\"\n",
            gen_dir.join("labelmap.csv").display()
        ),
    )
    .expect("write config");
    cli_ok(&[
        "pipeline",
        "--data",
        gen_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
    ]);

    let mut problems = Vec::new();
    let rows = read_csv_rows(&out.join("correlations.csv"));
    let row = rows.iter().find(|r| r[0] == "general_count");
    match row {
        None => problems.push("no general_count correlation row".into()),
        Some(row) => {
            let r: f64 = row[1].parse().expect("r column");
            let p: f64 = row[3].parse().expect("p column");
            if r >= 0.0 {
                problems.push(format!("general_count r {r:.4} is not negative"));
            }
            if p >= 0.05 {
                problems.push(format!("general_count p {p:.4} is not below 0.05"));
            }
            if problems.is_empty() {
                finish(
                    "c08",
                    &format!("general_count r {r:.3}, p {p:.5} over 12 datasets"),
                    problems,
                );
                return;
            }
        }
    }
    finish("c08", "", problems);
}

fn dataset_block(name: &str, seed: u64, negativity: [f64; 3]) -> String {
    format!(
        r#"
[[dataset]]
name = "{name}"
seed = {seed}
ego_count = 6
frequency_sigma = 0.1
negativity_by_level = [{}, {}, {}]
inactive_fraction = 0.25
inactive_negativity = 0.05
filler_posts = 2000

[[dataset.level]]
cumulative = 2.0
frequency = 52.0

[[dataset.level]]
cumulative = 5.0
frequency = 12.0

[[dataset.level]]
cumulative = 12.0
frequency = 2.0
"#,
        negativity[0], negativity[1], negativity[2]
    )
}

fn term_block(term: &str, topic: &str, weight: u32) -> String {
    format!(
        "\n[[dataset.term]]\nterm = \"{term}\"\ntopic = \"{topic}\"\nweight = {weight}\n"
    )
}

// c09: the full pipeline must be byte-identical across repeat runs and
// across --jobs 1 vs --jobs 8.

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("read dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, files);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .to_string_lossy()
                    .into_owned();
                files.insert(rel, fs::read(&path).expect("read file"));
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(dir, dir, &mut files);
    files
}

#[test]
fn c09_pipeline_output_is_byte_stable_across_runs_and_jobs() {
    let dir = TempDir::new().expect("tempdir");
    let gen_dir = dir.path().join("gen");
    let scenario_path = dir.path().join("scenario.toml");
    let mut scenario = String::new();
    for (i, name) in ["north", "south"].iter().enumerate() {
        scenario.push_str(&dataset_block(name, 900 + i as u64, [0.5, 0.35, 0.2]));
        scenario.push_str(&term_block("election", "political", 2));
        scenario.push_str(&term_block("gardening", "general", 1));
        scenario.push_str(
            "\n[[dataset.location]]\nlabel = \"Milan\"\ncountry = \"Italy\"\ncontinent = \"Europe\"\nweight = 2\n",
        );
        scenario.push_str(
            "\n[[dataset.location]]\nlabel = \"Porto\"\ncountry = \"Portugal\"\ncontinent = \"Europe\"\nweight = 1\n",
        );
    }
    fs::write(&scenario_path, scenario).expect("write scenario");
    cli_ok(&[
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    let config_path = dir.path().join("config.toml");
    fs::write(
        &config_path,
        format!(
            "[topics]\nlabelmap = \"{}\"\n\n[drift_provider]\nname = \"shifted\"\nshift_probability = 0.25\nshift_seed = 99\n",
            gen_dir.join("labelmap.csv").display()
        ),
    )
    .expect("write config");

    let run = |out: &Path, jobs: &str| {
        cli_ok(&[
            "pipeline",
            "--data",
            gen_dir.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--config",
            config_path.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        snapshot(out)
    };
    let first = run(&dir.path().join("run_a"), "1");
    let second = run(&dir.path().join("run_b"), "1");
    let third = run(&dir.path().join("run_c"), "8");

    let mut problems = Vec::new();
    if first.len() < 13 {
        problems.push(format!("only {} output files", first.len()));
    }
    for (label, other) in [("repeat run", &second), ("--jobs 8 run", &third)] {
        if first.keys().ne(other.keys()) {
            problems.push(format!("{label} produced a different file set"));
            continue;
        }
        for (path, bytes) in &first {
            if other[path] != *bytes {
                problems.push(format!("{label} differs in {path}"));
                break;
            }
        }
    }
    finish(
        "c09",
        &format!("{} files byte-identical across reruns and thread counts", first.len()),
        problems,
    );
}

// c10: a seeded drift provider that relabels a quarter of neutral answers as
// negative must push every dataset's negativity strictly above the base
// provider's, in both the full and the active columns.

#[test]
fn c10_seeded_drift_provider_raises_every_negativity_row() {
    let dir = TempDir::new().expect("tempdir");
    let gen_dir = dir.path().join("gen");
    let out = dir.path().join("out");
    let scenario_path = dir.path().join("scenario.toml");
    let mut scenario = String::new();
    for (i, name) in ["east", "west", "rift"].iter().enumerate() {
        scenario.push_str(&format!(
            r#"
[[dataset]]
name = "{name}"
seed = {seed}
ego_count = 8
frequency_sigma = 0.1
negativity_by_level = [0.3, 0.2, 0.1]
inactive_fraction = 0.25
inactive_negativity = 0.05
neutral_fraction = 0.5
filler_posts = 2000

[[dataset.level]]
cumulative = 2.0
frequency = 52.0

[[dataset.level]]
cumulative = 5.0
frequency = 12.0

[[dataset.level]]
cumulative = 15.0
frequency = 2.0
"#,
            seed = 400 + i,
        ));
    }
    fs::write(&scenario_path, scenario).expect("write scenario");
    let config_path = dir.path().join("config.toml");
    fs::write(
        &config_path,
        "[drift_provider]\nname = \"shifted\"\nshift_probability = 0.25\nshift_seed = 4242\n",
    )
    .expect("write config");

    cli_ok(&[
        "simulate",
        "--scenario",
        scenario_path.to_str().unwrap(),
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    cli_ok(&[
        "pipeline",
        "--data",
        gen_dir.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
    ]);

    let mut problems = Vec::new();
    let rows = read_csv_rows(&out.join("table2.csv"));
    let mut by_dataset: BTreeMap<&str, Vec<&Vec<String>>> = BTreeMap::new();
    for row in &rows {
        by_dataset.entry(row[0].as_str()).or_default().push(row);
    }
    if by_dataset.len() != 3 {
        problems.push(format!("{} datasets in the provider table", by_dataset.len()));
    }
    let mut moves = Vec::new();
    for (dataset, rows) in &by_dataset {
        if rows.len() != 2 {
            problems.push(format!("{dataset}: {} provider rows, wanted 2", rows.len()));
            continue;
        }
        let field = |row: &Vec<String>, i: usize| -> f64 { row[i].parse().expect("pct column") };
        let (base, drift) = (rows[0], rows[1]);
        if !drift[1].starts_with("shifted:") {
            problems.push(format!("{dataset}: second row {} is not the drift provider", drift[1]));
        }
        let full_jump = field(drift, 2) - field(base, 2);
        let active_jump = field(drift, 3) - field(base, 3);
        if full_jump <= 0.0 {
            problems.push(format!("{dataset}: full negativity moved {full_jump:+.4}pp"));
        }
        if active_jump <= 0.0 {
            problems.push(format!("{dataset}: active negativity moved {active_jump:+.4}pp"));
        }
        moves.push(format!("{dataset} +{full_jump:.1}/+{active_jump:.1}pp"));
    }
    finish(
        "c10",
        &format!("drift raises full/active negativity everywhere ({})", moves.join(", ")),
        problems,
    );
}
