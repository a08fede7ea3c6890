//! Acceptance suite: one line per criterion with its measured time and limit.
//!
//! Runs without the libtest harness so the report is always printed. Set
//! `TAGATAR_UPDATE_GOLDEN=1` to rewrite the golden report file.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

use tagatar_cli::{run, EXIT_OK};
use tagatar_core::agreement::AgreementTracker;
use tagatar_core::eval::{evaluate, load_predictions};
use tagatar_core::matcher::{asset_score, best_match, TagQuery};
use tagatar_core::schema::{bundled_default_schema, CategoryKind, TagSchema};
use tagatar_core::simulate::{simulate_session, SimulationConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    crate_dir().join("tests/fixtures").join(name)
}

fn r(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

// 1
fn schema_fidelity() -> Check {
    let schema = bundled_default_schema();
    let shape: Vec<(String, usize, usize)> = schema
        .regions
        .iter()
        .map(|r| {
            (
                r.id.clone(),
                r.categories.len(),
                r.categories.iter().map(|c| c.options.len()).sum(),
            )
        })
        .collect();
    let want = vec![
        ("nose".to_string(), 6, 17),
        ("eyes".to_string(), 4, 12),
        ("eyebrows".to_string(), 3, 9),
    ];
    ensure(shape == want, || format!("region shape {shape:?}"))?;
    let pairs = [
        ("nose_width", 5, CategoryKind::Ordinal),
        ("nose_tip_projection", 4, CategoryKind::Ordinal),
        ("nose_bridge_projection", 3, CategoryKind::Ordinal),
        ("nasal_hump", 5, CategoryKind::Discrete),
        ("nose_tip_style", 4, CategoryKind::Ordinal),
        ("nose_bridge_style", 3, CategoryKind::Ordinal),
    ];
    for (id, weight, kind) in pairs {
        let c = schema.category(id).map_err(|e| e.to_string())?;
        ensure(c.weight == weight && c.kind == kind, || {
            format!("{id}: ({}, {:?})", c.weight, c.kind)
        })?;
    }
    Ok("3 regions 6/17, 4/12, 3/9; 6 weight/type pairs".into())
}

// 2
fn metric_equivalence() -> Check {
    let schema = bundled_default_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut records_seen = 0;
    for i in 0..1000 {
        let records = common::random_session(&mut rng, &schema, "s");
        records_seen += records.len();
        let mut tracker = AgreementTracker::new();
        for rec in &records {
            tracker.apply(&schema, rec).map_err(|e| e.to_string())?;
        }
        let report = tracker.report("s", &schema);
        common::compare_report(&report, &common::naive_session(&records, &schema))
            .map_err(|e| format!("session {i}: {e}"))?;
    }
    Ok(format!("1000 sessions, {records_seen} records, exact"))
}

/// Expected image agreement for 4 annotators choosing the planted option
/// with probability 0.8 (else uniform among the rest), by simulation.
fn monte_carlo_expectation(schema: &TagSchema, samples: usize, seed: u64) -> f64 {
    let sizes: Vec<usize> = schema
        .region("nose")
        .unwrap()
        .categories
        .iter()
        .map(|c| c.options.len())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut total, mut counted) = (0.0, 0usize);
    let mut counts = [0u32; 8];
    for _ in 0..samples {
        let (mut sum, mut t) = (0.0, 0u32);
        for &m in &sizes {
            counts[..m].fill(0);
            for _ in 0..4 {
                let pick = if rng.gen_bool(0.8) {
                    0
                } else {
                    rng.gen_range(1..m)
                };
                counts[pick] += 1;
            }
            let max = *counts[..m].iter().max().unwrap();
            if max >= 2 {
                for &k in &counts[..m] {
                    if k == max {
                        sum += f64::from(k) / 4.0;
                        t += 1;
                    }
                }
            }
        }
        if t > 0 {
            total += sum / f64::from(t);
            counted += 1;
        }
    }
    total / counted as f64
}

// 3
fn analytic_recovery() -> Check {
    let schema = bundled_default_schema();
    let sim = simulate_session(
        &schema,
        &SimulationConfig {
            session_id: "sim500".into(),
            region_id: "nose".into(),
            images: 500,
            annotators: 4,
            agree_probability: 0.8,
            seed: 500,
        },
    )
    .map_err(|e| e.to_string())?;
    let report = tagatar_core::session_report("sim500", &sim.records, &schema)
        .map_err(|e| e.to_string())?;
    let observed = report
        .summary
        .ok_or("no summary")?
        .average_image_agreement
        .to_f64();
    let expected = monte_carlo_expectation(&schema, 1_000_000, 3);
    let gap = (observed - expected).abs();
    ensure(gap <= 0.05, || {
        format!("observed {observed:.4}, expected {expected:.4}, gap {gap:.4}")
    })?;
    Ok(format!(
        "observed {observed:.4}, oracle {expected:.4}, |gap| {gap:.4} <= 0.05"
    ))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("tagatar").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    if code != EXIT_OK {
        return Err(format!(
            "`{}` exited {code}: {}",
            args.join(" "),
            String::from_utf8_lossy(&err)
        ));
    }
    String::from_utf8(out).map_err(|e| e.to_string())
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

// 4
fn manifest_filter() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2741);
    let mut ones: Vec<bool> = (0..10_000).map(|i| i < 2741).collect();
    ones.shuffle(&mut rng);
    let mut text = String::from("image_id,path,detector_confidence\n");
    let mut planted = Vec::new();
    for (i, one) in ones.iter().enumerate() {
        let id = format!("img{i:05}");
        let conf = if *one {
            planted.push(id.clone());
            "1.0".to_string()
        } else {
            format!("{:.6}", rng.gen_range(0.0..0.999_99))
        };
        text.push_str(&format!("{id},images/{id}.jpg,{conf}\n"));
    }
    let src = dir.path().join("manifest.csv");
    let dest = dir.path().join("kept.csv");
    std::fs::write(&src, text).map_err(|e| e.to_string())?;
    cli(&["manifest", "filter", s(&src), "--threshold", "1.0", "--out", s(&dest)])?;
    let kept: Vec<String> = std::fs::read_to_string(&dest)
        .map_err(|e| e.to_string())?
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    ensure(kept == planted, || format!("kept {} entries", kept.len()))?;
    Ok(format!("10000 entries, kept {}", kept.len()))
}

// 5
fn matcher_equivalence() -> Check {
    let schema = bundled_default_schema();
    let mut scaled = schema.clone();
    for region in &mut scaled.regions {
        for c in &mut region.categories {
            c.weight *= 3;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let db = common::random_assets(&mut rng, &schema, "nose", 500);
    let mut ties = 0;
    for q in 0..100 {
        let tags = common::random_tags(&mut rng, &schema, "nose");
        let query = TagQuery {
            region_id: "nose".into(),
            tags: tags.clone(),
        };
        let got = best_match(&schema, &query, &db).map_err(|e| e.to_string())?;
        let want = common::brute_force_ranking(&schema, "nose", &tags, &db);
        let got_pairs: Vec<(String, BigRational)> = got
            .ranked
            .iter()
            .map(|x| (x.asset_id.clone(), x.score.as_ratio().clone()))
            .collect();
        ensure(got_pairs == want, || format!("query {q}: ranking differs"))?;
        let min = &want[0].1;
        let tie_set: Vec<&String> = want.iter().filter(|(_, s)| s == min).map(|(a, _)| a).collect();
        ensure(got.best.iter().collect::<Vec<_>>() == tie_set, || {
            format!("query {q}: tie set differs")
        })?;
        ties += usize::from(got.tie);
        let again = best_match(&scaled, &query, &db).map_err(|e| e.to_string())?;
        let ids = |m: &tagatar_core::MatchResult| {
            m.ranked.iter().map(|x| x.asset_id.clone()).collect::<Vec<_>>()
        };
        ensure(ids(&again) == ids(&got) && again.best == got.best, || {
            format!("query {q}: scaled weights changed the ranking")
        })?;
    }
    for asset in &db {
        let query = TagQuery {
            region_id: "nose".into(),
            tags: asset.tags.clone(),
        };
        let score = asset_score(&schema, &query, asset).map_err(|e| e.to_string())?;
        ensure(score.is_zero(), || format!("{} scores {score}", asset.asset_id))?;
    }
    Ok(format!(
        "100 queries x 500 assets exact ({ties} with ties); identity 0; x3 weights invariant"
    ))
}

// 6
fn evaluator_exactness() -> Check {
    let schema = bundled_default_schema();
    let text = std::fs::read(fixture("predictions_200.csv")).map_err(|e| e.to_string())?;
    let records = load_predictions(&text[..], &schema).map_err(|e| e.to_string())?;
    ensure(records.len() == 200, || format!("{} records", records.len()))?;
    let report = evaluate(&records, &schema).map_err(|e| e.to_string())?;

    // (category, confusion rows, accuracy, [(option, precision, recall)])
    type Expect = (&'static str, Vec<Vec<u64>>, (i64, i64), Vec<(&'static str, (i64, i64), (i64, i64))>);
    let expected: Vec<Expect> = vec![
        (
            "nose_width",
            vec![vec![20, 5, 0], vec![4, 30, 6], vec![0, 3, 12]],
            (31, 40),
            vec![("narrow", (5, 6), (4, 5)), ("medium", (15, 19), (3, 4)), ("wide", (2, 3), (4, 5))],
        ),
        (
            "nasal_hump",
            vec![vec![45, 0], vec![15, 0]],
            (3, 4),
            vec![("no_nasal_hump", (3, 4), (1, 1)), ("nasal_hump", (0, 1), (0, 1))],
        ),
        (
            "nose_tip_style",
            vec![vec![8, 4, 0], vec![2, 30, 3], vec![0, 5, 8]],
            (23, 30),
            vec![("downturned", (4, 5), (2, 3)), ("straight", (10, 13), (6, 7)), ("upturned", (8, 11), (8, 13))],
        ),
    ];
    ensure(report.categories.len() == 3, || "category count".into())?;
    for (cat, confusion, acc, tags) in expected {
        let c = report.category(cat).ok_or(format!("missing {cat}"))?;
        ensure(c.confusion.counts == confusion, || format!("{cat}: confusion {:?}", c.confusion.counts))?;
        ensure(c.accuracy.as_ratio() == &r(acc.0, acc.1), || format!("{cat}: accuracy {}", c.accuracy))?;
        for (option, p, rc) in tags {
            let t = c.tag(option).ok_or(format!("missing {option}"))?;
            ensure(
                t.precision.as_ratio() == &r(p.0, p.1) && t.recall.as_ratio() == &r(rc.0, rc.1),
                || format!("{cat}.{option}: precision {} recall {}", t.precision, t.recall),
            )?;
        }
    }
    let hump = report.category("nasal_hump").unwrap().tag("nasal_hump").unwrap();
    ensure(hump.predicted_count == 0 && hump.support == 15, || "zero-convention row".into())?;
    Ok("3 confusion matrices, 8 tags exact; never-predicted tag precision 0".into())
}

fn check_decimals(value: &Value, bad: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            if let Some(Value::String(d)) = map.get("decimal") {
                let ok = d
                    .split_once('.')
                    .is_some_and(|(i, f)| !i.is_empty() && f.len() == 4 && f.bytes().all(|b| b.is_ascii_digit()));
                if !ok {
                    bad.push(d.clone());
                }
            }
            map.values().for_each(|v| check_decimals(v, bad));
        }
        Value::Array(items) => items.iter().for_each(|v| check_decimals(v, bad)),
        _ => {}
    }
}

fn golden_records() -> Vec<tagatar_core::AnnotationRecord> {
    let config = SimulationConfig {
        session_id: "golden".into(),
        seed: 2024,
        ..Default::default()
    };
    simulate_session(&bundled_default_schema(), &config)
        .unwrap()
        .records
}

fn golden_report() -> String {
    tagatar_core::session_report("golden", &golden_records(), &bundled_default_schema())
        .unwrap()
        .to_json()
}

// 7
fn report_shape() -> Check {
    let path = crate_dir().join("tests/golden/report_seed2024.json");
    let first = golden_report();
    if std::env::var_os("TAGATAR_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &first).map_err(|e| e.to_string())?;
    }
    let second = golden_report();
    ensure(first == second, || "two runs differ".into())?;
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure(first == golden, || "output differs from golden file".into())?;
    let parsed: tagatar_core::SessionReport =
        serde_json::from_str(&golden).map_err(|e| e.to_string())?;
    let schema = bundled_default_schema();
    common::compare_report(&parsed, &common::naive_session(&golden_records(), &schema))
        .map_err(|e| format!("golden values: {e}"))?;
    let doc: Value = serde_json::from_str(&first).map_err(|e| e.to_string())?;
    let summary = &doc["summary"];
    for key in ["highest_image_agreement", "lowest_image_agreement", "average_image_agreement"] {
        ensure(summary[key]["decimal"].is_string(), || format!("summary lacks {key}"))?;
    }
    let mut bad = Vec::new();
    check_decimals(&doc, &mut bad);
    ensure(bad.is_empty(), || format!("decimals not 4-digit: {bad:?}"))?;
    Ok(format!(
        "summary triple {}/{}/{}; golden byte-identical and equal to rescan oracle",
        summary["highest_image_agreement"]["decimal"].as_str().unwrap(),
        summary["lowest_image_agreement"]["decimal"].as_str().unwrap(),
        summary["average_image_agreement"]["decimal"].as_str().unwrap(),
    ))
}

/// Runs the documented workflow in `dir`; returns every step's stdout plus
/// the exported label files.
fn workflow(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    let store = dir.join("store");
    let filtered = dir.join("filtered.csv");
    let labels = dir.join("labels.csv");
    let st = s(&store);
    let mut outputs = BTreeMap::new();
    outputs.insert(
        "1 manifest filter".into(),
        cli(&["manifest", "filter", s(&fixture("manifest.csv")), "--threshold", "1.0", "--out", s(&filtered)])?,
    );
    outputs.insert(
        "2 session new".into(),
        cli(&["--store", st, "session", "new", "--manifest", s(&filtered), "--size", "12", "--seed", "7", "--annotators", "a1,a2,a3,a4", "--id", "s1"])?,
    );
    outputs.insert(
        "3 annotate import".into(),
        cli(&["--store", st, "annotate", "import", s(&fixture("annotations.csv"))])?,
    );
    outputs.insert(
        "4 session report".into(),
        cli(&["--store", st, "session", "report", "--id", "s1", "--format", "json"])?,
    );
    outputs.insert(
        "5 labels export".into(),
        cli(&["--store", st, "labels", "export", "--out", s(&labels), "--format", "json"])?,
    );
    outputs.insert(
        "6 match".into(),
        cli(&["match", "--region", "nose", "--tags", "width=narrow,tip_proj=flat,bridge_proj=flat,hump=no_nasal_hump,tip_style=straight,bridge_style=straight", "--assets", s(&fixture("assets.json"))])?,
    );
    for (key, path) in [("filtered.csv", filtered.clone()), ("labels.csv", labels.clone())] {
        outputs.insert(key.into(), std::fs::read_to_string(&path).map_err(|e| e.to_string())?);
    }
    let sidecar = tagatar_core::session::summary_path(&labels);
    outputs.insert(
        "labels.csv.summary.json".into(),
        std::fs::read_to_string(sidecar).map_err(|e| e.to_string())?,
    );
    Ok(outputs)
}

fn api_report(store: &Path, id: &str) -> Result<String, String> {
    let config = tagatar_server::ServerConfig::new(store);
    let state = tagatar_server::AppState::load(&config).map_err(|e| e.to_string())?;
    let app = tagatar_server::router(state, &config);
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        let req = Request::get(format!("/api/sessions/{id}/report"))
            .body(Body::empty())
            .unwrap();
        let resp = app.oneshot(req).await.map_err(|e| e.to_string())?;
        let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
        String::from_utf8(bytes.to_vec()).map_err(|e| e.to_string())
    })
}

// 8
fn end_to_end_cli() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = workflow(a.path())?;
    let second = workflow(b.path())?;
    for (step, out) in &first {
        let other = &second[step];
        // the label summary names its own path; compare everything else
        let normalize = |t: &str, d: &Path| t.replace(s(d), "<dir>");
        ensure(normalize(out, a.path()) == normalize(other, b.path()), || {
            format!("step `{step}` is not deterministic")
        })?;
    }
    let matched = &first["6 match"];
    let top: Vec<&str> = matched.lines().nth(1).unwrap_or("").split_whitespace().collect();
    ensure(top.get(1..3) == Some(&["nose_07", "0"][..]), || format!("match output: {matched}"))?;
    let api = api_report(&a.path().join("store"), "s1")?;
    ensure(api == first["4 session report"], || "CLI report differs from API response".into())?;
    let labels = first["labels.csv"].lines().count() - 1;
    Ok(format!(
        "6 steps exit 0, outputs identical across runs; report == API; {labels} labels; best nose_07 score 0"
    ))
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "schema fidelity", limit: Some(Duration::from_secs(1)), run: schema_fidelity },
        Criterion { id: 2, name: "metric equivalence", limit: Some(Duration::from_secs(10)), run: metric_equivalence },
        Criterion { id: 3, name: "analytic recovery (tol 0.05)", limit: Some(Duration::from_secs(30)), run: analytic_recovery },
        Criterion { id: 4, name: "manifest filter", limit: Some(Duration::from_secs(1)), run: manifest_filter },
        Criterion { id: 5, name: "matcher equivalence", limit: Some(Duration::from_secs(5)), run: matcher_equivalence },
        Criterion { id: 6, name: "evaluator exactness", limit: Some(Duration::from_secs(1)), run: evaluator_exactness },
        Criterion { id: 7, name: "report shape", limit: None, run: report_shape },
        Criterion { id: 8, name: "end-to-end CLI", limit: None, run: end_to_end_cli },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let over = c.limit.is_some_and(|l| elapsed > l);
        let limit = c.limit.map(|l| format!("{}s", l.as_secs())).unwrap_or_else(|| "none".into());
        let (status, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("time limit exceeded; {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "[{status}] criterion {}: {} ({:.3}s, limit {limit}) {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
