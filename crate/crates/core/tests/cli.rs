use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use faithfulness::synthetic::{sample_qca, SynthConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faithfulness"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn triplet(id: &str, q: &[f64], c: &[f64], a: &[f64]) -> Value {
    json!({"id": id, "n_topics": q.len(), "p_q": q, "p_c": c, "p_a": a})
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn random_suite(n_topics: usize, count: usize, seed: u64) -> Value {
    let cfg = SynthConfig {
        n_topics,
        n_triplets: count,
        alpha_q: 1.0,
        alpha_c: 1.0,
        alpha_a: 1.0,
        context_coupling: 0.5,
        seed,
    };
    let items: Vec<Value> = (0..count as u64)
        .map(|k| {
            let t = sample_qca(&cfg, k).unwrap();
            triplet(&t.id, t.p_q.probs(), t.p_c.probs(), t.p_a.probs())
        })
        .collect();
    Value::Array(items)
}

#[test]
fn single_valid_triplet_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let input = write_json(
        dir.path(),
        "t.json",
        &triplet("one", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]),
    );
    let out = run(&["score", &input]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(header[1], "H_Q_bits");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "one");
}

#[test]
fn invalid_triplet_is_reported_and_valid_one_still_scored() {
    let dir = TempDir::new().unwrap();
    let input = write_json(
        dir.path(),
        "t.json",
        &json!([
            triplet("bad", &[0.6, 0.6], &[0.5, 0.5], &[0.7, 0.3]),
            triplet("good", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]),
        ]),
    );
    let out = run(&["score", &input]);
    assert_eq!(code(&out), 3);
    let (_, rows) = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "good");
    let err = stderr(&out);
    assert_eq!(
        err.lines().filter(|l| l.contains("bad")).count(),
        1,
        "{err}"
    );
}

#[test]
fn matching_question_and_answer_is_faithful() {
    let dir = TempDir::new().unwrap();
    let input = write_json(
        dir.path(),
        "t.json",
        &triplet("same", &[0.2, 0.3, 0.5], &[0.6, 0.3, 0.1], &[0.2, 0.3, 0.5]),
    );
    let out = run(&["score", &input]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv_rows(&stdout(&out));
    let f_s: f64 = rows[0][column(&header, "F_S")].parse().unwrap();
    assert!(f_s >= 0.999);
}

#[test]
fn malformed_json_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(
        &path,
        "[\n  {\"id\": \"x\",\n   \"p_q\": [0.5, 0.5,]\n  }\n]\n",
    )
    .unwrap();
    let out = run(&["score", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_file_and_bad_flags_are_usage_errors() {
    assert_eq!(code(&run(&["score", "/nonexistent/t.json"])), 2);
    assert_eq!(code(&run(&["score", "--units", "furlongs", "-"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn json_format_and_units() {
    let dir = TempDir::new().unwrap();
    let input = write_json(
        dir.path(),
        "t.json",
        &triplet("one", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]),
    );
    let out = run(&["score", &input, "--format", "json", "--units", "nats"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["units"], "nats");
    assert_eq!(v["d_min_units"], "nats");
    let row = &v["rows"][0];
    assert!((row["h_c"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn emitted_matrices_are_stochastic() {
    let dir = TempDir::new().unwrap();
    let input = write_json(
        dir.path(),
        "t.json",
        &triplet("m/1", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]),
    );
    let mats = dir.path().join("mats");
    let out = run(&["score", &input, "--emit-matrices", mats.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&fs::read(mats.join("0000_m_1.json")).unwrap()).unwrap();
    for key in ["q_star", "a_star", "a_reverse"] {
        for row in v[key].as_array().unwrap() {
            let s: f64 = row
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn cache_hits_follow_the_key() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let plain = write_json(
        dir.path(),
        "a.json",
        &triplet("t", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]),
    );
    let mut tagged = triplet("t", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]);
    tagged["metadata"] = json!({"source": "elsewhere"});
    let tagged = write_json(dir.path(), "b.json", &tagged);

    let hit = |out: &Output| {
        assert_eq!(code(out), 0, "{}", stderr(out));
        let (header, rows) = csv_rows(&stdout(out));
        rows[0][column(&header, "cache_hit")] == "true"
    };
    let first = run(&["score", &plain, "--cache", cache]);
    assert!(!hit(&first));
    let second = run(&["score", &plain, "--cache", cache]);
    assert!(hit(&second));
    assert!(hit(&run(&["score", &tagged, "--cache", cache])));
    assert!(!hit(&run(&[
        "score",
        &plain,
        "--cache",
        cache,
        "--tol-outer",
        "1e-8"
    ])));

    // Apart from the flag, a hit reproduces the computed row exactly.
    let strip = |out: &Output| {
        let (_, rows) = csv_rows(&stdout(out));
        rows[0][..rows[0].len() - 1].to_vec()
    };
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn corrupt_cache_entry_is_recomputed() {
    let dir = TempDir::new().unwrap();
    let cache = dir.path().join("cache");
    let input = write_json(
        dir.path(),
        "a.json",
        &triplet("t", &[0.6, 0.4], &[0.5, 0.5], &[0.7, 0.3]),
    );
    let args = ["score", input.as_str(), "--cache", cache.to_str().unwrap()];
    assert_eq!(code(&run(&args)), 0);
    for entry in fs::read_dir(&cache).unwrap() {
        fs::write(entry.unwrap().path(), b"{not json").unwrap();
    }
    let out = run(&args);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).trim_end().ends_with("false"));
    assert!(stdout(&run(&args)).trim_end().ends_with("true"));
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = run(&[
            "synth",
            "--n",
            "100",
            "--seed",
            "42",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for name in ["scatter.csv", "naive_curve.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let (header, rows) = csv_rows(&fs::read_to_string(a.join("scatter.csv")).unwrap());
    assert_eq!(header, ["f_s", "sep", "s_dot", "h_q", "h_c", "h_a"]);
    assert_eq!(rows.len(), 100);
}

#[test]
fn synth_single_triplet_has_no_correlation() {
    let dir = TempDir::new().unwrap();
    let out = run(&["synth", "--n", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v: Value =
        serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["correlation_absent"], true);
    assert!(v["pearson_r"].is_null());
}

#[test]
fn synth_rejects_invalid_flags() {
    let dir = TempDir::new().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["synth", "--coupling", "1.5", "--out", d])), 2);
    assert_eq!(code(&run(&["synth", "--alpha-q", "0", "--out", d])), 2);
    assert_eq!(code(&run(&["synth", "--n", "5"])), 2);
}

#[test]
fn oracle_check_agrees_on_two_topic_suite() {
    let dir = TempDir::new().unwrap();
    let input = write_json(dir.path(), "suite.json", &random_suite(2, 50, 7));
    let out = run(&["oracle-check", &input]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 50);
    let ok = column(&header, "within_tol");
    assert!(rows.iter().all(|r| r[ok] == "true"));
}

#[test]
fn oracle_check_flags_mismatch() {
    let dir = TempDir::new().unwrap();
    let input = write_json(dir.path(), "suite.json", &random_suite(3, 3, 11));
    let out = run(&["oracle-check", &input, "--tol", "1e-12"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stdout(&out).contains("false"));
}

#[test]
fn oracle_check_rejects_six_topics() {
    let dir = TempDir::new().unwrap();
    let input = write_json(dir.path(), "six.json", &random_suite(6, 1, 3));
    let out = run(&["oracle-check", &input]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("6"), "{}", stderr(&out));
}
