use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forestplan"))
}

fn model() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/toy_forest.json")
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text.trim()).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    model: String,
}

impl Fixture {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("config.json"), config).unwrap();
        Fixture {
            dir,
            model: model().to_string_lossy().into_owned(),
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Runs a subcommand with the model and config already filled in.
    fn cmd(&self, sub: &str, rest: &[&str]) -> Output {
        let mut args = vec![sub, "--model", &self.model, "--config", "config.json"];
        args.extend_from_slice(rest);
        run(&args, self.path())
    }

    fn ok(&self, sub: &str, rest: &[&str]) -> String {
        let out = self.cmd(sub, rest);
        assert!(
            out.status.success(),
            "{sub} {rest:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

const EXACT: &str = r#"{"beta":[1,1,1],"alpha":0,"delta":1000,"K":3,"L_max":4,"sweep":true}"#;

#[test]
fn bench_planner_is_no_worse_than_greedy() {
    let f = Fixture::new(r#"{"beta":[1,1,1]}"#);
    let text = f.ok("bench", &["--json", "--report", "report.jsonl"]);
    let lines: Vec<Value> = text.lines().map(json).collect();
    assert_eq!(lines.len(), 3);
    let cost = |arm: &str| lines.iter().find(|l| l["arm"] == arm).unwrap()["mean_cost"].as_f64().unwrap();
    assert!(cost("planner") <= cost("greedy"));
    assert!(cost("oracle") <= cost("planner"));
    let saved = std::fs::read_to_string(f.path().join("report.jsonl")).unwrap();
    assert_eq!(saved, text);

    // Same seed, same payload once timings and memory are dropped.
    let strip = |t: &str| -> Vec<Value> {
        t.lines()
            .map(|l| {
                let mut v = json(l);
                let o = v.as_object_mut().unwrap();
                o.remove("mean_time_s");
                o.remove("peak_mem_gb");
                v
            })
            .collect()
    };
    assert_eq!(strip(&text), strip(&f.ok("bench", &["--json"])));
}

#[test]
fn bench_sweep_prints_one_block_per_share() {
    let f = Fixture::new(r#"{"beta":[1,1,1]}"#);
    let text = f.ok("bench", &["--sweep", "r=25,100", "--instances", "4"]);
    assert!(text.contains("r = 25%"));
    assert!(text.contains("r = 100%"));
    assert!(text.contains("T (s)"));
}

#[test]
fn exhaustive_database_plans_match_the_oracle() {
    let f = Fixture::new(EXACT);
    f.ok("preprocess", &["--out", "db.jsonl", "--percent", "100"]);
    for x1 in 0..2 {
        for x2 in 0..2 {
            for x3 in 0..3 {
                let s = format!("{x1},{x2},{x3}");
                let planned = json(&f.ok("plan", &["--db", "db.jsonl", "--state", &s, "--json"]));
                let oracle = json(&f.ok("oracle", &["--state", &s, "--json"]));
                assert_eq!(planned["cost"], oracle["cost"], "state {s}");
            }
        }
    }
}

#[test]
fn exported_encoding_round_trips_through_an_external_solver() {
    let f = Fixture::new(EXACT);
    f.ok("preprocess", &["--out", "db.jsonl"]);
    f.ok(
        "export-wcnf",
        &["--db", "db.jsonl", "--state", "0,0,0", "--makespan", "2", "--out", "q.wcnf"],
    );
    let solved = ok(&["solve-wcnf", "--wcnf", "q.wcnf", "--out", "built-in.txt"], f.path());
    assert!(solved.is_empty());
    // A stand-in external solver that replays the built-in answer.
    ok(
        &[
            "solve-wcnf",
            "--wcnf",
            "q.wcnf",
            "--solver",
            "sh",
            "--solver-arg=-c",
            "--solver-arg=cat built-in.txt",
            "--solver-arg=solver",
            "--out",
            "external.txt",
        ],
        f.path(),
    );
    let plan = json(&f.ok(
        "decode-model",
        &[
            "--db",
            "db.jsonl",
            "--state",
            "0,0,0",
            "--map",
            "q.wcnf.map",
            "--solution",
            "external.txt",
            "--json",
        ],
    ));
    assert_eq!(plan["cost"], 3.0);
    assert_eq!(plan["reached"], serde_json::json!([0, 1, 2]));

    // A map from another query is refused.
    f.ok(
        "export-wcnf",
        &["--db", "db.jsonl", "--state", "0,1,0", "--makespan", "2", "--out", "other.wcnf"],
    );
    let out = f.cmd(
        "decode-model",
        &["--db", "db.jsonl", "--state", "0,0,0", "--map", "other.wcnf.map", "--solution", "external.txt"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_database_gets_a_hint() {
    let f = Fixture::new(EXACT);
    for rest in [&["--state", "0,0,0"][..], &["--state", "0,0,0", "--db", "nope.jsonl"]] {
        let out = f.cmd("plan", rest);
        assert_eq!(out.status.code(), Some(3));
        assert!(String::from_utf8_lossy(&out.stderr).contains("forestplan preprocess"));
    }
}

#[test]
fn database_for_other_costs_is_rejected() {
    let f = Fixture::new(EXACT);
    f.ok("preprocess", &["--out", "db.jsonl"]);
    std::fs::write(f.path().join("other.json"), r#"{"beta":[1,2,2]}"#).unwrap();
    let out = run(
        &["plan", "--model", &f.model, "--config", "other.json", "--db", "db.jsonl", "--state", "0,0,0"],
        f.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let f = Fixture::new(EXACT);
    std::fs::write(f.path().join("unsat.wcnf"), "p wcnf 1 2 3\n3 1 0\n3 -1 0\n").unwrap();
    assert_eq!(run(&["solve-wcnf", "--wcnf", "unsat.wcnf"], f.path()).status.code(), Some(2));
    std::fs::write(f.path().join("soft.wcnf"), "p wcnf 2 2 9\n1 1 0\n1 2 0\n").unwrap();
    let out = run(
        &["solve-wcnf", "--wcnf", "soft.wcnf", "--solver", "sh", "--solver-arg=-c", "--solver-arg=echo s UNKNOWN"],
        f.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    std::fs::write(f.path().join("bad.wcnf"), "p wcnf 1 1 3\n0 1 0\n").unwrap();
    assert_eq!(run(&["solve-wcnf", "--wcnf", "bad.wcnf"], f.path()).status.code(), Some(3));

    assert_eq!(f.cmd("oracle", &["--state", "0,0,7"]).status.code(), Some(3));
    assert_eq!(f.cmd("oracle", &["--instance", "robot,1,1"]).status.code(), Some(3));

    // An out-of-range threshold is a configuration error.
    std::fs::write(f.path().join("bad.json"), r#"{"z": 2}"#).unwrap();
    let out = run(&["oracle", "--model", &f.model, "--config", "bad.json", "--state", "0,0,0"], f.path());
    assert_eq!(out.status.code(), Some(3));
    let out = f.cmd("oracle", &["--state", "0,0,0", "--cap", "1"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn greedy_and_oracle_print_plans() {
    let f = Fixture::new(EXACT);
    let g = json(&f.ok("greedy", &["--instance", "male,2,500", "--json"]));
    assert_eq!(g["cost"], 5.0);
    let o = json(&f.ok("oracle", &["--instance", "male,2,500", "--json"]));
    assert_eq!(o["cost"], 3.0);
    assert_eq!(o["reached_instance"], "male,6,1501");
    let m = json(&f.ok("greedy", &["--instance", "male,2,500", "--rule", "min-cost", "--json"]));
    assert!(m["cost"].as_f64().unwrap() >= 3.0);
}

#[test]
fn train_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/wdbc.csv");
    let features: Vec<Value> = (0..30)
        .map(|i| serde_json::json!({"name": format!("f{i}"), "kind": "numerical", "mutability": "soft"}))
        .collect();
    let schema = serde_json::json!({"label": "diagnosis", "classes": ["benign", "malignant"], "features": features});
    std::fs::write(dir.path().join("schema.json"), schema.to_string()).unwrap();
    let data = data.to_string_lossy();
    let args = [
        "train",
        "--data",
        &data,
        "--schema",
        "schema.json",
        "--trees",
        "5",
        "--seed",
        "3",
        "--out",
        "m.json",
        "--with-partitions",
    ];
    let text = ok(&args, dir.path());
    assert!(text.contains("test accuracy"));
    let first = std::fs::read(dir.path().join("m.json")).unwrap();
    ok(&args, dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("m.json")).unwrap());
    let parts = json(&ok(&["partitions", "--model", "m.json", "--json"], dir.path()));
    assert_eq!(parts.as_array().unwrap().len(), 30);

    let bad = r#"{"label": "diagnosis", "features": [{"name": "nope", "kind": "numerical", "mutability": "soft"}]}"#;
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let out = run(&["train", "--data", &data, "--schema", "bad.json", "--out", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}
