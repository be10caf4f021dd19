mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tabletop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabletop"))
        .args(args)
        .env_remove("LLM_API_KEY")
        .env_remove("LLM_BASE_URL")
        .env_remove("LLM_MODEL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|path| (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_transcripts_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e1");
    let o = tabletop(&["run", "--preset", "exp1", "--policy", "random", "--seed", "7", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("mean_height"));
    let files: Vec<_> = dir_files(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(files.iter().filter(|n| n.ends_with(".jsonl")).count(), 40);
    for f in ["manifest.json", "summary.csv", "matrix.csv", "sessions.csv", "session-039.jsonl"] {
        assert!(files.contains(&f.to_string()), "{f}");
    }
}

#[test]
fn output_does_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let base = ["run", "--preset", "exp5", "--sessions", "16", "--seed", "11"];
    let oa = tabletop(&[&base[..], &["--jobs", "1", "--out", p(&a)]].concat());
    let ob = tabletop(&[&base[..], &["--jobs", "6", "--out", p(&b)]].concat());
    assert_eq!((code(&oa), code(&ob)), (0, 0));
    assert_eq!(dir_files(&a), dir_files(&b));
}

#[test]
fn greedy_full_menu_analysis() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("greedy");
    let r = tmp.path().join("random");
    let o = tabletop(&["run", "--preset", "exp2", "--policy", "greedy", "--menu-size", "full", "--out", p(&g)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("sessions reaching height 5: 40/40"));
    assert_eq!(code(&tabletop(&["run", "--preset", "exp2", "--out", p(&r)])), 0);

    let a = tabletop(&["analyze", p(&g), "--compare", p(&r), "--resamples", "500"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let sessions = fs::read_to_string(g.join("sessions.csv")).unwrap();
    let mut lines = sessions.lines();
    assert_eq!(
        lines.next().unwrap(),
        "session,max_height,first_passage_h1,first_passage_h2,first_passage_h3,first_passage_h4,first_passage_h5"
    );
    for line in lines {
        assert_eq!(line.rsplit(',').next(), Some("4"), "{line}");
    }
    let cmp = fs::read_to_string(g.join("comparison.csv")).unwrap();
    assert!(cmp.lines().last().unwrap().starts_with("reach,1,"));

    let j = tabletop(&["analyze", p(&g), "--format", "json", "--out", p(&tmp.path().join("json"))]);
    assert_eq!(code(&j), 0);
    assert!(tmp.path().join("json/summary.json").exists());
    assert_eq!(code(&tabletop(&["analyze", p(&g), "--format", "xml"])), 2);
}

#[test]
fn tampering_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&tabletop(&["run", "--preset", "exp3", "--sessions", "3", "--out", p(&out)])), 0);
    assert_eq!(code(&tabletop(&["replay", p(&out)])), 0);

    let file = out.join("session-001.jsonl");
    let text = fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut step: serde_json::Value = serde_json::from_str(&lines[3]).unwrap();
    let h = step["height"].as_u64().unwrap();
    step["height"] = (if h == 1 { 2 } else { h - 1 }).into();
    lines[3] = step.to_string();
    fs::write(&file, lines.join("\n") + "\n").unwrap();

    let a = tabletop(&["analyze", p(&out)]);
    assert_eq!(code(&a), 1);
    let msg = stderr(&a);
    assert!(msg.contains("session-001.jsonl") && msg.contains("step 3"), "{msg}");
    let r = tabletop(&["replay", p(&file)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("step 3"));
}

#[test]
fn replaying_another_schema_version_fails_clearly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&tabletop(&["run", "--preset", "exp1", "--sessions", "1", "--out", p(&out)])), 0);
    let file = out.join("session-000.jsonl");
    let text = fs::read_to_string(&file).unwrap().replacen(r#""schema_version":"1""#, r#""schema_version":"0""#, 1);
    fs::write(&file, text).unwrap();
    let r = tabletop(&["replay", p(&file)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("unsupported transcript schema version \"0\""), "{}", stderr(&r));
}

#[test]
fn replay_policy_reproduces_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&tabletop(&["run", "--preset", "exp4", "--sessions", "5", "--seed", "3", "--out", p(&a)])), 0);
    let o = tabletop(&["run", "--policy", "replay", "--from", p(&a), "--out", p(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(dir_files(&a), dir_files(&b));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&tabletop(&["run", "--preset", "exp5", "--policy", "llm", "--sessions", "1"])), 2);
    assert_eq!(code(&tabletop(&["run", "--preset", "exp1", "--config", "x.json"])), 2);
    assert_eq!(code(&tabletop(&["run"])), 2);
    assert_eq!(code(&tabletop(&["run", "--preset", "exp9"])), 2);
    assert_eq!(code(&tabletop(&["run", "--preset", "exp1", "--menu-size", "0"])), 2);
    assert_eq!(code(&tabletop(&["run", "--preset", "exp1", "--template", "boring"])), 2);
    assert_eq!(code(&tabletop(&["run", "--policy", "replay"])), 2);
    assert_eq!(code(&tabletop(&["frobnicate"])), 2);
    assert_eq!(code(&tabletop(&["--help"])), 0);
}

#[test]
fn config_file_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"name":"custom","n_cubes":3,"n_spheres":1,"positions":[0,1,2],"template":"novel","steps":4}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = tabletop(&["run", "--config", p(&cfg), "--sessions", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "custom");
    assert_eq!(manifest["config"]["steps"], 4);
    assert_eq!(manifest["sessions"].as_array().unwrap().len(), 2);
}

#[test]
fn print_prompt_from_scene_and_transcript() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/step4_scene.json");
    let o = tabletop(&["print-prompt", "--scene", fixture]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("[System]\nThere are some objects on the table."));
    assert!(text.contains("\n1 ) Put the green cube in front of the orange cube\n"));

    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&tabletop(&["run", "--preset", "exp1", "--sessions", "1", "--out", p(&out)])), 0);
    let t = out.join("session-000.jsonl");
    let first = tabletop(&["print-prompt", "--transcript", p(&t), "--step", "0"]);
    assert_eq!(code(&first), 0);
    assert!(!stdout(&first).contains("Previously executed actions:"));
    let later = tabletop(&["print-prompt", "--transcript", p(&t), "--step", "9"]);
    assert!(stdout(&later).contains("Previously executed actions:"));
    let bad = tabletop(&["print-prompt", "--transcript", p(&t), "--step", "99"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("out of range"));
}

#[test]
fn llm_run_against_stub() {
    let server = common::StubServer::start(common::scripted_model);
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("llm");
    let o = Command::new(env!("CARGO_BIN_EXE_tabletop"))
        .args(["run", "--preset", "exp5", "--policy", "llm", "--sessions", "3", "--jobs", "2"])
        .args(["--base-url", &server.base_url, "--out", p(&out)])
        .env("LLM_API_KEY", "sk-test")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(server.request_count() >= 30);
    assert_eq!(code(&tabletop(&["replay", p(&out)])), 0);
    assert_eq!(code(&tabletop(&["analyze", p(&out)])), 0);
}

#[test]
fn llm_endpoint_failure_exits_1_with_partial_transcripts() {
    let server = common::StubServer::start(|_| common::StubResponse::status(401, "no"));
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("llm");
    let o = Command::new(env!("CARGO_BIN_EXE_tabletop"))
        .args(["run", "--preset", "exp5", "--policy", "llm", "--sessions", "2"])
        .args(["--base-url", &server.base_url, "--out", p(&out)])
        .env("LLM_API_KEY", "sk-test")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("401"), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["sessions"][0]["complete"], false);
}
