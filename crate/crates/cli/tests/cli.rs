use std::path::Path;
use std::process::{Command, Output};

fn groundmem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_groundmem"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CONFIG: &str = "seed = 7
output_dir = \"out\"

[backend]
kind = \"scripted\"
script_path = \"script.jsonl\"

[tasks]
source = \"generated\"
count = 8
";

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

#[test]
fn full_run_writes_artifacts_and_reports() {
    let dir = setup(CONFIG);
    let o = groundmem(dir.path(), &["make-script", "--config", "run.toml", "--fail-first", "1", "--out", "script.jsonl"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = groundmem(dir.path(), &["run", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("SR 1.0000"), "{}", stdout(&o));
    for d in ["direction-0", "direction-1"] {
        for f in ["pool.json", "tips.json", "metrics.json", "summary.txt", "trajectories.jsonl"] {
            assert!(dir.path().join("out").join(d).join(f).is_file(), "{d}/{f}");
        }
    }

    let o = groundmem(dir.path(), &["report", "--runs", "out"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("direction-1"));
}

#[test]
fn stages_run_separately() {
    let dir = setup(CONFIG);
    let run = |args: &[&str]| {
        let o = groundmem(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        stdout(&o)
    };
    run(&["make-script", "--config", "run.toml", "--direction", "1", "--out", "script.jsonl"]);
    assert!(run(&["collect", "--config", "run.toml", "--direction", "1"]).contains("4 solved"));
    run(&["tips", "--config", "run.toml", "--pool", "out/direction-1/pool.json"]);
    // without --tips the eval runs with tips left out
    let s = run(&[
        "eval",
        "--config",
        "run.toml",
        "--direction",
        "1",
        "--pool",
        "out/direction-1/pool.json",
        "--out",
        "no-tips",
    ]);
    assert!(s.contains("SR 1.0000"), "{s}");
    let trace = std::fs::read_dir(dir.path().join("no-tips/traces/eval")).unwrap().next().unwrap().unwrap();
    let text = std::fs::read_to_string(trace.path()).unwrap();
    assert!(text.contains("\"event\":\"retrieval\""));
    assert!(!text.contains("no tips for retrieved task"));
}

#[test]
fn invalid_field_exits_fatal_and_names_it() {
    let dir = setup(&format!("{CONFIG}\n[planner]\ntop_k = 3\n"));
    let o = groundmem(dir.path(), &["run", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("planner.top_k"), "{}", stderr(&o));
}

#[test]
fn missing_pool_is_fatal() {
    let dir = setup(CONFIG);
    std::fs::write(dir.path().join("script.jsonl"), "").unwrap();
    let o = groundmem(dir.path(), &["tips", "--config", "run.toml", "--pool", "nope.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn failed_episodes_exit_one() {
    let dir = setup(CONFIG);
    // every policy call answers with an action that does nothing
    let line = "{\"role\":\"Policy\",\"response\":\"look\"}\n";
    std::fs::write(dir.path().join("script.jsonl"), line.repeat(200)).unwrap();
    let o = groundmem(dir.path(), &["eval", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("SR 0.0000"));
}

#[test]
fn serve_env_answers_on_stdio() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_groundmem"))
        .args(["serve-env", "--env", "echo"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"op\":\"step\",\"id\":4,\"action\":\"hello\"}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"id\":4") && text.contains("\"observation\":\"hello\""), "{text}");
}
