use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enhperc")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["speed", "--p", "1", "--eps", "0", "--T", "100", "--replicas", "2"]), 0);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["speed", "--p", "2", "--eps", "0"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["couple", "--p", "0.6", "--eps", "0.3", "--eps2", "0.1"]), 1);
    assert_eq!(code(&["block", "--p", "0.9", "--eps", "0", "--alpha", "0.3", "--L", "20"]), 1);
    // the vacuum bracket dies at once and never meets the saturated one
    assert_eq!(code(&["speed", "--p", "0", "--eps", "0", "--T", "100", "--replicas", "2"]), 2);
    assert_eq!(code(&["oracle", "--p", "0.5", "--eps", "0", "--n", "30"]), 2);
}

#[test]
fn header_records_the_configuration() {
    let text = stdout(&["survival", "--p", "0.7", "--eps", "0.1", "--T", "50", "--replicas", "100", "--seed", "9"]);
    let mut lines = text.lines();
    let head: serde_json::Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(head["command"], "survival");
    assert_eq!(head["config"]["seed"], 9);
    assert_eq!(head["config"]["T"], 50);
    assert_eq!(lines.next().unwrap(), "method,eps,p,T,R,estimate,stderr,lo,hi,seed");
    assert_eq!(lines.count(), 1);

    let json: serde_json::Value = serde_json::from_str(&stdout(&[
        "verify-domination", "--p", "0.5", "--eps", "0", "--n", "2", "--w", "3", "--M", "6", "--format", "json",
    ]))
    .unwrap();
    assert_eq!(json["command"], "verify-domination");
    assert!(json["results"].is_array() || json["results"].is_object());
}

#[test]
fn output_does_not_depend_on_threads() {
    let commands: [&[&str]; 5] = [
        &["speed", "--p", "0.7", "--eps", "0.1", "--T", "200", "--replicas", "40", "--seed", "3"],
        &["survival", "--p", "0.65", "--eps", "0", "--T", "100", "--replicas", "200", "--seed", "3"],
        &["tau", "--p", "0.64", "--eps", "0", "--eps2", "0.2", "--T", "300", "--replicas", "6", "--seed", "3"],
        &["block", "--p", "0.8", "--eps", "0.1", "--alpha", "0.3", "--L", "50", "--replicas", "40", "--seed", "3"],
        &["pc", "--eps", "0.1", "--T", "150", "--replicas", "20", "--tol", "0.05", "--seed", "3"],
    ];
    for args in commands {
        let one = stdout(&[args, &["--threads", "1"]].concat());
        let eight = stdout(&[args, &["--threads", "8"]].concat());
        assert_eq!(one, eight, "{args:?}");
        assert_eq!(stdout(&[args, &["--threads", "1"]].concat()), one, "{args:?} rerun");
    }
}

#[test]
fn simulate_dumps_rows() {
    let text = stdout(&["simulate", "--p", "1", "--eps", "0", "--T", "4"]);
    assert!(text.lines().count() >= 5, "{text}");
}

#[test]
fn output_file() {
    let dir = std::env::temp_dir().join(format!("enhperc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("oracle.csv");
    let out = run(&["oracle", "--p", "0.5", "--eps", "0.3", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let total: f64 = text
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
    std::fs::remove_dir_all(dir).unwrap();
}
