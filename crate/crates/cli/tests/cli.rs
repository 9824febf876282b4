//! Drives the compiled binary through the whole pipeline on a small
//! synthetic dataset and pins the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn pvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvec"))
        .args(args)
        .output()
        .expect("failed to spawn pvec")
}

fn pvec_with_stdin(args: &[&str], stdin: &str) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_pvec"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("failed to spawn pvec");
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process was signalled")
}

/// Articles with distinctive topic tokens; each question quotes its
/// article's body so linking succeeds. Alternating dataset tags.
fn write_source_data(dir: &Path) -> (PathBuf, PathBuf) {
    let articles_path = dir.join("articles.jsonl");
    let qa_path = dir.join("qa.jsonl");
    let mut articles = String::new();
    let mut qa = String::new();
    for i in 0..40 {
        let body = format!(
            "alpha{i} beta{i} gamma{i} shared{} shared{} alpha{i} beta{i} gamma{i}",
            i % 5,
            (i + 1) % 5
        );
        articles.push_str(
            &json!({ "title": format!("Article {i}"), "text": body }).to_string(),
        );
        articles.push('\n');
        qa.push_str(
            &json!({
                "question": format!("what mentions alpha{i} beta{i} gamma{i}"),
                "passages": [body],
                "dataset": if i % 2 == 0 { "da" } else { "db" },
            })
            .to_string(),
        );
        qa.push('\n');
    }
    fs::write(&articles_path, articles).unwrap();
    fs::write(&qa_path, qa).unwrap();
    (articles_path, qa_path)
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (articles, qa) = write_source_data(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");

    let out = pvec(&[
        "preprocess",
        "--articles",
        articles.to_str().unwrap(),
        "--qa",
        qa.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_ok(&out, "preprocess");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("passages=40"), "stdout: {stdout}");
    assert!(data.join("passages.jsonl").exists());
    assert!(data.join("questions.jsonl").exists());
    assert!(data.join("split.json").exists());
    assert!(data.join("run_meta.json").exists());

    let out = pvec(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--vector-size",
        "16",
        "--epochs",
        "3",
        "--min-count",
        "1",
        "--experiment",
        "e2",
        "--seed",
        "5",
        "--workers",
        "1",
    ]);
    assert_ok(&out, "train");
    for name in ["model.pvec", "vocab.tsv", "store.psto", "train_log.tsv", "run_meta.json"] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(run.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "train");
    assert_eq!(meta["extra"]["epoch_loss"].as_array().unwrap().len(), 3);

    let model = run.join("model.pvec");
    let store = run.join("store.psto");

    let out = pvec(&[
        "search",
        "--model",
        model.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--query",
        "what mentions alpha3 beta3 gamma3",
        "-k",
        "5",
        "--out",
        dir.path().join("search").to_str().unwrap(),
    ]);
    assert_ok(&out, "search");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "rank\tpid\tscore");
    assert_eq!(lines.len(), 6, "expected header plus 5 hits: {stdout}");
    assert!(lines[1].starts_with("1\tp_"));

    let eval_out = dir.path().join("eval");
    let out = pvec(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_ok(&out, "eval");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(eval_out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n_questions"], 4);
    assert_eq!(report["zero_shot"], false);
    let tsv = fs::read_to_string(eval_out.join("report.tsv")).unwrap();
    assert!(tsv.starts_with("metric\tvalue"), "tsv: {tsv}");

    let zs_out = dir.path().join("zs");
    let out = pvec(&[
        "zero-shot",
        "--model",
        model.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--datasets",
        "db",
        "--out",
        zs_out.to_str().unwrap(),
    ]);
    assert_ok(&out, "zero-shot");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(zs_out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["zero_shot"], true);

    let infer_out = dir.path().join("infer");
    let out = pvec_with_stdin(
        &[
            "infer",
            "--model",
            model.to_str().unwrap(),
            "--out",
            infer_out.to_str().unwrap(),
        ],
        "what mentions alpha3 beta3 gamma3\nwhat mentions alpha4 beta4 gamma4\n",
    );
    assert_ok(&out, "infer");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let vectors: Vec<&str> = stdout.lines().collect();
    assert_eq!(vectors.len(), 2);
    for line in &vectors {
        assert_eq!(line.split(' ').count(), 16, "expected 16 components");
        for v in line.split(' ') {
            v.parse::<f32>().expect("component is not a float");
        }
    }

    let out = pvec_with_stdin(
        &[
            "infer",
            "--model",
            model.to_str().unwrap(),
            "--binary",
            "--out",
            infer_out.to_str().unwrap(),
        ],
        "what mentions alpha3 beta3 gamma3\n",
    );
    assert_ok(&out, "infer --binary");
    assert!(infer_out.join("queries.psto").exists());

    let bench_out = dir.path().join("bench");
    let out = pvec(&[
        "bench",
        "--target",
        "both",
        "--model",
        model.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--out",
        bench_out.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert_ok(&out, "bench");
    let bench: Value =
        serde_json::from_str(&fs::read_to_string(bench_out.join("bench.json")).unwrap()).unwrap();
    assert!(bench["infer"]["mean_ms"].as_f64().unwrap() > 0.0);
    assert!(bench["search"]["sizes"][0]["stats"]["mean_ms"].as_f64().unwrap() > 0.0);

    let tune_conf = dir.path().join("tune.conf");
    fs::write(
        &tune_conf,
        "space_vector_size=8\nspace_window=2\nspace_lr=0.02:0.05\n\
         space_min_lr=0.001:0.002\nspace_epochs=2:2\nspace_min_count=1\n\
         min_count=1\n",
    )
    .unwrap();
    let tune_out = dir.path().join("tune");
    let out = pvec(&[
        "tune",
        "--data",
        data.to_str().unwrap(),
        "--config",
        tune_conf.to_str().unwrap(),
        "--strategy",
        "random",
        "--trials",
        "2",
        "--out",
        tune_out.to_str().unwrap(),
        "--seed",
        "5",
        "--workers",
        "1",
    ]);
    assert_ok(&out, "tune");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best:"), "stdout: {stdout}");
    let trials = fs::read_to_string(tune_out.join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 2);
    for line in trials.lines() {
        let trial: Value = serde_json::from_str(line).unwrap();
        assert!(trial["config"]["vector_size"].as_u64().unwrap() == 8);
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    assert_eq!(code(&pvec(&["--help"])), 0, "--help");
    assert_eq!(code(&pvec(&["--version"])), 0, "--version");
    assert_eq!(code(&pvec(&["no-such-command"])), 1, "unknown subcommand");
    assert_eq!(code(&pvec(&["train"])), 1, "missing required flag");

    // Configuration problems: exit 1.
    let bad_conf = dir.path().join("bad.conf");
    fs::write(&bad_conf, "no_such_key=1\n").unwrap();
    let out = pvec(&[
        "train",
        "--data",
        dir.path().to_str().unwrap(),
        "--config",
        bad_conf.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "unknown config key");

    let out = pvec(&[
        "train",
        "--data",
        dir.path().to_str().unwrap(),
        "--experiment",
        "e9",
    ]);
    assert_eq!(code(&out), 1, "invalid experiment");

    // Data problems: exit 2.
    let out = pvec(&["train", "--data", "/no/such/dir"]);
    assert_eq!(code(&out), 2, "missing data directory");

    let truncated = dir.path().join("broken.psto");
    fs::write(&truncated, b"PSTO").unwrap();
    let vocab = dir.path().join("vocab.tsv");
    fs::write(&vocab, "#total_tokens=5\tmin_count=1\na\t0\t3\nb\t1\t2\n").unwrap();
    let out = pvec(&[
        "search",
        "--model",
        truncated.to_str().unwrap(),
        "--vocab",
        vocab.to_str().unwrap(),
        "--store",
        truncated.to_str().unwrap(),
        "--query",
        "a",
    ]);
    assert_eq!(code(&out), 2, "truncated binary file");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}
