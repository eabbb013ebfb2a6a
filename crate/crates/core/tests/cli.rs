use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn osp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osp"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = osp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn features_rows_and_errors() {
    let ws = Workspace::new();
    let input = ws.path("in.csv");
    let mut text = String::from("id,v\n");
    for k in 0..3 {
        let row: Vec<String> = (0..40).map(|t| ((t * (k + 2)) % 11).to_string()).collect();
        text.push_str(&format!("S{k},{}\n", row.join(",")));
    }
    std::fs::write(&input, text).unwrap();
    let out = ws.path("features.csv");
    ok(&["features", "--input", p(&input), "--output", p(&out)]);
    let first = read(&out);
    assert_eq!(first.lines().count(), 4);
    ok(&["features", "--input", p(&input), "--output", p(&out)]);
    assert_eq!(read(&out), first);

    let empty = ws.path("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let res = osp(&["features", "--input", p(&empty)]);
    assert!(!res.status.success());

    let res = osp(&["features", "--input", p(&ws.path("missing.csv"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing.csv"));
}

#[test]
fn flags_are_validated_before_reading_input() {
    // the input does not exist; the bad flag must be reported instead
    let res = osp(&["label", "--input", "/nonexistent.csv", "--m", "1"]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("m must be"), "{err}");

    let res = osp(&[
        "label",
        "--input",
        "/nonexistent.csv",
        "--base-model",
        "arima",
    ]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("arima"));
}

#[test]
fn env_and_config_precedence() {
    let ws = Workspace::new();
    let cfg = ws.path("osp.toml");
    std::fs::write(&cfg, "m = 1\n").unwrap();
    // config says m = 1 (invalid); the flag wins
    let input = ws.path("corpus.csv");
    ok(&[
        "generate",
        "--count",
        "4",
        "--seed",
        "3",
        "--output",
        p(&input),
    ]);
    let labels = ws.path("labels.csv");
    ok(&[
        "label",
        "--config",
        p(&cfg),
        "--m",
        "4",
        "--input",
        p(&input),
        "--base-model",
        "naive",
        "--output",
        p(&labels),
    ]);
    assert!(read(&labels)
        .lines()
        .next()
        .unwrap()
        .contains("e4_4,label_actual"));
    let res = osp(&["label", "--config", p(&cfg), "--input", p(&input)]);
    assert!(!res.status.success());

    // the environment counts as a flag
    let out = Command::new(env!("CARGO_BIN_EXE_osp"))
        .args([
            "label",
            "--config",
            p(&cfg),
            "--input",
            p(&input),
            "--base-model",
            "naive",
            "--output",
        ])
        .arg(&labels)
        .env("OSP_M", "3")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(read(&labels)
        .lines()
        .next()
        .unwrap()
        .contains("e3_4,label_actual"));
}

#[test]
fn full_pipeline() {
    let ws = Workspace::new();
    let train = ws.path("train.csv");
    let test = ws.path("test.csv");
    ok(&[
        "generate",
        "--count",
        "60",
        "--seed",
        "1",
        "--output",
        p(&train),
    ]);
    ok(&[
        "generate",
        "--count",
        "20",
        "--seed",
        "2",
        "--output",
        p(&test),
    ]);

    let labels = ws.path("labels.csv");
    let out = ok(&[
        "label",
        "--input",
        p(&train),
        "--base-model",
        "ses",
        "--output",
        p(&labels),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("labelled 60 series"));

    let mut models = Vec::new();
    for objective in ["cls", "reg"] {
        let model = ws.path(&format!("{objective}.json"));
        let out = ok(&[
            "train",
            "--labels",
            p(&labels),
            "--objective",
            objective,
            "--rounds",
            "20",
            "--model-out",
            p(&model),
        ]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert_eq!(
            stdout.lines().filter(|l| l.starts_with("  ")).count(),
            5,
            "{stdout}"
        );
        models.push(model);
    }

    let fc = ws.path("forecast.csv");
    ok(&[
        "forecast",
        "--input",
        p(&test),
        "--model",
        p(&models[0]),
        "--base-model",
        "ses",
        "--output",
        p(&fc),
    ]);
    let text = read(&fc);
    assert_eq!(text.lines().count(), 21);
    assert_eq!(
        text.lines().next().unwrap(),
        "series_id,method,interval,f1,f2,f3,f4,f5,f6"
    );
    assert!(text.lines().nth(1).unwrap().contains(",average_cls,"));

    // a model trained with m = 5 cannot be used with m = 4
    let res = osp(&[
        "forecast",
        "--input",
        p(&test),
        "--model",
        p(&models[0]),
        "--m",
        "4",
    ]);
    assert!(!res.status.success());

    let scores = ws.path("scores.csv");
    let summary = ws.path("summary.csv");
    let eval = |scores: &Path, summary: &Path| {
        ok(&[
            "evaluate",
            "--input",
            p(&test),
            "--base-model",
            "ses",
            "--model",
            p(&models[0]),
            "--model",
            p(&models[1]),
            "--seed",
            "9",
            "--output",
            p(scores),
            "--summary",
            p(summary),
        ])
    };
    let out = eval(&scores, &summary);
    let table = String::from_utf8_lossy(&out.stdout);
    for method in [
        "average_cls",
        "average_reg",
        "combined",
        "random",
        "changepoint",
        "total_series",
    ] {
        assert!(table.contains(method), "{table}");
    }

    // summary means recomputed from the per-series rows
    let mut rdr = csv::Reader::from_path(&scores).unwrap();
    let rows: Vec<(String, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].to_string(), r[2].parse().unwrap())
        })
        .collect();
    let mut rdr = csv::Reader::from_path(&summary).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let vals: Vec<f64> = rows
            .iter()
            .filter(|(m, _)| m == &rec[0])
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(vals.len(), rec[1].parse::<usize>().unwrap());
        let mut sum = 0.0;
        for v in &vals {
            sum += v;
        }
        let mean: f64 = rec[2].parse().unwrap();
        assert_eq!(mean, sum / vals.len() as f64, "{}", &rec[0]);
    }

    let scores2 = ws.path("scores2.csv");
    let summary2 = ws.path("summary2.csv");
    eval(&scores2, &summary2);
    assert_eq!(read(&scores), read(&scores2));
    assert_eq!(read(&summary), read(&summary2));

    // baselines only
    let out = ok(&[
        "evaluate",
        "--input",
        p(&test),
        "--base-model",
        "naive",
        "--output",
        p(&scores2),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("total_series"));
}
