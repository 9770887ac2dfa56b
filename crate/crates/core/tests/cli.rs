use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FAST: &str = "train.max_epochs = 2\ntrain.patience = 2\n";

fn lambtouch(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lambtouch"));
    cmd.args(args).env_remove("LAMBTOUCH_CONFIG");
    if let Some(c) = config {
        cmd.env("LAMBTOUCH_CONFIG", c);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn config(&self, text: &str) -> PathBuf {
        let p = self.path("run.cfg");
        fs::write(&p, text).unwrap();
        p
    }

    fn gen(&self, name: &str, count: usize, cfg: Option<&Path>) {
        ok(&lambtouch(
            &[
                "gen",
                "--count",
                &count.to_string(),
                "--seed",
                "1",
                "--out",
                &self.s(name),
            ],
            cfg,
        ));
    }
}

#[test]
fn gen_is_deterministic_and_reports_size() {
    let w = Work::new();
    let out = ok(&lambtouch(
        &[
            "gen",
            "--count",
            "25",
            "--seed",
            "1",
            "--out",
            &w.s("a.lwtd"),
        ],
        None,
    ));
    ok(&lambtouch(
        &[
            "gen",
            "--count",
            "25",
            "--seed",
            "1",
            "--out",
            &w.s("b.lwtd"),
        ],
        None,
    ));
    let (a, b) = (
        fs::read(w.path("a.lwtd")).unwrap(),
        fs::read(w.path("b.lwtd")).unwrap(),
    );
    assert_eq!(a, b);
    assert_eq!(a.len(), 13 + 25 * 4013);
    assert!(
        out.contains("25 records") && out.contains(&format!("{} bytes", a.len())),
        "{out}"
    );
    ok(&lambtouch(
        &[
            "gen",
            "--count",
            "25",
            "--seed",
            "2",
            "--out",
            &w.s("c.lwtd"),
        ],
        None,
    ));
    assert_ne!(fs::read(w.path("c.lwtd")).unwrap(), a);
}

#[test]
fn gen_zero_and_usage_errors() {
    let w = Work::new();
    let out = lambtouch(&["gen", "--count", "0", "--out", &w.s("e.lwtd")], None);
    ok(&out);
    assert_eq!(fs::read(w.path("e.lwtd")).unwrap().len(), 13);
    let banner = String::from_utf8_lossy(&out.stderr);
    assert!(
        banner.contains(env!("CARGO_PKG_VERSION"))
            && banner.contains("seed 1")
            && banner.contains("sha256:"),
        "{banner}"
    );

    let out = lambtouch(&["gen", "--count", "3"], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    assert!(!lambtouch(
        &["gen", "--count", "3", "--out", &w.s("x"), "--bogus"],
        None
    )
    .status
    .success());
    assert!(!lambtouch(&[], None).status.success());
}

#[test]
fn config_errors_and_hash() {
    let w = Work::new();
    let cfg = w.config("plate.snr_db = 20\nplate.colour = blue\n");
    let out = lambtouch(
        &["gen", "--count", "1", "--out", &w.s("d.lwtd")],
        Some(&cfg),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("line 2") && err.contains("plate.colour"),
        "{err}"
    );

    let cfg = w.config("plate.snr_db = 20\n");
    let a = lambtouch(
        &["gen", "--count", "1", "--out", &w.s("d.lwtd")],
        Some(&cfg),
    );
    let b = lambtouch(
        &[
            "--config",
            &cfg.display().to_string(),
            "gen",
            "--count",
            "1",
            "--out",
            &w.s("d2.lwtd"),
        ],
        None,
    );
    let c = lambtouch(&["gen", "--count", "1", "--out", &w.s("d3.lwtd")], None);
    let hash = |o: &Output| {
        String::from_utf8_lossy(&o.stderr)
            .split("sha256:")
            .nth(1)
            .unwrap()
            .trim()
            .to_string()
    };
    assert_eq!(hash(&a), hash(&b));
    assert_ne!(hash(&a), hash(&c));
    assert_eq!(
        fs::read(w.path("d.lwtd")).unwrap(),
        fs::read(w.path("d2.lwtd")).unwrap()
    );
    assert_ne!(
        fs::read(w.path("d.lwtd")).unwrap(),
        fs::read(w.path("d3.lwtd")).unwrap()
    );
}

#[test]
fn train_eval_predict_bench() {
    let w = Work::new();
    let cfg = w.config(FAST);
    w.gen("d.lwtd", 120, Some(&cfg));
    let train = |task: &str, out: &str| {
        ok(&lambtouch(
            &[
                "train",
                "--data",
                &w.s("d.lwtd"),
                "--task",
                task,
                "--domain",
                "freq",
                "--seed",
                "4",
                "--out",
                &w.s(out),
            ],
            Some(&cfg),
        ))
    };
    let first = train("grid:10", "g.ckpt");
    assert!(first.contains("392->400->300->200->100->100"), "{first}");
    assert!(first.contains("test: samples=12"), "{first}");
    let again = train("grid:10", "g2.ckpt");
    assert_eq!(first, again);
    assert_eq!(
        fs::read(w.path("g.ckpt")).unwrap(),
        fs::read(w.path("g2.ckpt")).unwrap()
    );
    assert!(fs::read_to_string(w.path("g.ckpt.history.csv"))
        .unwrap()
        .starts_with("epoch,train_loss,val_loss\n1,"));

    let keypad = train("keypad", "k.ckpt");
    assert!(keypad.contains("392->100->50->13"), "{keypad}");
    assert!(!lambtouch(
        &[
            "train",
            "--data",
            &w.s("d.lwtd"),
            "--task",
            "keypad",
            "--domain",
            "time",
            "--out",
            &w.s("kt.ckpt")
        ],
        Some(&cfg)
    )
    .status
    .success());
    assert!(!lambtouch(
        &[
            "train",
            "--data",
            &w.s("d.lwtd"),
            "--task",
            "grid:12",
            "--out",
            &w.s("x.ckpt")
        ],
        Some(&cfg)
    )
    .status
    .success());

    let eval = ok(&lambtouch(
        &[
            "eval",
            "--data",
            &w.s("d.lwtd"),
            "--model",
            &w.s("g.ckpt"),
            "--out-dir",
            &w.s("rep"),
        ],
        None,
    ));
    let rmse: f64 = eval
        .split("rmse_cm=")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(rmse >= 0.0);
    assert_eq!(
        eval,
        ok(&lambtouch(
            &["eval", "--data", &w.s("d.lwtd"), "--model", &w.s("g.ckpt")],
            None
        ))
    );
    assert_eq!(
        fs::read_to_string(w.path("rep/confusion.csv"))
            .unwrap()
            .lines()
            .count(),
        101
    );
    let eval = ok(&lambtouch(
        &[
            "eval",
            "--data",
            &w.s("d.lwtd"),
            "--model",
            &w.s("k.ckpt"),
            "--out-dir",
            &w.s("krep"),
        ],
        None,
    ));
    assert!(eval.contains("accuracy="));
    assert!(fs::read_to_string(w.path("krep/confusion.csv"))
        .unwrap()
        .starts_with("predicted\\target,1,2,3,4,5,6,7,8,9,*,0,#,L\n"));

    let p = ok(&lambtouch(
        &[
            "predict",
            "--data",
            &w.s("d.lwtd"),
            "--model",
            &w.s("g.ckpt"),
            "--index",
            "3",
        ],
        None,
    ));
    let coords: Vec<f64> = p.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(coords.len(), 2);
    assert_eq!((coords[0] - 1.0).rem_euclid(2.0), 0.0);
    let k = ok(&lambtouch(
        &[
            "predict",
            "--data",
            &w.s("d.lwtd"),
            "--model",
            &w.s("k.ckpt"),
            "--index",
            "0",
        ],
        None,
    ));
    assert!(k.starts_with("key "), "{k}");
    let out = lambtouch(
        &[
            "predict",
            "--data",
            &w.s("d.lwtd"),
            "--model",
            &w.s("g.ckpt"),
            "--index",
            "120",
        ],
        None,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));

    let b = ok(&lambtouch(
        &[
            "bench",
            "--data",
            &w.s("d.lwtd"),
            "--model",
            &w.s("k.ckpt"),
            "--reps",
            "50",
            "--knn",
            "--out-dir",
            &w.s("b"),
        ],
        None,
    ));
    assert!(b.contains("median_ms=") && b.contains("knn"), "{b}");
    assert_eq!(
        fs::read_to_string(w.path("b/latency.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let other = w.path("other.lwtd");
    ok(&lambtouch(
        &[
            "gen",
            "--count",
            "30",
            "--seed",
            "8",
            "--out",
            &other.display().to_string(),
        ],
        None,
    ));
    assert!(!lambtouch(
        &[
            "eval",
            "--data",
            &other.display().to_string(),
            "--model",
            &w.s("g.ckpt")
        ],
        None
    )
    .status
    .success());
    ok(&lambtouch(
        &[
            "eval",
            "--data",
            &other.display().to_string(),
            "--model",
            &w.s("g.ckpt"),
            "--split",
            "all",
        ],
        None,
    ));
}

#[test]
fn sweep_and_circle_outputs() {
    let w = Work::new();
    // Larger keys so every class survives the 20 % subsample of a small dataset.
    let mut text = String::from(FAST);
    for (k, label) in ["1", "2", "3", "4", "5", "6", "7", "8", "9", "*", "0", "#"]
        .iter()
        .enumerate()
    {
        let (row, col) = ((k / 3) as f64, (k % 3) as f64);
        text += &format!(
            "key.{label} = {}, {}, 1.9\n",
            10.0 + (col - 1.0) * 4.0,
            10.0 + (1.5 - row) * 4.0
        );
    }
    let cfg = w.config(&text);
    w.gen("d.lwtd", 1500, Some(&cfg));
    let out = ok(&lambtouch(
        &[
            "sweep",
            "--data",
            &w.s("d.lwtd"),
            "--study",
            "fraction",
            "--reps",
            "20",
            "--out-dir",
            &w.s("s"),
        ],
        Some(&cfg),
    ));
    assert!(
        out.contains("dnn D-100") && out.contains("knn D-20"),
        "{out}"
    );
    let csv = fs::read_to_string(w.path("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);
    assert!(csv.starts_with("method,fraction,train_size,accuracy,median_ms,p95_ms\n"));

    w.gen("small.lwtd", 100, Some(&cfg));
    ok(&lambtouch(
        &[
            "sweep",
            "--data",
            &w.s("small.lwtd"),
            "--study",
            "grid",
            "--out-dir",
            &w.s("g"),
        ],
        Some(&cfg),
    ));
    let grid = fs::read_to_string(w.path("g/grid_comparison.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 20);
    assert_eq!(grid.lines().filter(|l| l.starts_with("R,")).count(), 2);

    let out = ok(&lambtouch(
        &[
            "circle",
            "--data",
            &w.s("small.lwtd"),
            "--count",
            "12",
            "--out-dir",
            &w.s("c"),
        ],
        Some(&cfg),
    ));
    for name in ["C-5 circle", "C-10 circle", "R circle"] {
        assert!(out.contains(name), "{out}");
    }
    let pairs = fs::read_to_string(w.path("c/circle_pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 3 * 12);
    assert!(pairs.starts_with("model,index,true_x,true_y,pred_x,pred_y,error_cm\n"));
    assert!(!lambtouch(&["circle", "--count", "5"], None)
        .status
        .success());
}
