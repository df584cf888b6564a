use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adasample"));
    c.env("RUST_LOG", "warn");
    c
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &str = "\
train_locations=6
val_locations=2
test_locations=2
episodes_per_location=1
predictor_hidden=4
predictor_epochs=2
predictor_batch=4
drqn_dense=8,8,8
drqn_lstm_hidden=4
drqn_batch=4
drqn_episodes=6
seq_len=4
estimator_hidden=4
estimator_epochs=2
estimator_batch=4
";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .args([
                "generate",
                "--locations",
                "12",
                "--hours",
                "432",
                "--seed",
                "5",
                "--out",
            ])
            .arg(dir.path().join("data.csv"))
            .output()
            .unwrap();
        ok(&out);
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        let text = format!("data={}\n{TINY}{body}", self.path("data.csv").display());
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, config: &Path, out: &str) -> Output {
        bin()
            .args(["run", "--preset", "desk", "--config"])
            .arg(config)
            .arg("--out")
            .arg(self.path(out))
            .output()
            .unwrap()
    }
}

#[test]
fn baseline_runs_without_training() {
    let f = Fixture::new();
    let cfg = f.config("base.txt", "predictor=none\npolicy=uniform\nestimator=gpr\n");
    ok(&f.run(&cfg, "base"));
    let run = f.path("base");
    for a in [
        "metrics.csv",
        "metrics.txt",
        "episodes.csv",
        "estimates.csv",
        "action_histogram.csv",
        "config.txt",
    ] {
        assert!(run.join(a).is_file(), "{a} missing");
    }
    for a in ["predictor.ckpt", "drqn.ckpt", "estimator.ckpt"] {
        assert!(!run.join(a).exists(), "{a} should not exist");
    }
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("config,rmse,mae,mape_pct,coverage\nnone+uniform+gpr,"));
}

#[test]
fn full_pipeline_writes_every_artifact_and_is_deterministic() {
    let f = Fixture::new();
    let cfg = f.config("full.txt", "predictor=lstm\npolicy=drqn\nestimator=lstm\n");
    ok(&f.run(&cfg, "a"));
    ok(&f.run(&cfg, "b"));
    let a = f.path("a");
    for name in [
        "metrics.csv",
        "episodes.csv",
        "action_histogram.csv",
        "config.txt",
        "predictor.ckpt",
        "drqn.ckpt",
        "estimator.ckpt",
        "predictor_training.csv",
        "drqn_training.csv",
        "estimator_training.csv",
    ] {
        assert!(a.join(name).is_file(), "{name} missing");
    }
    let ma = std::fs::read(a.join("metrics.csv")).unwrap();
    let mb = std::fs::read(f.path("b").join("metrics.csv")).unwrap();
    assert_eq!(ma, mb);

    // The snapshot alone reproduces the run.
    let snap = a.join("config.txt");
    let out = bin()
        .args(["run", "--preset", "full", "--config"])
        .arg(&snap)
        .arg("--out")
        .arg(f.path("c"))
        .output()
        .unwrap();
    ok(&out);
    assert_eq!(ma, std::fs::read(f.path("c").join("metrics.csv")).unwrap());

    let hist = std::fs::read_to_string(a.join("action_histogram.csv")).unwrap();
    assert_eq!(hist.lines().count(), 8);
    assert!(hist.starts_with("day,h00,"));
}

#[test]
fn seed_flag_overrides_config() {
    let f = Fixture::new();
    let cfg = f.config(
        "s.txt",
        "predictor=ar4_kalman\npolicy=uniform\nestimator=none\nseed=1\n",
    );
    let out = bin()
        .args(["run", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(f.path("s"))
        .output()
        .unwrap();
    ok(&out);
    let snap = std::fs::read_to_string(f.path("s").join("config.txt")).unwrap();
    assert!(snap.lines().any(|l| l == "seed=9"));
}

#[test]
fn compare_and_plot() {
    let f = Fixture::new();
    let c1 = f.config("u.txt", "predictor=none\npolicy=uniform\nestimator=gpr\n");
    let c2 = f.config("k.txt", "predictor=ar4_kalman\npolicy=uniform\nestimator=none\n");
    ok(&f.run(&c1, "u"));
    ok(&f.run(&c2, "k"));

    let out = bin().arg("compare").arg(f.path("u")).arg(f.path("u")).output().unwrap();
    ok(&out);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.matches("+0.00%").count(), 8, "{table}");

    let out = bin().arg("compare").arg(f.path("u")).arg(f.path("k")).output().unwrap();
    ok(&out);
    let table = String::from_utf8(out.stdout).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["config", "ar4_kalman+uniform+none", "none+uniform+gpr"]);

    let out = bin()
        .arg("compare")
        .arg(f.path("u"))
        .arg(f.path("missing"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("missing"), "{err}");

    let out = bin()
        .args(["plot", "--episode", "1", "--run"])
        .arg(f.path("k"))
        .output()
        .unwrap();
    ok(&out);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,gt,profile,estimate,observed_flag");
    assert_eq!(lines.len(), 169);
    let observed: usize = lines[1..]
        .iter()
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(observed, 28);

    let out = bin()
        .args(["plot", "--episode", "99", "--run"])
        .arg(f.path("k"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errors_map_to_categorized_exit_codes() {
    let f = Fixture::new();
    let bad_key = f.config("bad.txt", "colour=blue\n");
    let out = f.run(&bad_key, "bad");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[config]"));
    assert!(!f.path("bad").exists(), "nothing should be written for a bad config");

    let bad_value = f.config("bad2.txt", "budget=0\n");
    assert_eq!(f.run(&bad_value, "bad2").status.code(), Some(2));

    let p = f.path("nodata.txt");
    std::fs::write(&p, "data=/definitely/not/here.csv\n").unwrap();
    let out = f.run(&p, "nodata");
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.csv"));

    let garbage = f.path("garbage.csv");
    std::fs::write(&garbage, "time,a\nnot-a-date,0.1\n").unwrap();
    let p = f.path("garbage.txt");
    std::fs::write(&p, format!("data={}\n", garbage.display())).unwrap();
    assert_eq!(f.run(&p, "garbage").status.code(), Some(3));

    let out = bin()
        .args(["run", "--preset", "huge", "--config"])
        .arg(&bad_key)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
