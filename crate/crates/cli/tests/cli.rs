use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use pcnlab::data::load_checkpoint;
use pcnlab::{Activation, MetricsLog, PcnModel, Phase};

fn pcnlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcnlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(dir: &TempDir, cmd: &[&str], body: &str, out: &str) -> (Output, PathBuf) {
    let cfg = write_config(dir.path(), "run.toml", body);
    let out_dir = dir.path().join(out);
    let mut args: Vec<&str> = cmd.to_vec();
    let (c, o) = (cfg.to_str().unwrap().to_string(), out_dir.to_str().unwrap().to_string());
    args.extend(["--config", &c, "--out", &o]);
    (pcnlab(&args), out_dir)
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[idx].to_string()).collect()
}

const BLOBS: &str = r#"
[model]
dims = [2, 8, 2]

[train]
optimizer = "sgd"
lr = 0.1
batch = 16
epochs = 20
seed = 1

[data]
source = "synth"
kind = "two_gaussians"
n = 200
seed = 3
"#;

fn with_train(base: &str, extra: &str) -> String {
    base.replace("[train]\n", &format!("[train]\n{extra}\n"))
}

#[test]
fn zero_epochs_checkpoints_the_initialization() {
    let dir = TempDir::new().unwrap();
    let body = BLOBS.replace("epochs = 20", "epochs = 0");
    let (out, path) = run(&dir, &["train"], &body, "o");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = load_checkpoint(path.join("model.pcnc")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let init = PcnModel::glorot(&[2, 8, 2], &[Activation::Tanh, Activation::Identity], true, &mut rng).unwrap();
    assert_eq!(saved, init);
    let log = MetricsLog::from_jsonl(&fs::read_to_string(path.join("metrics.jsonl")).unwrap()).unwrap();
    assert_eq!(log.of_phase(Phase::Epoch).count(), 0);
}

#[test]
fn identical_config_and_seed_give_identical_metrics() {
    let dir = TempDir::new().unwrap();
    let (a, pa) = run(&dir, &["train"], BLOBS, "a");
    let (b, pb) = run(&dir, &["train"], BLOBS, "b");
    assert!(a.status.success() && b.status.success());
    let ma = fs::read(pa.join("metrics.jsonl")).unwrap();
    assert!(!ma.is_empty());
    assert_eq!(ma, fs::read(pb.join("metrics.jsonl")).unwrap());
}

#[test]
fn pc_se_separates_two_gaussians() {
    let dir = TempDir::new().unwrap();
    let (out, path) = run(&dir, &["train"], BLOBS, "o");
    assert!(out.status.success());
    assert_eq!(csv_column(&path.join("summary.csv"), "final_train_acc"), vec!["1.0"]);
}

#[test]
fn seed_flag_changes_run_id() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &BLOBS.replace("epochs = 20", "epochs = 1"));
    let c = cfg.to_str().unwrap();
    let ids: Vec<String> = ["1", "2"]
        .iter()
        .map(|s| {
            let out = dir.path().join(format!("s{s}"));
            let o = pcnlab(&["train", "--config", c, "--seed", s, "--out", out.to_str().unwrap()]);
            assert!(o.status.success());
            csv_column(&out.join("summary.csv"), "run_id")[0].clone()
        })
        .collect();
    assert_ne!(ids[0], ids[1]);
    assert!(ids
        .iter()
        .all(|id| id.len() == 16 && id.chars().all(|c| c.is_ascii_hexdigit())));
}

#[test]
fn malformed_configs_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        BLOBS.replace("[data]", "[data]\ncolour = 3"),
        BLOBS.replace("lr = 0.1", "lr = -0.1"),
        BLOBS.replace("dims = [2, 8, 2]", "dims = [2]"),
        BLOBS.replace("dims = [2, 8, 2]", "dims = [3, 8, 2]"),
        BLOBS.replace("[train]", "[train]\nalgorithm = \"sgd\""),
        "not toml at all [".to_string(),
    ];
    for (i, body) in cases.iter().enumerate() {
        let (out, _) = run(&dir, &["train"], body, &format!("o{i}"));
        assert_eq!(
            out.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let missing = pcnlab(&["train", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_3_and_leaves_a_record() {
    let dir = TempDir::new().unwrap();
    let body = BLOBS
        .replace("lr = 0.1", "lr = 1e300")
        .replace("dims = [2, 8, 2]", "dims = [2, 8, 2]\nactivation = \"identity\"");
    let (out, path) = run(&dir, &["train"], &body, "o");
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let log = MetricsLog::from_jsonl(&fs::read_to_string(path.join("metrics.jsonl")).unwrap()).unwrap();
    assert_eq!(log.of_phase(Phase::Diverged).count(), 1);
    assert!(!path.join("model.pcnc").exists());
}

#[test]
fn held_lock_is_an_error() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("o");
    fs::create_dir_all(&out_dir).unwrap();
    fs::write(out_dir.join(".pcnlab.lock"), "1").unwrap();
    let (out, _) = run(&dir, &["train"], BLOBS, "o");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn lyapunov_on_full_batch_sgd_run_has_no_violations() {
    let dir = TempDir::new().unwrap();
    let body = with_train(
        &BLOBS
            .replace("batch = 16", "batch = 1000")
            .replace("lr = 0.1", "lr = 0.01"),
        "shuffle = false",
    );
    let (out, path) = run(&dir, &["diagnose", "lyapunov"], &body, "o");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&path.join("lyapunov.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[2], "true", "{r:?}");
        assert_eq!(&r[4], "0", "{r:?}");
    }
}

const TEACHER: &str = r#"
[model]
dims = [2, 1, 1]
init_scale = 3.0

[train]
seed = 4

[inference]
gamma = 0.1
steps = 1000
tol = 1e-12

[data]
source = "teacher"
n = 64
seed = 4

[diagnose]
magnitude = 0.0
perturbations = 2
horizon = 10
lr = 1.0
"#;

#[test]
fn zero_perturbation_is_marked_skipped() {
    let dir = TempDir::new().unwrap();
    let (out, path) = run(&dir, &["diagnose", "perturb"], TEACHER, "o");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_column(&path.join("perturb.csv"), "fit"), vec!["skipped", "skipped"]);
    let traj = fs::read_to_string(path.join("trajectories.jsonl")).unwrap();
    let lines = traj.lines().count();
    assert!(lines >= 2 * 10 && lines % 2 == 0, "{lines}");
}

#[test]
fn geometry_at_zero_inference_steps_matches_bp_at_output() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{}\n[inference]\nsteps = 0\n",
        BLOBS.replace("epochs = 20", "epochs = 1")
    );
    let (out, path) = run(&dir, &["diagnose", "geometry"], &body, "o");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&path.join("geometry.csv"));
    let output_rows: Vec<_> = rows.iter().filter(|r| &r[3] == "2").collect();
    assert!(!output_rows.is_empty());
    for r in output_rows {
        assert_eq!((&r[4], &r[5]), ("0.0", "0.0"));
    }
}

const ORACLE: &str = r#"
[model]
dims = [2, 2]

[data]
source = "synth"
kind = "linreg"
n = 8

[oracle]
seeds = [5]
train_steps = 20
"#;

#[test]
fn oracle_single_instance_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, pa) = run(&dir, &["oracle"], ORACLE, "a");
    let (b, pb) = run(&dir, &["oracle"], ORACLE, "b");
    assert!(
        a.status.success() && b.status.success(),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let ra = fs::read(pa.join("oracle.csv")).unwrap();
    assert_eq!(ra, fs::read(pb.join("oracle.csv")).unwrap());
    assert_eq!(csv_rows(&pa.join("oracle.csv")).len(), 1);
    assert_eq!(fs::read_to_string(pa.join("oracle.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn single_layer_population_has_zero_tp_error() {
    let dir = TempDir::new().unwrap();
    let body = ORACLE.replace("seeds = [5]", "seeds = [0, 1]\nsingle_layer = true");
    let (out, path) = run(&dir, &["oracle"], &body, "o");
    assert!(out.status.success());
    assert_eq!(csv_column(&path.join("oracle.csv"), "E_TP"), vec!["0.0", "0.0"]);
}

#[test]
fn oracle_guard_violation_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let body = r#"
[model]
dims = [2, 64, 64, 1]

[data]
source = "synth"
kind = "linreg"
n = 8

[oracle]
instance = "config"
"#;
    let (out, _) = run(&dir, &["oracle"], body, "o");
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn race_with_one_algorithm_has_one_row() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{}\n[race]\nalgorithms = [\"bp\"]\nseeds = [3]\n",
        BLOBS.replace("epochs = 20", "epochs = 2")
    );
    let (out, path) = run(&dir, &["race"], &body, "o");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&path.join("race.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!((&rows[0][1], &rows[0][2]), ("bp", "3"));
}

#[test]
fn race_with_zero_budget_marks_everything_not_reached() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{}\n[race]\nseeds = [0, 1]\n",
        BLOBS.replace("epochs = 20", "epochs = 0")
    );
    let (out, path) = run(&dir, &["race"], &body, "o");
    assert!(out.status.success());
    let col = csv_column(&path.join("race.csv"), "epochs_to_criterion");
    assert_eq!(col.len(), 4);
    assert!(col.iter().all(|c| c == "not-reached"));
}

#[test]
fn data_summary_reports_the_split() {
    let dir = TempDir::new().unwrap();
    let (out, path) = run(&dir, &["data"], BLOBS, "o");
    assert!(out.status.success());
    assert_eq!(csv_column(&path.join("data.csv"), "train_n"), vec!["180"]);
    assert_eq!(csv_column(&path.join("data.csv"), "val_n"), vec!["20"]);
}
