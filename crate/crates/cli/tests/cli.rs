use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gread::io::{load_dataset, DatasetPaths};

fn gread(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gread"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FAST: [&str; 2] = ["--set", "epochs=5"];

#[test]
fn train_preset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["train", "--config", "gread-bs-csbm", FAST[0], FAST[1]], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["checkpoint.json", "history.csv", "metrics.txt", "config.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let line = stdout(&o);
    let acc: f64 = line.trim().strip_prefix("test_acc=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,val_acc,test_acc"));
    assert_eq!(history.lines().count(), 6);
}

#[test]
fn echoed_config_reproduces_history() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = gread(&["train", "--config", "gread-bs-csbm", "--seed", "4", FAST[0], FAST[1]], a.path());
    assert!(o.status.success());
    let echo = a.path().join("config.toml");
    let o = gread(&["train", "--config", echo.to_str().unwrap()], b.path());
    assert!(o.status.success());
    let read = |d: &Path| fs::read(d.join("history.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn texas_row_runs_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(
        &["train", "--config", "gread-bs-texas", "--set", "dataset=csbm", "--set", "epochs=3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = fs::read_to_string(dir.path().join("config.toml")).unwrap();
    for want in ["adjacency = \"oa\"", "alpha = \"sc\"", "beta = \"vc\"", "reaction = \"bs\""] {
        assert!(cfg.contains(want), "{want}");
    }
}

#[test]
fn missing_dataset_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["train", "--config", "gread-bs-texas", "--set", "data_dir=/nonexistent"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generated_csbm_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["generate", "csbm"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("nodes=100"));
    let data = load_dataset(&DatasetPaths::in_dir(dir.path()), false).unwrap();
    assert_eq!(data.n_nodes(), 100);
    assert_eq!(data.n_features(), 2);
    let again = tempfile::tempdir().unwrap();
    gread::io::write_dataset(again.path(), &data).unwrap();
    for f in ["edges.tsv", "features.csv", "labels.csv", "splits.csv"] {
        assert_eq!(
            fs::read(dir.path().join(f)).unwrap(),
            fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn homophily_target_realized() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["generate", "homophily", "--set", "target_h=0.2"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let h: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("homophily="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.15..=0.25).contains(&h), "{h}");
}

#[test]
fn grid_has_760_edges() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["generate", "grid"], dir.path());
    assert!(o.status.success());
    let edges = fs::read_to_string(dir.path().join("edges.tsv")).unwrap();
    assert_eq!(edges.lines().count(), 2 * 20 * 20 - 20 - 20);
    let features = fs::read_to_string(dir.path().join("features.csv")).unwrap();
    assert_eq!(features.lines().next(), Some("id,f0"));
}

#[test]
fn energy_on_csbm_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["energy", "--config", "gread-bs-csbm"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,energy,label"));
    assert_eq!(lines.count(), 41);
}

#[test]
fn divergent_energy_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(
        &["energy", "--set", "reaction=z", "--set", "energy_beta=5", "--set", "t_end=40", "--set", "csbm_sigma=20"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn empty_sweep_grid_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["sweep"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_summary_and_raw() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(
        &["sweep", "--config", "sweep-csbm", "--jobs", "2", "--set", "epochs=3", "--set", "sweep_seeds=2"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("value,mean_acc,std_acc"));
    assert_eq!(summary.lines().count(), 4);
    let raw = fs::read_to_string(dir.path().join("sweep_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 7);
}

#[test]
fn export_zero_and_end_time() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(
        &["export", "--set", "epochs=2", "--set", "hidden_dim=4", "--set", "t_end=2", "--set", "tau=0.5"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for t in ["0", "2"] {
        let csv = fs::read_to_string(dir.path().join(format!("embeddings_t{t}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("node,label,c0,c1,c2,c3"));
        assert_eq!(csv.lines().count(), 101);
    }
}

#[test]
fn export_from_checkpoint_matches_training_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--set", "epochs=2", "--set", "hidden_dim=3"];
    let o = gread(&[&["train"], &args[..]].concat(), dir.path());
    assert!(o.status.success());
    let ck = dir.path().join("checkpoint.json");
    let from_ck = tempfile::tempdir().unwrap();
    let set_ck = format!("checkpoint={}", ck.display());
    let o = gread(&[&["export", "--set", &set_ck], &args[..]].concat(), from_ck.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let fresh = tempfile::tempdir().unwrap();
    let o = gread(&[&["export"], &args[..]].concat(), fresh.path());
    assert!(o.status.success());
    assert_eq!(
        fs::read(from_ck.path().join("embeddings_t1.csv")).unwrap(),
        fs::read(fresh.path().join("embeddings_t1.csv")).unwrap()
    );
}

#[test]
fn bench_single_size_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(
        &["bench", "--set", "bench_sizes=[200]", "--set", "bench_samples=2", "--set", "bench_reactions=[\"fb*\"]"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("bench_fbstar.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("edges,ns_per_step"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn unknown_key_and_flag_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["train", "--set", "learning_rate=0.1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "reaction = \"bs\"\nwarmup = 3\n").unwrap();
    let o = gread(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("warmup"));

    let o = gread(&["train", "--warmup", "3"], dir.path());
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("--warmup"));
}

#[test]
fn bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for set in ["reaction=heat", "tau=-1", "dropout=1.5", "reaction=gcn", "csbm_nodes=101"] {
        let o = gread(&["train", "--set", set], dir.path());
        assert_eq!(o.status.code(), Some(1), "{set}: {}", stderr(&o));
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gread"))
        .args(["generate", "grid", "--set", "grid_width=3", "--set", "grid_height=3"])
        .env("GREAD_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("edges.tsv").exists());
}

#[test]
fn presets_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = gread(&["presets"], dir.path());
    let names = stdout(&o);
    assert!(names.lines().count() >= 64);
    for want in ["gread-bs-csbm", "gread-fbstar-cora", "gread-z-pubmed"] {
        assert!(names.lines().any(|l| l == want), "{want}");
    }
}
