//! Binary-level checks of the CLI contract.

use std::path::Path;
use std::process::Command;

fn fedprobe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedprobe"))
}

#[test]
fn unknown_kind_exits_nonzero_and_names_valid_kinds() {
    let output = fedprobe().args(["run", "bogus_kind"]).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    for kind in [
        "dm_sweep",
        "noise_sweep",
        "subset_sweep",
        "ifca_compare",
        "ifca_misspecified",
        "oracle_compare",
        "online",
        "tree_agnostic",
    ] {
        assert!(stderr.contains(kind), "stderr missing {}: {}", kind, stderr);
    }
}

#[test]
fn generate_writes_device_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("federation.toml");
    std::fs::write(
        &config,
        "n_devices = 4\nsamples_per_device = 3\ndim = 2\ncluster_sizes = [2, 2]\n",
    )
    .unwrap();
    let out = dir.path().join("fed");
    let status = fedprobe()
        .args(["generate", "--quiet", "--seed", "7"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("manifest.txt").exists());
    for i in 0..4 {
        assert!(out.join(format!("device_{:03}.csv", i)).exists());
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 7"));
}

#[test]
fn run_writes_identical_output_twice() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "kind = \"dm_sweep\"\nn_devices = 8\nrounds = 5\nn_seeds = 2\ncandidate_count = 2\ndm_values = [0.2, 1.0]\n",
    )
    .unwrap();

    let run = |out: &Path| {
        let status = fedprobe()
            .args(["run", "dm_sweep", "--quiet", "--seed", "1"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("dm_sweep.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);
    let header = String::from_utf8(a).unwrap();
    assert!(header.starts_with("k,d/m=0.2,d/m=1\n"));
}

#[test]
fn sweep_runs_each_listed_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    let out_a = dir.path().join("first");
    let out_b = dir.path().join("second");
    std::fs::write(
        &config,
        format!(
            r#"
[[experiment]]
kind = "dm_sweep"
n_devices = 8
rounds = 3
n_seeds = 1
candidate_count = 2
dm_values = [1.0]
out = "{}"

[[experiment]]
kind = "oracle_compare"
n_devices = 8
rounds = 3
n_seeds = 1
candidate_count = 2
dm_values = [1.0]
out = "{}"
"#,
            out_a.display(),
            out_b.display()
        ),
    )
    .unwrap();
    let status = fedprobe()
        .args(["sweep", "--quiet"])
        .arg("--config")
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_a.join("dm_sweep.csv").exists());
    assert!(out_b.join("oracle_compare.csv").exists());
    assert!(out_b.join("oracle_compare_manifest.txt").exists());
}
