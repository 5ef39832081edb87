//! End-to-end runs of the `spingqe` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spingqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spingqe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = spingqe(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small model and short run so the whole file stays fast.
fn write_config(dir: &Path, epochs: usize) -> String {
    let text = format!(
        "[hamiltonian]\nj = 10.0\nh = 10.0\nn = 4\n\
         [model]\nn_layers = 1\nn_heads = 2\nd_model = 16\nd_ff = 64\n\
         [train]\nm = 3\nt = 5\nepochs = {epochs}\ncheckpoint_every = 2\nn_best_checkpoints = 2\neval_samples = 4\n"
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn exact_prints_ground_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    assert_eq!(ok(&["exact", "--J", "10", "--h", "10", "--N", "4"]).trim(), "-64.641016");
    assert_eq!(ok(&["exact", "--J", "1", "--h", "10", "--N", "4", "--output-dir", &out_dir]).trim(), "-37.000000");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("exact.json")).unwrap()).unwrap();
    assert_eq!(json["ground_energy"].as_f64().unwrap(), -37.0);
}

#[test]
fn bad_input_exits_non_zero_with_message() {
    let out = spingqe(&["exact", "--J", "1", "--h", "1", "--N", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[hamiltonian]\nj = 1.0\nh = 1.0\nn = 4\n[train]\nbeta = -1.0\nm = 0\n").unwrap();
    let out = spingqe(&["train", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.beta") && err.contains("train.m"), "{err}");
}

#[test]
fn zero_epoch_training_writes_header_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0);
    let out = dir.path().join("out");
    ok(&["train", &cfg, "--output-dir", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("# config: {"));
    assert_eq!(data_lines(&csv), vec!["epoch,loss,min,mean,max"]);
    assert!(out.join("final_model.bin").exists());
}

#[test]
fn train_and_gridsearch_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 4);
    let run = |name: &str| {
        let train_dir = dir.path().join(format!("train_{name}"));
        ok(&["train", &cfg, "--seed", "5", "--output-dir", train_dir.to_str().unwrap()]);
        let grid_dir = dir.path().join(format!("grid_{name}"));
        ok(&[
            "gridsearch", &cfg, "--betas", "0.3,1.0", "--ms", "2,3", "--seed", "5", "--output-dir",
            grid_dir.to_str().unwrap(),
        ]);
        (
            fs::read(train_dir.join("convergence.csv")).unwrap(),
            fs::read(grid_dir.join("heatmap.csv")).unwrap(),
        )
    };
    let (train_a, grid_a) = run("a");
    let (train_b, grid_b) = run("b");
    assert_eq!(train_a, train_b);
    assert_eq!(grid_a, grid_b);
    let conv = String::from_utf8(train_a).unwrap();
    assert_eq!(data_lines(&conv).len(), 5);
    let grid = String::from_utf8(grid_a).unwrap();
    assert_eq!(data_lines(&grid)[0], "beta,m,best_energy");
    assert_eq!(data_lines(&grid).len(), 5);
}

#[test]
fn single_cell_grid_matches_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3);
    let grid_dir = dir.path().join("grid");
    ok(&["gridsearch", &cfg, "--betas", "0.3", "--ms", "3", "--output-dir", grid_dir.to_str().unwrap()]);
    let train_dir = dir.path().join("train");
    let stdout = ok(&["train", &cfg, "--output-dir", train_dir.to_str().unwrap()]);
    let best: f64 = stdout.lines().next().unwrap().trim_start_matches("best sampled energy ").parse().unwrap();
    let grid = fs::read_to_string(grid_dir.join("heatmap.csv")).unwrap();
    let row = data_lines(&grid)[1].to_string();
    let cell: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((cell - best).abs() < 1e-6, "{row} vs {best}");
}

#[test]
fn identity_circuit_reports_reference_energy_first() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = dir.path().join("identity.json");
    fs::write(
        &circuit,
        r#"{"n_qubits": 4, "gates": [
            {"template": "XX", "qubits": [0, 1], "angle": 0.0},
            {"template": "YY", "qubits": [1, 2], "angle": 0.0},
            {"template": "Z", "qubits": [3], "angle": 0.0}]}"#,
    )
    .unwrap();
    let out = dir.path().join("pp");
    ok(&[
        "postprocess", "--J", "10", "--h", "10", "--N", "4", "--circuit", circuit.to_str().unwrap(),
        "--output-dir", out.to_str().unwrap(),
    ]);
    let stages = fs::read_to_string(out.join("stages.csv")).unwrap();
    let rows = data_lines(&stages);
    assert_eq!(rows[0], "stage,energy");
    assert_eq!(rows[1], "base,70");
    let energies: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0]));
    let refined: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("refined_circuit.json")).unwrap()).unwrap();
    assert_eq!(refined["gates"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_circuit_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = dir.path().join("bad.json");
    fs::write(&circuit, r#"{"n_qubits": 4, "gates": [{"template": "XX", "qubits": [0], "angle": 0.0}]}"#).unwrap();
    let out = spingqe(&["postprocess", "--J", "1", "--h", "1", "--N", "4", "--circuit", circuit.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gates[0]"));
}

#[test]
fn strong_coupling_scan_has_flat_exact_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan");
    ok(&[
        "scan", "--J", "10", "--ratios", "0.01,0.1,1", "--samples", "2", "--no-postprocess", "--output-dir",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("scan.csv")).unwrap();
    let rows = data_lines(&csv);
    assert_eq!(rows[0], "h_over_j,h,e_model,e_postprocessed,e_exact");
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[3], "");
        let exact: f64 = cols[4].parse().unwrap();
        assert!((exact - -64.641016151377).abs() < 1e-6, "{r}");
        let model: f64 = cols[2].parse().unwrap();
        assert!(model >= exact - 1e-8);
    }
}

#[test]
fn stats_tally_every_sampled_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0);
    let train_dir = dir.path().join("train");
    ok(&["train", &cfg, "--output-dir", train_dir.to_str().unwrap()]);
    let out = dir.path().join("stats");
    let model = train_dir.join("final_model.bin");
    let run = || {
        ok(&[
            "stats", model.to_str().unwrap(), "--samples", "100", "--T", "12", "--seed", "3", "--output-dir",
            out.to_str().unwrap(),
        ]);
        (
            fs::read_to_string(out.join("gate_counts.csv")).unwrap(),
            fs::read_to_string(out.join("angle_hist.csv")).unwrap(),
        )
    };
    let (counts, hist) = run();
    assert_eq!(run(), (counts.clone(), hist.clone()));
    let count_rows = data_lines(&counts);
    assert_eq!(count_rows[0], "template,qubits,count");
    // Z on 4 qubits plus XX, YY, ZZ on 3 bonds.
    assert_eq!(count_rows.len(), 1 + 13);
    let total: usize = count_rows[1..].iter().map(|r| r.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 1200);
    let hist_rows = data_lines(&hist);
    assert_eq!(hist_rows[0], "template,qubits,angle,count");
    assert_eq!(hist_rows.len(), 1 + 130);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        spingqe_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
}
