//! Black-box tests of the `lsbl` binary: exit codes, file outputs, and
//! rerun determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lsbl")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn synthetic_config(out_dir: &Path, count: usize) -> String {
    format!(
        r#"{{
  "seed": 17,
  "out_dir": "{out}",
  "data": {{
    "synthetic": {{
      "m": 10, "n": 20,
      "structure": {{ "kind": "unstructured", "k_min": 1, "k_max": 3 }},
      "amplitude": {{ "mode": "uniform_shell", "lo": 0.75, "hi": 1.0 }},
      "count": {count}
    }}
  }},
  "model": {{ "variant": "nw1", "layers": 2 }},
  "train": {{ "steps_per_phase": 10, "batch_size": 4,
              "dataset": "{out}/dataset.lsblds" }},
  "eval": {{
    "sweep": {{ "sparsity": [1, 2] }},
    "samples": 20,
    "solvers": [ {{ "kind": "sbl", "iterations": 5 }}, {{ "kind": "omp" }} ]
  }}
}}"#,
        out = out_dir.display()
    )
}

#[test]
fn generate_is_reproducible_and_prints_digest() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let cfg = write_config(dir.path(), "cfg.json", &synthetic_config(&out1, 50));
    let o = run(&["generate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let digest = String::from_utf8_lossy(&o.stdout);
    assert!(digest.contains("10x20"), "digest: {digest}");
    assert!(digest.contains("count=50"));
    // same seed, different out dir: byte-identical container
    let o2 = run(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(o2.status.success());
    let b1 = std::fs::read(out1.join("dataset.lsblds")).unwrap();
    let b2 = std::fs::read(out2.join("dataset.lsblds")).unwrap();
    assert_eq!(b1, b2);
}

#[test]
fn zero_count_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &synthetic_config(&out, 0));
    let o = run(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_config_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{ "seed": 1, "out_dir": "/tmp/x", "banana": 3,
                    "data": { "synthetic": { "m": 4, "n": 8,
                      "structure": {"kind": "unstructured", "k_min": 1, "k_max": 2},
                      "amplitude": {"mode": "unit_gaussian"}, "count": 1 } } }"#;
    let cfg = write_config(dir.path(), "cfg.json", body);
    let o = run(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("banana"));
}

#[test]
fn train_without_dataset_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &synthetic_config(&out, 10));
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_with_unknown_solver_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut body = synthetic_config(&out, 10);
    body = body.replace("\"kind\": \"omp\"", "\"kind\": \"sparsenet\"");
    let cfg = write_config(dir.path(), "cfg.json", &body);
    let o = run(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sparsenet"));
}

#[test]
fn train_then_eval_throughput_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "cfg.json", &synthetic_config(&out, 200));
    let cfg = cfg.to_str().unwrap();
    assert!(run(&["generate", "--config", cfg]).status.success());
    let t = run(&["train", "--config", cfg, "--serial"]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let model1 = std::fs::read(out.join("model.lsbl")).unwrap();
    let log1 = std::fs::read(out.join("training_log.csv")).unwrap();
    assert!(log1.starts_with(b"phase,layer,step,loss"));

    // rerun training serial: byte-identical model and log
    let t2 = run(&["train", "--config", cfg, "--serial"]);
    assert!(t2.status.success());
    assert_eq!(model1, std::fs::read(out.join("model.lsbl")).unwrap());
    assert_eq!(log1, std::fs::read(out.join("training_log.csv")).unwrap());

    let e = run(&["eval", "--config", cfg]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let csv1 = std::fs::read(out.join("results.csv")).unwrap();
    let text = String::from_utf8_lossy(&csv1);
    assert!(text.starts_with("sweep,solver,rmse,failure_rate,p"));
    // 2 sweep points x 2 solvers
    assert_eq!(text.lines().count(), 1 + 4, "{text}");
    let e2 = run(&["eval", "--config", cfg]);
    assert!(e2.status.success());
    assert_eq!(csv1, std::fs::read(out.join("results.csv")).unwrap());
}

#[test]
fn resume_from_checkpoint_matches_uninterrupted_serial_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_body = synthetic_config(&out, 100).replace(
        "\"layers\": 2",
        "\"layers\": 3",
    );
    let cfg = write_config(dir.path(), "cfg.json", &cfg_body);
    let cfg = cfg.to_str().unwrap();
    assert!(run(&["generate", "--config", cfg]).status.success());
    assert!(run(&["train", "--config", cfg, "--serial"]).status.success());
    let full = std::fs::read(out.join("model.lsbl")).unwrap();
    let checkpoint = out.join("checkpoint_layer_2.lsbl");
    assert!(checkpoint.exists());

    // resume from the 2-layer checkpoint into a fresh out dir
    let out2 = dir.path().join("resumed");
    let resumed_body = synthetic_config(&out2, 100)
        .replace("\"layers\": 2", "\"layers\": 3")
        .replace(
            "\"batch_size\": 4,",
            &format!(
                "\"batch_size\": 4, \"resume_from\": \"{}\",",
                checkpoint.display()
            ),
        )
        .replace(
            &format!("{}/dataset.lsblds", out2.display()),
            &format!("{}/dataset.lsblds", out.display()),
        );
    let cfg2 = write_config(dir.path(), "cfg2.json", &resumed_body);
    let r = run(&["train", "--config", cfg2.to_str().unwrap(), "--serial"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let resumed = std::fs::read(out2.join("model.lsbl")).unwrap();
    assert_eq!(full, resumed);
}

#[test]
fn dump_weights_of_untrained_model_shows_identity_blocks() {
    use lsbl_core::lsbl::{save_model, LsblModel, Variant};
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    let n = 5;
    let depth = 3;
    let model = LsblModel::sbl_initialized(Variant::Nw1, n, 1, depth);
    let model_path = out.join("model.lsbl");
    save_model(&model, &model_path).unwrap();
    let body = format!(
        r#"{{ "seed": 1, "out_dir": "{out}",
             "data": {{ "synthetic": {{ "m": 4, "n": 5,
               "structure": {{"kind": "unstructured", "k_min": 1, "k_max": 2}},
               "amplitude": {{"mode": "unit_gaussian"}}, "count": 1 }} }},
             "model": {{ "variant": "nw1", "layers": 3,
                         "path": "{model}" }} }}"#,
        out = out.display(),
        model = model_path.display()
    );
    let cfg = write_config(dir.path(), "cfg.json", &body);
    let o = run(&["dump-weights", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for layer in 1..=depth {
        let text =
            std::fs::read_to_string(out.join(format!("weights_layer_{layer}.csv"))).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "sq_0,sq_1,sq_2,sq_3,sq_4,phi_0,phi_1,phi_2,phi_3,phi_4,bias"
        );
        for (i, line) in lines.enumerate() {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            assert_eq!(vals.len(), 2 * n + 1);
            for j in 0..n {
                let want_sq = if i == j { 1.0 } else { 0.0 };
                assert_eq!(vals[j], want_sq, "layer {layer} row {i}");
                assert_eq!(vals[n + j], want_sq, "layer {layer} row {i}");
            }
            assert_eq!(vals[2 * n], 0.0, "bias must be zero");
        }
    }
    assert!(!out.join(format!("weights_layer_{}.csv", depth + 1)).exists());
}

#[test]
fn radar_pipeline_runs_and_noiseless_oracle_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let body = format!(
        r#"{{
  "seed": 3,
  "out_dir": "{out}",
  "data": {{
    "radar": {{
      "mt": 2, "mr": 4, "q": 2, "n_r": 3,
      "angles": {{ "span": {{ "lo": -45.0, "hi": 45.0, "count": 4 }} }},
      "sweeps": 2,
      "target": {{ "extent_min": 2, "extent_max": 3 }}
    }}
  }},
  "model": {{ "variant": "nw1", "layers": 2 }},
  "train": {{ "steps_per_phase": 10, "batch_size": 4, "train_samples": 64 }},
  "eval": {{
    "sweep": {{ "snr_db": [20.0] }},
    "samples": 25,
    "include_noiseless": true,
    "solvers": [
      {{ "kind": "mmse_oracle" }},
      {{ "kind": "lsbl" }},
      {{ "kind": "pcsbl", "iterations": 5 }}
    ]
  }}
}}"#,
        out = out.display()
    );
    let cfg = write_config(dir.path(), "cfg.json", &body);
    let o = run(&["radar", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(text.starts_with("sweep,solver,rmse,failure_rate,p"));
    // 2 sweep points (20 dB and noiseless) x 3 solvers
    assert_eq!(text.lines().count(), 1 + 6, "{text}");
    let oracle_noiseless: f64 = text
        .lines()
        .find(|l| l.starts_with("inf,mmse_oracle"))
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(oracle_noiseless <= 1e-6, "oracle rmse {oracle_noiseless}");
}
