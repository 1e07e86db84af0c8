//! Acceptance suite for the command-line surface: byte-level determinism
//! of every pipeline stage and the ablation harness contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fep")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("read {}: {}", name, e))
}

struct Pipeline {
    dir: PathBuf,
}

impl Pipeline {
    fn new(dir: &Path) -> Self {
        let p = Pipeline { dir: dir.to_path_buf() };
        run_ok(
            &p.dir,
            &["generate", "--n", "4", "--seed", "11", "--out", "d.fepd"],
        );
        run_ok(
            &p.dir,
            &[
                "train",
                "--data",
                "d.fepd",
                "--model-kind",
                "template",
                "--out",
                "m.fepm",
            ],
        );
        p
    }
}

#[test]
fn c11_every_stage_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tmp.path());

    run_ok(
        &p.dir,
        &["generate", "--n", "4", "--seed", "11", "--out", "d2.fepd"],
    );
    assert_eq!(read(&p.dir, "d.fepd"), read(&p.dir, "d2.fepd"));

    let explain = |out_dir: &str| {
        run_ok(
            &p.dir,
            &[
                "explain", "--data", "d.fepd", "--model", "m.fepm", "--clip-index", "all",
                "--method", "fep", "--rl", "0.5", "--rh", "0.2", "--iterations", "60",
                "--out-dir", out_dir,
            ],
        );
    };
    explain("runs/a");
    explain("runs/b");
    for i in 0..4 {
        let name = format!("runs/a/mask_{:04}.fept", i);
        let other = format!("runs/b/mask_{:04}.fept", i);
        assert_eq!(read(&p.dir, &name), read(&p.dir, &other), "{}", name);
        let trace_a = format!("runs/a/trace_{:04}.csv", i);
        let trace_b = format!("runs/b/trace_{:04}.csv", i);
        assert_eq!(read(&p.dir, &trace_a), read(&p.dir, &trace_b));
    }
    assert_eq!(read(&p.dir, "runs/a/config.json"), read(&p.dir, "runs/b/config.json"));

    let evaluate = |out: &str| {
        run_ok(
            &p.dir,
            &[
                "evaluate", "--data", "d.fepd", "--model", "m.fepm", "--masks", "runs/a",
                "--out", out,
            ],
        );
    };
    evaluate("r1.json");
    evaluate("r2.json");
    assert_eq!(read(&p.dir, "r1.json"), read(&p.dir, "r2.json"));

    let sweep = |out: &str| {
        run_ok(
            &p.dir,
            &[
                "ablate", "--data", "d.fepd", "--model", "m.fepm", "--rl-grid", "0.2:0.4:0.2",
                "--rh", "0", "--iterations", "40", "--out", out,
            ],
        );
    };
    sweep("t1.csv");
    sweep("t2.csv");
    assert_eq!(read(&p.dir, "t1.csv"), read(&p.dir, "t2.csv"));

    println!("ACCEPTANCE 11 PASS: generate/explain/evaluate/ablate byte-identical across repeated runs");
}

#[test]
fn c12_ablation_sweep_shape_and_identity_row() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tmp.path());

    // Eight-value low-band sweep: well-formed CSV with the fixed header.
    run_ok(
        &p.dir,
        &[
            "ablate", "--data", "d.fepd", "--model", "m.fepm", "--rl-grid", "0.1:0.8:0.1",
            "--rh", "0", "--iterations", "40", "--out", "sweep.csv",
        ],
    );
    let text = String::from_utf8(read(&p.dir, "sweep.csv")).unwrap();
    let lines: Vec<&str> = text.trim_end().lines().collect();
    assert_eq!(lines[0], "rl,rh,stc,dc,acc,tv");
    assert_eq!(lines.len(), 9, "header plus eight rows");
    let expected_rl = ["0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8"];
    for (line, rl) in lines[1..].iter().zip(expected_rl) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], rl);
        assert_eq!(fields[1], "0");
        for v in &fields[2..] {
            v.parse::<f64>().unwrap_or_else(|_| panic!("bad number {:?}", v));
        }
    }

    // The identity-band cell must match a plain-method evaluation row
    // exactly, field for field.
    run_ok(
        &p.dir,
        &[
            "ablate", "--data", "d.fepd", "--model", "m.fepm", "--rl-grid", "1.0",
            "--rh", "0", "--iterations", "40", "--out", "identity.csv",
        ],
    );
    run_ok(
        &p.dir,
        &[
            "explain", "--data", "d.fepd", "--model", "m.fepm", "--clip-index", "all",
            "--method", "ep", "--iterations", "40", "--out-dir", "runs/plain",
        ],
    );
    run_ok(
        &p.dir,
        &[
            "evaluate", "--data", "d.fepd", "--model", "m.fepm", "--masks", "runs/plain",
            "--out", "plain.json",
        ],
    );
    let identity = String::from_utf8(read(&p.dir, "identity.csv")).unwrap();
    let row: Vec<&str> = identity.trim_end().lines().nth(1).unwrap().split(',').collect();
    let report: serde_json::Value =
        serde_json::from_slice(&read(&p.dir, "plain.json")).unwrap();
    let metrics = &report["metrics"];
    assert_eq!(row[0], "1");
    assert_eq!(row[1], "0");
    assert_eq!(row[2].parse::<f64>().unwrap(), metrics["stc"].as_f64().unwrap());
    assert_eq!(row[3].parse::<f64>().unwrap(), metrics["dc"].as_f64().unwrap());
    assert_eq!(row[4].parse::<f64>().unwrap(), metrics["acc"].as_f64().unwrap());

    println!(
        "ACCEPTANCE 12 PASS: eight-row sweep is well-formed and the (1, 0) cell equals the plain run exactly"
    );
}

#[test]
fn usage_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tmp.path());

    let out = run(&p.dir, &["generate", "--n", "0", "--out", "zero.fepd"]);
    assert_eq!(out.status.code(), Some(2), "zero-clip generate");

    let out = run(
        &p.dir,
        &[
            "explain", "--data", "d.fepd", "--model", "m.fepm", "--method", "fep",
            "--rl", "0.6", "--rh", "0.6", "--out-dir", "runs/bad",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "over-committed band ratios");
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_l + r_h"));

    let out = run(
        &p.dir,
        &[
            "explain", "--data", "missing.fepd", "--model", "m.fepm", "--out-dir", "runs/x",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "missing dataset file");

    let out = run(
        &p.dir,
        &["ablate", "--data", "d.fepd", "--model", "m.fepm", "--out", "t.csv"],
    );
    assert_eq!(out.status.code(), Some(2), "missing grid");

    // Masks directory with too few masks.
    std::fs::create_dir_all(p.dir.join("runs/partial")).unwrap();
    run_ok(
        &p.dir,
        &[
            "explain", "--data", "d.fepd", "--model", "m.fepm", "--clip-index", "0",
            "--method", "ep", "--iterations", "5", "--out-dir", "runs/partial",
        ],
    );
    let out = run(
        &p.dir,
        &[
            "evaluate", "--data", "d.fepd", "--model", "m.fepm", "--masks", "runs/partial",
            "--out", "p.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "mask count mismatch");
}

#[test]
fn boxes_used_as_masks_score_perfect_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tmp.path());
    let dataset = fep_core::data::load_dataset(p.dir.join("d.fepd")).unwrap();
    std::fs::create_dir_all(p.dir.join("boxmasks")).unwrap();
    for (i, lc) in dataset.iter().enumerate() {
        fep_core::io::save_tensor(p.dir.join(format!("boxmasks/mask_{:04}.fept", i)), &lc.boxes)
            .unwrap();
    }
    run_ok(
        &p.dir,
        &[
            "evaluate", "--data", "d.fepd", "--model", "m.fepm", "--masks", "boxmasks",
            "--out", "boxes.json",
        ],
    );
    let report: serde_json::Value = serde_json::from_slice(&read(&p.dir, "boxes.json")).unwrap();
    assert_eq!(report["metrics"]["stc"].as_f64().unwrap(), 100.0);
}

#[test]
fn numerical_abort_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tmp.path());
    // A model with overflow-scale weights: logits go infinite on the first
    // step and the run must abort, naming the iteration, with exit 3.
    let shape = [8usize, 1, 16, 16];
    let huge = fep_core::Tensor::<f64>::filled(&shape, 1e308).unwrap();
    let other = fep_core::Tensor::<f64>::filled(&shape, -1e308).unwrap();
    let model = fep_core::model::TemplateModel::new(
        vec![huge, other, fep_core::Tensor::zeros(&shape), fep_core::Tensor::zeros(&shape)],
        vec![0.0; 4],
        1e-30,
    )
    .unwrap();
    fep_core::io::save_model(p.dir.join("huge.fepm"), &fep_core::model::AnyModel::Template(model))
        .unwrap();
    let out = run(
        &p.dir,
        &[
            "explain", "--data", "d.fepd", "--model", "huge.fepm", "--clip-index", "0",
            "--method", "ep", "--iterations", "5", "--out-dir", "runs/abort",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("iteration"), "stderr: {}", stderr);
}

#[test]
fn identity_band_mask_matches_plain_method_closely() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tmp.path());
    run_ok(
        &p.dir,
        &[
            "explain", "--data", "d.fepd", "--model", "m.fepm", "--clip-index", "0",
            "--method", "fep", "--rl", "1", "--rh", "0", "--iterations", "50",
            "--out-dir", "runs/full-band",
        ],
    );
    run_ok(
        &p.dir,
        &[
            "explain", "--data", "d.fepd", "--model", "m.fepm", "--clip-index", "0",
            "--method", "ep", "--iterations", "50", "--out-dir", "runs/plain",
        ],
    );
    let a = fep_core::io::load_tensor(p.dir.join("runs/full-band/mask_0000.fept")).unwrap();
    let b = fep_core::io::load_tensor(p.dir.join("runs/plain/mask_0000.fept")).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-9);
}

#[test]
fn dct_subcommand_round_trips_and_rejects_bad_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let t = fep_core::Tensor::<f64>::from_fn(&[3, 4, 5], |idx| {
        (idx[0] as f64) - 0.3 * (idx[1] as f64) + 0.1 * (idx[2] as f64)
    })
    .unwrap();
    fep_core::io::save_tensor(dir.join("x.fept"), &t).unwrap();
    run_ok(dir, &["dct", "--input", "x.fept", "--out", "f.fept"]);
    run_ok(dir, &["dct", "--input", "f.fept", "--out", "b.fept", "--inverse"]);
    let back = fep_core::io::load_tensor(dir.join("b.fept")).unwrap();
    assert!(t.max_abs_diff(&back) < 1e-10);

    // Constant input concentrates at the origin coefficient.
    let c = fep_core::Tensor::<f64>::filled(&[2, 3, 4], 1.5).unwrap();
    fep_core::io::save_tensor(dir.join("c.fept"), &c).unwrap();
    run_ok(dir, &["dct", "--input", "c.fept", "--out", "cf.fept"]);
    let freq = fep_core::io::load_tensor(dir.join("cf.fept")).unwrap();
    for (i, &v) in freq.data().iter().enumerate() {
        if i == 0 {
            assert!((v - 1.5 * (24f64).sqrt()).abs() < 1e-12);
        } else {
            assert!(v.abs() < 1e-12);
        }
    }

    let bad = fep_core::Tensor::<f64>::zeros(&[2, 2]);
    fep_core::io::save_tensor(dir.join("bad.fept"), &bad).unwrap();
    let out = run(dir, &["dct", "--input", "bad.fept", "--out", "nope.fept"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_fills_gaps_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("base.json"),
        r#"{ "n": 3, "seed": 5, "noise_sigma": 0.0 }"#,
    )
    .unwrap();
    // Flag --n 4 overrides the file's 3; seed comes from the file.
    run_ok(
        dir,
        &[
            "generate", "--config", "base.json", "--n", "4", "--out", "d.fepd",
        ],
    );
    run_ok(dir, &["generate", "--n", "4", "--seed", "5", "--out", "ref.fepd"]);
    assert_eq!(read(dir, "d.fepd"), read(dir, "ref.fepd"));

    let out = run(dir, &["generate", "--config", "missing.json", "--out", "x.fepd"]);
    assert_eq!(out.status.code(), Some(2));
}
