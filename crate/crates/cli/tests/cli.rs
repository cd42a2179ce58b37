use std::path::Path;
use std::process::{Command, Output};

use stpf_core::pipeline::{load_framestack, save_framestack, FrameStack, Property};

fn stpf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stpf"))
        .args(args)
        .current_dir(dir)
        .env("STPF_THREADS", "1")
        .output()
        .expect("running stpf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Short synthetic series so that training takes well under a second.
fn synth(dir: &Path) {
    let o = stpf(dir, &["synth", "--frames", "24", "--out", "data"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn train_pressure(dir: &Path) {
    let o = stpf(
        dir,
        &["train", "--property", "pressure", "--epochs", "1", "--window", "3", "--train-frames", "18"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |d: &Path| stdout(&stpf(d, &["synth", "--frames", "30", "--seed", "7"]));
    let (sa, sb) = (run(a.path()), run(b.path()));
    assert_eq!(sa.lines().count(), 4);
    assert_eq!(sa, sb);
    for p in ["pressure", "oil_sat", "gas_sat", "water_sat"] {
        let fs = load_framestack(a.path().join("data").join(format!("{p}.frms"))).unwrap();
        assert_eq!((fs.frame_count(), fs.rows(), fs.cols()), (30, 16, 8));
        assert!(sa.contains(&format!("{p}.frms")));
    }
    let other = stdout(&stpf(b.path(), &["synth", "--frames", "30", "--seed", "8"]));
    assert_ne!(sa, other);
}

#[test]
fn train_writes_checkpoint_and_loss_log() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let o = stpf(
        d.path(),
        &["train", "--property", "pressure", "--epochs", "2", "--window", "3", "--train-frames", "18"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("17773"), "{out}");
    assert!(out.contains("Trainable") && out.contains("17723"), "{out}");
    let run = d.path().join("runs/pressure");
    assert!(run.join("model.stpf").exists());
    let loss = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    assert_eq!(lines[0], "epoch,loss");
    assert_eq!(lines.len(), 3);
}

#[test]
fn predict_modes_and_horizons() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    train_pressure(d.path());
    let run = d.path().join("runs/pressure");

    let o = stpf(d.path(), &["predict", "--property", "pressure", "--mode", "rollout", "--horizon", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pred = load_framestack(run.join("pred_rollout.frms")).unwrap();
    let truth = load_framestack(run.join("truth_rollout.frms")).unwrap();
    assert_eq!((pred.frame_count(), truth.frame_count()), (4, 4));
    assert!(pred.same_grid(&truth));

    let o = stpf(d.path(), &["predict", "--property", "pressure", "--mode", "rollout", "--horizon", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(load_framestack(run.join("pred_rollout.frms")).unwrap().frame_count(), 0);

    let o = stpf(d.path(), &["predict", "--property", "pressure", "--mode", "train-frames"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Training frames minus the first window.
    assert_eq!(load_framestack(run.join("pred_train.frms")).unwrap().frame_count(), 15);
    assert_eq!(load_framestack(run.join("truth_train.frms")).unwrap().frame_count(), 15);

    let o = stpf(d.path(), &["evaluate", "--property", "pressure", "--mode", "train-frames"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = run.join("eval_train");
    let csv = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert!(eval.join("summary.txt").exists() && eval.join("diff.frms").exists());

    let o = stpf(
        d.path(),
        &["predict", "--property", "oil_sat", "--checkpoint", "runs/pressure/model.stpf"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluating_a_stack_against_itself_is_perfect() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let o = stpf(
        d.path(),
        &["evaluate", "--pred", "data/water_sat.frms", "--truth", "data/water_sat.frms", "--out", "eval"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("eval/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame,mse,rmse,nrmse_pct,ssim"));
    let mut rows = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[1..4], [0.0, 0.0, 0.0]);
        assert!((f[4] - 1.0).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 24);
    assert!(d.path().join("eval/diff_0000.pgm").exists());
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&stpf(d.path(), &["train", "--property", "pressure"])), 2);
    assert_eq!(code(&stpf(d.path(), &["train", "--no-such-flag"])), 2);
    assert_eq!(code(&stpf(d.path(), &["predict", "--mode", "sideways"])), 2);
    assert_eq!(code(&stpf(d.path(), &["predict", "--horizon", "-3"])), 2);
    synth(d.path());
    assert_eq!(code(&stpf(d.path(), &["train", "--property", "pressure", "--all"])), 2);
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_stpf"))
        .args(["synth", "--frames", "5"])
        .current_dir(d.path())
        .env("STPF_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), 2);
}

#[test]
fn nan_data_aborts_training_with_exit_3() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path());
    let path = d.path().join("data/oil_sat.frms");
    let fs = load_framestack(&path).unwrap();
    let mut frames = fs.frames().to_vec();
    let k = fs.mask().iter().position(|&m| m).unwrap();
    frames[3 * fs.cells() + k] = f32::NAN;
    let bad = FrameStack::new(Property::OilSat, fs.rows(), fs.cols(), fs.mask().to_vec(), frames).unwrap();
    save_framestack(&bad, &path).unwrap();
    let o = stpf(
        d.path(),
        &["train", "--property", "oil_sat", "--epochs", "1", "--window", "3", "--train-frames", "18"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("NaN"), "{err}");
}

#[test]
fn help_lists_commands_and_flags() {
    let d = tempfile::tempdir().unwrap();
    let top = stdout(&stpf(d.path(), &["--help"]));
    for cmd in ["synth", "train", "predict", "evaluate"] {
        assert!(top.contains(cmd), "{top}");
    }
    let train = stdout(&stpf(d.path(), &["train", "--help"]));
    for flag in ["--property", "--all", "--epochs", "--seed", "--cell", "--config"] {
        assert!(train.contains(flag), "{train}");
    }
}
