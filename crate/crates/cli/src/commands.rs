use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use stpf_core::forecast::{
    diff_map, diff_pgm, metric_series, predict_training_frames, rollout, MetricConfig,
};
use stpf_core::layers::{Network, NetworkSpec};
use stpf_core::pipeline::{
    default_train_frames, load_framestack, make_samples, save_framestack, split, FrameStack,
    NormalizationSpec, Property, Scheme,
};
use stpf_core::synth::{generate, SynthConfig};
use stpf_core::train::{train_with, Checkpoint};
use stpf_core::{Error, Result};

use crate::config::{read_json, EvaluateArgs, Mode, PredictArgs, RunConfig, SynthArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn load_stack(path: &Path, expect: Option<Property>) -> Result<FrameStack> {
    if !path.exists() {
        return Err(Error::Usage(format!("{} does not exist", path.display())));
    }
    let fs = load_framestack(path)?;
    match expect {
        Some(p) if fs.property() != p => Err(Error::Usage(format!(
            "{} holds {}, expected {p}",
            path.display(),
            fs.property()
        ))),
        _ => Ok(fs),
    }
}

fn sha256_hex(path: &Path) -> Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("writing to a String");
        s
    }))
}

/// Preset values overlaid with the fields present in the JSON file.
fn synth_config(args: &SynthArgs) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::preset(&args.preset)?;
    if let Some(path) = &args.config {
        let overlay: serde_json::Value = read_json(path)?;
        let serde_json::Value::Object(fields) = overlay else {
            return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
        };
        let mut base = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in fields {
            base[k] = v;
        }
        cfg = serde_json::from_value(base)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.frames {
        cfg.frames = n;
    }
    Ok(cfg)
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let cfg = synth_config(&args)?;
    let data = generate(&cfg)?;
    create_dir(&args.out)?;
    for p in Property::ALL {
        let fs = data.get(p);
        let path = args.out.join(format!("{}.frms", p.name()));
        save_framestack(fs, &path)?;
        println!(
            "{}  {}x{}x{}  active {}  sha256 {}",
            path.display(),
            fs.frame_count(),
            fs.rows(),
            fs.cols(),
            fs.active_count(),
            sha256_hex(&path)?
        );
    }
    Ok(())
}

fn print_param_table(net: &Network<f32>) {
    let pc = net.param_count();
    println!("{:<28}{:>10}", "Layer", "Params");
    for (name, n) in pc.table() {
        println!("{name:<28}{n:>10}");
    }
    println!("{:<28}{:>10}", "Trainable", pc.trainable);
    println!("{:<28}{:>10}", "Non-trainable", pc.total - pc.trainable);
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = args.batch {
        cfg.train.batch = b;
    }
    if let Some(lr) = args.lr {
        cfg.train.lr = lr;
    }
    if let Some(w) = args.window {
        cfg.window = w;
    }
    if let Some(c) = args.cell {
        cfg.cell = c.into();
    }
    cfg.validate()?;
    for p in cfg.properties()? {
        train_property(&cfg, p)?;
    }
    Ok(())
}

fn train_property(cfg: &RunConfig, p: Property) -> Result<()> {
    let fs = load_stack(&cfg.data_file(p), Some(p))?;
    let n = cfg
        .train_frames
        .unwrap_or_else(|| default_train_frames(fs.frame_count()));
    let (train, _) = split(&fs, n)?;
    let norm = NormalizationSpec::fit(&train)?;
    let data = norm.apply(&train)?;
    let samples = make_samples(&data, cfg.window, Scheme::Overlapping)?;
    if samples.is_empty() {
        return Err(Error::Usage(format!(
            "{n} training frames give no samples for window {}",
            cfg.window
        )));
    }
    let mut net = Network::<f32>::init(NetworkSpec::reference(cfg.cell), cfg.train.seed)?;
    println!("{p}: {} training frames, {} samples", n, samples.len());
    print_param_table(&net);

    let history = train_with(&mut net, &data, &samples, &cfg.train, |e, loss| {
        eprintln!("{p} epoch {:>3}  loss {loss:.6e}", e + 1);
    })
    .map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("{p}: {msg}")),
        other => other,
    })?;

    let dir = cfg.property_dir(p);
    create_dir(&dir)?;
    let ckpt = Checkpoint {
        network: net,
        normalization: norm,
        rows: fs.rows(),
        cols: fs.cols(),
        mask: fs.mask().to_vec(),
        window: cfg.window,
        train_frames: n,
        seed: cfg.train.seed,
        loss_history: history.clone(),
    };
    ckpt.save(dir.join("model.stpf"))?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(csv, "{},{l}", i + 1).expect("writing to a String");
    }
    fs::write(dir.join("loss.csv"), csv)?;
    println!("{p}: wrote {}", dir.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if args.horizon.is_some() {
        cfg.horizon = args.horizon;
    }
    if let Some(c) = args.checkpoint {
        cfg.checkpoint = Some(c);
    }
    let jobs: Vec<(Option<Property>, PathBuf)> = match &cfg.checkpoint {
        Some(_) if cfg.all => {
            return Err(Error::Usage("--checkpoint names one model; drop --all".into()))
        }
        Some(c) => vec![(cfg.property, c.clone())],
        None => cfg
            .properties()?
            .into_iter()
            .map(|p| (Some(p), cfg.property_dir(p).join("model.stpf")))
            .collect(),
    };
    for (p, path) in jobs {
        predict_one(&cfg, p, &path)?;
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Usage(format!("{} does not exist", path.display())));
    }
    Checkpoint::load(path)
}

fn predict_one(cfg: &RunConfig, expect: Option<Property>, path: &Path) -> Result<()> {
    let ckpt = load_checkpoint(path)?;
    let p = ckpt.property();
    if let Some(e) = expect {
        if e != p {
            return Err(Error::Usage(format!(
                "checkpoint {} was trained on {p}, not {e}",
                path.display()
            )));
        }
    }
    let fs = load_stack(&cfg.data_file(p), Some(p))?;
    if (fs.rows(), fs.cols()) != (ckpt.rows, ckpt.cols) || fs.mask() != ckpt.mask.as_slice() {
        return Err(Error::Usage(format!(
            "{} does not match the checkpoint grid or mask",
            cfg.data_file(p).display()
        )));
    }
    let n = ckpt.train_frames;
    let (train, test) = split(&fs, n)?;
    let norm = ckpt.normalization;
    let scaled = norm.apply(&train)?;
    let l = ckpt.window;

    let (pred, truth) = match cfg.mode {
        Mode::TrainFrames => {
            let pred = predict_training_frames(&ckpt.network, &scaled, l)?;
            (pred, Some(train.slice(l..n)?))
        }
        Mode::Rollout => {
            let horizon = cfg.horizon.unwrap_or(test.frame_count());
            let pred = rollout(&ckpt.network, &scaled.slice(n - l..n)?, horizon)?;
            let truth = (horizon <= test.frame_count())
                .then(|| test.slice(0..horizon))
                .transpose()?;
            if truth.is_none() {
                eprintln!(
                    "{p}: horizon {horizon} runs past the {} test frames; no truth file written",
                    test.frame_count()
                );
            }
            (pred, truth)
        }
    };
    if let Some(k) = pred.active_values().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{p}: non-finite prediction at value {k}")));
    }
    let pred = norm.invert(&pred)?;

    let dir = cfg.property_dir(p);
    create_dir(&dir)?;
    let tag = cfg.mode.tag();
    let pred_path = dir.join(format!("pred_{tag}.frms"));
    save_framestack(&pred, &pred_path)?;
    println!("{p}: {} predicted frames -> {}", pred.frame_count(), pred_path.display());
    if let Some(truth) = truth {
        let truth_path = dir.join(format!("truth_{tag}.frms"));
        save_framestack(&truth, &truth_path)?;
        println!("{p}: aligned truth -> {}", truth_path.display());
    }
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(r) = args.region {
        cfg.metrics.region = r.into();
    }
    if args.c1.is_some() {
        cfg.metrics.c1 = args.c1;
    }
    if args.c2.is_some() {
        cfg.metrics.c2 = args.c2;
    }
    cfg.validate()?;
    if let (Some(pred), Some(truth)) = (&args.pred, &args.truth) {
        if cfg.all {
            return Err(Error::Usage("--pred/--truth name one pair; drop --all".into()));
        }
        return evaluate_pair(&cfg, &cfg.metrics, pred, truth, &cfg.out, cfg.property);
    }
    for p in cfg.properties()? {
        let dir = cfg.property_dir(p);
        let tag = cfg.mode.tag();
        let mut metrics = cfg.metrics.clone();
        let ckpt_path = dir.join("model.stpf");
        if ckpt_path.exists() {
            let ckpt = Checkpoint::load(&ckpt_path)?;
            metrics.first_frame = match cfg.mode {
                Mode::TrainFrames => ckpt.window,
                Mode::Rollout => ckpt.train_frames,
            };
        }
        evaluate_pair(
            &cfg,
            &metrics,
            &dir.join(format!("pred_{tag}.frms")),
            &dir.join(format!("truth_{tag}.frms")),
            &dir.join(format!("eval_{tag}")),
            Some(p),
        )?;
    }
    Ok(())
}

fn evaluate_pair(
    cfg: &RunConfig,
    metrics: &MetricConfig,
    pred_path: &Path,
    truth_path: &Path,
    out: &Path,
    expect: Option<Property>,
) -> Result<()> {
    let pred = load_stack(pred_path, expect)?;
    let truth = load_stack(truth_path, expect)?;
    let series = metric_series(&pred, &truth, metrics)?;
    create_dir(out)?;
    fs::write(out.join("metrics.csv"), series.to_csv())?;

    let mask = truth.mask();
    let diffs = pred
        .iter_frames()
        .zip(truth.iter_frames())
        .map(|(a, b)| diff_map(a, b, mask))
        .collect::<Result<Vec<_>>>()?;
    let scale = diffs
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |m, &d| m.max((d as f64).abs()));
    let mut raw = Vec::with_capacity(pred.frames().len());
    for (d, rec) in diffs.iter().zip(&series.records) {
        fs::write(
            out.join(format!("diff_{:04}.pgm", rec.frame)),
            diff_pgm(d, truth.rows(), truth.cols(), scale)?,
        )?;
        raw.extend(d.iter().map(|v| v.unwrap_or(0.0)));
    }
    save_framestack(&truth.with_frames(raw)?, out.join("diff.frms"))?;

    let s = series.summary(cfg.head);
    let mut text = String::new();
    let w = &mut text;
    writeln!(w, "property {}", truth.property()).ok();
    writeln!(w, "frames {}", s.frames).ok();
    writeln!(w, "truth range {} to {}", series.range.0, series.range.1).ok();
    writeln!(w, "ssim c1 {} c2 {} region {:?}", series.ssim.c1, series.ssim.c2, series.ssim.region).ok();
    writeln!(w, "first {} frames: mean ssim {:.6}, mean nrmse {:.4}%", s.head, s.head_ssim, s.head_nrmse_pct).ok();
    writeln!(w, "all {} frames: mean ssim {:.6}, mean nrmse {:.4}%", s.frames, s.mean_ssim, s.mean_nrmse_pct).ok();
    writeln!(w, "difference map scale: gray 128 = 0, 255 = +{scale}, 1 = -{scale}, 0 = inactive").ok();
    fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}
