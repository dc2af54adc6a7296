//! `panoda`: synthetic data, training, adaptation, self-supervision,
//! evaluation, benchmarking and visual exports from one config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panoda_core::datapipe::{class_pixel_histogram, load_manifest, write_synthetic_dataset, ClassMap, Layout, NUM_CLASSES};
use panoda_core::evalkit::{
    evaluate_records, export_heatmap, export_visuals, fps_benchmark, format_iou_table, predict_labels, IouReport,
};
use panoda_core::segnet::{images_to_array, load_segnet, SegNet};
use panoda_core::trainer::{
    apply_overrides, config_from_table, generate_pseudo_labels, initial_state, load_train_state, parse_table, prepare_data,
    run_experiment, run_ssl_from, ExperimentConfig, TrainState,
};
use panoda_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "panoda", version, about = "Pinhole-to-panoramic domain adaptation for semantic segmentation")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config; the desk preset is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed.value` (and the synthetic scene seed for synth-gen).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to `$PANODA_OUT/<verb>-<run id>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `dotted.key=value`, applied in order after the file; last wins.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Compute device; only `cpu` exists.
    #[arg(long, global = true, default_value = "cpu")]
    device: String,
    /// One worker thread, for bitwise reproducible runs.
    #[arg(long, global = true)]
    single_thread: bool,
    /// Network or training-state archive.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, env = "PANODA_OUT", default_value = "runs", global = true, hide = true)]
    out_root: PathBuf,
}

#[derive(Subcommand, Debug, Clone)]
enum Verb {
    /// Render the synthetic pinhole/panorama benchmark.
    SynthGen,
    /// Supervised source-only training.
    Train,
    /// Stage-1 adversarial adaptation with the configured modules.
    Adapt,
    /// Self-supervised runs from a stage-1 checkpoint.
    Ssl,
    /// Score a checkpoint on the test split.
    Eval,
    /// Inference speed at the target resolution.
    Bench {
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 1)]
        batch: usize,
    },
    /// Prediction, uncertainty and attention images for test panoramas.
    Viz {
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Module-set sweep with and without self-supervision.
    Ablate,
}

impl Verb {
    fn name(&self) -> &'static str {
        match self {
            Verb::SynthGen => "synth-gen",
            Verb::Train => "train",
            Verb::Adapt => "adapt",
            Verb::Ssl => "ssl",
            Verb::Eval => "eval",
            Verb::Bench { .. } => "bench",
            Verb::Viz { .. } => "viz",
            Verb::Ablate => "ablate",
        }
    }
}

fn resolve_config(c: &Common, verb: &Verb) -> Result<ExperimentConfig> {
    if !c.device.eq_ignore_ascii_case("cpu") {
        return Err(Error::Config(vec![format!("device {:?} is not available; use cpu", c.device)]));
    }
    let mut table = match &c.config {
        Some(p) => parse_table(&fs::read_to_string(p).map_err(|e| Error::Config(vec![format!("{}: {e}", p.display())]))?)?,
        None => parse_table(&ExperimentConfig::desk().to_toml())?,
    };
    let mut overrides = c.overrides.clone();
    if let Some(seed) = c.seed {
        let explicit = overrides.iter().filter_map(|o| o.split_once('=')).find(|(k, _)| k.trim() == "seed.value");
        if let Some((_, v)) = explicit {
            if v.trim() != seed.to_string() {
                return Err(Error::Config(vec![format!("--seed {seed} conflicts with --set seed.value={}", v.trim())]));
            }
        }
        overrides.push(format!("seed.value={seed}"));
        if matches!(verb, Verb::SynthGen) {
            overrides.push(format!("synth.scene.seed={seed}"));
        }
    }
    for o in &overrides {
        eprintln!("override {o}");
    }
    apply_overrides(&mut table, &overrides)?;
    let mut cfg = config_from_table(table)?;
    if matches!(verb, Verb::Train) {
        cfg.modules.list.clear();
        cfg.ssl.enabled = false;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, verb: &Verb, cfg: &ExperimentConfig) -> PathBuf {
    c.out
        .clone()
        .unwrap_or_else(|| c.out_root.join(format!("{}-{}", verb.name(), cfg.run_id())))
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io("write", path, e))
}

fn snapshot(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io("create output directory", out, e))?;
    write(&out.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    write(&out.join("run_id"), format!("{}\n", cfg.run_id()).as_bytes())
}

/// A training-state archive, or a bare network archive wrapped in a fresh state.
fn load_state(path: &Path, cfg: &ExperimentConfig) -> Result<TrainState> {
    match load_train_state(path) {
        Ok(s) => Ok(s),
        Err(Error::Checkpoint(_)) => {
            let mut s = initial_state(cfg)?;
            s.net = load_segnet(path)?;
            Ok(s)
        }
        Err(e) => Err(e),
    }
}

fn load_net(c: &Common, cfg: &ExperimentConfig) -> Result<SegNet> {
    match &c.checkpoint {
        Some(p) => Ok(load_state(p, cfg)?.net),
        None => Ok(initial_state(cfg)?.net),
    }
}

fn require_checkpoint(c: &Common) -> Result<&Path> {
    c.checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config(vec!["this verb needs --checkpoint".into()]))
}

fn synth_gen(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let root = out.join("data");
    write_synthetic_dataset(&cfg.synth.scene, &cfg.synth.counts, &root)?;
    let map = ClassMap::default();
    let src = class_pixel_histogram(&load_manifest(&root.join("source"), "train", Layout::Synthetic)?, &map)?;
    let tgt = class_pixel_histogram(&load_manifest(&root.join("target"), "train", Layout::Synthetic)?, &map)?;
    let mut text = format!("{:<14}{:>14}{:>14}\n", "class", "pinhole px", "panorama px");
    for c in 0..NUM_CLASSES {
        text.push_str(&format!("{:<14}{:>14.1}{:>14.1}\n", ClassMap::name(c as u8).unwrap(), src[c], tgt[c]));
    }
    write(&out.join("class_histogram.txt"), text.as_bytes())?;
    print!("{text}");
    println!("dataset written to {}", root.display());
    Ok(())
}

fn eval(c: &Common, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let net = load_state(require_checkpoint(c)?, cfg)?.net;
    let data = prepare_data(cfg)?;
    let e = evaluate_records(
        &net,
        &data.target_test,
        cfg.eval.head,
        cfg.modules.region_interaction,
        cfg.eval.batch_size,
        Some(cfg.eval.sectors),
    )?;
    let mut text = format_iou_table(&[("checkpoint".to_string(), e.report.clone())]);
    if let Some(d) = &e.directional {
        text.push('\n');
        text.push_str(&d.format_table(&cfg.eval.classes));
    }
    write(&out.join("eval.json"), &serde_json::to_vec_pretty(&e)?)?;
    write(&out.join("eval.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn bench(c: &Common, cfg: &ExperimentConfig, out: &Path, frames: usize, warmup: usize, batch: usize) -> Result<()> {
    let net = load_net(c, cfg)?;
    let [h, w] = cfg.data.target_size;
    let full = fps_benchmark(&net, h, w, frames, warmup, batch)?;
    let half = fps_benchmark(&net, (h / 2).max(16) / 16 * 16, (w / 2).max(16) / 16 * 16, frames, warmup, batch)?;
    let text = format!(
        "{}x{} batch {}: {:.2} FPS\n{}x{} batch {}: {:.2} FPS\nhardware: {}\n",
        full.height, full.width, full.batch, full.fps, half.height, half.width, half.batch, half.fps, full.hardware
    );
    write(&out.join("bench.json"), &serde_json::to_vec_pretty(&[full, half])?)?;
    print!("{text}");
    Ok(())
}

fn viz(c: &Common, cfg: &ExperimentConfig, out: &Path, count: usize) -> Result<()> {
    let net = load_net(c, cfg)?;
    let data = prepare_data(cfg)?;
    let records = &data.target_test[..count.min(data.target_test.len())];
    let preds = predict_labels(&net, records, cfg.eval.head, cfg.modules.region_interaction, 1)?;
    let p = net.store.bind(false);
    for (rec, pred) in records.iter().zip(&preds) {
        let images = images_to_array(&[&rec.image])?;
        let o = net.forward(&p, &panoda_core::tensor::Var::constant(images))?;
        let (_, k, h, w) = o.heads.c1.value().dims4();
        let item = |a: &panoda_core::tensor::Array| a.clone().reshape(&[k, h, w]);
        let (_, u) = generate_pseudo_labels(&item(o.heads.c1.value()), &item(o.heads.c2.value()))?;
        let dir = out.join("visuals");
        export_visuals(pred, rec.label.as_ref(), Some(&u), &dir, &rec.id)?;
        rec.image.write_png(&dir.join(format!("{}_image.png", rec.id)))?;
        let pa = &o.dual.position_map;
        let (qy, qx) = (pa.height / 2, pa.width / 2);
        let map = panoda_core::attention::query_attention_map(pa, 0, qy, qx)?;
        export_heatmap(
            map.data(),
            pa.height,
            pa.width,
            "position_attention",
            Some((qy, qx)),
            &dir.join(format!("{}_attention.png", rec.id)),
        )?;
    }
    println!("{} panoramas exported to {}", records.len(), out.join("visuals").display());
    Ok(())
}

const ABLATION_SETS: [&[&str]; 4] = [&["S:os"], &["S:os", "A:os"], &["S:os", "A:os", "R:os"], &["S:os", "A:os", "F:fs", "R:os"]];

fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut rows: Vec<(String, IouReport)> = Vec::new();
    for set in ABLATION_SETS {
        let mut c = cfg.clone();
        c.modules.list = set.iter().map(|s| s.to_string()).collect();
        c.ssl.enabled = true;
        let name: Vec<&str> = set.iter().map(|s| &s[..1]).collect();
        let name = name.join("+");
        let report = run_experiment(&c, &out.join(format!("ablate-{}", name.replace('+', ""))))?;
        rows.push((name.clone(), report.stage1.test.report.clone()));
        if let Some(r) = report.ssl.last() {
            rows.push((format!("{name} +SSL"), r.test.report.clone()));
        }
    }
    let text = format_iou_table(&rows);
    write(&out.join("ablation.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<PathBuf> {
    let c = &cli.common;
    let cfg = resolve_config(c, &cli.verb)?;
    let out = out_dir(c, &cli.verb, &cfg);
    snapshot(&out, &cfg)?;
    eprintln!("run {} -> {}", cfg.run_id(), out.display());
    let run = || -> Result<()> {
        match &cli.verb {
            Verb::SynthGen => synth_gen(&cfg, &out),
            Verb::Train | Verb::Adapt => {
                let r = run_experiment(&cfg, &out)?;
                print!("{}", r.to_text(&cfg.eval.classes));
                Ok(())
            }
            Verb::Ssl => {
                let state = load_state(require_checkpoint(c)?, &cfg)?;
                let r = run_ssl_from(&cfg, state, &out)?;
                print!("{}", r.to_text(&cfg.eval.classes));
                Ok(())
            }
            Verb::Eval => eval(c, &cfg, &out),
            Verb::Bench { frames, warmup, batch } => bench(c, &cfg, &out, *frames, *warmup, *batch),
            Verb::Viz { count } => viz(c, &cfg, &out, *count),
            Verb::Ablate => ablate(&cfg, &out),
        }
    };
    run().map_err(|e| {
        let path = out.join("error.txt");
        let _ = fs::write(&path, format!("{e}\n\n{e:?}\n"));
        eprintln!("diagnostics written to {}", path.display());
        e
    })?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.common.single_thread {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(1).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
