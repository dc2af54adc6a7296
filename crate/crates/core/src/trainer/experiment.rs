use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SslInit};
use super::pseudo::pseudo_label_records;
use super::state::save_train_state;
use super::step::{ssl_step, train_step, Batch, LrSchedule, StepConfig, StepMetrics, TrainState};
use crate::datapipe::{augment, load_manifest, load_sample, ClassCounts, ClassMap, Domain, SampleRecord, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate_records, format_iou_table, SplitEvaluation};
use crate::segnet::{SegNet, SegNetConfig};

/// All splits of one experiment, decoded and resized in memory.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub source_train: Vec<SampleRecord>,
    pub target_train: Vec<SampleRecord>,
    pub target_val: Option<Vec<SampleRecord>>,
    pub target_test: Vec<SampleRecord>,
    pub class_weights: Vec<f64>,
}

fn load_split(root: &Path, split: &str, layout: crate::datapipe::Layout, domain: Domain, size: [usize; 2]) -> Result<Vec<SampleRecord>> {
    let manifest = load_manifest(root, split, layout)?;
    let map = ClassMap::default();
    manifest
        .entries
        .par_iter()
        .map(|e| load_sample(e, domain, Some((size[0], size[1])), &map))
        .collect()
}

/// Loads every split, rendering the synthetic benchmark first when the
/// root is missing and generation is enabled.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Datasets> {
    let d = &cfg.data;
    if !d.root.exists() {
        if !d.generate_if_missing {
            return Err(Error::MissingPath(d.root.clone()));
        }
        crate::datapipe::write_synthetic_dataset(&cfg.synth.scene, &cfg.synth.counts, &d.root)?;
    }
    let src_root = d.root.join(&d.source_dir);
    let tgt_root = d.root.join(&d.target_dir);
    let source_train = load_split(&src_root, "train", d.source_layout, Domain::Source, d.source_size)?;
    if source_train.iter().any(|r| r.label.is_none()) {
        return Err(Error::Shape("source training split must be labelled".into()));
    }
    let mut target_train = load_split(&tgt_root, "train", d.target_layout, Domain::Target, d.target_size)?;
    for r in &mut target_train {
        r.label = None;
    }
    let target_val = match load_split(&tgt_root, &cfg.eval.val_split, d.target_layout, Domain::Target, d.target_size) {
        Ok(v) if v.iter().all(|r| r.label.is_some()) => Some(v),
        Ok(_) | Err(Error::EmptySplit { .. }) | Err(Error::MissingPath(_)) => None,
        Err(e) => return Err(e),
    };
    let target_test = load_split(&tgt_root, &cfg.eval.test_split, d.target_layout, Domain::Target, d.target_size)?;
    let class_weights = if d.class_weights {
        ClassCounts::from_labels(source_train.iter().filter_map(|r| r.label.as_ref()))
            .class_weights(d.class_weight_k)?
            .to_vec()
    } else {
        vec![1.0; NUM_CLASSES]
    };
    Ok(Datasets {
        source_train,
        target_train,
        target_val,
        target_test,
        class_weights,
    })
}

/// Reshuffles the index order at the start of every epoch.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    pub fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    pub fn next_batch<R: Rng>(&mut self, size: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos >= self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn draw_batch<R: Rng>(records: &[SampleRecord], sampler: &mut EpochSampler, size: usize, aug: bool, rng: &mut R) -> Result<Batch> {
    let picked: Vec<SampleRecord> = sampler
        .next_batch(size, rng)
        .into_iter()
        .map(|i| if aug { augment(&records[i], rng) } else { records[i].clone() })
        .collect();
    Batch::from_records(&picked)
}

#[derive(Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogRecord<'a> {
    Step(&'a StepMetrics),
    Eval {
        stage: u32,
        run: usize,
        iteration: usize,
        split: &'a str,
        miou: f64,
        pixel_acc: f64,
    },
    Pseudo {
        run: usize,
        images: usize,
        kept_fraction: f64,
    },
}

struct MetricsLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl MetricsLog {
    fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io("create metrics log", path, e))?;
        Ok(Self {
            out: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }

    fn write(&mut self, rec: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(rec)?;
        writeln!(self.out, "{line}").map_err(|e| Error::io("write metrics log", &self.path, e))?;
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io("flush metrics log", &self.path, e))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BestVal {
    pub iteration: usize,
    pub miou: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub iterations: usize,
    pub best_val: Option<BestVal>,
    pub test: SplitEvaluation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SslRunReport {
    pub run: usize,
    pub iterations: usize,
    pub kept_fraction: f64,
    pub skipped: u64,
    pub test: SplitEvaluation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub modules: Vec<String>,
    pub stage1: StageReport,
    pub ssl: Vec<SslRunReport>,
}

impl RunReport {
    /// Test mIoU (percent) after the last completed stage.
    pub fn final_miou(&self) -> f64 {
        self.ssl.last().map_or(&self.stage1.test, |r| &r.test).report.miou_percent()
    }

    pub fn to_text(&self, classes: &[u8]) -> String {
        let label = if self.modules.is_empty() { "source only".to_string() } else { self.modules.join("+") };
        let mut rows = vec![(label.clone(), self.stage1.test.report.clone())];
        for r in &self.ssl {
            rows.push((format!("{label} +SSL run {}", r.run), r.test.report.clone()));
        }
        let mut s = format!("run {}\n\n{}", self.run_id, format_iou_table(&rows));
        let last = self.ssl.last().map_or(&self.stage1.test, |r| &r.test);
        if let Some(d) = &last.directional {
            s.push('\n');
            s.push_str(&d.format_table(classes));
        }
        s
    }
}

fn net_config(cfg: &ExperimentConfig) -> SegNetConfig {
    SegNetConfig {
        seed: cfg.model.seed.wrapping_add(cfg.seed.value),
        ..cfg.model.clone()
    }
}

/// Fresh training state for a configuration and its datasets.
pub fn initial_state(cfg: &ExperimentConfig) -> Result<TrainState> {
    let modules = cfg.module_config()?;
    let [sh, sw] = cfg.data.source_size;
    let [th, tw] = cfg.data.target_size;
    Ok(TrainState::new(
        SegNet::new(net_config(cfg)),
        &modules,
        cfg.modules.ndf,
        (sh.min(th), sw.min(tw)),
        &cfg.optim,
        cfg.seed.value,
    ))
}

pub fn step_config(cfg: &ExperimentConfig, class_weights: &[f64]) -> Result<StepConfig> {
    Ok(StepConfig {
        modules: cfg.module_config()?,
        region_interaction: cfg.modules.region_interaction,
        base: cfg.modules.base,
        class_weights: class_weights.to_vec(),
    })
}

fn evaluate(cfg: &ExperimentConfig, net: &SegNet, records: &[SampleRecord], sectors: bool) -> Result<SplitEvaluation> {
    evaluate_records(
        net,
        records,
        cfg.eval.head,
        cfg.modules.region_interaction,
        cfg.eval.batch_size,
        sectors.then_some(cfg.eval.sectors),
    )
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io("write", path, e))
}

/// Stage 1, optional self-supervised runs, evaluation and reports. Writes
/// `config.resolved.toml`, `run_id`, `metrics.ndjson`, checkpoints and
/// `report.{json,txt}` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    run_with(cfg, out, None)
}

/// Self-supervised runs only, starting from a stage-1 state. The stage-1
/// section of the report scores `init` without further training. The
/// sampling stream is reseeded from the config seed.
pub fn run_ssl_from(cfg: &ExperimentConfig, mut init: TrainState, out: &Path) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.ssl.enabled = true;
    init.rng = ChaCha8Rng::seed_from_u64(cfg.seed.value);
    run_with(&cfg, out, Some(init))
}

fn run_with(cfg: &ExperimentConfig, out: &Path, init: Option<TrainState>) -> Result<RunReport> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    fs::create_dir_all(out).map_err(|e| Error::io("create output directory", out, e))?;
    let run_id = cfg.run_id();
    write_file(&out.join("config.resolved.toml"), cfg.to_toml().as_bytes())?;
    write_file(&out.join("run_id"), format!("{run_id}\n").as_bytes())?;
    let data = prepare_data(cfg)?;
    let mut log = MetricsLog::create(&out.join("metrics.ndjson"))?;
    let result = run_stages(cfg, &data, out, &mut log, run_id, init);
    log.flush()?;
    let report = result?;
    write_file(&out.join("report.json"), &serde_json::to_vec_pretty(&report)?)?;
    write_file(&out.join("report.txt"), report.to_text(&cfg.eval.classes).as_bytes())?;
    Ok(report)
}

fn run_stages(
    cfg: &ExperimentConfig,
    data: &Datasets,
    out: &Path,
    log: &mut MetricsLog,
    run_id: String,
    init: Option<TrainState>,
) -> Result<RunReport> {
    let step_cfg = step_config(cfg, &data.class_weights)?;
    let resumed = init.is_some();
    let mut state = match init {
        Some(s) => s,
        None => initial_state(cfg)?,
    };
    let bs = cfg.schedule.batch_size;
    let aug = cfg.data.augment;
    let mut src_sampler = EpochSampler::new(data.source_train.len());
    let mut tgt_sampler = EpochSampler::new(data.target_train.len());
    let sched = LrSchedule {
        g_lr: cfg.optim.g_lr,
        d_lr: cfg.optim.d_lr,
        max_iter: cfg.schedule.max_iter,
        power: cfg.optim.poly_power,
    };
    let mut best: Option<(BestVal, SegNet)> = None;
    let validate = |state: &TrainState, log: &mut MetricsLog, best: &mut Option<(BestVal, SegNet)>| -> Result<()> {
        let Some(val) = &data.target_val else { return Ok(()) };
        let e = evaluate(cfg, &state.net, val, false)?;
        log.write(&LogRecord::Eval {
            stage: state.stage,
            run: 0,
            iteration: state.iteration,
            split: &cfg.eval.val_split,
            miou: e.report.miou,
            pixel_acc: e.report.pixel_acc,
        })?;
        if best.as_ref().is_none_or(|(b, _)| e.report.miou > b.miou) {
            *best = Some((
                BestVal {
                    iteration: state.iteration,
                    miou: e.report.miou,
                },
                state.net.clone(),
            ));
        }
        Ok(())
    };
    let stage1_iters = if resumed { 0 } else { cfg.schedule.max_iter };
    for _ in 0..stage1_iters {
        let src = draw_batch(&data.source_train, &mut src_sampler, bs, aug, &mut state.rng)?;
        let tgt = draw_batch(&data.target_train, &mut tgt_sampler, bs, aug, &mut state.rng)?;
        let m = train_step(&mut state, &step_cfg, &src, &tgt, &sched)?;
        if m.iteration % cfg.schedule.log_every == 0 {
            log.write(&LogRecord::Step(&m))?;
        }
        if cfg.schedule.eval_every > 0 && state.iteration % cfg.schedule.eval_every == 0 && state.iteration < cfg.schedule.max_iter {
            validate(&state, log, &mut best)?;
        }
    }
    if !resumed {
        validate(&state, log, &mut best)?;
        save_train_state(&out.join("stage1_final.ckpt"), &state)?;
    }
    let test = evaluate(cfg, &state.net, &data.target_test, true)?;
    log.write(&LogRecord::Eval {
        stage: 1,
        run: 0,
        iteration: state.iteration,
        split: &cfg.eval.test_split,
        miou: test.report.miou,
        pixel_acc: test.report.pixel_acc,
    })?;
    let stage1 = StageReport {
        iterations: state.iteration,
        best_val: best.as_ref().map(|(b, _)| b.clone()),
        test,
    };

    let mut ssl = Vec::new();
    if cfg.ssl.enabled {
        if let (SslInit::BestVal, Some((_, net))) = (cfg.ssl.init, best) {
            state.net = net;
        }
        let ssl_sched = LrSchedule {
            g_lr: cfg.optim.ssl_g_lr,
            d_lr: cfg.optim.ssl_d_lr,
            max_iter: cfg.ssl.iterations,
            power: cfg.optim.poly_power,
        };
        for run in 1..=cfg.ssl.runs {
            state.begin_stage(2, &cfg.optim);
            let (pseudo, kept) = pseudo_label_records(&state.net, &data.target_train, cfg.eval.batch_size, cfg.ssl.gate)?;
            log.write(&LogRecord::Pseudo {
                run,
                images: pseudo.len(),
                kept_fraction: kept,
            })?;
            let skipped_before = state.skipped;
            let mut pseudo_sampler = EpochSampler::new(pseudo.len());
            for _ in 0..cfg.ssl.iterations {
                let tgt = draw_batch(&pseudo, &mut pseudo_sampler, bs, aug, &mut state.rng)?;
                let src = if cfg.ssl.adversarial {
                    Some(draw_batch(&data.source_train, &mut src_sampler, bs, aug, &mut state.rng)?)
                } else {
                    None
                };
                let m = ssl_step(&mut state, &step_cfg, &tgt, src.as_ref(), &ssl_sched)?;
                if m.iteration % cfg.schedule.log_every == 0 {
                    log.write(&LogRecord::Step(&m))?;
                }
            }
            save_train_state(&out.join(format!("ssl_run{run}.ckpt")), &state)?;
            let test = evaluate(cfg, &state.net, &data.target_test, true)?;
            log.write(&LogRecord::Eval {
                stage: 2,
                run,
                iteration: state.iteration,
                split: &cfg.eval.test_split,
                miou: test.report.miou,
                pixel_acc: test.report.pixel_acc,
            })?;
            ssl.push(SslRunReport {
                run,
                iterations: cfg.ssl.iterations,
                kept_fraction: kept,
                skipped: state.skipped - skipped_before,
                test,
            });
        }
    }
    Ok(RunReport {
        run_id,
        modules: cfg.modules.list.clone(),
        stage1,
        ssl,
    })
}
