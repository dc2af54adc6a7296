//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when
//! any fails. The end-to-end runs are cached under the cargo temp dir keyed
//! by a hash of the CLI binary; set `PANODA_ACCEPTANCE_FRESH=1` to rerun.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use panoda_core::datapipe::IGNORE;
use panoda_core::tensor::Array;
use panoda_core::trainer::{generate_pseudo_labels, uncertainty_gate, GatePolicy};
use serde_json::Value;
use sha2::{Digest, Sha256};
use support::Check;

const BIN: &str = env!("CARGO_BIN_EXE_panoda");
const SSL_SEEDS: [u64; 3] = [1, 2, 3];

struct Work {
    root: PathBuf,
    fresh: bool,
}

impl Work {
    fn new() -> Self {
        let bin = fs::read(BIN).expect("read CLI binary");
        let key: String = Sha256::digest(&bin).iter().map(|b| format!("{b:02x}")).collect();
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(&key[..12]);
        fs::create_dir_all(&root).expect("create work dir");
        Self {
            root,
            fresh: std::env::var("PANODA_ACCEPTANCE_FRESH").is_ok_and(|v| v == "1"),
        }
    }

    fn data(&self) -> String {
        format!("data.root={}", self.root.join("synth/data").display())
    }

    /// Runs `panoda <args> --out <root>/<name>` unless `marker` already exists
    /// there from an earlier run of the same binary.
    fn run(&self, name: &str, marker: &str, args: &[&str]) -> Result<PathBuf, String> {
        let out = self.root.join(name);
        if !self.fresh && out.join(marker).exists() {
            return Ok(out);
        }
        let _ = fs::remove_dir_all(&out);
        let t = Instant::now();
        let res = Command::new(BIN)
            .args(args)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| format!("spawn {BIN}: {e}"))?;
        eprintln!("  [{name}] {:.1?}", t.elapsed());
        if !res.status.success() {
            return Err(format!(
                "`panoda {}` failed ({}): {}",
                args.join(" "),
                res.status,
                String::from_utf8_lossy(&res.stderr).lines().last().unwrap_or("")
            ));
        }
        Ok(out)
    }

    fn synth(&self) -> Result<(), String> {
        self.run("synth", "class_histogram.txt", &["synth-gen"]).map(|_| ())
    }
}

fn report(dir: &Path) -> Result<Value, String> {
    let bytes = fs::read(dir.join("report.json")).map_err(|e| format!("{}: {e}", dir.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| e.to_string())
}

fn miou(eval: &Value) -> Result<f64, String> {
    eval["report"]["miou"].as_f64().map(|v| v * 100.0).ok_or_else(|| "report without mIoU".into())
}

fn sector_mious(eval: &Value) -> Result<Vec<Option<f64>>, String> {
    let sectors = eval["directional"]["sectors"].as_array().ok_or("report without sectors")?;
    Ok(sectors.iter().map(|s| s["report"]["miou"].as_f64().map(|v| v * 100.0)).collect())
}

/// Source-only and S+A stage-1 runs on the synthetic benchmark.
fn stage1_runs(w: &Work) -> Result<(PathBuf, PathBuf), String> {
    w.synth()?;
    let data = w.data();
    let src = w.run("source_only", "report.json", &["train", "--set", &data])?;
    let ada = w.run("adapted", "report.json", &["adapt", "--set", &data])?;
    Ok((src, ada))
}

fn adaptation(w: &Work) -> Check {
    let (src, ada) = stage1_runs(w)?;
    let (rs, ra) = (report(&src)?, report(&ada)?);
    let (ms, ma) = (miou(&rs["stage1"]["test"])?, miou(&ra["stage1"]["test"])?);
    let (ss, sa) = (sector_mious(&rs["stage1"]["test"])?, sector_mious(&ra["stage1"]["test"])?);
    let better = ss.iter().zip(&sa).filter(|(s, a)| matches!((s, a), (Some(s), Some(a)) if a >= s)).count();
    let line = format!("source-only {ms:.2}, S+A {ma:.2} ({:+.2}), sectors not worse {better}/8", ma - ms);
    if ma >= ms + 5.0 && better >= 6 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn self_training(w: &Work) -> Check {
    // Zero-variance gating keeps everything.
    let c = Array::from_fn(&[19, 8, 8], |i| ((i * 7919) % 23) as f64 * 0.1);
    let (l, u) = generate_pseudo_labels(&c, &c).map_err(|e| e.to_string())?;
    let g = uncertainty_gate(&l, &u, GatePolicy::Quantile { q: 0.7 }).map_err(|e| e.to_string())?;
    if g.data.iter().any(|&v| v == IGNORE) {
        return Err("zero-variance map dropped pixels".into());
    }
    let (_, ada) = stage1_runs(w)?;
    let ckpt = ada.join("stage1_final.ckpt");
    let data = w.data();
    let ckpt = ckpt.display().to_string();
    let mut deltas = Vec::new();
    for seed in SSL_SEEDS {
        let seed_s = seed.to_string();
        let dir = w.run(
            &format!("ssl_seed{seed}"),
            "report.json",
            &["ssl", "--checkpoint", &ckpt, "--seed", &seed_s, "--set", &data, "--set", "ssl.runs=1", "--set", "ssl.iterations=500"],
        )?;
        let r = report(&dir)?;
        let before = miou(&r["stage1"]["test"])?;
        let after = miou(&r["ssl"][0]["test"])?;
        deltas.push(after - before);
    }
    let improved = deltas.iter().filter(|&&d| d > 0.0).count();
    let worst = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let line = format!(
        "SSL deltas {} (worst {worst:+.2}, improved {improved}/3); zero variance keeps 100%",
        deltas.iter().map(|d| format!("{d:+.2}")).collect::<Vec<_>>().join(" ")
    );
    if worst >= -1.0 && improved >= 2 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn determinism(w: &Work) -> Check {
    w.synth()?;
    let data = w.data();
    let args = ["train", "--single-thread", "--seed", "3", "--set", "schedule.max_iter=50", "--set", &data];
    let mut outs = Vec::new();
    for name in ["det_a", "det_b"] {
        let _ = fs::remove_dir_all(w.root.join(name));
        outs.push(w.run(name, "never", &args)?);
    }
    for file in ["metrics.ndjson", "stage1_final.ckpt", "report.json"] {
        let a = fs::read(outs[0].join(file)).map_err(|e| e.to_string())?;
        let b = fs::read(outs[1].join(file)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{file} differs between runs"));
        }
    }
    Ok("metrics log, checkpoint and report bitwise identical".into())
}

fn main() -> ExitCode {
    let work = Work::new();
    eprintln!("acceptance work dir: {}", work.root.display());
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 loss oracle equivalence", Box::new(support::loss_oracles)),
        ("2 analytic forced values", Box::new(support::forced_values)),
        ("3 gradient suite", Box::new(support::gradient_suite)),
        ("4 attention invariants", Box::new(support::attention_invariants)),
        ("5 GAN convention", Box::new(support::gan_convention)),
        ("6 synthetic adaptation", Box::new(|| adaptation(&work))),
        ("7 self-training non-regression", Box::new(|| self_training(&work))),
        ("8 metric oracles", Box::new(support::metric_oracles)),
        ("9 mIoU gap table", Box::new(support::gap_table)),
        ("10 determinism", Box::new(|| determinism(&work))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let res = check();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS  {name:<32} {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name:<32} {msg} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
