use std::time::Instant;

use panoda_tensor::{Array, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segnet::SegNet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub height: usize,
    pub width: usize,
    pub batch: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seconds: f64,
    pub fps: f64,
    pub hardware: String,
    pub threads: usize,
}

/// CPU model and logical core count, best effort.
pub fn hardware_description() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{model} ({cores} logical cores, CPU)")
}

/// Times full inference forwards of `batch` random images at `h × w`.
pub fn fps_benchmark(net: &SegNet, h: usize, w: usize, iterations: usize, warmup: usize, batch: usize) -> Result<FpsReport> {
    if iterations == 0 || batch == 0 {
        return Err(Error::Shape("benchmark needs at least one iteration and one image".into()));
    }
    let images = Var::constant(Array::from_fn(&[batch, 3, h, w], |i| ((i * 2654435761) % 1000) as f64 / 1000.0));
    let p = net.store.bind(false);
    for _ in 0..warmup {
        net.forward(&p, &images)?;
    }
    let start = Instant::now();
    for _ in 0..iterations {
        let out = net.forward(&p, &images)?;
        std::hint::black_box(out.heads.c1.value().data()[0]);
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(FpsReport {
        height: h,
        width: w,
        batch,
        iterations,
        warmup,
        seconds,
        fps: (iterations * batch) as f64 / seconds,
        hardware: hardware_description(),
        threads: rayon::current_num_threads(),
    })
}
