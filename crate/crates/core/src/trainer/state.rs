use std::path::Path;

use panoda_tensor::Array;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, Sgd};
use super::step::{ModuleDiscriminators, TrainState};
use crate::damods::{Discriminator, DiscriminatorConfig, ModuleEntry};
use crate::error::{Error, Result};
use crate::segnet::checkpoint::{check_class_hash, find_group, load_into_store, read_archive, store_entries, write_archive, TensorGroups};
use crate::segnet::SegNet;

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

#[derive(Serialize, Deserialize)]
struct ModuleMeta {
    entry: ModuleEntry,
    discriminators: Vec<DiscriminatorConfig>,
    adam: Vec<AdamMeta>,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    kind: String,
    iteration: usize,
    stage: u32,
    skipped: u64,
    rng: ChaCha8Rng,
    sgd_momentum: f64,
    sgd_weight_decay: f64,
    sgd_started: bool,
    modules: Vec<ModuleMeta>,
}

const KIND: &str = "train_state";

fn named(store_names: &[(String, Array)], arrays: &[Array]) -> Vec<(String, Array)> {
    store_names.iter().map(|(n, _)| n.clone()).zip(arrays.iter().cloned()).collect()
}

/// Writes network, discriminators, optimizer moments, counters and RNG.
pub fn save_train_state(path: &Path, state: &TrainState) -> Result<()> {
    let seg = store_entries(&state.net.store);
    let mut groups: TensorGroups = vec![("segnet".into(), seg.clone())];
    let sgd_started = state.g_optim.buffers.iter().all(Option::is_some) && !state.g_optim.buffers.is_empty();
    if sgd_started {
        let bufs: Vec<Array> = state.g_optim.buffers.iter().map(|b| b.clone().unwrap()).collect();
        groups.push(("sgd.buffer".into(), named(&seg, &bufs)));
    }
    let mut modules = Vec::new();
    for (i, md) in state.discriminators.iter().enumerate() {
        let mut adam = Vec::new();
        for (j, (d, opt)) in md.nets.iter().zip(&md.optims).enumerate() {
            let entries = store_entries(&d.store);
            groups.push((format!("d.{i}.{j}"), entries.clone()));
            groups.push((format!("d.{i}.{j}.m"), named(&entries, &opt.m)));
            groups.push((format!("d.{i}.{j}.v"), named(&entries, &opt.v)));
            adam.push(AdamMeta {
                beta1: opt.beta1,
                beta2: opt.beta2,
                eps: opt.eps,
                step: opt.step,
            });
        }
        modules.push(ModuleMeta {
            entry: md.entry,
            discriminators: md.nets.iter().map(|d| d.config.clone()).collect(),
            adam,
        });
    }
    let meta = StateMeta {
        kind: KIND.into(),
        iteration: state.iteration,
        stage: state.stage,
        skipped: state.skipped,
        rng: state.rng.clone(),
        sgd_momentum: state.g_optim.momentum,
        sgd_weight_decay: state.g_optim.weight_decay,
        sgd_started,
        modules,
    };
    write_archive(path, &state.net.config, serde_json::to_value(meta)?, &groups)
}

fn arrays(groups: &TensorGroups, name: &str) -> Result<Vec<Array>> {
    Ok(find_group(groups, name)?.iter().map(|(_, a)| a.clone()).collect())
}

pub fn load_train_state(path: &Path) -> Result<TrainState> {
    let (header, groups) = read_archive(path)?;
    check_class_hash(path, &header)?;
    let meta: StateMeta = serde_json::from_value(header.meta.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: not a training state ({e})", path.display())))?;
    if meta.kind != KIND {
        return Err(Error::Checkpoint(format!("{}: archive kind {}", path.display(), meta.kind)));
    }
    let mut net = SegNet::new(header.model.clone());
    load_into_store(&mut net.store, find_group(&groups, "segnet")?)?;
    let mut g_optim = Sgd::new(meta.sgd_momentum, meta.sgd_weight_decay, net.store.len());
    if meta.sgd_started {
        let bufs = arrays(&groups, "sgd.buffer")?;
        if bufs.len() != g_optim.buffers.len() {
            return Err(Error::Checkpoint("momentum buffer count mismatch".into()));
        }
        g_optim.buffers = bufs.into_iter().map(Some).collect();
    }
    let mut discriminators = Vec::new();
    for (i, m) in meta.modules.into_iter().enumerate() {
        let mut nets = Vec::new();
        let mut optims = Vec::new();
        for (j, (cfg, am)) in m.discriminators.into_iter().zip(m.adam).enumerate() {
            let mut d = Discriminator::new(cfg);
            load_into_store(&mut d.store, find_group(&groups, &format!("d.{i}.{j}"))?)?;
            optims.push(Adam {
                beta1: am.beta1,
                beta2: am.beta2,
                eps: am.eps,
                step: am.step,
                m: arrays(&groups, &format!("d.{i}.{j}.m"))?,
                v: arrays(&groups, &format!("d.{i}.{j}.v"))?,
            });
            nets.push(d);
        }
        discriminators.push(ModuleDiscriminators {
            entry: m.entry,
            nets,
            optims,
        });
    }
    Ok(TrainState {
        iteration: meta.iteration,
        stage: meta.stage,
        net,
        discriminators,
        g_optim,
        skipped: meta.skipped,
        rng: meta.rng,
    })
}
