use std::collections::BTreeMap;

use panoda_tensor::{Array, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{poly_lr, Adam, Sgd};
use crate::damods::{
    build_discriminators, combine_total_loss, module_losses, rcdam_two_stage, Discriminator, ModuleConfig, ModuleEntry,
    ModuleKind, ModuleLosses, Supervision,
};
use crate::datapipe::{SampleRecord, IGNORE};
use crate::error::{Error, Result};
use crate::losses::{boundary_bce, boundary_targets, weighted_cross_entropy};
use crate::segnet::{images_to_array, SegNet, SegNetOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub g_lr: f64,
    pub g_momentum: f64,
    pub g_weight_decay: f64,
    pub d_lr: f64,
    pub d_betas: [f64; 2],
    pub ssl_g_lr: f64,
    pub ssl_d_lr: f64,
    pub poly_power: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            g_lr: 1e-5,
            g_momentum: 0.9,
            g_weight_decay: 5e-4,
            d_lr: 4e-6,
            d_betas: [0.9, 0.99],
            ssl_g_lr: 1e-8,
            ssl_d_lr: 4e-9,
            poly_power: 0.9,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (k, v) in [
            ("g_lr", self.g_lr),
            ("d_lr", self.d_lr),
            ("ssl_g_lr", self.ssl_g_lr),
            ("ssl_d_lr", self.ssl_d_lr),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("optim.{k} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.g_momentum) {
            errs.push(format!("optim.g_momentum must be in [0, 1), got {}", self.g_momentum));
        }
        if self.g_weight_decay < 0.0 {
            errs.push(format!("optim.g_weight_decay must be non-negative, got {}", self.g_weight_decay));
        }
        if self.d_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            errs.push(format!("optim.d_betas must lie in [0, 1), got {:?}", self.d_betas));
        }
        if self.poly_power <= 0.0 {
            errs.push(format!("optim.poly_power must be positive, got {}", self.poly_power));
        }
        errs
    }
}

/// Supervised terms on the labelled passes that no active module already
/// covers: the boundary head always, the first semantic head unless S or R
/// is active, the second unless A is active.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSupervision {
    pub boundary: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for BaseSupervision {
    fn default() -> Self {
        Self {
            boundary: 1.0,
            c1: 1.0,
            c2: 0.1,
        }
    }
}

/// Everything a step needs besides the state.
#[derive(Clone, Debug, PartialEq)]
pub struct StepConfig {
    pub modules: ModuleConfig,
    pub region_interaction: bool,
    pub base: BaseSupervision,
    pub class_weights: Vec<f64>,
}

/// Base rates and horizon of the poly schedule of one stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub g_lr: f64,
    pub d_lr: f64,
    pub max_iter: usize,
    pub power: f64,
}

/// Images as `N×3×H×W` plus optional flattened labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Array,
    pub labels: Option<Vec<u8>>,
}

impl Batch {
    /// Labels are kept only when every record has them.
    pub fn from_records(records: &[SampleRecord]) -> Result<Batch> {
        let images = images_to_array(&records.iter().map(|r| &r.image).collect::<Vec<_>>())?;
        let labels = if records.iter().all(|r| r.label.is_some()) {
            Some(records.iter().flat_map(|r| r.label.as_ref().unwrap().data.iter().copied()).collect())
        } else {
            None
        };
        Ok(Batch { images, labels })
    }

    pub fn without_labels(&self) -> Batch {
        Batch {
            images: self.images.clone(),
            labels: None,
        }
    }
}

/// Discriminators and their optimizers for one active module (empty for F).
#[derive(Clone, Debug)]
pub struct ModuleDiscriminators {
    pub entry: ModuleEntry,
    pub nets: Vec<Discriminator>,
    pub optims: Vec<Adam>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    /// Iteration within the current stage.
    pub iteration: usize,
    pub stage: u32,
    pub net: SegNet,
    pub discriminators: Vec<ModuleDiscriminators>,
    pub g_optim: Sgd,
    pub skipped: u64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    /// Fresh state. Discriminator strides are chosen for the smaller of the
    /// source and target sizes in `d_input`.
    pub fn new(net: SegNet, modules: &ModuleConfig, ndf: usize, d_input: (usize, usize), optim: &OptimConfig, seed: u64) -> Self {
        let discriminators = modules
            .modules
            .iter()
            .enumerate()
            .map(|(i, &entry)| {
                let nets = build_discriminators(
                    entry,
                    &net.config,
                    ndf,
                    d_input.0,
                    d_input.1,
                    seed.wrapping_add(1000 * (i as u64 + 1)),
                );
                let optims = nets.iter().map(|d| Adam::new(optim.d_betas[0], optim.d_betas[1], &d.store)).collect();
                ModuleDiscriminators { entry, nets, optims }
            })
            .collect();
        let g_optim = Sgd::new(optim.g_momentum, optim.g_weight_decay, net.store.len());
        Self {
            iteration: 0,
            stage: 1,
            net,
            discriminators,
            g_optim,
            skipped: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Starts a new stage: counter reset, fresh optimizer moments.
    pub fn begin_stage(&mut self, stage: u32, optim: &OptimConfig) {
        self.stage = stage;
        self.iteration = 0;
        self.g_optim = Sgd::new(optim.g_momentum, optim.g_weight_decay, self.net.store.len());
        for md in &mut self.discriminators {
            md.optims = md.nets.iter().map(|d| Adam::new(optim.d_betas[0], optim.d_betas[1], &d.store)).collect();
        }
    }
}

/// One step's record for the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub stage: u32,
    pub iteration: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub loss_g: f64,
    pub loss_d: f64,
    pub skipped: bool,
    /// Unweighted value of every term, e.g. `S.seg`, `A.adv`, `base.boundary`.
    pub terms: BTreeMap<String, f64>,
}

fn images(b: &Batch) -> Var {
    Var::constant(b.images.clone())
}

struct Gradients {
    g: Vec<Array>,
    /// `(module, discriminator, grads)` for every discriminator that received one.
    d: Vec<(usize, usize, Vec<Array>)>,
    metrics: StepMetrics,
}

fn compute_gradients(
    state: &TrainState,
    cfg: &StepConfig,
    src: Option<&Batch>,
    tgt: &Batch,
    lr_g: f64,
    lr_d: f64,
) -> Result<Gradients> {
    let net = &state.net;
    let p = net.store.bind(true);
    let src_out = src.map(|b| net.forward(&p, &images(b))).transpose()?;
    let tgt_out = net.forward(&p, &images(tgt))?;
    fn sup<'a>(b: &'a Batch, w: &'a [f64]) -> Option<Supervision<'a>> {
        b.labels.as_deref().map(|labels| Supervision { labels, class_weights: w })
    }
    let sup_src = src.and_then(|b| sup(b, &cfg.class_weights));
    let sup_tgt = sup(tgt, &cfg.class_weights);

    let mut losses: Vec<(ModuleKind, ModuleLosses)> = Vec::new();
    for md in &state.discriminators {
        let l = if md.entry.kind == ModuleKind::R {
            rcdam_two_stage(
                net,
                &p,
                src_out.as_ref(),
                &tgt_out,
                md.entry.placement,
                &md.nets,
                sup_src.as_ref(),
                sup_tgt.as_ref(),
                cfg.region_interaction,
            )?
            .0
        } else {
            module_losses(md.entry, src_out.as_ref(), &tgt_out, &md.nets, sup_src.as_ref(), sup_tgt.as_ref())?
        };
        losses.push((md.entry.kind, l));
    }
    let total = combine_total_loss(&losses, &cfg.modules.lambdas)?;
    let mut terms = total.terms;
    let mut g_parts: Vec<Var> = total.generator.into_iter().collect();

    let c1_covered = cfg.modules.is_active(ModuleKind::S) || cfg.modules.is_active(ModuleKind::R);
    let c2_covered = cfg.modules.is_active(ModuleKind::A);
    let labelled: Vec<(&SegNetOutput, &Supervision)> = [(src_out.as_ref(), sup_src.as_ref()), (Some(&tgt_out), sup_tgt.as_ref())]
        .into_iter()
        .filter_map(|(o, s)| Some((o?, s?)))
        .collect();
    let mut base_term = |name: &str, v: Var, w: f64, parts: &mut Vec<Var>| {
        *terms.entry(format!("base.{name}")).or_insert(0.0) += v.item();
        if w != 0.0 {
            parts.push(v.scale(w));
        }
    };
    for (out, s) in &labelled {
        if !c1_covered && cfg.base.c1 != 0.0 {
            base_term("c1", weighted_cross_entropy(&out.heads.c1, s.labels, s.class_weights)?, cfg.base.c1, &mut g_parts);
        }
        if !c2_covered && cfg.base.c2 != 0.0 {
            base_term("c2", weighted_cross_entropy(&out.heads.c2, s.labels, s.class_weights)?, cfg.base.c2, &mut g_parts);
        }
        if cfg.base.boundary != 0.0 {
            let (n, _, h, w) = out.heads.b1.value().dims4();
            let t = boundary_targets(s.labels, n, h, w);
            if t.iter().any(|&v| v != IGNORE) {
                base_term("boundary", boundary_bce(&out.heads.b1, &t)?, cfg.base.boundary, &mut g_parts);
            }
        }
    }

    let g_loss = g_parts.into_iter().reduce(|a, b| a.add(&b));
    let loss_g = g_loss.as_ref().map_or(0.0, Var::item);
    let loss_d = total.discriminator.as_ref().map_or(0.0, Var::item);
    let metrics = StepMetrics {
        stage: state.stage,
        iteration: state.iteration,
        lr_g,
        lr_d,
        loss_g,
        loss_d,
        skipped: false,
        terms,
    };
    if !loss_g.is_finite() || !loss_d.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: state.iteration,
            details: serde_json::to_string(&metrics.terms).unwrap_or_default(),
        });
    }

    let g = match &g_loss {
        Some(l) => p.grads(&l.backward()),
        None => net.store.iter().map(|(_, a)| Array::zeros(a.shape())).collect(),
    };
    let mut d = Vec::new();
    if let Some(dl) = &total.discriminator {
        let grads = dl.backward();
        for (mi, (_, l)) in losses.iter().enumerate() {
            for (di, bound) in l.d_params.iter().enumerate() {
                if bound.any_grad(&grads) {
                    d.push((mi, di, bound.grads(&grads)));
                }
            }
        }
    }
    Ok(Gradients { g, d, metrics })
}

fn apply(state: &mut TrainState, grads: Gradients) -> StepMetrics {
    let Gradients { g, d, metrics } = grads;
    state.g_optim.step(&mut state.net.store, &g, metrics.lr_g);
    for (mi, di, dg) in d {
        let md = &mut state.discriminators[mi];
        md.optims[di].step(&mut md.nets[di].store, &dg, metrics.lr_d);
    }
    state.iteration += 1;
    metrics
}

fn rates(state: &TrainState, sched: &LrSchedule) -> Result<(f64, f64)> {
    Ok((
        poly_lr(sched.g_lr, state.iteration, sched.max_iter, sched.power)?,
        poly_lr(sched.d_lr, state.iteration, sched.max_iter, sched.power)?,
    ))
}

/// Joint stage-1 step on a labelled source batch and an unlabelled target
/// batch. Generator gradients use frozen discriminators; discriminator
/// gradients use detached maps of the same forward. Both are applied after
/// both backward passes, generator first.
pub fn train_step(state: &mut TrainState, cfg: &StepConfig, src: &Batch, tgt: &Batch, sched: &LrSchedule) -> Result<StepMetrics> {
    if src.labels.is_none() {
        return Err(Error::Shape("source batch carries no labels".into()));
    }
    let (lr_g, lr_d) = rates(state, sched)?;
    let tgt = tgt.without_labels();
    let grads = compute_gradients(state, cfg, Some(src), &tgt, lr_g, lr_d)?;
    Ok(apply(state, grads))
}

/// Self-supervised step: target images supervised by gated pseudo labels.
/// With `src` given, the adversarial terms are kept; source labels are
/// never used. A batch whose labels are all ignore is skipped and counted.
pub fn ssl_step(state: &mut TrainState, cfg: &StepConfig, tgt: &Batch, src: Option<&Batch>, sched: &LrSchedule) -> Result<StepMetrics> {
    let labels = tgt
        .labels
        .as_ref()
        .ok_or_else(|| Error::Shape("self-supervised batch carries no pseudo labels".into()))?;
    let (lr_g, lr_d) = rates(state, sched)?;
    if labels.iter().all(|&l| l == IGNORE) {
        state.skipped += 1;
        return Ok(StepMetrics {
            stage: state.stage,
            iteration: state.iteration,
            lr_g,
            lr_d,
            loss_g: 0.0,
            loss_d: 0.0,
            skipped: true,
            terms: BTreeMap::new(),
        });
    }
    let src = src.map(Batch::without_labels);
    let grads = compute_gradients(state, cfg, src.as_ref(), tgt, lr_g, lr_d)?;
    Ok(apply(state, grads))
}
