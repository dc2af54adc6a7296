use std::collections::BTreeMap;
use std::fmt;

use panoda_tensor::{Bound, Var};
use serde::{Deserialize, Serialize};

use super::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::losses::{bce_with_logits, sigmoid_entropy, weighted_cross_entropy};
use crate::segnet::{ArchMode, RegionOutput, SegNet, SegNetConfig, SegNetOutput};

/// The four adaptation modules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModuleKind {
    /// Adversarial alignment of the first semantic head.
    S,
    /// Adversarial alignment of the attention path.
    A,
    /// Two-stage alignment before and after region interaction.
    R,
    /// Sigmoid-entropy minimisation on features.
    F,
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl ModuleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S" => Some(Self::S),
            "A" => Some(Self::A),
            "R" => Some(Self::R),
            "F" => Some(Self::F),
            _ => None,
        }
    }

    pub fn needs_discriminator(self) -> bool {
        self != ModuleKind::F
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    #[serde(rename = "fs")]
    Feature,
    #[serde(rename = "os")]
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleEntry {
    pub kind: ModuleKind,
    pub placement: Placement,
}

/// Loss weights of one module. Which fields are read depends on the kind:
/// S and A read `seg`, `adv`, `d`; R also reads `seg_pre`; F reads
/// `ent_s` and `ent_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModuleLambdas {
    pub seg: f64,
    pub seg_pre: f64,
    pub adv: f64,
    pub d: f64,
    pub ent_s: f64,
    pub ent_t: f64,
}

impl Default for ModuleLambdas {
    fn default() -> Self {
        Self {
            seg: 1.0,
            seg_pre: 0.0,
            adv: 0.001,
            d: 1.0,
            ent_s: 0.0,
            ent_t: 0.0,
        }
    }
}

impl ModuleLambdas {
    pub fn defaults_for(kind: ModuleKind) -> Self {
        match kind {
            ModuleKind::S => Self::default(),
            ModuleKind::A => Self {
                seg: 0.1,
                adv: 0.0002,
                ..Self::default()
            },
            ModuleKind::R => Self {
                seg_pre: 1.5,
                ..Self::default()
            },
            ModuleKind::F => Self {
                seg: 0.0,
                adv: 0.0,
                d: 0.0,
                ent_s: 0.001,
                ent_t: 0.001,
                ..Self::default()
            },
        }
    }
}

/// λ table keyed by module kind.
pub type LossWeights = BTreeMap<ModuleKind, ModuleLambdas>;

pub fn default_loss_weights() -> LossWeights {
    [ModuleKind::S, ModuleKind::A, ModuleKind::R, ModuleKind::F]
        .into_iter()
        .map(|k| (k, ModuleLambdas::defaults_for(k)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleConfig {
    pub modules: Vec<ModuleEntry>,
    pub lambdas: LossWeights,
}

impl ModuleConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut seen = Vec::new();
        for m in &self.modules {
            if seen.contains(&m.kind) {
                errs.push(format!("module {} listed twice", m.kind));
            }
            seen.push(m.kind);
            if !self.lambdas.contains_key(&m.kind) {
                errs.push(format!("module {} has no lambda entry", m.kind));
            }
        }
        errs
    }

    pub fn is_active(&self, kind: ModuleKind) -> bool {
        self.modules.iter().any(|m| m.kind == kind)
    }
}

/// Labels and class weights supervising one forward pass.
pub struct Supervision<'a> {
    pub labels: &'a [u8],
    pub class_weights: &'a [f64],
}

/// Loss graphs of one adaptation module, before λ weighting.
#[derive(Default)]
pub struct ModuleLosses {
    pub seg: Option<Var>,
    pub seg_pre: Option<Var>,
    pub adv: Vec<Var>,
    pub d: Vec<Var>,
    /// Trainable bindings of the discriminators behind `d`, same order.
    pub d_params: Vec<Bound>,
    pub ent_s: Option<Var>,
    pub ent_t: Option<Var>,
}

pub struct AdversarialLosses {
    pub seg: Option<Var>,
    pub adv: Var,
    pub d: Var,
    pub d_params: Bound,
}

/// `L_adv = BCE(D(tgt), source)` with D frozen, and
/// `L_d = BCE(D(src), source) + BCE(D(tgt), target)` on detached maps.
/// `L_seg` is the weighted cross-entropy of `seg.0` when supervision is given.
pub fn adversarial_losses(
    src_map: &Var,
    tgt_map: &Var,
    seg: Option<(&Var, &Supervision)>,
    d: &Discriminator,
) -> Result<AdversarialLosses> {
    use crate::datapipe::Domain;
    let seg = match seg {
        Some((logits, s)) => Some(weighted_cross_entropy(logits, s.labels, s.class_weights)?),
        None => None,
    };
    let frozen = d.store.bind(false);
    let adv = bce_with_logits(&d.forward(&frozen, tgt_map)?, Domain::Source.label());
    let d_params = d.store.bind(true);
    let d_src = d.forward(&d_params, &src_map.detach())?;
    let d_tgt = d.forward(&d_params, &tgt_map.detach())?;
    let d_loss = bce_with_logits(&d_src, Domain::Source.label()).add(&bce_with_logits(&d_tgt, Domain::Target.label()));
    Ok(AdversarialLosses {
        seg,
        adv,
        d: d_loss,
        d_params,
    })
}

/// `λ_s · H(F_s) + λ_t · H(F_t)` with the one-sided sigmoid entropy.
pub fn fcdam_entropy_loss(f_s: &Var, f_t: &Var, lambda_s: f64, lambda_t: f64) -> Var {
    sigmoid_entropy(f_s).scale(lambda_s).add(&sigmoid_entropy(f_t).scale(lambda_t))
}

/// Map scored by a module's discriminator.
pub fn discriminator_input(kind: ModuleKind, placement: Placement, out: &SegNetOutput) -> Result<Var> {
    Ok(match (kind, placement) {
        (ModuleKind::S | ModuleKind::R, Placement::Output) => out.heads.c1.softmax(1),
        (ModuleKind::S | ModuleKind::R | ModuleKind::F, Placement::Feature) => out.backbone.rate(16)?.clone(),
        (ModuleKind::A, Placement::Output) => out.heads.c2.softmax(1),
        (ModuleKind::A, Placement::Feature) => out.dual.fused.clone(),
        (ModuleKind::F, Placement::Output) => out.c1_low.clone(),
    })
}

fn region_input(placement: Placement, region: &RegionOutput) -> Var {
    match placement {
        Placement::Output => region.logits.softmax(1),
        Placement::Feature => region.features.clone(),
    }
}

/// Input channels of each discriminator a module needs (stage order).
pub fn discriminator_channels(entry: ModuleEntry, net: &SegNetConfig) -> Vec<usize> {
    let top = net.channels[3];
    let region_c = match net.mode {
        ArchMode::DanetLike => top,
        ArchMode::FanetLike => top + net.channels[2],
    };
    let first = match entry.placement {
        Placement::Output => net.num_classes,
        Placement::Feature => top,
    };
    match entry.kind {
        ModuleKind::S | ModuleKind::A => vec![first],
        ModuleKind::R => vec![
            first,
            match entry.placement {
                Placement::Output => net.num_classes,
                Placement::Feature => region_c,
            },
        ],
        ModuleKind::F => vec![],
    }
}

/// Spatial size each discriminator of a module sees for an `h × w` input.
pub fn discriminator_input_size(entry: ModuleEntry, stage: usize, net: &SegNetConfig, h: usize, w: usize) -> (usize, usize) {
    match entry.placement {
        Placement::Output => (h, w),
        Placement::Feature => {
            let r = if entry.kind == ModuleKind::R && stage == 1 && net.mode == ArchMode::FanetLike { 8 } else { 16 };
            (h / r, w / r)
        }
    }
}

/// Builds the discriminators of a module, strides chosen for a target of
/// `h × w` pixels.
pub fn build_discriminators(entry: ModuleEntry, net: &SegNetConfig, ndf: usize, h: usize, w: usize, seed: u64) -> Vec<Discriminator> {
    discriminator_channels(entry, net)
        .into_iter()
        .enumerate()
        .map(|(stage, c)| {
            let (ih, iw) = discriminator_input_size(entry, stage, net, h, w);
            Discriminator::new(DiscriminatorConfig {
                in_channels: c,
                ndf,
                strides: DiscriminatorConfig::strides_for(ih, iw),
                zero_final: false,
                seed: seed.wrapping_add(stage as u64),
            })
        })
        .collect()
}

/// Region branch outputs of both domains.
pub struct RegionPasses {
    pub source: Option<RegionOutput>,
    pub target: RegionOutput,
}

/// Regional two-stage alignment. Stage 1 is S-style alignment of the
/// pre-region prediction with `ds[0]`; stage 2 builds regions, applies
/// region interaction (when `interact`) and aligns the regional output with
/// `ds[1]`. Supervision, when given, applies to both stages.
#[allow(clippy::too_many_arguments)]
pub fn rcdam_two_stage(
    net: &SegNet,
    p: &Bound,
    src: Option<&SegNetOutput>,
    tgt: &SegNetOutput,
    placement: Placement,
    ds: &[Discriminator],
    sup_src: Option<&Supervision>,
    sup_tgt: Option<&Supervision>,
    interact: bool,
) -> Result<(ModuleLosses, RegionPasses)> {
    if ds.len() != 2 {
        return Err(Error::Shape(format!("regional module needs 2 discriminators, got {}", ds.len())));
    }
    let size = |o: &SegNetOutput| {
        let s = o.heads.c1.shape();
        (s[2], s[3])
    };
    let (th, tw) = size(tgt);
    let tgt_region = net.region_forward(p, tgt, interact, th, tw)?;
    let src_region = match src {
        Some(s) => {
            let (sh, sw) = size(s);
            Some(net.region_forward(p, s, interact, sh, sw)?)
        }
        None => None,
    };
    let mut out = ModuleLosses::default();
    let mut seg_pre = Vec::new();
    let mut seg = Vec::new();
    for (pass, region, sup) in [(src, src_region.as_ref(), sup_src), (Some(tgt), Some(&tgt_region), sup_tgt)] {
        if let (Some(o), Some(r), Some(s)) = (pass, region, sup) {
            seg_pre.push(weighted_cross_entropy(&o.heads.c1, s.labels, s.class_weights)?);
            seg.push(weighted_cross_entropy(&r.logits, s.labels, s.class_weights)?);
        }
    }
    out.seg_pre = sum_vars(seg_pre);
    out.seg = sum_vars(seg);
    if let (Some(s), Some(sr)) = (src, src_region.as_ref()) {
        let stage1 = adversarial_losses(
            &discriminator_input(ModuleKind::R, placement, s)?,
            &discriminator_input(ModuleKind::R, placement, tgt)?,
            None,
            &ds[0],
        )?;
        let stage2 = adversarial_losses(&region_input(placement, sr), &region_input(placement, &tgt_region), None, &ds[1])?;
        for st in [stage1, stage2] {
            out.adv.push(st.adv);
            out.d.push(st.d);
            out.d_params.push(st.d_params);
        }
    }
    Ok((
        out,
        RegionPasses {
            source: src_region,
            target: tgt_region,
        },
    ))
}

fn sum_vars(v: Vec<Var>) -> Option<Var> {
    v.into_iter().reduce(|a, b| a.add(&b))
}

/// Losses of one S, A or F module. Adversarial terms need a source pass;
/// supervised terms are added for every pass that carries labels.
pub fn module_losses(
    entry: ModuleEntry,
    src: Option<&SegNetOutput>,
    tgt: &SegNetOutput,
    ds: &[Discriminator],
    sup_src: Option<&Supervision>,
    sup_tgt: Option<&Supervision>,
) -> Result<ModuleLosses> {
    let mut out = ModuleLosses::default();
    let head = |o: &SegNetOutput| match entry.kind {
        ModuleKind::A => o.heads.c2.clone(),
        _ => o.heads.c1.clone(),
    };
    match entry.kind {
        ModuleKind::S | ModuleKind::A => {
            let mut seg = Vec::new();
            for (pass, sup) in [(src, sup_src), (Some(tgt), sup_tgt)] {
                if let (Some(o), Some(s)) = (pass, sup) {
                    seg.push(weighted_cross_entropy(&head(o), s.labels, s.class_weights)?);
                }
            }
            out.seg = sum_vars(seg);
            if let Some(s) = src {
                let d = ds.first().ok_or_else(|| Error::Shape(format!("module {} has no discriminator", entry.kind)))?;
                let l = adversarial_losses(
                    &discriminator_input(entry.kind, entry.placement, s)?,
                    &discriminator_input(entry.kind, entry.placement, tgt)?,
                    None,
                    d,
                )?;
                out.adv.push(l.adv);
                out.d.push(l.d);
                out.d_params.push(l.d_params);
            }
        }
        ModuleKind::F => {
            if let Some(s) = src {
                out.ent_s = Some(sigmoid_entropy(&discriminator_input(entry.kind, entry.placement, s)?));
            }
            out.ent_t = Some(sigmoid_entropy(&discriminator_input(entry.kind, entry.placement, tgt)?));
        }
        ModuleKind::R => {
            return Err(Error::Shape("regional module losses come from rcdam_two_stage".into()));
        }
    }
    Ok(out)
}

/// Weighted totals plus the unweighted value of every term.
pub struct TotalLoss {
    pub generator: Option<Var>,
    pub discriminator: Option<Var>,
    pub terms: BTreeMap<String, f64>,
}

/// `L_G = Σ λ_seg L_seg + Σ λ_adv L_adv + λ_ent terms`, `L_D = Σ λ_d L_d`.
pub fn combine_total_loss(losses: &[(ModuleKind, ModuleLosses)], weights: &LossWeights) -> Result<TotalLoss> {
    let mut g = Vec::new();
    let mut d = Vec::new();
    let mut terms = BTreeMap::new();
    for (kind, l) in losses {
        let lam = weights.get(kind).ok_or_else(|| Error::MissingLambda(kind.to_string()))?;
        let mut push = |name: &str, v: &Var, w: f64, into: &mut Vec<Var>| {
            *terms.entry(format!("{kind}.{name}")).or_insert(0.0) += v.item();
            // Zero-weight terms are logged but kept out of the graph.
            if w != 0.0 {
                into.push(v.scale(w));
            }
        };
        if let Some(v) = &l.seg {
            push("seg", v, lam.seg, &mut g);
        }
        if let Some(v) = &l.seg_pre {
            push("seg_pre", v, lam.seg_pre, &mut g);
        }
        for v in &l.adv {
            push("adv", v, lam.adv, &mut g);
        }
        if let Some(v) = &l.ent_s {
            push("ent_s", v, lam.ent_s, &mut g);
        }
        if let Some(v) = &l.ent_t {
            push("ent_t", v, lam.ent_t, &mut g);
        }
        for v in &l.d {
            push("d", v, lam.d, &mut d);
        }
    }
    Ok(TotalLoss {
        generator: sum_vars(g),
        discriminator: sum_vars(d),
        terms,
    })
}
