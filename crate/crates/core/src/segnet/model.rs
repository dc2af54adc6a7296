use std::collections::BTreeMap;

use panoda_tensor::{Array, Bound, ParamId, ParamStore, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{region_construction, region_interaction, DualAttention, DualOutput, RegionDecisionMap};
use crate::datapipe::{Image, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvBlock, Init};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchMode {
    /// All heads read the stride-16 attended features.
    DanetLike,
    /// Heads read the attended stride-16 features fused with stride-4/8 skips.
    FanetLike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegNetConfig {
    pub mode: ArchMode,
    pub num_classes: usize,
    /// Output channels of the stride 2/4/8/16 stages.
    pub channels: [usize; 4],
    pub head_channels: usize,
    /// Build the extra classifier used after region interaction.
    pub region_head: bool,
    /// Zero the final 1×1 layer of every head.
    pub zero_init_heads: bool,
    pub seed: u64,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        Self {
            mode: ArchMode::FanetLike,
            num_classes: NUM_CLASSES,
            channels: [16, 32, 48, 64],
            head_channels: 32,
            region_head: true,
            zero_init_heads: false,
            seed: 0,
        }
    }
}

/// Multi-level backbone features keyed by downsampling rate (4, 8, 16).
#[derive(Clone)]
pub struct BackboneOutput {
    pub features: BTreeMap<usize, Var>,
}

impl BackboneOutput {
    pub fn rate(&self, r: usize) -> Result<&Var> {
        self.features.get(&r).ok_or(Error::MissingRate(r))
    }
}

/// Boundary and semantic logits at input resolution.
#[derive(Clone)]
pub struct HeadOutputs {
    pub b1: Var,
    pub c1: Var,
    pub c2: Var,
}

/// Everything a training step may need from one forward pass.
pub struct SegNetOutput {
    pub backbone: BackboneOutput,
    pub dual: DualOutput,
    pub b1_input: Var,
    pub c1_input: Var,
    pub c2_input: Var,
    /// Head logits before upsampling.
    pub b1_low: Var,
    pub c1_low: Var,
    pub c2_low: Var,
    pub heads: HeadOutputs,
}

/// Output of the region branch on top of a forward pass.
pub struct RegionOutput {
    pub regions: Vec<RegionDecisionMap>,
    pub features: Var,
    pub logits: Var,
}

/// 3×3 conv block followed by a 1×1 classifier.
#[derive(Clone, Debug)]
pub struct Head {
    pub hidden: ConvBlock,
    pub classifier: Conv2d,
}

impl Head {
    fn new(store: &mut ParamStore, name: &str, cin: usize, hidden: usize, cout: usize, zero: bool, rng: &mut ChaCha8Rng) -> Self {
        let init = if zero { Init::Zeros } else { Init::Normal(0.01) };
        Self {
            hidden: ConvBlock::new(store, &format!("{name}.hidden"), cin, hidden, 1, rng),
            classifier: Conv2d::new(store, &format!("{name}.cls"), hidden, cout, 1, 1, 0, true, init, rng),
        }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        self.classifier.forward(p, &self.hidden.forward(p, x))
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = self.hidden.params();
        v.extend(self.classifier.params());
        v
    }
}

#[derive(Clone, Debug)]
pub struct SegNet {
    pub config: SegNetConfig,
    pub store: ParamStore,
    stages: Vec<ConvBlock>,
    refine: Vec<ConvBlock>,
    decoder: ConvBlock,
    pub dam: DualAttention,
    pub b1_head: Head,
    pub c1_head: Head,
    pub c2_head: Head,
    pub region_head: Option<Head>,
}

const RATES: [usize; 4] = [2, 4, 8, 16];

impl SegNet {
    pub fn new(config: SegNetConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let ch = config.channels;
        let mut stages = Vec::new();
        let mut refine = Vec::new();
        let mut cin = 3;
        for (i, &c) in ch.iter().enumerate() {
            stages.push(ConvBlock::new(&mut store, &format!("backbone.stage{}", i + 1), cin, c, 2, &mut rng));
            if i > 0 {
                refine.push(ConvBlock::new(&mut store, &format!("backbone.refine{}", i + 1), c, c, 1, &mut rng));
            }
            cin = c;
        }
        let top = ch[3];
        let decoder = ConvBlock::new(&mut store, "decoder", top, top, 1, &mut rng);
        let dam = DualAttention::new(&mut store, "dam", top);
        let (b1_in, c_in) = match config.mode {
            ArchMode::DanetLike => (top, top),
            ArchMode::FanetLike => (top + ch[1], top + ch[2]),
        };
        let hc = config.head_channels;
        let z = config.zero_init_heads;
        let nc = config.num_classes;
        let b1_head = Head::new(&mut store, "head.b1", b1_in, hc, 1, z, &mut rng);
        let c1_head = Head::new(&mut store, "head.c1", c_in, hc, nc, z, &mut rng);
        let c2_head = Head::new(&mut store, "head.c2", c_in, hc, nc, z, &mut rng);
        let region_head = config
            .region_head
            .then(|| Head::new(&mut store, "head.region", c_in, hc, nc, z, &mut rng));
        Self {
            config,
            store,
            stages,
            refine,
            decoder,
            dam,
            b1_head,
            c1_head,
            c2_head,
            region_head,
        }
    }

    /// Parameters of the shared encoder and decoder.
    pub fn backbone_params(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.stages.iter().chain(&self.refine).flat_map(ConvBlock::params).collect();
        v.extend(self.decoder.params());
        v
    }

    pub fn backbone(&self, p: &Bound, images: &Var) -> Result<BackboneOutput> {
        let (_, c, h, w) = images.value().dims4();
        if c != 3 {
            return Err(Error::ChannelMismatch { expected: 3, got: c });
        }
        if h % 16 != 0 || w % 16 != 0 || h == 0 || w == 0 {
            return Err(Error::SpatialSize { h, w, multiple: 16 });
        }
        let mut x = images.add_scalar(-0.5).scale(4.0);
        let mut features = BTreeMap::new();
        for (i, stage) in self.stages.iter().enumerate() {
            x = stage.forward(p, &x);
            if i > 0 {
                x = self.refine[i - 1].forward(p, &x);
            }
            if RATES[i] == 16 {
                x = self.decoder.forward(p, &x);
            }
            if RATES[i] >= 4 {
                features.insert(RATES[i], x.clone());
            }
        }
        Ok(BackboneOutput { features })
    }

    /// Full forward pass on an `N×3×H×W` batch with values in `[0, 1]`.
    pub fn forward(&self, p: &Bound, images: &Var) -> Result<SegNetOutput> {
        let (_, _, h, w) = images.value().dims4();
        let backbone = self.backbone(p, images)?;
        let dual = self.dam.forward(p, backbone.rate(16)?);
        let (b1_input, c1_input, c2_input) = match self.config.mode {
            ArchMode::DanetLike => (dual.position.clone(), dual.position.clone(), dual.channel.clone()),
            ArchMode::FanetLike => {
                let f4 = backbone.rate(4)?;
                let f8 = backbone.rate(8)?;
                (
                    concat_upsampled(&dual.position, f4)?,
                    concat_upsampled(&dual.position, f8)?,
                    concat_upsampled(&dual.channel, f8)?,
                )
            }
        };
        let b1_low = self.b1_head.forward(p, &b1_input);
        let c1_low = self.c1_head.forward(p, &c1_input);
        let c2_low = self.c2_head.forward(p, &c2_input);
        let heads = HeadOutputs {
            b1: upsample_logits(&b1_low, h, w)?,
            c1: upsample_logits(&c1_low, h, w)?,
            c2: upsample_logits(&c2_low, h, w)?,
        };
        Ok(SegNetOutput {
            backbone,
            dual,
            b1_input,
            c1_input,
            c2_input,
            b1_low,
            c1_low,
            c2_low,
            heads,
        })
    }

    /// Region construction on the C1 input resolution, region interaction on
    /// the C1 input features (skipped when `interact` is false), then the
    /// region classifier, upsampled to `(h, w)`.
    pub fn region_forward(&self, p: &Bound, out: &SegNetOutput, interact: bool, h: usize, w: usize) -> Result<RegionOutput> {
        let head = self
            .region_head
            .as_ref()
            .ok_or_else(|| Error::Shape("model was built without a region head".into()))?;
        let (n, c, fh, fw) = out.c1_input.value().dims4();
        let b1 = panoda_tensor::resize_bilinear(out.b1_low.value(), fh, fw);
        let c1 = out.c1_low.value();
        let k = c1.shape()[1];
        let feats = out.c1_input.value();
        let mut regions = Vec::with_capacity(n);
        for b in 0..n {
            let b1_i = b1.narrow(0, b, 1).reshape(&[fh, fw]);
            let c1_i = c1.narrow(0, b, 1).reshape(&[k, fh, fw]);
            let f_i = feats.narrow(0, b, 1).reshape(&[c, fh, fw]);
            regions.push(region_construction(&b1_i, &c1_i, &f_i)?);
        }
        let features = if interact {
            region_interaction(&out.c1_input, &regions)?
        } else {
            out.c1_input.clone()
        };
        let logits = upsample_logits(&head.forward(p, &features), h, w)?;
        Ok(RegionOutput {
            regions,
            features,
            logits,
        })
    }
}

/// `concat(upsample(top → size of skip), skip)` along channels.
fn concat_upsampled(top: &Var, skip: &Var) -> Result<Var> {
    let (_, _, h, w) = skip.value().dims4();
    Ok(Var::concat(&[upsample_logits(top, h, w)?, skip.clone()], 1))
}

/// Multi-level inputs of the boundary and first semantic head:
/// `concat(up(F16 → r4), F4)` and `concat(up(F16 → r8), F8)`.
pub fn fanet_multilevel_wiring(b: &BackboneOutput, mode: ArchMode) -> Result<(Var, Var)> {
    if mode != ArchMode::FanetLike {
        return Err(Error::WrongMode { expected: "fanet_like" });
    }
    let f16 = b.rate(16)?;
    Ok((concat_upsampled(f16, b.rate(4)?)?, concat_upsampled(f16, b.rate(8)?)?))
}

/// Bilinear upsampling of `N×C×h×w` maps; refuses to shrink.
pub fn upsample_logits(logits: &Var, h: usize, w: usize) -> Result<Var> {
    let (_, _, lh, lw) = logits.value().dims4();
    if h < lh || w < lw {
        return Err(Error::Downscale {
            from: (lh, lw),
            to: (h, w),
        });
    }
    Ok(logits.resize_bilinear(h, w))
}

/// Stacks images into an `N×3×H×W` array.
pub fn images_to_array(images: &[&Image]) -> Result<Array> {
    let first = images.first().ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height, img.width) != (h, w) {
            return Err(Error::Shape(format!(
                "batch mixes {}x{} with {h}x{w}",
                img.height, img.width
            )));
        }
        for c in 0..3 {
            data.extend((0..h * w).map(|p| img.data[p * 3 + c] as f64));
        }
    }
    Ok(Array::from_vec(&[images.len(), 3, h, w], data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(mode: ArchMode) -> SegNet {
        SegNet::new(SegNetConfig {
            mode,
            channels: [4, 4, 4, 4],
            head_channels: 4,
            ..Default::default()
        })
    }

    #[test]
    fn shape_contract() {
        let net = SegNet::new(SegNetConfig::default());
        let x = Var::constant(Array::full(&[2, 3, 64, 128], 0.5));
        let out = net.forward(&net.store.bind(false), &x).unwrap();
        assert_eq!(out.backbone.rate(4).unwrap().shape(), &[2, 32, 16, 32]);
        assert_eq!(out.backbone.rate(8).unwrap().shape(), &[2, 48, 8, 16]);
        assert_eq!(out.backbone.rate(16).unwrap().shape(), &[2, 64, 4, 8]);
        assert_eq!(out.heads.b1.shape(), &[2, 1, 64, 128]);
        assert_eq!(out.heads.c1.shape(), &[2, 19, 64, 128]);
        assert_eq!(out.heads.c2.shape(), &[2, 19, 64, 128]);
    }

    #[test]
    fn rejects_non_divisible_input() {
        let net = toy(ArchMode::DanetLike);
        let x = Var::constant(Array::zeros(&[1, 3, 40, 64]));
        assert!(matches!(net.forward(&net.store.bind(false), &x), Err(Error::SpatialSize { .. })));
    }

    #[test]
    fn zero_heads_give_uniform_softmax() {
        let net = SegNet::new(SegNetConfig {
            zero_init_heads: true,
            ..Default::default()
        });
        let x = Var::constant(Array::from_fn(&[1, 3, 32, 32], |i| (i % 7) as f64 / 7.0));
        let out = net.forward(&net.store.bind(false), &x).unwrap();
        assert!(out.heads.c1.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let net = toy(ArchMode::FanetLike);
        let x = Var::constant(Array::from_fn(&[1, 3, 32, 48], |i| ((i * 13) % 17) as f64 / 17.0));
        let p = net.store.bind(false);
        let a = net.forward(&p, &x).unwrap();
        let b = net.forward(&p, &x).unwrap();
        assert_eq!(a.heads.c1.value(), b.heads.c1.value());
        assert_eq!(a.heads.c2.value(), b.heads.c2.value());
    }

    #[test]
    fn wiring_channel_arithmetic() {
        let mut features = BTreeMap::new();
        features.insert(4, Var::constant(Array::zeros(&[1, 16, 16, 32])));
        features.insert(8, Var::constant(Array::zeros(&[1, 24, 8, 16])));
        features.insert(16, Var::constant(Array::zeros(&[1, 32, 4, 8])));
        let b = BackboneOutput { features };
        let (b1, c1) = fanet_multilevel_wiring(&b, ArchMode::FanetLike).unwrap();
        assert_eq!(b1.shape(), &[1, 48, 16, 32]);
        assert_eq!(c1.shape(), &[1, 56, 8, 16]);
        assert!(fanet_multilevel_wiring(&b, ArchMode::DanetLike).is_err());
    }

    #[test]
    fn upsample_constant_and_ramp() {
        let c = Var::constant(Array::from_fn(&[1, 19, 4, 8], |i| (i / 32) as f64));
        let up = upsample_logits(&c, 64, 128).unwrap();
        for ch in 0..19 {
            assert!(up.value().narrow(1, ch, 1).data().iter().all(|&v| v == ch as f64));
        }
        assert!(upsample_logits(&up, 32, 64).is_err());

        // 2× along a linear ramp: interior outputs are means of neighbours.
        let ramp = Var::constant(Array::from_fn(&[1, 1, 1, 4], |i| i as f64 * 2.0));
        let up = upsample_logits(&ramp, 1, 8).unwrap();
        let d = up.value().data();
        for i in 1..7 {
            let (a, b) = ((i - 1) / 2, (i + 1) / 2);
            let expect = if i % 2 == 1 { 0.75 * (a as f64 * 2.0) + 0.25 * (b as f64 * 2.0) } else { 0.25 * (a as f64 * 2.0) + 0.75 * (b as f64 * 2.0) };
            assert!((d[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn spike_survives_upsampling() {
        let mut a = Array::zeros(&[1, 3, 4, 4]);
        a.set(&[0, 2, 1, 2], 5.0);
        let up = upsample_logits(&Var::constant(a), 16, 16).unwrap();
        let am = up.value().argmax_axis(1);
        // Input pixel (1, 2) covers output rows 4..8, cols 8..12.
        assert_eq!(am[6 * 16 + 10], 2);
    }
}
