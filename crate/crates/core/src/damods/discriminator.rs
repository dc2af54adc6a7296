use panoda_tensor::{Bound, ParamStore, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    /// Width of the first stage; later stages use 2×, 4×, 8× and 1 channel.
    pub ndf: usize,
    /// Per-stage stride, 2 (4×4 kernel) or 1 (3×3 kernel).
    pub strides: [usize; 5],
    pub zero_final: bool,
    pub seed: u64,
}

impl DiscriminatorConfig {
    /// Five stride-2 stages.
    pub fn patch(in_channels: usize, ndf: usize, seed: u64) -> Self {
        Self {
            in_channels,
            ndf,
            strides: [2; 5],
            zero_final: false,
            seed,
        }
    }

    /// Halves the resolution while both sides are at least 2, then keeps it,
    /// so small feature maps still produce at least one score.
    pub fn strides_for(h: usize, w: usize) -> [usize; 5] {
        let mut s = [1; 5];
        let (mut h, mut w) = (h, w);
        for st in &mut s {
            if h >= 2 && w >= 2 {
                *st = 2;
                h /= 2;
                w /= 2;
            }
        }
        s
    }
}

/// Fully convolutional patch discriminator producing raw score logits.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub store: ParamStore,
    convs: Vec<Conv2d>,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let n = config.ndf;
        let widths = [n, 2 * n, 4 * n, 8 * n, 1];
        let mut cin = config.in_channels;
        let mut convs = Vec::new();
        for (i, (&cout, &stride)) in widths.iter().zip(&config.strides).enumerate() {
            let last = i == 4;
            let init = if last && config.zero_final { Init::Zeros } else { Init::Normal(0.02) };
            let (k, pad) = if stride == 2 { (4, 1) } else { (3, 1) };
            convs.push(Conv2d::new(&mut store, &format!("conv{}", i + 1), cin, cout, k, stride, pad, true, init, &mut rng));
            cin = cout;
        }
        Self { config, store, convs }
    }

    /// Score logits (no sigmoid) for an `N×C×H×W` map.
    pub fn forward(&self, p: &Bound, x: &Var) -> Result<Var> {
        let c = x.shape()[1];
        if c != self.config.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.config.in_channels,
                got: c,
            });
        }
        let mut h = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(p, &h);
            if i < 4 {
                h = h.leaky_relu(LEAKY_SLOPE);
            }
        }
        Ok(h)
    }
}

/// Scores `x` with parameters bound as constants: gradients reach `x` but
/// never the discriminator.
pub fn discriminator_forward(d: &Discriminator, x: &Var) -> Result<Var> {
    d.forward(&d.store.bind(false), x)
}
