use panoda_tensor::{Array, Bound, ParamId, ParamStore, Var};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init};

/// Row-stochastic pixel-to-pixel weights, `N × hw × hw`; row = query pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionAttention {
    pub height: usize,
    pub width: usize,
    pub weights: Array,
}

/// Row-stochastic channel-to-channel weights, `N × c × c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAttention {
    pub weights: Array,
}

/// Pixel affinity attention: `A = softmax_keys(F'ᵀF')`, `out = F + γ·(F'Aᵀ)`
/// with `F'` the `c × hw` view of each item.
pub fn position_attention(f: &Var, gamma: &Var) -> (Var, PositionAttention) {
    let (n, c, h, w) = f.value().dims4();
    let flat = f.reshape(&[n, c, h * w]);
    let energy = flat.bmm(&flat, true, false);
    let attn = energy.softmax(2);
    let attended = flat.bmm(&attn, false, true).reshape(&[n, c, h, w]);
    let out = f.add(&attended.mul_scalar_var(gamma));
    let map = PositionAttention {
        height: h,
        width: w,
        weights: attn.value().clone(),
    };
    (out, map)
}

/// Channel affinity attention: `B = softmax_keys(F'F'ᵀ)`, `out = F + γ·(BF')`.
pub fn channel_attention(f: &Var, gamma: &Var) -> (Var, ChannelAttention) {
    let (n, c, h, w) = f.value().dims4();
    let flat = f.reshape(&[n, c, h * w]);
    let energy = flat.bmm(&flat, false, true);
    let attn = energy.softmax(2);
    let attended = attn.bmm(&flat, false, false).reshape(&[n, c, h, w]);
    let out = f.add(&attended.mul_scalar_var(gamma));
    (
        out,
        ChannelAttention {
            weights: attn.value().clone(),
        },
    )
}

/// The attention row of query pixel `(y, x)` of batch item `item`, as `h × w`.
pub fn query_attention_map(pa: &PositionAttention, item: usize, y: usize, x: usize) -> Result<Array> {
    let (h, w) = (pa.height, pa.width);
    if y >= h || x >= w {
        return Err(Error::OutOfBounds { y, x, h, w });
    }
    let hw = h * w;
    let row = (item * hw + y * w + x) * hw;
    Ok(Array::from_vec(&[h, w], pa.weights.data()[row..row + hw].to_vec()))
}

/// Position and channel attention branches fused by a 1×1 convolution.
#[derive(Clone, Debug)]
pub struct DualAttention {
    pub channels: usize,
    pub gamma_position: ParamId,
    pub gamma_channel: ParamId,
    pub fuse: Conv2d,
}

pub struct DualOutput {
    pub position: Var,
    pub channel: Var,
    pub fused: Var,
    pub position_map: PositionAttention,
    pub channel_map: ChannelAttention,
}

impl DualAttention {
    /// Both gates start at 0 and the fusion starts as the average of the two
    /// branches, so a fresh block is the identity.
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let gamma_position = store.add(format!("{name}.gamma_position"), Array::scalar(0.0));
        let gamma_channel = store.add(format!("{name}.gamma_channel"), Array::scalar(0.0));
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let fuse = Conv2d::new(
            store,
            &format!("{name}.fuse"),
            2 * channels,
            channels,
            1,
            1,
            0,
            true,
            Init::Zeros,
            &mut rng,
        );
        let c = channels;
        let avg = Array::from_fn(&[c, 2 * c, 1, 1], |i| {
            let (o, k) = (i / (2 * c), i % (2 * c));
            if k == o || k == o + c {
                0.5
            } else {
                0.0
            }
        });
        store.set(fuse.weight, avg);
        Self {
            channels,
            gamma_position,
            gamma_channel,
            fuse,
        }
    }

    pub fn forward(&self, p: &Bound, f: &Var) -> DualOutput {
        let (position, position_map) = position_attention(f, p.var(self.gamma_position));
        let (channel, channel_map) = channel_attention(f, p.var(self.gamma_channel));
        let fused = self.fuse.forward(p, &Var::concat(&[position.clone(), channel.clone()], 1));
        DualOutput {
            position,
            channel,
            fused,
            position_map,
            channel_map,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = vec![self.gamma_position, self.gamma_channel];
        v.extend(self.fuse.params());
        v
    }
}
