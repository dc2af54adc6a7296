//! Parameterised layers registered in a [`ParamStore`].

use panoda_tensor::{Array, Bound, Conv2dGeometry, ParamId, ParamStore, Var};
use rand::Rng;
use rand_distr::StandardNormal;

/// How the weights of a fresh layer are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// He-normal on fan-in, for layers followed by ReLU-like activations.
    Kaiming,
    /// Normal with a fixed standard deviation.
    Normal(f64),
    Zeros,
}

fn draw<R: Rng + ?Sized>(shape: &[usize], init: Init, fan_in: usize, rng: &mut R) -> Array {
    let std = match init {
        Init::Kaiming => (2.0 / fan_in as f64).sqrt(),
        Init::Normal(s) => s,
        Init::Zeros => return Array::zeros(shape),
    };
    Array::from_fn(shape, |_| std * rng.sample::<f64, _>(StandardNormal))
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub geom: Conv2dGeometry,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let shape = [cout, cin, kernel, kernel];
        let weight = store.add(format!("{name}.weight"), draw(&shape, init, cin * kernel * kernel, rng));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Array::zeros(&[cout])));
        Self {
            weight,
            bias,
            geom: Conv2dGeometry::new(stride, padding),
            in_channels: cin,
            out_channels: cout,
        }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        x.conv2d(p.var(self.weight), self.bias.map(|b| p.var(b)), self.geom)
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    /// Uses up to `max_groups` groups, reduced until it divides `channels`.
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, max_groups: usize) -> Self {
        let mut groups = max_groups.min(channels).max(1);
        while channels % groups != 0 {
            groups -= 1;
        }
        Self {
            gamma: store.add(format!("{name}.gamma"), Array::full(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), Array::zeros(&[channels])),
            groups,
        }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        x.group_norm(self.groups, p.var(self.gamma), p.var(self.beta), 1e-5)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }
}

/// 3×3 conv, group norm, ReLU.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub norm: GroupNorm,
}

impl ConvBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            conv: Conv2d::new(store, &format!("{name}.conv"), cin, cout, 3, stride, 1, false, Init::Kaiming, rng),
            norm: GroupNorm::new(store, &format!("{name}.norm"), cout, 8),
        }
    }

    pub fn forward(&self, p: &Bound, x: &Var) -> Var {
        self.norm.forward(p, &self.conv.forward(p, x)).relu()
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = self.conv.params();
        v.extend(self.norm.params());
        v
    }
}
