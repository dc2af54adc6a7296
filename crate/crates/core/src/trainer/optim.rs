use panoda_tensor::{Array, ParamStore};

use crate::error::{Error, Result};

/// `base · (1 − iter/max)^power`.
pub fn poly_lr(base: f64, iter: usize, max_iter: usize, power: f64) -> Result<f64> {
    if max_iter == 0 || iter > max_iter {
        return Err(Error::IterOutOfRange { iter, max_iter });
    }
    Ok(base * (1.0 - iter as f64 / max_iter as f64).powf(power))
}

/// SGD with momentum and L2 weight decay folded into the gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub buffers: Vec<Option<Array>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64, params: usize) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: vec![None; params],
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array], lr: f64) {
        assert_eq!(grads.len(), self.buffers.len(), "gradient count");
        for ((id, g), buf) in store.ids().collect::<Vec<_>>().into_iter().zip(grads).zip(&mut self.buffers) {
            let p = store.get_mut(id);
            let d = g.zip_map(p, |g, p| g + self.weight_decay * p);
            let b = match buf.take() {
                Some(b) if self.momentum != 0.0 => b.zip_map(&d, |b, d| self.momentum * b + d),
                _ => d,
            };
            for (pv, bv) in p.data_mut().iter_mut().zip(b.data()) {
                *pv -= lr * bv;
            }
            *buf = Some(b);
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Array>,
    pub v: Vec<Array>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, store: &ParamStore) -> Self {
        let zeros: Vec<Array> = store.iter().map(|(_, a)| Array::zeros(a.shape())).collect();
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Array], lr: f64) {
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_endpoints() {
        assert_eq!(poly_lr(0.01, 0, 100, 0.9).unwrap(), 0.01);
        assert_eq!(poly_lr(0.01, 100, 100, 0.9).unwrap(), 0.0);
        assert!(poly_lr(0.01, 101, 100, 0.9).is_err());
    }

    #[test]
    fn sgd_matches_hand_unrolled_momentum() {
        let mut s = ParamStore::new();
        s.add("w", Array::from_vec(&[1], vec![1.0]));
        let mut opt = Sgd::new(0.9, 0.1, 1);
        let g = Array::from_vec(&[1], vec![0.5]);
        opt.step(&mut s, &[g.clone()], 0.1);
        // d = 0.5 + 0.1 = 0.6, p = 1 - 0.06
        let p1 = 1.0 - 0.1 * 0.6;
        assert!((s.iter().next().unwrap().1.data()[0] - p1).abs() < 1e-15);
        opt.step(&mut s, &[g], 0.1);
        let d2 = 0.5 + 0.1 * p1;
        let b2 = 0.9 * 0.6 + d2;
        assert!((s.iter().next().unwrap().1.data()[0] - (p1 - 0.1 * b2)).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = ParamStore::new();
        s.add("w", Array::from_vec(&[2], vec![0.0, 0.0]));
        let mut opt = Adam::new(0.9, 0.99, &s);
        opt.step(&mut s, &[Array::from_vec(&[2], vec![3.0, -0.2])], 1e-3);
        let p = s.iter().next().unwrap().1.data().to_vec();
        assert!((p[0] + 1e-3).abs() < 1e-9 && (p[1] - 1e-3).abs() < 1e-9);
    }
}
