use crate::array::Array;
use crate::var::Var;

/// Source taps for one output coordinate under half-pixel-centre sampling.
#[derive(Clone, Copy, Debug)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f64,
            }
        })
        .collect()
}

/// Bilinear resize of the two trailing axes (half-pixel centres, no corner
/// alignment). Works for any rank >= 2.
pub fn resize_bilinear(x: &Array, oh: usize, ow: usize) -> Array {
    let r = x.ndim();
    assert!(r >= 2, "resize needs rank >= 2");
    let (h, w) = (x.shape()[r - 2], x.shape()[r - 1]);
    assert!(h > 0 && w > 0 && oh > 0 && ow > 0, "empty resize");
    let planes = x.len() / (h * w);
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, t) in ty.iter().enumerate() {
            let r0 = &src[t.i0 * w..(t.i0 + 1) * w];
            let r1 = &src[t.i1 * w..(t.i1 + 1) * w];
            for (ox, s) in tx.iter().enumerate() {
                let top = r0[s.i0] + (r0[s.i1] - r0[s.i0]) * s.frac;
                let bot = r1[s.i0] + (r1[s.i1] - r1[s.i0]) * s.frac;
                dst[oy * ow + ox] = top + (bot - top) * t.frac;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[r - 2] = oh;
    shape[r - 1] = ow;
    Array::from_vec(&shape, out)
}

fn resize_bilinear_backward(g: &Array, in_shape: &[usize]) -> Array {
    let r = in_shape.len();
    let (h, w) = (in_shape[r - 2], in_shape[r - 1]);
    let (oh, ow) = (g.shape()[r - 2], g.shape()[r - 1]);
    let planes = g.len() / (oh * ow);
    let ty = taps(h, oh);
    let tx = taps(w, ow);
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        let gs = &g.data()[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for (oy, t) in ty.iter().enumerate() {
            for (ox, s) in tx.iter().enumerate() {
                let v = gs[oy * ow + ox];
                let top = v * (1.0 - t.frac);
                let bot = v * t.frac;
                dst[t.i0 * w + s.i0] += top * (1.0 - s.frac);
                dst[t.i0 * w + s.i1] += top * s.frac;
                dst[t.i1 * w + s.i0] += bot * (1.0 - s.frac);
                dst[t.i1 * w + s.i1] += bot * s.frac;
            }
        }
    }
    Array::from_vec(in_shape, out)
}

/// Nearest-neighbour resize of a row-major `h×w` grid (half-pixel centres).
pub fn resize_nearest<T: Copy>(src: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w);
    let pick = |o: usize, out: usize, inp: usize| {
        (((o as f64 + 0.5) * inp as f64 / out as f64).floor() as usize).min(inp - 1)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        let iy = pick(oy, oh, h);
        for ox in 0..ow {
            out.push(src[iy * w + pick(ox, ow, w)]);
        }
    }
    out
}

impl Var {
    /// Differentiable bilinear resize of the trailing two axes.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Var {
        let in_shape = self.shape().to_vec();
        let r = in_shape.len();
        if in_shape[r - 2] == oh && in_shape[r - 1] == ow {
            return self.clone();
        }
        Var::from_op(
            resize_bilinear(self.value(), oh, ow),
            vec![self.clone()],
            Box::new(move |g| vec![Some(resize_bilinear_backward(g, &in_shape))]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_is_preserved() {
        let x = Array::full(&[1, 2, 3, 5], 0.75);
        let y = resize_bilinear(&x, 12, 20);
        assert!(y.data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
    }

    #[test]
    fn nearest_identity_and_doubling() {
        let src: Vec<u8> = (0..6).collect();
        assert_eq!(resize_nearest(&src, 2, 3, 2, 3), src);
        let up = resize_nearest(&src, 2, 3, 4, 6);
        assert_eq!(&up[..6], &[0, 0, 1, 1, 2, 2]);
        assert_eq!(&up[18..], &[3, 3, 4, 4, 5, 5]);
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let x = Array::from_fn(&[1, 1, 3, 4], |i| (i as f64).cos());
        let g = Array::from_fn(&[1, 1, 7, 9], |i| (i as f64 * 0.3).sin());
        let y = resize_bilinear(&x, 7, 9);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let gx = resize_bilinear_backward(&g, x.shape());
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
