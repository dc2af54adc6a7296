//! Differentiable operations on [`Var`].

use std::rc::Rc;

use crate::array::Array;
use crate::linalg::gemm;
use crate::var::Var;

fn unary(x: &Var, value: Array, local: impl Fn(&Array) -> Array + 'static) -> Var {
    Var::from_op(value, vec![x.clone()], Box::new(move |g| vec![Some(local(g))]))
}

impl Var {
    pub fn add(&self, other: &Var) -> Var {
        let value = self.value().zip_map(other.value(), |a, b| a + b);
        Var::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g| vec![Some(g.clone()), Some(g.clone())]),
        )
    }

    pub fn sub(&self, other: &Var) -> Var {
        let value = self.value().zip_map(other.value(), |a, b| a - b);
        Var::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g| vec![Some(g.clone()), Some(g.scale(-1.0))]),
        )
    }

    pub fn mul(&self, other: &Var) -> Var {
        let a = self.shared_value();
        let b = other.shared_value();
        let value = a.zip_map(&b, |x, y| x * y);
        Var::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                vec![
                    Some(g.zip_map(&b, |gv, y| gv * y)),
                    Some(g.zip_map(&a, |gv, x| gv * x)),
                ]
            }),
        )
    }

    pub fn scale(&self, s: f64) -> Var {
        unary(self, self.value().scale(s), move |g| g.scale(s))
    }

    pub fn add_scalar(&self, s: f64) -> Var {
        unary(self, self.value().map(|v| v + s), |g| g.clone())
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    /// `self * s` where `s` holds a single (possibly learnable) value.
    pub fn mul_scalar_var(&self, s: &Var) -> Var {
        assert_eq!(s.value().len(), 1, "mul_scalar_var needs a one-element scale");
        let x = self.shared_value();
        let sv = s.item();
        let s_shape = s.shape().to_vec();
        Var::from_op(
            x.scale(sv),
            vec![self.clone(), s.clone()],
            Box::new(move |g| {
                let ds: f64 = g.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
                vec![Some(g.scale(sv)), Some(Array::from_vec(&s_shape, vec![ds]))]
            }),
        )
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        let x = self.shared_value();
        let value = x.map(|v| if v > 0.0 { v } else { slope * v });
        unary(self, value, move |g| {
            g.zip_map(&x, |gv, v| if v > 0.0 { gv } else { slope * gv })
        })
    }

    pub fn sigmoid(&self) -> Var {
        let y = Rc::new(self.value().map(stable_sigmoid));
        let yc = Rc::clone(&y);
        unary(self, (*y).clone(), move |g| {
            g.zip_map(&yc, |gv, s| gv * s * (1.0 - s))
        })
    }

    pub fn exp(&self) -> Var {
        let y = Rc::new(self.value().map(f64::exp));
        let yc = Rc::clone(&y);
        unary(self, (*y).clone(), move |g| g.zip_map(&yc, |gv, e| gv * e))
    }

    pub fn ln(&self) -> Var {
        let x = self.shared_value();
        unary(self, x.map(f64::ln), move |g| g.zip_map(&x, |gv, v| gv / v))
    }

    pub fn square(&self) -> Var {
        let x = self.shared_value();
        unary(self, x.map(|v| v * v), move |g| {
            g.zip_map(&x, |gv, v| 2.0 * gv * v)
        })
    }

    pub fn sum(&self) -> Var {
        let shape = self.shape().to_vec();
        unary(self, Array::scalar(self.value().sum()), move |g| {
            Array::full(&shape, g.item())
        })
    }

    pub fn mean(&self) -> Var {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let old = self.shape().to_vec();
        unary(self, self.value().clone().reshape(shape), move |g| {
            g.clone().reshape(&old)
        })
    }

    pub fn transpose_last2(&self) -> Var {
        unary(self, self.value().transpose_last2(), |g| g.transpose_last2())
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let shape = self.shape().to_vec();
        unary(self, self.value().narrow(axis, start, len), move |g| {
            let (outer, alen, inner) = Array::zeros(&shape).axis_split(axis);
            let mut out = vec![0.0; outer * alen * inner];
            for o in 0..outer {
                let dst = (o * alen + start) * inner;
                let src = o * len * inner;
                out[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            Array::from_vec(&shape, out)
        })
    }

    /// Concatenates along `axis`.
    pub fn concat(parts: &[Var], axis: usize) -> Var {
        let values: Vec<&Array> = parts.iter().map(|p| p.value()).collect();
        let value = Array::concat(&values, axis);
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        Var::from_op(
            value,
            parts.to_vec(),
            Box::new(move |g| {
                let mut start = 0;
                sizes
                    .iter()
                    .map(|&len| {
                        let piece = g.narrow(axis, start, len);
                        start += len;
                        Some(piece)
                    })
                    .collect()
            }),
        )
    }

    /// Softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Var {
        let y = Rc::new(self.value().softmax_axis(axis));
        let yc = Rc::clone(&y);
        unary(self, (*y).clone(), move |g| {
            let (outer, alen, inner) = yc.axis_split(axis);
            let (yd, gd) = (yc.data(), g.data());
            let mut out = vec![0.0; yd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |a: usize| (o * alen + a) * inner + i;
                    let dot: f64 = (0..alen).map(|a| yd[idx(a)] * gd[idx(a)]).sum();
                    for a in 0..alen {
                        out[idx(a)] = yd[idx(a)] * (gd[idx(a)] - dot);
                    }
                }
            }
            Array::from_vec(yc.shape(), out)
        })
    }

    /// Batched matrix product `op(self) · op(other)` over rank-3 operands.
    pub fn bmm(&self, other: &Var, ta: bool, tb: bool) -> Var {
        let a = self.shared_value();
        let b = other.shared_value();
        let (ba, a0, a1) = a.dims3();
        let (bb, b0, b1) = b.dims3();
        assert_eq!(ba, bb, "bmm batch mismatch");
        let (m, ka) = if ta { (a1, a0) } else { (a0, a1) };
        let (kb, n) = if tb { (b1, b0) } else { (b0, b1) };
        assert_eq!(ka, kb, "bmm inner dimension mismatch: {:?} x {:?}", a.shape(), b.shape());
        let k = ka;
        let mut out = vec![0.0; ba * m * n];
        for i in 0..ba {
            gemm(
                ta,
                tb,
                m,
                n,
                k,
                &a.data()[i * m * k..(i + 1) * m * k],
                &b.data()[i * k * n..(i + 1) * k * n],
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let a_shape = a.shape().to_vec();
        let b_shape = b.shape().to_vec();
        Var::from_op(
            Array::from_vec(&[ba, m, n], out),
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let gd = g.data();
                let mut ga = vec![0.0; a.len()];
                let mut gb = vec![0.0; b.len()];
                for i in 0..ba {
                    let gi = &gd[i * m * n..(i + 1) * m * n];
                    let ai = &a.data()[i * m * k..(i + 1) * m * k];
                    let bi = &b.data()[i * k * n..(i + 1) * k * n];
                    // d op(A) = G · op(B)^T  (m×k); stored transposed when ta.
                    if ta {
                        gemm(tb, true, k, m, n, bi, gi, 0.0, &mut ga[i * m * k..(i + 1) * m * k]);
                    } else {
                        gemm(false, !tb, m, k, n, gi, bi, 0.0, &mut ga[i * m * k..(i + 1) * m * k]);
                    }
                    // d op(B) = op(A)^T · G  (k×n); stored transposed when tb.
                    if tb {
                        gemm(true, ta, n, k, m, gi, ai, 0.0, &mut gb[i * k * n..(i + 1) * k * n]);
                    } else {
                        gemm(!ta, false, k, n, m, ai, gi, 0.0, &mut gb[i * k * n..(i + 1) * k * n]);
                    }
                }
                vec![
                    Some(Array::from_vec(&a_shape, ga)),
                    Some(Array::from_vec(&b_shape, gb)),
                ]
            }),
        )
    }
}

/// Logistic function evaluated without overflow for large |x|.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
