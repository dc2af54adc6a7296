use std::rc::Rc;

use crate::array::Array;
use crate::linalg::gemm;
use crate::var::Var;

/// Static geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        assert!(stride > 0, "stride must be positive");
        Self { stride, padding }
    }

    pub fn output_size(&self, input: usize, kernel: usize) -> usize {
        let padded = input + 2 * self.padding;
        assert!(
            padded >= kernel,
            "kernel {kernel} larger than padded input {padded}"
        );
        (padded - kernel) / self.stride + 1
    }
}

struct Dims {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Dims {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], d: &Dims, cols: &mut [f64]) {
    let p = d.oh * d.ow;
    for c in 0..d.cin {
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (c * d.kh + ky) * d.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..d.oh {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    let line = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                    if iy < 0 || iy >= d.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * d.h + iy as usize) * d.w..(c * d.h + iy as usize + 1) * d.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                        *v = if ix < 0 || ix >= d.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], d: &Dims, x: &mut [f64]) {
    let p = d.oh * d.ow;
    for c in 0..d.cin {
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (c * d.kh + ky) * d.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..d.oh {
                    let iy = (oy * d.stride + ky) as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let base = (c * d.h + iy as usize) * d.w;
                    for ox in 0..d.ow {
                        let ix = (ox * d.stride + kx) as isize - d.pad as isize;
                        if ix >= 0 && ix < d.w as isize {
                            x[base + ix as usize] += src[oy * d.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Var {
    /// 2-D cross-correlation. `self` is `N×Cin×H×W`, `weight` is
    /// `Cout×Cin×kh×kw`, optional `bias` is `Cout`.
    pub fn conv2d(&self, weight: &Var, bias: Option<&Var>, geom: Conv2dGeometry) -> Var {
        let x = self.shared_value();
        let w = weight.shared_value();
        let (n, cin, h, wd) = x.dims4();
        let (cout, wcin, kh, kw) = w.dims4();
        assert_eq!(
            cin, wcin,
            "conv2d channel mismatch: input has {cin}, weight expects {wcin}"
        );
        let d = Dims {
            cin,
            h,
            w: wd,
            kh,
            kw,
            oh: geom.output_size(h, kh),
            ow: geom.output_size(wd, kw),
            stride: geom.stride,
            pad: geom.padding,
        };
        let k = cin * kh * kw;
        let p = d.oh * d.ow;
        let pointwise = d.is_pointwise();
        let in_stride = cin * h * wd;

        let mut cols = if pointwise {
            Vec::new()
        } else {
            vec![0.0; n * k * p]
        };
        let mut out = vec![0.0; n * cout * p];
        if let Some(b) = bias {
            assert_eq!(b.shape(), &[cout], "conv2d bias shape");
            for i in 0..n {
                for (co, &bv) in b.value().data().iter().enumerate() {
                    out[(i * cout + co) * p..(i * cout + co + 1) * p].fill(bv);
                }
            }
        }
        for i in 0..n {
            let xi = &x.data()[i * in_stride..(i + 1) * in_stride];
            let col: &[f64] = if pointwise {
                xi
            } else {
                im2col(xi, &d, &mut cols[i * k * p..(i + 1) * k * p]);
                &cols[i * k * p..(i + 1) * k * p]
            };
            let beta = if bias.is_some() { 1.0 } else { 0.0 };
            gemm(false, false, cout, p, k, w.data(), col, beta, &mut out[i * cout * p..(i + 1) * cout * p]);
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        let has_bias = bias.is_some();
        let x_shape = x.shape().to_vec();
        let w_shape = w.shape().to_vec();
        let cols = Rc::new(cols);
        Var::from_op(
            Array::from_vec(&[n, cout, d.oh, d.ow], out),
            parents,
            Box::new(move |g| {
                let gd = g.data();
                let mut gw = vec![0.0; cout * k];
                let mut gx = vec![0.0; n * in_stride];
                let mut dcol = if pointwise { Vec::new() } else { vec![0.0; k * p] };
                for i in 0..n {
                    let gi = &gd[i * cout * p..(i + 1) * cout * p];
                    let col: &[f64] = if pointwise {
                        &x.data()[i * in_stride..(i + 1) * in_stride]
                    } else {
                        &cols[i * k * p..(i + 1) * k * p]
                    };
                    gemm(false, true, cout, k, p, gi, col, 1.0, &mut gw);
                    let gxi = &mut gx[i * in_stride..(i + 1) * in_stride];
                    if pointwise {
                        gemm(true, false, k, p, cout, w.data(), gi, 0.0, gxi);
                    } else {
                        gemm(true, false, k, p, cout, w.data(), gi, 0.0, &mut dcol);
                        col2im(&dcol, &d, gxi);
                    }
                }
                let mut grads = vec![
                    Some(Array::from_vec(&x_shape, gx)),
                    Some(Array::from_vec(&w_shape, gw)),
                ];
                if has_bias {
                    let mut gb = vec![0.0; cout];
                    for i in 0..n {
                        for (co, acc) in gb.iter_mut().enumerate() {
                            *acc += gd[(i * cout + co) * p..(i * cout + co + 1) * p]
                                .iter()
                                .sum::<f64>();
                        }
                    }
                    grads.push(Some(Array::from_vec(&[cout], gb)));
                }
                grads
            }),
        )
    }

    /// Group normalization over `N×C×H×W` with per-channel affine `gamma`,
    /// `beta` (shape `C`).
    pub fn group_norm(&self, groups: usize, gamma: &Var, beta: &Var, eps: f64) -> Var {
        let x = self.value();
        let (n, c, h, w) = x.dims4();
        assert!(groups > 0 && c % groups == 0, "channels {c} not divisible by {groups} groups");
        assert_eq!(gamma.shape(), &[c]);
        assert_eq!(beta.shape(), &[c]);
        let cg = c / groups;
        let hw = h * w;
        let m = cg * hw;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; n * groups];
        let mut out = vec![0.0; x.len()];
        let (gm, bt) = (gamma.value().data(), beta.value().data());
        for i in 0..n {
            for g in 0..groups {
                let base = (i * c + g * cg) * hw;
                let seg = &x.data()[base..base + m];
                let mean = seg.iter().sum::<f64>() / m as f64;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[i * groups + g] = is;
                for (j, &v) in seg.iter().enumerate() {
                    let xh = (v - mean) * is;
                    xhat[base + j] = xh;
                    let ch = g * cg + j / hw;
                    out[base + j] = gm[ch] * xh + bt[ch];
                }
            }
        }
        let gamma_v = gamma.shared_value();
        let shape = x.shape().to_vec();
        Var::from_op(
            Array::from_vec(&shape, out),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |gr| {
                let gd = gr.data();
                let gm = gamma_v.data();
                let mut gx = vec![0.0; gd.len()];
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for i in 0..n {
                    for g in 0..groups {
                        let base = (i * c + g * cg) * hw;
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for j in 0..m {
                            let ch = g * cg + j / hw;
                            let dy = gd[base + j];
                            let xh = xhat[base + j];
                            ggamma[ch] += dy * xh;
                            gbeta[ch] += dy;
                            let dxh = dy * gm[ch];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh;
                        }
                        let mean_dxh = sum_dxh / m as f64;
                        let mean_dxh_xh = sum_dxh_xh / m as f64;
                        let is = inv_std[i * groups + g];
                        for j in 0..m {
                            let ch = g * cg + j / hw;
                            let dxh = gd[base + j] * gm[ch];
                            gx[base + j] = is * (dxh - mean_dxh - xhat[base + j] * mean_dxh_xh);
                        }
                    }
                }
                vec![
                    Some(Array::from_vec(&shape, gx)),
                    Some(Array::from_vec(&[c], ggamma)),
                    Some(Array::from_vec(&[c], gbeta)),
                ]
            }),
        )
    }
}
