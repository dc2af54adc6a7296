//! Scalar losses as differentiable graph ops.

use panoda_tensor::{softplus, stable_sigmoid, Array, Var};

use crate::datapipe::IGNORE;
use crate::error::{Error, Result};

/// Class-weighted pixel cross-entropy over `N×K×H×W` logits, normalised by
/// the sum of applied weights. Pixels labelled 255 are skipped.
pub fn weighted_cross_entropy(logits: &Var, labels: &[u8], weights: &[f64]) -> Result<Var> {
    let (n, k, h, w) = logits.value().dims4();
    let hw = h * w;
    if labels.len() != n * hw {
        return Err(Error::Shape(format!(
            "{} labels for logits {:?}",
            labels.len(),
            logits.shape()
        )));
    }
    if weights.len() != k {
        return Err(Error::Shape(format!("{} class weights for {k} classes", weights.len())));
    }
    let x = logits.shared_value();
    let xd = x.data();
    let mut probs = vec![0.0; xd.len()];
    let mut total = 0.0;
    let mut wsum = 0.0;
    for b in 0..n {
        for p in 0..hw {
            let at = |c: usize| (b * k + c) * hw + p;
            let m = (0..k).map(|c| xd[at(c)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..k).map(|c| (xd[at(c)] - m).exp()).sum();
            for c in 0..k {
                probs[at(c)] = (xd[at(c)] - m).exp() / z;
            }
            let y = labels[b * hw + p];
            if y == IGNORE {
                continue;
            }
            let y = y as usize;
            if y >= k {
                return Err(Error::UnmappedLabels { ids: vec![y as u8] });
            }
            let lse = m + z.ln();
            total += weights[y] * (lse - xd[at(y)]);
            wsum += weights[y];
        }
    }
    if wsum <= 0.0 {
        return Err(Error::NoCountablePixels);
    }
    let labels = labels.to_vec();
    let weights = weights.to_vec();
    let shape = x.shape().to_vec();
    Ok(Var::from_op(
        Array::scalar(total / wsum),
        vec![logits.clone()],
        Box::new(move |g| {
            let s = g.item() / wsum;
            let mut out = vec![0.0; probs.len()];
            for b in 0..n {
                for p in 0..hw {
                    let y = labels[b * hw + p];
                    if y == IGNORE {
                        continue;
                    }
                    let wy = weights[y as usize] * s;
                    for c in 0..k {
                        let i = (b * k + c) * hw + p;
                        out[i] = wy * (probs[i] - if c == y as usize { 1.0 } else { 0.0 });
                    }
                }
            }
            vec![Some(Array::from_vec(&shape, out))]
        }),
    ))
}

/// Mean binary cross-entropy of logits against a constant target, in the
/// overflow-free form `softplus(x) - t·x`.
pub fn bce_with_logits(x: &Var, target: f64) -> Var {
    let v = x.shared_value();
    let n = v.len() as f64;
    let loss = v.data().iter().map(|&z| softplus(z) - target * z).sum::<f64>() / n;
    Var::from_op(
        Array::scalar(loss),
        vec![x.clone()],
        Box::new(move |g| {
            let s = g.item() / n;
            vec![Some(v.map(|z| s * (stable_sigmoid(z) - target)))]
        }),
    )
}

/// Boundary targets: a pixel is boundary when a 4-neighbour carries a
/// different valid class. Ignore pixels stay ignore.
pub fn boundary_targets(labels: &[u8], n: usize, h: usize, w: usize) -> Vec<u8> {
    let mut out = vec![IGNORE; labels.len()];
    for b in 0..n {
        let l = &labels[b * h * w..(b + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = l[y * w + x];
                if v == IGNORE {
                    continue;
                }
                let differs = |yy: usize, xx: usize| {
                    let u = l[yy * w + xx];
                    u != IGNORE && u != v
                };
                let edge = (y > 0 && differs(y - 1, x))
                    || (y + 1 < h && differs(y + 1, x))
                    || (x > 0 && differs(y, x - 1))
                    || (x + 1 < w && differs(y, x + 1));
                out[b * h * w + y * w + x] = edge as u8;
            }
        }
    }
    out
}

/// Class-balanced BCE for the boundary head: positives weighted by the
/// negative fraction and vice versa, averaged over valid pixels.
pub fn boundary_bce(logits: &Var, targets: &[u8]) -> Result<Var> {
    let v = logits.shared_value();
    if v.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} boundary targets for logits {:?}",
            targets.len(),
            v.shape()
        )));
    }
    let pos = targets.iter().filter(|&&t| t == 1).count() as f64;
    let neg = targets.iter().filter(|&&t| t == 0).count() as f64;
    let valid = pos + neg;
    if valid == 0.0 {
        return Err(Error::NoCountablePixels);
    }
    let (wp, wn) = (neg / valid, pos / valid);
    let weight: Vec<f64> = targets
        .iter()
        .map(|&t| match t {
            1 => wp,
            0 => wn,
            _ => 0.0,
        })
        .collect();
    let tgt: Vec<f64> = targets.iter().map(|&t| (t == 1) as u8 as f64).collect();
    let loss = v
        .data()
        .iter()
        .zip(&weight)
        .zip(&tgt)
        .map(|((&z, &wt), &t)| wt * (softplus(z) - t * z))
        .sum::<f64>()
        / valid;
    Ok(Var::from_op(
        Array::scalar(loss),
        vec![logits.clone()],
        Box::new(move |g| {
            let s = g.item() / valid;
            let d = v
                .data()
                .iter()
                .zip(&weight)
                .zip(&tgt)
                .map(|((&z, &wt), &t)| s * wt * (stable_sigmoid(z) - t))
                .collect();
            vec![Some(Array::from_vec(v.shape(), d))]
        }),
    ))
}

/// One-sided sigmoid entropy `Σ −σ(x)·ln σ(x)` over each item, averaged over
/// the batch (first axis).
pub fn sigmoid_entropy(x: &Var) -> Var {
    let v = x.shared_value();
    let n = v.shape().first().copied().unwrap_or(1).max(1) as f64;
    // −σ ln σ = σ · softplus(−x)
    let loss = v.data().iter().map(|&z| stable_sigmoid(z) * softplus(-z)).sum::<f64>() / n;
    Var::from_op(
        Array::scalar(loss),
        vec![x.clone()],
        Box::new(move |g| {
            let s = g.item() / n;
            vec![Some(v.map(|z| {
                let sg = stable_sigmoid(z);
                let ln_s = -softplus(-z);
                -s * sg * (1.0 - sg) * (ln_s + 1.0)
            }))]
        }),
    )
}
