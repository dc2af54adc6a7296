use panoda_tensor::{Array, Var};
use serde::{Deserialize, Serialize};

use crate::datapipe::{LabelMap, SampleRecord, IGNORE};
use crate::error::{Error, Result};
use crate::segnet::{images_to_array, SegNet};

/// Per-pixel disagreement of the two semantic heads.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMap {
    pub height: usize,
    pub width: usize,
    pub variance: Vec<f64>,
}

/// Pseudo labels and uncertainty from the logits of both heads of one item
/// (`K×H×W` each): label = argmax of the mean probability, uncertainty =
/// mean over classes of the squared probability difference.
pub fn generate_pseudo_labels(c1: &Array, c2: &Array) -> Result<(LabelMap, UncertaintyMap)> {
    if c1.shape() != c2.shape() || c1.ndim() != 3 {
        return Err(Error::Shape(format!(
            "head logits {:?} and {:?} must be equal K×H×W",
            c1.shape(),
            c2.shape()
        )));
    }
    let (k, h, w) = c1.dims3();
    let p1 = c1.softmax_axis(0);
    let p2 = c2.softmax_axis(0);
    let mean = p1.zip_map(&p2, |a, b| 0.5 * (a + b));
    let labels = mean.argmax_axis(0).into_iter().map(|c| c as u8).collect();
    let hw = h * w;
    let (d1, d2) = (p1.data(), p2.data());
    let variance = (0..hw)
        .map(|p| (0..k).map(|c| (d1[c * hw + p] - d2[c * hw + p]).powi(2)).sum::<f64>() / k as f64)
        .collect();
    Ok((
        LabelMap {
            height: h,
            width: w,
            data: labels,
        },
        UncertaintyMap {
            height: h,
            width: w,
            variance,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GatePolicy {
    /// Per-image threshold at the `q`-quantile of the variance map.
    Quantile { q: f64 },
    /// Fixed variance threshold.
    Threshold { tau: f64 },
}

impl Default for GatePolicy {
    fn default() -> Self {
        GatePolicy::Quantile { q: 0.7 }
    }
}

/// Lower `q`-quantile: the smallest value with at least `ceil(q·n)` values
/// at or below it (the minimum for `q = 0`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q.clamp(0.0, 1.0) * v.len() as f64).ceil() as usize).max(1) - 1;
    v[idx]
}

/// Keeps pseudo labels whose variance is at most the policy threshold and
/// sets the rest to ignore.
pub fn uncertainty_gate(pseudo: &LabelMap, u: &UncertaintyMap, policy: GatePolicy) -> Result<LabelMap> {
    if (pseudo.height, pseudo.width) != (u.height, u.width) {
        return Err(Error::Shape(format!(
            "pseudo labels {}x{} vs uncertainty {}x{}",
            pseudo.height, pseudo.width, u.height, u.width
        )));
    }
    if u.variance.is_empty() {
        return Ok(pseudo.clone());
    }
    let tau = match policy {
        GatePolicy::Quantile { q } => quantile(&u.variance, q),
        GatePolicy::Threshold { tau } => tau,
    };
    let data = pseudo
        .data
        .iter()
        .zip(&u.variance)
        .map(|(&l, &v)| if v <= tau { l } else { IGNORE })
        .collect();
    Ok(LabelMap {
        data,
        ..pseudo.clone()
    })
}

/// Gated pseudo labels for target records, computed offline with a frozen
/// network. Returns labelled copies and the kept pixel fraction.
pub fn pseudo_label_records(net: &SegNet, records: &[SampleRecord], batch: usize, policy: GatePolicy) -> Result<(Vec<SampleRecord>, f64)> {
    let p = net.store.bind(false);
    let mut out = Vec::with_capacity(records.len());
    let (mut kept, mut total) = (0usize, 0usize);
    for chunk in records.chunks(batch.max(1)) {
        let images = images_to_array(&chunk.iter().map(|r| &r.image).collect::<Vec<_>>())?;
        let o = net.forward(&p, &Var::constant(images))?;
        let (c1, c2) = (o.heads.c1.value(), o.heads.c2.value());
        let (_, k, h, w) = c1.dims4();
        for (b, rec) in chunk.iter().enumerate() {
            let item = |a: &Array| a.narrow(0, b, 1).reshape(&[k, h, w]);
            let (pseudo, u) = generate_pseudo_labels(&item(c1), &item(c2))?;
            let gated = uncertainty_gate(&pseudo, &u, policy)?;
            kept += gated.data.iter().filter(|&&l| l != IGNORE).count();
            total += gated.data.len();
            out.push(SampleRecord {
                label: Some(gated),
                ..rec.clone()
            });
        }
    }
    Ok((out, if total == 0 { 0.0 } else { kept as f64 / total as f64 }))
}
