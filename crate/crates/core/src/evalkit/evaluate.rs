use panoda_tensor::{Array, Var};
use serde::{Deserialize, Serialize};

use super::directional::{directional_report, DirectionalReport};
use super::metrics::{iou_report, ConfusionMatrix, IouReport};
use crate::datapipe::{LabelMap, SampleRecord};
use crate::error::{Error, Result};
use crate::segnet::{images_to_array, SegNet};

/// Which output is turned into the prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalHead {
    #[default]
    C1,
    C2,
    /// Argmax of the mean of both semantic heads' probabilities.
    Mean,
    /// Region classifier (needs a region head).
    Region,
}

/// Inference logits `N×K×H×W` of the chosen head for one batch.
pub fn predict_logits(net: &SegNet, images: &Array, head: EvalHead, region_interaction: bool) -> Result<Array> {
    let p = net.store.bind(false);
    let out = net.forward(&p, &Var::constant(images.clone()))?;
    Ok(match head {
        EvalHead::C1 => out.heads.c1.value().clone(),
        EvalHead::C2 => out.heads.c2.value().clone(),
        EvalHead::Mean => {
            let a = out.heads.c1.value().softmax_axis(1);
            let b = out.heads.c2.value().softmax_axis(1);
            a.zip_map(&b, |x, y| 0.5 * (x + y))
        }
        EvalHead::Region => {
            let (_, _, h, w) = images.dims4();
            net.region_forward(&p, &out, region_interaction, h, w)?.logits.value().clone()
        }
    })
}

/// Argmax predictions for every record, in order, `batch` images at a time.
pub fn predict_labels(net: &SegNet, records: &[SampleRecord], head: EvalHead, region_interaction: bool, batch: usize) -> Result<Vec<LabelMap>> {
    let mut preds = Vec::with_capacity(records.len());
    for chunk in records.chunks(batch.max(1)) {
        let images = images_to_array(&chunk.iter().map(|r| &r.image).collect::<Vec<_>>())?;
        let logits = predict_logits(net, &images, head, region_interaction)?;
        let (n, _, h, w) = logits.dims4();
        let am = logits.argmax_axis(1);
        for b in 0..n {
            preds.push(LabelMap {
                height: h,
                width: w,
                data: am[b * h * w..(b + 1) * h * w].iter().map(|&c| c as u8).collect(),
            });
        }
    }
    Ok(preds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEvaluation {
    pub images: usize,
    pub confusion: ConfusionMatrix,
    pub report: IouReport,
    pub directional: Option<DirectionalReport>,
}

/// Scores a labelled split. `sectors` adds the azimuth breakdown.
pub fn evaluate_records(
    net: &SegNet,
    records: &[SampleRecord],
    head: EvalHead,
    region_interaction: bool,
    batch: usize,
    sectors: Option<usize>,
) -> Result<SplitEvaluation> {
    let gts: Vec<LabelMap> = records
        .iter()
        .map(|r| r.label.clone().ok_or_else(|| Error::Shape(format!("evaluation sample {} has no label", r.id))))
        .collect::<Result<_>>()?;
    let preds = predict_labels(net, records, head, region_interaction, batch)?;
    let mut cm = ConfusionMatrix::default();
    for (p, g) in preds.iter().zip(&gts) {
        cm.update(&p.data, &g.data)?;
    }
    let directional = sectors.map(|s| directional_report(&preds, &gts, s)).transpose()?;
    Ok(SplitEvaluation {
        images: records.len(),
        report: iou_report(&cm)?,
        confusion: cm,
        directional,
    })
}
