use serde::{Deserialize, Serialize};

use crate::datapipe::{ClassMap, IGNORE, NUM_CLASSES};
use crate::error::{Error, Result};

/// Rows are ground truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    /// Counts every pixel whose ground truth is not ignore. Predictions
    /// outside the class range are rejected.
    pub fn update(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::Shape(format!(
                "prediction has {} pixels, ground truth {}",
                pred.len(),
                gt.len()
            )));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if g == IGNORE {
                continue;
            }
            if g as usize >= NUM_CLASSES || p as usize >= NUM_CLASSES {
                return Err(Error::UnmappedLabels {
                    ids: vec![if g as usize >= NUM_CLASSES { g } else { p }],
                });
            }
            self.counts[g as usize][p as usize] += 1;
        }
        Ok(())
    }
}

/// Adds one `pred`/`gt` pair to `cm`.
pub fn confusion_update(mut cm: ConfusionMatrix, pred: &[u8], gt: &[u8]) -> Result<ConfusionMatrix> {
    cm.update(pred, gt)?;
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// `None` where the class is absent from both ground truth and prediction.
    pub per_class_iou: Vec<Option<f64>>,
    /// Recall per class; `None` where the class is absent from ground truth.
    pub per_class_acc: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_acc: f64,
}

impl IouReport {
    pub fn miou_percent(&self) -> f64 {
        self.miou * 100.0
    }
}

pub fn iou_report(cm: &ConfusionMatrix) -> Result<IouReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusion);
    }
    let n = cm.counts.len();
    let mut per_class_iou = vec![None; n];
    let mut per_class_acc = vec![None; n];
    let mut trace = 0;
    for c in 0..n {
        let tp = cm.counts[c][c];
        let row: u64 = cm.counts[c].iter().sum();
        let col: u64 = cm.counts.iter().map(|r| r[c]).sum();
        trace += tp;
        let union = row + col - tp;
        if union > 0 {
            per_class_iou[c] = Some(tp as f64 / union as f64);
        }
        if row > 0 {
            per_class_acc[c] = Some(tp as f64 / row as f64);
        }
    }
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    Ok(IouReport {
        miou: present.iter().sum::<f64>() / present.len() as f64,
        pixel_acc: trace as f64 / total as f64,
        per_class_iou,
        per_class_acc,
    })
}

/// `tgt − src` in points, computed on hundredths so two-decimal inputs give
/// exact two-decimal gaps.
pub fn miou_gap(src_score: f64, tgt_score: f64) -> f64 {
    ((tgt_score * 100.0).round() - (src_score * 100.0).round()) / 100.0
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{:.2}", x * 100.0))
}

/// Aligned text table: one row per report, mIoU first, then the 19 classes.
pub fn format_iou_table(rows: &[(String, IouReport)]) -> String {
    let mut header = vec!["method".to_string(), "mIoU".to_string()];
    header.extend((0..NUM_CLASSES).map(|c| ClassMap::name(c as u8).unwrap().to_string()));
    let mut table = vec![header];
    for (name, r) in rows {
        let mut row = vec![name.clone(), format!("{:.2}", r.miou * 100.0)];
        row.extend(r.per_class_iou.iter().map(|v| fmt_cell(*v)));
        table.push(row);
    }
    align(&table)
}

/// Aligned table of `(method, source score, target score, gap)`.
pub fn format_gap_table(rows: &[(String, f64, f64)]) -> String {
    let mut table = vec![vec![
        "method".to_string(),
        "source mIoU".to_string(),
        "target mIoU".to_string(),
        "mIoU gap".to_string(),
    ]];
    for (name, s, t) in rows {
        table.push(vec![name.clone(), format!("{s:.2}"), format!("{t:.2}"), format!("{:.2}", miou_gap(*s, *t))]);
    }
    align(&table)
}

pub(crate) fn align(table: &[Vec<String>]) -> String {
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in table {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[i]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_diagonal() {
        let gt = [0, 1, 1, 13, 255];
        let cm = confusion_update(ConfusionMatrix::default(), &gt, &gt).unwrap();
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.counts[1][1], 2);
        let r = iou_report(&cm).unwrap();
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.per_class_iou[2], None);
    }

    #[test]
    fn hand_computed_two_class_case() {
        let gt = [0u8; 8];
        let pred = [0, 0, 0, 0, 1, 1, 1, 1];
        let cm = confusion_update(ConfusionMatrix::default(), &pred, &gt).unwrap();
        let r = iou_report(&cm).unwrap();
        assert_eq!(r.per_class_iou[0], Some(0.5));
        assert_eq!(r.per_class_iou[1], Some(0.0));
        assert_eq!(r.miou, 0.25);
        assert_eq!(r.pixel_acc, 0.5);
    }

    #[test]
    fn all_ignore_leaves_matrix_unchanged() {
        let cm = confusion_update(ConfusionMatrix::default(), &[3, 4], &[255, 255]).unwrap();
        assert_eq!(cm, ConfusionMatrix::default());
        assert!(matches!(iou_report(&cm), Err(Error::EmptyConfusion)));
        assert!(ConfusionMatrix::default().update(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn gaps_on_hundredths() {
        assert_eq!(miou_gap(79.3, 28.5), -50.8);
        assert_eq!(miou_gap(79.3, 42.0), -37.3);
        assert_eq!(miou_gap(55.5, 55.5), 0.0);
        let t = format_gap_table(&[("DANet".into(), 79.3, 28.5)]);
        assert!(t.contains("-50.80"), "{t}");
    }
}
