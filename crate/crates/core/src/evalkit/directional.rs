use serde::{Deserialize, Serialize};

use super::metrics::{align, iou_report, ConfusionMatrix, IouReport};
use crate::datapipe::{ClassMap, LabelMap};
use crate::error::{Error, Result};

/// Sector of column `x` in an equirectangular image of width `w`. Sector 0 is
/// centred on the image centre (the forward direction) and indices grow with
/// azimuth; columns left over by an uneven split go to the last sector.
pub fn sector_of_column(x: usize, w: usize, sectors: usize) -> usize {
    let band = (w / sectors).max(1);
    let start0 = (w / 2).saturating_sub(band / 2);
    let shifted = (x + w - start0) % w;
    (shifted / band).min(sectors - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub index: usize,
    /// Azimuth of the sector centre relative to forward, in degrees.
    pub center_deg: f64,
    pub pixels: u64,
    pub confusion: ConfusionMatrix,
    /// Absent when the sector holds no labelled pixel.
    pub report: Option<IouReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalReport {
    pub sectors: Vec<SectorReport>,
}

impl DirectionalReport {
    pub fn global(&self) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for s in &self.sectors {
            cm.merge(&s.confusion);
        }
        cm
    }

    pub fn sector_miou(&self) -> Vec<Option<f64>> {
        self.sectors.iter().map(|s| s.report.as_ref().map(|r| r.miou)).collect()
    }

    /// Per-class accuracy and IoU of the chosen classes, one row per sector.
    pub fn format_table(&self, classes: &[u8]) -> String {
        let mut header = vec!["sector".to_string(), "azimuth".to_string(), "mIoU".to_string()];
        for &c in classes {
            let n = ClassMap::name(c).unwrap_or("?");
            header.push(format!("{n} Acc"));
            header.push(format!("{n} IoU"));
        }
        let mut rows = vec![header];
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", x * 100.0));
        for s in &self.sectors {
            let mut row = vec![s.index.to_string(), format!("{:.0}", s.center_deg)];
            row.push(cell(s.report.as_ref().map(|r| r.miou)));
            for &c in classes {
                let r = s.report.as_ref();
                row.push(cell(r.and_then(|r| r.per_class_acc[c as usize])));
                row.push(cell(r.and_then(|r| r.per_class_iou[c as usize])));
            }
            rows.push(row);
        }
        align(&rows)
    }
}

/// One confusion matrix per azimuth sector over a set of panoramas.
pub fn directional_report(preds: &[LabelMap], gts: &[LabelMap], sectors: usize) -> Result<DirectionalReport> {
    if sectors == 0 || preds.len() != gts.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} ground truths, {sectors} sectors",
            preds.len(),
            gts.len()
        )));
    }
    let mut cms = vec![ConfusionMatrix::default(); sectors];
    for (p, g) in preds.iter().zip(gts) {
        if (p.height, p.width) != (g.height, g.width) {
            return Err(Error::Shape(format!(
                "prediction {}x{} vs ground truth {}x{}",
                p.height, p.width, g.height, g.width
            )));
        }
        let w = p.width;
        let mut cols: Vec<(Vec<u8>, Vec<u8>)> = vec![(Vec::new(), Vec::new()); sectors];
        for y in 0..p.height {
            for x in 0..w {
                let s = sector_of_column(x, w, sectors);
                cols[s].0.push(p.get(y, x));
                cols[s].1.push(g.get(y, x));
            }
        }
        for (cm, (pp, gg)) in cms.iter_mut().zip(&cols) {
            cm.update(pp, gg)?;
        }
    }
    let step = 360.0 / sectors as f64;
    let sectors = cms
        .into_iter()
        .enumerate()
        .map(|(i, cm)| {
            let c = i as f64 * step;
            SectorReport {
                index: i,
                center_deg: if c > 180.0 { c - 360.0 } else { c },
                pixels: cm.total(),
                report: iou_report(&cm).ok(),
                confusion: cm,
            }
        })
        .collect();
    Ok(DirectionalReport { sectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sectors_partition_columns() {
        for w in [8, 64, 100, 256, 257] {
            let mut counts = vec![0; 8];
            for x in 0..w {
                counts[sector_of_column(x, w, 8)] += 1;
            }
            assert_eq!(counts.iter().sum::<usize>(), w);
            assert!(counts.iter().all(|&c| c >= w / 8));
        }
        // Centre column belongs to sector 0.
        assert_eq!(sector_of_column(128, 256, 8), 0);
        assert_eq!(sector_of_column(111, 256, 8), 7);
        assert_eq!(sector_of_column(112, 256, 8), 0);
        assert_eq!(sector_of_column(143, 256, 8), 0);
        assert_eq!(sector_of_column(144, 256, 8), 1);
    }

    #[test]
    fn error_in_one_band_only_hurts_that_sector() {
        let gt = LabelMap::new(4, 64, 0);
        let mut pred = gt.clone();
        for y in 0..4 {
            pred.set(y, 0, 1);
        }
        let r = directional_report(&[pred], &[gt], 8).unwrap();
        let bad = sector_of_column(0, 64, 8);
        for s in &r.sectors {
            let miou = s.report.as_ref().unwrap().miou;
            if s.index == bad {
                assert!(miou < 1.0);
            } else {
                assert_eq!(miou, 1.0);
            }
        }
        assert_eq!(r.sectors[4].center_deg, 180.0);
    }
}
