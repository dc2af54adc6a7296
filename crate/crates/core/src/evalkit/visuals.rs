use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datapipe::sample::write_png_bytes;
use crate::datapipe::{ClassMap, LabelMap};
use crate::error::{Error, Result};
use crate::trainer::UncertaintyMap;

/// Palette colours of a label map, row-major RGB bytes.
pub fn colorize(label: &LabelMap) -> Vec<u8> {
    label.data.iter().flat_map(|&v| ClassMap::color(v)).collect()
}

/// Inverse of [`colorize`]; unknown colours decode to ignore.
pub fn decode_colors(rgb: &[u8], height: usize, width: usize) -> LabelMap {
    LabelMap {
        height,
        width,
        data: rgb.chunks_exact(3).map(|c| ClassMap::id_of_color([c[0], c[1], c[2]])).collect(),
    }
}

/// Sidecar written next to a grayscale heatmap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub kind: String,
    pub min: f64,
    pub max: f64,
    /// Query pixel `(y, x)` for attention maps.
    pub query: Option<(usize, usize)>,
}

/// Min-max scaled 8-bit values; a constant map becomes all zeros.
pub fn normalize_to_u8(values: &[f64]) -> (Vec<u8>, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let bytes = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - min) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    (bytes, min, max)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io("create directory", dir, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(v)?).map_err(|e| Error::io("write sidecar", path, e))
}

/// Writes a grayscale heatmap PNG and its JSON sidecar.
pub fn export_heatmap(values: &[f64], height: usize, width: usize, kind: &str, query: Option<(usize, usize)>, png: &Path) -> Result<()> {
    let (bytes, min, max) = normalize_to_u8(values);
    write_png_bytes(png, width, height, png::ColorType::Grayscale, &bytes)?;
    write_json(
        &png.with_extension("json"),
        &HeatmapSidecar {
            kind: kind.to_string(),
            min,
            max,
            query,
        },
    )
}

/// Writes `<stem>_pred.png`, optional `<stem>_gt.png` and optional
/// `<stem>_uncertainty.png` (+ `.json`) into `out`. Returns written paths.
pub fn export_visuals(pred: &LabelMap, gt: Option<&LabelMap>, u: Option<&UncertaintyMap>, out: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    let mut written = Vec::new();
    let p = out.join(format!("{stem}_pred.png"));
    write_png_bytes(&p, pred.width, pred.height, png::ColorType::Rgb, &colorize(pred))?;
    written.push(p);
    if let Some(g) = gt {
        let p = out.join(format!("{stem}_gt.png"));
        write_png_bytes(&p, g.width, g.height, png::ColorType::Rgb, &colorize(g))?;
        written.push(p);
    }
    if let Some(u) = u {
        let p = out.join(format!("{stem}_uncertainty.png"));
        export_heatmap(&u.variance, u.height, u.width, "uncertainty", None, &p)?;
        written.push(p.with_extension("json"));
        written.push(p);
    }
    Ok(written)
}
