use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use panoda_tensor::{resize_bilinear, resize_nearest, Array};
use serde::{Deserialize, Serialize};

use super::classmap::{ClassMap, IGNORE, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Discriminator label: 0 for source (pinhole), 1 for target (panoramic).
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }
}

/// RGB image, row-major `H×W×3`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Bilinear resize (half-pixel centres).
    pub fn resized(&self, height: usize, width: usize) -> Image {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let chw = Array::from_fn(&[3, self.height, self.width], |i| {
            let c = i / (self.height * self.width);
            let p = i % (self.height * self.width);
            self.data[p * 3 + c] as f64
        });
        let r = resize_bilinear(&chw, height, width);
        let mut out = Image::new(height, width);
        for c in 0..3 {
            for p in 0..height * width {
                out.data[p * 3 + c] = r.data()[c * height * width + p] as f32;
            }
        }
        out
    }

    pub fn read_png(path: &Path) -> Result<Image> {
        let (w, h, color, bytes) = read_png_bytes(path)?;
        let channels = match color {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            other => {
                return Err(Error::Decode {
                    path: path.into(),
                    reason: format!("unsupported color type {other:?}"),
                })
            }
        };
        let mut img = Image::new(h, w);
        for p in 0..h * w {
            let px = &bytes[p * channels..(p + 1) * channels];
            let rgb = if channels >= 3 {
                [px[0], px[1], px[2]]
            } else {
                [px[0]; 3]
            };
            for c in 0..3 {
                img.data[p * 3 + c] = rgb[c] as f32 / 255.0;
            }
        }
        Ok(img)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png_bytes(path, self.width, self.height, png::ColorType::Rgb, &self.to_rgb8())
    }
}

/// Dense label map, row-major `H×W`, values in `0..=18` or 255.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, fill: u8) -> Self {
        Self {
            height,
            width,
            data: vec![fill; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn resized(&self, height: usize, width: usize) -> LabelMap {
        LabelMap {
            height,
            width,
            data: resize_nearest(&self.data, self.height, self.width, height, width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<u8> = self
            .data
            .iter()
            .copied()
            .filter(|&v| v != IGNORE && v as usize >= NUM_CLASSES)
            .collect();
        if bad.is_empty() {
            return Ok(());
        }
        bad.sort_unstable();
        bad.dedup();
        Err(Error::UnmappedLabels { ids: bad })
    }

    /// Reads a single-channel 8-bit PNG of raw ids.
    pub fn read_png_raw(path: &Path) -> Result<LabelMap> {
        let (w, h, color, bytes) = read_png_bytes(path)?;
        if color != png::ColorType::Grayscale {
            return Err(Error::Decode {
                path: path.into(),
                reason: format!("label must be single-channel, got {color:?}"),
            });
        }
        Ok(LabelMap {
            height: h,
            width: w,
            data: bytes,
        })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png_bytes(path, self.width, self.height, png::ColorType::Grayscale, &self.data)
    }
}

fn read_png_bytes(path: &Path) -> Result<(usize, usize, png::ColorType, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io("open image", path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let decode_err = |e: png::DecodingError| Error::Decode {
        path: path.into(),
        reason: e.to_string(),
    };
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: path.into(),
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.color_type, buf))
}

pub(crate) fn write_png_bytes(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io("create image", path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| Error::Encode {
        path: path.into(),
        reason: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(encode_err)?;
    writer.write_image_data(bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub domain: Domain,
    pub image: Image,
    pub label: Option<LabelMap>,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = &self.label {
            if (l.height, l.width) != (self.image.height, self.image.width) {
                return Err(Error::Shape(format!(
                    "{}: image {}x{} vs label {}x{}",
                    self.id, self.image.height, self.image.width, l.height, l.width
                )));
            }
            l.validate()?;
        }
        Ok(())
    }
}

/// Decodes a manifest entry. Images are resized bilinearly and labels with
/// nearest neighbour when `resize_to` is given.
pub fn load_sample(
    entry: &super::manifest::ManifestEntry,
    domain: Domain,
    resize_to: Option<(usize, usize)>,
    class_map: &ClassMap,
) -> Result<SampleRecord> {
    let image = Image::read_png(&entry.image)?;
    let label = match &entry.label {
        None => None,
        Some(p) => {
            let raw = LabelMap::read_png_raw(p)?;
            if (raw.height, raw.width) != (image.height, image.width) {
                return Err(Error::Shape(format!(
                    "{}: label {}x{} does not match image {}x{}",
                    p.display(),
                    raw.height,
                    raw.width,
                    image.height,
                    image.width
                )));
            }
            let data = class_map.map_labels(&raw.data)?;
            Some(LabelMap { data, ..raw })
        }
    };
    let mut rec = SampleRecord {
        id: entry.id(),
        domain,
        image,
        label,
    };
    if let Some((h, w)) = resize_to {
        rec = resize_record(&rec, h, w);
    }
    rec.validate()?;
    Ok(rec)
}

pub fn resize_record(rec: &SampleRecord, height: usize, width: usize) -> SampleRecord {
    SampleRecord {
        id: rec.id.clone(),
        domain: rec.domain,
        image: rec.image.resized(height, width),
        label: rec.label.as_ref().map(|l| l.resized(height, width)),
    }
}
