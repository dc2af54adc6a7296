use rand::Rng;

use super::classmap::IGNORE;
use super::sample::{Image, LabelMap, SampleRecord};

/// Maximum absolute translation in pixels per axis.
pub const MAX_SHIFT: i32 = 2;

/// One random draw of the joint image/label augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AugmentDraw {
    pub flip: bool,
    pub dx: i32,
    pub dy: i32,
}

impl AugmentDraw {
    /// Flip with probability 0.5; `dx`, `dy` independently uniform in `-2..=2`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            flip: rng.gen_bool(0.5),
            dx: rng.gen_range(-MAX_SHIFT..=MAX_SHIFT),
            dy: rng.gen_range(-MAX_SHIFT..=MAX_SHIFT),
        }
    }

    /// Applies the draw. Output pixel `(y, x)` takes input pixel
    /// `(y - dy, x - dx)` of the (optionally flipped) sample; vacated pixels
    /// become black in the image and ignore in the label.
    pub fn apply(&self, s: &SampleRecord) -> SampleRecord {
        let (h, w) = (s.image.height, s.image.width);
        let src = |y: usize, x: usize| -> Option<(usize, usize)> {
            let sy = y as i64 - self.dy as i64;
            let sx = x as i64 - self.dx as i64;
            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                return None;
            }
            let sx = if self.flip { w - 1 - sx as usize } else { sx as usize };
            Some((sy as usize, sx))
        };
        let mut image = Image::new(h, w);
        let mut label = s.label.as_ref().map(|_| LabelMap::new(h, w, IGNORE));
        for y in 0..h {
            for x in 0..w {
                if let Some((sy, sx)) = src(y, x) {
                    image.set_pixel(y, x, s.image.pixel(sy, sx));
                    if let (Some(out), Some(inp)) = (label.as_mut(), s.label.as_ref()) {
                        out.set(y, x, inp.get(sy, sx));
                    }
                }
            }
        }
        SampleRecord {
            id: s.id.clone(),
            domain: s.domain,
            image,
            label,
        }
    }
}

/// Random horizontal flip and small translation applied jointly to image and
/// label.
pub fn augment<R: Rng + ?Sized>(sample: &SampleRecord, rng: &mut R) -> SampleRecord {
    AugmentDraw::sample(rng).apply(sample)
}
