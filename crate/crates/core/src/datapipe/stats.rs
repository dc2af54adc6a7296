use super::classmap::{ClassMap, NUM_CLASSES};
use super::manifest::DatasetManifest;
use super::sample::LabelMap;
use crate::error::{Error, Result};

/// Default additive constant of the ERFNet weighting `1 / ln(k + p)`.
pub const ERFNET_K: f64 = 1.02;

/// Per-class pixel counts accumulated over a set of label maps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassCounts {
    pub pixels: [u64; NUM_CLASSES],
    pub images: usize,
}

impl ClassCounts {
    pub fn add(&mut self, label: &LabelMap) {
        for &v in &label.data {
            if (v as usize) < NUM_CLASSES {
                self.pixels[v as usize] += 1;
            }
        }
        self.images += 1;
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a LabelMap>) -> Self {
        let mut c = Self::default();
        for l in labels {
            c.add(l);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.pixels.iter().sum()
    }

    /// `w_c = 1 / ln(k + p_c)` with `p_c` the pixel frequency of class `c`.
    pub fn class_weights(&self, k: f64) -> Result<[f64; NUM_CLASSES]> {
        let total = self.total();
        if total == 0 {
            return Err(Error::NoCountablePixels);
        }
        let mut w = [0.0; NUM_CLASSES];
        for (c, wc) in w.iter_mut().enumerate() {
            let p = self.pixels[c] as f64 / total as f64;
            *wc = 1.0 / (k + p).ln();
        }
        Ok(w)
    }

    /// Mean pixel count per image for each class.
    pub fn histogram(&self) -> [f64; NUM_CLASSES] {
        let mut h = [0.0; NUM_CLASSES];
        if self.images == 0 {
            return h;
        }
        for (c, v) in h.iter_mut().enumerate() {
            *v = self.pixels[c] as f64 / self.images as f64;
        }
        h
    }
}

fn manifest_counts(manifest: &DatasetManifest, map: &ClassMap) -> Result<ClassCounts> {
    let mut counts = ClassCounts::default();
    for e in &manifest.entries {
        let path = e
            .label
            .as_ref()
            .ok_or_else(|| Error::MissingPath(e.image.with_extension("label")))?;
        let raw = LabelMap::read_png_raw(path)?;
        let data = map.map_labels(&raw.data)?;
        counts.add(&LabelMap { data, ..raw });
    }
    Ok(counts)
}

/// Class weights computed from every label of a manifest.
pub fn compute_class_weights(
    manifest: &DatasetManifest,
    map: &ClassMap,
    k: f64,
) -> Result<[f64; NUM_CLASSES]> {
    manifest_counts(manifest, map)?.class_weights(k)
}

/// Mean per-image pixel count of each class over a manifest.
pub fn class_pixel_histogram(manifest: &DatasetManifest, map: &ClassMap) -> Result<[f64; NUM_CLASSES]> {
    Ok(manifest_counts(manifest, map)?.histogram())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::classmap::IGNORE;

    #[test]
    fn single_class_dataset() {
        let c = ClassCounts::from_labels([&LabelMap::new(4, 4, 0)]);
        let w = c.class_weights(ERFNET_K).unwrap();
        assert!((w[0] - 1.0 / 2.02f64.ln()).abs() < 1e-12);
        assert!((w[0] - 1.4222).abs() < 1e-4);
        for &v in &w[1..] {
            assert!((v - 50.50).abs() < 0.01);
        }
    }

    #[test]
    fn balanced_pair_has_equal_weights() {
        let mut l = LabelMap::new(2, 2, 0);
        l.data = vec![0, 1, 0, 1];
        let w = ClassCounts::from_labels([&l]).class_weights(ERFNET_K).unwrap();
        assert_eq!(w[0], w[1]);
        assert!((w[0] - 1.0 / 1.52f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_ignore_is_an_error() {
        let c = ClassCounts::from_labels([&LabelMap::new(3, 3, IGNORE)]);
        assert!(matches!(c.class_weights(ERFNET_K), Err(Error::NoCountablePixels)));
    }

    #[test]
    fn duplication_leaves_weights_unchanged() {
        let mut a = LabelMap::new(2, 3, 2);
        a.data = vec![2, 2, 10, 13, 255, 0];
        let once = ClassCounts::from_labels([&a]).class_weights(ERFNET_K).unwrap();
        let twice = ClassCounts::from_labels([&a, &a]).class_weights(ERFNET_K).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn histogram_counts_and_means() {
        let mut l = LabelMap::new(4, 4, 0);
        for v in &mut l.data[8..] {
            *v = 1;
        }
        let h = ClassCounts::from_labels([&l]).histogram();
        assert_eq!(&h[..3], &[8.0, 8.0, 0.0]);
        let other = LabelMap::new(4, 4, 1);
        let h2 = ClassCounts::from_labels([&l, &other]).histogram();
        assert_eq!(&h2[..2], &[4.0, 12.0]);
        assert!(h2.iter().sum::<f64>() <= 16.0);
    }
}
