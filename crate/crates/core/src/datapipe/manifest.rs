use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `leftImg8bit/<split>/<city>/*_leftImg8bit.png` with labels at
    /// `gtFine/<split>/<city>/*_gtFine_labelTrainIds.png`.
    Cityscapes,
    /// `<split>/images/*.png`; labels in `<split>/labels/` are attached for
    /// every split except `train`, which is unlabelled.
    Densepass,
    /// Same tree as densepass, but labels are attached for every split.
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub label: Option<PathBuf>,
}

impl ManifestEntry {
    /// File stem of the image, used as the sample id.
    pub fn id(&self) -> String {
        self.image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: String,
    pub layout: Layout,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.entries.iter().all(|e| e.label.is_some())
    }
}

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let rd = fs::read_dir(dir).map_err(|e| Error::io("list directory", dir, e))?;
    for ent in rd {
        let ent = ent.map_err(|e| Error::io("list directory", dir, e))?;
        let p = ent.path();
        if p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let rd = fs::read_dir(dir).map_err(|e| Error::io("list directory", dir, e))?;
    for ent in rd {
        let ent = ent.map_err(|e| Error::io("list directory", dir, e))?;
        if ent.path().is_dir() {
            out.push(ent.path());
        }
    }
    out.sort();
    Ok(out)
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::MissingPath(p.to_path_buf()))
    }
}

/// Enumerates `(image, label?)` pairs of one split in lexicographic order.
pub fn load_manifest(root: &Path, split: &str, layout: Layout) -> Result<DatasetManifest> {
    if !SPLITS.contains(&split) {
        return Err(Error::UnknownSplit(split.to_string()));
    }
    require_dir(root)?;
    let entries = match layout {
        Layout::Cityscapes => {
            let img_root = root.join("leftImg8bit").join(split);
            require_dir(&img_root)?;
            let mut entries = Vec::new();
            for city in sorted_subdirs(&img_root)? {
                let city_name = city.file_name().unwrap_or_default().to_owned();
                for img in sorted_pngs(&city)? {
                    let name = img.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    let stem = name.strip_suffix("_leftImg8bit.png").unwrap_or(&name);
                    let label = root
                        .join("gtFine")
                        .join(split)
                        .join(&city_name)
                        .join(format!("{stem}_gtFine_labelTrainIds.png"));
                    entries.push(ManifestEntry {
                        image: img,
                        label: label.is_file().then_some(label),
                    });
                }
            }
            entries
        }
        Layout::Densepass | Layout::Synthetic => {
            let split_dir = root.join(split);
            let img_dir = split_dir.join("images");
            require_dir(&img_dir)?;
            let attach = layout == Layout::Synthetic || split != "train";
            let label_dir = split_dir.join("labels");
            sorted_pngs(&img_dir)?
                .into_iter()
                .map(|img| {
                    let label = label_dir.join(img.file_name().unwrap_or_default());
                    ManifestEntry {
                        image: img,
                        label: (attach && label.is_file()).then_some(label),
                    }
                })
                .collect()
        }
    };
    if entries.is_empty() {
        return Err(Error::EmptySplit {
            root: root.to_path_buf(),
            split: split.to_string(),
        });
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        split: split.to_string(),
        layout,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(p: &Path) {
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, b"").unwrap();
    }

    #[test]
    fn cityscapes_layout_pairs_labels() {
        let d = tempfile::tempdir().unwrap();
        let r = d.path();
        touch(&r.join("leftImg8bit/train/b/b_1_leftImg8bit.png"));
        touch(&r.join("leftImg8bit/train/a/a_2_leftImg8bit.png"));
        touch(&r.join("gtFine/train/a/a_2_gtFine_labelTrainIds.png"));
        let m = load_manifest(r, "train", Layout::Cityscapes).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.entries[0].image.ends_with("a/a_2_leftImg8bit.png"));
        assert!(m.entries[0].label.is_some());
        assert!(m.entries[1].label.is_none());
    }

    #[test]
    fn densepass_train_is_unlabelled_but_test_is_labelled() {
        let d = tempfile::tempdir().unwrap();
        let r = d.path();
        for s in ["train", "test"] {
            touch(&r.join(format!("{s}/images/x.png")));
            touch(&r.join(format!("{s}/labels/x.png")));
        }
        let train = load_manifest(r, "train", Layout::Densepass).unwrap();
        assert!(train.entries.iter().all(|e| e.label.is_none()));
        let test = load_manifest(r, "test", Layout::Densepass).unwrap();
        assert!(test.has_labels());
        let synth = load_manifest(r, "train", Layout::Synthetic).unwrap();
        assert!(synth.has_labels());
    }

    #[test]
    fn missing_split_names_the_path() {
        let d = tempfile::tempdir().unwrap();
        let err = load_manifest(d.path(), "val", Layout::Densepass).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("val"), "{msg}");
        assert!(matches!(err, Error::MissingPath(_)));
        assert!(load_manifest(d.path(), "bogus", Layout::Densepass).is_err());
        assert!(load_manifest(&d.path().join("nope"), "train", Layout::Densepass).is_err());
    }

    #[test]
    fn empty_split_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        fs::create_dir_all(d.path().join("train/images")).unwrap();
        let err = load_manifest(d.path(), "train", Layout::Synthetic).unwrap_err();
        assert!(matches!(err, Error::EmptySplit { .. }));
    }
}
