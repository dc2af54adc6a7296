use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 19;
pub const IGNORE: u8 = 255;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [128, 64, 128],
    [244, 35, 232],
    [70, 70, 70],
    [102, 102, 156],
    [190, 153, 153],
    [153, 153, 153],
    [250, 170, 30],
    [220, 220, 0],
    [107, 142, 35],
    [152, 251, 152],
    [70, 130, 180],
    [220, 20, 60],
    [255, 0, 0],
    [0, 0, 142],
    [0, 0, 70],
    [0, 60, 100],
    [0, 80, 100],
    [0, 0, 230],
    [119, 11, 32],
];

pub const IGNORE_COLOR: [u8; 3] = [0, 0, 0];

/// Class ids of the commonly used Cityscapes classes.
pub mod ids {
    pub const ROAD: u8 = 0;
    pub const SIDEWALK: u8 = 1;
    pub const BUILDING: u8 = 2;
    pub const POLE: u8 = 5;
    pub const VEGETATION: u8 = 8;
    pub const TERRAIN: u8 = 9;
    pub const SKY: u8 = 10;
    pub const PERSON: u8 = 11;
    pub const CAR: u8 = 13;
    pub const TRAIN: u8 = 16;
}

/// The 19-class ontology plus an optional table translating raw label ids
/// from another ontology.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMap {
    remap: Option<Vec<u8>>,
}

impl Default for ClassMap {
    fn default() -> Self {
        Self::cityscapes()
    }
}

impl ClassMap {
    /// Labels already use train ids 0..18 (and 255).
    pub fn cityscapes() -> Self {
        Self { remap: None }
    }

    /// Raw id `i` maps to `table[i]`; ids past the end of the table are errors.
    pub fn with_remap(table: Vec<u8>) -> Result<Self> {
        if let Some(bad) = table
            .iter()
            .find(|&&v| v != IGNORE && v as usize >= NUM_CLASSES)
        {
            return Err(Error::Shape(format!(
                "remap table target {bad} is not a class id"
            )));
        }
        Ok(Self { remap: Some(table) })
    }

    /// Identity on the 19 ids except that the listed classes become ignore.
    /// Used when the evaluation ontology lacks some classes.
    pub fn discarding(discarded: &[u8]) -> Self {
        let mut table: Vec<u8> = (0..NUM_CLASSES as u8).collect();
        for &d in discarded {
            table[d as usize] = IGNORE;
        }
        table.resize(IGNORE as usize + 1, IGNORE);
        Self { remap: Some(table) }
    }

    pub fn name(id: u8) -> Option<&'static str> {
        CLASS_NAMES.get(id as usize).copied()
    }

    pub fn id_of(name: &str) -> Option<u8> {
        CLASS_NAMES.iter().position(|n| *n == name).map(|i| i as u8)
    }

    pub fn color(id: u8) -> [u8; 3] {
        PALETTE.get(id as usize).copied().unwrap_or(IGNORE_COLOR)
    }

    /// Inverse palette lookup; unknown colors decode to ignore.
    pub fn id_of_color(rgb: [u8; 3]) -> u8 {
        PALETTE
            .iter()
            .position(|&c| c == rgb)
            .map_or(IGNORE, |i| i as u8)
    }

    /// Short hash of the class ontology stored in checkpoints.
    pub fn ontology_hash() -> String {
        let mut h = Sha256::new();
        for n in CLASS_NAMES {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        h.finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Translates raw label ids into train ids. Every observed id must be
    /// covered; the error lists all offending ids.
    pub fn map_labels(&self, raw: &[u8]) -> Result<Vec<u8>> {
        let mut seen = [false; 256];
        for &v in raw {
            seen[v as usize] = true;
        }
        let lookup = |v: u8| -> Option<u8> {
            match &self.remap {
                None => (v == IGNORE || (v as usize) < NUM_CLASSES).then_some(v),
                Some(t) => t.get(v as usize).copied(),
            }
        };
        let bad: Vec<u8> = (0..=255u8)
            .filter(|&v| seen[v as usize] && lookup(v).is_none())
            .collect();
        if !bad.is_empty() {
            return Err(Error::UnmappedLabels { ids: bad });
        }
        let mut table = [IGNORE; 256];
        for v in 0..=255u8 {
            if seen[v as usize] {
                table[v as usize] = lookup(v).unwrap_or(IGNORE);
            }
        }
        Ok(raw.iter().map(|&v| table[v as usize]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_is_unchanged() {
        let raw: Vec<u8> = (0..19).chain([255, 3, 0]).collect();
        assert_eq!(ClassMap::cityscapes().map_labels(&raw).unwrap(), raw);
    }

    #[test]
    fn foreign_id_to_ignore() {
        let map = ClassMap::with_remap(vec![0, 255, 13]).unwrap();
        let out = map.map_labels(&[0, 1, 2, 1]).unwrap();
        assert_eq!(out, vec![0, 255, 13, 255]);
        assert_eq!(out.iter().filter(|&&v| v == IGNORE).count(), 2);
    }

    #[test]
    fn out_of_table_ids_are_listed() {
        let err = ClassMap::cityscapes().map_labels(&[0, 31, 19, 31]).unwrap_err();
        match err {
            Error::UnmappedLabels { ids } => assert_eq!(ids, vec![19, 31]),
            e => panic!("unexpected {e}"),
        }
        let short = ClassMap::with_remap(vec![0, 1]).unwrap();
        assert!(short.map_labels(&[2]).is_err());
    }

    #[test]
    fn sixteen_class_ontology_discards_terrain_sky_train() {
        let map = ClassMap::discarding(&[ids::TERRAIN, ids::SKY, ids::TRAIN]);
        let raw: Vec<u8> = (0..19).collect();
        let out = map.map_labels(&raw).unwrap();
        for (i, &v) in out.iter().enumerate() {
            if [9, 10, 16].contains(&i) {
                assert_eq!(v, IGNORE);
            } else {
                assert_eq!(v as usize, i);
            }
        }
        assert_eq!(out.iter().filter(|&&v| v != IGNORE).count(), 16);
    }

    #[test]
    fn palette_is_injective() {
        for i in 0..NUM_CLASSES {
            assert_eq!(ClassMap::id_of_color(PALETTE[i]) as usize, i);
        }
        assert_eq!(ClassMap::id_of_color(IGNORE_COLOR), IGNORE);
    }
}
