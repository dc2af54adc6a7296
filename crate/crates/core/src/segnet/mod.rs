//! Compact encoder-decoder segmentation network with a boundary head and two
//! differently attended semantic heads.

pub mod checkpoint;
mod model;

pub use checkpoint::{
    check_class_hash, find_group, load_into_store, load_segnet, read_archive, save_segnet, store_entries, write_archive,
    ArchiveHeader, TensorEntry, TensorGroups,
};
pub use model::{
    fanet_multilevel_wiring, images_to_array, upsample_logits, ArchMode, BackboneOutput, Head, HeadOutputs, RegionOutput,
    SegNet, SegNetConfig, SegNetOutput,
};
