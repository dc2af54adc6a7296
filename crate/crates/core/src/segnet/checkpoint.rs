//! Binary archive of named parameter arrays behind a JSON header.
//!
//! Layout: magic `PNDA`, u32 LE header length, UTF-8 JSON header, then the
//! raw little-endian f64 data of every tensor in header order.

use std::fs;
use std::path::Path;

use panoda_tensor::{Array, ParamStore};
use serde::{Deserialize, Serialize};

use super::model::{SegNet, SegNetConfig};
use crate::datapipe::ClassMap;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PNDA";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub group: String,
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub format_version: u32,
    pub model: SegNetConfig,
    pub class_map_hash: String,
    /// Free-form metadata (training state, discriminator configs, ...).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

/// Named groups of arrays, e.g. `("segnet", store)`, `("d.S", store)`.
pub type TensorGroups = Vec<(String, Vec<(String, Array)>)>;

pub fn store_entries(store: &ParamStore) -> Vec<(String, Array)> {
    store.iter().map(|(n, a)| (n.to_string(), a.clone())).collect()
}

pub fn write_archive(path: &Path, model: &SegNetConfig, meta: serde_json::Value, groups: &TensorGroups) -> Result<()> {
    let mut tensors = Vec::new();
    let mut body = Vec::new();
    for (group, arrays) in groups {
        for (name, a) in arrays {
            tensors.push(TensorEntry {
                group: group.clone(),
                name: name.clone(),
                shape: a.shape().to_vec(),
            });
            for v in a.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = ArchiveHeader {
        format_version: 1,
        model: model.clone(),
        class_map_hash: ClassMap::ontology_hash(),
        meta,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&body);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io("create directory", dir, e))?;
    }
    fs::write(path, out).map_err(|e| Error::io("write checkpoint", path, e))
}

pub fn read_archive(path: &Path) -> Result<(ArchiveHeader, TensorGroups)> {
    let bytes = fs::read(path).map_err(|e| Error::io("read checkpoint", path, e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint archive"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: ArchiveHeader = serde_json::from_slice(json)?;
    let mut off = 8 + hlen;
    let mut groups: TensorGroups = Vec::new();
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        let raw = bytes.get(off..off + 8 * n).ok_or_else(|| bad("truncated tensor data"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 8 * n;
        let arr = Array::from_vec(&t.shape, data);
        match groups.last_mut() {
            Some((g, v)) if *g == t.group => v.push((t.name.clone(), arr)),
            _ => groups.push((t.group.clone(), vec![(t.name.clone(), arr)])),
        }
    }
    if off != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok((header, groups))
}

/// Copies arrays into a store by name; every store parameter must be present
/// with a matching shape.
pub fn load_into_store(store: &mut ParamStore, arrays: &[(String, Array)]) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    if arrays.len() != ids.len() {
        return Err(Error::Checkpoint(format!(
            "archive holds {} tensors, model expects {}",
            arrays.len(),
            ids.len()
        )));
    }
    for (name, a) in arrays {
        let id = store
            .find(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        if store.get(id).shape() != a.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?} vs model {:?}",
                a.shape(),
                store.get(id).shape()
            )));
        }
        store.set(id, a.clone());
    }
    Ok(())
}

pub fn find_group<'a>(groups: &'a TensorGroups, name: &str) -> Result<&'a [(String, Array)]> {
    groups
        .iter()
        .find(|(g, _)| g == name)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor group {name}")))
}

pub fn save_segnet(path: &Path, net: &SegNet) -> Result<()> {
    write_archive(
        path,
        &net.config,
        serde_json::Value::Null,
        &vec![("segnet".to_string(), store_entries(&net.store))],
    )
}

/// Rebuilds a network from an archive, checking the class ontology.
pub fn load_segnet(path: &Path) -> Result<SegNet> {
    let (header, groups) = read_archive(path)?;
    check_class_hash(path, &header)?;
    let mut net = SegNet::new(header.model.clone());
    load_into_store(&mut net.store, find_group(&groups, "segnet")?)?;
    Ok(net)
}

pub fn check_class_hash(path: &Path, header: &ArchiveHeader) -> Result<()> {
    if header.class_map_hash != ClassMap::ontology_hash() {
        return Err(Error::Checkpoint(format!(
            "{}: class map hash {} does not match {}",
            path.display(),
            header.class_map_hash,
            ClassMap::ontology_hash()
        )));
    }
    Ok(())
}
