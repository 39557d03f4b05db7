//! Dataset directory convention, per image stem `X`:
//!
//! ```text
//! X.att.h0.pfm .. X.att.h{H-1}.pfm   attention heads
//! X.depth.pfm                        depth (nearness: larger = closer)
//! X.ann.xml                          optional VOC annotation
//! X.png                              optional base image for overlays
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::store::pfm::read_pfm;
use crate::store::voc::{read_voc_xml, GroundTruth};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordStub {
    pub stem: String,
    pub head_paths: Vec<PathBuf>,
    pub depth_path: PathBuf,
    pub annotation_path: Option<PathBuf>,
    pub image_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedStem {
    pub stem: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<RecordStub>,
    pub skipped: Vec<SkippedStem>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub stem: String,
    pub attention_heads: Vec<Raster>,
    pub depth: Raster,
    pub annotation: Option<GroundTruth>,
}

#[derive(Default)]
struct Partial {
    heads: BTreeMap<usize, PathBuf>,
    depth: Option<PathBuf>,
    annotation: Option<PathBuf>,
    image: Option<PathBuf>,
}

enum Role {
    Head(usize),
    Depth,
    Annotation,
    Image,
}

fn classify(name: &str) -> Option<(&str, Role)> {
    if let Some(stem) = name.strip_suffix(".depth.pfm") {
        return Some((stem, Role::Depth));
    }
    if let Some(stem) = name.strip_suffix(".ann.xml") {
        return Some((stem, Role::Annotation));
    }
    if let Some(rest) = name.strip_suffix(".pfm") {
        if let Some((stem, k)) = rest.rsplit_once(".att.h") {
            if !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()) {
                return k.parse().ok().map(|k| (stem, Role::Head(k)));
            }
        }
        return None;
    }
    if let Some(stem) = name.strip_suffix(".png") {
        return Some((stem, Role::Image));
    }
    None
}

/// Groups files by stem. Result order depends only on the set of file names.
pub fn scan_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    Ok(manifest_from_names(dir, names))
}

pub(crate) fn manifest_from_names(dir: &Path, mut names: Vec<String>) -> Manifest {
    names.sort();
    let mut by_stem: BTreeMap<String, Partial> = BTreeMap::new();
    for name in &names {
        let Some((stem, role)) = classify(name) else {
            continue;
        };
        if stem.is_empty() {
            continue;
        }
        let p = by_stem.entry(stem.to_string()).or_default();
        let path = dir.join(name);
        match role {
            Role::Head(k) => {
                p.heads.insert(k, path);
            }
            Role::Depth => p.depth = Some(path),
            Role::Annotation => p.annotation = Some(path),
            Role::Image => p.image = Some(path),
        }
    }

    let mut manifest = Manifest::default();
    for (stem, p) in by_stem {
        let skip = |reason: &str| SkippedStem {
            stem: stem.clone(),
            reason: reason.to_string(),
        };
        if p.heads.is_empty() && p.depth.is_none() {
            // only a png or annotation; not an input image
            if p.annotation.is_some() {
                manifest
                    .skipped
                    .push(skip("no depth map and no attention heads"));
            }
            continue;
        }
        let Some(depth_path) = p.depth else {
            manifest.skipped.push(skip("missing depth map"));
            continue;
        };
        if p.heads.is_empty() {
            manifest.skipped.push(skip("missing attention heads"));
            continue;
        }
        if p.heads.keys().enumerate().any(|(i, &k)| i != k) {
            manifest
                .skipped
                .push(skip("attention head indices are not contiguous from 0"));
            continue;
        }
        manifest.records.push(RecordStub {
            stem,
            head_paths: p.heads.into_values().collect(),
            depth_path,
            annotation_path: p.annotation,
            image_path: p.image,
        });
    }
    manifest
}

impl RecordStub {
    pub fn load(&self) -> Result<ImageRecord> {
        let attention_heads = self
            .head_paths
            .iter()
            .map(read_pfm)
            .collect::<Result<Vec<_>>>()?;
        if let Some((i, h)) = attention_heads
            .iter()
            .enumerate()
            .find(|(_, h)| h.dims() != attention_heads[0].dims())
        {
            return Err(Error::contract(format!(
                "{}: attention head {i} is {}x{}, head 0 is {}x{}",
                self.stem,
                h.width(),
                h.height(),
                attention_heads[0].width(),
                attention_heads[0].height()
            )));
        }
        let depth = read_pfm(&self.depth_path)?;
        let annotation = self
            .annotation_path
            .as_ref()
            .map(|p| read_voc_xml(p).map(|a| a.ground_truth))
            .transpose()?;
        Ok(ImageRecord {
            stem: self.stem.clone(),
            attention_heads,
            depth,
            annotation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn groups_and_skips() {
        let m = manifest_from_names(
            Path::new("d"),
            names(&["a.att.h0.pfm", "a.depth.pfm", "b.att.h0.pfm", "a.ann.xml"]),
        );
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].stem, "a");
        assert!(m.records[0].annotation_path.is_some());
        assert_eq!(m.skipped.len(), 1);
        assert_eq!(m.skipped[0].stem, "b");
        assert!(m.skipped[0].reason.contains("depth"));
    }

    #[test]
    fn heads_in_index_order() {
        let mut list: Vec<String> = (0..12).map(|k| format!("s.att.h{k}.pfm")).collect();
        list.push("s.depth.pfm".into());
        list.reverse();
        let m = manifest_from_names(Path::new("d"), list);
        let heads = &m.records[0].head_paths;
        assert_eq!(heads.len(), 12);
        for (k, p) in heads.iter().enumerate() {
            assert_eq!(p, &Path::new("d").join(format!("s.att.h{k}.pfm")));
        }
    }

    #[test]
    fn order_independent_of_listing() {
        let list = names(&[
            "z.depth.pfm",
            "z.att.h0.pfm",
            "m.att.h1.pfm",
            "m.att.h0.pfm",
            "m.depth.pfm",
            "q.depth.pfm",
        ]);
        let a = manifest_from_names(Path::new("d"), list.clone());
        let mut rev = list;
        rev.reverse();
        assert_eq!(a, manifest_from_names(Path::new("d"), rev));
        let stems: Vec<_> = a.records.iter().map(|r| r.stem.as_str()).collect();
        assert_eq!(stems, ["m", "z"]);
        assert_eq!(a.skipped[0].stem, "q");
    }

    #[test]
    fn gap_in_heads_skipped() {
        let m = manifest_from_names(
            Path::new("d"),
            names(&["a.att.h0.pfm", "a.att.h2.pfm", "a.depth.pfm"]),
        );
        assert!(m.records.is_empty());
        assert_eq!(m.skipped.len(), 1);
    }
}
