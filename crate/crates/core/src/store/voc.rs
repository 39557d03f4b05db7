//! Pascal VOC annotation subset: `size`, `object/name`, `object/difficult`,
//! `object/bndbox`.
//!
//! VOC boxes are 1-based and inclusive. They are converted once, here, to
//! 0-based half-open: `xmin' = xmin - 1`, `xmax' = xmax`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub bbox: BBox,
    pub label: String,
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub stem: String,
    pub image_width: u32,
    pub image_height: u32,
    pub objects: Vec<GtObject>,
}

impl GroundTruth {
    pub fn boxes(&self) -> impl Iterator<Item = &BBox> {
        self.objects.iter().map(|o| &o.bbox)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnnotation {
    pub ground_truth: GroundTruth,
    /// Boxes that extended past the image and were clamped (or dropped when
    /// clamping left nothing).
    pub clamped: usize,
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn child_text<'a>(node: roxmltree::Node<'a, '_>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

fn number(node: roxmltree::Node, name: &str) -> Result<f64> {
    let text =
        child_text(node, name).ok_or_else(|| Error::Annotation(format!("missing <{name}>")))?;
    text.parse::<f64>()
        .map_err(|_| Error::Annotation(format!("<{name}> is not a number: {text:?}")))
}

/// Parses VOC XML. `fallback_stem` names the image when `<filename>` is absent.
pub fn parse_voc_xml(bytes: &[u8], fallback_stem: &str) -> Result<ParsedAnnotation> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| Error::Annotation(format!("not UTF-8: {e}")))?;
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| Error::Annotation(format!("malformed XML: {e}")))?;
    let root = doc.root_element();

    let size = child(root, "size").ok_or_else(|| Error::Annotation("missing <size>".into()))?;
    let width = number(size, "width")?;
    let height = number(size, "height")?;
    if width < 1.0 || height < 1.0 {
        return Err(Error::Annotation(format!(
            "invalid image size {width}x{height}"
        )));
    }
    let (width, height) = (width as u32, height as u32);

    let stem = child_text(root, "filename")
        .map(|f| match f.rsplit_once('.') {
            Some((s, _)) if !s.is_empty() => s.to_string(),
            _ => f.to_string(),
        })
        .unwrap_or_else(|| fallback_stem.to_string());

    let mut objects = Vec::new();
    let mut clamped = 0;
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let label = child_text(obj, "name").unwrap_or("").to_string();
        let difficult = child_text(obj, "difficult")
            .map(|d| d == "1" || d.eq_ignore_ascii_case("true"))
            .unwrap_or(false);
        let bnd = child(obj, "bndbox")
            .ok_or_else(|| Error::Annotation(format!("object {label:?} has no <bndbox>")))?;
        let xmin = number(bnd, "xmin")?.round() as i64 - 1;
        let ymin = number(bnd, "ymin")?.round() as i64 - 1;
        let xmax = number(bnd, "xmax")?.round() as i64;
        let ymax = number(bnd, "ymax")?.round() as i64;

        let cx0 = xmin.clamp(0, width as i64);
        let cy0 = ymin.clamp(0, height as i64);
        let cx1 = xmax.clamp(0, width as i64);
        let cy1 = ymax.clamp(0, height as i64);
        if (cx0, cy0, cx1, cy1) != (xmin, ymin, xmax, ymax) {
            clamped += 1;
            log::warn!("{stem}: box {label:?} outside image, clamped");
        }
        match BBox::new(cx0 as i32, cy0 as i32, cx1 as i32, cy1 as i32) {
            Ok(bbox) => objects.push(GtObject {
                bbox,
                label,
                difficult,
            }),
            Err(_) => {
                if (cx0, cy0, cx1, cy1) == (xmin, ymin, xmax, ymax) {
                    return Err(Error::Annotation(format!(
                        "object {label:?} has an empty box"
                    )));
                }
                log::warn!("{stem}: box {label:?} empty after clamping, dropped");
            }
        }
    }

    Ok(ParsedAnnotation {
        ground_truth: GroundTruth {
            stem,
            image_width: width,
            image_height: height,
            objects,
        },
        clamped,
    })
}

pub fn read_voc_xml(path: impl AsRef<Path>) -> Result<ParsedAnnotation> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_name()
        .and_then(|f| f.to_str())
        .map(|f| f.split('.').next().unwrap_or(f))
        .unwrap_or("");
    parse_voc_xml(&bytes, stem)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes the inverse of [`parse_voc_xml`], converting back to VOC's
/// 1-based inclusive coordinates.
pub fn to_voc_xml(gt: &GroundTruth) -> String {
    let mut out = String::new();
    out.push_str("<annotation>\n");
    out.push_str(&format!(
        "  <filename>{}.png</filename>\n",
        escape(&gt.stem)
    ));
    out.push_str(&format!(
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>\n",
        gt.image_width, gt.image_height
    ));
    for obj in &gt.objects {
        let b = obj.bbox;
        out.push_str("  <object>\n");
        out.push_str(&format!("    <name>{}</name>\n", escape(&obj.label)));
        out.push_str(&format!(
            "    <difficult>{}</difficult>\n",
            obj.difficult as u8
        ));
        out.push_str(&format!(
            "    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n",
            b.xmin + 1,
            b.ymin + 1,
            b.xmax,
            b.ymax
        ));
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out
}

pub fn write_voc_xml(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_voc_xml(gt)).map_err(|e| Error::io(path, e))
}
