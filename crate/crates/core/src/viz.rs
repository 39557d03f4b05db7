//! Overlay rendering: prediction and ground-truth boxes burned into a PNG.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::attention::normalize_unit;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::Raster;
use crate::store::{
    read_pfm, read_predictions, read_voc_xml, scan_manifest, GroundTruth, Prediction,
};

pub const GT_COLOR: Rgb<u8> = Rgb([0, 255, 0]);

/// Red for score 1, shading to yellow as the score drops to 0.
pub fn score_color(score: f64) -> Rgb<u8> {
    let s = if score.is_finite() {
        score.clamp(0.0, 1.0)
    } else {
        0.0
    };
    Rgb([255, ((1.0 - s) * 255.0).round() as u8, 0])
}

/// Grayscale rendering of a depth raster, nearest brightest.
pub fn depth_to_rgb(depth: &Raster) -> RgbImage {
    let norm = normalize_unit(depth);
    RgbImage::from_fn(depth.width() as u32, depth.height() as u32, |x, y| {
        let v = (norm.get(x as usize, y as usize) * 255.0).round() as u8;
        Rgb([v, v, v])
    })
}

/// Draws the one-pixel outline of a half-open box, clipped to the image.
pub fn draw_rect(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (b.xmin as i64, b.ymin as i64);
    let (x1, y1) = (b.xmax as i64 - 1, b.ymax as i64 - 1);
    if x1 < x0 || y1 < y0 {
        return;
    }
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
}

fn scale_box(b: &BBox, sx: f64, sy: f64) -> BBox {
    if sx == 1.0 && sy == 1.0 {
        return *b;
    }
    BBox {
        xmin: (b.xmin as f64 * sx).floor() as i32,
        ymin: (b.ymin as f64 * sy).floor() as i32,
        xmax: (b.xmax as f64 * sx).ceil() as i32,
        ymax: (b.ymax as f64 * sy).ceil() as i32,
    }
}

/// Ground truth first, then predictions lowest score first so the top box
/// ends up on top. `scale` maps box coordinates to image pixels.
pub fn render_overlay(
    base: &RgbImage,
    pred: Option<&Prediction>,
    gt: Option<&GroundTruth>,
    scale: (f64, f64),
) -> RgbImage {
    let mut img = base.clone();
    if let Some(gt) = gt {
        for b in gt.boxes() {
            draw_rect(&mut img, &scale_box(b, scale.0, scale.1), GT_COLOR);
        }
    }
    if let Some(p) = pred {
        for (b, &s) in p.boxes.iter().zip(&p.scores).rev() {
            draw_rect(&mut img, &scale_box(b, scale.0, scale.1), score_color(s));
        }
    }
    img
}

/// Writes `X.overlay.png` for every image under `input_dir`. The base is
/// `X.png` when it decodes, otherwise the depth map in grayscale. Returns
/// the written paths.
pub fn cmd_viz(input_dir: &Path, pred_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = scan_manifest(input_dir)?;
    let preds: BTreeMap<String, Prediction> = read_predictions(pred_path)?
        .into_iter()
        .map(|p| p.sorted().map(|p| (p.image.clone(), p)))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut written = Vec::new();
    for stub in &manifest.records {
        let depth = read_pfm(&stub.depth_path)?;
        let base = stub.image_path.as_ref().and_then(|p| match image::open(p) {
            Ok(img) => Some(img.to_rgb8()),
            Err(e) => {
                log::warn!("{}: base image unreadable ({e}); using depth", stub.stem);
                None
            }
        });
        let base = base.unwrap_or_else(|| depth_to_rgb(&depth));
        let scale = (
            base.width() as f64 / depth.width() as f64,
            base.height() as f64 / depth.height() as f64,
        );
        let gt = match &stub.annotation_path {
            Some(p) => Some(read_voc_xml(p)?.ground_truth),
            None => None,
        };
        let img = render_overlay(&base, preds.get(&stub.stem), gt.as_ref(), scale);
        let path = out_dir.join(format!("{}.overlay.png", stub.stem));
        img.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
