//! From binary layer masks to scored, Soft-NMS-refined boxes.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::CombinedLayer;
use crate::geometry::{iou, BBox};
use crate::raster::Raster;
use crate::store::predictions::{detection_order, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub layer_index: usize,
    pub component_area: usize,
}

/// Detections of one image, highest score first.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub stem: String,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(stem: impl Into<String>, mut detections: Vec<Detection>) -> Self {
        detections.sort_by(detection_cmp);
        Self {
            stem: stem.into(),
            detections,
        }
    }

    pub fn to_prediction(&self) -> Prediction {
        Prediction {
            image: self.stem.clone(),
            boxes: self.detections.iter().map(|d| d.bbox).collect(),
            scores: self.detections.iter().map(|d| d.score).collect(),
        }
    }
}

fn detection_cmp(a: &Detection, b: &Detection) -> Ordering {
    detection_order((&a.bbox, a.score), (&b.bbox, b.score)).then(a.layer_index.cmp(&b.layer_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOrder {
    /// Closing, then opening.
    #[default]
    CloseOpen,
    /// Opening, then closing.
    OpenClose,
}

impl std::str::FromStr for MorphOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "close_open" => Ok(Self::CloseOpen),
            "open_close" => Ok(Self::OpenClose),
            _ => Err(Error::Config(format!("unknown morph order {s:?}"))),
        }
    }
}

impl std::fmt::Display for MorphOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CloseOpen => "close_open",
            Self::OpenClose => "open_close",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxParams {
    pub kernel: usize,
    pub min_area_frac: f64,
    pub nms_sigma: f64,
    pub score_floor: f64,
    pub morph_order: MorphOrder,
}

impl Default for BoxParams {
    fn default() -> Self {
        Self {
            kernel: 3,
            min_area_frac: 0.001,
            nms_sigma: 0.5,
            score_floor: 0.001,
            morph_order: MorphOrder::CloseOpen,
        }
    }
}

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

impl Extremum {
    #[inline]
    fn pick(self, a: f32, b: f32) -> f32 {
        match self {
            Extremum::Min => a.min(b),
            Extremum::Max => a.max(b),
        }
    }
}

/// Square `kernel x kernel` min/max filter; the window is clipped at the
/// raster border. Runs as a row pass followed by a column pass.
fn rank_filter(src: &Raster, kernel: usize, op: Extremum) -> Raster {
    let (w, h) = src.dims();
    let r = kernel / 2;
    let mut rows = vec![0f32; w * h];
    crate::par::for_each_row(&mut rows, w, |y, out| {
        let line = src.row(y);
        for (x, o) in out.iter_mut().enumerate() {
            let (a, b) = (x.saturating_sub(r), (x + r).min(w - 1));
            *o = line[a..=b]
                .iter()
                .copied()
                .reduce(|p, q| op.pick(p, q))
                .unwrap();
        }
    });
    let mut cols = vec![0f32; w * h];
    crate::par::for_each_row(&mut cols, w, |y, out| {
        let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
        out.copy_from_slice(&rows[a * w..(a + 1) * w]);
        for yy in a + 1..=b {
            for (o, &v) in out.iter_mut().zip(&rows[yy * w..(yy + 1) * w]) {
                *o = op.pick(*o, v);
            }
        }
    });
    Raster::new(w, h, cols).expect("same dims")
}

pub fn dilate(src: &Raster, kernel: usize) -> Raster {
    rank_filter(src, kernel, Extremum::Max)
}

pub fn erode(src: &Raster, kernel: usize) -> Raster {
    rank_filter(src, kernel, Extremum::Min)
}

/// Closing then opening (or the reverse) with a square structuring element.
pub fn morph_clean(binary: &Raster, kernel: usize, order: MorphOrder) -> Raster {
    if kernel <= 1 {
        return binary.clone();
    }
    let close = |r: &Raster| erode(&dilate(r, kernel), kernel);
    let open = |r: &Raster| dilate(&erode(r, kernel), kernel);
    match order {
        MorphOrder::CloseOpen => open(&close(binary)),
        MorphOrder::OpenClose => close(&open(binary)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub bbox: BBox,
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

/// 8-connected foreground components, dropping those smaller than
/// `min_area_frac` of the image. Ordered by `ymin`, then `xmin`.
pub fn connected_components(binary: &Raster, min_area_frac: f64) -> Vec<Component> {
    let (w, h) = binary.dims();
    let min_area = min_area_frac * (w * h) as f64;
    let fg = |i: usize| binary.data()[i] > 0.0;
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for start in 0..w * h {
        if seen[start] || !fg(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            pixels.push(i);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && fg(j) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if (pixels.len() as f64) < min_area {
            continue;
        }
        pixels.sort_unstable();
        out.push(Component {
            bbox: BBox {
                xmin: x0 as i32,
                ymin: y0 as i32,
                xmax: x1 as i32 + 1,
                ymax: y1 as i32 + 1,
            },
            pixels,
        });
    }
    out.sort_by_key(|c| (c.bbox.ymin, c.bbox.xmin, c.pixels[0]));
    out
}

/// Mean of `raw` over the component pixels.
pub fn score_box(raw: &Raster, pixels: &[usize]) -> Result<f64> {
    if pixels.is_empty() {
        return Err(Error::contract("cannot score an empty component"));
    }
    let data = raw.data();
    let mut sum = 0.0;
    for &i in pixels {
        let v = data.get(i).ok_or_else(|| {
            Error::contract(format!(
                "component pixel {i} outside {}-pixel raster",
                data.len()
            ))
        })?;
        sum += *v as f64;
    }
    Ok(sum / pixels.len() as f64)
}

/// Gaussian Soft-NMS: repeatedly keep the best remaining detection and decay
/// the rest by `exp(-iou^2 / sigma)`; drop anything that falls below
/// `score_floor`.
pub fn soft_nms(mut dets: Vec<Detection>, sigma: f64, score_floor: f64) -> Vec<Detection> {
    let mut kept = Vec::with_capacity(dets.len());
    while !dets.is_empty() {
        let best = (0..dets.len())
            .min_by(|&a, &b| detection_cmp(&dets[a], &dets[b]))
            .unwrap();
        let top = dets.swap_remove(best);
        for d in dets.iter_mut() {
            let o = iou(&top.bbox, &d.bbox);
            d.score *= (-(o * o) / sigma).exp();
        }
        dets.retain(|d| d.score >= score_floor);
        if top.score >= score_floor {
            kept.push(top);
        }
    }
    kept.sort_by(detection_cmp);
    kept
}

/// Candidate detections from one fused layer, before suppression.
pub fn layer_detections(layer: &CombinedLayer, params: &BoxParams) -> Result<Vec<Detection>> {
    let clean = morph_clean(&layer.binary, params.kernel, params.morph_order);
    connected_components(&clean, params.min_area_frac)
        .into_iter()
        .map(|c| {
            Ok(Detection {
                bbox: c.bbox,
                score: score_box(&layer.raw, &c.pixels)?,
                layer_index: layer.layer_index,
                component_area: c.pixels.len(),
            })
        })
        .collect()
}

/// Cleans, labels and scores every layer, pools the candidates and applies
/// Soft-NMS across layers.
pub fn extract_detections(
    stem: &str,
    layers: &[CombinedLayer],
    params: &BoxParams,
) -> Result<DetectionSet> {
    let per_layer = crate::par::map(layers, |l| layer_detections(l, params));
    let mut pooled = Vec::new();
    for dets in per_layer {
        pooled.extend(dets?);
    }
    let kept = soft_nms(pooled, params.nms_sigma, params.score_floor);
    Ok(DetectionSet::new(stem, kept))
}
