//! Batch orchestration: discovery over a dataset directory and evaluation
//! against VOC annotations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::{normalize_unit, AttentionMap};
use crate::boxes::{extract_detections, DetectionSet};
use crate::config::Config;
use crate::depth_layers::{layer_depth, DepthLayer, LayerSet};
use crate::error::{Error, Result};
use crate::eval::{coco_thresholds, emit_pr_curve, evaluate, EvalReport};
use crate::fusion::{compute_weights, fuse_image, FusionWeights};
use crate::raster::Raster;
use crate::store::{read_predictions, read_voc_xml, scan_manifest, write_predictions, GroundTruth};
use crate::synth::{generate_suite, SuiteKind};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";

/// Per-image result of the discovery pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub detections: DetectionSet,
    pub layer_count: usize,
    pub weights: FusionWeights,
}

fn whole_layer(mask: Raster) -> LayerSet {
    LayerSet {
        layers: vec![DepthLayer {
            lo: 0.0,
            hi: 1.0,
            mask,
            peak_bin: 0,
        }],
        discarded: Vec::new(),
    }
}

/// Runs discovery on one image. Attention is resampled to the depth
/// resolution, so boxes are in depth-raster pixel coordinates.
pub fn process_image(
    stem: &str,
    heads: &[Raster],
    depth: &Raster,
    cfg: &Config,
) -> Result<ImageOutcome> {
    if let Some((i, v)) = depth.first_non_finite() {
        return Err(Error::PfmData { index: i, value: v });
    }
    let (w, h) = depth.dims();
    let depth_norm = normalize_unit(depth);
    let att = AttentionMap::from_heads(heads, w, h, cfg.sparsity)?;

    let layers = if !cfg.use_depth {
        whole_layer(Raster::filled(w, h, 1.0))
    } else if !cfg.isolate_layers {
        whole_layer(depth_norm.clone())
    } else {
        layer_depth(&depth_norm, &cfg.layering())
    };
    let weights = if cfg.use_depth && cfg.use_weights {
        compute_weights(&att, &depth_norm, cfg.cc_threshold, cfg.lambda_consistency)?
    } else {
        FusionWeights::UNIT
    };
    let fused = fuse_image(&att, &layers, &weights, &cfg.fusion())?;
    let detections = extract_detections(stem, &fused, &cfg.boxes())?;
    Ok(ImageOutcome {
        detections,
        layer_count: layers.n(),
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedImage {
    pub stem: String,
    pub detections: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub stem: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscoverSummary {
    pub processed: Vec<ProcessedImage>,
    pub skipped: Vec<SkippedImage>,
}

impl DiscoverSummary {
    pub fn detection_count(&self) -> usize {
        self.processed.iter().map(|p| p.detections).sum()
    }
}

/// Processes every image under `input_dir` and writes predictions and a
/// summary to `out_dir`. Unreadable images are reported per stem and
/// skipped. If nothing could be processed, no files are written and the
/// returned summary has an empty `processed` list.
pub fn cmd_discover(
    input_dir: &Path,
    out_dir: &Path,
    cfg: &Config,
    threads: usize,
) -> Result<DiscoverSummary> {
    cfg.validate()?;
    let manifest = scan_manifest(input_dir)?;
    let mut summary = DiscoverSummary {
        processed: Vec::new(),
        skipped: manifest
            .skipped
            .iter()
            .map(|s| SkippedImage {
                stem: s.stem.clone(),
                reason: s.reason.clone(),
            })
            .collect(),
    };

    let results = crate::par::with_threads(threads, || {
        crate::par::map(&manifest.records, |stub| {
            let record = stub.load()?;
            process_image(&record.stem, &record.attention_heads, &record.depth, cfg)
        })
    });

    let mut predictions = Vec::new();
    for (stub, result) in manifest.records.iter().zip(results) {
        match result {
            Ok(outcome) => {
                summary.processed.push(ProcessedImage {
                    stem: stub.stem.clone(),
                    detections: outcome.detections.detections.len(),
                    layers: outcome.layer_count,
                });
                predictions.push(outcome.detections.to_prediction());
            }
            Err(e) => {
                log::warn!("{}: {e}", stub.stem);
                summary.skipped.push(SkippedImage {
                    stem: stub.stem.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    summary.skipped.sort_by(|a, b| a.stem.cmp(&b.stem));

    if summary.processed.is_empty() {
        return Ok(summary);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_predictions(&predictions, out_dir.join(PREDICTIONS_FILE))?;
    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

fn annotation_stem(name: &str) -> Option<&str> {
    name.strip_suffix(".ann.xml")
        .or_else(|| name.strip_suffix(".xml"))
}

/// Reads every `X.ann.xml` (or plain `X.xml`) in `dir`, keyed by the file
/// stem. When both forms exist for a stem the `.ann.xml` file wins.
pub fn load_annotations(dir: &Path) -> Result<Vec<GroundTruth>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    names.sort();
    let mut chosen: std::collections::BTreeMap<String, PathBuf> = Default::default();
    for name in &names {
        let Some(stem) = annotation_stem(name) else {
            continue;
        };
        let is_ann = name.ends_with(".ann.xml");
        if is_ann || !chosen.contains_key(stem) {
            chosen.insert(stem.to_string(), dir.join(name));
        }
    }
    chosen
        .into_iter()
        .map(|(stem, path)| {
            let parsed = read_voc_xml(&path)?;
            if parsed.clamped > 0 {
                log::warn!("{stem}: {} boxes clamped to the image", parsed.clamped);
            }
            let mut gt = parsed.ground_truth;
            gt.stem = stem;
            Ok(gt)
        })
        .collect()
}

/// `pr_iou050`, `pr_iou055`, ...
pub fn pr_file_stem(iou_threshold: f64) -> String {
    format!("pr_iou{:03}", (iou_threshold * 100.0).round() as u32)
}

/// Evaluates a predictions file against the annotations in `ann_dir` and
/// writes the report and PR curves to `out_dir`.
pub fn cmd_eval(
    pred_path: &Path,
    ann_dir: &Path,
    out_dir: &Path,
    cfg: &Config,
) -> Result<EvalReport> {
    cfg.validate()?;
    let preds = read_predictions(pred_path)?;
    let gts = load_annotations(ann_dir)?;
    let gt_stems: BTreeSet<&str> = gts.iter().map(|g| g.stem.as_str()).collect();
    let (preds, unannotated): (Vec<_>, Vec<_>) = preds
        .into_iter()
        .partition(|p| gt_stems.contains(p.image.as_str()));
    if preds.is_empty() {
        return Err(Error::Eval(format!(
            "no predicted image has an annotation in {}",
            ann_dir.display()
        )));
    }
    for p in &unannotated {
        log::warn!("{}: no annotation, not evaluated", p.image);
    }

    let report = evaluate(&preds, &gts, cfg.iou_thresh, cfg.corloc_mode)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    for (curve, t) in report.pr_curves.iter().zip(coco_thresholds()) {
        let title = format!("PR @ IoU {t:.2}");
        emit_pr_curve(&curve.points, out_dir, &pr_file_stem(t), &title)?;
    }
    Ok(report)
}

/// Headline metrics at table precision.
pub fn headline(report: &EvalReport) -> String {
    format!(
        "CorLoc: {:.1}\nodAP50: {:.1}\nodAP50:95: {:.1}\n",
        report.corloc, report.odap50, report.odap_coco
    )
}

pub fn cmd_synth(
    n: usize,
    seed: u64,
    kind: SuiteKind,
    noise_sigma: f64,
    out_dir: &Path,
) -> Result<Vec<String>> {
    generate_suite(n, seed, kind, noise_sigma, out_dir)
}
