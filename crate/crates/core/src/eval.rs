//! Class-agnostic evaluation: CorLoc and object-discovery AP.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::store::predictions::Prediction;
use crate::store::voc::GroundTruth;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorLocMode {
    /// Only each image's highest-scoring box counts.
    #[default]
    Top1,
    /// Any predicted box may hit.
    AnyBox,
}

impl std::str::FromStr for CorLocMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(Self::Top1),
            "any_box" => Ok(Self::AnyBox),
            _ => Err(Error::Config(format!("unknown corloc mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for CorLocMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Top1 => "top1",
            Self::AnyBox => "any_box",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorLocResult {
    /// Percentage in `[0, 100]`.
    pub corloc: f64,
    pub correct: usize,
    pub images: usize,
    /// Images with ground truth but no prediction line; counted incorrect.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched a difficult box: neither hit nor miss.
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub stem: String,
    /// Index into the image's canonically ordered boxes.
    pub detection: usize,
    pub matched_gt: Option<usize>,
    pub iou_at_match: f64,
    pub score: f64,
    pub outcome: MatchOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub iou_threshold: f64,
    /// `(recall, precision)` after each counted detection, in rank order.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub iou_threshold: f64,
    /// Percentage in `[0, 100]`.
    pub ap: f64,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corloc: f64,
    pub odap50: f64,
    pub odap_coco: f64,
    pub image_count: usize,
    pub gt_count: usize,
    pub missing_images: Vec<String>,
    pub ap_per_threshold: Vec<(f64, f64)>,
    pub pr_curves: Vec<PrCurve>,
}

fn canonical(preds: &[Prediction]) -> Result<BTreeMap<&str, Prediction>> {
    let mut out = BTreeMap::new();
    for p in preds {
        if out.insert(p.image.as_str(), p.sorted()?).is_some() {
            return Err(Error::Eval(format!(
                "duplicate prediction line for {}",
                p.image
            )));
        }
    }
    Ok(out)
}

fn gt_index(gts: &[GroundTruth]) -> Result<BTreeMap<&str, &GroundTruth>> {
    let mut out = BTreeMap::new();
    for g in gts {
        if out.insert(g.stem.as_str(), g).is_some() {
            return Err(Error::Eval(format!("duplicate annotation for {}", g.stem)));
        }
    }
    Ok(out)
}

fn hits(b: &BBox, gt: &GroundTruth, thresh: f64) -> bool {
    gt.boxes().any(|g| iou(b, g) >= thresh)
}

/// Percentage of annotated images whose top box (or any box, per `mode`)
/// overlaps some ground-truth box at `iou >= iou_thresh`.
pub fn corloc(
    preds: &[Prediction],
    gts: &[GroundTruth],
    iou_thresh: f64,
    mode: CorLocMode,
) -> Result<CorLocResult> {
    let preds = canonical(preds)?;
    let gts = gt_index(gts)?;
    let (mut images, mut correct, mut missing) = (0, 0, Vec::new());
    for (stem, gt) in gts {
        if gt.objects.is_empty() {
            continue;
        }
        images += 1;
        let Some(p) = preds.get(stem) else {
            missing.push(stem.to_string());
            continue;
        };
        let ok = match mode {
            CorLocMode::Top1 => p.boxes.first().is_some_and(|b| hits(b, gt, iou_thresh)),
            CorLocMode::AnyBox => p.boxes.iter().any(|b| hits(b, gt, iou_thresh)),
        };
        correct += ok as usize;
    }
    let corloc = if images == 0 {
        0.0
    } else {
        100.0 * correct as f64 / images as f64
    };
    Ok(CorLocResult {
        corloc,
        correct,
        images,
        missing,
    })
}

/// Greedy class-agnostic matching over the dataset-wide score ranking.
///
/// Each detection takes the unmatched ground-truth box of its image with the
/// highest IoU; at or above `iou_thresh` it is a hit (or ignored, if that box
/// is difficult), otherwise a false positive. Detections on images without
/// annotations are not evaluated.
pub fn match_detections(
    preds: &[Prediction],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> Result<Vec<MatchRecord>> {
    let preds = canonical(preds)?;
    let gts = gt_index(gts)?;

    let mut ranked: Vec<(&str, usize, f64)> = preds
        .iter()
        .filter(|(stem, _)| gts.contains_key(*stem))
        .flat_map(|(stem, p)| {
            p.scores
                .iter()
                .enumerate()
                .map(move |(i, &s)| (*stem, i, s))
        })
        .collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(b.0)).then(a.1.cmp(&b.1)));

    let mut matched: BTreeMap<&str, Vec<bool>> = gts
        .iter()
        .map(|(s, g)| (*s, vec![false; g.objects.len()]))
        .collect();
    let mut records = Vec::with_capacity(ranked.len());
    for (stem, idx, score) in ranked {
        let gt = gts[stem];
        let taken = matched.get_mut(stem).expect("every gt stem has a slot");
        let bbox = preds[stem].boxes[idx];
        let mut best: Option<(usize, f64)> = None;
        for (g, obj) in gt.objects.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let o = iou(&bbox, &obj.bbox);
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        let (matched_gt, iou_at_match, outcome) = match best {
            Some((g, o)) if o >= iou_thresh => {
                if gt.objects[g].difficult {
                    (Some(g), o, MatchOutcome::Ignored)
                } else {
                    taken[g] = true;
                    (Some(g), o, MatchOutcome::TruePositive)
                }
            }
            Some((_, o)) => (None, o, MatchOutcome::FalsePositive),
            None => (None, 0.0, MatchOutcome::FalsePositive),
        };
        records.push(MatchRecord {
            stem: stem.to_string(),
            detection: idx,
            matched_gt,
            iou_at_match,
            score,
            outcome,
        });
    }
    Ok(records)
}

/// Area under the monotone precision envelope (all-point interpolation),
/// as a fraction in `[0, 1]`.
pub fn average_precision(points: &[(f64, f64)]) -> f64 {
    let mut rec = vec![0.0];
    let mut prec = vec![0.0];
    for &(r, p) in points {
        rec.push(r);
        prec.push(p);
    }
    rec.push(1.0);
    prec.push(0.0);
    for i in (0..prec.len() - 1).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    (1..rec.len())
        .filter(|&i| rec[i] != rec[i - 1])
        .map(|i| (rec[i] - rec[i - 1]) * prec[i])
        .sum()
}

pub fn odap_at(preds: &[Prediction], gts: &[GroundTruth], iou_thresh: f64) -> Result<ApResult> {
    let positives: usize = gts
        .iter()
        .map(|g| g.objects.iter().filter(|o| !o.difficult).count())
        .sum();
    if positives == 0 {
        return Err(Error::Eval(
            "no non-difficult ground-truth boxes; AP is undefined".into(),
        ));
    }
    let records = match_detections(preds, gts, iou_thresh)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    for r in &records {
        match r.outcome {
            MatchOutcome::TruePositive => tp += 1,
            MatchOutcome::FalsePositive => fp += 1,
            MatchOutcome::Ignored => continue,
        }
        points.push((tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64));
    }
    Ok(ApResult {
        iou_threshold: iou_thresh,
        ap: 100.0 * average_precision(&points),
        curve: PrCurve {
            iou_threshold: iou_thresh,
            points,
        },
    })
}

pub fn odap(
    preds: &[Prediction],
    gts: &[GroundTruth],
    iou_threshs: &[f64],
) -> Result<Vec<ApResult>> {
    iou_threshs
        .iter()
        .map(|&t| odap_at(preds, gts, t))
        .collect()
}

pub fn evaluate(
    preds: &[Prediction],
    gts: &[GroundTruth],
    iou_thresh: f64,
    mode: CorLocMode,
) -> Result<EvalReport> {
    let loc = corloc(preds, gts, iou_thresh, mode)?;
    let aps = odap(preds, gts, &coco_thresholds())?;
    let odap50 = aps[0].ap;
    let odap_coco = aps.iter().map(|a| a.ap).sum::<f64>() / aps.len() as f64;
    Ok(EvalReport {
        corloc: loc.corloc,
        odap50,
        odap_coco,
        image_count: gts.len(),
        gt_count: gts.iter().map(|g| g.objects.len()).sum(),
        missing_images: loc.missing,
        ap_per_threshold: aps.iter().map(|a| (a.iou_threshold, a.ap)).collect(),
        pr_curves: aps.into_iter().map(|a| a.curve).collect(),
    })
}

pub fn pr_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("recall,precision\n");
    for (r, p) in points {
        let _ = writeln!(out, "{r},{p}");
    }
    out
}

pub fn parse_pr_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some("recall,precision") {
        return Err(Error::Eval(
            "PR CSV header must be \"recall,precision\"".into(),
        ));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (r, p) = l
                .split_once(',')
                .ok_or_else(|| Error::Eval(format!("bad PR row {l:?}")))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Eval(format!("bad PR value {s:?}")))
            };
            Ok((num(r)?, num(p)?))
        })
        .collect()
}

pub fn pr_svg(points: &[(f64, f64)], title: &str) -> String {
    const SIZE: f64 = 320.0;
    const PAD: f64 = 40.0;
    let sx = |r: f64| PAD + r * (SIZE - 2.0 * PAD);
    let sy = |p: f64| SIZE - PAD - p * (SIZE - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{x0} {y0} L{x1} {y0} M{x0} {y0} L{x0} {y1}" stroke="black" fill="none"/>"#,
        x0 = sx(0.0),
        y0 = sy(0.0),
        x1 = sx(1.0),
        y1 = sy(1.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">recall</text>"#,
        SIZE / 2.0,
        SIZE - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">precision</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-size="13" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        title.replace('&', "&amp;").replace('<', "&lt;")
    );
    if !points.is_empty() {
        let coords: Vec<String> = points
            .iter()
            .map(|&(r, p)| format!("{:.2},{:.2}", sx(r), sy(p)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#,
            coords.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<stem>.csv` and `<stem>.svg` for one curve.
pub fn emit_pr_curve(points: &[(f64, f64)], dir: &Path, stem: &str, title: &str) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, pr_csv(points)).map_err(|e| Error::io(&csv, e))?;
    let svg = dir.join(format!("{stem}.svg"));
    fs::write(&svg, pr_svg(points, title)).map_err(|e| Error::io(&svg, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::voc::GtObject;

    fn b(x0: i32, y0: i32, x1: i32, y1: i32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn gt(stem: &str, boxes: &[(BBox, bool)]) -> GroundTruth {
        GroundTruth {
            stem: stem.into(),
            image_width: 100,
            image_height: 100,
            objects: boxes
                .iter()
                .map(|&(bbox, difficult)| GtObject {
                    bbox,
                    label: "obj".into(),
                    difficult,
                })
                .collect(),
        }
    }

    fn pred(stem: &str, dets: &[(BBox, f64)]) -> Prediction {
        Prediction {
            image: stem.into(),
            boxes: dets.iter().map(|d| d.0).collect(),
            scores: dets.iter().map(|d| d.1).collect(),
        }
    }

    #[test]
    fn perfect_and_empty() {
        let g = vec![
            gt("a", &[(b(0, 0, 10, 10), false)]),
            gt("b", &[(b(5, 5, 20, 20), false)]),
        ];
        let p = vec![
            pred("a", &[(b(0, 0, 10, 10), 1.0)]),
            pred("b", &[(b(5, 5, 20, 20), 1.0)]),
        ];
        assert_eq!(corloc(&p, &g, 0.5, CorLocMode::Top1).unwrap().corloc, 100.0);
        for t in coco_thresholds() {
            assert_eq!(odap_at(&p, &g, t).unwrap().ap, 100.0);
        }
        let none: Vec<Prediction> = vec![pred("a", &[]), pred("b", &[])];
        assert_eq!(
            corloc(&none, &g, 0.5, CorLocMode::Top1).unwrap().corloc,
            0.0
        );
        let missing = corloc(&[], &g, 0.5, CorLocMode::Top1).unwrap();
        assert_eq!(missing.corloc, 0.0);
        assert_eq!(missing.missing, vec!["a", "b"]);
    }

    #[test]
    fn disjoint_is_zero_ap() {
        let g = vec![gt("a", &[(b(0, 0, 10, 10), false)])];
        let p = vec![pred("a", &[(b(50, 50, 60, 60), 0.9)])];
        assert_eq!(odap_at(&p, &g, 0.5).unwrap().ap, 0.0);
    }

    #[test]
    fn no_positives_is_error() {
        let g = vec![gt("a", &[(b(0, 0, 10, 10), true)])];
        assert!(matches!(odap_at(&[], &g, 0.5), Err(Error::Eval(_))));
    }

    #[test]
    fn duplicates_one_tp() {
        let g = vec![gt("a", &[(b(0, 0, 10, 10), false)])];
        let p = vec![pred(
            "a",
            &[
                (b(0, 0, 10, 10), 0.9),
                (b(0, 0, 10, 9), 0.8),
                (b(0, 0, 9, 10), 0.7),
            ],
        )];
        let recs = match_detections(&p, &g, 0.5).unwrap();
        let tps = recs
            .iter()
            .filter(|r| r.outcome == MatchOutcome::TruePositive)
            .count();
        assert_eq!(tps, 1);
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].outcome, MatchOutcome::TruePositive);
    }

    #[test]
    fn single_tp_curve() {
        let g = vec![gt("a", &[(b(0, 0, 10, 10), false)])];
        let p = vec![pred("a", &[(b(0, 0, 10, 10), 0.5)])];
        assert_eq!(odap_at(&p, &g, 0.5).unwrap().curve.points, vec![(1.0, 1.0)]);
    }

    #[test]
    fn ap_envelope() {
        // TP, FP, TP with 2 positives: precision 1, 0.5, 2/3 -> envelope 1 then 2/3
        let ap = average_precision(&[(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(average_precision(&[]), 0.0);
    }

    #[test]
    fn csv_round_trip_and_svg() {
        let pts = vec![(0.25, 1.0), (0.5, 0.6666666666666666), (1.0, 0.1)];
        assert_eq!(parse_pr_csv(&pr_csv(&pts)).unwrap(), pts);
        assert_eq!(pr_csv(&[]), "recall,precision\n");
        assert!(parse_pr_csv(&pr_csv(&[])).unwrap().is_empty());
        let svg = pr_svg(&pts, "AP@0.5");
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
        assert!(!pr_svg(&[], "x").contains("polyline"));
    }
}
