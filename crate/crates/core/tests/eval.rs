use dado::eval::{corloc, evaluate, odap_at, CorLocMode, MatchOutcome};
use dado::pipeline::{cmd_eval, REPORT_FILE};
use dado::store::{write_predictions, write_voc_xml, GroundTruth, GtObject, Prediction};
use dado::{BBox, Config};

fn b(x0: i32, y0: i32, x1: i32, y1: i32) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn gt(stem: &str, boxes: &[BBox]) -> GroundTruth {
    GroundTruth {
        stem: stem.into(),
        image_width: 64,
        image_height: 64,
        objects: boxes
            .iter()
            .map(|&bbox| GtObject {
                bbox,
                label: "obj".into(),
                difficult: false,
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
fn corloc_four_images() {
    let obj = b(10, 10, 30, 30);
    let gts: Vec<_> = ["p", "q", "r", "s"].iter().map(|s| gt(s, &[obj])).collect();
    let preds = vec![
        pred("p", &[(obj, 0.9)]),
        pred("q", &[(b(12, 12, 30, 30), 0.5)]),
        pred("r", &[(b(40, 40, 60, 60), 0.8), (obj, 0.2)]),
        pred("s", &[(b(10, 10, 30, 25), 0.4)]),
    ];
    let top1 = corloc(&preds, &gts, 0.5, CorLocMode::Top1).unwrap();
    assert_eq!((top1.correct, top1.images, top1.corloc), (3, 4, 75.0));
    let any = corloc(&preds, &gts, 0.5, CorLocMode::AnyBox).unwrap();
    assert_eq!(any.corloc, 100.0);
}

#[test]
fn hand_pr_table() {
    // 3 images, 4 objects, 5 detections
    let (a, c, e, f) = (
        b(0, 0, 10, 10),
        b(20, 20, 30, 30),
        b(0, 0, 20, 20),
        b(40, 40, 50, 50),
    );
    let gts = vec![gt("x", &[a, c]), gt("y", &[e]), gt("z", &[f])];
    let preds = vec![
        pred("x", &[(a, 0.95), (b(60, 60, 70, 70), 0.7)]),
        pred("y", &[(e, 0.9), (e, 0.6)]),
        pred("z", &[(f, 0.5)]),
    ];
    // 0.95 TP, 0.9 TP, 0.7 FP, 0.6 FP (duplicate), 0.5 TP
    let ap = odap_at(&preds, &gts, 0.5).unwrap();
    let expected = vec![
        (0.25, 1.0),
        (0.5, 1.0),
        (0.5, 2.0 / 3.0),
        (0.5, 0.5),
        (0.75, 0.6),
    ];
    assert_eq!(ap.curve.points.len(), expected.len());
    for (g, w) in ap.curve.points.iter().zip(&expected) {
        assert!(
            (g.0 - w.0).abs() < 1e-12 && (g.1 - w.1).abs() < 1e-12,
            "{g:?} vs {w:?}"
        );
    }
    assert!((ap.ap - 100.0 * (0.5 + 0.25 * 0.6)).abs() < 1e-9);

    let report = evaluate(&preds, &gts, 0.5, CorLocMode::Top1).unwrap();
    assert_eq!(report.corloc, 100.0);
    assert_eq!(report.gt_count, 4);
}

#[test]
fn match_outcomes_visible() {
    let a = b(0, 0, 10, 10);
    let mut g = gt("x", &[a]);
    g.objects[0].difficult = true;
    let recs = dado::eval::match_detections(&[pred("x", &[(a, 1.0)])], &[g], 0.5).unwrap();
    assert_eq!(recs[0].outcome, MatchOutcome::Ignored);
}

#[test]
fn perfect_predictions_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let gts = vec![
        gt("one", &[b(1, 1, 20, 20)]),
        gt("two", &[b(5, 5, 9, 40), b(30, 30, 60, 60)]),
    ];
    for g in &gts {
        write_voc_xml(g, dir.path().join(format!("{}.ann.xml", g.stem))).unwrap();
    }
    let preds: Vec<Prediction> = gts
        .iter()
        .map(|g| Prediction {
            image: g.stem.clone(),
            boxes: g.boxes().copied().collect(),
            scores: vec![1.0; g.objects.len()],
        })
        .collect();
    let pred_path = dir.path().join("p.jsonl");
    write_predictions(&preds, &pred_path).unwrap();
    let out = dir.path().join("out");
    let report = cmd_eval(&pred_path, dir.path(), &out, &Config::default()).unwrap();
    assert_eq!((report.corloc, report.odap50), (100.0, 100.0));
    let text = std::fs::read_to_string(out.join(REPORT_FILE)).unwrap();
    assert!(text.contains("\"odap50\": 100.0"));

    write_predictions(
        &gts.iter().map(|g| pred(&g.stem, &[])).collect::<Vec<_>>(),
        &pred_path,
    )
    .unwrap();
    let report = cmd_eval(&pred_path, dir.path(), &out, &Config::default()).unwrap();
    assert_eq!(report.corloc, 0.0);
}
