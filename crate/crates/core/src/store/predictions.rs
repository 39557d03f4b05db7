//! Prediction JSON-lines: one `{"image", "boxes", "scores"}` object per line.

use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image: String,
    pub boxes: Vec<BBox>,
    pub scores: Vec<f64>,
}

/// Score descending, then `xmin`, then `ymin`.
pub fn detection_order(a: (&BBox, f64), b: (&BBox, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.xmin.cmp(&b.0.xmin))
        .then(a.0.ymin.cmp(&b.0.ymin))
        .then(a.0.xmax.cmp(&b.0.xmax))
        .then(a.0.ymax.cmp(&b.0.ymax))
}

impl Prediction {
    pub fn validate(&self) -> Result<()> {
        if self.boxes.len() != self.scores.len() {
            return Err(Error::contract(format!(
                "{}: {} boxes but {} scores",
                self.image,
                self.boxes.len(),
                self.scores.len()
            )));
        }
        if let Some(s) = self.scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::contract(format!(
                "{}: non-finite score {s}",
                self.image
            )));
        }
        Ok(())
    }

    /// Returns a copy with boxes in canonical order.
    pub fn sorted(&self) -> Result<Prediction> {
        self.validate()?;
        let mut pairs: Vec<(BBox, f64)> = self
            .boxes
            .iter()
            .copied()
            .zip(self.scores.iter().copied())
            .collect();
        pairs.sort_by(|a, b| detection_order((&a.0, a.1), (&b.0, b.1)));
        let (boxes, scores) = pairs.into_iter().unzip();
        Ok(Prediction {
            image: self.image.clone(),
            boxes,
            scores,
        })
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.sorted()?)?)
    }
}

pub fn encode_predictions(preds: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&p.to_json_line()?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_predictions(preds: &[Prediction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = encode_predictions(preds)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn decode_predictions(text: &str) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let p: Prediction = serde_json::from_str(line)?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_predictions(&text)
}
