//! Axis-aligned integer boxes in 0-based half-open pixel coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[xmin, xmax) x [ymin, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[i32; 4]", try_from = "[i32; 4]")]
pub struct BBox {
    pub xmin: i32,
    pub ymin: i32,
    pub xmax: i32,
    pub ymax: i32,
}

impl BBox {
    pub fn new(xmin: i32, ymin: i32, xmax: i32, ymax: i32) -> Result<Self> {
        if xmax <= xmin || ymax <= ymin {
            return Err(Error::contract(format!(
                "degenerate box [{xmin}, {ymin}, {xmax}, {ymax}]"
            )));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    #[inline]
    pub fn width(&self) -> i64 {
        (self.xmax - self.xmin) as i64
    }

    #[inline]
    pub fn height(&self) -> i64 {
        (self.ymax - self.ymin) as i64
    }

    #[inline]
    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = (self.xmax.min(other.xmax) - self.xmin.max(other.xmin)).max(0) as i64;
        let h = (self.ymax.min(other.ymax) - self.ymin.max(other.ymin)).max(0) as i64;
        w * h
    }

    /// Smallest box covering both.
    pub fn union_box(&self, other: &BBox) -> BBox {
        BBox {
            xmin: self.xmin.min(other.xmin),
            ymin: self.ymin.min(other.ymin),
            xmax: self.xmax.max(other.xmax),
            ymax: self.ymax.max(other.ymax),
        }
    }

    pub fn to_array(self) -> [i32; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[i32; 4]> for BBox {
    type Error = Error;

    fn try_from(a: [i32; 4]) -> Result<Self> {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

/// Intersection over union using half-open pixel areas.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}
