//! Attention/depth fusion: gated weights, per-layer combination, adaptive
//! threshold and binarization.

use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::depth_layers::{depth_gradient_consistency, LayerSet};
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub cc: f64,
    pub w_a: f64,
    pub w_d: f64,
    /// True when the cross-correlation gate fired and both weights are 0.5.
    pub gated: bool,
}

impl FusionWeights {
    pub const UNIT: FusionWeights = FusionWeights {
        cc: 0.0,
        w_a: 1.0,
        w_d: 1.0,
        gated: false,
    };

    pub fn from_stats(cc: f64, sparsity: f64, consistency: f64, cc_threshold: f64) -> Self {
        if cc > cc_threshold {
            FusionWeights {
                cc,
                w_a: 0.5,
                w_d: 0.5,
                gated: true,
            }
        } else {
            FusionWeights {
                cc,
                w_a: 1.0 / (1.0 + sparsity),
                w_d: consistency,
                gated: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// `(w_a * att) * (w_d * mask)`.
    #[default]
    Product,
    /// `clamp(w_a * att + w_d * mask, 0, 1)` on the mask support.
    Sum,
}

impl std::str::FromStr for CombineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(Self::Product),
            "sum" => Ok(Self::Sum),
            _ => Err(Error::Config(format!("unknown combine mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for CombineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Product => "product",
            Self::Sum => "sum",
        })
    }
}

/// One fused layer: raw map, its threshold and the `{0, 255}` mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLayer {
    pub raw: Raster,
    pub tau: f64,
    pub binary: Raster,
    /// 1-based, in foreground layer order (nearest first).
    pub layer_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub cc_threshold: f64,
    pub mode: CombineMode,
    /// Restrict threshold statistics to the layer support.
    pub tau_on_support: bool,
    pub lambda_consistency: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            cc_threshold: 0.5,
            mode: CombineMode::Product,
            tau_on_support: false,
            lambda_consistency: 10.0,
        }
    }
}

/// Mean of the elementwise product.
pub fn cross_correlation(att: &Raster, depth: &Raster) -> Result<f64> {
    att.ensure_same_dims(depth, "cross_correlation")?;
    let sum: f64 = att
        .data()
        .iter()
        .zip(depth.data())
        .map(|(&a, &d)| a as f64 * d as f64)
        .sum();
    Ok(sum / att.len() as f64)
}

/// `depth` must already be normalized to `[0, 1]`.
pub fn compute_weights(
    att: &AttentionMap,
    depth: &Raster,
    cc_threshold: f64,
    lambda_consistency: f64,
) -> Result<FusionWeights> {
    let cc = cross_correlation(&att.mask, depth)?;
    if cc > cc_threshold {
        return Ok(FusionWeights::from_stats(cc, 0.0, 1.0, cc_threshold));
    }
    let consistency = depth_gradient_consistency(depth, lambda_consistency);
    Ok(FusionWeights::from_stats(
        cc,
        att.sparsity,
        consistency,
        cc_threshold,
    ))
}

pub fn combine(
    att: &Raster,
    mask: &Raster,
    w: &FusionWeights,
    mode: CombineMode,
) -> Result<Raster> {
    att.ensure_same_dims(mask, "combine")?;
    let data = match mode {
        CombineMode::Product => {
            let factor = w.w_a * w.w_d;
            att.data()
                .iter()
                .zip(mask.data())
                .map(|(&a, &m)| (factor * a as f64 * m as f64) as f32)
                .collect()
        }
        CombineMode::Sum => att
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&a, &m)| {
                if m > 0.0 {
                    (w.w_a * a as f64 + w.w_d * m as f64).clamp(0.0, 1.0) as f32
                } else {
                    0.0
                }
            })
            .collect(),
    };
    Raster::new(att.width(), att.height(), data)
}

/// `(mean + std) / 2` with population standard deviation, over all pixels or
/// only where `support > 0`.
pub fn adaptive_threshold(combined: &Raster, support: Option<&Raster>) -> f64 {
    // Welford's running mean/variance
    let (mut n, mut mean, mut m2) = (0u64, 0.0f64, 0.0f64);
    let mut push = |v: f64| {
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    };
    match support {
        None => combined.data().iter().for_each(|&v| push(v as f64)),
        Some(s) => combined
            .data()
            .iter()
            .zip(s.data())
            .filter(|(_, &m)| m > 0.0)
            .for_each(|(&v, _)| push(v as f64)),
    }
    if n == 0 {
        return 0.0;
    }
    let std = (m2 / n as f64).max(0.0).sqrt();
    (mean + std) / 2.0
}

/// 255 where the value is strictly above `tau`, else 0.
pub fn binarize(combined: &Raster, tau: f64) -> Raster {
    combined.map(|v| if v as f64 > tau { 255.0 } else { 0.0 })
}

/// Fuses `att` with every foreground layer. `att.mask` must already be at
/// layer resolution.
pub fn fuse_image(
    att: &AttentionMap,
    layers: &LayerSet,
    weights: &FusionWeights,
    params: &FusionParams,
) -> Result<Vec<CombinedLayer>> {
    let indexed: Vec<(usize, &crate::depth_layers::DepthLayer)> =
        layers.layers.iter().enumerate().collect();
    crate::par::map(&indexed, |&(i, layer)| {
        let raw = combine(&att.mask, &layer.mask, weights, params.mode)?;
        let support = params.tau_on_support.then_some(&layer.mask);
        let tau = adaptive_threshold(&raw, support);
        let binary = binarize(&raw, tau);
        Ok(CombinedLayer {
            raw,
            tau,
            binary,
            layer_index: i + 1,
        })
    })
    .into_iter()
    .collect()
}
