//! Histogram-driven depth layering.
//!
//! Depth is in nearness convention (larger = closer) and normalized to
//! `[0, 1]` before it reaches this module. The histogram is smoothed, its
//! prominent peaks become layers, and interval boundaries sit at the deepest
//! valley between adjacent peaks. Each interval is then widened by a fraction
//! of its own width so objects straddling a boundary land whole in at least
//! one layer.

use crate::raster::Raster;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
}

impl DepthHistogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    /// Centered moving average, window 3, truncated at the edges.
    pub fn smoothed(&self) -> Vec<f64> {
        smooth3(&self.counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthLayer {
    pub lo: f64,
    pub hi: f64,
    /// 1 where `lo <= depth <= hi`, else 0.
    pub mask: Raster,
    pub peak_bin: usize,
}

/// Foreground layers, nearest first, plus the discarded background layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSet {
    pub layers: Vec<DepthLayer>,
    pub discarded: Vec<DepthLayer>,
}

impl LayerSet {
    pub fn n(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeringParams {
    pub bins: usize,
    pub min_prominence_frac: f64,
    pub overlap_frac: f64,
    pub n_discard: usize,
    /// When false, `fixed_layers` equal-width intervals replace peak analysis.
    pub dynamic_bins: bool,
    pub fixed_layers: usize,
}

impl Default for LayeringParams {
    fn default() -> Self {
        Self {
            bins: 64,
            min_prominence_frac: 0.05,
            overlap_frac: 0.2,
            n_discard: 1,
            dynamic_bins: true,
            fixed_layers: 4,
        }
    }
}

/// Bin `floor(v * bins)`, with `v = 1` in the last bin. Values outside `[0, 1]`
/// are clamped into the edge bins.
pub fn depth_histogram(depth: &Raster, bins: usize) -> DepthHistogram {
    assert!(bins >= 2, "histogram needs at least two bins");
    let mut counts = vec![0u64; bins];
    for &v in depth.data() {
        counts[bin_of(v as f64, bins)] += 1;
    }
    DepthHistogram {
        counts,
        total: depth.len() as u64,
    }
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

pub fn smooth3(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Interior local maxima: strictly above both neighbours, or the leftmost bin
/// of a flat run whose two bounding bins are both lower. Edge bins never
/// qualify.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i - 1] < values[i] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Range-minimum table over `values`.
struct SparseMin {
    levels: Vec<Vec<f64>>,
}

impl SparseMin {
    fn new(values: &[f64]) -> Self {
        let mut levels = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = levels.last().unwrap();
            let next = (0..prev.len() - width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Minimum over the inclusive range `[a, b]`.
    fn min(&self, a: usize, b: usize) -> f64 {
        let len = b - a + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.levels[k][a].min(self.levels[k][b + 1 - (1 << k)])
    }
}

/// Topographic prominence of each peak: its height minus the higher of the
/// two valley floors, each floor being the minimum between the peak and the
/// nearest strictly higher bin on that side (or the histogram edge).
pub fn prominences(values: &[f64], peaks: &[usize]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    // nearest strictly-greater neighbours via monotonic stacks
    let mut prev_greater = vec![None; n];
    let mut next_greater = vec![None; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while let Some(&top) = stack.last() {
            if values[top] <= values[i] {
                stack.pop();
            } else {
                break;
            }
        }
        prev_greater[i] = stack.last().copied();
        stack.push(i);
    }
    stack.clear();
    for i in (0..n).rev() {
        while let Some(&top) = stack.last() {
            if values[top] <= values[i] {
                stack.pop();
            } else {
                break;
            }
        }
        next_greater[i] = stack.last().copied();
        stack.push(i);
    }
    let rmq = SparseMin::new(values);
    peaks
        .iter()
        .map(|&p| {
            let left_floor = rmq.min(prev_greater[p].map_or(0, |l| l + 1), p);
            let right_floor = rmq.min(p, next_greater[p].map_or(n - 1, |r| r - 1));
            values[p] - left_floor.max(right_floor)
        })
        .collect()
}

/// Peaks whose prominence reaches `min_prominence_frac * total`. Falls back to
/// the (leftmost) global maximum when nothing qualifies.
///
/// The profile is treated as zero outside its range, so an edge bin can be a
/// peak. Normalized depth always puts the nearest and farthest surfaces in
/// the first and last bins.
pub fn find_peaks(values: &[f64], total: f64, min_prominence_frac: f64) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut padded = Vec::with_capacity(values.len() + 2);
    padded.push(0.0);
    padded.extend_from_slice(values);
    padded.push(0.0);
    let candidates = local_maxima(&padded);
    let proms = prominences(&padded, &candidates);
    let threshold = min_prominence_frac * total;
    let peaks: Vec<usize> = candidates
        .into_iter()
        .zip(proms)
        .filter(|&(_, p)| p >= threshold)
        .map(|(i, _)| i - 1)
        .collect();
    if !peaks.is_empty() {
        return peaks;
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    vec![best]
}

/// Deepest bin strictly between two peaks; ties resolve to the middle of the
/// tied bins.
pub fn valley_between(values: &[f64], left: usize, right: usize) -> usize {
    debug_assert!(left < right);
    if right - left < 2 {
        return left;
    }
    let range = left + 1..right;
    let floor = range
        .clone()
        .map(|i| values[i])
        .fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = range.filter(|&i| values[i] == floor).collect();
    tied[(tied.len() - 1) / 2]
}

/// Interval boundaries in depth units: `[0, b1, ..., 1]`, with each interior
/// boundary at the centre of the valley bin between consecutive peaks.
pub fn valley_boundaries(values: &[f64], peaks: &[usize]) -> Vec<f64> {
    let bins = values.len() as f64;
    let mut bounds = vec![0.0];
    for w in peaks.windows(2) {
        let v = valley_between(values, w[0], w[1]);
        bounds.push((v as f64 + 0.5) / bins);
    }
    bounds.push(1.0);
    bounds
}

/// Widens `[lo, hi]` by `overlap_frac * (hi - lo)` on each side, clamped.
pub fn expand_interval(lo: f64, hi: f64, overlap_frac: f64) -> (f64, f64) {
    let pad = overlap_frac * (hi - lo);
    ((lo - pad).max(0.0), (hi + pad).min(1.0))
}

pub fn interval_mask(depth: &Raster, lo: f64, hi: f64) -> Raster {
    depth.map(|v| {
        let v = v as f64;
        if lo <= v && v <= hi {
            1.0
        } else {
            0.0
        }
    })
}

/// One layer per consecutive pair of `bounds` (ascending), expanded by
/// `overlap_frac`. `peak_bins[k]` labels interval `k`. Output is nearest
/// first.
pub fn layers_from_bounds(
    depth: &Raster,
    bounds: &[f64],
    peak_bins: &[usize],
    overlap_frac: f64,
) -> LayerSet {
    assert_eq!(bounds.len(), peak_bins.len() + 1, "one interval per peak");
    let mut layers: Vec<DepthLayer> = bounds
        .windows(2)
        .zip(peak_bins)
        .map(|(w, &peak_bin)| {
            let (lo, hi) = expand_interval(w[0], w[1], overlap_frac);
            DepthLayer {
                lo,
                hi,
                mask: interval_mask(depth, lo, hi),
                peak_bin,
            }
        })
        .collect();
    layers.reverse();
    LayerSet {
        layers,
        discarded: Vec::new(),
    }
}

/// Builds layers from peaks found in the smoothed histogram `values`.
pub fn build_layers(
    depth: &Raster,
    values: &[f64],
    peaks: &[usize],
    overlap_frac: f64,
) -> LayerSet {
    assert!(!peaks.is_empty(), "at least one peak is required");
    let mut peaks = peaks.to_vec();
    peaks.sort_unstable();
    peaks.dedup();
    let bounds = valley_boundaries(values, &peaks);
    layers_from_bounds(depth, &bounds, &peaks, overlap_frac)
}

/// Moves the `n_discard` farthest layers to `discarded`, always keeping one.
pub fn discard_background(mut set: LayerSet, n_discard: usize) -> LayerSet {
    let drop = n_discard.min(set.layers.len().saturating_sub(1));
    let keep = set.layers.len() - drop;
    let mut tail = set.layers.split_off(keep);
    tail.append(&mut set.discarded);
    set.discarded = tail;
    set
}

/// Full layering of a normalized depth map.
pub fn layer_depth(depth: &Raster, params: &LayeringParams) -> LayerSet {
    let set = if params.dynamic_bins {
        let hist = depth_histogram(depth, params.bins);
        let smooth = hist.smoothed();
        let peaks = find_peaks(&smooth, hist.total as f64, params.min_prominence_frac);
        build_layers(depth, &smooth, &peaks, params.overlap_frac)
    } else {
        let k = params.fixed_layers.max(1);
        let bounds: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let labels: Vec<usize> = (0..k)
            .map(|i| bin_of((i as f64 + 0.5) / k as f64, params.bins))
            .collect();
        layers_from_bounds(depth, &bounds, &labels, params.overlap_frac)
    };
    discard_background(set, params.n_discard)
}

/// `1 / (1 + lambda * g)` where `g` is the mean gradient magnitude, using
/// central differences inside and one-sided differences at the borders.
pub fn depth_gradient_consistency(depth: &Raster, lambda: f64) -> f64 {
    let (w, h) = depth.dims();
    let diff = |a: f32, b: f32, span: f64| (a as f64 - b as f64) / span;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let gx = if w < 2 {
                0.0
            } else if x == 0 {
                diff(depth.get(1, y), depth.get(0, y), 1.0)
            } else if x == w - 1 {
                diff(depth.get(x, y), depth.get(x - 1, y), 1.0)
            } else {
                diff(depth.get(x + 1, y), depth.get(x - 1, y), 2.0)
            };
            let gy = if h < 2 {
                0.0
            } else if y == 0 {
                diff(depth.get(x, 1), depth.get(x, 0), 1.0)
            } else if y == h - 1 {
                diff(depth.get(x, y), depth.get(x, y - 1), 1.0)
            } else {
                diff(depth.get(x, y + 1), depth.get(x, y - 1), 2.0)
            };
            sum += gx.hypot(gy);
        }
    }
    let g = sum / depth.len() as f64;
    1.0 / (1.0 + lambda * g)
}
