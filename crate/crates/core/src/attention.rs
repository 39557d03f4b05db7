//! Attention-head aggregation, normalization, resampling and dispersion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Global attention map in `[0, 1]` with its dispersion statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub mask: Raster,
    pub sparsity: f64,
}

/// How attention dispersion is measured. All variants return a value in
/// `[0, 1]` where 1 means maximally spread out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityMeasure {
    /// Shannon entropy of the probability-normalized mask over `ln N`.
    #[default]
    Entropy,
    /// One minus Hoyer's L1/L2 sparsity.
    Hoyer,
    /// One minus the Gini index of the mask values.
    Gini,
}

impl std::str::FromStr for SparsityMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Self::Entropy),
            "hoyer" => Ok(Self::Hoyer),
            "gini" => Ok(Self::Gini),
            _ => Err(Error::Config(format!("unknown sparsity measure {s:?}"))),
        }
    }
}

impl std::fmt::Display for SparsityMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Entropy => "entropy",
            Self::Hoyer => "hoyer",
            Self::Gini => "gini",
        })
    }
}

impl AttentionMap {
    /// Aggregates `heads`, resamples to `width x height`, normalizes to
    /// `[0, 1]` and measures dispersion.
    pub fn from_heads(
        heads: &[Raster],
        width: usize,
        height: usize,
        measure: SparsityMeasure,
    ) -> Result<Self> {
        let agg = aggregate_heads(heads)?;
        let mask = normalize_unit(&resample_bilinear(&agg, width, height));
        let sparsity = sparsity_with(&mask, measure);
        Ok(Self { mask, sparsity })
    }
}

/// Pointwise maximum over heads.
pub fn aggregate_heads(heads: &[Raster]) -> Result<Raster> {
    let (first, rest) = heads
        .split_first()
        .ok_or_else(|| Error::contract("at least one attention head is required"))?;
    let mut out = first.clone();
    for (i, h) in rest.iter().enumerate() {
        if h.dims() != first.dims() {
            return Err(Error::contract(format!(
                "attention head {} is {}x{}, expected {}x{}",
                i + 1,
                h.width(),
                h.height(),
                first.width(),
                first.height()
            )));
        }
        for (o, &v) in out.data_mut().iter_mut().zip(h.data()) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// Min-max scaling to `[0, 1]`; a constant raster maps to all zeros.
pub fn normalize_unit(raster: &Raster) -> Raster {
    let (lo, hi) = raster.min_max();
    if hi <= lo {
        return Raster::zeros(raster.width(), raster.height());
    }
    let (lo, range) = (lo as f64, hi as f64 - lo as f64);
    raster.map(|v| (((v as f64 - lo) / range) as f32).clamp(0.0, 1.0))
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resample_bilinear(raster: &Raster, out_w: usize, out_h: usize) -> Raster {
    let (in_w, in_h) = raster.dims();
    if (in_w, in_h) == (out_w, out_h) {
        return raster.clone();
    }
    let sx = in_w as f64 / out_w as f64;
    let sy = in_h as f64 / out_h as f64;
    let src = |o: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| src(x, sx, in_w)).collect();
    let mut data = vec![0f32; out_w * out_h];
    crate::par::for_each_row(&mut data, out_w, |y, row| {
        let (y0, y1, ty) = src(y, sy, in_h);
        let (r0, r1) = (raster.row(y0), raster.row(y1));
        for (out, &(x0, x1, tx)) in row.iter_mut().zip(&cols) {
            let top = r0[x0] as f64 * (1.0 - tx) + r0[x1] as f64 * tx;
            let bot = r1[x0] as f64 * (1.0 - tx) + r1[x1] as f64 * tx;
            *out = (top * (1.0 - ty) + bot * ty) as f32;
        }
    });
    Raster::new(out_w, out_h, data).expect("output dims are positive")
}

/// Normalized Shannon entropy of `mask / sum(mask)`; all-zero masks give 1.
pub fn attention_sparsity(mask: &Raster) -> f64 {
    let n = mask.len();
    let total: f64 = mask.data().iter().map(|&v| v.max(0.0) as f64).sum();
    if total <= 0.0 {
        return 1.0;
    }
    if n == 1 {
        return 0.0;
    }
    let entropy: f64 = mask
        .data()
        .iter()
        .map(|&v| v.max(0.0) as f64 / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    (entropy / (n as f64).ln()).clamp(0.0, 1.0)
}

pub fn sparsity_with(mask: &Raster, measure: SparsityMeasure) -> f64 {
    match measure {
        SparsityMeasure::Entropy => attention_sparsity(mask),
        SparsityMeasure::Hoyer => hoyer_dispersion(mask),
        SparsityMeasure::Gini => gini_dispersion(mask),
    }
}

fn hoyer_dispersion(mask: &Raster) -> f64 {
    let n = mask.len() as f64;
    let l1: f64 = mask.data().iter().map(|&v| (v as f64).abs()).sum();
    let l2: f64 = mask
        .data()
        .iter()
        .map(|&v| (v as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    if l2 == 0.0 || n <= 1.0 {
        return 1.0;
    }
    let hoyer = (n.sqrt() - l1 / l2) / (n.sqrt() - 1.0);
    (1.0 - hoyer).clamp(0.0, 1.0)
}

fn gini_dispersion(mask: &Raster) -> f64 {
    let mut v: Vec<f64> = mask.data().iter().map(|&x| (x as f64).max(0.0)).collect();
    let total: f64 = v.iter().sum();
    let n = v.len() as f64;
    if total <= 0.0 {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    // Hurley & Rickard formulation over ascending values.
    let gini: f64 = v
        .iter()
        .enumerate()
        .map(|(k, &x)| x / total * ((n - (k as f64 + 1.0) + 0.5) / n))
        .sum::<f64>();
    let gini = 1.0 - 2.0 * gini;
    (1.0 - gini).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(w: usize, h: usize, v: &[f32]) -> Raster {
        Raster::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn aggregate_pointwise_max() {
        let out = aggregate_heads(&[r(2, 1, &[0.1, 0.4]), r(2, 1, &[0.3, 0.2])]).unwrap();
        assert_eq!(out.data(), &[0.3, 0.4]);
        let single = r(2, 1, &[0.7, 0.1]);
        assert_eq!(
            aggregate_heads(std::slice::from_ref(&single)).unwrap(),
            single
        );
    }

    #[test]
    fn aggregate_errors() {
        assert!(aggregate_heads(&[]).is_err());
        let err = aggregate_heads(&[r(2, 1, &[0., 0.]), r(2, 1, &[0., 0.]), r(1, 2, &[0., 0.])])
            .unwrap_err();
        assert!(err.to_string().contains("head 2"), "{err}");
    }

    #[test]
    fn six_random_heads_match_loop() {
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 40) as f32 / (1u64 << 24) as f32
        };
        let heads: Vec<Raster> = (0..6)
            .map(|_| Raster::from_fn(9, 7, |_, _| next()))
            .collect();
        let out = aggregate_heads(&heads).unwrap();
        for i in 0..out.len() {
            let mut m = f32::NEG_INFINITY;
            for h in &heads {
                if h.data()[i] > m {
                    m = h.data()[i];
                }
            }
            assert_eq!(out.data()[i], m);
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_unit(&r(3, 1, &[0., 2., 4.])).data(),
            &[0.0, 0.5, 1.0]
        );
        assert_eq!(normalize_unit(&r(3, 1, &[2., 2., 2.])).data(), &[0.0; 3]);
    }

    #[test]
    fn resample_examples() {
        let src = r(2, 2, &[0., 1., 0., 1.]);
        let up = resample_bilinear(&src, 4, 2);
        for y in 0..2 {
            let row = up.row(y);
            assert_eq!(row[0], 0.0);
            assert_eq!(row[3], 1.0);
            assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
        }
        let same = Raster::from_fn(5, 3, |x, y| (x * y) as f32 * 0.37);
        assert_eq!(resample_bilinear(&same, 5, 3), same);
        let c = resample_bilinear(&Raster::filled(3, 3, 0.25), 11, 7);
        assert!(c.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn sparsity_examples() {
        assert!((attention_sparsity(&Raster::filled(4, 4, 0.3)) - 1.0).abs() < 1e-12);
        assert_eq!(attention_sparsity(&r(4, 1, &[0., 0., 1., 0.])), 0.0);
        assert!((attention_sparsity(&r(2, 2, &[1., 0., 1., 0.])) - 0.5).abs() < 1e-12);
        assert_eq!(attention_sparsity(&Raster::zeros(3, 3)), 1.0);
    }

    #[test]
    fn alternative_measures_bounded() {
        let peaked = r(4, 1, &[0., 0., 1., 0.]);
        let flat = Raster::filled(4, 1, 0.5);
        for m in [SparsityMeasure::Hoyer, SparsityMeasure::Gini] {
            assert!(sparsity_with(&peaked, m) < sparsity_with(&flat, m), "{m}");
            assert!((sparsity_with(&flat, m) - 1.0).abs() < 1e-9, "{m}");
        }
    }

    fn arb_raster() -> impl Strategy<Value = Raster> {
        (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f32..1.0, w * h)
                .prop_map(move |d| Raster::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn aggregate_permutation_and_duplicate_invariant(a in arb_raster(), seed in 0u32..1000) {
            let b = a.map(|v| (v + seed as f32 * 0.001).fract());
            let c = a.map(|v| 1.0 - v);
            let x = aggregate_heads(&[a.clone(), b.clone(), c.clone()]).unwrap();
            prop_assert_eq!(&x, &aggregate_heads(&[c.clone(), a.clone(), b.clone()]).unwrap());
            prop_assert_eq!(&x, &aggregate_heads(&[a.clone(), b.clone(), c.clone(), a, b, c]).unwrap());
        }

        #[test]
        fn normalize_idempotent(a in arb_raster()) {
            let once = normalize_unit(&a);
            prop_assert_eq!(normalize_unit(&once), once.clone());
            let (lo, hi) = a.min_max();
            if hi > lo {
                prop_assert_eq!(once.min_max(), (0.0, 1.0));
            }
        }

        #[test]
        fn sparsity_scale_invariant(a in arb_raster(), c in 0.01f64..100.0) {
            let s = attention_sparsity(&a);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((attention_sparsity(&a.scaled(c)) - s).abs() < 1e-5);
        }
    }
}
