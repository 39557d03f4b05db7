//! Pipeline configuration and its flat `key = value` file format.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::attention::SparsityMeasure;
use crate::boxes::{BoxParams, MorphOrder};
use crate::depth_layers::LayeringParams;
use crate::error::{Error, Result};
use crate::eval::CorLocMode;
use crate::fusion::{CombineMode, FusionParams};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub bins: usize,
    pub overlap_frac: f64,
    pub min_prominence_frac: f64,
    pub n_discard: usize,
    pub cc_threshold: f64,
    pub combine_mode: CombineMode,
    pub kernel: usize,
    pub min_area_frac: f64,
    pub nms_sigma: f64,
    pub score_floor: f64,
    pub lambda_consistency: f64,
    pub tau_on_support: bool,
    pub iou_thresh: f64,
    pub sparsity: SparsityMeasure,
    pub morph_order: MorphOrder,
    pub corloc_mode: CorLocMode,
    // ablation switches
    pub use_depth: bool,
    pub use_weights: bool,
    pub isolate_layers: bool,
    pub dynamic_bins: bool,
    pub fixed_layers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bins: 64,
            overlap_frac: 0.2,
            min_prominence_frac: 0.05,
            n_discard: 1,
            cc_threshold: 0.5,
            combine_mode: CombineMode::Product,
            kernel: 3,
            min_area_frac: 0.001,
            nms_sigma: 0.5,
            score_floor: 0.001,
            lambda_consistency: 10.0,
            tau_on_support: false,
            iou_thresh: 0.5,
            sparsity: SparsityMeasure::Entropy,
            morph_order: MorphOrder::CloseOpen,
            corloc_mode: CorLocMode::Top1,
            use_depth: true,
            use_weights: true,
            isolate_layers: true,
            dynamic_bins: true,
            fixed_layers: 4,
        }
    }
}

pub const KEYS: &[&str] = &[
    "bins",
    "overlap_frac",
    "min_prominence_frac",
    "n_discard",
    "cc_threshold",
    "combine_mode",
    "kernel",
    "min_area_frac",
    "nms_sigma",
    "score_floor",
    "lambda_consistency",
    "tau_on_support",
    "iou_thresh",
    "sparsity",
    "morph_order",
    "corloc_mode",
    "use_depth",
    "use_weights",
    "isolate_layers",
    "dynamic_bins",
    "fixed_layers",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid boolean {value:?} for {key}"
        ))),
    }
}

impl Config {
    /// Sets one field from its textual value. Does not validate ranges.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "bins" => self.bins = parse(key, value)?,
            "overlap_frac" => self.overlap_frac = parse(key, value)?,
            "min_prominence_frac" => self.min_prominence_frac = parse(key, value)?,
            "n_discard" => self.n_discard = parse(key, value)?,
            "cc_threshold" => self.cc_threshold = parse(key, value)?,
            "combine_mode" => self.combine_mode = value.parse()?,
            "kernel" => self.kernel = parse(key, value)?,
            "min_area_frac" => self.min_area_frac = parse(key, value)?,
            "nms_sigma" => self.nms_sigma = parse(key, value)?,
            "score_floor" => self.score_floor = parse(key, value)?,
            "lambda_consistency" => self.lambda_consistency = parse(key, value)?,
            "tau_on_support" => self.tau_on_support = parse_bool(key, value)?,
            "iou_thresh" => self.iou_thresh = parse(key, value)?,
            "sparsity" => self.sparsity = value.parse()?,
            "morph_order" => self.morph_order = value.parse()?,
            "corloc_mode" => self.corloc_mode = value.parse()?,
            "use_depth" => self.use_depth = parse_bool(key, value)?,
            "use_weights" => self.use_weights = parse_bool(key, value)?,
            "isolate_layers" => self.isolate_layers = parse_bool(key, value)?,
            "dynamic_bins" => self.dynamic_bins = parse_bool(key, value)?,
            "fixed_layers" => self.fixed_layers = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "bins" => self.bins.to_string(),
            "overlap_frac" => self.overlap_frac.to_string(),
            "min_prominence_frac" => self.min_prominence_frac.to_string(),
            "n_discard" => self.n_discard.to_string(),
            "cc_threshold" => self.cc_threshold.to_string(),
            "combine_mode" => self.combine_mode.to_string(),
            "kernel" => self.kernel.to_string(),
            "min_area_frac" => self.min_area_frac.to_string(),
            "nms_sigma" => self.nms_sigma.to_string(),
            "score_floor" => self.score_floor.to_string(),
            "lambda_consistency" => self.lambda_consistency.to_string(),
            "tau_on_support" => self.tau_on_support.to_string(),
            "iou_thresh" => self.iou_thresh.to_string(),
            "sparsity" => self.sparsity.to_string(),
            "morph_order" => self.morph_order.to_string(),
            "corloc_mode" => self.corloc_mode.to_string(),
            "use_depth" => self.use_depth.to_string(),
            "use_weights" => self.use_weights.to_string(),
            "isolate_layers" => self.isolate_layers.to_string(),
            "dynamic_bins" => self.dynamic_bins.to_string(),
            "fixed_layers" => self.fixed_layers.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(what.to_string()))
            }
        };
        check(self.bins >= 2, "bins must be at least 2")?;
        check(
            (0.0..0.5).contains(&self.overlap_frac),
            "overlap_frac must be in [0, 0.5)",
        )?;
        check(
            (0.0..=1.0).contains(&self.min_prominence_frac),
            "min_prominence_frac must be in [0, 1]",
        )?;
        check(
            self.cc_threshold > 0.0 && self.cc_threshold < 1.0,
            "cc_threshold must be in (0, 1)",
        )?;
        check(
            self.kernel >= 1 && self.kernel % 2 == 1,
            "kernel must be odd and >= 1",
        )?;
        check(
            (0.0..1.0).contains(&self.min_area_frac),
            "min_area_frac must be in [0, 1)",
        )?;
        check(self.nms_sigma > 0.0, "nms_sigma must be positive")?;
        check(self.score_floor >= 0.0, "score_floor must be non-negative")?;
        check(
            self.lambda_consistency >= 0.0,
            "lambda_consistency must be non-negative",
        )?;
        check(
            self.iou_thresh > 0.0 && self.iou_thresh <= 1.0,
            "iou_thresh must be in (0, 1]",
        )?;
        check(self.fixed_layers >= 1, "fixed_layers must be at least 1")?;
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_kv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn layering(&self) -> LayeringParams {
        LayeringParams {
            bins: self.bins,
            min_prominence_frac: self.min_prominence_frac,
            overlap_frac: self.overlap_frac,
            n_discard: self.n_discard,
            dynamic_bins: self.dynamic_bins,
            fixed_layers: self.fixed_layers,
        }
    }

    pub fn fusion(&self) -> FusionParams {
        FusionParams {
            cc_threshold: self.cc_threshold,
            mode: self.combine_mode,
            tau_on_support: self.tau_on_support,
            lambda_consistency: self.lambda_consistency,
        }
    }

    pub fn boxes(&self) -> BoxParams {
        BoxParams {
            kernel: self.kernel,
            min_area_frac: self.min_area_frac,
            nms_sigma: self.nms_sigma,
            score_floor: self.score_floor,
            morph_order: self.morph_order,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse_str(&c.to_kv_string()).unwrap(), c);
        assert!(c.to_kv_string().contains("overlap_frac = 0.2\n"));
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(Config::parse_str("bogus = 1").is_err());
        assert!(Config::parse_str("bins = 32\nbins = 16").is_err());
        assert!(Config::parse_str("bins 32").is_err());
    }

    #[test]
    fn comments_and_partial_files() {
        let c =
            Config::parse_str("# tuned\n\nkernel = 5\ncombine_mode = sum\ntau_on_support = true\n")
                .unwrap();
        assert_eq!(c.kernel, 5);
        assert_eq!(c.combine_mode, CombineMode::Sum);
        assert!(c.tau_on_support);
        assert_eq!(c.bins, 64);
    }

    #[test]
    fn out_of_domain_rejected() {
        for bad in [
            "overlap_frac = 0.5",
            "kernel = 4",
            "bins = 1",
            "cc_threshold = 1",
            "nms_sigma = 0",
        ] {
            assert!(Config::parse_str(bad).is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn arbitrary_round_trip(
            bins in 2usize..512,
            overlap in 0.0f64..0.5,
            prom in 0.0f64..=1.0,
            cc in 0.001f64..0.999,
            sigma in 0.001f64..10.0,
            floor in 0.0f64..1.0,
            lambda in 0.0f64..100.0,
            k in 0usize..5,
            flags in proptest::collection::vec(any::<bool>(), 6),
        ) {
            let c = Config {
                bins,
                overlap_frac: overlap,
                min_prominence_frac: prom,
                cc_threshold: cc,
                nms_sigma: sigma,
                score_floor: floor,
                lambda_consistency: lambda,
                kernel: 2 * k + 1,
                tau_on_support: flags[0],
                use_depth: flags[1],
                use_weights: flags[2],
                isolate_layers: flags[3],
                dynamic_bins: flags[4],
                combine_mode: if flags[5] { CombineMode::Sum } else { CombineMode::Product },
                ..Config::default()
            };
            prop_assert_eq!(Config::parse_str(&c.to_kv_string()).unwrap(), c);
        }
    }
}
