//! Versioned default configuration for every pipeline stage.
//!
//! The paper behind this artifact fixes almost no operational parameters, so
//! every randomization range and threshold lives here with a documented
//! default. Config files are TOML; unknown fields are rejected and every value
//! is range-checked with a per-field diagnostic.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Inclusive range used for uniform parameter sampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Randomization ranges for [`crate::synthesis::sample_log_spec`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub base_radius: Range,
    pub taper_rate: Range,
    pub height: f64,
    pub amp_low: Range,
    pub amp_high: Range,
    /// Integer cycles per revolution, sampled inclusively.
    pub freq_low: Range,
    pub freq_high: Range,
    pub z_amp: Range,
    pub z_freq: Range,
    pub background_density: Range,
    /// Fraction of the background density, per the ring-amplitude invariant.
    pub ring_amp_frac: Range,
    pub ring_period: Range,
    /// Minimum pairwise azimuth separation between knots, radians.
    pub min_azimuth_gap: f64,
    /// Pith entry height as a fraction of log height.
    pub knot_start_frac: Range,
    pub knot_rise_sqrt: Range,
    pub knot_rise_lin: Range,
    /// Tube core radius as a fraction of base radius.
    pub knot_core_frac: Range,
    pub knot_growth_rate: Range,
    pub knot_density: Range,
    /// Surface bump amplitude as a fraction of base radius.
    pub bump_amp_frac: Range,
    pub bump_sigma_theta: Range,
    pub bump_sigma_z: Range,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            base_radius: Range::new(0.9, 1.1),
            taper_rate: Range::new(0.1, 0.3),
            height: 4.0,
            amp_low: Range::new(0.02, 0.08),
            amp_high: Range::new(0.005, 0.0125),
            freq_low: Range::new(2.0, 6.0),
            freq_high: Range::new(12.0, 24.0),
            z_amp: Range::new(0.0, 0.03),
            z_freq: Range::new(0.5, 2.0),
            background_density: Range::new(0.40, 0.46),
            ring_amp_frac: Range::new(0.05, 0.1),
            ring_period: Range::new(0.05, 0.12),
            min_azimuth_gap: 0.35,
            knot_start_frac: Range::new(0.05, 0.4),
            knot_rise_sqrt: Range::new(0.4, 1.0),
            knot_rise_lin: Range::new(0.2, 0.6),
            knot_core_frac: Range::new(0.02, 0.04),
            knot_growth_rate: Range::new(0.05, 0.15),
            knot_density: Range::new(0.75, 0.95),
            bump_amp_frac: Range::new(0.01, 0.05),
            bump_sigma_theta: Range::new(0.08, 0.2),
            bump_sigma_z: Range::new(0.08, 0.25),
        }
    }
}

/// Raster geometry: grid sizes and physical extents.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RasterConfig {
    /// Patch / half-plane grid side.
    pub grid: usize,
    /// Angular window of a surface patch, degrees.
    pub patch_width_deg: f64,
    /// Voxel volume dims (nx, ny, nz).
    pub volume_dims: (usize, usize, usize),
    /// Cross-section render side in pixels.
    pub section_size: usize,
    /// Planar half-extent as a multiple of the spec's maximum bark radius.
    pub extent_margin: f64,
    /// Azimuth slices used by volume reconstruction.
    pub reconstruct_slices: usize,
    /// Smallest centerline radius (world units) annotated as an ellipse;
    /// below this the cross-section degenerates into the pith.
    pub annotate_min_radius: f64,
    /// Smallest visible cross-section area (pixels) still annotated; slivers
    /// clipped below this by the bark are dropped as instances.
    pub annotate_min_area: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            grid: 64,
            patch_width_deg: 15.0,
            volume_dims: (256, 256, 64),
            section_size: 512,
            extent_margin: 1.05,
            reconstruct_slices: 90,
            annotate_min_radius: 0.08,
            annotate_min_area: 6,
        }
    }
}

/// Thresholds for the classical slice-processing chain.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Foreground threshold for recentering and bark contour.
    pub foreground_threshold: f32,
    /// Density threshold separating knots from background wood.
    pub density_threshold: f32,
    /// Minimum blob area in pixels.
    pub min_area: usize,
    /// Rays cast when extracting the bark contour.
    pub contour_rays: usize,
    /// Tracking: max consecutive missing slices bridged per track.
    pub max_gap: usize,
    /// Tracking: max centroid jump between consecutive slices, pixels.
    pub max_jump_px: f64,
    /// Track size-smoothing window (odd, >= 3).
    pub smooth_window: usize,
    /// Minimum fraction of the pith-to-bark span a track must cover to be
    /// kept as a bark-reaching knot; tracks below it are dropped.
    pub min_bark_reach: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            foreground_threshold: 0.05,
            density_threshold: 0.65,
            min_area: 6,
            contour_rays: 360,
            max_gap: 3,
            max_jump_px: 10.0,
            smooth_window: 5,
            min_bark_reach: 0.0,
        }
    }
}

/// Optimizer schedule and training loop parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after_drop: f64,
    /// Learning rate drops after this many epochs.
    pub lr_drop_epoch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub dropout: f64,
    /// Encoder channel widths; the decoder mirrors them.
    pub channels: Vec<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 50,
            batch_size: 100,
            lr_initial: 1e-3,
            lr_after_drop: 1e-4,
            lr_drop_epoch: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            dropout: 0.1,
            channels: vec![16, 32, 64],
        }
    }
}

/// Dataset split fractions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.80,
            val: 0.04,
            test: 0.16,
        }
    }
}

/// Top-level pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub synthesis: SynthesisConfig,
    pub raster: RasterConfig,
    pub extract: ExtractConfig,
    pub training: TrainingConfig,
    pub split: SplitConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::config("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.synthesis;
        check_range("synthesis.base_radius", s.base_radius, 1e-6, f64::INFINITY)?;
        check_range("synthesis.taper_rate", s.taper_rate, 0.0, 0.5)?;
        check_pos("synthesis.height", s.height)?;
        check_range("synthesis.amp_low", s.amp_low, 0.0, 0.15)?;
        check_range("synthesis.amp_high", s.amp_high, 0.0, 0.15)?;
        check_range("synthesis.freq_low", s.freq_low, 2.0, 6.0)?;
        check_range("synthesis.freq_high", s.freq_high, 12.0, 40.0)?;
        check_range("synthesis.z_amp", s.z_amp, 0.0, 0.05)?;
        if s.amp_low.hi + s.amp_high.hi + s.z_amp.hi >= 0.5 {
            return Err(Error::config(
                "synthesis.amp_low/amp_high/z_amp",
                "texture amplitude upper bounds must sum below 0.5",
            ));
        }
        check_range(
            "synthesis.background_density",
            s.background_density,
            0.0,
            1.0,
        )?;
        check_range("synthesis.ring_amp_frac", s.ring_amp_frac, 0.0, 0.2)?;
        check_pos("synthesis.min_azimuth_gap", s.min_azimuth_gap)?;
        check_range("synthesis.knot_density", s.knot_density, 0.0, 1.0)?;
        if s.knot_density.lo <= s.background_density.hi {
            return Err(Error::config(
                "synthesis.knot_density",
                "knot density range must lie above the background density range",
            ));
        }

        let r = &self.raster;
        if r.grid == 0 {
            return Err(Error::config("raster.grid", "must be positive"));
        }
        check_pos("raster.patch_width_deg", r.patch_width_deg)?;
        if r.volume_dims.0 == 0 || r.volume_dims.1 == 0 || r.volume_dims.2 == 0 {
            return Err(Error::config("raster.volume_dims", "dims must be positive"));
        }
        if r.reconstruct_slices < 4 {
            return Err(Error::config(
                "raster.reconstruct_slices",
                "need at least 4 slices",
            ));
        }

        let e = &self.extract;
        if e.contour_rays < 8 {
            return Err(Error::config(
                "extract.contour_rays",
                "need at least 8 rays",
            ));
        }
        if e.smooth_window < 3 || e.smooth_window.is_multiple_of(2) {
            return Err(Error::config(
                "extract.smooth_window",
                "must be odd and >= 3",
            ));
        }

        let t = &self.training;
        if t.epochs == 0 {
            return Err(Error::config("training.epochs", "must be >= 1"));
        }
        if t.lr_after_drop > t.lr_initial {
            return Err(Error::config(
                "training.lr_after_drop",
                "schedule must be non-increasing",
            ));
        }
        if t.channels.is_empty() {
            return Err(Error::config(
                "training.channels",
                "need at least one level",
            ));
        }
        if !(0.0..1.0).contains(&t.dropout) {
            return Err(Error::config("training.dropout", "must be in [0, 1)"));
        }

        let sp = &self.split;
        if (sp.train + sp.val + sp.test - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must sum to 1"));
        }
        Ok(())
    }
}

fn check_range(field: &str, r: Range, lo: f64, hi: f64) -> Result<()> {
    if r.lo > r.hi {
        return Err(Error::config(field, "lo must be <= hi"));
    }
    if r.lo < lo || r.hi > hi {
        return Err(Error::config(
            field,
            format!("must lie within [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

fn check_pos(field: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, "must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = Config::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: Config = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn invalid_fraction_sum_names_field() {
        let mut cfg = Config::default();
        cfg.split.test = 0.5;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("split"));
    }

    #[test]
    fn unknown_field_rejected() {
        let res: std::result::Result<Config, _> = toml::from_str("nonsense = 1");
        assert!(res.is_err());
    }
}
