//! Spatial-domain perceptual features feeding the JND mask: a binary edge
//! map, a corner map derived from edge contours, and per-block luminance.
//!
//! Two edge detectors live behind one interface. The default is a
//! log-Gabor phase-congruency detector (contrast-invariant, finds edges in
//! low-contrast texture); a Gaussian-gradient detector with hysteresis is
//! retained as a fallback and for comparisons. Both produce maps whose
//! flags are invariant under affine contrast changes of the input.

mod css;
mod gradient;
mod phasecong;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::imaging::{BlockIndex, GrayImage, BLOCK_SIZE};
use crate::transform::CoefficientGrid;

pub use css::CssParams;

/// Pixels this close to the image border are never flagged as edges: the
/// frequency-domain detector wraps around at the border and both detectors
/// lose kernel support there.
pub const EDGE_BORDER_MARGIN: usize = 4;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid detector parameters: {0}")]
    InvalidDetectorParameters(String),
}

/// Per-pixel binary edge indicators, same geometry as the source image.
#[derive(Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl fmt::Debug for EdgeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EdgeMap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("edge_pixels", &self.count())
            .finish()
    }
}

impl EdgeMap {
    pub(crate) fn new(width: usize, height: usize, flags: Vec<bool>) -> Self {
        debug_assert_eq!(flags.len(), width * height);
        Self {
            width,
            height,
            flags,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.flags[y * self.width + x]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Total number of edge pixels.
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Detected corner points, a sparse subset of the edge contours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CornerMap {
    width: usize,
    height: usize,
    points: Vec<(usize, usize)>,
}

impl CornerMap {
    pub(crate) fn new(width: usize, height: usize, points: Vec<(usize, usize)>) -> Self {
        debug_assert!(points.iter().all(|&(x, y)| x < width && y < height));
        Self {
            width,
            height,
            points,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gaussian-gradient edge detection with non-maximum suppression and
/// dual-threshold hysteresis. Thresholds are fractions of the maximum
/// gradient magnitude, which keeps the output contrast-invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientHysteresisParams {
    pub sigma: f64,
    pub low_ratio: f64,
    pub high_ratio: f64,
}

impl Default for GradientHysteresisParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low_ratio: 0.08,
            high_ratio: 0.20,
        }
    }
}

impl GradientHysteresisParams {
    fn validate(&self) -> Result<(), FeatureError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(FeatureError::InvalidDetectorParameters(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(0.0 < self.low_ratio
            && self.low_ratio <= self.high_ratio
            && self.high_ratio < 1.0)
        {
            return Err(FeatureError::InvalidDetectorParameters(format!(
                "need 0 < low <= high < 1, got low={} high={}",
                self.low_ratio, self.high_ratio
            )));
        }
        Ok(())
    }
}

/// Log-Gabor phase-congruency edge detection: an oriented band-pass filter
/// bank, per-pixel phase congruency, and thresholding of the maximum
/// moment of the per-orientation congruency values. Phase congruency is
/// dimensionless, so fixed absolute thresholds on the moment stay
/// contrast-invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCongruencyParams {
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    /// Wavelength multiplier between successive filter scales.
    pub scale_mult: f64,
    /// Ratio sigma/f0 controlling each log-Gabor's radial bandwidth.
    pub sigma_on_f: f64,
    /// Ratio between orientation spacing and the angular Gaussian sigma.
    pub d_theta_on_sigma: f64,
    /// Noise energy threshold in standard deviations above the mean.
    pub noise_k: f64,
    /// Filter-spread sigmoid midpoint for the frequency-spread weighting.
    pub cut_off: f64,
    /// Filter-spread sigmoid gain.
    pub gain: f64,
    /// Hysteresis thresholds applied to the maximum moment.
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for PhaseCongruencyParams {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 6,
            min_wavelength: 3.0,
            scale_mult: 2.1,
            sigma_on_f: 0.55,
            d_theta_on_sigma: 1.3,
            noise_k: 2.0,
            cut_off: 0.5,
            gain: 10.0,
            low_threshold: 0.10,
            high_threshold: 0.25,
        }
    }
}

impl PhaseCongruencyParams {
    fn validate(&self) -> Result<(), FeatureError> {
        let bad = |msg: String| Err(FeatureError::InvalidDetectorParameters(msg));
        if self.scales == 0 || self.orientations == 0 {
            return bad("need at least one scale and one orientation".into());
        }
        if !(self.min_wavelength >= 2.0) {
            return bad(format!(
                "min_wavelength must be >= 2 (Nyquist), got {}",
                self.min_wavelength
            ));
        }
        if !(self.scale_mult > 1.0) {
            return bad(format!("scale_mult must exceed 1, got {}", self.scale_mult));
        }
        if !(0.0 < self.sigma_on_f && self.sigma_on_f < 1.0) {
            return bad(format!("sigma_on_f must be in (0,1), got {}", self.sigma_on_f));
        }
        if !(0.0 < self.low_threshold && self.low_threshold <= self.high_threshold) {
            return bad(format!(
                "need 0 < low <= high, got low={} high={}",
                self.low_threshold, self.high_threshold
            ));
        }
        Ok(())
    }
}

/// Which edge detector backs [`detect_edges`].
#[derive(Clone, Debug, PartialEq)]
pub enum DetectorChoice {
    GradientHysteresis(GradientHysteresisParams),
    PhaseCongruency(PhaseCongruencyParams),
}

impl Default for DetectorChoice {
    fn default() -> Self {
        Self::PhaseCongruency(PhaseCongruencyParams::default())
    }
}

impl DetectorChoice {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::GradientHysteresis(_) => "gradient-hysteresis",
            Self::PhaseCongruency(_) => "phase-congruency",
        }
    }
}

impl fmt::Display for DetectorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

impl FromStr for DetectorChoice {
    type Err = FeatureError;

    /// Accepts the closed set of detector names with default parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gradient-hysteresis" => Ok(Self::GradientHysteresis(Default::default())),
            "phase-congruency" => Ok(Self::PhaseCongruency(Default::default())),
            other => Err(FeatureError::InvalidDetectorParameters(format!(
                "unknown detector kind {other:?} (expected gradient-hysteresis or phase-congruency)"
            ))),
        }
    }
}

/// Extracts a binary edge map with the chosen detector.
pub fn detect_edges(img: &GrayImage, choice: &DetectorChoice) -> Result<EdgeMap, FeatureError> {
    let mut map = match choice {
        DetectorChoice::GradientHysteresis(params) => {
            params.validate()?;
            gradient::detect(img, params)
        }
        DetectorChoice::PhaseCongruency(params) => {
            params.validate()?;
            phasecong::detect(img, params)
        }
    };
    suppress_border(&mut map);
    Ok(map)
}

fn suppress_border(map: &mut EdgeMap) {
    let (w, h, m) = (map.width, map.height, EDGE_BORDER_MARGIN);
    for y in 0..h {
        for x in 0..w {
            if x < m || y < m || x + m >= w || y + m >= h {
                map.flags[y * w + x] = false;
            }
        }
    }
}

/// Detects corners on the contours of an edge map via curvature scale
/// space: trace contours, bridge small gaps, smooth, and keep curvature
/// maxima that pass an adaptive threshold and a corner-angle check.
/// An empty edge map yields an empty corner map.
pub fn detect_corners(edges: &EdgeMap, params: &CssParams) -> CornerMap {
    css::detect(edges, params)
}

/// Mean luminance of one block: sum of its 64 samples divided by 64.
pub fn block_luminance(img: &GrayImage, block: &BlockIndex) -> f64 {
    let (x0, y0) = block.origin_px();
    let mut sum = 0u32;
    for dy in 0..BLOCK_SIZE {
        for dx in 0..BLOCK_SIZE {
            sum += u32::from(img.get(x0 + dx, y0 + dy));
        }
    }
    f64::from(sum) / (BLOCK_SIZE * BLOCK_SIZE) as f64
}

/// Mean luminance of every block in row-major block order.
pub fn block_luminance_grid(img: &GrayImage) -> Vec<f64> {
    let bpr = img.blocks_per_row();
    (0..img.block_rows() * bpr)
        .map(|linear| block_luminance(img, &BlockIndex::new(linear / bpr, linear % bpr, bpr)))
        .collect()
}

/// Luminance sensitivity of one block relative to the image:
/// `(DC_b / DC_mean) ^ 0.649`, where `DC_mean` is the mean DC coefficient
/// over all blocks. Non-positive DC clamps to 0.
pub fn luminance_sensitivity(grid: &CoefficientGrid, block: &BlockIndex) -> f64 {
    luminance_sensitivity_from(grid.block(block.linear).dc(), grid.mean_dc())
}

/// Luminance sensitivity for every block in row-major block order.
pub fn luminance_sensitivity_grid(grid: &CoefficientGrid) -> Vec<f64> {
    let mean_dc = grid.mean_dc();
    grid.blocks()
        .iter()
        .map(|b| luminance_sensitivity_from(b.dc(), mean_dc))
        .collect()
}

const LUMINANCE_ALPHA: f64 = 0.649;

fn luminance_sensitivity_from(dc: f64, mean_dc: f64) -> f64 {
    if dc <= 0.0 {
        0.0
    } else {
        (dc / mean_dc).powf(LUMINANCE_ALPHA)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform;

    fn step_card() -> GrayImage {
        GrayImage::from_fn(64, 64, |x, _| if x < 32 { 64 } else { 192 })
    }

    /// samples' = round(a * samples + b), clamped.
    fn affine(img: &GrayImage, a: f64, b: f64) -> GrayImage {
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            (a * f64::from(img.get(x, y)) + b).round().clamp(0.0, 255.0) as u8
        })
    }

    fn detectors() -> Vec<DetectorChoice> {
        vec![
            DetectorChoice::GradientHysteresis(Default::default()),
            DetectorChoice::PhaseCongruency(Default::default()),
        ]
    }

    #[test]
    fn step_edge_is_localized_to_boundary_band() {
        for choice in detectors() {
            let edges = detect_edges(&step_card(), &choice).unwrap();
            assert!(edges.count() > 0, "{choice}: no edges found");
            for y in 0..64 {
                for x in 0..64 {
                    if edges.is_edge(x, y) {
                        assert!(
                            (31..=32).contains(&x),
                            "{choice}: edge at ({x},{y}) off the boundary band"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = GrayImage::from_fn(64, 64, |_, _| 77);
        for choice in detectors() {
            assert_eq!(detect_edges(&img, &choice).unwrap().count(), 0, "{choice}");
        }
    }

    #[test]
    fn edge_flags_invariant_under_affine_contrast_change() {
        // A step with an explicit transition column, so the response peak
        // sits on a pixel instead of between two (a between-pixel peak
        // makes the winning column a floating-point coin toss).
        let card = GrayImage::from_fn(64, 64, |x, _| match x {
            0..=30 => 64,
            31 => 128,
            _ => 192,
        });
        for choice in detectors() {
            let baseline = detect_edges(&card, &choice).unwrap();
            assert!(baseline.count() > 0, "{choice}: no edges on the card");
            for &(a, b) in &[(0.8, -20.0), (0.8, 20.0), (1.0, -20.0), (1.2, 0.0), (1.2, 20.0)] {
                let transformed = affine(&card, a, b);
                let edges = detect_edges(&transformed, &choice).unwrap();
                assert_eq!(edges, baseline, "{choice}: flags changed for a={a} b={b}");
            }
        }
    }

    #[test]
    fn unknown_detector_kind_is_rejected() {
        assert!(DetectorChoice::from_str("moravec").is_err());
        assert_eq!(
            DetectorChoice::from_str("phase-congruency").unwrap().kind(),
            "phase-congruency"
        );
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut params = GradientHysteresisParams::default();
        params.sigma = -1.0;
        let img = step_card();
        assert!(detect_edges(&img, &DetectorChoice::GradientHysteresis(params)).is_err());

        let mut pc = PhaseCongruencyParams::default();
        pc.high_threshold = 0.0;
        assert!(detect_edges(&img, &DetectorChoice::PhaseCongruency(pc)).is_err());
    }

    #[test]
    fn block_luminance_basics() {
        let mid = GrayImage::from_fn(8, 8, |_, _| 128);
        assert_eq!(block_luminance(&mid, &BlockIndex::new(0, 0, 1)), 128.0);
        let black = GrayImage::from_fn(8, 8, |_, _| 0);
        assert_eq!(block_luminance(&black, &BlockIndex::new(0, 0, 1)), 0.0);
        let checker = GrayImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        assert_eq!(block_luminance(&checker, &BlockIndex::new(0, 0, 1)), 127.5);
    }

    #[test]
    fn block_luminance_within_sample_range() {
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 89 + y * 57) % 200 + 20) as u8);
        for linear in 0..4 {
            let block = BlockIndex::new(linear / 2, linear % 2, 2);
            let lum = block_luminance(&img, &block);
            let (x0, y0) = block.origin_px();
            let mut lo = u8::MAX;
            let mut hi = u8::MIN;
            for dy in 0..8 {
                for dx in 0..8 {
                    lo = lo.min(img.get(x0 + dx, y0 + dy));
                    hi = hi.max(img.get(x0 + dx, y0 + dy));
                }
            }
            assert!(f64::from(lo) <= lum && lum <= f64::from(hi));
        }
    }

    #[test]
    fn luminance_sensitivity_uniform_image_is_one() {
        let img = GrayImage::from_fn(32, 32, |_, _| 150);
        let grid = transform::transform_image(&img).unwrap();
        for value in luminance_sensitivity_grid(&grid) {
            assert!((value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn luminance_sensitivity_follows_power_law() {
        // Three block columns: DC ratios 0.5x, 1x, 1.5x of the mean.
        let img = GrayImage::from_fn(24, 8, |x, _| match x / 8 {
            0 => 60,
            1 => 120,
            _ => 180,
        });
        let grid = transform::transform_image(&img).unwrap();
        let values = luminance_sensitivity_grid(&grid);
        assert!((values[1] - 1.0).abs() < 1e-12);
        assert!((values[0] - 0.5f64.powf(0.649)).abs() < 1e-12);
        assert!((values[2] - 1.5f64.powf(0.649)).abs() < 1e-12);
    }

    #[test]
    fn luminance_sensitivity_doubled_dc() {
        // DC exactly 2x the mean: blocks at 80 and 160 average to 120.
        let img = GrayImage::from_fn(16, 8, |x, _| if x < 8 { 80 } else { 160 });
        let grid = transform::transform_image(&img).unwrap();
        let block = BlockIndex::new(0, 1, 2);
        let got = luminance_sensitivity(&grid, &block);
        assert!((got - (160.0 / 120.0f64).powf(0.649)).abs() < 1e-12);
        // And the canonical 2x point evaluates near 1.568.
        assert!((2.0f64.powf(0.649) - 1.568).abs() < 1e-3);
    }

    #[test]
    fn black_blocks_clamp_to_zero() {
        let img = GrayImage::from_fn(16, 8, |x, _| if x < 8 { 0 } else { 200 });
        let grid = transform::transform_image(&img).unwrap();
        assert_eq!(luminance_sensitivity(&grid, &BlockIndex::new(0, 0, 2)), 0.0);
    }
}
