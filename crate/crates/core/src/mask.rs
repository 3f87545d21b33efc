//! Fusion of texture, edge, corner, and luminance features into the
//! per-block JND mask that modulates watermark strength.
//!
//! Per block: texture tolerance `M_T` (log AC energy, scaled to [0, 64])
//! raises the mask, edge and corner density (`M_E`, `M_C`, same scale)
//! lower it, and a parabolic luminance correction rewards blocks far from
//! mid-gray, where the eye is least sensitive. The fused value is floored
//! at zero and normalized to [0, 1] by its image-wide maximum.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::features::{self, CornerMap, CssParams, DetectorChoice, EdgeMap, FeatureError};
use crate::imaging::{GrayImage, ImagingError, BLOCK_SIZE};
use crate::transform::CoefficientGrid;

/// Scale of the parabolic luminance correction. The raw parabola
/// `(128 - M_L)^2` peaks at 16384 while the texture term caps at 64; this
/// factor (64 / 128^2) makes the correction's maximum equal the texture
/// range so neither term drowns the other. Set it to 1.0 to study the
/// unscaled form.
pub const DEFAULT_LUMINANCE_SCALE: f64 = 64.0 / (128.0 * 128.0);

/// Upper bound of the per-block feature scales.
pub const FEATURE_SCALE: f64 = 64.0;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("feature grids disagree on geometry: {0}")]
    GeometryMismatch(String),
    #[error("block row {row} out of range (grid has {rows} block rows)")]
    InvalidRow { row: usize, rows: usize },
    #[error("cannot write {path}: {source}")]
    UnwritableDestination {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// How block luminance enters the mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LuminanceMode {
    /// Add the scaled parabolic correction to the fused mask (default).
    #[serde(rename = "additive-correction")]
    AdditiveCorrection,
    /// Leave the mask luminance-free; the frequency-domain sensitivity
    /// factor multiplies the amplitude at embedding time instead.
    #[serde(rename = "multiplicative-dl")]
    MultiplicativeDl,
}

impl std::str::FromStr for LuminanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "additive-correction" | "additive" => Ok(Self::AdditiveCorrection),
            "multiplicative-dl" | "multiplicative" => Ok(Self::MultiplicativeDl),
            other => Err(format!("unknown luminance mode {other:?}")),
        }
    }
}

impl std::fmt::Display for LuminanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AdditiveCorrection => "additive-correction",
            Self::MultiplicativeDl => "multiplicative-dl",
        })
    }
}

/// Per-block feature values: texture, edge, and corner in [0, 64],
/// luminance in [0, 255].
#[derive(Clone, Debug)]
pub struct FeatureGrid {
    texture: Vec<f64>,
    edge: Vec<f64>,
    corner: Vec<f64>,
    luminance: Vec<f64>,
    blocks_per_row: usize,
}

impl FeatureGrid {
    pub fn new(
        texture: Vec<f64>,
        edge: Vec<f64>,
        corner: Vec<f64>,
        luminance: Vec<f64>,
        blocks_per_row: usize,
    ) -> Result<Self, MaskError> {
        let len = texture.len();
        if edge.len() != len || corner.len() != len || luminance.len() != len {
            return Err(MaskError::GeometryMismatch(format!(
                "texture {} / edge {} / corner {} / luminance {}",
                len,
                edge.len(),
                corner.len(),
                luminance.len()
            )));
        }
        if len == 0 || blocks_per_row == 0 || len % blocks_per_row != 0 {
            return Err(MaskError::GeometryMismatch(format!(
                "{len} blocks do not tile rows of {blocks_per_row}"
            )));
        }
        Ok(Self {
            texture,
            edge,
            corner,
            luminance,
            blocks_per_row,
        })
    }

    /// Extracts all four feature grids from an image and its transform.
    pub fn compute(
        img: &GrayImage,
        grid: &CoefficientGrid,
        edges: &EdgeMap,
        corners: &CornerMap,
    ) -> Result<Self, MaskError> {
        if edges.width() != img.width() || edges.height() != img.height() {
            return Err(MaskError::GeometryMismatch(format!(
                "edge map {}x{} vs image {}x{}",
                edges.width(),
                edges.height(),
                img.width(),
                img.height()
            )));
        }
        Self::new(
            texture_feature(grid),
            edge_feature(edges)?,
            corner_feature(corners)?,
            features::block_luminance_grid(img),
            grid.blocks_per_row(),
        )
    }

    pub fn texture(&self) -> &[f64] {
        &self.texture
    }

    pub fn edge(&self) -> &[f64] {
        &self.edge
    }

    pub fn corner(&self) -> &[f64] {
        &self.corner
    }

    pub fn luminance(&self) -> &[f64] {
        &self.luminance
    }

    pub fn blocks_per_row(&self) -> usize {
        self.blocks_per_row
    }

    pub fn block_count(&self) -> usize {
        self.texture.len()
    }
}

/// The fused per-block mask. `raw` values are non-negative; `normalized`
/// divides by the maximum raw value (all-zero masks stay all-zero).
#[derive(Clone, Debug)]
pub struct JndMask {
    raw: Vec<f64>,
    normalized: Vec<f64>,
    mode: LuminanceMode,
    blocks_per_row: usize,
}

impl JndMask {
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn mode(&self) -> LuminanceMode {
        self.mode
    }

    pub fn blocks_per_row(&self) -> usize {
        self.blocks_per_row
    }

    pub fn block_rows(&self) -> usize {
        self.raw.len() / self.blocks_per_row
    }

    /// Renders the normalized mask as a small grayscale image, one pixel
    /// per block.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.blocks_per_row, self.block_rows(), |x, y| {
            (self.normalized[y * self.blocks_per_row + x] * 255.0).round() as u8
        })
    }
}

/// Per-block texture tolerance: log of the AC coefficient energy (DC
/// excluded), clamped to be non-negative and scaled so the most textured
/// block scores 64. A flat image scores 0 everywhere.
pub fn texture_feature(grid: &CoefficientGrid) -> Vec<f64> {
    let raw: Vec<f64> = grid
        .blocks()
        .iter()
        .map(|block| {
            let mut energy = 0.0;
            for (p, row) in block.coeffs.iter().enumerate() {
                for (q, &v) in row.iter().enumerate() {
                    if (p, q) != (0, 0) {
                        energy += v * v;
                    }
                }
            }
            energy.max(1.0).ln()
        })
        .collect();
    scale_to_feature_range(raw)
}

/// Per-block edge density: edge-pixel count scaled so the densest block
/// scores 64.
pub fn edge_feature(edges: &EdgeMap) -> Result<Vec<f64>, MaskError> {
    if edges.width() % BLOCK_SIZE != 0 || edges.height() % BLOCK_SIZE != 0 {
        return Err(MaskError::GeometryMismatch(format!(
            "edge map {}x{} is not block aligned",
            edges.width(),
            edges.height()
        )));
    }
    let bpr = edges.width() / BLOCK_SIZE;
    let rows = edges.height() / BLOCK_SIZE;
    let mut counts = vec![0.0f64; bpr * rows];
    for y in 0..edges.height() {
        for x in 0..edges.width() {
            if edges.is_edge(x, y) {
                counts[(y / BLOCK_SIZE) * bpr + x / BLOCK_SIZE] += 1.0;
            }
        }
    }
    Ok(scale_to_feature_range(counts))
}

/// Per-block corner density, scaled like [`edge_feature`].
pub fn corner_feature(corners: &CornerMap) -> Result<Vec<f64>, MaskError> {
    if corners.width() % BLOCK_SIZE != 0 || corners.height() % BLOCK_SIZE != 0 {
        return Err(MaskError::GeometryMismatch(format!(
            "corner map {}x{} is not block aligned",
            corners.width(),
            corners.height()
        )));
    }
    let bpr = corners.width() / BLOCK_SIZE;
    let rows = corners.height() / BLOCK_SIZE;
    let mut counts = vec![0.0f64; bpr * rows];
    for &(x, y) in corners.points() {
        counts[(y / BLOCK_SIZE) * bpr + x / BLOCK_SIZE] += 1.0;
    }
    Ok(scale_to_feature_range(counts))
}

fn scale_to_feature_range(raw: Vec<f64>) -> Vec<f64> {
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.into_iter().map(|v| FEATURE_SCALE * v / max).collect()
}

/// Fuses the feature grids into the final mask.
///
/// The initial value is `M_T - (M_E + M_C) / 2`, floored at 0 (a negative
/// weight would flip chip polarity at embedding). In additive mode the
/// luminance correction `scale * (128 - M_L)^2` is added; in
/// multiplicative mode the mask stays luminance-free and the sensitivity
/// factor is applied at embedding instead.
pub fn build_mask(
    features: &FeatureGrid,
    mode: LuminanceMode,
    luminance_scale: f64,
) -> JndMask {
    let raw: Vec<f64> = (0..features.block_count())
        .map(|i| {
            let initial =
                (features.texture[i] - 0.5 * (features.edge[i] + features.corner[i])).max(0.0);
            match mode {
                LuminanceMode::AdditiveCorrection => {
                    let deviation = 128.0 - features.luminance[i];
                    initial + luminance_scale * deviation * deviation
                }
                LuminanceMode::MultiplicativeDl => initial,
            }
        })
        .collect();
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    let normalized = if max > 0.0 {
        raw.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; raw.len()]
    };
    JndMask {
        raw,
        normalized,
        mode,
        blocks_per_row: features.blocks_per_row,
    }
}

/// Parameters of the full image -> mask pipeline.
#[derive(Clone, Debug)]
pub struct MaskParams {
    pub detector: DetectorChoice,
    pub css: CssParams,
    pub luminance_scale: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            detector: DetectorChoice::default(),
            css: CssParams::default(),
            luminance_scale: DEFAULT_LUMINANCE_SCALE,
        }
    }
}

/// Runs the whole feature pipeline (edges, corners, luminance, texture)
/// and fuses the result.
pub fn compute_mask(
    img: &GrayImage,
    grid: &CoefficientGrid,
    mode: LuminanceMode,
    params: &MaskParams,
) -> Result<JndMask, MaskError> {
    let edges = features::detect_edges(img, &params.detector)?;
    let corners = features::detect_corners(&edges, &params.css);
    let features = FeatureGrid::compute(img, grid, &edges, &corners)?;
    Ok(build_mask(&features, mode, params.luminance_scale))
}

/// Writes selected block rows of the normalized mask as CSV: header
/// `block_col,row_<r1>[,row_<r2>...]`, one line per block column, six
/// decimal places.
pub fn dump_mask_rows(
    mask: &JndMask,
    rows: &[usize],
    path: impl AsRef<Path>,
) -> Result<(), MaskError> {
    let block_rows = mask.block_rows();
    for &row in rows {
        if row >= block_rows {
            return Err(MaskError::InvalidRow {
                row,
                rows: block_rows,
            });
        }
    }
    let path = path.as_ref();
    let mut out = String::from("block_col");
    for &row in rows {
        out.push_str(&format!(",row_{row}"));
    }
    out.push('\n');
    for col in 0..mask.blocks_per_row {
        out.push_str(&col.to_string());
        for &row in rows {
            out.push_str(&format!(
                ",{:.6}",
                mask.normalized[row * mask.blocks_per_row + col]
            ));
        }
        out.push('\n');
    }
    let file = fs::File::create(path).map_err(|source| MaskError::UnwritableDestination {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = io::BufWriter::new(file);
    writer
        .write_all(out.as_bytes())
        .map_err(|source| MaskError::UnwritableDestination {
            path: path.display().to_string(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform;
    use proptest::prelude::*;

    fn uniform_grid(
        texture: f64,
        edge: f64,
        corner: f64,
        luminance: f64,
        blocks: usize,
    ) -> FeatureGrid {
        FeatureGrid::new(
            vec![texture; blocks],
            vec![edge; blocks],
            vec![corner; blocks],
            vec![luminance; blocks],
            blocks,
        )
        .unwrap()
    }

    #[test]
    fn pure_texture_at_midgray_passes_through() {
        let grid = uniform_grid(64.0, 0.0, 0.0, 128.0, 4);
        let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
        for &v in mask.raw() {
            assert_eq!(v, 64.0);
        }
    }

    #[test]
    fn negative_initial_mask_floors_to_zero() {
        let grid = uniform_grid(0.0, 64.0, 64.0, 128.0, 4);
        let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
        for &v in mask.raw() {
            assert_eq!(v, 0.0);
        }
        for &v in mask.normalized() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn dark_block_gains_scaled_luminance_correction() {
        let grid = uniform_grid(32.0, 0.0, 0.0, 0.0, 1);
        let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
        assert!((mask.raw()[0] - 96.0).abs() < 1e-12);
    }

    #[test]
    fn multiplicative_mode_has_no_luminance_term() {
        let grid = uniform_grid(32.0, 0.0, 0.0, 0.0, 1);
        let mask = build_mask(&grid, LuminanceMode::MultiplicativeDl, DEFAULT_LUMINANCE_SCALE);
        assert_eq!(mask.raw()[0], 32.0);
    }

    #[test]
    fn unscaled_compatibility_switch() {
        let grid = uniform_grid(32.0, 0.0, 0.0, 0.0, 1);
        let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, 1.0);
        assert_eq!(mask.raw()[0], 32.0 + 128.0 * 128.0);
    }

    #[test]
    fn texture_feature_log_ratio() {
        // One block with AC energy e^10, three with e^5: scores 64 and 32.
        let img = GrayImage::from_fn(16, 16, |_, _| 0);
        let mut grid = transform::transform_image(&img).unwrap();
        grid.blocks_mut()[0].coeffs[3][4] = (10.0f64 / 2.0).exp();
        for b in 1..4 {
            grid.blocks_mut()[b].coeffs[3][4] = (5.0f64 / 2.0).exp();
        }
        let texture = texture_feature(&grid);
        assert!((texture[0] - 64.0).abs() < 1e-9);
        for &v in &texture[1..] {
            assert!((v - 32.0).abs() < 1e-9);
        }
    }

    #[test]
    fn texture_feature_flat_image_is_zero() {
        let img = GrayImage::from_fn(32, 32, |_, _| 93);
        let grid = transform::transform_image(&img).unwrap();
        assert!(texture_feature(&grid).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn texture_dc_is_excluded() {
        // Blocks with different DC but identical AC must score identically.
        let img = GrayImage::from_fn(16, 8, |x, _| if x < 8 { 40 } else { 200 });
        let grid = transform::transform_image(&img).unwrap();
        let texture = texture_feature(&grid);
        assert_eq!(texture[0], texture[1]);
    }

    fn edge_map_with(
        width: usize,
        height: usize,
        pred: impl Fn(usize, usize) -> bool,
    ) -> EdgeMap {
        let img = GrayImage::from_fn(width, height, |_, _| 0);
        let _ = img;
        let mut flags = vec![false; width * height];
        for y in 0..height {
            for x in 0..width {
                flags[y * width + x] = pred(x, y);
            }
        }
        EdgeMap::new(width, height, flags)
    }

    #[test]
    fn edge_feature_scaling() {
        // Block 0 fully covered, others empty.
        let edges = edge_map_with(24, 8, |x, _| x < 8);
        let feature = edge_feature(&edges).unwrap();
        assert_eq!(feature, vec![64.0, 0.0, 0.0]);

        // Equal nonzero counts normalize to 64 everywhere.
        let edges = edge_map_with(24, 8, |x, y| y == 3 && x % 8 < 5);
        let feature = edge_feature(&edges).unwrap();
        assert_eq!(feature, vec![64.0, 64.0, 64.0]);
    }

    #[test]
    fn corner_feature_single_point() {
        let corners = CornerMap::new(24, 8, vec![(10, 3)]);
        let feature = corner_feature(&corners).unwrap();
        assert_eq!(feature, vec![0.0, 64.0, 0.0]);
        let empty = CornerMap::new(24, 8, vec![]);
        assert_eq!(corner_feature(&empty).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let result = FeatureGrid::new(vec![0.0; 4], vec![0.0; 3], vec![0.0; 4], vec![0.0; 4], 2);
        assert!(matches!(result, Err(MaskError::GeometryMismatch(_))));
    }

    #[test]
    fn dump_mask_rows_format() {
        let grid = FeatureGrid::new(
            vec![64.0, 32.0, 16.0, 8.0],
            vec![0.0; 4],
            vec![0.0; 4],
            vec![128.0; 4],
            2,
        )
        .unwrap();
        let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.csv");
        dump_mask_rows(&mask, &[0, 1], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "block_col,row_0,row_1");
        assert_eq!(lines[1], "0,1.000000,0.250000");
        assert_eq!(lines[2], "1,0.500000,0.125000");

        // Header-only dump for an empty row list.
        let empty = dir.path().join("empty.csv");
        dump_mask_rows(&mask, &[], &empty).unwrap();
        assert_eq!(std::fs::read_to_string(&empty).unwrap().lines().count(), 3);

        // Same mask dumped twice yields identical bytes.
        let again = dir.path().join("mask2.csv");
        dump_mask_rows(&mask, &[0, 1], &again).unwrap();
        assert_eq!(std::fs::read_to_string(&again).unwrap(), text);
    }

    #[test]
    fn dump_rejects_out_of_range_row() {
        let grid = uniform_grid(10.0, 0.0, 0.0, 128.0, 2);
        let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
        let dir = tempfile::tempdir().unwrap();
        let result = dump_mask_rows(&mask, &[7], dir.path().join("x.csv"));
        assert!(matches!(result, Err(MaskError::InvalidRow { row: 7, .. })));
    }

    proptest! {
        #[test]
        fn mask_invariants(
            texture in proptest::collection::vec(0.0..64.0f64, 16),
            edge in proptest::collection::vec(0.0..64.0f64, 16),
            corner in proptest::collection::vec(0.0..64.0f64, 16),
            luminance in proptest::collection::vec(0.0..255.0f64, 16),
            bump in 0.1..20.0f64,
            index in 0usize..16,
        ) {
            let grid = FeatureGrid::new(texture.clone(), edge.clone(), corner.clone(), luminance.clone(), 4).unwrap();
            let mask = build_mask(&grid, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);

            // Non-negative raw values; normalized within [0, 1] with max 1
            // unless degenerate.
            for &v in mask.raw() {
                prop_assert!(v >= 0.0);
            }
            let max_norm = mask.normalized().iter().cloned().fold(0.0f64, f64::max);
            if mask.raw().iter().any(|&v| v > 0.0) {
                prop_assert!((max_norm - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(max_norm, 0.0);
            }

            // Raising texture never lowers the raw mask value.
            let mut more_texture = texture.clone();
            more_texture[index] = (more_texture[index] + bump).min(64.0);
            let grid_up = FeatureGrid::new(more_texture, edge.clone(), corner.clone(), luminance.clone(), 4).unwrap();
            let mask_up = build_mask(&grid_up, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
            prop_assert!(mask_up.raw()[index] >= mask.raw()[index]);

            // Raising edge or corner density never raises it.
            let mut more_edge = edge.clone();
            more_edge[index] = (more_edge[index] + bump).min(64.0);
            let grid_edge = FeatureGrid::new(texture.clone(), more_edge, corner.clone(), luminance.clone(), 4).unwrap();
            let mask_edge = build_mask(&grid_edge, LuminanceMode::AdditiveCorrection, DEFAULT_LUMINANCE_SCALE);
            prop_assert!(mask_edge.raw()[index] <= mask.raw()[index]);

            // Luminance correction is symmetric about mid-gray. Dyadic
            // deltas keep 128 +/- delta exactly representable so the
            // comparison can be exact.
            let mut lum_hi = luminance.clone();
            let mut lum_lo = luminance.clone();
            let delta = (bump * 8.0).floor() / 8.0;
            lum_hi[index] = 128.0 + delta;
            lum_lo[index] = 128.0 - delta;
            let mask_hi = build_mask(
                &FeatureGrid::new(texture.clone(), edge.clone(), corner.clone(), lum_hi, 4).unwrap(),
                LuminanceMode::AdditiveCorrection,
                DEFAULT_LUMINANCE_SCALE,
            );
            let mask_lo = build_mask(
                &FeatureGrid::new(texture.clone(), edge.clone(), corner.clone(), lum_lo, 4).unwrap(),
                LuminanceMode::AdditiveCorrection,
                DEFAULT_LUMINANCE_SCALE,
            );
            prop_assert_eq!(mask_hi.raw()[index], mask_lo.raw()[index]);
        }
    }
}
