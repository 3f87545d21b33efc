//! Fidelity and detection-quality measurement: MSE, PSNR, per-block noise
//! visibility (NVF), perceptually weighted PSNR, and bit error rate.

use serde::Serialize;

use crate::imaging::{GrayImage, ImagingError, WatermarkBitmap, BLOCK_SIZE};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {a_width}x{a_height} vs {b_width}x{b_height}")]
    DimensionMismatch {
        a_width: usize,
        a_height: usize,
        b_width: usize,
        b_height: usize,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Quality summary for an (original, modified) image pair.
///
/// `psnr_db` / `wpsnr_db` are `f64::INFINITY` for identical inputs and
/// serialize as the string `"inf"` in that case.
#[derive(Clone, Debug, Serialize)]
pub struct QualityReport {
    pub mse: f64,
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    #[serde(serialize_with = "serialize_db")]
    pub wpsnr_db: f64,
    #[serde(skip)]
    pub nvf_grid: Vec<f64>,
}

/// Serializes decibel values, spelling infinities as `"inf"`.
pub fn serialize_db<S: serde::Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
    if value.is_finite() {
        ser.serialize_f64(*value)
    } else {
        ser.serialize_str("inf")
    }
}

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<(), MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    Ok(())
}

/// Mean squared error over all pixels.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricsError> {
    check_dims(a, b)?;
    let sum: u64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.samples().len() as f64)
}

/// Peak signal-to-noise ratio in dB: `20 log10(255 / sqrt(MSE))`.
/// Identical images yield +infinity.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricsError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (255.0 / mse.sqrt()).log10()
    }
}

/// Per-block noise visibility: `1 / (1 + var)` normalized by its maximum,
/// so values land in (0, 1] with flat blocks at 1 and textured blocks near
/// 0. `var` is the population variance of the block's 64 samples.
pub fn nvf(img: &GrayImage) -> Result<Vec<f64>, MetricsError> {
    img.require_block_aligned()?;
    let bpr = img.blocks_per_row();
    let rows = img.block_rows();
    let mut raw = Vec::with_capacity(bpr * rows);
    for br in 0..rows {
        for bc in 0..bpr {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for dy in 0..BLOCK_SIZE {
                for dx in 0..BLOCK_SIZE {
                    let v = f64::from(img.get(bc * BLOCK_SIZE + dx, br * BLOCK_SIZE + dy));
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let n = (BLOCK_SIZE * BLOCK_SIZE) as f64;
            let variance = (sum_sq - sum * sum / n) / n;
            raw.push(1.0 / (1.0 + variance.max(0.0)));
        }
    }
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut raw {
            *v /= max;
        }
    }
    Ok(raw)
}

/// Weighted PSNR: squared error is discounted per block by the NVF of the
/// ORIGINAL image before averaging, so distortion hidden in texture counts
/// less. Always >= plain PSNR because NVF <= 1.
pub fn wpsnr(original: &GrayImage, modified: &GrayImage) -> Result<f64, MetricsError> {
    check_dims(original, modified)?;
    let weights = nvf(original)?;
    Ok(psnr_from_mse(weighted_mse(original, modified, &weights)))
}

fn weighted_mse(a: &GrayImage, b: &GrayImage, nvf: &[f64]) -> f64 {
    let bpr = a.blocks_per_row();
    let mut acc = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let d = f64::from(a.get(x, y)) - f64::from(b.get(x, y));
            acc += d * d * nvf[(y / BLOCK_SIZE) * bpr + x / BLOCK_SIZE];
        }
    }
    acc / (a.width() * a.height()) as f64
}

/// Fraction of mismatched bits between two equally sized bitmaps.
pub fn ber(recovered: &WatermarkBitmap, reference: &WatermarkBitmap) -> Result<f64, MetricsError> {
    if recovered.width() != reference.width() || recovered.height() != reference.height() {
        return Err(MetricsError::DimensionMismatch {
            a_width: recovered.width(),
            a_height: recovered.height(),
            b_width: reference.width(),
            b_height: reference.height(),
        });
    }
    let mismatches = recovered
        .bits()
        .iter()
        .zip(reference.bits())
        .filter(|(a, b)| a != b)
        .count();
    Ok(mismatches as f64 / recovered.len() as f64)
}

/// Computes the full quality summary for an image pair.
pub fn quality_report(
    original: &GrayImage,
    modified: &GrayImage,
) -> Result<QualityReport, MetricsError> {
    let mse = mse(original, modified)?;
    let nvf_grid = nvf(original)?;
    check_dims(original, modified)?;
    let wmse = weighted_mse(original, modified, &nvf_grid);
    Ok(QualityReport {
        mse,
        psnr_db: psnr_from_mse(mse),
        wpsnr_db: psnr_from_mse(wmse),
        nvf_grid,
    })
}
