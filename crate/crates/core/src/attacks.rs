//! Robustness attack battery: JPEG quantization, additive Gaussian noise,
//! salt-and-pepper noise, median filtering, and unsharp-mask sharpening.
//!
//! Attacks preserve image dimensions. Deterministic attacks are
//! bit-reproducible; the noise attacks are bit-reproducible given their
//! seed (a ChaCha stream keyed by it). Specs parse from compact strings
//! like `jpeg:q=45`, `gauss:var=2%:seed=1`, `saltpepper:d=0.05:seed=1`,
//! `median:w=3`, and `sharpen:s=1.0`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::imaging::{GrayImage, ImagingError, BLOCK_SIZE};
use crate::transform;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("JPEG quality {0} out of range 1..=100")]
    QualityOutOfRange(u32),
    #[error("median window must be odd and >= 3, got {0}")]
    EvenWindow(usize),
    #[error("unknown attack kind {0:?}")]
    UnknownAttack(String),
    #[error("bad attack parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// How the Gaussian noise level is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum NoiseLevel {
    /// Variance as a percentage of 255^2 (the usual toolbox convention).
    VariancePercent(f64),
    /// Absolute standard deviation in gray levels.
    Sigma(f64),
}

impl NoiseLevel {
    fn sigma(self) -> f64 {
        match self {
            Self::VariancePercent(pct) => (pct / 100.0 * 255.0 * 255.0).sqrt(),
            Self::Sigma(sigma) => sigma,
        }
    }
}

/// One attack with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackSpec {
    Jpeg { quality: u32 },
    GaussianNoise { level: NoiseLevel, seed: u64 },
    SaltPepper { density: f64, seed: u64 },
    MedianFilter { window: usize },
    Sharpen { strength: f64 },
}

impl AttackSpec {
    /// Seed recorded in results; 0 for deterministic attacks.
    pub fn seed(&self) -> u64 {
        match *self {
            Self::GaussianNoise { seed, .. } | Self::SaltPepper { seed, .. } => seed,
            _ => 0,
        }
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Jpeg { quality } => write!(f, "jpeg:q={quality}"),
            Self::GaussianNoise { level, seed } => match level {
                NoiseLevel::VariancePercent(pct) => write!(f, "gauss:var={pct}%:seed={seed}"),
                NoiseLevel::Sigma(sigma) => write!(f, "gauss:sigma={sigma}:seed={seed}"),
            },
            Self::SaltPepper { density, seed } => write!(f, "saltpepper:d={density}:seed={seed}"),
            Self::MedianFilter { window } => write!(f, "median:w={window}"),
            Self::Sharpen { strength } => write!(f, "sharpen:s={strength}"),
        }
    }
}

impl FromStr for AttackSpec {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut params = std::collections::BTreeMap::new();
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| AttackError::InvalidParameter(format!("{part:?} is not key=value")))?;
            params.insert(key, value);
        }
        let number = |key: &str| -> Result<f64, AttackError> {
            let raw = params
                .get(key)
                .ok_or_else(|| AttackError::InvalidParameter(format!("missing {key}= in {s:?}")))?;
            raw.trim_end_matches('%')
                .parse()
                .map_err(|_| AttackError::InvalidParameter(format!("{key}={raw} is not a number")))
        };
        let seed = || -> Result<u64, AttackError> {
            match params.get("seed") {
                None => Ok(0),
                Some(raw) => raw.parse().map_err(|_| {
                    AttackError::InvalidParameter(format!("seed={raw} is not an integer"))
                }),
            }
        };
        match kind {
            "jpeg" => {
                let quality = number("q")?;
                if quality.fract() != 0.0 {
                    return Err(AttackError::InvalidParameter(format!(
                        "q={quality} must be an integer"
                    )));
                }
                Ok(Self::Jpeg {
                    quality: quality as u32,
                })
            }
            "gauss" | "gaussian" => {
                let level = if params.contains_key("sigma") {
                    NoiseLevel::Sigma(number("sigma")?)
                } else {
                    NoiseLevel::VariancePercent(number("var")?)
                };
                match level {
                    NoiseLevel::VariancePercent(v) if v < 0.0 => {
                        return Err(AttackError::InvalidParameter(format!("var={v} is negative")))
                    }
                    NoiseLevel::Sigma(v) if v < 0.0 => {
                        return Err(AttackError::InvalidParameter(format!("sigma={v} is negative")))
                    }
                    _ => {}
                }
                Ok(Self::GaussianNoise {
                    level,
                    seed: seed()?,
                })
            }
            "saltpepper" | "salt-pepper" => {
                let density = number("d")?;
                if !(0.0..=1.0).contains(&density) {
                    return Err(AttackError::InvalidParameter(format!(
                        "density {density} outside [0, 1]"
                    )));
                }
                Ok(Self::SaltPepper {
                    density,
                    seed: seed()?,
                })
            }
            "median" => {
                let window = number("w")?;
                Ok(Self::MedianFilter {
                    window: window as usize,
                })
            }
            "sharpen" => {
                let strength = number("s")?;
                if strength < 0.0 {
                    return Err(AttackError::InvalidParameter(format!(
                        "strength {strength} is negative"
                    )));
                }
                Ok(Self::Sharpen { strength })
            }
            other => Err(AttackError::UnknownAttack(other.to_string())),
        }
    }
}

/// An attacked image plus the spec and seed that produced it.
#[derive(Clone, Debug)]
pub struct AttackResult {
    pub attacked: GrayImage,
    pub spec: AttackSpec,
    pub seed: u64,
}

/// Runs any attack spec.
pub fn apply(img: &GrayImage, spec: &AttackSpec) -> Result<AttackResult, AttackError> {
    match *spec {
        AttackSpec::Jpeg { quality } => jpeg_attack(img, quality),
        AttackSpec::GaussianNoise { level, seed } => Ok(gaussian_noise_level(img, level, seed)),
        AttackSpec::SaltPepper { density, seed } => Ok(salt_pepper(img, density, seed)),
        AttackSpec::MedianFilter { window } => median_filter(img, window),
        AttackSpec::Sharpen { strength } => Ok(sharpen(img, strength)),
    }
}

/// Base luminance quantization table (ITU T.81 Annex K), row-major.
const BASE_LUMA_TABLE: [u32; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// The scaled quantization table for a quality factor.
pub fn quantization_table(quality: u32) -> Result<[f64; 64], AttackError> {
    if !(1..=100).contains(&quality) {
        return Err(AttackError::QualityOutOfRange(quality));
    }
    let scale = if quality < 50 {
        5000.0 / quality as f64
    } else {
        200.0 - 2.0 * quality as f64
    };
    let mut table = [0.0; 64];
    for (entry, &base) in table.iter_mut().zip(&BASE_LUMA_TABLE) {
        *entry = (f64::from(base) * scale / 100.0).round().clamp(1.0, 255.0);
    }
    Ok(table)
}

/// Simulates the baseline JPEG luminance path: level shift, per-block DCT,
/// quantize/dequantize with the scaled standard table, inverse DCT.
/// Entropy coding is lossless and therefore omitted; the pixel damage is
/// the same.
pub fn jpeg_attack(img: &GrayImage, quality: u32) -> Result<AttackResult, AttackError> {
    let table = quantization_table(quality)?;
    img.require_block_aligned()?;
    let tiles = crate::imaging::partition_blocks(img)?;
    let processed: Vec<_> = tiles
        .iter()
        .map(|(origin, tile)| {
            let mut coeffs = transform::dct2(&transform::sample_block_to_real(tile), true);
            for p in 0..BLOCK_SIZE {
                for q in 0..BLOCK_SIZE {
                    let step = table[p * BLOCK_SIZE + q];
                    coeffs[p][q] = (coeffs[p][q] / step).round() * step;
                }
            }
            let spatial = transform::idct2(&coeffs, true);
            let mut out = [[0u8; BLOCK_SIZE]; BLOCK_SIZE];
            for (dst, src) in out.iter_mut().zip(spatial.iter()) {
                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                    *d = s.round().clamp(0.0, 255.0) as u8;
                }
            }
            (*origin, out)
        })
        .collect();
    Ok(AttackResult {
        attacked: crate::imaging::assemble_blocks(
            &processed,
            img.blocks_per_row(),
            img.block_rows(),
        ),
        spec: AttackSpec::Jpeg { quality },
        seed: 0,
    })
}

/// Adds zero-mean Gaussian noise with variance `variance_pct`% of 255^2.
pub fn gaussian_noise(img: &GrayImage, variance_pct: f64, seed: u64) -> AttackResult {
    gaussian_noise_level(img, NoiseLevel::VariancePercent(variance_pct), seed)
}

/// Adds zero-mean Gaussian noise with the given absolute sigma.
pub fn gaussian_noise_sigma(img: &GrayImage, sigma: f64, seed: u64) -> AttackResult {
    gaussian_noise_level(img, NoiseLevel::Sigma(sigma), seed)
}

fn gaussian_noise_level(img: &GrayImage, level: NoiseLevel, seed: u64) -> AttackResult {
    let sigma = level.sigma();
    assert!(sigma >= 0.0, "noise level must be non-negative");
    let attacked = if sigma == 0.0 {
        img.clone()
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            (f64::from(img.get(x, y)) + normal.sample(&mut rng))
                .round()
                .clamp(0.0, 255.0) as u8
        })
    };
    AttackResult {
        attacked,
        spec: AttackSpec::GaussianNoise { level, seed },
        seed,
    }
}

/// Replaces each pixel, independently with probability `density`, by 0 or
/// 255 with equal odds.
pub fn salt_pepper(img: &GrayImage, density: f64, seed: u64) -> AttackResult {
    assert!((0.0..=1.0).contains(&density), "density must be in [0, 1]");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let attacked = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        if rng.gen::<f64>() < density {
            if rng.gen::<bool>() {
                255
            } else {
                0
            }
        } else {
            img.get(x, y)
        }
    });
    AttackResult {
        attacked,
        spec: AttackSpec::SaltPepper { density, seed },
        seed,
    }
}

/// Median filtering with a square window and replicated borders.
pub fn median_filter(img: &GrayImage, window: usize) -> Result<AttackResult, AttackError> {
    if window % 2 == 0 || window < 3 {
        return Err(AttackError::EvenWindow(window));
    }
    let radius = (window / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut neighborhood = Vec::with_capacity(window * window);
    let attacked = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        neighborhood.clear();
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let sx = (x as isize + dx).clamp(0, w - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h - 1) as usize;
                neighborhood.push(img.get(sx, sy));
            }
        }
        neighborhood.sort_unstable();
        neighborhood[neighborhood.len() / 2]
    });
    Ok(AttackResult {
        attacked,
        spec: AttackSpec::MedianFilter { window },
        seed: 0,
    })
}

/// Unsharp masking: `out = img + strength * (img - boxblur3(img))`.
pub fn sharpen(img: &GrayImage, strength: f64) -> AttackResult {
    assert!(strength >= 0.0, "strength must be non-negative");
    let (w, h) = (img.width() as isize, img.height() as isize);
    let attacked = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut blur = 0.0;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let sx = (x as isize + dx).clamp(0, w - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h - 1) as usize;
                blur += f64::from(img.get(sx, sy));
            }
        }
        blur /= 9.0;
        let v = f64::from(img.get(x, y));
        (v + strength * (v - blur)).round().clamp(0.0, 255.0) as u8
    });
    AttackResult {
        attacked,
        spec: AttackSpec::Sharpen { strength },
        seed: 0,
    }
}
