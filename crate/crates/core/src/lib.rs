//! Grayscale image watermarking with a perceptual just-noticeable-distortion
//! mask, keyed decimal-sequence modulation in the mid-band DCT domain, and a
//! blind correlation detector.
//!
//! The embedding pipeline is:
//!
//! 1. Partition the cover image into 8x8 blocks and transform each block with
//!    the orthonormal 2D DCT ([`transform`]).
//! 2. Extract texture, edge, corner, and luminance features ([`features`])
//!    and fuse them into a per-block distortion-tolerance weight
//!    ([`mask::JndMask`]).
//! 3. Spread a keyed bipolar sequence ([`dseq::DSequence`]) over the 22
//!    mid-band coefficients of every block, scaled by the mask and a global
//!    strength factor, signed by the payload bit assigned to that block
//!    ([`watermark::embed`]).
//!
//! Extraction is blind: the detector regenerates the keyed sequence,
//! correlates it with the mid-band coefficients of each block, and aggregates
//! per-block correlations into per-bit decisions ([`watermark::extract`]).
//!
//! [`metrics`] provides MSE/PSNR/WPSNR fidelity measurement and [`attacks`]
//! a reproducible robustness battery (JPEG, noise, filtering).

pub mod attacks;
pub mod dseq;
pub mod features;
pub mod imaging;
pub mod mask;
pub mod metrics;
pub mod transform;
pub mod watermark;

pub use imaging::{BlockIndex, GrayImage, WatermarkBitmap};
pub use mask::{JndMask, LuminanceMode};
pub use watermark::{CorrelationReport, EmbedConfig};
