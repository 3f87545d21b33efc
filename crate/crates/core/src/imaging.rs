//! Grayscale image and binary watermark containers, block partitioning, and
//! file I/O (binary PGM, 8-bit grayscale PNG, PBM).
//!
//! All types are immutable after construction; every operation here is pure.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

/// Side length of the square blocks every pipeline stage operates on.
pub const BLOCK_SIZE: usize = 8;

/// An 8x8 tile of luminance samples in row-major `[row][col]` order.
pub type SampleBlock = [[u8; BLOCK_SIZE]; BLOCK_SIZE];

/// Errors from image and watermark loading, saving, and partitioning.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("PGM maxval is {0}, only maxval 255 is supported")]
    MaxvalNot255(u32),
    #[error("cannot write {path}: {source}")]
    UnwritableDestination {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("image dimensions {width}x{height} are not divisible by {BLOCK_SIZE}")]
    DimensionsNotBlockAligned { width: usize, height: usize },
    #[error("watermark bitmap is empty")]
    EmptyBitmap,
    #[error("sample buffer holds {actual} values, expected {expected}")]
    SampleCountMismatch { expected: usize, actual: usize },
}

/// A grayscale image: row-major 8-bit luminance samples.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl GrayImage {
    /// Wraps a row-major sample buffer. The buffer length must equal
    /// `width * height`.
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, ImagingError> {
        if samples.len() != width * height {
            return Err(ImagingError::SampleCountMismatch {
                expected: width * height,
                actual: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    /// Ensures both dimensions are divisible by the block size.
    pub fn require_block_aligned(&self) -> Result<(), ImagingError> {
        if self.width % BLOCK_SIZE != 0 || self.height % BLOCK_SIZE != 0 {
            return Err(ImagingError::DimensionsNotBlockAligned {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    /// Number of blocks per row once partitioned.
    pub fn blocks_per_row(&self) -> usize {
        self.width / BLOCK_SIZE
    }

    /// Number of block rows once partitioned.
    pub fn block_rows(&self) -> usize {
        self.height / BLOCK_SIZE
    }
}

/// Position of one 8x8 block within the block grid of an image.
///
/// `linear` is the row-major ordinal used to pair blocks with d-sequence
/// segments and payload bits; it always equals
/// `row * blocks_per_row + col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockIndex {
    pub row: usize,
    pub col: usize,
    pub linear: usize,
}

impl BlockIndex {
    pub fn new(row: usize, col: usize, blocks_per_row: usize) -> Self {
        Self {
            row,
            col,
            linear: row * blocks_per_row + col,
        }
    }

    /// Pixel coordinates of the block's top-left corner.
    pub fn origin_px(&self) -> (usize, usize) {
        (self.col * BLOCK_SIZE, self.row * BLOCK_SIZE)
    }
}

/// A binary watermark payload. Bit 1 is ink (dark), bit 0 is background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WatermarkBitmap {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl WatermarkBitmap {
    /// Wraps a row-major bit buffer; every element must be 0 or 1 and the
    /// bitmap must be non-empty.
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self, ImagingError> {
        if width * height == 0 {
            return Err(ImagingError::EmptyBitmap);
        }
        if bits.len() != width * height {
            return Err(ImagingError::SampleCountMismatch {
                expected: width * height,
                actual: bits.len(),
            });
        }
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Ok(Self {
            width,
            height,
            bits: bits.iter().map(|&b| u8::from(b != 0)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn bit(&self, index: usize) -> u8 {
        self.bits[index]
    }

    /// Serializes as plain-text PBM (P1).
    pub fn to_pbm_string(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.width, self.height);
        for row in self.bits.chunks(self.width) {
            let line: Vec<&str> = row.iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Loads a grayscale image from a binary PGM (P5, maxval 255) or PNG file.
///
/// Color PNG input is reduced with the integer luma rule
/// `round(0.299 R + 0.587 G + 0.114 B)`; 16-bit input is rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImagingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImagingError::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes)
    } else {
        Err(ImagingError::UnsupportedFormat(format!(
            "{} is neither binary PGM (P5) nor PNG",
            path.display()
        )))
    }
}

/// Saves an image; the format is chosen by extension (`.pgm` or `.png`).
/// The save/load round trip is bit-exact for both formats.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let path = path.as_ref();
    let unwritable = |source: io::Error| ImagingError::UnwritableDestination {
        path: path.display().to_string(),
        source,
    };
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => {
            let mut data = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
            data.extend_from_slice(&img.samples);
            fs::write(path, data).map_err(unwritable)
        }
        Some("png") => {
            let buf = image::GrayImage::from_raw(
                img.width as u32,
                img.height as u32,
                img.samples.clone(),
            )
            .expect("sample buffer length matches dimensions");
            buf.save(path)
                .map_err(|e| unwritable(io::Error::other(e.to_string())))
        }
        _ => Err(ImagingError::UnsupportedFormat(format!(
            "cannot infer output format from {}",
            path.display()
        ))),
    }
}

/// Splits a block-aligned image into 8x8 tiles in row-major block order.
/// The tiles cover the image exactly; reassembling them is the identity.
pub fn partition_blocks(img: &GrayImage) -> Result<Vec<(BlockIndex, SampleBlock)>, ImagingError> {
    img.require_block_aligned()?;
    let bpr = img.blocks_per_row();
    let rows = img.block_rows();
    let mut blocks = Vec::with_capacity(bpr * rows);
    for br in 0..rows {
        for bc in 0..bpr {
            let index = BlockIndex::new(br, bc, bpr);
            let (x0, y0) = index.origin_px();
            let mut tile = [[0u8; BLOCK_SIZE]; BLOCK_SIZE];
            for (dy, row) in tile.iter_mut().enumerate() {
                let offset = (y0 + dy) * img.width + x0;
                row.copy_from_slice(&img.samples[offset..offset + BLOCK_SIZE]);
            }
            blocks.push((index, tile));
        }
    }
    Ok(blocks)
}

/// Loads a watermark bitmap from PBM (P1/P4) or any supported image file.
/// Image inputs are binarized at threshold 128: dark pixels become bit 1.
pub fn load_watermark(path: impl AsRef<Path>) -> Result<WatermarkBitmap, ImagingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImagingError::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(b"P1") {
        decode_pbm_ascii(&bytes)
    } else if bytes.starts_with(b"P4") {
        decode_pbm_binary(&bytes)
    } else {
        let img = if bytes.starts_with(b"P5") {
            decode_pgm(&bytes)?
        } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
            decode_png(&bytes)?
        } else {
            return Err(ImagingError::UnsupportedFormat(format!(
                "{} is not PBM, PGM, or PNG",
                path.display()
            )));
        };
        let bits = img.samples().iter().map(|&s| u8::from(s < 128)).collect();
        WatermarkBitmap::new(img.width(), img.height(), bits)
    }
}

/// Saves a watermark bitmap as plain-text PBM (P1).
pub fn save_watermark(wm: &WatermarkBitmap, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let path = path.as_ref();
    fs::write(path, wm.to_pbm_string()).map_err(|source| ImagingError::UnwritableDestination {
        path: path.display().to_string(),
        source,
    })
}

// --- PNM decoding ---

/// Reads PNM header tokens, skipping whitespace and `#` comments.
struct PnmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmTokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self) -> Result<u32, ImagingError> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(ImagingError::UnsupportedFormat(
                "malformed PNM header".into(),
            ));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImagingError::UnsupportedFormat("malformed PNM header".into()))
    }

    /// Position just past a single separator byte (the raster start in
    /// binary PNM formats).
    fn raster_start(&self) -> usize {
        self.pos + 1
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let mut tokens = PnmTokens::new(&bytes[2..]);
    let width = tokens.next_uint()? as usize;
    let height = tokens.next_uint()? as usize;
    let maxval = tokens.next_uint()?;
    if maxval != 255 {
        return Err(ImagingError::MaxvalNot255(maxval));
    }
    let start = 2 + tokens.raster_start();
    let needed = width * height;
    if bytes.len() < start + needed {
        return Err(ImagingError::UnsupportedFormat(
            "PGM raster is truncated".into(),
        ));
    }
    GrayImage::new(width, height, bytes[start..start + needed].to_vec())
}

fn decode_pbm_ascii(bytes: &[u8]) -> Result<WatermarkBitmap, ImagingError> {
    let mut tokens = PnmTokens::new(&bytes[2..]);
    let width = tokens.next_uint()? as usize;
    let height = tokens.next_uint()? as usize;
    let mut bits = Vec::with_capacity(width * height);
    for &b in &bytes[2 + tokens.pos..] {
        match b {
            b'0' => bits.push(0),
            b'1' => bits.push(1),
            b'#' => break, // trailing comment; nothing more to read
            _ => {}
        }
        if bits.len() == width * height {
            break;
        }
    }
    if bits.len() != width * height {
        return Err(ImagingError::UnsupportedFormat(
            "PBM raster is truncated".into(),
        ));
    }
    WatermarkBitmap::new(width, height, bits)
}

fn decode_pbm_binary(bytes: &[u8]) -> Result<WatermarkBitmap, ImagingError> {
    let mut tokens = PnmTokens::new(&bytes[2..]);
    let width = tokens.next_uint()? as usize;
    let height = tokens.next_uint()? as usize;
    let start = 2 + tokens.raster_start();
    let row_bytes = width.div_ceil(8);
    if bytes.len() < start + row_bytes * height {
        return Err(ImagingError::UnsupportedFormat(
            "PBM raster is truncated".into(),
        ));
    }
    let mut bits = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &bytes[start + y * row_bytes..start + (y + 1) * row_bytes];
        for x in 0..width {
            let byte = row[x / 8];
            bits.push((byte >> (7 - x % 8)) & 1);
        }
    }
    WatermarkBitmap::new(width, height, bits)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImagingError::UnsupportedFormat(e.to_string()))?;
    use image::DynamicImage::*;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let samples = match decoded {
        ImageLuma8(buf) => buf.into_raw(),
        ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        ImageRgb8(buf) => buf.pixels().map(|p| luma_601(p.0[0], p.0[1], p.0[2])).collect(),
        ImageRgba8(buf) => buf.pixels().map(|p| luma_601(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(ImagingError::UnsupportedFormat(format!(
                "unsupported PNG pixel format {:?}",
                other.color()
            )))
        }
    };
    GrayImage::new(width, height, samples)
}

/// Integer BT.601 luma: `round(0.299 R + 0.587 G + 0.114 B)`.
fn luma_601(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).round() as u8
}

/// Reassembles a block-aligned image from 8x8 tiles in row-major block
/// order. Inverse of [`partition_blocks`].
pub fn assemble_blocks(
    blocks: &[(BlockIndex, SampleBlock)],
    blocks_per_row: usize,
    block_rows: usize,
) -> GrayImage {
    let width = blocks_per_row * BLOCK_SIZE;
    let height = block_rows * BLOCK_SIZE;
    let mut samples = vec![0u8; width * height];
    for (index, tile) in blocks {
        let (x0, y0) = index.origin_px();
        for (dy, row) in tile.iter().enumerate() {
            let offset = (y0 + dy) * width + x0;
            samples[offset..offset + BLOCK_SIZE].copy_from_slice(row);
        }
    }
    GrayImage {
        width,
        height,
        samples,
    }
}

/// Writes an ASCII PBM rendering of a binary map (used for edge/corner
/// debug dumps).
pub fn save_binary_map(
    flags: &[bool],
    width: usize,
    height: usize,
    path: impl AsRef<Path>,
) -> Result<(), ImagingError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|source| ImagingError::UnwritableDestination {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = io::BufWriter::new(file);
    let write = |w: &mut io::BufWriter<fs::File>| -> io::Result<()> {
        writeln!(w, "P1")?;
        writeln!(w, "{width} {height}")?;
        for row in flags.chunks(width) {
            let line: Vec<&str> = row.iter().map(|&f| if f { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    };
    write(&mut w).map_err(|source| ImagingError::UnwritableDestination {
        path: path.display().to_string(),
        source,
    })
}
