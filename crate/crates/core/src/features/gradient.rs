//! Gaussian-gradient edge detector: smooth, Sobel gradients, non-maximum
//! suppression, dual-threshold hysteresis. Thresholds are relative to the
//! maximum gradient magnitude so a global contrast change cannot alter the
//! output flags.

use super::{EdgeMap, GradientHysteresisParams};
use crate::imaging::GrayImage;

pub(super) fn detect(img: &GrayImage, params: &GradientHysteresisParams) -> EdgeMap {
    let (w, h) = (img.width(), img.height());
    let gray: Vec<f64> = img.samples().iter().map(|&s| f64::from(s)).collect();
    let blurred = gaussian_blur(&gray, w, h, params.sigma);

    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w - 1 {
            let p = |dx: isize, dy: isize| {
                blurred[(y as isize + dy) as usize * w + (x as isize + dx) as usize]
            };
            let dx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let dy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = dx.hypot(dy);
        }
    }

    let thinned = non_maximum_suppression(&mag, &gx, &gy, w, h);
    let max = thinned.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return EdgeMap::new(w, h, vec![false; w * h]);
    }
    let flags = hysteresis(
        &thinned,
        w,
        h,
        params.low_ratio * max,
        params.high_ratio * max,
    );
    EdgeMap::new(w, h, flags)
}

/// Keeps a pixel only if its response is a local maximum along the stated
/// normal direction (the gradient direction, quantized to 4 bins).
/// Shared by both detectors; `nx`/`ny` give the per-pixel normal vector.
pub(super) fn non_maximum_suppression(
    mag: &[f64],
    nx: &[f64],
    ny: &[f64],
    w: usize,
    h: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w - 1 {
            let i = y * w + x;
            if mag[i] == 0.0 {
                continue;
            }
            let mut angle = ny[i].atan2(nx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let (a, b) = if !(22.5..157.5).contains(&angle) {
                (mag[i - 1], mag[i + 1])
            } else if angle < 67.5 {
                (mag[i + w + 1], mag[i - w - 1])
            } else if angle < 112.5 {
                (mag[i - w], mag[i + w])
            } else {
                (mag[i + w - 1], mag[i - w + 1])
            };
            // Strict on at least one side: a response that is flat along
            // its own normal is a plateau, not a ridge.
            if mag[i] >= a && mag[i] >= b && (mag[i] > a || mag[i] > b) {
                out[i] = mag[i];
            }
        }
    }
    out
}

/// Dual-threshold hysteresis: seeds at `high`, grows through 8-connected
/// neighbors at `low`.
pub(super) fn hysteresis(mag: &[f64], w: usize, h: usize, low: f64, high: f64) -> Vec<bool> {
    let mut flags = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in mag.iter().enumerate() {
        if m >= high && !flags[i] {
            flags[i] = true;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (x, y) = (j % w, j / w);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if !flags[k] && mag[k] >= low {
                            flags[k] = true;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    flags
}

/// Separable Gaussian blur with replicated borders; the kernel is
/// normalized to unit sum so constants pass through unchanged.
pub(super) fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-(i * i) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }

    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                acc += k * src[y * w + clamp(x as isize + ki as isize - radius, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                acc += k * tmp[clamp(y as isize + ki as isize - radius, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants() {
        let src = vec![42.0; 16 * 16];
        let out = gaussian_blur(&src, 16, 16, 1.4);
        for v in out {
            assert!((v - 42.0).abs() < 1e-9);
        }
    }

    #[test]
    fn blur_is_linear_in_input() {
        let a: Vec<f64> = (0..64).map(|i| (i % 9) as f64).collect();
        let scaled: Vec<f64> = a.iter().map(|v| 3.0 * v + 7.0).collect();
        let blur_a = gaussian_blur(&a, 8, 8, 1.0);
        let blur_scaled = gaussian_blur(&scaled, 8, 8, 1.0);
        for (x, y) in blur_a.iter().zip(&blur_scaled) {
            assert!((3.0 * x + 7.0 - y).abs() < 1e-9);
        }
    }

    #[test]
    fn hysteresis_connects_weak_to_strong() {
        // Row of magnitudes: strong seed with a weak tail, and an isolated
        // weak pixel that must stay off.
        let w = 8;
        let h = 3;
        let mut mag = vec![0.0; w * h];
        mag[w + 1] = 10.0; // strong
        mag[w + 2] = 4.0; // weak, attached
        mag[w + 3] = 4.0; // weak, attached
        mag[w + 6] = 4.0; // weak, isolated
        let flags = hysteresis(&mag, w, h, 3.0, 8.0);
        assert!(flags[w + 1] && flags[w + 2] && flags[w + 3]);
        assert!(!flags[w + 6]);
    }
}
