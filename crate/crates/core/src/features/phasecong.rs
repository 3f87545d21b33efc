//! Log-Gabor phase congruency edge detection.
//!
//! The image is filtered with a bank of complex log-Gabor filters (scales x
//! orientations) in the frequency domain. Points where the filter responses
//! are maximally in phase across scales score high congruency; the maximum
//! moment of the per-orientation congruency values is thinned and
//! hysteresis-thresholded into the edge map. Congruency is a ratio of
//! energies, so the measure is dimensionless and unaffected by global
//! contrast changes; the band-pass filters have no DC response, so
//! brightness offsets vanish entirely.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::gradient::{hysteresis, non_maximum_suppression};
use super::{EdgeMap, PhaseCongruencyParams};
use crate::imaging::GrayImage;

const EPSILON: f64 = 1e-4;

pub(super) fn detect(img: &GrayImage, params: &PhaseCongruencyParams) -> EdgeMap {
    let (w, h) = (img.width(), img.height());
    let moments = max_moment(img, params);
    // The moment field is smooth; thin it along the principal axis before
    // thresholding so edges localize to single-pixel ridges.
    let thinned = non_maximum_suppression(&moments.max, &moments.nx, &moments.ny, w, h);
    let flags = hysteresis(&thinned, w, h, params.low_threshold, params.high_threshold);
    EdgeMap::new(w, h, flags)
}

pub(super) struct MomentField {
    /// Maximum moment of phase congruency per pixel (edge strength).
    pub max: Vec<f64>,
    /// Principal-axis direction (edge normal) components per pixel.
    pub nx: Vec<f64>,
    pub ny: Vec<f64>,
}

/// Computes the per-pixel maximum moment of phase congruency and its
/// principal axis.
pub(super) fn max_moment(img: &GrayImage, params: &PhaseCongruencyParams) -> MomentField {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let norient = params.orientations;
    let nscale = params.scales;

    let mut spectrum: Vec<Complex<f64>> = img
        .samples()
        .iter()
        .map(|&s| Complex::new(f64::from(s), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    let fft_row_f = planner.plan_fft_forward(w);
    let fft_col_f = planner.plan_fft_forward(h);
    let fft_row_i = planner.plan_fft_inverse(w);
    let fft_col_i = planner.plan_fft_inverse(h);
    fft2d(&mut spectrum, w, h, fft_row_f.as_ref(), fft_col_f.as_ref());

    let freq = FrequencyGrid::new(w, h);
    let radials: Vec<Vec<f64>> = (0..nscale)
        .map(|s| {
            let wavelength = params.min_wavelength * params.scale_mult.powi(s as i32);
            freq.log_gabor(1.0 / wavelength, params.sigma_on_f)
        })
        .collect();

    let sigma_theta = std::f64::consts::PI / norient as f64 / params.d_theta_on_sigma;

    let mut covx2 = vec![0.0; n];
    let mut covy2 = vec![0.0; n];
    let mut covxy = vec![0.0; n];

    let mut responses: Vec<Vec<Complex<f64>>> = vec![vec![Complex::default(); n]; nscale];
    for o in 0..norient {
        let angle = o as f64 * std::f64::consts::PI / norient as f64;
        let spread = freq.angular_spread(angle, sigma_theta);

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_amp = vec![0.0; n];
        let mut max_amp = vec![0.0f64; n];
        let mut tau = 0.0;

        for (s, radial) in radials.iter().enumerate() {
            let plane = &mut responses[s];
            for i in 0..n {
                plane[i] = spectrum[i] * (radial[i] * spread[i]);
            }
            fft2d(plane, w, h, fft_row_i.as_ref(), fft_col_i.as_ref());
            let scale = 1.0 / n as f64;
            let mut amplitudes = Vec::with_capacity(n);
            for i in 0..n {
                plane[i] *= scale;
                let amp = plane[i].norm();
                amplitudes.push(amp);
                sum_e[i] += plane[i].re;
                sum_o[i] += plane[i].im;
                sum_amp[i] += amp;
                max_amp[i] = max_amp[i].max(amp);
            }
            if s == 0 {
                // Noise amplitude estimate from the smallest-scale response
                // distribution (Rayleigh median).
                tau = median(&mut amplitudes) / (4.0f64.ln()).sqrt();
            }
        }

        // Expected energy of the noise alone, extrapolated over scales.
        let inv_mult = 1.0 / params.scale_mult;
        let total_tau = tau * (1.0 - inv_mult.powi(nscale as i32)) / (1.0 - inv_mult);
        let noise_mean = total_tau * (std::f64::consts::PI / 2.0).sqrt();
        let noise_sigma = total_tau * ((4.0 - std::f64::consts::PI) / 2.0).sqrt();
        let noise_threshold = noise_mean + params.noise_k * noise_sigma;

        let (cos_a, sin_a) = (angle.cos(), angle.sin());
        for i in 0..n {
            let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + EPSILON;
            let mean_e = sum_e[i] / x_energy;
            let mean_o = sum_o[i] / x_energy;
            let mut energy = 0.0;
            for plane in &responses {
                let (e, o_part) = (plane[i].re, plane[i].im);
                energy += e * mean_e + o_part * mean_o - (e * mean_o - o_part * mean_e).abs();
            }
            energy = (energy - noise_threshold).max(0.0);

            // Penalize responses confined to a narrow frequency band.
            let width = if nscale > 1 {
                (sum_amp[i] / (max_amp[i] + EPSILON) - 1.0) / (nscale - 1) as f64
            } else {
                1.0
            };
            let weight = 1.0 / (1.0 + (params.gain * (params.cut_off - width)).exp());

            let pc = weight * energy / (sum_amp[i] + EPSILON);
            let cx = pc * cos_a;
            let cy = pc * sin_a;
            covx2[i] += cx * cx;
            covy2[i] += cy * cy;
            covxy[i] += cx * cy;
        }
    }

    let mut max = vec![0.0; n];
    let mut nx = vec![0.0; n];
    let mut ny = vec![0.0; n];
    let half_orient = norient as f64 / 2.0;
    for i in 0..n {
        let a = covx2[i] / half_orient;
        let c = covy2[i] / half_orient;
        let b = covxy[i] * 4.0 / norient as f64;
        let denom = (b * b + (a - c) * (a - c)).sqrt() + EPSILON;
        max[i] = (c + a + denom) / 2.0;
        let phi = 0.5 * b.atan2(a - c);
        nx[i] = phi.cos();
        ny[i] = phi.sin();
    }
    MomentField { max, nx, ny }
}

/// Precomputed normalized frequency coordinates for an FFT spectrum laid
/// out with DC at index 0.
struct FrequencyGrid {
    radius: Vec<f64>,
    theta: Vec<f64>,
    lowpass: Vec<f64>,
}

impl FrequencyGrid {
    fn new(w: usize, h: usize) -> Self {
        let freq = |i: usize, dim: usize| -> f64 {
            let signed = if i < dim.div_ceil(2) {
                i as isize
            } else {
                i as isize - dim as isize
            };
            signed as f64 / dim as f64
        };
        let n = w * h;
        let mut radius = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        let mut lowpass = Vec::with_capacity(n);
        for y in 0..h {
            let fy = freq(y, h);
            for x in 0..w {
                let fx = freq(x, w);
                let r = (fx * fx + fy * fy).sqrt();
                // Butterworth low-pass keeps the largest-scale filters from
                // picking up corner frequencies of the FFT grid.
                lowpass.push(1.0 / (1.0 + (r / 0.45).powi(30)));
                radius.push(if x == 0 && y == 0 { 1.0 } else { r });
                theta.push(fy.atan2(fx));
            }
        }
        Self {
            radius,
            theta,
            lowpass,
        }
    }

    /// Radial log-Gabor transfer function centered on `f0`, with no DC
    /// response.
    fn log_gabor(&self, f0: f64, sigma_on_f: f64) -> Vec<f64> {
        let denom = 2.0 * sigma_on_f.ln().powi(2);
        let mut out: Vec<f64> = self
            .radius
            .iter()
            .zip(&self.lowpass)
            .map(|(&r, &lp)| (-((r / f0).ln().powi(2)) / denom).exp() * lp)
            .collect();
        out[0] = 0.0;
        out
    }

    /// Gaussian falloff with angular distance from `angle` (axes are
    /// unoriented, so the distance wraps at pi).
    fn angular_spread(&self, angle: f64, sigma_theta: f64) -> Vec<f64> {
        self.theta
            .iter()
            .map(|&t| {
                let ds = (t.sin() * angle.cos() - t.cos() * angle.sin())
                    .atan2(t.cos() * angle.cos() + t.sin() * angle.sin())
                    .abs();
                (-(ds * ds) / (2.0 * sigma_theta * sigma_theta)).exp()
            })
            .collect()
    }
}

/// In-place 2D FFT: rows, then columns via transpose. Inverse transforms
/// are unnormalized, matching the planner passed in; callers rescale.
fn fft2d(
    data: &mut [Complex<f64>],
    w: usize,
    h: usize,
    row_fft: &dyn rustfft::Fft<f64>,
    col_fft: &dyn rustfft::Fft<f64>,
) {
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut transposed = vec![Complex::default(); w * h];
    for y in 0..h {
        for x in 0..w {
            transposed[x * h + y] = data[y * w + x];
        }
    }
    for col in transposed.chunks_exact_mut(h) {
        col_fft.process(col);
    }
    for y in 0..h {
        for x in 0..w {
            data[y * w + x] = transposed[x * h + y];
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (lows, pivot, _) =
        values.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite amplitudes"));
    if len % 2 == 1 {
        *pivot
    } else {
        let lower_max = lows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (*pivot + lower_max) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_small_sets() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
    }

    #[test]
    fn fft2d_round_trip() {
        let w = 16;
        let h = 8;
        let mut planner = FftPlanner::new();
        let original: Vec<Complex<f64>> = (0..w * h)
            .map(|i| Complex::new((i % 13) as f64, 0.0))
            .collect();
        let mut data = original.clone();
        fft2d(
            &mut data,
            w,
            h,
            planner.plan_fft_forward(w).as_ref(),
            planner.plan_fft_forward(h).as_ref(),
        );
        fft2d(
            &mut data,
            w,
            h,
            planner.plan_fft_inverse(w).as_ref(),
            planner.plan_fft_inverse(h).as_ref(),
        );
        for (a, b) in data.iter().zip(&original) {
            assert!((a.re / (w * h) as f64 - b.re).abs() < 1e-9);
        }
    }

    #[test]
    fn moment_peaks_at_step() {
        let img = GrayImage::from_fn(64, 64, |x, _| if x < 32 { 64 } else { 192 });
        let field = max_moment(&img, &PhaseCongruencyParams::default());
        let mid_row = 32;
        let at_step = field.max[mid_row * 64 + 31].max(field.max[mid_row * 64 + 32]);
        let far_away = field.max[mid_row * 64 + 10];
        assert!(at_step > 0.2, "step moment {at_step}");
        assert!(at_step > 4.0 * far_away, "step {at_step} vs flat {far_away}");
        // Normal at the step points along x.
        let i = mid_row * 64 + 32;
        assert!(field.nx[i].abs() > 0.9, "normal ({}, {})", field.nx[i], field.ny[i]);
    }

    #[test]
    fn moment_is_contrast_invariant_up_to_epsilon_terms() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            if (x as i32 - 32).pow(2) + (y as i32 - 32).pow(2) < 180 {
                180
            } else {
                70
            }
        });
        let dimmed = GrayImage::from_fn(64, 64, |x, y| {
            (0.8 * f64::from(img.get(x, y)) - 10.0).round() as u8
        });
        let a = max_moment(&img, &PhaseCongruencyParams::default());
        let b = max_moment(&dimmed, &PhaseCongruencyParams::default());
        let mut worst = 0.0f64;
        for (x, y) in a.max.iter().zip(&b.max) {
            worst = worst.max((x - y).abs());
        }
        assert!(worst < 0.05, "moment drift {worst}");
    }
}
