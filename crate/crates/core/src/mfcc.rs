//! 13-dimensional MFCC frontend aligned with the video frame rate.
//!
//! Fixed pipeline per audio frame: pre-emphasis 0.97 over the whole signal,
//! 25 ms Hamming window with 10 ms hop, power spectrum over a 512-point FFT,
//! 26 triangular mel filters spanning 0..sr/2, natural log with a 1e-10
//! floor, orthonormal DCT-II keeping coefficients 0..=12.

use ndarray::{Array2, Array3};
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

pub const NUM_COEFFS: usize = 13;
pub const NUM_FILTERS: usize = 26;
pub const WINDOW_SECS: f64 = 0.025;
pub const HOP_SECS: f64 = 0.010;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const LOG_FLOOR: f64 = 1e-10;
const FFT_SIZE: usize = 512;
/// MFCC frames per video frame under the 100 Hz hop at 25 fps.
pub const FRAMES_PER_VIDEO_FRAME: usize = 4;

#[derive(Debug, Error)]
pub enum MfccError {
    #[error("sample rate {0} below the 8 kHz minimum")]
    SampleRateTooLow(u32),
    #[error("waveform of {samples} samples is shorter than one {window}-sample window")]
    WaveformTooShort { samples: usize, window: usize },
    #[error("window of {0} samples exceeds the 512-point FFT")]
    WindowTooLong(usize),
    #[error("video frame count must be positive")]
    NoVideoFrames,
}

/// MFCC sequence: `frames x 13`, with the window/hop that produced it.
#[derive(Debug, Clone)]
pub struct MfccMatrix {
    pub values: Array2<f64>,
    pub frame_hop: f64,
    pub frame_window: f64,
}

impl MfccMatrix {
    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }
}

/// Compute MFCCs for a mono waveform in `[-1, 1]`.
pub fn compute_mfcc(waveform: &[f64], sample_rate: u32) -> Result<MfccMatrix, MfccError> {
    if sample_rate < 8_000 {
        return Err(MfccError::SampleRateTooLow(sample_rate));
    }
    let sr = f64::from(sample_rate);
    let window = (WINDOW_SECS * sr).round() as usize;
    let hop = (HOP_SECS * sr).round() as usize;
    if waveform.len() < window {
        return Err(MfccError::WaveformTooShort {
            samples: waveform.len(),
            window,
        });
    }
    if window > FFT_SIZE {
        return Err(MfccError::WindowTooLong(window));
    }

    // Pre-emphasis over the whole signal; the first sample is kept as is.
    let mut emphasized = Vec::with_capacity(waveform.len());
    emphasized.push(waveform[0]);
    for i in 1..waveform.len() {
        emphasized.push(waveform[i] - PRE_EMPHASIS * waveform[i - 1]);
    }

    let hamming: Vec<f64> = (0..window)
        .map(|n| {
            0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (window as f64 - 1.0)).cos()
        })
        .collect();
    let filterbank = mel_filterbank(sample_rate, NUM_FILTERS, FFT_SIZE);
    let dct = dct_matrix(NUM_COEFFS, NUM_FILTERS);

    let num_frames = 1 + (emphasized.len() - window) / hop;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(FFT_SIZE);
    let mut values = Array2::zeros((num_frames, NUM_COEFFS));
    let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    for f in 0..num_frames {
        let start = f * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < window {
                Complex::new(emphasized[start + i] * hamming[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..FFT_SIZE / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr() / FFT_SIZE as f64)
            .collect();
        let log_mel: Vec<f64> = filterbank
            .rows()
            .into_iter()
            .map(|row| {
                let e: f64 = row.iter().zip(power.iter()).map(|(w, p)| w * p).sum();
                e.max(LOG_FLOOR).ln()
            })
            .collect();
        for k in 0..NUM_COEFFS {
            values[[f, k]] = (0..NUM_FILTERS).map(|n| dct[[k, n]] * log_mel[n]).sum();
        }
    }

    Ok(MfccMatrix {
        values,
        frame_hop: hop as f64 / sr,
        frame_window: window as f64 / sr,
    })
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided power spectrum bins.
fn mel_filterbank(sample_rate: u32, num_filters: usize, fft_size: usize) -> Array2<f64> {
    let sr = f64::from(sample_rate);
    let num_bins = fft_size / 2 + 1;
    let mel_hi = hz_to_mel(sr / 2.0);
    let centers: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(mel_hi * i as f64 / (num_filters + 1) as f64))
        .collect();
    let mut bank = Array2::zeros((num_filters, num_bins));
    for f in 0..num_filters {
        let (lo, mid, hi) = (centers[f], centers[f + 1], centers[f + 2]);
        for bin in 0..num_bins {
            let freq = bin as f64 * sr / fft_size as f64;
            let w = if freq >= lo && freq <= mid {
                (freq - lo) / (mid - lo)
            } else if freq > mid && freq <= hi {
                (hi - freq) / (hi - mid)
            } else {
                0.0
            };
            bank[[f, bin]] = w.max(0.0);
        }
    }
    bank
}

/// Orthonormal DCT-II rows (`k x n` with `n = num_filters`).
fn dct_matrix(num_coeffs: usize, n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((num_coeffs, n));
    for k in 0..num_coeffs {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[[k, i]] =
                scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    m
}

/// Group MFCC rows under the video frame grid: video frame `t` receives the
/// four audio frames starting at `round(t * (1 / fps) / hop)`; rows past the
/// end of the matrix are zero. Output shape is `T x 4 x 13`.
pub fn align_mfcc_to_video(
    mfcc: &MfccMatrix,
    fps: f64,
    video_frames: usize,
) -> Result<Array3<f64>, MfccError> {
    if video_frames == 0 {
        return Err(MfccError::NoVideoFrames);
    }
    let rows_per_second = 1.0 / mfcc.frame_hop;
    let mut out = Array3::zeros((video_frames, FRAMES_PER_VIDEO_FRAME, NUM_COEFFS));
    for t in 0..video_frames {
        let start = (t as f64 * rows_per_second / fps).round() as usize;
        for j in 0..FRAMES_PER_VIDEO_FRAME {
            let row = start + j;
            if row < mfcc.num_frames() {
                for k in 0..NUM_COEFFS {
                    out[[t, j, k]] = mfcc.values[[row, k]];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, sr: u32) -> Vec<f64> {
        (0..(secs * f64::from(sr)) as usize)
            .map(|i| (std::f64::consts::TAU * freq * i as f64 / f64::from(sr)).sin())
            .collect()
    }

    #[test]
    fn frame_count_for_one_second() {
        let m = compute_mfcc(&vec![0.0; 16_000], 16_000).unwrap();
        assert_eq!(m.num_frames(), 98); // 1 + (16000 - 400) / 160
    }

    #[test]
    fn zero_waveform_rows_are_identical_constants() {
        let m = compute_mfcc(&vec![0.0; 8_000], 16_000).unwrap();
        let first = m.values.row(0).to_owned();
        for row in m.values.rows() {
            for (a, b) in row.iter().zip(first.iter()) {
                assert_eq!(a, b);
            }
        }
        // Column-wise variance is exactly zero on constant input: every
        // column entry equals its first element bit for bit.
        for col in m.values.columns() {
            assert!(col.iter().all(|v| *v == col[0]));
        }
    }

    #[test]
    fn too_short_waveform_errors() {
        assert!(matches!(
            compute_mfcc(&vec![0.0; 100], 16_000),
            Err(MfccError::WaveformTooShort { .. })
        ));
        assert!(matches!(
            compute_mfcc(&vec![0.0; 16_000], 4_000),
            Err(MfccError::SampleRateTooLow(_))
        ));
    }

    // Independent oracle: naive O(N^2) DFT, mel weights and DCT recomputed
    // from their definitions.
    #[test]
    fn matches_naive_dft_oracle_on_pure_tone() {
        let sr = 16_000u32;
        let wave = tone(1_000.0, 0.1, sr);
        let m = compute_mfcc(&wave, sr).unwrap();

        let window = 400;
        let hop = 160;
        let mut emph = vec![wave[0]];
        for i in 1..wave.len() {
            emph.push(wave[i] - 0.97 * wave[i - 1]);
        }
        let check_frames = [0usize, 3, 7];
        for &f in &check_frames {
            let start = f * hop;
            let mut frame: Vec<f64> = (0..FFT_SIZE)
                .map(|i| {
                    if i < window {
                        let w = 0.54
                            - 0.46
                                * (std::f64::consts::TAU * i as f64 / (window as f64 - 1.0)).cos();
                        emph[start + i] * w
                    } else {
                        0.0
                    }
                })
                .collect();
            // Naive DFT.
            let mut power = vec![0.0; FFT_SIZE / 2 + 1];
            for (k, p) in power.iter_mut().enumerate() {
                let mut re = 0.0;
                let mut im = 0.0;
                for (n, x) in frame.iter().enumerate() {
                    let ang = -std::f64::consts::TAU * k as f64 * n as f64 / FFT_SIZE as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                *p = (re * re + im * im) / FFT_SIZE as f64;
            }
            frame.clear();
            // Mel energies straight from the triangle definition.
            let mel_hi = 2595.0 * (1.0 + (f64::from(sr) / 2.0) / 700.0).log10();
            let hz = |mel: f64| 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
            let mut log_mel = vec![0.0; NUM_FILTERS];
            for (fi, lm) in log_mel.iter_mut().enumerate() {
                let lo = hz(mel_hi * fi as f64 / 27.0);
                let mid = hz(mel_hi * (fi + 1) as f64 / 27.0);
                let hi = hz(mel_hi * (fi + 2) as f64 / 27.0);
                let mut e = 0.0;
                for (bin, p) in power.iter().enumerate() {
                    let freq = bin as f64 * f64::from(sr) / FFT_SIZE as f64;
                    let w = if freq >= lo && freq <= mid {
                        (freq - lo) / (mid - lo)
                    } else if freq > mid && freq <= hi {
                        (hi - freq) / (hi - mid)
                    } else {
                        0.0
                    };
                    e += w.max(0.0) * p;
                }
                *lm = e.max(1e-10).ln();
            }
            for k in 0..NUM_COEFFS {
                let scale = if k == 0 {
                    (1.0 / 26.0f64).sqrt()
                } else {
                    (2.0 / 26.0f64).sqrt()
                };
                let expect: f64 = log_mel
                    .iter()
                    .enumerate()
                    .map(|(n, lm)| {
                        lm * scale
                            * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / 26.0).cos()
                    })
                    .sum();
                let got = m.values[[f, k]];
                let rel = (got - expect).abs() / expect.abs().max(1e-9);
                assert!(rel < 1e-6, "frame {f} coeff {k}: {got} vs oracle {expect}");
            }
        }
    }

    #[test]
    fn hop_shift_moves_rows() {
        let sr = 16_000u32;
        let mut wave = tone(440.0, 0.3, sr);
        for (i, w) in wave.iter_mut().enumerate() {
            *w *= 0.7 + 0.3 * (i as f64 / 600.0).sin(); // non-stationary envelope
        }
        let shifted: Vec<f64> = vec![0.0; 160].into_iter().chain(wave.clone()).collect();
        let a = compute_mfcc(&wave, sr).unwrap();
        let b = compute_mfcc(&shifted, sr).unwrap();
        // Interior rows of the shifted signal equal the unshifted rows one
        // hop earlier.
        for f in 2..a.num_frames().min(b.num_frames() - 1) - 2 {
            for k in 0..NUM_COEFFS {
                let d = (b.values[[f + 1, k]] - a.values[[f, k]]).abs();
                assert!(d < 1e-6, "row {f} coeff {k} differs by {d}");
            }
        }
    }

    #[test]
    fn scaling_only_shifts_coefficient_zero() {
        let sr = 16_000u32;
        let wave = tone(700.0, 0.2, sr);
        let scaled: Vec<f64> = wave.iter().map(|s| s * 3.5).collect();
        let a = compute_mfcc(&wave, sr).unwrap();
        let b = compute_mfcc(&scaled, sr).unwrap();
        let shift = b.values[[1, 0]] - a.values[[1, 0]];
        assert!(shift.abs() > 1e-6, "c0 must move under scaling");
        for f in 0..a.num_frames() {
            let d0 = b.values[[f, 0]] - a.values[[f, 0]];
            assert!((d0 - shift).abs() < 1e-9, "c0 shift not constant at {f}");
            for k in 1..NUM_COEFFS {
                assert!(
                    (b.values[[f, k]] - a.values[[f, k]]).abs() < 1e-9,
                    "coefficient {k} changed under scaling"
                );
            }
        }
    }

    #[test]
    fn align_exact_reshape_at_25fps() {
        let sr = 16_000u32;
        let m = compute_mfcc(&tone(500.0, 1.05, sr), sr).unwrap();
        assert!(m.num_frames() >= 100);
        let t = 25;
        let aligned = align_mfcc_to_video(&m, 25.0, t).unwrap();
        assert_eq!(aligned.dim(), (t, 4, 13));
        for vt in 0..t {
            for j in 0..4 {
                for k in 0..13 {
                    assert_eq!(aligned[[vt, j, k]], m.values[[vt * 4 + j, k]]);
                }
            }
        }
    }

    #[test]
    fn align_pads_missing_rows_with_zeros() {
        let m = MfccMatrix {
            values: Array2::zeros((0, NUM_COEFFS)),
            frame_hop: 0.010,
            frame_window: 0.025,
        };
        let aligned = align_mfcc_to_video(&m, 25.0, 5).unwrap();
        assert_eq!(aligned.dim(), (5, 4, 13));
        assert!(aligned.iter().all(|v| *v == 0.0));
        assert!(align_mfcc_to_video(&m, 25.0, 0).is_err());
    }

    // Hand-enumerated index map for fps = 30: frame t starts at
    // round(t * 100 / 30).
    #[test]
    fn align_at_30fps_consumes_at_most_available_rows() {
        let sr = 16_000u32;
        let m = compute_mfcc(&tone(500.0, 1.0, sr), sr).unwrap();
        let aligned = align_mfcc_to_video(&m, 30.0, 30).unwrap();
        assert_eq!(aligned.dim(), (30, 4, 13));
        for t in 0..30 {
            let start = (t as f64 * 100.0 / 30.0).round() as usize;
            for j in 0..4 {
                for k in 0..13 {
                    let expect = if start + j < m.num_frames() {
                        m.values[[start + j, k]]
                    } else {
                        0.0
                    };
                    assert_eq!(aligned[[t, j, k]], expect);
                }
            }
        }
        // Last start index: round(29 * 3.333) = 97, so rows 97..101 with
        // 98 available: the tail is zero-padded.
        assert_eq!(aligned[[29, 0, 0]], m.values[[97, 0]]);
        assert_eq!(aligned[[29, 1, 0]], 0.0);
    }
}
