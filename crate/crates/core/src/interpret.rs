//! SE-gate interpretability: Gaussian top-fraction channel selection,
//! attention heatmap rendering, and modality importance.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, ArrayView3};
use thiserror::Error;

use crate::fusion::Modality;

pub const DEFAULT_FRACTION: f64 = 0.10;
pub const HEATMAP_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("gate has {0} channels, need at least 2")]
    TooFewChannels(usize),
    #[error("selected channel {index} out of range for {channels} channel maps")]
    ChannelOutOfRange { index: usize, channels: usize },
}

/// Channels whose gate values clear the Gaussian top-fraction threshold.
#[derive(Debug, Clone)]
pub struct ChannelSelection {
    pub threshold: f64,
    /// Sorted ascending; never empty.
    pub selected: Vec<usize>,
    pub fraction: f64,
}

/// Quantile of the standard normal: `Phi^-1(1 - fraction)`, found by
/// bisection on an erf-based CDF.
pub fn normal_upper_quantile(fraction: f64) -> f64 {
    let target = 1.0 - fraction;
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Error function via the Abramowitz-Stegun 7.1.26 rational approximation
/// (absolute error below 1.5e-7, ample for the 1e-3 quantile tolerance).
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Threshold above which gate values fall in the top `fraction` of a
/// Normal fitted to the vector: `mean + z * std` with `z = Phi^-1(1 -
/// fraction)` and the population standard deviation.
pub fn gaussian_top_fraction_threshold(
    values: &ArrayView1<f64>,
    fraction: f64,
) -> Result<f64, InterpretError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(InterpretError::BadFraction(fraction));
    }
    let c = values.len();
    if c < 2 {
        return Err(InterpretError::TooFewChannels(c));
    }
    let mean = values.sum() / c as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
    Ok(mean + normal_upper_quantile(fraction) * var.sqrt())
}

/// Select the top-fraction channels of a gate vector. Falls back to the
/// exact `ceil(fraction * C)` largest values (ties to the lower index) when
/// the threshold selects nothing or the vector is constant.
pub fn select_channels(
    gate: &ArrayView1<f64>,
    fraction: f64,
) -> Result<ChannelSelection, InterpretError> {
    let threshold = gaussian_top_fraction_threshold(gate, fraction)?;
    let c = gate.len();
    let sigma_zero = gate.iter().all(|v| *v == gate[0]);
    let mut selected: Vec<usize> = if sigma_zero {
        Vec::new()
    } else {
        (0..c).filter(|i| gate[*i] >= threshold).collect()
    };
    if selected.is_empty() {
        let k = ((fraction * c as f64).ceil() as usize).clamp(1, c);
        let mut order: Vec<usize> = (0..c).collect();
        // Stable sort: descending by value, ties keep the lower index first.
        order.sort_by(|a, b| gate[*b].total_cmp(&gate[*a]).then(a.cmp(b)));
        selected = order.into_iter().take(k).collect();
        selected.sort_unstable();
    }
    Ok(ChannelSelection {
        threshold,
        selected,
        fraction,
    })
}

/// Per-frame heatmap: normalized intensity plus the blended composite.
#[derive(Debug, Clone)]
pub struct HeatmapOverlay {
    /// Intensity in `[0, 1]`, same size as the base image.
    pub intensity: Array2<f64>,
    /// `0.5 * base + 0.5 * colormap(intensity)` per channel.
    pub composite: Array3<f64>,
}

/// Render the mean of the selected channel maps onto the base image:
/// min-max normalize (constant maps become zeros), bicubic upsample to the
/// base size, clamp, then alpha-blend a jet-style colormap.
///
/// `gate_weights` switches the aggregation to a gate-weighted mean.
pub fn render_heatmap(
    maps: &ArrayView3<f64>,
    selection: &ChannelSelection,
    base: &ArrayView3<f64>,
    gate_weights: Option<&ArrayView1<f64>>,
) -> Result<HeatmapOverlay, InterpretError> {
    let (c, h, w) = maps.dim();
    let (_, bh, bw) = base.dim();
    for &idx in &selection.selected {
        if idx >= c {
            return Err(InterpretError::ChannelOutOfRange {
                index: idx,
                channels: c,
            });
        }
    }
    let mut mean = Array2::zeros((h, w));
    let mut total_w = 0.0;
    for &idx in &selection.selected {
        let wgt = gate_weights.map_or(1.0, |g| g[idx]);
        total_w += wgt;
        for y in 0..h {
            for x in 0..w {
                mean[[y, x]] += wgt * maps[[idx, y, x]];
            }
        }
    }
    if total_w != 0.0 {
        mean.mapv_inplace(|v| v / total_w);
    }

    let (lo, hi) = mean
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        mean.mapv_inplace(|v| (v - lo) / (hi - lo));
    } else {
        mean.fill(0.0);
    }

    let mut intensity = bicubic_resize(&mean.view(), bh, bw);
    intensity.mapv_inplace(|v| v.clamp(0.0, 1.0));

    let mut composite = Array3::zeros((3, bh, bw));
    for y in 0..bh {
        for x in 0..bw {
            let rgb = jet_colormap(intensity[[y, x]]);
            for ch in 0..3 {
                composite[[ch, y, x]] = (1.0 - HEATMAP_ALPHA) * base[[ch, y, x]]
                    + HEATMAP_ALPHA * rgb[ch];
            }
        }
    }
    Ok(HeatmapOverlay {
        intensity,
        composite,
    })
}

/// Keys cubic convolution kernel with a = -0.5.
fn cubic_kernel(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic resampling with half-pixel centers and clamp-to-edge sampling.
pub fn bicubic_resize(src: &ArrayView2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let mut out = Array2::zeros((out_h, out_w));
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for oy in 0..out_h {
        let cy = (oy as f64 + 0.5) * sy - 0.5;
        let y0 = cy.floor() as isize;
        for ox in 0..out_w {
            let cx = (ox as f64 + 0.5) * sx - 0.5;
            let x0 = cx.floor() as isize;
            let mut acc = 0.0;
            for dy in -1..=2isize {
                let yy = (y0 + dy).clamp(0, h as isize - 1) as usize;
                let wy = cubic_kernel(cy - (y0 + dy) as f64);
                for dx in -1..=2isize {
                    let xx = (x0 + dx).clamp(0, w as isize - 1) as usize;
                    let wx = cubic_kernel(cx - (x0 + dx) as f64);
                    acc += wy * wx * src[[yy, xx]];
                }
            }
            out[[oy, ox]] = acc;
        }
    }
    out
}

/// Classic jet-style colormap over `[0, 1]`.
pub fn jet_colormap(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * v - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * v - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * v - 1.0).abs()).clamp(0.0, 1.0);
    [r, g, b]
}

/// Normalized per-modality importance from a fusion gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalityImportance {
    pub audio: f64,
    pub face: f64,
    pub body: f64,
}

impl ModalityImportance {
    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::Audio => self.audio,
            Modality::Face => self.face,
            Modality::Body => self.body,
        }
    }
}

/// Mean gate value per modality slice, normalized to sum to one.
pub fn modality_importance(gate: &ArrayView1<f64>, embed_dim: usize) -> ModalityImportance {
    assert_eq!(gate.len(), 3 * embed_dim, "gate covers three streams");
    let mean_of = |m: Modality| -> f64 {
        let r = m.slice(embed_dim);
        gate.slice(ndarray::s![r]).sum() / embed_dim as f64
    };
    let a = mean_of(Modality::Audio);
    let f = mean_of(Modality::Face);
    let b = mean_of(Modality::Body);
    let total = a + f + b;
    ModalityImportance {
        audio: a / total,
        face: f / total,
        body: b / total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1, Array3};

    #[test]
    fn median_fraction_threshold_is_mean() {
        let v = arr1(&[0.1, 0.4, 0.6, 0.9, 0.25]);
        let thr = gaussian_top_fraction_threshold(&v.view(), 0.5).unwrap();
        let mean = v.sum() / 5.0;
        assert!((thr - mean).abs() < 1e-9, "z(0.5) = 0 so threshold = mean");
    }

    #[test]
    fn quantile_matches_tabulated_value() {
        let z = normal_upper_quantile(0.10);
        assert!((z - 1.2815515655).abs() < 1e-3, "z = {z}");
        assert!(normal_upper_quantile(0.5).abs() < 1e-6);
    }

    #[test]
    fn spec_example_single_hot_channel() {
        let mut v = vec![0.1; 10];
        v[0] = 0.9;
        let sel = select_channels(&arr1(&v).view(), 0.10).unwrap();
        assert_eq!(sel.selected, vec![0]);
        // mean 0.18, population std 0.24, z = 1.2816 -> threshold near 0.49
        assert!((sel.threshold - 0.49).abs() < 0.01, "{}", sel.threshold);
    }

    #[test]
    fn constant_gate_falls_back_to_top_k_low_indices() {
        let v = arr1(&[0.3; 12]);
        let sel = select_channels(&v.view(), 0.10).unwrap();
        assert_eq!(sel.selected, vec![0, 1], "ceil(1.2) = 2 lowest indices");
        assert!((sel.threshold - 0.3).abs() < 1e-12);
    }

    #[test]
    fn selection_is_affine_invariant() {
        let v = arr1(&[0.12, 0.81, 0.33, 0.55, 0.48, 0.97, 0.22, 0.61]);
        let base = select_channels(&v.view(), 0.25).unwrap();
        let scaled = v.mapv(|x| 3.7 * x + 0.9);
        let sel = select_channels(&scaled.view(), 0.25).unwrap();
        assert_eq!(base.selected, sel.selected);
    }

    #[test]
    fn selection_never_empty() {
        for fraction in [0.05, 0.10, 0.5, 0.9] {
            let v = arr1(&[0.5, 0.5001, 0.4999, 0.5]);
            let sel = select_channels(&v.view(), fraction).unwrap();
            assert!(!sel.selected.is_empty());
        }
    }

    // Direct cubic-kernel convolution oracle for the 2x2 -> 4x4 fixture.
    #[test]
    fn bicubic_matches_direct_oracle() {
        let src = ndarray::arr2(&[[0.0, 1.0], [0.0, 0.0]]);
        let got = bicubic_resize(&src.view(), 4, 4);
        for oy in 0..4 {
            for ox in 0..4 {
                let cy = (oy as f64 + 0.5) * 0.5 - 0.5;
                let cx = (ox as f64 + 0.5) * 0.5 - 0.5;
                let mut expect = 0.0;
                // Direct double sum over the full source with the same
                // clamped sampling rule.
                let y0 = cy.floor() as isize;
                let x0 = cx.floor() as isize;
                for dy in -1..=2isize {
                    for dx in -1..=2isize {
                        let yy = (y0 + dy).clamp(0, 1) as usize;
                        let xx = (x0 + dx).clamp(0, 1) as usize;
                        expect += cubic_kernel(cy - (y0 + dy) as f64)
                            * cubic_kernel(cx - (x0 + dx) as f64)
                            * src[[yy, xx]];
                    }
                }
                assert!(
                    (got[[oy, ox]] - expect).abs() < 1e-6,
                    "({oy},{ox}): {} vs {expect}",
                    got[[oy, ox]]
                );
            }
        }
    }

    #[test]
    fn single_hot_cell_peaks_at_upsampled_center() {
        let mut maps = Array3::zeros((2, 3, 3));
        maps[[1, 1, 2]] = 1.0;
        let sel = ChannelSelection {
            threshold: 0.0,
            selected: vec![1],
            fraction: 0.1,
        };
        let base = Array3::zeros((3, 12, 12));
        let hm = render_heatmap(&maps.view(), &sel, &base.view(), None).unwrap();
        let mut best = (0usize, 0usize);
        let mut best_v = -1.0;
        for y in 0..12 {
            for x in 0..12 {
                if hm.intensity[[y, x]] > best_v {
                    best_v = hm.intensity[[y, x]];
                    best = (y, x);
                }
            }
        }
        // Source cell (1, 2) maps to output center (6, 10).
        assert!((5..=7).contains(&best.0), "row {}", best.0);
        assert!((9..=11).contains(&best.1), "col {}", best.1);
    }

    #[test]
    fn constant_maps_give_zero_intensity_and_dimmed_base() {
        let maps = Array3::from_elem((1, 2, 2), 0.7);
        let sel = ChannelSelection {
            threshold: 0.0,
            selected: vec![0],
            fraction: 0.1,
        };
        let base = Array3::from_elem((3, 4, 4), 1.0);
        let hm = render_heatmap(&maps.view(), &sel, &base.view(), None).unwrap();
        assert!(hm.intensity.iter().all(|v| *v == 0.0));
        let rgb0 = jet_colormap(0.0);
        for ch in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let expect = 0.5 * 1.0 + 0.5 * rgb0[ch];
                    assert!((hm.composite[[ch, y, x]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn intensity_ignores_base_image() {
        let maps = Array3::from_shape_fn((2, 3, 3), |(c, y, x)| (c + y * 3 + x) as f64 * 0.1);
        let sel = ChannelSelection {
            threshold: 0.0,
            selected: vec![0, 1],
            fraction: 0.1,
        };
        let base1 = Array3::from_elem((3, 6, 6), 0.2);
        let base2 = Array3::from_shape_fn((3, 6, 6), |(c, y, x)| ((c + y + x) % 3) as f64 * 0.4);
        let a = render_heatmap(&maps.view(), &sel, &base1.view(), None).unwrap();
        let b = render_heatmap(&maps.view(), &sel, &base2.view(), None).unwrap();
        assert_eq!(a.intensity, b.intensity);
    }

    #[test]
    fn importance_normalizes_slice_means() {
        let mut gate = Array1::zeros(12);
        for i in 0..4 {
            gate[i] = 0.2;
        }
        for i in 4..8 {
            gate[i] = 0.3;
        }
        for i in 8..12 {
            gate[i] = 0.5;
        }
        let imp = modality_importance(&gate.view(), 4);
        assert!((imp.audio - 0.2).abs() < 1e-12);
        assert!((imp.face - 0.3).abs() < 1e-12);
        assert!((imp.body - 0.5).abs() < 1e-12);
        assert!((imp.audio + imp.face + imp.body - 1.0).abs() < 1e-9);

        // Scaling every gate leaves importances unchanged.
        let scaled = gate.mapv(|v| v * 3.0);
        let imp2 = modality_importance(&scaled.view(), 4);
        assert!((imp.audio - imp2.audio).abs() < 1e-12);
        assert!((imp.body - imp2.body).abs() < 1e-12);
    }

    #[test]
    fn equal_gates_are_thirds() {
        let gate = Array1::from_elem(24, 0.42);
        let imp = modality_importance(&gate.view(), 8);
        for v in [imp.audio, imp.face, imp.body] {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
