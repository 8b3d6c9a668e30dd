use ndarray::{Array3, ArrayView3};

use super::{BoundingBox, DataError};

/// Channels-first RGB image with values in `[0, 1]`.
pub type Image = Array3<f64>;

/// Crop the box region out of `frame` and resample it to `size`x`size`
/// with an area-weighted (box) filter: every output pixel is the average of
/// the source rectangle it covers, so a full-frame crop at the native size
/// is the identity and values never leave `[0, 1]`.
pub fn crop_and_resize(
    frame: &ArrayView3<f64>,
    bbox: &BoundingBox,
    size: usize,
) -> Result<Image, DataError> {
    let (channels, height, width) = frame.dim();
    assert_eq!(channels, 3, "expected a 3-channel image");
    if height == 0 || width == 0 {
        return Err(DataError::DegenerateCrop { width, height });
    }
    // Continuous source rectangle in pixel units.
    let x_lo = bbox.x1 * width as f64;
    let x_hi = bbox.x2 * width as f64;
    let y_lo = bbox.y1 * height as f64;
    let y_hi = bbox.y2 * height as f64;
    if x_hi - x_lo < 1.0 || y_hi - y_lo < 1.0 {
        // Smaller than one source pixel: rounding to the pixel grid would
        // leave nothing to average.
        return Err(DataError::DegenerateCrop { width, height });
    }

    let col_weights = axis_overlaps(x_lo, x_hi, width, size);
    let row_weights = axis_overlaps(y_lo, y_hi, height, size);

    let mut out = Array3::zeros((3, size, size));
    for c in 0..3 {
        let src = frame.index_axis(ndarray::Axis(0), c);
        for (oy, (row_range, row_w)) in row_weights.iter().enumerate() {
            for (ox, (col_range, col_w)) in col_weights.iter().enumerate() {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (iy, wy) in row_range.clone().zip(row_w.iter()) {
                    for (ix, wx) in col_range.clone().zip(col_w.iter()) {
                        let w = wy * wx;
                        acc += src[[iy, ix]] * w;
                        norm += w;
                    }
                }
                out[[c, oy, ox]] = if norm > 0.0 { acc / norm } else { 0.0 };
            }
        }
    }
    Ok(out)
}

type AxisOverlap = (std::ops::Range<usize>, Vec<f64>);

/// For each of `n_out` output cells spanning `[lo, hi)`, the range of source
/// pixels it overlaps and the overlap length per pixel.
fn axis_overlaps(lo: f64, hi: f64, n_src: usize, n_out: usize) -> Vec<AxisOverlap> {
    let step = (hi - lo) / n_out as f64;
    (0..n_out)
        .map(|o| {
            let a = lo + o as f64 * step;
            let b = lo + (o + 1) as f64 * step;
            let first = (a.floor().max(0.0) as usize).min(n_src - 1);
            let last = ((b.ceil() as usize).max(first + 1)).min(n_src);
            let weights = (first..last)
                .map(|p| {
                    let p_lo = p as f64;
                    let p_hi = p_lo + 1.0;
                    (b.min(p_hi) - a.max(p_lo)).max(0.0)
                })
                .collect();
            (first..last, weights)
        })
        .collect()
}

/// Zero the face region of a body crop. `face` is expressed in the crop's
/// normalized coordinates (see [`BoundingBox::relative`]); `None` means the
/// face does not intersect the crop and the input is returned unchanged.
pub fn mask_face_region(crop: &ArrayView3<f64>, face: Option<&BoundingBox>) -> Image {
    let mut out = crop.to_owned();
    let Some(face) = face else {
        return out;
    };
    let (_, height, width) = crop.dim();
    let x1 = (face.x1 * width as f64).floor().max(0.0) as usize;
    let x2 = ((face.x2 * width as f64).ceil() as usize).min(width);
    let y1 = (face.y1 * height as f64).floor().max(0.0) as usize;
    let y2 = ((face.y2 * height as f64).ceil() as usize).min(height);
    for c in 0..3 {
        for y in y1..y2 {
            for x in x1..x2 {
                out[[c, y, x]] = 0.0;
            }
        }
    }
    out
}

/// Mirror the image left-right.
pub fn flip_horizontal(img: &ArrayView3<f64>) -> Image {
    let (c, h, w) = img.dim();
    Array3::from_shape_fn((c, h, w), |(ci, y, x)| img[[ci, y, w - 1 - x]])
}

/// Rotate about the image center by `angle` radians (counterclockwise),
/// bilinear sampling, zero fill outside the source.
pub fn rotate(img: &ArrayView3<f64>, angle: f64) -> Image {
    let (c, h, w) = img.dim();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = Array3::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate the output coordinate by -angle.
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            if sx < -0.5 || sy < -0.5 || sx > w as f64 - 0.5 || sy > h as f64 - 0.5 {
                continue;
            }
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let sample = |ci: usize, yy: f64, xx: f64| -> f64 {
                if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                    0.0
                } else {
                    img[[ci, yy as usize, xx as usize]]
                }
            };
            for ci in 0..c {
                let v = sample(ci, y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + sample(ci, y0, x0 + 1.0) * (1.0 - fy) * fx
                    + sample(ci, y0 + 1.0, x0) * fy * (1.0 - fx)
                    + sample(ci, y0 + 1.0, x0 + 1.0) * fy * fx;
                out[[ci, y, x]] = v;
            }
        }
    }
    out
}

/// Encode a `[0,1]` image to 8-bit RGB.
pub fn to_rgb8(img: &ArrayView3<f64>) -> image::RgbImage {
    let (_, h, w) = img.dim();
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            (img[[c, y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

/// Decode an 8-bit RGB image into a `[0,1]` array.
pub fn from_rgb8(img: &image::RgbImage) -> Image {
    let (w, h) = img.dimensions();
    Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
        f64::from(img.get_pixel(x as u32, y as u32).0[c]) / 255.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use proptest::prelude::*;

    fn full_box() -> BoundingBox {
        BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn identity_crop_on_native_size() {
        let img = Array3::from_shape_fn((3, 8, 8), |(c, y, x)| {
            (c as f64 + 1.0) * (y as f64 * 8.0 + x as f64) / 200.0
        });
        let out = crop_and_resize(&img.view(), &full_box(), 8).unwrap();
        for (a, b) in img.iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_gray_stays_uniform() {
        let img = Array3::from_elem((3, 37, 23), 0.42);
        let b = BoundingBox::new(0.13, 0.2, 0.77, 0.95).unwrap();
        let out = crop_and_resize(&img.view(), &b, 112).unwrap();
        for v in out.iter() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    // Brute-force check on a 4x4 toy image: full-frame crop to 2x2 under
    // area resampling averages each 2x2 block.
    #[test]
    fn area_resample_matches_block_average() {
        let img = Array3::from_shape_fn((3, 4, 4), |(c, y, x)| {
            (c * 16 + y * 4 + x) as f64 / 64.0
        });
        let out = crop_and_resize(&img.view(), &full_box(), 2).unwrap();
        for c in 0..3 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut expect = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            expect += img[[c, oy * 2 + dy, ox * 2 + dx]];
                        }
                    }
                    expect /= 4.0;
                    assert!((out[[c, oy, ox]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_box_errors() {
        let img = Array3::from_elem((3, 100, 100), 0.5);
        let sliver = BoundingBox::new(0.501, 0.1, 0.505, 0.9).unwrap();
        assert!(matches!(
            crop_and_resize(&img.view(), &sliver, 16),
            Err(DataError::DegenerateCrop { .. })
        ));
    }

    #[test]
    fn mask_whole_crop_zeroes_everything() {
        let img = Array3::from_elem((3, 4, 4), 0.7);
        let out = mask_face_region(&img.view(), Some(&full_box()));
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mask_none_is_identity() {
        let img = Array3::from_elem((3, 4, 4), 0.7);
        let out = mask_face_region(&img.view(), None);
        assert_eq!(out, img);
    }

    #[test]
    fn mask_left_half_of_4x4() {
        let img = Array3::from_elem((3, 4, 4), 1.0);
        let left = BoundingBox::new(0.0, 0.0, 0.5, 1.0).unwrap();
        let out = mask_face_region(&img.view(), Some(&left));
        for y in 0..4 {
            for x in 0..4 {
                let expect = if x < 2 { 0.0 } else { 1.0 };
                assert_eq!(out[[0, y, x]], expect);
            }
        }
    }

    #[test]
    fn flip_is_involution() {
        let img = Array3::from_shape_fn((3, 5, 7), |(c, y, x)| (c + 2 * y + 3 * x) as f64 / 50.0);
        let twice = flip_horizontal(&flip_horizontal(&img.view()).view());
        assert_eq!(img, twice);
    }

    proptest! {
        // Output range stays inside [0,1] for any valid box and image.
        #[test]
        fn crop_output_in_unit_range(
            seed in 0u64..1000,
            x1 in 0.0f64..0.4,
            y1 in 0.0f64..0.4,
            x2 in 0.6f64..1.0,
            y2 in 0.6f64..1.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = Array3::from_shape_fn((3, 17, 19), |_| rng.gen::<f64>());
            let b = BoundingBox::new(x1, y1, x2, y2).unwrap();
            let out = crop_and_resize(&img.view(), &b, 9).unwrap();
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
