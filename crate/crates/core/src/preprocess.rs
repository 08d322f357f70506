//! Raw image conditioning: percentile normalization inside a foreground
//! mask, Otsu threshold + convex hull masks, whole-slide tiling, grayscale
//! conversion, resizing.
//!
//! All operations are pure functions on immutable inputs.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::grid::{MaskRegion, PixelGrid, RangeTag};

/// Result of [`percentile_normalize`]: the rescaled image plus a flag for
/// the degenerate case where the two percentiles coincide.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub image: PixelGrid,
    pub degenerate: bool,
}

/// Nearest-rank percentile of already-sorted values.
///
/// Rank = `ceil(q/100 * n)` (1-based), clamped to at least 1. Exactly
/// reproducible across implementations: the oracle is a sort.
fn nearest_rank(sorted: &[f32], q: f64) -> f32 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((q / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Rescale brightness so the `lo_pct`/`hi_pct` percentiles of the values
/// under `mask` map to 0 and 1, clipping everything outside.
///
/// If the two percentiles coincide the output is constant 0.5 and the
/// `degenerate` flag is set.
pub fn percentile_normalize(
    img: &PixelGrid,
    mask: &MaskRegion,
    lo_pct: f64,
    hi_pct: f64,
) -> Result<Normalized> {
    mask.check_fits(img)?;
    if mask.is_empty() {
        return Err(Error::Precondition("normalization mask is empty".into()));
    }
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct > hi_pct {
        return Err(Error::Precondition(format!("bad percentile pair ({lo_pct}, {hi_pct})")));
    }

    let mut masked: Vec<f32> = Vec::with_capacity(mask.count() * img.channels());
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.contains(y, x) {
                for c in 0..img.channels() {
                    masked.push(img.get(y, x, c));
                }
            }
        }
    }
    masked.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p_lo = nearest_rank(&masked, lo_pct);
    let p_hi = nearest_rank(&masked, hi_pct);

    if p_lo == p_hi {
        let image = PixelGrid::new(
            Array3::from_elem((img.height(), img.width(), img.channels()), 0.5),
            RangeTag::Unit,
        )?;
        return Ok(Normalized { image, degenerate: true });
    }

    let span = p_hi - p_lo;
    let image = img.map_values(RangeTag::Unit, |v| ((v - p_lo) / span).clamp(0.0, 1.0))?;
    Ok(Normalized { image, degenerate: false })
}

/// Result of [`foreground_mask`]: the mask plus a flag for the all-dark
/// fallback where no pixel clears the threshold.
#[derive(Debug, Clone)]
pub struct Foreground {
    pub mask: MaskRegion,
    pub fallback: bool,
}

/// Approximate the bright foreground region of a single-channel image as
/// the filled convex hull of the pixels above an Otsu threshold.
///
/// If nothing clears the threshold the full-image mask is returned with
/// the `fallback` flag set.
pub fn foreground_mask(img: &PixelGrid) -> Result<Foreground> {
    if img.channels() != 1 {
        return Err(Error::Precondition("foreground_mask requires a single-channel image".into()));
    }
    let threshold = otsu_threshold(img);
    let mut points: Vec<(i64, i64)> = Vec::new(); // (x, y)
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.luma(y, x) > threshold {
                points.push((x as i64, y as i64));
            }
        }
    }
    if points.is_empty() {
        return Ok(Foreground { mask: MaskRegion::full(img.height(), img.width()), fallback: true });
    }
    let hull = convex_hull(&mut points);
    let mask = fill_hull(&hull, img.height(), img.width());
    Ok(Foreground { mask, fallback: false })
}

/// Otsu's global threshold: maximize between-class variance over a
/// 256-bin histogram of `[0,1]` values. Returns the bin upper edge, so
/// foreground is `value > threshold`.
pub fn otsu_threshold(img: &PixelGrid) -> f32 {
    const BINS: usize = 256;
    let mut hist = [0u64; BINS];
    let mut total = 0u64;
    for v in img.data().iter() {
        let b = ((v * BINS as f32) as usize).min(BINS - 1);
        hist[b] += 1;
        total += 1;
    }
    let sum_all: f64 = hist.iter().enumerate().map(|(i, h)| i as f64 * *h as f64).sum();
    let mut w0 = 0f64;
    let mut sum0 = 0f64;
    let mut best = (0usize, -1f64);
    for k in 0..BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total as f64 - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if between > best.1 {
            best = (k, between);
        }
    }
    (best.0 as f32 + 1.0) / BINS as f32
}

/// Andrew's monotone chain. Returns hull vertices in counter-clockwise
/// order (y axis pointing down flips nothing in the algebra).
fn convex_hull(points: &mut Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    points.sort();
    points.dedup();
    let n = points.len();
    if n <= 2 {
        return points.clone();
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| -> i64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * n);
    for &p in points.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in points.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Rasterize the filled hull: a pixel is in the mask iff its lattice
/// point lies inside or on the hull polygon.
fn fill_hull(hull: &[(i64, i64)], h: usize, w: usize) -> MaskRegion {
    if hull.len() == 1 {
        let (px, py) = hull[0];
        return MaskRegion::from_fn(h, w, |y, x| (x as i64, y as i64) == (px, py));
    }
    if hull.len() == 2 {
        // Degenerate hull: pixels within half a pixel of the segment.
        let (a, b) = (hull[0], hull[1]);
        return MaskRegion::from_fn(h, w, |y, x| {
            segment_distance_sq(a, b, (x as i64, y as i64)) <= 0.25 + 1e-9
        });
    }
    let mut min_x = i64::MAX;
    let mut max_x = i64::MIN;
    let mut min_y = i64::MAX;
    let mut max_y = i64::MIN;
    for &(x, y) in hull {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    MaskRegion::from_fn(h, w, |y, x| {
        let (xi, yi) = (x as i64, y as i64);
        if xi < min_x || xi > max_x || yi < min_y || yi > max_y {
            return false;
        }
        // Inside test: on the same side (or on the boundary) of every edge.
        // Integer cross products are exact.
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let cross = (b.0 - a.0) * (yi - a.1) - (b.1 - a.1) * (xi - a.0);
            if cross < 0 {
                return false;
            }
        }
        true
    })
}

fn segment_distance_sq(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> f64 {
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (bx, by) = (b.0 as f64, b.1 as f64);
    let (px, py) = (p.0 as f64, p.1 as f64);
    let (dx, dy) = (bx - ax, by - ay);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 { 0.0 } else { (((px - ax) * dx + (py - ay) * dy) / len_sq).clamp(0.0, 1.0) };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    (px - cx) * (px - cx) + (py - cy) * (py - cy)
}

/// Cut an image into `tile`×`tile` patches on a `stride` grid, row-major.
/// Partial border regions are discarded; every tile carries `label`.
pub fn tile_image(
    img: &PixelGrid,
    tile: usize,
    stride: usize,
    label: &str,
) -> Result<Vec<(PixelGrid, String)>> {
    if tile == 0 || stride == 0 {
        return Err(Error::Precondition("tile and stride must be positive".into()));
    }
    let mut out = Vec::new();
    if img.height() < tile || img.width() < tile {
        return Ok(out);
    }
    let rows = (img.height() - tile) / stride + 1;
    let cols = (img.width() - tile) / stride + 1;
    for ty in 0..rows {
        for tx in 0..cols {
            let y0 = ty * stride;
            let x0 = tx * stride;
            let data = Array3::from_shape_fn((tile, tile, img.channels()), |(y, x, c)| {
                img.get(y0 + y, x0 + x, c)
            });
            out.push((PixelGrid::new(data, img.range())?, label.to_string()));
        }
    }
    Ok(out)
}

/// Expected tile count for given dimensions (0 when the image is smaller
/// than one tile on either axis).
pub fn tile_count(h: usize, w: usize, tile: usize, stride: usize) -> usize {
    if h < tile || w < tile {
        0
    } else {
        ((h - tile) / stride + 1) * ((w - tile) / stride + 1)
    }
}

/// Per-pixel luma `0.299 R + 0.587 G + 0.114 B`. Single-channel input
/// passes through unchanged.
pub fn to_grayscale(img: &PixelGrid) -> Result<PixelGrid> {
    if img.channels() == 1 {
        return Ok(img.clone());
    }
    let (lo, hi) = img.range().bounds();
    let data = Array3::from_shape_fn((img.height(), img.width(), 1), |(y, x, _)| {
        let v = 0.299 * img.get(y, x, 0) + 0.587 * img.get(y, x, 1) + 0.114 * img.get(y, x, 2);
        v.clamp(lo, hi)
    });
    PixelGrid::new(data, img.range())
}

/// Resize to `out_h`×`out_w`: exact area averaging when both axes shrink
/// (or stay), bilinear with center alignment otherwise. Range is
/// preserved by construction plus a final clamp against float drift.
pub fn resize(img: &PixelGrid, out_h: usize, out_w: usize) -> Result<PixelGrid> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Precondition("target dimensions must be positive".into()));
    }
    if out_h == img.height() && out_w == img.width() {
        return Ok(img.clone());
    }
    let (lo, hi) = img.range().bounds();
    let data = if out_h <= img.height() && out_w <= img.width() {
        area_resize(img, out_h, out_w)
    } else {
        bilinear_resize(img, out_h, out_w)
    };
    PixelGrid::new(data.mapv(|v| v.clamp(lo, hi)), img.range())
}

/// Box-filter downscale: each output pixel is the exact mean of the input
/// area it covers, with fractional edge coverage weighted accordingly.
fn area_resize(img: &PixelGrid, out_h: usize, out_w: usize) -> Array3<f32> {
    let sy = img.height() as f64 / out_h as f64;
    let sx = img.width() as f64 / out_w as f64;
    // Per-axis coverage spans, reused across the other axis.
    let spans_y = coverage_spans(img.height(), out_h, sy);
    let spans_x = coverage_spans(img.width(), out_w, sx);
    Array3::from_shape_fn((out_h, out_w, img.channels()), |(oy, ox, c)| {
        let mut acc = 0f64;
        let mut area = 0f64;
        for &(y, wy) in &spans_y[oy] {
            for &(x, wx) in &spans_x[ox] {
                acc += wy * wx * img.get(y, x, c) as f64;
                area += wy * wx;
            }
        }
        (acc / area) as f32
    })
}

/// For each output index, the list of (input index, coverage weight).
fn coverage_spans(n_in: usize, n_out: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    (0..n_out)
        .map(|o| {
            let start = o as f64 * scale;
            let end = ((o + 1) as f64 * scale).min(n_in as f64);
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(n_in);
            (first..last)
                .map(|i| {
                    let cover = (end.min((i + 1) as f64) - start.max(i as f64)).max(0.0);
                    (i, cover)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect()
        })
        .collect()
}

fn bilinear_resize(img: &PixelGrid, out_h: usize, out_w: usize) -> Array3<f32> {
    let sy = img.height() as f64 / out_h as f64;
    let sx = img.width() as f64 / out_w as f64;
    let max_y = img.height() - 1;
    let max_x = img.width() - 1;
    Array3::from_shape_fn((out_h, out_w, img.channels()), |(oy, ox, c)| {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y as f64);
        let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x as f64);
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(max_y);
        let x1 = (x0 + 1).min(max_x);
        let ty = fy - y0 as f64;
        let tx = fx - x0 as f64;
        let v00 = img.get(y0, x0, c) as f64;
        let v01 = img.get(y0, x1, c) as f64;
        let v10 = img.get(y1, x0, c) as f64;
        let v11 = img.get(y1, x1, c) as f64;
        let top = v00 + tx * (v01 - v00);
        let bot = v10 + tx * (v11 - v10);
        (top + ty * (bot - top)) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn checker(h: usize, w: usize) -> PixelGrid {
        PixelGrid::from_fn(h, w, RangeTag::Unit, |y, x| ((y + x) % 2) as f32).unwrap()
    }

    #[test]
    fn constant_image_normalizes_to_half_and_flags_degeneracy() {
        let img = PixelGrid::constant(8, 8, 0.3, RangeTag::Unit).unwrap();
        let out = percentile_normalize(&img, &MaskRegion::full(8, 8), 5.0, 95.0).unwrap();
        assert!(out.degenerate);
        assert!(out.image.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let img = checker(4, 4);
        let mask = MaskRegion::from_fn(4, 4, |_, _| false);
        assert!(percentile_normalize(&img, &mask, 5.0, 95.0).is_err());
    }

    #[test]
    fn uniform_ramp_matches_sort_oracle() {
        // 101 values 0, 0.01, ..., 1.00 laid out on a 1x101 strip.
        let img = PixelGrid::from_fn(1, 101, RangeTag::Unit, |_, x| x as f32 / 100.0).unwrap();
        let mask = MaskRegion::full(1, 101);

        // Oracle: sort the masked values, take nearest-rank percentiles
        // by hand, apply the clip formula per pixel.
        let mut sorted: Vec<f32> = (0..101).map(|i| i as f32 / 100.0).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p5 = sorted[(0.05f64 * 101.0).ceil() as usize - 1];
        let p95 = sorted[(0.95f64 * 101.0).ceil() as usize - 1];
        assert_eq!(p5, 0.05);
        assert_eq!(p95, 0.95);

        let out = percentile_normalize(&img, &mask, 5.0, 95.0).unwrap();
        assert!(!out.degenerate);
        for x in 0..101 {
            let expect = ((img.luma(0, x) - p5) / (p95 - p5)).clamp(0.0, 1.0);
            assert!((out.image.luma(0, x) - expect).abs() < 1e-6);
        }
        assert_eq!(out.image.luma(0, 5), 0.0); // value at p5
        assert!((out.image.luma(0, 50) - 0.5).abs() < 1e-6);
        assert_eq!(out.image.luma(0, 95), 1.0); // value at p95
        assert_eq!(out.image.luma(0, 2), 0.0); // below p5 clips to exactly 0
    }

    #[test]
    fn normalize_is_invariant_under_affine_brightness() {
        let mut rng = crate::rng::rng_from_seed(42);
        for _ in 0..5 {
            let img = PixelGrid::from_fn(12, 12, RangeTag::Unit, |_, _| rng.gen::<f32>()).unwrap();
            let mapped = img.map_values(RangeTag::Unit, |v| 0.5 * v + 0.2).unwrap();
            let mask = MaskRegion::full(12, 12);
            let a = percentile_normalize(&img, &mask, 5.0, 95.0).unwrap();
            let b = percentile_normalize(&mapped, &mask, 5.0, 95.0).unwrap();
            for (x, y) in a.image.data().iter().zip(b.image.data().iter()) {
                assert!((x - y).abs() < 1e-5, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn bright_square_mask_is_exactly_the_square() {
        let img = PixelGrid::from_fn(32, 32, RangeTag::Unit, |y, x| {
            if (8..=20).contains(&y) && (10..=22).contains(&x) {
                0.9
            } else {
                0.05
            }
        })
        .unwrap();
        let fg = foreground_mask(&img).unwrap();
        assert!(!fg.fallback);
        for y in 0..32 {
            for x in 0..32 {
                let inside = (8..=20).contains(&y) && (10..=22).contains(&x);
                assert_eq!(fg.mask.contains(y, x), inside, "at ({y},{x})");
            }
        }
    }

    #[test]
    fn two_squares_hull_is_convex_by_brute_force() {
        let img = PixelGrid::from_fn(32, 32, RangeTag::Unit, |y, x| {
            let a = (2..8).contains(&y) && (2..8).contains(&x);
            let b = (24..30).contains(&y) && (24..30).contains(&x);
            if a || b {
                0.9
            } else {
                0.05
            }
        })
        .unwrap();
        let fg = foreground_mask(&img).unwrap();
        assert!(!fg.fallback);
        // Spans both squares.
        assert!(fg.mask.contains(3, 3) && fg.mask.contains(27, 27));
        assert!(fg.mask.contains(15, 15));

        // Brute-force convexity: walk segments between mask pixels and
        // require the nearest lattice pixel of each sample to be masked.
        let pixels: Vec<(usize, usize)> = (0..32)
            .flat_map(|y| (0..32).map(move |x| (y, x)))
            .filter(|&(y, x)| fg.mask.contains(y, x))
            .collect();
        let mut rng = crate::rng::rng_from_seed(7);
        for _ in 0..2000 {
            let a = pixels[rng.gen_range(0..pixels.len())];
            let b = pixels[rng.gen_range(0..pixels.len())];
            for step in 0..=64 {
                let t = step as f64 / 64.0;
                let fy = a.0 as f64 + t * (b.0 as f64 - a.0 as f64);
                let fx = a.1 as f64 + t * (b.1 as f64 - a.1 as f64);
                let py = fy.round() as usize;
                let px = fx.round() as usize;
                assert!(fg.mask.contains(py, px), "segment {a:?}-{b:?} exits mask at ({py},{px})");
            }
        }
    }

    #[test]
    fn all_dark_image_falls_back_to_full_mask() {
        let img = PixelGrid::constant(16, 16, 0.0, RangeTag::Unit).unwrap();
        let fg = foreground_mask(&img).unwrap();
        assert!(fg.fallback);
        assert_eq!(fg.mask.count(), 256);
    }

    #[test]
    fn tiling_counts_follow_the_floor_law() {
        let img = checker(512, 512);
        assert_eq!(tile_image(&img, 256, 256, "n").unwrap().len(), 4);
        let img = checker(600, 600);
        let tiles = tile_image(&img, 256, 256, "t").unwrap();
        assert_eq!(tiles.len(), 4);
        assert!(tiles.iter().all(|(p, l)| p.height() == 256 && p.width() == 256 && l == "t"));
        let img = checker(200, 300);
        assert_eq!(tile_image(&img, 256, 256, "n").unwrap().len(), 0);
        assert_eq!(tile_count(600, 600, 256, 256), 4);
        assert_eq!(tile_count(200, 300, 256, 256), 0);
    }

    #[test]
    fn tiles_are_row_major_copies() {
        let img = PixelGrid::from_fn(4, 4, RangeTag::Unit, |y, x| (y * 4 + x) as f32 / 15.0).unwrap();
        let tiles = tile_image(&img, 2, 2, "q").unwrap();
        assert_eq!(tiles.len(), 4);
        // Tile 1 is the top-right quadrant.
        assert_eq!(tiles[1].0.luma(0, 0), img.luma(0, 2));
        assert_eq!(tiles[2].0.luma(0, 0), img.luma(2, 0));
    }

    #[test]
    fn grayscale_weights() {
        let mk = |r: f32, g: f32, b: f32| {
            PixelGrid::new(
                Array3::from_shape_fn((1, 1, 3), |(_, _, c)| [r, g, b][c]),
                RangeTag::Unit,
            )
            .unwrap()
        };
        assert!((to_grayscale(&mk(1.0, 1.0, 1.0)).unwrap().luma(0, 0) - 1.0).abs() < 1e-6);
        assert!((to_grayscale(&mk(1.0, 0.0, 0.0)).unwrap().luma(0, 0) - 0.299).abs() < 1e-6);
        for v in [0.0, 0.25, 0.7] {
            assert!((to_grayscale(&mk(v, v, v)).unwrap().luma(0, 0) - v).abs() < 1e-6);
        }
        // 1-channel input passes through.
        let g = checker(3, 3);
        assert_eq!(to_grayscale(&g).unwrap(), g);
    }

    #[test]
    fn resize_identity_and_area_mean() {
        let img = checker(6, 6);
        assert_eq!(resize(&img, 6, 6).unwrap(), img);

        let img = PixelGrid::from_fn(2, 2, RangeTag::Unit, |y, _| y as f32).unwrap();
        let down = resize(&img, 1, 1).unwrap();
        assert!((down.luma(0, 0) - 0.5).abs() < 1e-6);

        let c = PixelGrid::constant(5, 7, 0.42, RangeTag::Unit).unwrap();
        for (h, w) in [(3, 3), (10, 14), (1, 1), (9, 2)] {
            let r = resize(&c, h, w).unwrap();
            assert!(r.data().iter().all(|v| (v - 0.42).abs() < 1e-6), "{h}x{w}");
            assert_eq!((r.height(), r.width()), (h, w));
        }
    }

    #[test]
    fn resize_stays_in_range_on_random_images() {
        let mut rng = crate::rng::rng_from_seed(3);
        for _ in 0..10 {
            let img = PixelGrid::from_fn(17, 13, RangeTag::Signed, |_, _| rng.gen_range(-1.0..=1.0)).unwrap();
            for (h, w) in [(5, 5), (40, 9), (13, 29)] {
                let r = resize(&img, h, w).unwrap();
                assert!(r.data().iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }
}
