//! Classical CT-slice processing: recentering, median denoising, bark-contour
//! extraction, knot blob detection, ellipse fitting, cross-slice tracking,
//! and track-size filtering.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::image2d::Image;
use crate::raster::{BBox, Ellipse};
use crate::{Error, Result};

/// One knot observation in one CT slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseDetection {
    pub z_index: usize,
    pub bbox: BBox,
    pub ellipse: Ellipse,
    pub score: f64,
}

impl EllipseDetection {
    pub fn center(&self) -> (f64, f64) {
        (self.ellipse.cx, self.ellipse.cy)
    }
}

/// One entry of a knot track; interpolated entries bridge detection gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub z_index: usize,
    pub detection: EllipseDetection,
    pub interpolated: bool,
}

/// A knot's observations associated across slices, z strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KnotTrack {
    pub entries: Vec<TrackEntry>,
}

impl KnotTrack {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest centroid distance from the given image center, pixels.
    pub fn max_radius_from(&self, cx: f64, cy: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let (x, y) = e.detection.center();
                ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Translate the image so the density centroid of the thresholded log region
/// coincides with the image center; borders are zero-padded.
pub fn recenter_to_pith(image: &Image, threshold: f32) -> Result<Image> {
    let (mut sum, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..image.height {
        for x in 0..image.width {
            let v = image.get(x, y);
            if v > threshold {
                let w = v as f64;
                sum += w;
                sx += w * (x as f64 + 0.5);
                sy += w * (y as f64 + 0.5);
            }
        }
    }
    if sum == 0.0 {
        return Err(Error::Extraction("no foreground above threshold".into()));
    }
    let dx = (image.width as f64 / 2.0 - sx / sum).round() as isize;
    let dy = (image.height as f64 / 2.0 - sy / sum).round() as isize;
    let mut out = Image::zeros(image.width, image.height);
    for y in 0..image.height {
        for x in 0..image.width {
            let ox = x as isize - dx;
            let oy = y as isize - dy;
            if ox >= 0 && oy >= 0 && (ox as usize) < image.width && (oy as usize) < image.height {
                out.set(x, y, image.get(ox as usize, oy as usize));
            }
        }
    }
    Ok(out)
}

/// 3x3 median filter with replicate padding at the borders.
pub fn median_filter_3x3(image: &Image) -> Result<Image> {
    if image.width < 3 || image.height < 3 {
        return Err(Error::dimension("image smaller than 3x3"));
    }
    let mut out = Image::zeros(image.width, image.height);
    let mut window = [0.0f32; 9];
    for y in 0..image.height {
        for x in 0..image.width {
            let mut n = 0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    window[n] = image.get_clamped(x as isize + dx, y as isize + dy);
                    n += 1;
                }
            }
            window.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.set(x, y, window[4]);
        }
    }
    Ok(out)
}

/// Radius (pixels) of the outermost above-threshold sample along each of
/// `rays` uniformly spaced angles from the image center. Rays with no
/// above-threshold sample are interpolated from their circular neighbors.
pub fn extract_bark_contour(image: &Image, rays: usize, threshold: f32) -> Result<Vec<f64>> {
    if rays < 8 {
        return Err(Error::domain("need at least 8 rays"));
    }
    let cx = image.width as f64 / 2.0;
    let cy = image.height as f64 / 2.0;
    let r_max = cx.min(cy) * 2.0f64.sqrt();
    let mut contour = vec![f64::NAN; rays];
    for (k, slot) in contour.iter_mut().enumerate() {
        let theta = TAU * k as f64 / rays as f64;
        let (s, c) = theta.sin_cos();
        let mut t = 0.5;
        let mut last = f64::NAN;
        while t < r_max {
            let x = (cx + t * c - 0.5).round() as isize;
            let y = (cy + t * s - 0.5).round() as isize;
            if x >= 0
                && y >= 0
                && (x as usize) < image.width
                && (y as usize) < image.height
                && image.get(x as usize, y as usize) > threshold
            {
                last = t;
            }
            t += 0.5;
        }
        *slot = last;
    }
    let present = contour.iter().filter(|v| !v.is_nan()).count();
    if present == 0 {
        return Err(Error::Extraction("no ray crossed the threshold".into()));
    }
    if present < rays {
        interpolate_missing(&mut contour);
    }
    Ok(contour)
}

/// Fill NaN entries by linear interpolation between circular neighbors.
fn interpolate_missing(contour: &mut [f64]) {
    let n = contour.len();
    let filled: Vec<(usize, f64)> = contour
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .map(|(i, &v)| (i, v))
        .collect();
    for (i, slot) in contour.iter_mut().enumerate() {
        if !slot.is_nan() {
            continue;
        }
        // Nearest present neighbors on either side, circularly.
        let prev = filled
            .iter()
            .map(|&(j, v)| (((i + n) - j) % n, v))
            .min_by_key(|&(d, _)| d)
            .unwrap();
        let next = filled
            .iter()
            .map(|&(j, v)| ((j + n - i) % n, v))
            .min_by_key(|&(d, _)| d)
            .unwrap();
        let span = (prev.0 + next.0) as f64;
        *slot = if span == 0.0 {
            prev.1
        } else {
            (prev.1 * next.0 as f64 + next.1 * prev.0 as f64) / span
        };
    }
}

/// Axis-aligned ellipse inscribed in a bounding box.
pub fn fit_ellipse_to_bbox(bbox: BBox) -> Result<Ellipse> {
    if bbox.x1 <= bbox.x0 || bbox.y1 <= bbox.y0 {
        return Err(Error::domain("zero-area box"));
    }
    Ok(Ellipse {
        cx: (bbox.x0 + bbox.x1) / 2.0,
        cy: (bbox.y0 + bbox.y1) / 2.0,
        a: (bbox.x1 - bbox.x0) / 2.0,
        b: (bbox.y1 - bbox.y0) / 2.0,
        angle: 0.0,
    })
}

/// Connected components of above-threshold pixels inside the bark contour,
/// reported as bounding boxes with inscribed ellipses. The score is the mean
/// component density. `z_index` tags the detections with their slice.
pub fn detect_knot_blobs(
    image: &Image,
    z_index: usize,
    density_threshold: f32,
    min_area: usize,
) -> Vec<EllipseDetection> {
    let w = image.width;
    let h = image.height;
    // The log region is the largest connected foreground component; anything
    // beyond its bark contour is excluded from blob detection.
    let log_region = largest_foreground_component(image, 0.01);
    let mut mask = vec![false; w * h];
    for (i, m) in mask.iter_mut().enumerate() {
        *m = log_region[i] && image.data[i] > density_threshold;
    }

    // 8-connected flood fill over the mask, scanned in raster order so the
    // output is deterministic.
    let mut visited = vec![false; w * h];
    let mut detections = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || visited[start] {
            continue;
        }
        stack.push(start);
        visited[start] = true;
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (px, py) = (p % w, p / w);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nx = px as isize + dx;
                    let ny = py as isize + dy;
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if mask[q] && !visited[q] {
                        visited[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if pixels.len() < min_area {
            continue;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut sum = 0.0f64;
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for &p in &pixels {
            let (px, py) = (p % w, p / w);
            x0 = x0.min(px);
            y0 = y0.min(py);
            x1 = x1.max(px);
            y1 = y1.max(py);
            let d = image.data[p] as f64;
            sum += d;
            sx += d * (px as f64 + 0.5);
            sy += d * (py as f64 + 0.5);
        }
        let bbox = BBox {
            x0: x0 as f64,
            y0: y0 as f64,
            x1: (x1 + 1) as f64,
            y1: (y1 + 1) as f64,
        };
        // Axes come from the box, but the reported center is the
        // density-weighted blob centroid: for cuts truncated by the bark the
        // box midpoint is biased toward the clipped side.
        let mut ellipse = fit_ellipse_to_bbox(bbox).expect("non-degenerate by construction");
        ellipse.cx = sx / sum;
        ellipse.cy = sy / sum;
        detections.push(EllipseDetection {
            z_index,
            bbox,
            ellipse,
            score: (sum / pixels.len() as f64).min(1.0),
        });
    }
    detections
}

/// Boolean mask of the largest 8-connected component above `threshold`.
fn largest_foreground_component(image: &Image, threshold: f32) -> Vec<bool> {
    let w = image.width;
    let h = image.height;
    let mut label = vec![0u32; w * h];
    let mut next = 1u32;
    let mut best = (0usize, 0u32);
    let mut stack = Vec::new();
    for start in 0..w * h {
        if image.data[start] <= threshold || label[start] != 0 {
            continue;
        }
        let id = next;
        next += 1;
        let mut count = 0usize;
        stack.push(start);
        label[start] = id;
        while let Some(p) = stack.pop() {
            count += 1;
            let (px, py) = (p % w, p / w);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nx = px as isize + dx;
                    let ny = py as isize + dy;
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if image.data[q] > threshold && label[q] == 0 {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        if count > best.0 {
            best = (count, id);
        }
    }
    label.iter().map(|&l| l != 0 && l == best.1).collect()
}

struct ActiveTrack {
    track: KnotTrack,
    last_z: usize,
}

/// Greedy nearest-centroid association of per-slice detections into tracks.
///
/// A detection joins the open track whose last centroid is nearest and within
/// `max_jump_px`; tracks survive up to `max_gap` missing slices, bridged with
/// linearly interpolated entries flagged as gaps. Unmatched detections open
/// new tracks.
pub fn track_knots(
    per_slice: &[Vec<EllipseDetection>],
    max_gap: usize,
    max_jump_px: f64,
) -> Vec<KnotTrack> {
    let mut done: Vec<KnotTrack> = Vec::new();
    let mut active: Vec<ActiveTrack> = Vec::new();

    for (z, detections) in per_slice.iter().enumerate() {
        // Retire tracks that have been silent for longer than max_gap.
        let mut still_active = Vec::new();
        for t in active.drain(..) {
            if z - t.last_z > max_gap + 1 {
                done.push(t.track);
            } else {
                still_active.push(t);
            }
        }
        active = still_active;

        // All candidate pairs, nearest first; ties broken by indices.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in active.iter().enumerate() {
            let last = t.track.entries.last().expect("tracks are never empty");
            let (lx, ly) = last.detection.center();
            for (di, d) in detections.iter().enumerate() {
                let (dx, dy) = d.center();
                let dist = ((dx - lx).powi(2) + (dy - ly).powi(2)).sqrt();
                if dist <= max_jump_px {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut track_taken = vec![false; active.len()];
        let mut det_taken = vec![false; detections.len()];
        for (_, ti, di) in pairs {
            if track_taken[ti] || det_taken[di] {
                continue;
            }
            track_taken[ti] = true;
            det_taken[di] = true;
            let t = &mut active[ti];
            let last = *t.track.entries.last().expect("non-empty");
            // Bridge missing slices with interpolated entries.
            for gap_z in t.last_z + 1..z {
                let f = (gap_z - t.last_z) as f64 / (z - t.last_z) as f64;
                let interp = lerp_detection(&last.detection, &detections[di], f, gap_z);
                t.track.entries.push(TrackEntry {
                    z_index: gap_z,
                    detection: interp,
                    interpolated: true,
                });
            }
            let mut det = detections[di];
            det.z_index = z;
            t.track.entries.push(TrackEntry {
                z_index: z,
                detection: det,
                interpolated: false,
            });
            t.last_z = z;
        }
        for (di, d) in detections.iter().enumerate() {
            if det_taken[di] {
                continue;
            }
            let mut det = *d;
            det.z_index = z;
            active.push(ActiveTrack {
                track: KnotTrack {
                    entries: vec![TrackEntry {
                        z_index: z,
                        detection: det,
                        interpolated: false,
                    }],
                },
                last_z: z,
            });
        }
    }
    done.extend(active.into_iter().map(|t| t.track));
    done
}

fn lerp_detection(
    a: &EllipseDetection,
    b: &EllipseDetection,
    f: f64,
    z: usize,
) -> EllipseDetection {
    let l = |x: f64, y: f64| x + (y - x) * f;
    let ellipse = Ellipse {
        cx: l(a.ellipse.cx, b.ellipse.cx),
        cy: l(a.ellipse.cy, b.ellipse.cy),
        a: l(a.ellipse.a, b.ellipse.a),
        b: l(a.ellipse.b, b.ellipse.b),
        angle: a.ellipse.angle,
    };
    EllipseDetection {
        z_index: z,
        bbox: ellipse.bounding_box(),
        ellipse,
        score: l(a.score, b.score),
    }
}

/// Replace each entry's semi-axes with the sliding median over `window`
/// entries along z (window truncated at the track ends); centers unchanged.
pub fn smooth_track_sizes(track: &KnotTrack, window: usize) -> Result<KnotTrack> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::domain("window must be odd and >= 3"));
    }
    let n = track.entries.len();
    let half = window / 2;
    let median = |values: &mut Vec<f64>| -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    };
    let mut out = track.clone();
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let mut a_vals: Vec<f64> = track.entries[lo..hi]
            .iter()
            .map(|e| e.detection.ellipse.a)
            .collect();
        let mut b_vals: Vec<f64> = track.entries[lo..hi]
            .iter()
            .map(|e| e.detection.ellipse.b)
            .collect();
        let e = &mut out.entries[i].detection;
        e.ellipse.a = median(&mut a_vals);
        e.ellipse.b = median(&mut b_vals);
        e.bbox = e.ellipse.bounding_box();
    }
    Ok(out)
}

/// Keep only tracks whose outermost centroid reaches at least `min_reach`
/// of the mean bark radius; with `min_reach` 0 every track is kept.
pub fn filter_bark_reaching(
    tracks: Vec<KnotTrack>,
    mean_bark_radius_px: f64,
    center: (f64, f64),
    min_reach: f64,
) -> Vec<KnotTrack> {
    tracks
        .into_iter()
        .filter(|t| t.max_radius_from(center.0, center.1) >= min_reach * mean_bark_radius_px)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk_image(size: usize, cx: f64, cy: f64, radius: f64, value: f32) -> Image {
        Image::from_fn(size, size, |x, y| {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if (dx * dx + dy * dy).sqrt() <= radius {
                value
            } else {
                0.0
            }
        })
    }

    fn centroid(image: &Image, threshold: f32) -> (f64, f64) {
        let (mut sum, mut sx, mut sy) = (0.0f64, 0.0, 0.0);
        for y in 0..image.height {
            for x in 0..image.width {
                let v = image.get(x, y) as f64;
                if v > threshold as f64 {
                    sum += v;
                    sx += v * (x as f64 + 0.5);
                    sy += v * (y as f64 + 0.5);
                }
            }
        }
        (sx / sum, sy / sum)
    }

    #[test]
    fn recenter_centered_disk_is_identity() {
        let img = disk_image(64, 32.0, 32.0, 20.0, 0.5);
        let out = recenter_to_pith(&img, 0.05).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn recenter_shifted_disk() {
        let img = disk_image(128, 64.0 + 5.0, 64.0 - 3.0, 30.0, 0.5);
        let out = recenter_to_pith(&img, 0.05).unwrap();
        let (cx, cy) = centroid(&out, 0.05);
        assert!((cx - 64.0).abs() < 1.0, "cx {cx}");
        assert!((cy - 64.0).abs() < 1.0, "cy {cy}");
    }

    #[test]
    fn recenter_empty_image_errors() {
        let img = Image::zeros(32, 32);
        assert!(matches!(
            recenter_to_pith(&img, 0.05),
            Err(Error::Extraction(_))
        ));
    }

    #[test]
    fn median_constant_unchanged_and_impulse_removed() {
        let mut img = Image::from_fn(16, 16, |_, _| 0.3);
        assert_eq!(median_filter_3x3(&img).unwrap(), img);
        img.set(8, 8, 1.0);
        let out = median_filter_3x3(&img).unwrap();
        assert_eq!(out.get(8, 8), 0.3);
    }

    #[test]
    fn median_rejects_tiny_image() {
        assert!(median_filter_3x3(&Image::zeros(2, 5)).is_err());
    }

    #[test]
    fn median_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = Image::from_fn(16, 16, |_, _| rng.gen::<f32>());
        let out = median_filter_3x3(&img).unwrap();
        for y in 0..16isize {
            for x in 0..16isize {
                let mut vals = Vec::new();
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        vals.push(img.get_clamped(x + dx, y + dy));
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(out.get(x as usize, y as usize), vals[4]);
            }
        }
    }

    #[test]
    fn contour_of_perfect_disk() {
        let img = disk_image(256, 128.0, 128.0, 100.0, 0.5);
        let contour = extract_bark_contour(&img, 360, 0.05).unwrap();
        assert_eq!(contour.len(), 360);
        for (k, &r) in contour.iter().enumerate() {
            assert!((r - 100.0).abs() <= 1.0, "ray {k}: {r}");
        }
    }

    #[test]
    fn contour_all_missing_errors() {
        let img = Image::zeros(64, 64);
        assert!(extract_bark_contour(&img, 16, 0.05).is_err());
    }

    #[test]
    fn contour_interpolates_missing_rays() {
        // An annulus with a wedge cut out: the wedge rays come back
        // interpolated from their neighbors.
        let img = Image::from_fn(256, 256, |x, y| {
            let dx = x as f64 + 0.5 - 128.0;
            let dy = y as f64 + 0.5 - 128.0;
            let theta = dy.atan2(dx);
            let r = (dx * dx + dy * dy).sqrt();
            if (50.0..=100.0).contains(&r) && theta.abs() > 0.1 {
                0.5
            } else {
                0.0
            }
        });
        let contour = extract_bark_contour(&img, 360, 0.05).unwrap();
        assert_eq!(contour.len(), 360);
        for (k, &r) in contour.iter().enumerate() {
            assert!((r - 100.0).abs() <= 2.0, "ray {k}: {r}");
        }
    }

    #[test]
    fn contour_invariant_under_quarter_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bumps: Vec<f64> = (0..8).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let radius_at = |theta: f64| {
            100.0
                + bumps
                    .iter()
                    .enumerate()
                    .map(|(i, b)| b * ((i + 1) as f64 * theta).cos())
                    .sum::<f64>()
        };
        let img = Image::from_fn(256, 256, |x, y| {
            let dx = x as f64 + 0.5 - 128.0;
            let dy = y as f64 + 0.5 - 128.0;
            let theta = dy.atan2(dx);
            if (dx * dx + dy * dy).sqrt() <= radius_at(theta) {
                0.5
            } else {
                0.0
            }
        });
        // Rotate by 90 degrees: (x, y) -> (-y, x).
        let rot = Image::from_fn(256, 256, |x, y| img.get(y, 255 - x));
        let c0 = extract_bark_contour(&img, 360, 0.05).unwrap();
        let c1 = extract_bark_contour(&rot, 360, 0.05).unwrap();
        for k in 0..360 {
            let rotated = c1[(k + 90) % 360];
            assert!(
                (c0[k] - rotated).abs() <= 1.5,
                "ray {k}: {} vs {}",
                c0[k],
                rotated
            );
        }
    }

    #[test]
    fn fit_ellipse_examples() {
        let e = fit_ellipse_to_bbox(BBox {
            x0: 10.0,
            y0: 20.0,
            x1: 30.0,
            y1: 60.0,
        })
        .unwrap();
        assert_eq!((e.cx, e.cy), (20.0, 40.0));
        assert_eq!((e.a, e.b), (10.0, 20.0));
        let square = fit_ellipse_to_bbox(BBox {
            x0: 0.0,
            y0: 0.0,
            x1: 10.0,
            y1: 10.0,
        })
        .unwrap();
        assert_eq!(square.a, square.b);
        assert!(fit_ellipse_to_bbox(BBox {
            x0: 0.0,
            y0: 0.0,
            x1: 0.0,
            y1: 5.0,
        })
        .is_err());
    }

    fn blob_image(size: usize, blobs: &[(f64, f64, f64)]) -> Image {
        // Background disk with high-density blobs inside.
        let half = size as f64 / 2.0;
        Image::from_fn(size, size, |x, y| {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let dr = ((px - half).powi(2) + (py - half).powi(2)).sqrt();
            if dr > half * 0.9 {
                return 0.0;
            }
            for &(bx, by, br) in blobs {
                if ((px - bx).powi(2) + (py - by).powi(2)).sqrt() <= br {
                    return 0.9;
                }
            }
            0.4
        })
    }

    #[test]
    fn detect_empty_interior() {
        let img = blob_image(128, &[]);
        assert!(detect_knot_blobs(&img, 0, 0.65, 6).is_empty());
    }

    #[test]
    fn detect_single_blob() {
        let img = blob_image(128, &[(80.0, 60.0, 6.0)]);
        let dets = detect_knot_blobs(&img, 3, 0.65, 6);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].z_index, 3);
        let (cx, cy) = dets[0].center();
        assert!((cx - 80.0).abs() < 1.5 && (cy - 60.0).abs() < 1.5);
        assert!((dets[0].score - 0.9).abs() < 1e-6);
    }

    #[test]
    fn detect_three_blobs() {
        let img = blob_image(
            256,
            &[(180.0, 128.0, 7.0), (90.0, 90.0, 5.0), (128.0, 190.0, 6.0)],
        );
        let dets = detect_knot_blobs(&img, 0, 0.65, 6);
        assert_eq!(dets.len(), 3);
        for (bx, by) in [(180.0, 128.0), (90.0, 90.0), (128.0, 190.0)] {
            let best = dets
                .iter()
                .map(|d| {
                    let (cx, cy) = d.center();
                    ((cx - bx).powi(2) + (cy - by).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 2.0, "blob ({bx}, {by}) centroid error {best}");
        }
    }

    #[test]
    fn detect_ignores_blob_outside_bark() {
        // Same-density blob placed beyond the bark contour must not count.
        let size = 128usize;
        let img = Image::from_fn(size, size, |x, y| {
            let px = x as f64 + 0.5;
            let py = y as f64 + 0.5;
            let dr = ((px - 64.0).powi(2) + (py - 64.0).powi(2)).sqrt();
            if dr < 40.0 {
                0.4
            } else if ((px - 120.0).powi(2) + (py - 64.0).powi(2)).sqrt() < 4.0 {
                0.9
            } else {
                0.0
            }
        });
        assert!(detect_knot_blobs(&img, 0, 0.65, 6).is_empty());
    }

    fn det(x: f64, y: f64, r: f64) -> EllipseDetection {
        let ellipse = Ellipse {
            cx: x,
            cy: y,
            a: r,
            b: r,
            angle: 0.0,
        };
        EllipseDetection {
            z_index: 0,
            bbox: ellipse.bounding_box(),
            ellipse,
            score: 0.8,
        }
    }

    #[test]
    fn track_single_detection_spans_all_slices() {
        let per_slice: Vec<Vec<EllipseDetection>> =
            (0..10).map(|_| vec![det(50.0, 50.0, 4.0)]).collect();
        let tracks = track_knots(&per_slice, 3, 10.0);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 10);
        assert!(tracks[0].entries.iter().all(|e| !e.interpolated));
    }

    #[test]
    fn track_two_far_detections_stay_separate() {
        let per_slice: Vec<Vec<EllipseDetection>> = (0..5)
            .map(|_| vec![det(20.0, 20.0, 4.0), det(220.0, 20.0, 4.0)])
            .collect();
        let tracks = track_knots(&per_slice, 3, 20.0);
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.len() == 5));
    }

    #[test]
    fn track_bridges_single_gap() {
        let mut per_slice: Vec<Vec<EllipseDetection>> =
            (0..7).map(|_| vec![det(50.0, 50.0, 4.0)]).collect();
        per_slice[3].clear();
        let tracks = track_knots(&per_slice, 2, 10.0);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].len(), 7);
        let flags: Vec<bool> = tracks[0].entries.iter().map(|e| e.interpolated).collect();
        assert_eq!(flags, vec![false, false, false, true, false, false, false]);
        let bridged = &tracks[0].entries[3];
        assert_eq!(bridged.z_index, 3);
        assert!((bridged.detection.ellipse.cx - 50.0).abs() < 1e-9);
    }

    #[test]
    fn track_gap_beyond_max_splits() {
        let mut per_slice: Vec<Vec<EllipseDetection>> =
            (0..9).map(|_| vec![det(50.0, 50.0, 4.0)]).collect();
        for slice in per_slice.iter_mut().take(6).skip(3) {
            slice.clear();
        }
        let tracks = track_knots(&per_slice, 2, 10.0);
        assert_eq!(tracks.len(), 2);
    }

    #[test]
    fn track_never_double_assigns() {
        // Two nearby tracks and two detections per slice: the multiset of
        // non-interpolated entries must equal the multiset of detections.
        let per_slice: Vec<Vec<EllipseDetection>> = (0..6)
            .map(|z| {
                vec![
                    det(50.0 + z as f64, 50.0, 4.0),
                    det(58.0 + z as f64, 50.0, 4.0),
                ]
            })
            .collect();
        let tracks = track_knots(&per_slice, 2, 10.0);
        let mut matched: Vec<(usize, i64)> = tracks
            .iter()
            .flat_map(|t| t.entries.iter())
            .filter(|e| !e.interpolated)
            .map(|e| (e.z_index, (e.detection.ellipse.cx * 1000.0) as i64))
            .collect();
        matched.sort_unstable();
        let mut expected: Vec<(usize, i64)> = per_slice
            .iter()
            .enumerate()
            .flat_map(|(z, dets)| {
                dets.iter()
                    .map(move |d| (z, (d.ellipse.cx * 1000.0) as i64))
            })
            .collect();
        expected.sort_unstable();
        assert_eq!(matched, expected);
    }

    #[test]
    fn smooth_removes_size_outlier() {
        let sizes = [2.0, 2.0, 20.0, 2.0, 2.0];
        let track = KnotTrack {
            entries: sizes
                .iter()
                .enumerate()
                .map(|(z, &r)| TrackEntry {
                    z_index: z,
                    detection: det(50.0, 50.0, r),
                    interpolated: false,
                })
                .collect(),
        };
        let smoothed = smooth_track_sizes(&track, 5).unwrap();
        for e in &smoothed.entries {
            assert_eq!(e.detection.ellipse.a, 2.0);
            assert_eq!(e.detection.ellipse.b, 2.0);
            assert_eq!(e.detection.ellipse.cx, 50.0);
        }
        assert!(smooth_track_sizes(&track, 4).is_err());
    }

    #[test]
    fn smooth_constant_unchanged() {
        let track = KnotTrack {
            entries: (0..6)
                .map(|z| TrackEntry {
                    z_index: z,
                    detection: det(10.0, 10.0, 3.0),
                    interpolated: false,
                })
                .collect(),
        };
        assert_eq!(smooth_track_sizes(&track, 3).unwrap(), track);
    }

    proptest! {
        #[test]
        fn smooth_matches_brute_force_oracle(
            sizes in proptest::collection::vec(0.5..30.0f64, 3..20),
            window in prop_oneof![Just(3usize), Just(5), Just(7)]
        ) {
            let track = KnotTrack {
                entries: sizes
                    .iter()
                    .enumerate()
                    .map(|(z, &r)| TrackEntry {
                        z_index: z,
                        detection: det(40.0, 40.0, r),
                        interpolated: false,
                    })
                    .collect(),
            };
            let smoothed = smooth_track_sizes(&track, window).unwrap();
            let half = window / 2;
            for i in 0..sizes.len() {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(sizes.len());
                let mut vals: Vec<f64> = sizes[lo..hi].to_vec();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                prop_assert_eq!(smoothed.entries[i].detection.ellipse.a, vals[vals.len() / 2]);
            }
        }
    }
}
