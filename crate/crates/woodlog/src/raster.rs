//! Sampling the analytic log fields into the data representations used
//! downstream: surface patches, half-plane density targets, cross-section
//! images, voxel volumes, slice sequences, and ground-truth annotations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::config::RasterConfig;
use crate::image2d::Image;
use crate::synthesis::{wrap_angle, LogField, LogSpec};
use crate::{Error, Result};

/// Bark radii over an angular window by height window; the 2D network input.
/// Rows run from the top of the z range down, columns across the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePatch {
    pub grid: Vec<f64>,
    pub size: usize,
    pub theta_center: f64,
    pub theta_width: f64,
    pub z_range: [f64; 2],
}

/// Densities over the radial-longitudinal plane at fixed azimuth; the 2D
/// network target. Rows run from the top down, columns from the pith outward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneTarget {
    pub grid: Vec<f64>,
    pub size: usize,
    pub theta0: f64,
    pub r_max: f64,
    pub z_range: [f64; 2],
}

/// Cartesian voxel grid over x, y in [-extent, extent] and z in [0, height],
/// stored x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVolume {
    pub dims: (usize, usize, usize),
    /// Planar half-extent in world units.
    pub extent: f64,
    /// Physical z extent in world units.
    pub height: f64,
    pub data: Vec<f32>,
}

impl DensityVolume {
    pub fn zeros(dims: (usize, usize, usize), extent: f64, height: f64) -> Self {
        DensityVolume {
            dims,
            extent,
            height,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    /// World coordinates of the cell center.
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> (f64, f64, f64) {
        (
            -self.extent + (x as f64 + 0.5) * 2.0 * self.extent / self.dims.0 as f64,
            -self.extent + (y as f64 + 0.5) * 2.0 * self.extent / self.dims.1 as f64,
            (z as f64 + 0.5) * self.height / self.dims.2 as f64,
        )
    }
}

/// An axis-aligned ellipse annotation in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    /// Semi-axis along `angle`.
    pub a: f64,
    /// Semi-axis perpendicular to `angle`.
    pub b: f64,
    /// Orientation of the `a` axis, radians.
    pub angle: f64,
}

impl Ellipse {
    /// Tight axis-aligned bounding box.
    pub fn bounding_box(&self) -> BBox {
        let (s, c) = self.angle.sin_cos();
        let hx = (self.a * self.a * c * c + self.b * self.b * s * s).sqrt();
        let hy = (self.a * self.a * s * s + self.b * self.b * c * c).sqrt();
        BBox {
            x0: self.cx - hx,
            y0: self.cy - hy,
            x1: self.cx + hx,
            y1: self.cy + hy,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        BBox {
            x0: self.x0.clamp(0.0, width),
            y0: self.y0.clamp(0.0, height),
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
        }
    }
}

/// Ground-truth ellipses for one cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceAnnotation {
    pub z_index: usize,
    pub ellipses: Vec<Ellipse>,
    pub boxes: Vec<BBox>,
}

/// A rendered cross-section with its physical scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub image: Image,
    /// Pixels per world unit.
    pub px_per_unit: f64,
    pub z: f64,
}

/// Planar half-extent used by all renders of this spec.
pub fn render_extent(spec: &LogSpec, cfg: &RasterConfig) -> f64 {
    spec.max_radius() * cfg.extent_margin
}

/// Sample the bark surface over an angular window into a square grid.
pub fn render_surface_patch(spec: &LogSpec, theta0: f64, cfg: &RasterConfig) -> SurfacePatch {
    let field = LogField::new(spec);
    let n = cfg.grid;
    let width = cfg.patch_width_deg.to_radians();
    let z_range = [0.0, spec.taper.height];
    let dz = (z_range[1] - z_range[0]) / n as f64;
    let mut grid = Vec::with_capacity(n * n);
    for i in 0..n {
        let z = z_range[1] - i as f64 * dz;
        for j in 0..n {
            let theta = theta0 - width / 2.0 + j as f64 * width / n as f64;
            grid.push(field.surface_radius(theta, z).expect("z within range"));
        }
    }
    SurfacePatch {
        grid,
        size: n,
        theta_center: theta0,
        theta_width: width,
        z_range,
    }
}

/// Sample the density field over the radial-longitudinal plane at theta0.
pub fn render_half_plane(spec: &LogSpec, theta0: f64, cfg: &RasterConfig) -> HalfPlaneTarget {
    let field = LogField::new(spec);
    let n = cfg.grid;
    let r_max = render_extent(spec, cfg);
    let z_range = [0.0, spec.taper.height];
    let dz = (z_range[1] - z_range[0]) / n as f64;
    let mut grid = Vec::with_capacity(n * n);
    for i in 0..n {
        let z = z_range[1] - i as f64 * dz;
        for j in 0..n {
            let r = j as f64 * r_max / n as f64;
            grid.push(field.density_at(r, theta0, z));
        }
    }
    HalfPlaneTarget {
        grid,
        size: n,
        theta0,
        r_max,
        z_range,
    }
}

/// Render one square density cross-section with the pith at the image center.
pub fn render_cross_section(
    spec: &LogSpec,
    z: f64,
    size: usize,
    cfg: &RasterConfig,
) -> Result<CrossSection> {
    if !(0.0..=spec.taper.height).contains(&z) {
        return Err(Error::domain(format!(
            "z = {z} outside [0, {}]",
            spec.taper.height
        )));
    }
    let field = LogField::new(spec);
    let extent = render_extent(spec, cfg);
    let px_per_unit = size as f64 / (2.0 * extent);
    let half = size as f64 / 2.0;
    let mut image = Image::zeros(size, size);
    image
        .data
        .par_chunks_mut(size)
        .enumerate()
        .for_each(|(py, row)| {
            let y = (py as f64 + 0.5 - half) / px_per_unit;
            for (px, out) in row.iter_mut().enumerate() {
                let x = (px as f64 + 0.5 - half) / px_per_unit;
                let r = (x * x + y * y).sqrt();
                let theta = y.atan2(x);
                *out = field.density_at(r, theta, z) as f32;
            }
        });
    Ok(CrossSection {
        image,
        px_per_unit,
        z,
    })
}

/// Sample the spec onto voxel grids: the surface-shell input encoding and the
/// density target.
pub fn voxelize(spec: &LogSpec, cfg: &RasterConfig) -> (DensityVolume, DensityVolume) {
    let field = LogField::new(spec);
    let dims = cfg.volume_dims;
    let extent = render_extent(spec, cfg);
    let height = spec.taper.height;
    let mut input = DensityVolume::zeros(dims, extent, height);
    let mut target = DensityVolume::zeros(dims, extent, height);
    let voxel = 2.0 * extent / dims.0 as f64;
    let slab = dims.0 * dims.1;

    let centers = |iz: usize| (iz as f64 + 0.5) * height / dims.2 as f64;
    input
        .data
        .par_chunks_mut(slab)
        .zip(target.data.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(iz, (in_slab, tg_slab))| {
            let z = centers(iz);
            for iy in 0..dims.1 {
                let y = -extent + (iy as f64 + 0.5) * 2.0 * extent / dims.1 as f64;
                for ix in 0..dims.0 {
                    let x = -extent + (ix as f64 + 0.5) * 2.0 * extent / dims.0 as f64;
                    let r = (x * x + y * y).sqrt();
                    let theta = y.atan2(x);
                    let idx = ix + dims.0 * iy;
                    tg_slab[idx] = field.density_at(r, theta, z) as f32;
                    let bark = field.surface_radius(theta, z).expect("z within range");
                    if (r - bark).abs() <= 0.5 * voxel {
                        in_slab[idx] = (r / extent) as f32;
                    }
                }
            }
        });
    (input, target)
}

/// Split a volume into its cross-sections ordered from the top of the log.
pub fn sequence_views(volume: &DensityVolume) -> Result<Vec<Image>> {
    let (nx, ny, nz) = volume.dims;
    if nz != 64 {
        return Err(Error::dimension(format!("expected nz = 64, got {nz}")));
    }
    Ok((0..nz)
        .map(|i| {
            let iz = nz - 1 - i;
            let slab = &volume.data[iz * nx * ny..(iz + 1) * nx * ny];
            Image {
                width: nx,
                height: ny,
                data: slab.to_vec(),
            }
        })
        .collect())
}

/// Inverse of [`sequence_views`]: stack top-first slices back into a volume.
pub fn restack(slices: &[Image], extent: f64, height: f64) -> Result<DensityVolume> {
    if slices.is_empty() {
        return Err(Error::dimension("empty slice list".to_string()));
    }
    let (nx, ny) = (slices[0].width, slices[0].height);
    let nz = slices.len();
    let mut volume = DensityVolume::zeros((nx, ny, nz), extent, height);
    for (i, slice) in slices.iter().enumerate() {
        if slice.width != nx || slice.height != ny {
            return Err(Error::dimension("inconsistent slice dims".to_string()));
        }
        let iz = nz - 1 - i;
        volume.data[iz * nx * ny..(iz + 1) * nx * ny].copy_from_slice(&slice.data);
    }
    Ok(volume)
}

/// Bilinear sample of a half-plane grid at (r, z), clamped at the edges.
fn sample_half_plane(hp: &HalfPlaneTarget, r: f64, z: f64) -> f64 {
    let n = hp.size;
    let dr = hp.r_max / n as f64;
    let dz = (hp.z_range[1] - hp.z_range[0]) / n as f64;
    let jf = (r / dr).clamp(0.0, (n - 1) as f64);
    let ifl = ((hp.z_range[1] - z) / dz).clamp(0.0, (n - 1) as f64);
    let j0 = jf.floor() as usize;
    let i0 = ifl.floor() as usize;
    let j1 = (j0 + 1).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    let fj = jf - j0 as f64;
    let fi = ifl - i0 as f64;
    let g = |i: usize, j: usize| hp.grid[i * n + j];
    g(i0, j0) * (1.0 - fi) * (1.0 - fj)
        + g(i0, j1) * (1.0 - fi) * fj
        + g(i1, j0) * fi * (1.0 - fj)
        + g(i1, j1) * fi * fj
}

/// Assemble a volume from half-plane slices: each voxel takes the value of
/// the slice whose azimuth is nearest, bilinearly interpolated in (r, z).
pub fn reconstruct_volume(
    slices: &[(f64, HalfPlaneTarget)],
    dims: (usize, usize, usize),
    extent: f64,
    height: f64,
) -> Result<DensityVolume> {
    if slices.is_empty() {
        return Err(Error::domain("empty slice list"));
    }
    let mut volume = DensityVolume::zeros(dims, extent, height);
    let slab = dims.0 * dims.1;
    volume
        .data
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(iz, out)| {
            let z = (iz as f64 + 0.5) * height / dims.2 as f64;
            for iy in 0..dims.1 {
                let y = -extent + (iy as f64 + 0.5) * 2.0 * extent / dims.1 as f64;
                for ix in 0..dims.0 {
                    let x = -extent + (ix as f64 + 0.5) * 2.0 * extent / dims.0 as f64;
                    let r = (x * x + y * y).sqrt();
                    let theta = y.atan2(x);
                    let nearest = slices
                        .iter()
                        .min_by(|a, b| {
                            let da = wrap_angle(theta - a.0).abs();
                            let db = wrap_angle(theta - b.0).abs();
                            da.partial_cmp(&db).unwrap()
                        })
                        .expect("non-empty");
                    out[ix + dims.0 * iy] = sample_half_plane(&nearest.1, r, z) as f32;
                }
            }
        });
    Ok(volume)
}

/// Ground-truth ellipse annotations at `nz` slice heights (volume cell
/// centers, z_index increasing with height) for a `size`-pixel render.
pub fn annotate_slices(
    spec: &LogSpec,
    size: usize,
    nz: usize,
    cfg: &RasterConfig,
) -> Vec<SliceAnnotation> {
    let field = LogField::new(spec);
    let extent = render_extent(spec, cfg);
    let px_per_unit = size as f64 / (2.0 * extent);
    let half = size as f64 / 2.0;
    let height = spec.taper.height;

    (0..nz)
        .map(|iz| {
            let z = (iz as f64 + 0.5) * height / nz as f64;
            let mut ellipses = Vec::new();
            for (idx, knot) in spec.knots.iter().enumerate() {
                let (r_exit, z_exit) = field.knot_exit(idx);
                if z < knot.start_height || z > z_exit {
                    continue;
                }
                // Invert the monotone centerline z_k(r) = z by bisection.
                let (mut lo, mut hi) = (0.0f64, r_exit);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if knot.centerline_z(mid) < z {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let r_star = 0.5 * (lo + hi);
                if r_star < cfg.annotate_min_radius {
                    continue;
                }
                let slope = knot.rise_sqrt / (2.0 * r_star.sqrt()) + knot.rise_lin;
                let rho = knot.tube_radius(r_star) * px_per_unit;
                // Horizontal cut of a tube tilted by the centerline slope.
                let radial = rho * (1.0 + slope * slope).sqrt() / slope;
                let cx = half + r_star * knot.azimuth.cos() * px_per_unit;
                let cy = half + r_star * knot.azimuth.sin() * px_per_unit;
                let mut ellipse = Ellipse {
                    cx,
                    cy,
                    a: radial,
                    b: rho,
                    angle: knot.azimuth.rem_euclid(TAU),
                };
                // The instance centroid is the centroid of the knot region
                // actually visible in the slice (membership clipped by the
                // bark), not the centerline point: near the bark exit the
                // cut is truncated and the two differ by several pixels.
                let margin = 3.0;
                let bb = ellipse.bounding_box();
                let x_lo = (bb.x0 - margin).floor().max(0.0) as usize;
                let y_lo = (bb.y0 - margin).floor().max(0.0) as usize;
                let x_hi = ((bb.x1 + margin).ceil() as usize).min(size);
                let y_hi = ((bb.y1 + margin).ceil() as usize).min(size);
                let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
                for py in y_lo..y_hi {
                    for px in x_lo..x_hi {
                        let wx = (px as f64 + 0.5 - half) / px_per_unit;
                        let wy = (py as f64 + 0.5 - half) / px_per_unit;
                        let r = (wx * wx + wy * wy).sqrt();
                        let theta = wy.atan2(wx);
                        let bark = field.surface_radius(theta, z).expect("z within range");
                        if r <= bark && field.knot_contains(idx, r, theta, z) {
                            sx += px as f64 + 0.5;
                            sy += py as f64 + 0.5;
                            count += 1;
                        }
                    }
                }
                if count < cfg.annotate_min_area {
                    continue;
                }
                ellipse.cx = sx / count as f64;
                ellipse.cy = sy / count as f64;
                ellipses.push(ellipse);
            }
            let boxes = ellipses
                .iter()
                .map(|e| e.bounding_box().clamp_to(size as f64, size as f64))
                .collect();
            SliceAnnotation {
                z_index: iz,
                ellipses,
                boxes,
            }
        })
        .collect()
}
