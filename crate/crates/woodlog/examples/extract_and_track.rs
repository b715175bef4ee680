//! The classical image-processing pipeline on one synthetic log: render CT
//! cross-sections, median-filter them, extract the bark contour by radial ray
//! casting, detect knot blobs by thresholded connected components, and link
//! the per-slice detections into knot tracks.
//!
//!     cargo run --release --example extract_and_track

use woodlog::config::Config;
use woodlog::extract::{
    detect_knot_blobs, extract_bark_contour, median_filter_3x3, smooth_track_sizes, track_knots,
};
use woodlog::raster::{render_cross_section, render_extent};
use woodlog::synthesis::{sample_log_spec, surface_radius};

fn main() -> woodlog::Result<()> {
    let cfg = Config::default();
    let spec = sample_log_spec(&cfg.synthesis, 9001, 3)?;
    let (nz, size) = (64, 256);
    let extent = render_extent(&spec, &cfg.raster);
    let px_per_unit = size as f64 / (2.0 * extent);

    let mut per_slice = Vec::new();
    let mut mae_sum = 0.0;
    let mut mae_n = 0usize;
    for iz in 0..nz {
        let z = (iz as f64 + 0.5) * spec.taper.height / nz as f64;
        let section = render_cross_section(&spec, z, size, &cfg.raster)?;
        let img = median_filter_3x3(&section.image)?;

        let contour = extract_bark_contour(
            &img,
            cfg.extract.contour_rays,
            cfg.extract.foreground_threshold,
        )?;
        for (ri, r_px) in contour.iter().enumerate() {
            let theta = ri as f64 * std::f64::consts::TAU / cfg.extract.contour_rays as f64;
            mae_sum += (r_px - surface_radius(&spec, theta, z)? * px_per_unit).abs();
            mae_n += 1;
        }

        per_slice.push(detect_knot_blobs(
            &img,
            iz,
            cfg.extract.density_threshold,
            cfg.extract.min_area,
        ));
    }

    let tracks = track_knots(&per_slice, cfg.extract.max_gap, cfg.extract.max_jump_px);
    println!("slices {nz}");
    println!("contour_mae_px {:.3}", mae_sum / mae_n as f64);
    println!(
        "detections {}",
        per_slice.iter().map(Vec::len).sum::<usize>()
    );
    println!("tracks {}", tracks.len());
    for (i, t) in tracks.iter().enumerate() {
        let s = smooth_track_sizes(t, cfg.extract.smooth_window)?;
        let (z0, z1) = (
            s.entries.first().map(|e| e.z_index).unwrap_or(0),
            s.entries.last().map(|e| e.z_index).unwrap_or(0),
        );
        println!("track {i}: slices {z0}..={z1} length {}", s.entries.len());
    }
    Ok(())
}
