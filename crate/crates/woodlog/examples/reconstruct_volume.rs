//! Assemble a density volume from analytic half-planes at many azimuths and
//! compare it against direct voxelization of the same log. The two paths
//! sample the same field, so the RMSE between them measures only resampling
//! error.
//!
//!     cargo run --release --example reconstruct_volume

use woodlog::config::Config;
use woodlog::metrics::rmse;
use woodlog::raster::{reconstruct_volume, render_extent, render_half_plane, voxelize};
use woodlog::synthesis::sample_log_spec;

fn main() -> woodlog::Result<()> {
    let mut cfg = Config::default();
    cfg.raster.volume_dims = (128, 128, 32);
    cfg.raster.grid = 128;

    let spec = sample_log_spec(&cfg.synthesis, 5003, 3)?;
    let (_, target) = voxelize(&spec, &cfg.raster);

    let n = cfg.raster.reconstruct_slices;
    let slices: Vec<_> = (0..n)
        .map(|i| {
            let theta0 = i as f64 * std::f64::consts::TAU / n as f64;
            (theta0, render_half_plane(&spec, theta0, &cfg.raster))
        })
        .collect();
    let extent = render_extent(&spec, &cfg.raster);
    let recon = reconstruct_volume(&slices, cfg.raster.volume_dims, extent, spec.taper.height)?;

    println!("halfplanes {n}");
    println!("rmse {:.5}", rmse(&recon, &target)?);
    Ok(())
}
