//! Render the two views of one synthetic log used by the learning task: the
//! bark surface patch (input) and the radial-longitudinal half-plane density
//! (target), both at the same azimuth, and save them as WLOG grids.
//!
//!     cargo run --release --example render_views

use woodlog::config::Config;
use woodlog::io::write_grid;
use woodlog::raster::{render_half_plane, render_surface_patch};
use woodlog::synthesis::sample_log_spec;

fn main() -> woodlog::Result<()> {
    let cfg = Config::default();
    let spec = sample_log_spec(&cfg.synthesis, 7, 4)?;
    let theta0 = 30.0f64.to_radians();

    let patch = render_surface_patch(&spec, theta0, &cfg.raster);
    let half = render_half_plane(&spec, theta0, &cfg.raster);
    write_grid(&patch.grid, patch.size, patch.size, "patch.wlog".as_ref())?;
    write_grid(&half.grid, half.size, half.size, "halfplane.wlog".as_ref())?;

    let mean_r = patch.grid.iter().sum::<f64>() / patch.grid.len() as f64;
    let occupancy = half.grid.iter().filter(|&&d| d > 0.0).count() as f64 / half.grid.len() as f64;
    println!("grid {}", patch.size);
    println!("mean_bark_radius {mean_r:.4}");
    println!("halfplane_occupancy {occupancy:.4}");
    println!("wrote patch.wlog halfplane.wlog");
    Ok(())
}
