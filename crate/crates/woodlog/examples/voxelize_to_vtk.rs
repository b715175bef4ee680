//! Voxelize one synthetic log into input (bark shell) and target (density)
//! volumes, then export the target as a legacy ASCII VTK file for viewing in
//! ParaView or similar.
//!
//!     cargo run --release --example voxelize_to_vtk

use woodlog::config::Config;
use woodlog::io::{export_vtk, write_volume};
use woodlog::raster::voxelize;
use woodlog::synthesis::sample_log_spec;

fn main() -> woodlog::Result<()> {
    let cfg = Config::default();
    let spec = sample_log_spec(&cfg.synthesis, 11, 5)?;
    let (input, target) = voxelize(&spec, &cfg.raster);

    write_volume(&input, "log.input.wlog".as_ref())?;
    write_volume(&target, "log.target.wlog".as_ref())?;
    export_vtk(&target, "log.vtk".as_ref())?;

    let (nx, ny, nz) = target.dims;
    let occupancy =
        target.data.iter().filter(|&&d| d > 0.0).count() as f64 / target.data.len() as f64;
    println!("dims {nx} {ny} {nz}");
    println!("extent {:.4}", target.extent);
    println!("occupancy {occupancy:.4}");
    println!("wrote log.input.wlog log.target.wlog log.vtk");
    Ok(())
}
