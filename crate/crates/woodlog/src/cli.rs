//! The command-line surface. One subcommand per pipeline stage; every
//! randomized command takes an explicit seed and all results print as
//! machine-parseable `name value` lines.

use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::extract::{
    detect_knot_blobs, extract_bark_contour, median_filter_3x3, recenter_to_pith,
    smooth_track_sizes, track_knots, EllipseDetection,
};
use crate::image2d::Image;
use crate::io::{
    self, read_checkpoint, read_detections, read_manifest, read_volume, write_checkpoint,
    write_detections, write_grid, write_history, write_manifest, write_volume, DetectionRecord,
    DetectionSource,
};
use crate::metrics::{average_precision, rmse, split_dataset, GroundTruthBox, ScoredBox};
use crate::minimodel::{
    baseline_mean, baseline_rmse, evaluate, sample_pair_from_log, train, Checkpoint, ModelSpec,
    SamplePair,
};
use crate::raster::{
    annotate_slices, reconstruct_volume, render_extent, render_half_plane, render_surface_patch,
    sequence_views, voxelize, DensityVolume,
};
use crate::synthesis::{forge_dataset, DatasetManifest, ManifestEntry};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "woodlog",
    version,
    about = "Synthetic log dataset and knot pipeline"
)]
pub struct Cli {
    /// Pipeline configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a balanced dataset manifest.
    Forge {
        #[arg(long)]
        per_k: usize,
        #[arg(long)]
        k_min: usize,
        #[arg(long)]
        k_max: usize,
        #[arg(long)]
        seed: u64,
        /// Output directory; the manifest is written as manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the surface patch and half-plane of one log at one azimuth.
    Render {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 0.0)]
        theta0_deg: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voxelize one log into input (bark shell) and target (density) volumes.
    Voxelize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a volume into an ordered top-down slice sequence.
    Sequence {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract per-slice bark contours from a volume.
    Extract {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect knot blobs per slice; with --ground-truth, emit analytic
    /// annotations from the manifest instead.
    Detect {
        #[arg(long)]
        volume: Option<PathBuf>,
        #[arg(long)]
        log: Option<String>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        ground_truth: bool,
        /// Pixel size of the annotated cross-sections (ground-truth mode);
        /// defaults to the configured section size.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link per-slice detections into knot tracks.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a manifest into train/val/test.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the encoder-decoder on patch/half-plane pairs.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Number of manifest logs used (front of the manifest).
        #[arg(long, default_value_t = 20)]
        logs: usize,
        /// Azimuths sampled per log.
        #[arg(long, default_value_t = 8)]
        azimuths: usize,
        /// Of the used logs, this many at the tail become validation.
        #[arg(long, default_value_t = 4)]
        val_logs: usize,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        out_history: PathBuf,
    },
    /// Predict a half-plane from a bark patch with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 0.0)]
        theta0_deg: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble a volume from analytic half-planes at many azimuths.
    Reconstruct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// RMSE between two equally-sized volumes.
    EvalRmse { a: PathBuf, b: PathBuf },
    /// Average precision of predicted boxes against ground truth.
    EvalMap {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Export a volume as a legacy ASCII VTK structured-points file.
    ExportVtk {
        volume: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        extent: f64,
        #[arg(long, default_value_t = 4.0)]
        height: f64,
    },
    /// Report the pixel-per-degree resolution arithmetic of the current config.
    Resolution,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        // Clap prints usage and exits: 0 for --help/--version, 2 otherwise.
        Err(e) => e.exit(),
    };
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 3;
        }
    };
    match execute(cli.command, &config) {
        Ok(()) => 0,
        Err(e @ Error::Config { .. }) => {
            eprintln!("{e}");
            3
        }
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn find_entry<'m>(manifest: &'m DatasetManifest, id: &str) -> Result<&'m ManifestEntry> {
    manifest
        .entries
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::domain(format!("no manifest entry with id `{id}`")))
}

fn slice_image(volume: &DensityVolume, iz: usize) -> Image {
    let (nx, ny, _) = volume.dims;
    Image {
        width: nx,
        height: ny,
        data: volume.data[iz * nx * ny..(iz + 1) * nx * ny].to_vec(),
    }
}

fn execute(command: Command, config: &Config) -> Result<()> {
    match command {
        Command::Forge {
            per_k,
            k_min,
            k_max,
            seed,
            out,
        } => {
            if k_min > k_max {
                return Err(Error::domain("k-min must be <= k-max"));
            }
            let manifest = forge_dataset(&config.synthesis, per_k, k_min..=k_max, seed)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("manifest.json");
            write_manifest(&manifest, &path)?;
            println!("logs {}", manifest.entries.len());
            println!("per_k {per_k}");
            println!("manifest {}", path.display());
        }
        Command::Render {
            manifest,
            id,
            theta0_deg,
            out,
        } => {
            let manifest = read_manifest(&manifest)?;
            let entry = find_entry(&manifest, &id)?;
            let theta0 = theta0_deg.to_radians();
            let patch = render_surface_patch(&entry.spec, theta0, &config.raster);
            let half = render_half_plane(&entry.spec, theta0, &config.raster);
            std::fs::create_dir_all(&out)?;
            let patch_path = out.join(format!("{id}.patch.wlog"));
            let half_path = out.join(format!("{id}.halfplane.wlog"));
            write_grid(&patch.grid, patch.size, patch.size, &patch_path)?;
            write_grid(&half.grid, half.size, half.size, &half_path)?;
            println!("grid {}", patch.size);
            println!("patch {}", patch_path.display());
            println!("halfplane {}", half_path.display());
        }
        Command::Voxelize { manifest, id, out } => {
            let manifest = read_manifest(&manifest)?;
            let entry = find_entry(&manifest, &id)?;
            let (input, target) = voxelize(&entry.spec, &config.raster);
            std::fs::create_dir_all(&out)?;
            let input_path = out.join(format!("{id}.input.wlog"));
            let target_path = out.join(format!("{id}.target.wlog"));
            write_volume(&input, &input_path)?;
            write_volume(&target, &target_path)?;
            let (nx, ny, nz) = target.dims;
            println!("dims {nx} {ny} {nz}");
            println!("extent {}", target.extent);
            println!("input {}", input_path.display());
            println!("target {}", target_path.display());
        }
        Command::Sequence { volume, out } => {
            let vol = read_volume(&volume, 1.0, 1.0)?;
            let slices = sequence_views(&vol)?;
            std::fs::create_dir_all(&out)?;
            for (i, s) in slices.iter().enumerate() {
                let one = DensityVolume {
                    dims: (s.width, s.height, 1),
                    extent: vol.extent,
                    height: vol.height,
                    data: s.data.clone(),
                };
                write_volume(&one, &out.join(format!("slice_{i:03}.wlog")))?;
            }
            println!("slices {}", slices.len());
        }
        Command::Extract { volume, out } => {
            let vol = read_volume(&volume, 1.0, 1.0)?;
            let nz = vol.dims.2;
            let mut lines = String::new();
            for iz in 0..nz {
                let img = slice_image(&vol, iz);
                let centered = recenter_to_pith(&img, config.extract.foreground_threshold)?;
                let filtered = median_filter_3x3(&centered)?;
                let contour = extract_bark_contour(
                    &filtered,
                    config.extract.contour_rays,
                    config.extract.foreground_threshold,
                )?;
                let record = serde_json::json!({ "z_index": iz, "radii_px": contour });
                lines.push_str(&record.to_string());
                lines.push('\n');
            }
            io::atomic_write(&out, lines.as_bytes())?;
            println!("slices {nz}");
            println!("rays {}", config.extract.contour_rays);
            println!("contours {}", out.display());
        }
        Command::Detect {
            volume,
            log,
            manifest,
            ground_truth,
            size,
            out,
        } => {
            let records = if ground_truth {
                let manifest_path =
                    manifest.ok_or_else(|| Error::domain("--ground-truth requires --manifest"))?;
                let id = log.ok_or_else(|| Error::domain("--ground-truth requires --log"))?;
                let manifest = read_manifest(&manifest_path)?;
                let entry = find_entry(&manifest, &id)?;
                let (_, _, nz) = config.raster.volume_dims;
                let size = size.unwrap_or(config.raster.section_size);
                let annotations = annotate_slices(&entry.spec, size, nz, &config.raster);
                annotations
                    .iter()
                    .flat_map(|a| DetectionRecord::from_annotation(&id, a))
                    .collect::<Vec<_>>()
            } else {
                let volume_path =
                    volume.ok_or_else(|| Error::domain("detect requires --volume"))?;
                let id = log.unwrap_or_else(|| "volume".to_string());
                let vol = read_volume(&volume_path, 1.0, 1.0)?;
                let mut records = Vec::new();
                for iz in 0..vol.dims.2 {
                    let img = median_filter_3x3(&slice_image(&vol, iz))?;
                    for det in detect_knot_blobs(
                        &img,
                        iz,
                        config.extract.density_threshold,
                        config.extract.min_area,
                    ) {
                        records.push(DetectionRecord::from_detection(
                            &id,
                            &det,
                            DetectionSource::Detector,
                        ));
                    }
                }
                records
            };
            write_detections(&records, &out)?;
            println!("detections {}", records.len());
            println!("out {}", out.display());
        }
        Command::Track { detections, out } => {
            let records = read_detections(&detections)?;
            let mut by_log: BTreeMap<String, Vec<DetectionRecord>> = BTreeMap::new();
            for r in records {
                by_log.entry(r.log.clone()).or_default().push(r);
            }
            let mut out_records = Vec::new();
            let mut n_tracks = 0;
            for (log, records) in &by_log {
                let nz = records.iter().map(|r| r.z_index).max().unwrap_or(0) + 1;
                let mut per_slice: Vec<Vec<EllipseDetection>> = vec![Vec::new(); nz];
                for r in records {
                    per_slice[r.z_index].push(EllipseDetection {
                        z_index: r.z_index,
                        bbox: r.bbox,
                        ellipse: r.ellipse,
                        score: r.score,
                    });
                }
                let tracks = track_knots(
                    &per_slice,
                    config.extract.max_gap,
                    config.extract.max_jump_px,
                );
                for track in &tracks {
                    let smoothed = smooth_track_sizes(track, config.extract.smooth_window)?;
                    n_tracks += 1;
                    for entry in &smoothed.entries {
                        out_records.push(DetectionRecord::from_detection(
                            log,
                            &entry.detection,
                            DetectionSource::Tracker,
                        ));
                    }
                }
            }
            write_detections(&out_records, &out)?;
            println!("tracks {n_tracks}");
            println!("detections {}", out_records.len());
            println!("out {}", out.display());
        }
        Command::Split {
            manifest,
            seed,
            out,
        } => {
            let manifest = read_manifest(&manifest)?;
            let f = (config.split.train, config.split.val, config.split.test);
            let assignment = split_dataset(&manifest, f, seed)?;
            let json = serde_json::to_string_pretty(&assignment)
                .map_err(|e| Error::domain(e.to_string()))?;
            io::atomic_write(&out, json.as_bytes())?;
            println!("train {}", assignment.train.len());
            println!("val {}", assignment.val.len());
            println!("test {}", assignment.test.len());
            println!("out {}", out.display());
        }
        Command::Train {
            manifest,
            seed,
            logs,
            azimuths,
            val_logs,
            out_checkpoint,
            out_history,
        } => {
            let manifest = read_manifest(&manifest)?;
            if logs > manifest.entries.len() {
                return Err(Error::domain(format!(
                    "--logs {logs} exceeds the {} manifest entries",
                    manifest.entries.len()
                )));
            }
            if val_logs == 0 || val_logs >= logs {
                return Err(Error::domain("--val-logs must be in 1..logs"));
            }
            let pairs_of = |entries: &[ManifestEntry]| -> Vec<SamplePair> {
                entries
                    .iter()
                    .flat_map(|e| {
                        (0..azimuths).map(|a| {
                            let theta0 = a as f64 * std::f64::consts::TAU / azimuths as f64;
                            sample_pair_from_log(&e.spec, theta0, &config.raster)
                        })
                    })
                    .collect()
            };
            let n_train = logs - val_logs;
            let train_pairs = pairs_of(&manifest.entries[..n_train]);
            let val_pairs = pairs_of(&manifest.entries[n_train..logs]);
            let spec = ModelSpec::from_training(&config.training);
            let outcome = train(&spec, &config.training, &train_pairs, &val_pairs, seed)?;
            write_checkpoint(&Checkpoint::from_outcome(&outcome), &out_checkpoint)?;
            write_history(&outcome.history, &out_history)?;
            let mean = baseline_mean(&train_pairs)?;
            println!("train_pairs {}", train_pairs.len());
            println!("val_pairs {}", val_pairs.len());
            println!("best_epoch {}", outcome.best_epoch);
            println!("best_val_rmse {}", outcome.best_val_loss.sqrt());
            println!("baseline_val_rmse {}", baseline_rmse(&mean, &val_pairs)?);
            println!("checkpoint {}", out_checkpoint.display());
            println!("history {}", out_history.display());
        }
        Command::Predict {
            checkpoint,
            manifest,
            id,
            theta0_deg,
            out,
        } => {
            let manifest = read_manifest(&manifest)?;
            let entry = find_entry(&manifest, &id)?;
            let ckpt = read_checkpoint(&checkpoint)?;
            let mut model = ckpt.restore()?;
            let pair = sample_pair_from_log(&entry.spec, theta0_deg.to_radians(), &config.raster);
            let loss = evaluate(&mut model, std::slice::from_ref(&pair), 1)?;
            let mut rng = rand::SeedableRng::seed_from_u64(0);
            let pred = model.forward(&pair.input, false, &mut rng);
            write_grid(&pred.data, pred.h, pred.w, &out)?;
            println!("mse {loss}");
            println!("out {}", out.display());
        }
        Command::Reconstruct { manifest, id, out } => {
            let manifest = read_manifest(&manifest)?;
            let entry = find_entry(&manifest, &id)?;
            let n = config.raster.reconstruct_slices;
            let slices: Vec<_> = (0..n)
                .map(|i| {
                    let theta0 = i as f64 * std::f64::consts::TAU / n as f64;
                    (
                        theta0,
                        render_half_plane(&entry.spec, theta0, &config.raster),
                    )
                })
                .collect();
            let extent = render_extent(&entry.spec, &config.raster);
            let vol = reconstruct_volume(
                &slices,
                config.raster.volume_dims,
                extent,
                entry.spec.taper.height,
            )?;
            write_volume(&vol, &out)?;
            println!("slices {n}");
            println!("out {}", out.display());
        }
        Command::EvalRmse { a, b } => {
            let va = read_volume(&a, 1.0, 1.0)?;
            let vb = read_volume(&b, 1.0, 1.0)?;
            println!("{}", rmse(&va, &vb)?);
        }
        Command::EvalMap { preds, gt, iou } => {
            let preds = read_detections(&preds)?;
            let gt = read_detections(&gt)?;
            // Detections compare per (log, slice); fold both into one global
            // slice numbering so cross-log matches are impossible.
            let mut keys: Vec<(String, usize)> = preds
                .iter()
                .chain(&gt)
                .map(|r| (r.log.clone(), r.z_index))
                .collect();
            keys.sort();
            keys.dedup();
            let index: BTreeMap<(String, usize), usize> =
                keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();
            let scored: Vec<ScoredBox> = preds
                .iter()
                .map(|r| ScoredBox {
                    slice: index[&(r.log.clone(), r.z_index)],
                    bbox: r.bbox,
                    score: r.score,
                })
                .collect();
            let truth: Vec<GroundTruthBox> = gt
                .iter()
                .map(|r| GroundTruthBox {
                    slice: index[&(r.log.clone(), r.z_index)],
                    bbox: r.bbox,
                })
                .collect();
            println!("{}", average_precision(&scored, &truth, iou));
        }
        Command::ExportVtk {
            volume,
            out,
            extent,
            height,
        } => {
            let vol = read_volume(&volume, extent, height)?;
            io::export_vtk(&vol, &out)?;
            println!("out {}", out.display());
        }
        Command::Resolution => {
            let patch = config.raster.grid as f64 / config.raster.patch_width_deg;
            let (nx, _, _) = config.raster.volume_dims;
            let voxel = std::f64::consts::PI * nx as f64 / 360.0;
            println!("patch_px_per_deg {patch}");
            println!("voxel_px_per_deg {voxel}");
        }
    }
    Ok(())
}
