//! Train the encoder-decoder on surface-patch / half-plane pairs and compare
//! its held-out RMSE against the mean-of-training baseline. This is a scaled
//! down run (8 logs, 15 epochs) that finishes in about a minute on one core;
//! the full recipe lives in the `train` CLI subcommand.
//!
//!     cargo run --release --example train_denoiser

use woodlog::config::{Config, TrainingConfig};
use woodlog::io::{write_checkpoint, write_history};
use woodlog::minimodel::{
    baseline_mean, baseline_rmse, sample_pair_from_log, train, Checkpoint, ModelSpec, SamplePair,
};
use woodlog::synthesis::{forge_dataset, ManifestEntry};

fn main() -> woodlog::Result<()> {
    let cfg = Config::default();
    let manifest = forge_dataset(&cfg.synthesis, 2, 2..=5, 424242)?;
    let azimuths = 8usize;

    let pairs_of = |entries: &[ManifestEntry]| -> Vec<SamplePair> {
        entries
            .iter()
            .flat_map(|e| {
                (0..azimuths).map(|a| {
                    let theta0 = a as f64 * std::f64::consts::TAU / azimuths as f64;
                    sample_pair_from_log(&e.spec, theta0, &cfg.raster)
                })
            })
            .collect()
    };
    let train_pairs = pairs_of(&manifest.entries[..6]);
    let val_pairs = pairs_of(&manifest.entries[6..8]);

    let tc = TrainingConfig {
        epochs: 15,
        lr_drop_epoch: 10,
        channels: vec![8, 16, 32],
        batch_size: 4,
        ..TrainingConfig::default()
    };
    let spec = ModelSpec::from_training(&tc);
    let outcome = train(&spec, &tc, &train_pairs, &val_pairs, 7)?;

    for e in outcome.history.iter().step_by(3) {
        println!(
            "epoch {} lr {} train_rmse {:.4} val_rmse {:.4}",
            e.epoch,
            e.lr,
            e.train_loss.sqrt(),
            e.val_loss.sqrt()
        );
    }

    let mean = baseline_mean(&train_pairs)?;
    let baseline = baseline_rmse(&mean, &val_pairs)?;
    let model_rmse = outcome.best_val_loss.sqrt();
    println!("best_epoch {}", outcome.best_epoch);
    println!("model_val_rmse {model_rmse:.4}");
    println!("baseline_val_rmse {baseline:.4}");
    println!("ratio {:.3}", model_rmse / baseline);

    write_checkpoint(
        &Checkpoint::from_outcome(&outcome),
        "denoiser.ckpt".as_ref(),
    )?;
    write_history(&outcome.history, "history.jsonl".as_ref())?;
    println!("wrote denoiser.ckpt history.jsonl");
    Ok(())
}
