//! Generate a balanced synthetic-log manifest, split it into train/val/test,
//! and print the resulting counts.
//!
//!     cargo run --release --example forge_dataset

use woodlog::config::Config;
use woodlog::metrics::split_dataset;
use woodlog::synthesis::forge_dataset;

fn main() -> woodlog::Result<()> {
    let cfg = Config::default();
    let manifest = forge_dataset(&cfg.synthesis, 50, 2..=7, 1)?;
    println!("logs {}", manifest.entries.len());
    for k in 2..=7 {
        let n = manifest.entries.iter().filter(|e| e.k == k).count();
        println!("k={k} {n}");
    }

    let fractions = (cfg.split.train, cfg.split.val, cfg.split.test);
    let split = split_dataset(&manifest, fractions, 1)?;
    println!(
        "train {} val {} test {}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}
