//! Trains a small refiner on a handful of synthetic scans, saves the
//! checkpoint and reloads it.
//!
//! cargo run --release --example train_refiner -- [workdir] [epochs]

use std::path::PathBuf;

use transupr::pipeline::{self, PipelineConfig, CHECKPOINT_FILE};
use transupr::refiner::load_checkpoint;
use transupr::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let work = PathBuf::from(args.next().unwrap_or_else(|| "target/train_refiner".into()));
    let epochs: usize = args.next().map_or(10, |s| s.parse().expect("epochs"));

    let mut cfg = PipelineConfig::desk_scale();
    cfg.corpus.scans = 4;
    cfg.train.epochs = epochs;
    cfg.model.embed_hidden = 32;
    cfg.model.embed_dim = 64;
    cfg.model.head_hidden = [128, 64];
    cfg.paths.input = work.join("corpus");
    cfg.paths.output = work.join("run");
    pipeline::generate_corpus(&cfg, &cfg.paths.input)?;

    let out = pipeline::run_train(&cfg)?;
    println!("{} scans, {} pool entries, {} parameters", out.scans, out.pool_entries, out.model.num_params());
    println!("epoch total wce lovasz");
    for l in &out.log {
        println!("{l}");
    }
    let reloaded = load_checkpoint(&cfg.paths.output.join(CHECKPOINT_FILE))?;
    assert_eq!(reloaded, out.model);
    println!("checkpoint round-trips");
    Ok(())
}
