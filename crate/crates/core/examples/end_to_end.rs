//! Generates a synthetic train/held-out split, trains the refiner and compares
//! held-out mIoU with and without it.
//!
//! cargo run --release --example end_to_end -- [workdir] [epochs] [n_u]

use std::path::PathBuf;
use std::time::Instant;

use transupr::pipeline::{self, PipelineConfig};
use transupr::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let work = PathBuf::from(args.next().unwrap_or_else(|| "target/end_to_end".into()));
    let epochs: usize = args.next().map_or(50, |s| s.parse().expect("epochs"));
    let n_u: usize = args.next().map_or(512, |s| s.parse().expect("n_u"));

    let mut cfg = PipelineConfig::desk_scale();
    cfg.train.epochs = epochs;
    cfg.selection.n_u = n_u;
    cfg.refine.max_context = n_u;
    cfg.refine.chunk_size = n_u;

    let t = Instant::now();
    cfg.corpus.scans = 20;
    cfg.corpus.first_seed = 0;
    pipeline::generate_corpus(&cfg, &work.join("train"))?;
    cfg.corpus.scans = 5;
    cfg.corpus.first_seed = 1000;
    pipeline::generate_corpus(&cfg, &work.join("heldout"))?;
    println!("generated corpus in {:.1?}", t.elapsed());

    let t = Instant::now();
    cfg.paths.input = work.join("train");
    cfg.paths.output = work.join("run");
    let trained = pipeline::run_train(&cfg)?;
    println!(
        "trained on {} scans, {} pool entries, in {:.1?}",
        trained.scans,
        trained.pool_entries,
        t.elapsed()
    );
    for l in trained.log.iter().step_by((epochs / 10).max(1)) {
        println!("  {l}");
    }

    let t = Instant::now();
    cfg.paths.input = work.join("heldout");
    let outcome = pipeline::run_refine(&cfg, Some(&trained.model))?;
    let refined = outcome.refined.expect("held-out scans are labeled");
    let knn = outcome.knn_only.expect("held-out scans are labeled");
    println!("refined held-out scans in {:.1?}", t.elapsed());
    for s in &outcome.scans {
        println!("  {} pool={} changed={}", s.scan_id, s.pool, s.changed);
    }
    println!("knn-only mIoU {:.4}  oACC {:.4}", knn.miou()?, knn.oacc()?);
    println!("refined  mIoU {:.4}  oACC {:.4}", refined.miou()?, refined.oacc()?);
    print!("{}", refined.report(None)?);
    print!("{}", knn.report(None)?);
    Ok(())
}
