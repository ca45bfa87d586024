//! Scores label files against ground truth, the same way `transupr eval` does.
//!
//! cargo run --release --example evaluate -- <predictions-dir> <corpus-dir>
//!
//! With no arguments, scores a freshly generated corpus against itself after
//! corrupting every tenth label.

use std::path::PathBuf;

use transupr::kitti_io::{read_labels, write_labels};
use transupr::pipeline::{self, label_path, PipelineConfig};
use transupr::{ClassMap, Result};

fn main() -> Result<()> {
    let map = ClassMap::semantic_kitti();
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let (pred, corpus) = match args.as_slice() {
        [p, c] => (p.clone(), c.clone()),
        _ => {
            let work = PathBuf::from("target/evaluate");
            let mut cfg = PipelineConfig::desk_scale();
            cfg.corpus.scans = 2;
            let corpus = work.join("corpus");
            let pred = work.join("pred");
            for id in pipeline::generate_corpus(&cfg, &corpus)? {
                let mut labels = read_labels(&label_path(&corpus, &id), &map)?;
                for l in labels.iter_mut().step_by(10) {
                    *l = 1;
                }
                write_labels(&labels, &map, &pred.join(format!("{id}.label")))?;
            }
            (pred, corpus)
        }
    };
    let cm = pipeline::run_eval(&pred, &corpus, &map)?;
    print!("{}", cm.report(Some(&map))?);
    Ok(())
}
