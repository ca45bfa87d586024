//! Writes a synthetic scan as a colored PLY, once by ground truth and once by
//! the noisy coarse labels.
//!
//! cargo run --release --example export_ply -- [outdir]

use std::path::PathBuf;

use transupr::coarse::{oracle_coarse, OracleNoiseSpec};
use transupr::ply::{export_ply, Palette};
use transupr::projection::back_project_labels;
use transupr::scene::{generate_scene, SyntheticSceneSpec};
use transupr::{project, ClassMap, ProjectionConfig, Result};

fn main() -> Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/export_ply".into()));
    let map = ClassMap::semantic_kitti();
    let cloud = generate_scene(&SyntheticSceneSpec::default())?;
    let gt = cloud.labels.clone().expect("synthetic scans are labeled");
    let img = project(&cloud, &ProjectionConfig::default())?;
    let coarse = oracle_coarse(&img, &gt, map.num_classes(), &OracleNoiseSpec::default())?;
    let noisy = back_project_labels(&img, &coarse.argmax_labels(map.ignore_class()))?;

    let palette = Palette::semantic_kitti();
    export_ply(&cloud, &gt, &palette, &dir.join("ground_truth.ply"))?;
    export_ply(&cloud, &noisy, &palette, &dir.join("coarse.ply"))?;
    println!("wrote {} points to {}", cloud.len(), dir.display());
    Ok(())
}
