//! Back-projects noisy pixel labels to points and shows how much the range
//! KNN vote recovers.

use transupr::coarse::{oracle_coarse, OracleNoiseSpec};
use transupr::knn::{knn_refine, KnnConfig};
use transupr::metrics::ConfusionMatrix;
use transupr::projection::back_project_labels;
use transupr::scene::{generate_scene, SyntheticSceneSpec};
use transupr::{project, ClassMap, ProjectionConfig, Result};

fn main() -> Result<()> {
    let map = ClassMap::semantic_kitti();
    let cloud = generate_scene(&SyntheticSceneSpec::default())?;
    let gt = cloud.labels.clone().expect("synthetic scans are labeled");
    // Half-width projection so many points share a pixel.
    let cfg = ProjectionConfig {
        width: 1024,
        ..ProjectionConfig::default()
    };
    let img = project(&cloud, &cfg)?;
    let coarse = oracle_coarse(&img, &gt, map.num_classes(), &OracleNoiseSpec::default())?;
    let pixel_labels = coarse.argmax_labels(map.ignore_class());

    let score = |pred: &[u16]| -> Result<f64> {
        let mut cm = ConfusionMatrix::new(map.num_classes(), Some(map.ignore_class()));
        cm.accumulate(&gt, pred)?;
        cm.miou()
    };
    let back = back_project_labels(&img, &pixel_labels)?;
    let knn = knn_refine(&img, &pixel_labels, &KnnConfig::default())?;
    let changed = back.iter().zip(&knn).filter(|(a, b)| a != b).count();
    println!("back-projection mIoU {:.4}", score(&back)?);
    println!("knn vote        mIoU {:.4} ({changed} labels changed)", score(&knn)?);
    Ok(())
}
