//! Builds the uncertain-point pool of one scan for several background cutoffs
//! and prints how it splits between boundary and background points.

use transupr::coarse::{oracle_coarse, OracleNoiseSpec};
use transupr::knn::{knn_refine, KnnConfig};
use transupr::scene::{generate_scene, SyntheticSceneSpec};
use transupr::uncertainty::{build_pool, Reason, SelectionConfig};
use transupr::{project, ClassMap, ProjectionConfig, Result};

fn main() -> Result<()> {
    let map = ClassMap::semantic_kitti();
    let cloud = generate_scene(&SyntheticSceneSpec::default())?;
    let gt = cloud.labels.clone().expect("synthetic scans are labeled");
    // Half the scanner's azimuth resolution, so pixels collect several points.
    let cfg = ProjectionConfig {
        width: 1024,
        ..ProjectionConfig::default()
    };
    let img = project(&cloud, &cfg)?;
    let coarse = oracle_coarse(&img, &gt, map.num_classes(), &OracleNoiseSpec::default())?;
    let p_c = knn_refine(&img, &coarse.argmax_labels(map.ignore_class()), &KnnConfig::default())?;

    println!("{:>5} {:>8} {:>9} {:>11} {:>6} {:>9}", "c_u", "pool", "boundary", "background", "both", "wrong p_c");
    for c_u in [0.5, 1.0, 2.0, 3.0, 4.0] {
        let cfg = SelectionConfig {
            c_u,
            ..SelectionConfig::default()
        };
        let pool = build_pool(&img, &coarse, &cfg, &p_c)?;
        let count = |r: Reason| pool.reasons.iter().filter(|&&x| x == r).count();
        let wrong = pool.indices.iter().filter(|&&i| p_c[i] != gt[i]).count();
        println!(
            "{c_u:>5} {:>8} {:>9} {:>11} {:>6} {wrong:>9}",
            pool.len(),
            count(Reason::Boundary),
            count(Reason::Background),
            count(Reason::Both)
        );
    }
    Ok(())
}
