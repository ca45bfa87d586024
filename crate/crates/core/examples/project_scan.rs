//! Simulates one scan, projects it to a range image and writes the range
//! channel as a 16-bit PGM.
//!
//! cargo run --release --example project_scan -- [out.pgm]

use transupr::projection::write_range_pgm;
use transupr::scene::{generate_scene, SyntheticSceneSpec};
use transupr::{project, ProjectionConfig, Result};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "range.pgm".into());
    let cloud = generate_scene(&SyntheticSceneSpec::default())?;
    // Half the scanner's azimuth resolution, so pixels collect several points.
    let cfg = ProjectionConfig {
        width: 1024,
        ..ProjectionConfig::default()
    };
    let img = project(&cloud, &cfg)?;

    let valid = img.valid_mask().iter().filter(|&&v| v).count();
    let background = (0..img.num_points()).filter(|&i| !img.is_foreground(i)).count();
    println!("{} points onto {}x{} pixels", cloud.len(), img.height(), img.width());
    println!("{valid} occupied pixels, {background} background points");
    write_range_pgm(&img, out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
