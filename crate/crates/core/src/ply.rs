//! ASCII PLY export of labeled clouds.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kitti_io::{write_atomic, ClassId, PointCloud};

pub const GRAY: [u8; 3] = [128, 128, 128];

/// Per-class RGB colors. Class 0 (unlabeled) is gray.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
}

impl Palette {
    /// Colors used by the usual Semantic-KITTI viewers, in training-id order.
    pub fn semantic_kitti() -> Self {
        Self {
            colors: vec![
                GRAY,
                [100, 150, 245],
                [100, 230, 245],
                [30, 60, 150],
                [80, 30, 180],
                [0, 0, 255],
                [255, 30, 30],
                [255, 40, 200],
                [150, 30, 90],
                [255, 0, 255],
                [255, 150, 255],
                [75, 0, 75],
                [175, 0, 75],
                [255, 200, 0],
                [255, 120, 50],
                [0, 175, 0],
                [135, 60, 0],
                [150, 240, 80],
                [255, 240, 150],
                [255, 0, 0],
            ],
        }
    }

    pub fn color(&self, class: ClassId) -> Option<[u8; 3]> {
        self.colors.get(class as usize).copied()
    }
}

impl Default for Palette {
    fn default() -> Self {
        Self::semantic_kitti()
    }
}

pub fn ply_string(cloud: &PointCloud, labels: &[ClassId], palette: &Palette) -> Result<String> {
    if labels.len() != cloud.len() {
        return Err(Error::shape("ply labels", cloud.len(), labels.len()));
    }
    let mut s = String::with_capacity(64 + 40 * cloud.len());
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", cloud.len()).unwrap();
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    for (p, &l) in cloud.points.iter().zip(labels) {
        let [r, g, b] = palette
            .color(l)
            .ok_or_else(|| Error::Input(format!("palette has no color for class {l}")))?;
        writeln!(s, "{} {} {} {r} {g} {b}", p.x, p.y, p.z).unwrap();
    }
    Ok(s)
}

pub fn export_ply(cloud: &PointCloud, labels: &[ClassId], palette: &Palette, path: &Path) -> Result<()> {
    write_atomic(path, ply_string(cloud, labels, palette)?.as_bytes())
}
