//! Windowed KNN label post-processing on the range image.
//!
//! Every point looks at the foreground points of the pixels in a square window
//! around its own pixel, keeps the `k` closest in range, drops those further than
//! `range_cutoff`, and takes a weighted vote over their pixel labels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti_io::ClassId;
use crate::projection::{LabelImage, RangeImage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteWeighting {
    /// `exp(-dr^2 / (2 sigma^2))`.
    #[default]
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    pub k: usize,
    /// Odd side length of the search window in pixels.
    pub window: usize,
    /// Bandwidth of the Gaussian vote weight, meters.
    pub sigma: f64,
    /// Neighbors with a larger range difference do not vote, meters.
    pub range_cutoff: f64,
    pub weighting: VoteWeighting,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            window: 5,
            sigma: 1.0,
            range_cutoff: 1.0,
            weighting: VoteWeighting::Gaussian,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("knn: k must be >= 1".into()));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Config("knn: window must be odd".into()));
        }
        if !(self.sigma > 0.0) || !(self.range_cutoff > 0.0) {
            return Err(Error::Config("knn: sigma and range_cutoff must be > 0".into()));
        }
        Ok(())
    }
}

/// A window candidate: range difference to the query point and the pixel holding it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Candidate {
    pub delta: f64,
    pub pixel: usize,
}

/// Fills `out` with the `k` foreground pixels of the window around `point`'s
/// pixel closest in range to `point`; ties in range difference go to the lower
/// pixel index. The window is clamped at the image border and does not wrap.
pub(crate) fn nearest_in_window(
    img: &RangeImage,
    point: usize,
    window: usize,
    k: usize,
    out: &mut Vec<Candidate>,
) {
    out.clear();
    let half = (window / 2) as i64;
    let px = img.point_pixel(point);
    let r = img.point_range(point);
    let (w, h) = (img.width() as i64, img.height() as i64);
    let v0 = (px.v as i64 - half).max(0);
    let v1 = (px.v as i64 + half).min(h - 1);
    let u0 = (px.u as i64 - half).max(0);
    let u1 = (px.u as i64 + half).min(w - 1);
    // Row-major scan yields ascending pixel index, so a stable sort keeps the tie order.
    for v in v0..=v1 {
        for u in u0..=u1 {
            let pixel = (v * w + u) as usize;
            if let Some(fg) = img.foreground(pixel) {
                out.push(Candidate {
                    delta: (img.point_range(fg) - r).abs(),
                    pixel,
                });
            }
        }
    }
    out.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    out.truncate(k);
}

fn vote(cands: &[Candidate], pixel_labels: &LabelImage, cfg: &KnnConfig) -> Option<ClassId> {
    let mut tally: Vec<(ClassId, f64)> = Vec::with_capacity(cands.len());
    let inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    for c in cands.iter().filter(|c| c.delta <= cfg.range_cutoff) {
        let weight = match cfg.weighting {
            VoteWeighting::Gaussian => (-c.delta * c.delta * inv).exp(),
            VoteWeighting::Uniform => 1.0,
        };
        let label = pixel_labels.labels[c.pixel];
        match tally.iter_mut().find(|(l, _)| *l == label) {
            Some(slot) => slot.1 += weight,
            None => tally.push((label, weight)),
        }
    }
    tally
        .into_iter()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .map(|(l, _)| l)
}

/// Refined per-point labels from per-pixel labels. Points with no surviving
/// neighbor keep the label of their own pixel.
pub fn knn_refine(img: &RangeImage, pixel_labels: &LabelImage, cfg: &KnnConfig) -> Result<Vec<ClassId>> {
    cfg.validate()?;
    pixel_labels.check_shape(img)?;
    Ok((0..img.num_points())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            nearest_in_window(img, i, cfg.window, cfg.k, buf);
            vote(buf, pixel_labels, cfg)
                .unwrap_or_else(|| pixel_labels.labels[img.point_pixel_index(i)])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::{Point, PointCloud};
    use crate::projection::{back_project_labels, project, ProjectionConfig};

    fn cfg_small() -> ProjectionConfig {
        ProjectionConfig {
            width: 360,
            height: 28,
            fov_up: 3.0,
            fov_down: -25.0,
        }
    }

    fn at(az_deg: f64, el_deg: f64, r: f64) -> Point {
        let (a, e) = (az_deg.to_radians(), el_deg.to_radians());
        Point::new(
            (r * e.cos() * a.cos()) as f32,
            (r * e.cos() * a.sin()) as f32,
            (r * e.sin()) as f32,
            0.3,
        )
    }

    #[test]
    fn isolated_point_keeps_pixel_label() {
        let cloud = PointCloud::new(vec![at(10.5, -5.5, 6.0), at(-120.5, -15.5, 6.0)]);
        let img = project(&cloud, &cfg_small()).unwrap();
        let mut labels = LabelImage::filled(img.width(), img.height(), 0);
        labels.labels[img.point_pixel_index(0)] = 4;
        labels.labels[img.point_pixel_index(1)] = 7;
        let out = knn_refine(&img, &labels, &KnnConfig::default()).unwrap();
        assert_eq!(out, back_project_labels(&img, &labels).unwrap());
    }

    #[test]
    fn distant_background_is_not_outvoted() {
        // Foreground car points at 5 m around a background point at 9 m.
        let mut pts = vec![at(10.5, -5.5, 9.0)];
        for da in [-1.0, 0.0, 1.0] {
            for de in [-1.0, 0.0, 1.0] {
                pts.push(at(10.5 + da, -5.5 + de, 5.0));
            }
        }
        let img = project(&PointCloud::new(pts), &cfg_small()).unwrap();
        assert!(!img.is_foreground(0));
        let mut labels = LabelImage::filled(img.width(), img.height(), 0);
        for p in 1..img.num_points() {
            labels.labels[img.point_pixel_index(p)] = 1;
        }
        // Own pixel also says car, so the fallback yields car; relabel own pixel to
        // check that the 5 m neighbors are all filtered.
        labels.labels[img.point_pixel_index(0)] = 13;
        let out = knn_refine(&img, &labels, &KnnConfig::default()).unwrap();
        assert_eq!(out[0], 13);
    }

    #[test]
    fn foreground_in_uniform_window_is_stable() {
        let mut pts = Vec::new();
        for da in -2..=2 {
            for de in -2..=2 {
                pts.push(at(30.5 + da as f64, -10.5 + de as f64, 7.0 + 0.01 * da as f64));
            }
        }
        let img = project(&PointCloud::new(pts), &cfg_small()).unwrap();
        let labels = LabelImage::filled(img.width(), img.height(), 9);
        let out = knn_refine(&img, &labels, &KnnConfig::default()).unwrap();
        assert!(out.iter().all(|&l| l == 9));
    }

    #[test]
    fn vote_ties_go_to_smaller_class() {
        let cands = [
            Candidate { delta: 0.0, pixel: 0 },
            Candidate { delta: 0.0, pixel: 1 },
        ];
        let labels = LabelImage {
            width: 2,
            height: 1,
            labels: vec![6, 3],
        };
        assert_eq!(vote(&cands, &labels, &KnnConfig::default()), Some(3));
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            KnnConfig { k: 0, ..Default::default() },
            KnnConfig { window: 4, ..Default::default() },
            KnnConfig { sigma: 0.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    mod props {
        use super::*;
        use crate::kitti_io::{Point, PointCloud};
        use crate::projection::{project, LabelImage, ProjectionConfig};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn votes_only_pick_labels_in_the_window(
                pts in proptest::collection::vec((-20.0f32..20.0, -20.0f32..20.0, -3.0f32..1.0), 1..200),
                labels in proptest::collection::vec(0u16..4, 16 * 8),
                k in 1usize..6,
            ) {
                let cloud = PointCloud::new(
                    pts.into_iter()
                        .filter(|&(x, y, z)| x * x + y * y + z * z > 1e-2)
                        .map(|(x, y, z)| Point::new(x, y, z, 0.0))
                        .collect(),
                );
                prop_assume!(!cloud.is_empty());
                let pcfg = ProjectionConfig { width: 16, height: 8, ..Default::default() };
                let img = project(&cloud, &pcfg).unwrap();
                let li = LabelImage { width: 16, height: 8, labels };
                let cfg = KnnConfig { k, window: 3, ..KnnConfig::default() };
                let out = knn_refine(&img, &li, &cfg).unwrap();
                for (i, &l) in out.iter().enumerate() {
                    let p = img.point_pixel(i);
                    let found = (p.v.saturating_sub(1)..=(p.v + 1).min(7)).any(|v| {
                        (p.u.saturating_sub(1)..=(p.u + 1).min(15)).any(|u| li.labels[(v * 16 + u) as usize] == l)
                    });
                    prop_assert!(found, "point {} got a label from outside its window", i);
                }
            }
        }
    }
}
