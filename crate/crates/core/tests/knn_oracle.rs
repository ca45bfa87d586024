mod common;

use std::collections::BTreeSet;

use common::*;
use rand::Rng;
use transupr::knn::{knn_refine, KnnConfig, VoteWeighting};
use transupr::kitti_io::{Point, PointCloud};
use transupr::projection::{back_project_labels, project, LabelImage, ProjectionConfig};

#[test]
fn matches_brute_force_vote() {
    let mut r = rng(20);
    for trial in 0..30 {
        let cfg = small_projection(&mut r);
        let cloud = random_cloud(&mut r, 100 + 30 * trial, &cfg);
        let img = project(&cloud, &cfg).unwrap();
        // Few classes so that vote ties happen.
        let labels = random_labels(&mut r, cfg.width, cfg.height, 3);
        let knn = KnnConfig {
            k: r.random_range(1..8),
            window: [1, 3, 5, 7][r.random_range(0..4)],
            sigma: r.random_range(0.3..2.0),
            range_cutoff: r.random_range(0.2..3.0),
            weighting: VoteWeighting::Gaussian,
        };
        let got = knn_refine(&img, &labels, &knn).unwrap();
        let want = knn_oracle(&cloud, &cfg, &labels, knn.k, knn.window, knn.sigma, knn.range_cutoff);
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn seven_point_scene() {
    let cfg = ProjectionConfig {
        width: 8,
        height: 4,
        fov_up: 3.0,
        fov_down: -25.0,
    };
    // Pixel centers: azimuth 180 - 45 (u + 0.5) deg, elevation 3 - 7 (v + 0.5) deg.
    let at = |u: f64, v: f64, r: f64| {
        let az = (180.0 - 45.0 * (u + 0.5)).to_radians();
        let el = (3.0 - 7.0 * (v + 0.5)).to_radians();
        Point::new((r * el.cos() * az.cos()) as f32, (r * el.cos() * az.sin()) as f32, (r * el.sin()) as f32, 0.0)
    };
    let cloud = PointCloud::new(vec![
        at(3.0, 1.0, 5.0),
        at(3.0, 1.0, 9.0),
        at(4.0, 1.0, 5.3),
        at(2.0, 1.0, 8.8),
        at(4.0, 2.0, 5.6),
        at(3.0, 2.0, 12.0),
        at(2.0, 2.0, 9.2),
    ]);
    let img = project(&cloud, &cfg).unwrap();
    let mut labels = LabelImage::filled(8, 4, 0);
    for (i, l) in [(0usize, 1u16), (2, 1), (3, 2), (4, 1), (5, 3), (6, 2)] {
        let px = img.point_pixel(i);
        labels.labels[img.pixel_index(px)] = l;
    }
    let knn = KnnConfig::default();
    let got = knn_refine(&img, &labels, &knn).unwrap();
    assert_eq!(got, knn_oracle(&cloud, &cfg, &labels, 5, 5, 1.0, 1.0));
    // The 9 m point sits behind a class-1 foreground but near the class-2 points.
    assert_eq!(got[1], 2);
    assert_eq!(got[0], 1);
    assert_eq!(back_project_labels(&img, &labels).unwrap()[1], 1);
}

#[test]
fn locality_and_label_closure() {
    let mut r = rng(21);
    for _ in 0..10 {
        let cfg = small_projection(&mut r);
        let cloud = random_cloud(&mut r, 300, &cfg);
        let img = project(&cloud, &cfg).unwrap();
        let labels = random_labels(&mut r, cfg.width, cfg.height, 5);
        let knn = KnnConfig::default();
        let base = knn_refine(&img, &labels, &knn).unwrap();
        let present: BTreeSet<u16> = labels.labels.iter().copied().collect();
        assert!(base.iter().all(|l| present.contains(l)));

        // Relabel one pixel; only points within the half window may change.
        let target = r.random_range(0..img.num_pixels());
        let mut changed = labels.clone();
        changed.labels[target] = 9;
        let after = knn_refine(&img, &changed, &knn).unwrap();
        let tp = img.pixel_at(target);
        for i in 0..cloud.len() {
            let p = img.point_pixel(i);
            let far = (p.u as i64 - tp.u as i64).abs() > 2 || (p.v as i64 - tp.v as i64).abs() > 2;
            if far {
                assert_eq!(after[i], base[i]);
            }
        }
    }
}

#[test]
fn uniform_labels_are_stable() {
    let mut r = rng(22);
    let cfg = small_projection(&mut r);
    let cloud = random_cloud(&mut r, 500, &cfg);
    let img = project(&cloud, &cfg).unwrap();
    let labels = LabelImage::filled(cfg.width, cfg.height, 4);
    let out = knn_refine(&img, &labels, &KnnConfig::default()).unwrap();
    assert!(out.iter().all(|&l| l == 4));
}
