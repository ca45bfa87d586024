//! Uncertain-point localization and per-point feature assembly.
//!
//! Two selection strategies feed one pool:
//! * boundary points, taken in ascending order of their pixel's top-2 margin up
//!   to a budget, with seeded sampling inside the margin stratum that straddles
//!   the budget;
//! * background points whose distance to their pixel's foreground point is at
//!   least `c_u`.
//!
//! Pool members get a `5 + C` feature vector: their own `(x, y, z, range,
//! remission)` followed by the mean class probabilities of the `agg_k` window
//! neighbors closest in range.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::coarse::{top2_margin, CoarseSegmentation};
use crate::error::{Error, Result};
use crate::kitti_io::ClassId;
use crate::knn::{nearest_in_window, Candidate};
use crate::projection::{background_distance, DistanceMetric, RangeImage};
use crate::rng;

/// Width of the geometry slice `(x, y, z, range, remission)`.
pub const NUM_GEOMETRY: usize = 5;

const BOUNDARY_STREAM: u64 = 0xb0;
const SAMPLE_STREAM: u64 = 0x5a;

/// Which side of the cutoff a background point must fall on to be selected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundRule {
    /// `distance >= c_u`.
    #[default]
    Far,
    /// `distance < c_u`.
    Near,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub boundary_budget: usize,
    /// Background distance cutoff, meters.
    pub c_u: f64,
    /// Training batch size drawn from a pool.
    pub n_u: usize,
    pub agg_k: usize,
    pub agg_window: usize,
    pub seed: u64,
    pub background_rule: BackgroundRule,
    pub distance_metric: DistanceMetric,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            boundary_budget: 8192,
            c_u: 1.0,
            n_u: 4096,
            agg_k: 5,
            agg_window: 5,
            seed: 0,
            background_rule: BackgroundRule::Far,
            distance_metric: DistanceMetric::Range,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_u > 0.0) {
            return Err(Error::Config("selection: c_u must be > 0".into()));
        }
        if self.n_u == 0 || self.agg_k == 0 {
            return Err(Error::Config("selection: n_u and agg_k must be >= 1".into()));
        }
        if self.agg_window.is_multiple_of(2) {
            return Err(Error::Config("selection: agg_window must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reason {
    Boundary,
    Background,
    Both,
}

impl Reason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Reason::Boundary => "boundary",
            Reason::Background => "background",
            Reason::Both => "both",
        }
    }
}

/// Selected points with their refiner inputs. Row `i` of `features` belongs to
/// `indices[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertainPointSet {
    pub indices: Vec<usize>,
    pub reasons: Vec<Reason>,
    pub features: Array2<f64>,
    /// Label of each entry before refinement.
    pub coarse_labels: Vec<ClassId>,
    /// Top-2 margin of the entry's pixel.
    pub margins: Vec<f64>,
    /// Distance to the pixel's foreground point, for background points.
    pub distances: Vec<Option<f64>>,
}

impl UncertainPointSet {
    pub fn empty(feature_dim: usize) -> Self {
        Self {
            indices: Vec::new(),
            reasons: Vec::new(),
            features: Array2::zeros((0, feature_dim)),
            coarse_labels: Vec::new(),
            margins: Vec::new(),
            distances: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Entries at `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            indices: rows.iter().map(|&r| self.indices[r]).collect(),
            reasons: rows.iter().map(|&r| self.reasons[r]).collect(),
            features: self.features.select(ndarray::Axis(0), rows),
            coarse_labels: rows.iter().map(|&r| self.coarse_labels[r]).collect(),
            margins: rows.iter().map(|&r| self.margins[r]).collect(),
            distances: rows.iter().map(|&r| self.distances[r]).collect(),
        }
    }

    /// One line per entry: `point_index reason margin distance`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let dist = self.distances[i].map_or("-".to_string(), |d| format!("{d:.6}"));
            let _ = writeln!(
                out,
                "{} {} {:.6} {}",
                self.indices[i],
                self.reasons[i].as_str(),
                self.margins[i],
                dist
            );
        }
        out
    }
}

fn check_shapes(img: &RangeImage, seg: &CoarseSegmentation) -> Result<()> {
    seg.check_shape(img)
}

/// Feature rows for `points`: own geometry, then the renormalized mean
/// probability vector of the `agg_k` window foregrounds nearest in range.
pub fn aggregate_features(
    img: &RangeImage,
    seg: &CoarseSegmentation,
    cfg: &SelectionConfig,
    points: &[usize],
) -> Result<Array2<f64>> {
    check_shapes(img, seg)?;
    let c = seg.num_classes();
    let mut out = Array2::zeros((points.len(), NUM_GEOMETRY + c));
    let mut buf: Vec<Candidate> = Vec::new();
    let mut acc = vec![0.0; c];
    for (row, &p) in points.iter().enumerate() {
        if p >= img.num_points() {
            return Err(Error::Input(format!("point index {p} out of range")));
        }
        nearest_in_window(img, p, cfg.agg_window, cfg.agg_k, &mut buf);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for cand in &buf {
            for (a, &q) in acc.iter_mut().zip(seg.probs(cand.pixel)) {
                *a += q;
            }
        }
        let n = buf.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        let s: f64 = acc.iter().sum();
        if s > 0.0 {
            acc.iter_mut().for_each(|a| *a /= s);
        }
        let xyz = img.point_xyz(p);
        let mut r = out.row_mut(row);
        r[0] = xyz[0];
        r[1] = xyz[1];
        r[2] = xyz[2];
        r[3] = img.point_range(p);
        r[4] = img.point_remission(p);
        for (k, &a) in acc.iter().enumerate() {
            r[NUM_GEOMETRY + k] = a;
        }
    }
    Ok(out)
}

/// Boundary selection: exactly `min(budget, num_points)` indices in selection order.
pub fn select_boundary(img: &RangeImage, seg: &CoarseSegmentation, cfg: &SelectionConfig) -> Result<Vec<usize>> {
    check_shapes(img, seg)?;
    let budget = cfg.boundary_budget.min(img.num_points());
    if budget == 0 {
        return Ok(Vec::new());
    }
    let margins = top2_margin(seg)?;
    let mut order: Vec<usize> = (0..img.num_pixels()).filter(|&p| img.is_valid(p)).collect();
    order.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
    let (offsets, by_pixel) = img.points_by_pixel();

    let mut selected = Vec::with_capacity(budget);
    let mut stratum = Vec::new();
    let mut i = 0;
    while i < order.len() && selected.len() < budget {
        let m = margins[order[i]];
        stratum.clear();
        while i < order.len() && margins[order[i]] == m {
            let pix = order[i];
            stratum.extend_from_slice(&by_pixel[offsets[pix]..offsets[pix + 1]]);
            i += 1;
        }
        let room = budget - selected.len();
        if stratum.len() <= room {
            selected.extend_from_slice(&stratum);
        } else {
            let mut rng = rng::stream(cfg.seed, &[BOUNDARY_STREAM]);
            let mut picks = index::sample(&mut rng, stratum.len(), room).into_vec();
            picks.sort_unstable();
            selected.extend(picks.into_iter().map(|k| stratum[k]));
        }
    }
    Ok(selected)
}

/// Background points on the selected side of the `c_u` cutoff, ascending index.
pub fn select_background(img: &RangeImage, cfg: &SelectionConfig) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for p in (0..img.num_points()).filter(|&p| !img.is_foreground(p)) {
        let d = background_distance(img, p, cfg.distance_metric)?;
        let keep = match cfg.background_rule {
            BackgroundRule::Far => d >= cfg.c_u,
            BackgroundRule::Near => d < cfg.c_u,
        };
        if keep {
            out.push(p);
        }
    }
    Ok(out)
}

/// Union of both strategies, ascending point index, with features attached.
/// `current_labels` are the per-point labels the refiner would overwrite.
pub fn build_pool(
    img: &RangeImage,
    seg: &CoarseSegmentation,
    cfg: &SelectionConfig,
    current_labels: &[ClassId],
) -> Result<UncertainPointSet> {
    cfg.validate()?;
    if current_labels.len() != img.num_points() {
        return Err(Error::shape("current labels", img.num_points(), current_labels.len()));
    }
    let mut tag: Vec<Option<Reason>> = vec![None; img.num_points()];
    for p in select_boundary(img, seg, cfg)? {
        tag[p] = Some(Reason::Boundary);
    }
    for p in select_background(img, cfg)? {
        tag[p] = Some(match tag[p] {
            Some(Reason::Boundary) => Reason::Both,
            _ => Reason::Background,
        });
    }
    let indices: Vec<usize> = (0..img.num_points()).filter(|&p| tag[p].is_some()).collect();
    let margins_px = top2_margin(seg)?;
    let features = aggregate_features(img, seg, cfg, &indices)?;
    let distances = indices
        .iter()
        .map(|&p| {
            (!img.is_foreground(p))
                .then(|| background_distance(img, p, cfg.distance_metric))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UncertainPointSet {
        reasons: indices.iter().map(|&p| tag[p].unwrap()).collect(),
        coarse_labels: indices.iter().map(|&p| current_labels[p]).collect(),
        margins: indices.iter().map(|&p| margins_px[img.point_pixel_index(p)]).collect(),
        distances,
        features,
        indices,
    })
}

/// `n_u` entries drawn uniformly without replacement (all of them if the pool
/// is smaller), kept in pool order.
pub fn sample_training_batch(pool: &UncertainPointSet, n_u: usize, seed: u64) -> Result<UncertainPointSet> {
    if pool.is_empty() {
        return Err(Error::Input("cannot sample from an empty pool".into()));
    }
    if n_u >= pool.len() {
        return Ok(pool.clone());
    }
    Ok(pool.select(&sample_rows(pool.len(), n_u, seed)))
}

/// Sorted row indices of a uniform `n_u`-subset of `0..len` (all rows when
/// `n_u >= len`). The same rows [`sample_training_batch`] keeps.
pub fn sample_rows(len: usize, n_u: usize, seed: u64) -> Vec<usize> {
    if n_u >= len {
        return (0..len).collect();
    }
    let mut rng = rng::stream(seed, &[SAMPLE_STREAM]);
    let mut rows = index::sample(&mut rng, len, n_u).into_vec();
    rows.sort_unstable();
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::CoarseSource;
    use crate::kitti_io::{Point, PointCloud};
    use crate::projection::{project, ProjectionConfig};

    fn pcfg(w: usize, h: usize) -> ProjectionConfig {
        ProjectionConfig {
            width: w,
            height: h,
            fov_up: 3.0,
            fov_down: -25.0,
        }
    }

    /// Point at the center of pixel `(u, v)` at range `r`.
    fn at_pixel(cfg: &ProjectionConfig, u: usize, v: usize, r: f64) -> Point {
        let az = std::f64::consts::PI * (1.0 - 2.0 * (u as f64 + 0.5) / cfg.width as f64);
        let span = cfg.fov_up - cfg.fov_down;
        let el = (cfg.fov_up - (v as f64 + 0.5) * span / cfg.height as f64).to_radians();
        Point::new(
            (r * el.cos() * az.cos()) as f32,
            (r * el.cos() * az.sin()) as f32,
            (r * el.sin()) as f32,
            0.5,
        )
    }

    fn seg_from(h: usize, w: usize, c: usize, f: impl Fn(usize) -> Vec<f64>) -> CoarseSegmentation {
        let probs = (0..h * w).flat_map(f).collect();
        CoarseSegmentation::new(h, w, c, probs, CoarseSource::Loaded).unwrap()
    }

    #[test]
    fn uniform_seg_gives_identical_class_slices() {
        let cfg = pcfg(8, 4);
        let pts = vec![at_pixel(&cfg, 2, 1, 5.0), at_pixel(&cfg, 2, 1, 8.0), at_pixel(&cfg, 3, 1, 6.0)];
        let img = project(&PointCloud::new(pts), &cfg).unwrap();
        let q = vec![0.2, 0.5, 0.3];
        let seg = seg_from(4, 8, 3, |_| q.clone()).masked_by(&img).unwrap();
        let f = aggregate_features(&img, &seg, &SelectionConfig::default(), &[0, 1, 2]).unwrap();
        for row in f.rows() {
            for k in 0..3 {
                assert!((row[NUM_GEOMETRY + k] - q[k]).abs() < 1e-15);
            }
        }
        // Same-ray points differ only in geometry.
        assert_ne!(f[[0, 3]], f[[1, 3]]);
        assert_eq!(f.row(0).len(), NUM_GEOMETRY + 3);
    }

    #[test]
    fn two_candidate_mean() {
        let cfg = pcfg(8, 4);
        let pts = vec![at_pixel(&cfg, 2, 1, 5.0), at_pixel(&cfg, 3, 1, 5.5)];
        let img = project(&PointCloud::new(pts), &cfg).unwrap();
        let p0 = img.point_pixel_index(0);
        let seg = seg_from(4, 8, 2, |p| if p == p0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .masked_by(&img)
            .unwrap();
        let f = aggregate_features(&img, &seg, &SelectionConfig::default(), &[0]).unwrap();
        assert_eq!(f[[0, 5]], 0.5);
        assert_eq!(f[[0, 6]], 0.5);
    }

    #[test]
    fn low_margin_pixel_points_come_first() {
        let cfg = pcfg(8, 4);
        let mut pts: Vec<Point> = (0..8).map(|u| at_pixel(&cfg, u, 0, 10.0)).collect();
        // Three points on pixel (5, 2).
        pts.extend([4.0, 6.0, 9.0].map(|r| at_pixel(&cfg, 5, 2, r)));
        let img = project(&PointCloud::new(pts), &cfg).unwrap();
        let hot = img.point_pixel_index(8);
        let seg = seg_from(4, 8, 2, |p| if p == hot { vec![0.5, 0.5] } else { vec![1.0, 0.0] })
            .masked_by(&img)
            .unwrap();
        let sel = SelectionConfig::default();
        let picked = select_boundary(&img, &seg, &sel).unwrap();
        assert_eq!(picked.len(), 11);
        assert_eq!(&picked[..3], &[8, 9, 10]);

        let none = SelectionConfig { boundary_budget: 0, ..sel };
        assert!(select_boundary(&img, &seg, &none).unwrap().is_empty());
    }

    #[test]
    fn distinct_margins_pick_lowest_regardless_of_seed() {
        let cfg = pcfg(10, 1);
        let pts: Vec<Point> = (0..10).map(|u| at_pixel(&cfg, u, 0, 10.0)).collect();
        let img = project(&PointCloud::new(pts), &cfg).unwrap();
        // Margin of pixel u is |1 - 2 p0| with p0 chosen so margins are a shuffled ramp.
        let margin_of = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0];
        let seg = seg_from(1, 10, 2, |p| {
            let m = margin_of[p];
            vec![0.5 + m / 2.0, 0.5 - m / 2.0]
        });
        // Independent oracle: point of each pixel, sorted by the hand-set margins.
        let mut by_margin: Vec<usize> = (0..10).collect();
        by_margin.sort_by(|&a, &b| margin_of[a].partial_cmp(&margin_of[b]).unwrap());
        let mut want: Vec<usize> = by_margin[..4]
            .iter()
            .map(|&pix| (0..10).find(|&i| img.point_pixel_index(i) == pix).unwrap())
            .collect();
        want.sort_unstable();
        for seed in 0..5 {
            let sel = SelectionConfig { boundary_budget: 4, seed, ..Default::default() };
            let mut got = select_boundary(&img, &seg, &sel).unwrap();
            got.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn background_cutoff() {
        let cfg = pcfg(8, 4);
        let pts = vec![
            at_pixel(&cfg, 1, 1, 5.0),
            at_pixel(&cfg, 1, 1, 9.0),
            at_pixel(&cfg, 4, 2, 5.0),
            at_pixel(&cfg, 4, 2, 5.5),
        ];
        let img = project(&PointCloud::new(pts), &cfg).unwrap();
        let sel = SelectionConfig::default();
        assert_eq!(select_background(&img, &sel).unwrap(), vec![1]);
        let near = SelectionConfig { background_rule: BackgroundRule::Near, ..sel };
        assert_eq!(select_background(&img, &near).unwrap(), vec![3]);

        let solo = project(&PointCloud::new(vec![at_pixel(&cfg, 1, 1, 5.0)]), &cfg).unwrap();
        assert!(select_background(&solo, &sel).unwrap().is_empty());
    }

    #[test]
    fn pool_union_and_dedupe() {
        let cfg = pcfg(8, 4);
        let mut pts: Vec<Point> = (0..3).map(|u| at_pixel(&cfg, u, 0, 10.0)).collect();
        for u in 4..8 {
            pts.push(at_pixel(&cfg, u, 3, 4.0));
            pts.push(at_pixel(&cfg, u, 3, 8.0));
        }
        let img = project(&PointCloud::new(pts), &cfg).unwrap();
        let row0: Vec<usize> = (0..3).map(|i| img.point_pixel_index(i)).collect();
        let seg = seg_from(4, 8, 2, |p| if row0.contains(&p) { vec![0.5, 0.5] } else { vec![1.0, 0.0] })
            .masked_by(&img)
            .unwrap();
        let labels = vec![1; img.num_points()];
        let sel = SelectionConfig { boundary_budget: 3, ..Default::default() };
        let pool = build_pool(&img, &seg, &sel, &labels).unwrap();
        // 3 boundary + 4 background.
        assert_eq!(pool.len(), 7);
        assert_eq!(pool.indices, vec![0, 1, 2, 4, 6, 8, 10]);
        assert!(pool.reasons[..3].iter().all(|r| *r == Reason::Boundary));
        assert!(pool.reasons[3..].iter().all(|r| *r == Reason::Background));
        assert_eq!(pool.distances[3], Some(img.point_range(4) - img.point_range(3)));

        // Boundary budget large enough to also cover every background point.
        let seg_all = seg_from(4, 8, 2, |_| vec![0.5, 0.5]).masked_by(&img).unwrap();
        let both = build_pool(&img, &seg_all, &SelectionConfig::default(), &labels).unwrap();
        assert_eq!(both.len(), img.num_points());
        for (i, &p) in both.indices.iter().enumerate() {
            let want = if img.is_foreground(p) { Reason::Boundary } else { Reason::Both };
            assert_eq!(both.reasons[i], want);
        }
        assert!(pool.dump().lines().next().unwrap().starts_with("0 boundary 0.000000 -"));
    }

    #[test]
    fn sampling_rules() {
        let mk = |n: usize| UncertainPointSet {
            indices: (0..n).collect(),
            reasons: vec![Reason::Boundary; n],
            features: Array2::zeros((n, 7)),
            coarse_labels: vec![0; n],
            margins: vec![0.0; n],
            distances: vec![None; n],
        };
        assert_eq!(sample_training_batch(&mk(10), 4096, 1).unwrap().len(), 10);
        let big = mk(8192);
        let s = sample_training_batch(&big, 4096, 1).unwrap();
        assert_eq!(s.len(), 4096);
        let mut u = s.indices.clone();
        u.dedup();
        assert_eq!(u.len(), 4096);
        assert_eq!(s, sample_training_batch(&big, 4096, 1).unwrap());
        assert_ne!(s.indices, sample_training_batch(&big, 4096, 2).unwrap().indices);
        assert!(sample_training_batch(&mk(0), 4, 1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sampled_rows_are_sorted_distinct_and_sized(len in 0usize..500, n_u in 1usize..600, seed in any::<u64>()) {
                let rows = sample_rows(len, n_u, seed);
                prop_assert_eq!(rows.len(), len.min(n_u));
                prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(rows.iter().all(|&r| r < len));
                prop_assert_eq!(rows, sample_rows(len, n_u, seed));
            }
        }
    }
}
