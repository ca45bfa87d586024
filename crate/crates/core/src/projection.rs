//! Spherical projection of a scan onto a 5-channel range image.
//!
//! Azimuth maps to columns and elevation to rows. Each pixel keeps the point with
//! the smallest range (lowest index on ties) as its foreground; every other point
//! landing on the same pixel is a background point. The image keeps the full
//! point <-> pixel bookkeeping needed to carry labels back to the cloud.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti_io::{write_atomic, ClassId, PointCloud};

/// Channel order of [`RangeImage::channels`].
pub const CH_X: usize = 0;
pub const CH_Y: usize = 1;
pub const CH_Z: usize = 2;
pub const CH_RANGE: usize = 3;
pub const CH_REMISSION: usize = 4;
pub const NUM_CHANNELS: usize = 5;

const MIN_RANGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub width: usize,
    pub height: usize,
    /// Degrees above the horizon.
    pub fov_up: f64,
    /// Degrees, negative below the horizon.
    pub fov_down: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            width: 2048,
            height: 64,
            fov_up: 3.0,
            fov_down: -25.0,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("projection: width and height must be >= 1".into()));
        }
        if !(self.fov_up > self.fov_down) {
            return Err(Error::Config("projection: fov_up must exceed fov_down".into()));
        }
        Ok(())
    }

    /// Pixel `(u, v)` of a direction; both clamped into the image.
    pub fn pixel_of(&self, x: f64, y: f64, z: f64, range: f64) -> Pixel {
        let fov_up = self.fov_up.to_radians();
        let fov_down = self.fov_down.to_radians();
        let fov = fov_up - fov_down;
        let u = (0.5 * (1.0 - y.atan2(x) / PI) * self.width as f64).floor();
        let v = ((1.0 - ((z / range).asin() - fov_down) / fov) * self.height as f64).floor();
        let clamp = |f: f64, n: usize| f.max(0.0).min((n - 1) as f64) as u32;
        Pixel {
            u: clamp(u, self.width),
            v: clamp(v, self.height),
        }
    }
}

/// Column `u`, row `v`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub u: u32,
    pub v: u32,
}

/// Which quantity [`background_distance`] measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `|range(p) - range(foreground)|`.
    #[default]
    Range,
    /// Straight-line distance between the two points.
    Euclidean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    width: usize,
    height: usize,
    channels: Vec<[f64; NUM_CHANNELS]>,
    fg_point_index: Vec<Option<u32>>,
    point_pixel: Vec<Pixel>,
    point_range: Vec<f64>,
    point_xyz: Vec<[f64; 3]>,
    point_remission: Vec<f64>,
    is_foreground: Vec<bool>,
}

impl RangeImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn num_points(&self) -> usize {
        self.point_pixel.len()
    }

    /// Row-major linear index of `(u, v)`.
    #[inline]
    pub fn pixel_index(&self, px: Pixel) -> usize {
        px.v as usize * self.width + px.u as usize
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> Pixel {
        Pixel {
            u: (index % self.width) as u32,
            v: (index / self.width) as u32,
        }
    }

    #[inline]
    pub fn is_valid(&self, pixel_index: usize) -> bool {
        self.fg_point_index[pixel_index].is_some()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.fg_point_index.iter().map(Option::is_some).collect()
    }

    /// Channels `(x, y, z, range, remission)` of a pixel; zeros where invalid.
    #[inline]
    pub fn channels(&self, pixel_index: usize) -> &[f64; NUM_CHANNELS] {
        &self.channels[pixel_index]
    }

    #[inline]
    pub fn foreground(&self, pixel_index: usize) -> Option<usize> {
        self.fg_point_index[pixel_index].map(|i| i as usize)
    }

    #[inline]
    pub fn point_pixel(&self, point: usize) -> Pixel {
        self.point_pixel[point]
    }

    #[inline]
    pub fn point_pixel_index(&self, point: usize) -> usize {
        self.pixel_index(self.point_pixel[point])
    }

    #[inline]
    pub fn point_range(&self, point: usize) -> f64 {
        self.point_range[point]
    }

    #[inline]
    pub fn is_foreground(&self, point: usize) -> bool {
        self.is_foreground[point]
    }

    #[inline]
    pub fn point_xyz(&self, point: usize) -> [f64; 3] {
        self.point_xyz[point]
    }

    #[inline]
    pub fn point_remission(&self, point: usize) -> f64 {
        self.point_remission[point]
    }

    pub fn point_ranges(&self) -> &[f64] {
        &self.point_range
    }

    /// Points grouped by pixel, ascending point index within each pixel,
    /// as CSR `(offsets, points)` with `offsets.len() == num_pixels + 1`.
    pub fn points_by_pixel(&self) -> (Vec<usize>, Vec<usize>) {
        let mut offsets = vec![0usize; self.num_pixels() + 1];
        for &px in &self.point_pixel {
            offsets[self.pixel_index(px) + 1] += 1;
        }
        for i in 0..self.num_pixels() {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut points = vec![0usize; self.num_points()];
        for (i, &px) in self.point_pixel.iter().enumerate() {
            let slot = &mut cursor[self.pixel_index(px)];
            points[*slot] = i;
            *slot += 1;
        }
        (offsets, points)
    }
}

/// Projects `cloud` into a range image.
pub fn project(cloud: &PointCloud, cfg: &ProjectionConfig) -> Result<RangeImage> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::Input("cannot project an empty cloud".into()));
    }
    let n = cloud.len();
    let mut point_pixel = Vec::with_capacity(n);
    let mut point_range = Vec::with_capacity(n);
    let mut point_xyz = Vec::with_capacity(n);
    let mut point_remission = Vec::with_capacity(n);
    for (index, p) in cloud.points.iter().enumerate() {
        let r = p.range();
        if !(r > MIN_RANGE) {
            return Err(Error::PointAtOrigin { index });
        }
        point_pixel.push(cfg.pixel_of(p.x as f64, p.y as f64, p.z as f64, r));
        point_range.push(r);
        point_xyz.push([p.x as f64, p.y as f64, p.z as f64]);
        point_remission.push(p.remission as f64);
    }

    let num_pixels = cfg.width * cfg.height;
    let mut fg_point_index: Vec<Option<u32>> = vec![None; num_pixels];
    // Scanning in index order with a strict `<` keeps the lowest index on ties.
    for (i, (&px, &r)) in point_pixel.iter().zip(&point_range).enumerate() {
        let slot = &mut fg_point_index[px.v as usize * cfg.width + px.u as usize];
        match *slot {
            Some(cur) if point_range[cur as usize] <= r => {}
            _ => *slot = Some(i as u32),
        }
    }

    let mut is_foreground = vec![false; n];
    let mut channels = vec![[0.0; NUM_CHANNELS]; num_pixels];
    for (pix, fg) in fg_point_index.iter().enumerate() {
        if let Some(i) = *fg {
            let i = i as usize;
            is_foreground[i] = true;
            let p = &cloud.points[i];
            channels[pix] = [
                p.x as f64,
                p.y as f64,
                p.z as f64,
                point_range[i],
                p.remission as f64,
            ];
        }
    }

    Ok(RangeImage {
        width: cfg.width,
        height: cfg.height,
        channels,
        fg_point_index,
        point_pixel,
        point_range,
        point_xyz,
        point_remission,
        is_foreground,
    })
}

/// Distance between a background point and the foreground point of its pixel.
pub fn background_distance(img: &RangeImage, point: usize, metric: DistanceMetric) -> Result<f64> {
    if point >= img.num_points() {
        return Err(Error::Input(format!("point index {point} out of range")));
    }
    if img.is_foreground(point) {
        return Err(Error::Input(format!("point {point} is a foreground point")));
    }
    let pix = img.point_pixel_index(point);
    let fg = img.foreground(pix).expect("every point's pixel is valid");
    Ok(match metric {
        DistanceMetric::Range => (img.point_range(point) - img.point_range(fg)).abs(),
        DistanceMetric::Euclidean => {
            let (a, b) = (img.point_xyz(point), img.point_xyz(fg));
            let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        }
    })
}

/// Per-pixel class ids over an image grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<ClassId>,
}

impl LabelImage {
    pub fn filled(width: usize, height: usize, label: ClassId) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn check_shape(&self, img: &RangeImage) -> Result<()> {
        if self.width != img.width()
            || self.height != img.height()
            || self.labels.len() != img.num_pixels()
        {
            return Err(Error::shape(
                "pixel labels",
                format!("{}x{}", img.height(), img.width()),
                format!("{}x{} ({} entries)", self.height, self.width, self.labels.len()),
            ));
        }
        Ok(())
    }

    /// Labels each valid pixel with its foreground point's label, others with `fill`.
    pub fn from_foreground(img: &RangeImage, point_labels: &[ClassId], fill: ClassId) -> Self {
        let labels = (0..img.num_pixels())
            .map(|p| img.foreground(p).map_or(fill, |i| point_labels[i]))
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            labels,
        }
    }
}

/// Every point inherits the label of its pixel.
pub fn back_project_labels(img: &RangeImage, pixel_labels: &LabelImage) -> Result<Vec<ClassId>> {
    pixel_labels.check_shape(img)?;
    Ok((0..img.num_points())
        .map(|i| pixel_labels.labels[img.point_pixel_index(i)])
        .collect())
}

/// Binary 16-bit PGM of the range channel in millimeters (saturating); invalid
/// pixels are 0.
pub fn range_pgm(img: &RangeImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for pix in 0..img.num_pixels() {
        let mm = if img.is_valid(pix) {
            (img.channels(pix)[CH_RANGE] * 1000.0).round().min(65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&mm.to_be_bytes());
    }
    out
}

pub fn write_range_pgm(img: &RangeImage, path: &Path) -> Result<()> {
    write_atomic(path, &range_pgm(img))
}
