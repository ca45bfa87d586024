//! Per-pixel class probabilities standing in for a backbone's softmax output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti_io::{write_atomic, ClassId};
use crate::projection::{LabelImage, RangeImage};
use crate::rng;

/// Allowed deviation of a loaded vector's sum from 1 before renormalization.
pub const LOAD_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseSource {
    Loaded,
    Oracle,
}

/// `H x W x C` probabilities, row-major `(v, u, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseSegmentation {
    height: usize,
    width: usize,
    num_classes: usize,
    probs: Vec<f64>,
    valid: Vec<bool>,
    pub source: CoarseSource,
}

impl CoarseSegmentation {
    pub fn new(
        height: usize,
        width: usize,
        num_classes: usize,
        probs: Vec<f64>,
        source: CoarseSource,
    ) -> Result<Self> {
        if probs.len() != height * width * num_classes {
            return Err(Error::shape(
                "coarse probabilities",
                height * width * num_classes,
                probs.len(),
            ));
        }
        Ok(Self {
            height,
            width,
            num_classes,
            probs,
            valid: vec![true; height * width],
            source,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn probs(&self, pixel: usize) -> &[f64] {
        &self.probs[pixel * self.num_classes..(pixel + 1) * self.num_classes]
    }

    #[inline]
    pub fn is_valid(&self, pixel: usize) -> bool {
        self.valid[pixel]
    }

    pub fn raw(&self) -> &[f64] {
        &self.probs
    }

    pub fn check_shape(&self, img: &RangeImage) -> Result<()> {
        if self.height != img.height() || self.width != img.width() {
            return Err(Error::shape(
                "coarse segmentation",
                format!("{}x{}", img.height(), img.width()),
                format!("{}x{}", self.height, self.width),
            ));
        }
        Ok(())
    }

    /// Restricts validity to the image's occupied pixels. Fails if an occupied
    /// pixel carries no probabilities.
    pub fn masked_by(mut self, img: &RangeImage) -> Result<Self> {
        self.check_shape(img)?;
        let mask = img.valid_mask();
        if let Some(p) = (0..mask.len()).find(|&p| mask[p] && !self.valid[p]) {
            return Err(Error::Input(format!("coarse pixel {p} is occupied but has no probabilities")));
        }
        self.valid = mask;
        Ok(self)
    }

    /// Per-pixel argmax (ties to the smaller class id); `fill` on invalid pixels.
    pub fn argmax_labels(&self, fill: ClassId) -> LabelImage {
        let labels = (0..self.height * self.width)
            .map(|p| {
                if self.valid[p] {
                    argmax(self.probs(p)) as ClassId
                } else {
                    fill
                }
            })
            .collect();
        LabelImage {
            width: self.width,
            height: self.height,
            labels,
        }
    }

    /// Raw little-endian `f32` dump in `(v, u, c)` order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.probs
            .iter()
            .flat_map(|&p| (p as f32).to_le_bytes())
            .collect()
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = c;
        }
    }
    best
}

/// Index of the largest and of the second largest entry, ties to lower index.
fn top2(p: &[f64]) -> (usize, usize) {
    let first = argmax(p);
    let mut second = if first == 0 { 1 } else { 0 };
    for (c, &v) in p.iter().enumerate() {
        if c != first && v > p[second] {
            second = c;
        }
    }
    (first, second)
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        p.iter_mut().for_each(|v| *v /= s);
    }
}

pub fn decode_coarse(bytes: &[u8], height: usize, width: usize, num_classes: usize) -> Result<CoarseSegmentation> {
    let expected = height * width * num_classes * 4;
    if bytes.len() != expected {
        return Err(Error::shape("coarse file bytes", expected, bytes.len()));
    }
    let mut probs: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let mut empty = Vec::new();
    for (pixel, p) in probs.chunks_exact_mut(num_classes.max(1)).enumerate() {
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Input(format!(
                "coarse pixel {pixel}: non-finite or negative probability"
            )));
        }
        let s: f64 = p.iter().sum();
        // All zeros marks an empty pixel.
        if s == 0.0 {
            empty.push(pixel);
            continue;
        }
        if (s - 1.0).abs() > LOAD_SUM_TOLERANCE {
            return Err(Error::Input(format!(
                "coarse pixel {pixel}: probabilities sum to {s}"
            )));
        }
        normalize(p);
    }
    let mut seg = CoarseSegmentation::new(height, width, num_classes, probs, CoarseSource::Loaded)?;
    for p in empty {
        seg.valid[p] = false;
    }
    Ok(seg)
}

/// Loads a raw `f32` probability map exported by a backbone.
pub fn load_coarse(path: &Path, height: usize, width: usize, num_classes: usize) -> Result<CoarseSegmentation> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_coarse(&bytes, height, width, num_classes)
}

pub fn write_coarse(seg: &CoarseSegmentation, path: &Path) -> Result<()> {
    write_atomic(path, &seg.to_bytes())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoiseSpec {
    /// Box-blur radius in pixels.
    pub blur_radius: usize,
    /// Per-pixel probability of swapping the top-2 classes.
    pub flip_rate: f64,
    /// Power transform `p^(1/T)`; `T < 1` sharpens, `T > 1` flattens.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for OracleNoiseSpec {
    fn default() -> Self {
        Self {
            blur_radius: 2,
            flip_rate: 0.05,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl OracleNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.flip_rate) {
            return Err(Error::Config("oracle: flip_rate must be in [0, 1)".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("oracle: temperature must be > 0".into()));
        }
        Ok(())
    }
}

/// Noisy stand-in for a frozen backbone: one-hot foreground ground truth,
/// box-blurred over valid pixels, top-2 swapped at `flip_rate`, then tempered.
pub fn oracle_coarse(
    img: &RangeImage,
    gt_labels: &[ClassId],
    num_classes: usize,
    spec: &OracleNoiseSpec,
) -> Result<CoarseSegmentation> {
    spec.validate()?;
    if gt_labels.len() != img.num_points() {
        return Err(Error::shape("ground-truth labels", img.num_points(), gt_labels.len()));
    }
    if let Some(&bad) = gt_labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::ClassOutOfRange {
            id: bad as u32,
            num_classes,
        });
    }
    let (h, w, c) = (img.height(), img.width(), num_classes);
    let fg_label: Vec<Option<ClassId>> = (0..h * w)
        .map(|p| img.foreground(p).map(|i| gt_labels[i]))
        .collect();

    let r = spec.blur_radius as i64;
    let mut probs = vec![0.0; h * w * c];
    for v in 0..h as i64 {
        for u in 0..w as i64 {
            let pix = (v * w as i64 + u) as usize;
            if fg_label[pix].is_none() {
                continue;
            }
            let out = &mut probs[pix * c..(pix + 1) * c];
            let mut count = 0usize;
            for vv in (v - r).max(0)..=(v + r).min(h as i64 - 1) {
                for uu in (u - r).max(0)..=(u + r).min(w as i64 - 1) {
                    if let Some(l) = fg_label[(vv * w as i64 + uu) as usize] {
                        out[l as usize] += 1.0;
                        count += 1;
                    }
                }
            }
            let inv = 1.0 / count as f64;
            out.iter_mut().for_each(|x| *x *= inv);

            if c >= 2 && rng::unit(spec.seed, &[v as u64, u as u64]) < spec.flip_rate {
                let (a, b) = top2(out);
                out.swap(a, b);
            }
            if spec.temperature != 1.0 {
                let e = 1.0 / spec.temperature;
                out.iter_mut().for_each(|x| *x = x.powf(e));
                normalize(out);
            }
        }
    }
    let mut seg = CoarseSegmentation::new(h, w, c, probs, CoarseSource::Oracle)?;
    seg.valid = img.valid_mask();
    Ok(seg)
}

/// Largest minus second-largest probability per pixel; `+inf` on invalid pixels.
pub fn top2_margin(seg: &CoarseSegmentation) -> Result<Vec<f64>> {
    if seg.num_classes < 2 {
        return Err(Error::Input("top-2 margin needs at least two classes".into()));
    }
    Ok((0..seg.height * seg.width)
        .map(|p| {
            if !seg.valid[p] {
                return f64::INFINITY;
            }
            let probs = seg.probs(p);
            let (a, b) = top2(probs);
            probs[a] - probs[b]
        })
        .collect())
}
