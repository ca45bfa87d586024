//! Confusion matrix, per-class IoU, mIoU and overall accuracy.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kitti_io::{ClassId, ClassMap};

/// Rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    ignore: Option<ClassId>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize, ignore: Option<ClassId>) -> Self {
        Self {
            num_classes,
            ignore,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Builds from explicit rows of counts.
    pub fn from_counts(rows: &[Vec<u64>], ignore: Option<ClassId>) -> Result<Self> {
        let c = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != c) {
            return Err(Error::shape("confusion row", c, r.len()));
        }
        Ok(Self {
            num_classes: c,
            ignore,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ignore(&self) -> Option<ClassId> {
        self.ignore
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts `(gt, pred)` pairs, skipping points whose ground truth is ignored.
    pub fn accumulate(&mut self, gt: &[ClassId], pred: &[ClassId]) -> Result<()> {
        if gt.len() != pred.len() {
            return Err(Error::shape("predictions", gt.len(), pred.len()));
        }
        let c = self.num_classes;
        if let Some(&bad) = gt.iter().chain(pred).find(|&&x| x as usize >= c) {
            return Err(Error::ClassOutOfRange {
                id: bad as u32,
                num_classes: c,
            });
        }
        for (&g, &p) in gt.iter().zip(pred) {
            if Some(g) != self.ignore {
                self.counts[g as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::shape("confusion matrix", self.num_classes, other.num_classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)` per class; `None` for the ignore class and for
    /// classes absent from both ground truth and predictions.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        let c = self.num_classes;
        (0..c)
            .map(|k| {
                if Some(k as ClassId) == self.ignore {
                    return None;
                }
                let tp = self.get(k, k);
                let row: u64 = (0..c).map(|j| self.get(k, j)).sum();
                let col: u64 = (0..c).map(|i| self.get(i, k)).sum();
                let denom = row + col - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IoU over classes with a non-zero denominator.
    pub fn miou(&self) -> Result<f64> {
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            return Err(Error::Input("mIoU of an empty confusion matrix".into()));
        }
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }

    /// Fraction of counted points on the diagonal.
    pub fn oacc(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Input("accuracy of an empty confusion matrix".into()));
        }
        let trace: u64 = (0..self.num_classes).map(|k| self.get(k, k)).sum();
        Ok(trace as f64 / total as f64)
    }

    /// Human-readable table of per-class IoU followed by mIoU and oACC.
    pub fn report(&self, map: Option<&ClassMap>) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "{:<16} {:>8}", "class", "IoU").unwrap();
        for (k, iou) in self.per_class_iou().iter().enumerate() {
            let name = class_name(map, k);
            match iou {
                Some(v) => writeln!(s, "{name:<16} {:>8.4}", v).unwrap(),
                None => writeln!(s, "{name:<16} {:>8}", "-").unwrap(),
            }
        }
        writeln!(s, "{:<16} {:>8.4}", "mIoU", self.miou()?).unwrap();
        writeln!(s, "{:<16} {:>8.4}", "oACC", self.oacc()?).unwrap();
        Ok(s)
    }

    /// `key=value` lines: `miou`, `oacc`, `points`, then `iou.<name>` for each
    /// class with a defined IoU.
    pub fn key_values(&self, map: Option<&ClassMap>) -> Result<String> {
        let mut s = String::new();
        writeln!(s, "miou={:.6}", self.miou()?).unwrap();
        writeln!(s, "oacc={:.6}", self.oacc()?).unwrap();
        writeln!(s, "points={}", self.total()).unwrap();
        for (k, iou) in self.per_class_iou().iter().enumerate() {
            if let Some(v) = iou {
                writeln!(s, "iou.{}={v:.6}", class_name(map, k)).unwrap();
            }
        }
        Ok(s)
    }
}

fn class_name(map: Option<&ClassMap>, k: usize) -> String {
    match map {
        Some(m) if k < m.num_classes() => m.name(k as ClassId).to_string(),
        _ => k.to_string(),
    }
}
