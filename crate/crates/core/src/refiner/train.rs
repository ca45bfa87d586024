use std::fmt;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{argmax_row, class_weights_from_counts};
use super::model::{FeatureNorm, RefinerModel};
use crate::error::{Error, Result};
use crate::kitti_io::ClassId;
use crate::rng;
use crate::uncertainty::{sample_rows, UncertainPointSet};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const CHUNK_STREAM: u64 = 0x4348_4e4b;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Per-class cross-entropy weights; derived from target frequencies when absent.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_classes: usize, ignore: Option<ClassId>) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be > 0".into()));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != num_classes {
                return Err(Error::Config(format!(
                    "{} class weights for {num_classes} classes",
                    w.len()
                )));
            }
            for (c, &x) in w.iter().enumerate() {
                if Some(c as ClassId) != ignore && !(x > 0.0 && x.is_finite()) {
                    return Err(Error::Config(format!("class weight {c} must be > 0, got {x}")));
                }
            }
        }
        Ok(())
    }
}

/// One scan's pool and the ground-truth class of each pool entry.
#[derive(Clone, Debug)]
pub struct TrainingScan {
    pub scan_id: String,
    pub pool: UncertainPointSet,
    pub targets: Vec<ClassId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wce: f64,
    pub lovasz: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:.6} {:.6} {:.6}", self.epoch, self.mean_loss, self.wce, self.lovasz)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &RefinerModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut RefinerModel, grads: &RefinerModel, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let params = model.param_blocks_mut();
        for (k, (p, g)) in params.into_iter().zip(grads.param_blocks()).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Trains in place: refits the input standardization on every pool, then one
/// Adam step per scan per epoch on an `n_u`-entry sample. Scan order and
/// samples depend only on `cfg.seed`, the epoch and the scan position.
pub fn train(
    model: &mut RefinerModel,
    scans: &[TrainingScan],
    cfg: &TrainConfig,
    n_u: usize,
    ignore: Option<ClassId>,
) -> Result<Vec<EpochLog>> {
    let c = model.dims.num_classes;
    cfg.validate(c, ignore)?;
    if n_u == 0 {
        return Err(Error::Config("n_u must be >= 1".into()));
    }
    for s in scans {
        if s.targets.len() != s.pool.len() {
            return Err(Error::shape("training targets", s.pool.len(), s.targets.len()));
        }
        if s.pool.feature_dim() != model.dims.input_dim {
            return Err(Error::shape("pool features", model.dims.input_dim, s.pool.feature_dim()));
        }
        if let Some(&t) = s.targets.iter().find(|&&t| t as usize >= c) {
            return Err(Error::ClassOutOfRange {
                id: t as u32,
                num_classes: c,
            });
        }
    }
    let usable: Vec<usize> = (0..scans.len())
        .filter(|&i| scans[i].targets.iter().any(|&t| Some(t) != ignore))
        .collect();
    if usable.is_empty() {
        return Err(Error::Input("no scan has a non-empty pool with labeled entries".into()));
    }

    let weights = match &cfg.class_weights {
        Some(w) => w.clone(),
        None => {
            let mut counts = vec![0u64; c];
            for s in scans {
                for &t in &s.targets {
                    counts[t as usize] += 1;
                }
            }
            class_weights_from_counts(&counts, ignore)
        }
    };
    model.norm = FeatureNorm::fit(model.dims.input_dim, scans.iter().map(|s| &s.pool.features));

    let mut adam = Adam::new(model);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let (mut total, mut wce, mut lovasz, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for &si in &order {
            let scan = &scans[si];
            let rows = sample_rows(scan.pool.len(), n_u, rng::mix(cfg.seed, &[epoch as u64, si as u64]));
            let targets: Vec<ClassId> = rows.iter().map(|&r| scan.targets[r]).collect();
            if targets.iter().all(|&t| Some(t) == ignore) {
                continue;
            }
            let features = scan.pool.features.select(Axis(0), &rows);
            let (loss, grads) = model
                .total_loss(&features, &targets, &weights, ignore)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, scan {}: {msg}", scan.scan_id)),
                    other => other,
                })?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, scan {}",
                    scan.scan_id
                )));
            }
            adam.step(model, &grads, cfg);
            total += loss.total;
            wce += loss.wce;
            lovasz += loss.lovasz;
            steps += 1;
        }
        let n = steps.max(1) as f64;
        log.push(EpochLog {
            epoch,
            mean_loss: total / n,
            wce: wce / n,
            lovasz: lovasz / n,
        });
    }
    Ok(log)
}

/// How a pool is split into attention contexts at inference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Pools up to this size are refined in one context.
    pub max_context: usize,
    /// Context size for larger pools, filled from a seeded shuffle.
    pub chunk_size: usize,
    /// Score rows materialized at once inside an attention layer.
    pub score_block: usize,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_context: 16384,
            chunk_size: 4096,
            score_block: 1024,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_context == 0 || self.chunk_size == 0 || self.score_block == 0 {
            return Err(Error::Config("refine context sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Argmax class of every pool entry, ties to the smaller id.
pub fn refine(model: &RefinerModel, pool: &UncertainPointSet, cfg: &RefineConfig) -> Result<Vec<ClassId>> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::Input("cannot refine an empty pool".into()));
    }
    let argmax = |logits: &Array2<f64>| -> Vec<ClassId> {
        logits.rows().into_iter().map(|r| argmax_row(r) as ClassId).collect()
    };
    if pool.len() <= cfg.max_context {
        return Ok(argmax(&model.predict_logits(&pool.features, cfg.score_block)?));
    }
    let mut rows: Vec<usize> = (0..pool.len()).collect();
    rows.shuffle(&mut rng::stream(cfg.seed, &[CHUNK_STREAM, pool.len() as u64]));
    let mut out = vec![0; pool.len()];
    for chunk in rows.chunks(cfg.chunk_size) {
        let labels = argmax(&model.predict_logits(&pool.features.select(Axis(0), chunk), cfg.score_block)?);
        for (&r, l) in chunk.iter().zip(labels) {
            out[r] = l;
        }
    }
    Ok(out)
}
