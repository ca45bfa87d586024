//! Corpus-level stages: synthetic corpus generation, training, refinement,
//! evaluation and export, all driven by one [`PipelineConfig`].
//!
//! A corpus directory mirrors the Semantic-KITTI sequence layout:
//!
//! ```text
//! <dir>/velodyne/<id>.bin   points
//! <dir>/labels/<id>.label   ground truth (optional)
//! <dir>/probs/<id>.bin      coarse probabilities, f32 H x W x C (loaded mode)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{load_coarse, oracle_coarse, write_coarse, CoarseSegmentation, OracleNoiseSpec};
use crate::error::{Error, Result};
use crate::kitti_io::{read_labels, read_point_cloud, write_atomic, write_labels, write_point_cloud, ClassId, ClassMap, PointCloud};
use crate::knn::{knn_refine, KnnConfig};
use crate::metrics::ConfusionMatrix;
use crate::ply::{export_ply, Palette};
use crate::projection::{back_project_labels, project, write_range_pgm, ProjectionConfig, RangeImage};
use crate::refiner::{
    class_weights_from_counts, load_checkpoint, refine, save_checkpoint, train, EpochLog, ModelDims, RefineConfig,
    RefinerModel, TrainConfig, TrainingScan,
};
use crate::rng;
use crate::scene::{generate_scene, SyntheticSceneSpec};
use crate::uncertainty::{build_pool, SelectionConfig};

pub const CHECKPOINT_FILE: &str = "refiner.tupr";
pub const TRAIN_LOG_FILE: &str = "train_log.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_KV_FILE: &str = "report.kv";
pub const PREDICTIONS_DIR: &str = "predictions";

/// Where coarse probabilities come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseMode {
    /// `probs/<id>.bin` exported by a backbone.
    Loaded,
    /// Noisy ground truth; needs labels.
    #[default]
    Oracle,
}

impl std::str::FromStr for CoarseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loaded" => Ok(CoarseMode::Loaded),
            "oracle" => Ok(CoarseMode::Oracle),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected loaded or oracle)"))),
        }
    }
}

/// Hidden widths of the refiner; input and output widths follow the class map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSize {
    pub embed_hidden: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub head_hidden: [usize; 2],
}

impl Default for ModelSize {
    fn default() -> Self {
        let d = ModelDims::for_classes(1);
        Self {
            embed_hidden: d.embed_hidden,
            embed_dim: d.embed_dim,
            num_layers: d.num_layers,
            head_hidden: d.head_hidden,
        }
    }
}

impl ModelSize {
    pub fn dims(&self, num_classes: usize) -> ModelDims {
        ModelDims {
            input_dim: 5 + num_classes,
            embed_hidden: self.embed_hidden,
            embed_dim: self.embed_dim,
            num_layers: self.num_layers,
            head_hidden: self.head_hidden,
            num_classes,
        }
    }
}

/// Synthetic corpus written by `gen`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub scans: usize,
    /// Scan `i` uses scene seed `first_seed + i`.
    pub first_seed: u64,
    pub scene: SyntheticSceneSpec,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            scans: 20,
            first_seed: 0,
            scene: SyntheticSceneSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Corpus directory read by `project`, `train`, `refine` and `export`.
    pub input: PathBuf,
    /// Run directory for outputs.
    pub output: PathBuf,
    /// Checkpoint for `refine`; defaults to `<output>/refiner.tupr`.
    pub checkpoint: Option<PathBuf>,
    /// Class map TOML; the bundled Semantic-KITTI map when absent.
    pub class_map: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            input: PathBuf::from("corpus"),
            output: PathBuf::from("run"),
            checkpoint: None,
            class_map: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: CoarseMode,
    /// Skip the KNN vote; points take their pixel's label directly.
    pub disable_knn: bool,
    /// Skip pool refinement; output equals the KNN stage.
    pub disable_refiner: bool,
    /// Background cutoff used while building training pools. `selection.c_u`
    /// applies at inference only.
    pub train_c_u: f64,
    pub projection: ProjectionConfig,
    pub knn: KnnConfig,
    pub selection: SelectionConfig,
    pub oracle: OracleNoiseSpec,
    pub model: ModelSize,
    pub train: TrainConfig,
    pub refine: RefineConfig,
    pub corpus: CorpusSpec,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: CoarseMode::Oracle,
            disable_knn: false,
            disable_refiner: false,
            train_c_u: 1.0,
            projection: ProjectionConfig::default(),
            knn: KnnConfig::default(),
            selection: SelectionConfig::default(),
            oracle: OracleNoiseSpec::default(),
            model: ModelSize::default(),
            train: TrainConfig::default(),
            refine: RefineConfig::default(),
            corpus: CorpusSpec::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        self.knn.validate()?;
        self.selection.validate()?;
        self.oracle.validate()?;
        self.refine.validate()?;
        if !(self.train_c_u > 0.0) {
            return Err(Error::Config("train_c_u must be > 0".into()));
        }
        self.model.dims(2).validate()
    }

    pub fn class_map(&self) -> Result<ClassMap> {
        match &self.paths.class_map {
            Some(p) => ClassMap::from_file(p),
            None => Ok(ClassMap::semantic_kitti()),
        }
    }

    /// Laptop-sized setup: 64 x 1024 scanner, 64 x 512 projection, N_u = 512,
    /// boundary budget 2048, and refinement contexts of N_u points.
    pub fn desk_scale() -> Self {
        let mut cfg = Self::default();
        cfg.corpus.scene.scanner.steps = 1024;
        cfg.projection.width = 512;
        cfg.oracle.blur_radius = 2;
        cfg.oracle.flip_rate = 0.05;
        cfg.selection.n_u = 512;
        cfg.selection.boundary_budget = 2048;
        cfg.refine.max_context = 512;
        cfg.refine.chunk_size = 512;
        cfg
    }

    /// Writes the effective config into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(CONFIG_FILE), self.to_toml().as_bytes())
    }
}

/// Stable 64-bit key of a scan id, used to derive per-scan seeds.
pub fn scan_key(id: &str) -> u64 {
    // FNV-1a.
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

pub fn velodyne_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("velodyne").join(format!("{id}.bin"))
}

pub fn label_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("labels").join(format!("{id}.label"))
}

pub fn probs_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("probs").join(format!("{id}.bin"))
}

/// Sorted stems of `<dir>/<sub>/*.<ext>`.
fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem() {
                ids.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn list_scans(corpus: &Path) -> Result<Vec<String>> {
    list_ids(&corpus.join("velodyne"), "bin")
}

/// Reads points and, when present, ground-truth labels.
pub fn load_scan(corpus: &Path, id: &str, map: &ClassMap) -> Result<PointCloud> {
    let cloud = read_point_cloud(&velodyne_path(corpus, id))?;
    let lp = label_path(corpus, id);
    if lp.exists() {
        cloud.with_labels(read_labels(&lp, map)?)
    } else {
        Ok(cloud)
    }
}

/// Writes `spec.scans` synthetic scans with labels and oracle probabilities.
/// Returns the scan ids.
pub fn generate_corpus(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    let map = cfg.class_map()?;
    let spec = &cfg.corpus;
    (0..spec.scans)
        .into_par_iter()
        .map(|i| {
            let seed = spec.first_seed + i as u64;
            let id = format!("{seed:06}");
            let scene = SyntheticSceneSpec {
                seed,
                ..spec.scene.clone()
            };
            let cloud = generate_scene(&scene).map_err(|e| e.in_stage("gen", &id))?;
            let labels = cloud.labels.as_deref().expect("synthetic scans are labeled");
            write_point_cloud(&cloud, &velodyne_path(dir, &id))?;
            write_labels(labels, &map, &label_path(dir, &id))?;
            let img = project(&cloud, &cfg.projection).map_err(|e| e.in_stage("project", &id))?;
            let seg = scan_oracle(&img, labels, map.num_classes(), &cfg.oracle, &id)?;
            write_coarse(&seg, &probs_path(dir, &id))?;
            Ok(id)
        })
        .collect()
}

fn scan_oracle(
    img: &RangeImage,
    labels: &[ClassId],
    num_classes: usize,
    spec: &OracleNoiseSpec,
    id: &str,
) -> Result<CoarseSegmentation> {
    let spec = OracleNoiseSpec {
        seed: rng::mix(spec.seed, &[scan_key(id)]),
        ..*spec
    };
    oracle_coarse(img, labels, num_classes, &spec).map_err(|e| e.in_stage("coarse", id))
}

/// Everything computed for one scan up to and including the KNN stage.
#[derive(Clone, Debug)]
pub struct PreparedScan {
    pub cloud: PointCloud,
    pub image: RangeImage,
    pub coarse: CoarseSegmentation,
    /// Refined p_c: KNN labels (or plain back-projection with KNN disabled).
    pub knn_labels: Vec<ClassId>,
}

pub fn prepare_scan(cfg: &PipelineConfig, corpus: &Path, cloud: PointCloud, map: &ClassMap) -> Result<PreparedScan> {
    let id = cloud.scan_id.clone();
    let image = project(&cloud, &cfg.projection).map_err(|e| e.in_stage("project", &id))?;
    let c = map.num_classes();
    let coarse = match cfg.mode {
        CoarseMode::Oracle => {
            let labels = cloud
                .labels
                .as_deref()
                .ok_or_else(|| Error::Input("oracle mode needs ground-truth labels".into()).in_stage("coarse", &id))?;
            scan_oracle(&image, labels, c, &cfg.oracle, &id)?
        }
        CoarseMode::Loaded => load_coarse(&probs_path(corpus, &id), image.height(), image.width(), c)
            .and_then(|s| s.masked_by(&image))
            .map_err(|e| e.in_stage("coarse", &id))?,
    };
    let pixel_labels = coarse.argmax_labels(map.ignore_class());
    let knn_labels = if cfg.disable_knn {
        back_project_labels(&image, &pixel_labels)
    } else {
        knn_refine(&image, &pixel_labels, &cfg.knn)
    }
    .map_err(|e| e.in_stage("knn", &id))?;
    Ok(PreparedScan {
        cloud,
        image,
        coarse,
        knn_labels,
    })
}

fn selection_for(cfg: &PipelineConfig, c_u: f64, id: &str) -> SelectionConfig {
    SelectionConfig {
        c_u,
        seed: rng::mix(cfg.selection.seed, &[scan_key(id)]),
        ..cfg.selection
    }
}

/// Training pools for every labeled scan, built with `train_c_u`.
pub fn build_training_scans(cfg: &PipelineConfig, corpus: &Path, map: &ClassMap) -> Result<Vec<TrainingScan>> {
    let ids = list_scans(corpus)?;
    ids.par_iter()
        .map(|id| {
            let cloud = load_scan(corpus, id, map)?;
            if cloud.labels.is_none() {
                return Ok(None);
            }
            let scan = prepare_scan(cfg, corpus, cloud, map)?;
            let sel = selection_for(cfg, cfg.train_c_u, id);
            let pool = build_pool(&scan.image, &scan.coarse, &sel, &scan.knn_labels)
                .map_err(|e| e.in_stage("select", id))?;
            let gt = scan.cloud.labels.as_deref().unwrap();
            let targets = pool.indices.iter().map(|&p| gt[p]).collect();
            Ok(Some(TrainingScan {
                scan_id: id.clone(),
                pool,
                targets,
            }))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Label frequencies over every labeled scan of the corpus, ignore class included.
pub fn corpus_class_counts(corpus: &Path, map: &ClassMap) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; map.num_classes()];
    for id in list_scans(corpus)? {
        let lp = label_path(corpus, &id);
        if lp.exists() {
            for l in read_labels(&lp, map)? {
                counts[l as usize] += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RefinerModel,
    pub log: Vec<EpochLog>,
    pub scans: usize,
    pub pool_entries: usize,
}

/// Trains a refiner on `paths.input` and writes the checkpoint, epoch log and
/// config into `paths.output`.
pub fn run_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let map = cfg.class_map()?;
    let corpus = &cfg.paths.input;
    let scans = build_training_scans(cfg, corpus, &map)?;
    if scans.is_empty() {
        return Err(Error::Input(format!("no labeled scans in {}", corpus.display())));
    }
    let ignore = Some(map.ignore_class());
    let mut tcfg = cfg.train.clone();
    if tcfg.class_weights.is_none() {
        tcfg.class_weights = Some(class_weights_from_counts(&corpus_class_counts(corpus, &map)?, ignore));
    }
    let mut model = RefinerModel::new(cfg.model.dims(map.num_classes()), tcfg.seed)?;
    let log = train(&mut model, &scans, &tcfg, cfg.selection.n_u, ignore)?;

    let out = &cfg.paths.output;
    save_checkpoint(&model, &out.join(CHECKPOINT_FILE))?;
    let text: String = log.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(&out.join(TRAIN_LOG_FILE), text.as_bytes())?;
    cfg.echo(out)?;
    Ok(TrainOutcome {
        model,
        log,
        pool_entries: scans.iter().map(|s| s.pool.len()).sum(),
        scans: scans.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub scan_id: String,
    pub points: usize,
    pub pool: usize,
    /// Pool members whose label the refiner changed.
    pub changed: usize,
    /// Final labels: refined p_c with pool members overwritten by refined p_u.
    pub labels: Vec<ClassId>,
    pub knn_labels: Vec<ClassId>,
}

#[derive(Clone, Debug)]
pub struct RefineOutcome {
    pub scans: Vec<ScanResult>,
    /// Final labels against ground truth, when every scan has labels.
    pub refined: Option<ConfusionMatrix>,
    /// KNN-stage labels against ground truth.
    pub knn_only: Option<ConfusionMatrix>,
}

/// Full pipeline on one prepared scan.
pub fn refine_scan(
    cfg: &PipelineConfig,
    scan: &PreparedScan,
    model: Option<&RefinerModel>,
) -> Result<ScanResult> {
    let id = &scan.cloud.scan_id;
    let mut labels = scan.knn_labels.clone();
    let (mut pool_len, mut changed) = (0, 0);
    if let (false, Some(model)) = (cfg.disable_refiner, model) {
        let sel = selection_for(cfg, cfg.selection.c_u, id);
        let pool = build_pool(&scan.image, &scan.coarse, &sel, &scan.knn_labels)
            .map_err(|e| e.in_stage("select", id))?;
        pool_len = pool.len();
        if !pool.is_empty() {
            let rcfg = RefineConfig {
                seed: rng::mix(cfg.refine.seed, &[scan_key(id)]),
                ..cfg.refine.clone()
            };
            let p_u = refine(model, &pool, &rcfg).map_err(|e| e.in_stage("refine", id))?;
            for (&p, &l) in pool.indices.iter().zip(&p_u) {
                changed += (labels[p] != l) as usize;
                labels[p] = l;
            }
        }
    }
    Ok(ScanResult {
        scan_id: id.clone(),
        points: scan.cloud.len(),
        pool: pool_len,
        changed,
        labels,
        knn_labels: scan.knn_labels.clone(),
    })
}

/// Loads the model named by the config unless the refiner is disabled.
pub fn load_model(cfg: &PipelineConfig) -> Result<Option<RefinerModel>> {
    if cfg.disable_refiner {
        return Ok(None);
    }
    let path = cfg
        .paths
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.paths.output.join(CHECKPOINT_FILE));
    load_checkpoint(&path).map(Some)
}

/// Refines every scan of `paths.input`, writes `predictions/<id>.label`, the
/// reports (when ground truth is available) and the config to `paths.output`.
pub fn run_refine(cfg: &PipelineConfig, model: Option<&RefinerModel>) -> Result<RefineOutcome> {
    cfg.validate()?;
    let map = cfg.class_map()?;
    if let Some(m) = model {
        if m.dims.num_classes != map.num_classes() {
            return Err(Error::Config(format!(
                "checkpoint has {} classes, class map has {}",
                m.dims.num_classes,
                map.num_classes()
            )));
        }
    }
    let corpus = &cfg.paths.input;
    let out = &cfg.paths.output;
    let ids = list_scans(corpus)?;
    if ids.is_empty() {
        return Err(Error::Input(format!("no scans in {}", corpus.display())));
    }
    let results: Vec<(ScanResult, Option<Vec<ClassId>>)> = ids
        .par_iter()
        .map(|id| {
            let cloud = load_scan(corpus, id, &map)?;
            let scan = prepare_scan(cfg, corpus, cloud, &map)?;
            let result = refine_scan(cfg, &scan, model)?;
            write_labels(&result.labels, &map, &out.join(PREDICTIONS_DIR).join(format!("{id}.label")))?;
            Ok((result, scan.cloud.labels))
        })
        .collect::<Result<_>>()?;

    let ignore = Some(map.ignore_class());
    let c = map.num_classes();
    let (refined, knn_only) = if results.iter().all(|(_, gt)| gt.is_some()) {
        let mut refined = ConfusionMatrix::new(c, ignore);
        let mut knn = ConfusionMatrix::new(c, ignore);
        for (r, gt) in &results {
            let gt = gt.as_deref().unwrap();
            refined.accumulate(gt, &r.labels)?;
            knn.accumulate(gt, &r.knn_labels)?;
        }
        (Some(refined), Some(knn))
    } else {
        (None, None)
    };
    let scans: Vec<ScanResult> = results.into_iter().map(|(r, _)| r).collect();

    if let (Some(refined), Some(knn)) = (&refined, &knn_only) {
        if refined.total() > 0 {
            let mut text = refined.report(Some(&map))?;
            text.push_str(&format!(
                "{:<16} {:>8.4}\n{:<16} {:>8.4}\n",
                "knn mIoU",
                knn.miou()?,
                "knn oACC",
                knn.oacc()?
            ));
            let mut kv = refined.key_values(Some(&map))?;
            kv.push_str(&format!("knn.miou={:.6}\nknn.oacc={:.6}\n", knn.miou()?, knn.oacc()?));
            for s in &scans {
                kv.push_str(&format!("scan.{}.pool={}\nscan.{}.changed={}\n", s.scan_id, s.pool, s.scan_id, s.changed));
            }
            write_atomic(&out.join(REPORT_FILE), text.as_bytes())?;
            write_atomic(&out.join(REPORT_KV_FILE), kv.as_bytes())?;
        }
    }
    cfg.echo(out)?;
    Ok(RefineOutcome {
        scans,
        refined,
        knn_only,
    })
}

/// Confusion matrix of `pred_dir/<id>.label` against `<gt_corpus>/labels/<id>.label`.
/// Both sides must hold exactly the same scan ids.
pub fn run_eval(pred_dir: &Path, gt_corpus: &Path, map: &ClassMap) -> Result<ConfusionMatrix> {
    let pred = list_ids(pred_dir, "label")?;
    let gt = list_ids(&gt_corpus.join("labels"), "label")?;
    if pred != gt {
        let missing_pred: Vec<&String> = gt.iter().filter(|id| !pred.contains(id)).collect();
        let missing_gt: Vec<&String> = pred.iter().filter(|id| !gt.contains(id)).collect();
        return Err(Error::Input(format!(
            "scan sets differ: no prediction for {missing_pred:?}, no ground truth for {missing_gt:?}"
        )));
    }
    let mut cm = ConfusionMatrix::new(map.num_classes(), Some(map.ignore_class()));
    for id in &pred {
        let p = read_labels(&pred_dir.join(format!("{id}.label")), map)?;
        let g = read_labels(&label_path(gt_corpus, id), map)?;
        cm.accumulate(&g, &p).map_err(|e| e.in_stage("eval", id))?;
    }
    Ok(cm)
}

/// Writes `<output>/range/<id>.pgm` for every scan; returns `(id, points, valid pixels)`.
pub fn run_project(cfg: &PipelineConfig) -> Result<Vec<(String, usize, usize)>> {
    cfg.validate()?;
    let corpus = &cfg.paths.input;
    list_scans(corpus)?
        .par_iter()
        .map(|id| {
            let cloud = read_point_cloud(&velodyne_path(corpus, id))?;
            let img = project(&cloud, &cfg.projection).map_err(|e| e.in_stage("project", id))?;
            write_range_pgm(&img, &cfg.paths.output.join("range").join(format!("{id}.pgm")))?;
            let valid = img.valid_mask().iter().filter(|&&v| v).count();
            Ok((id.clone(), img.num_points(), valid))
        })
        .collect()
}

/// Writes `<output>/ply/<id>.ply` colored by `labels_dir/<id>.label`, or by
/// ground truth when `labels_dir` is `None`.
pub fn run_export(cfg: &PipelineConfig, labels_dir: Option<&Path>) -> Result<Vec<String>> {
    let map = cfg.class_map()?;
    let corpus = &cfg.paths.input;
    let palette = Palette::default();
    list_scans(corpus)?
        .par_iter()
        .map(|id| {
            let cloud = read_point_cloud(&velodyne_path(corpus, id))?;
            let lp = match labels_dir {
                Some(d) => d.join(format!("{id}.label")),
                None => label_path(corpus, id),
            };
            let labels = read_labels(&lp, &map)?;
            if labels.len() != cloud.len() {
                return Err(Error::shape("labels", cloud.len(), labels.len()).in_stage("export", id));
            }
            export_ply(&cloud, &labels, &palette, &cfg.paths.output.join("ply").join(format!("{id}.ply")))?;
            Ok(id.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.selection.c_u = 3.0;
        cfg.mode = CoarseMode::Loaded;
        cfg.paths.checkpoint = Some("x/y.tupr".into());
        let back = PipelineConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = PipelineConfig::from_toml_str("[knn]\nk = 7\n[projection]\nwidth = 512\n").unwrap();
        assert_eq!(cfg.knn.k, 7);
        assert_eq!(cfg.knn.window, 5);
        assert_eq!(cfg.projection.width, 512);
        assert_eq!(cfg.train.epochs, 50);
        assert!(PipelineConfig::from_toml_str("mode = \"gpu\"").is_err());
    }

    #[test]
    fn scan_keys_differ() {
        assert_ne!(scan_key("000000"), scan_key("000001"));
        assert_eq!(scan_key("a"), scan_key("a"));
    }
}
