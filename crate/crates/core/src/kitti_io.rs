//! Semantic-KITTI on-disk formats.
//!
//! Point files are headerless little-endian `f32` quadruples `(x, y, z, remission)`.
//! Label files hold one little-endian `u32` per point: the lower 16 bits carry the
//! raw semantic id, the upper 16 bits the instance id. Raw ids are folded into a
//! contiguous train-id range by a [`ClassMap`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train-set class index, `0..num_classes`.
pub type ClassId = u16;

const POINT_RECORD: usize = 16;
const LABEL_RECORD: usize = 4;

const DEFAULT_CLASS_MAP: &str = include_str!("../data/semantic-kitti.toml");

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub remission: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, remission: f32) -> Self {
        Self { x, y, z, remission }
    }

    /// Euclidean distance to the sensor origin, evaluated in `f64`.
    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub labels: Option<Vec<ClassId>>,
    pub scan_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self {
            points,
            labels: None,
            scan_id: String::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::shape("labels", self.points.len(), labels.len()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_scan_id(mut self, id: impl Into<String>) -> Self {
        self.scan_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Deserialize)]
struct ClassMapFile {
    num_classes: usize,
    ignore_class: ClassId,
    names: Vec<String>,
    learning_map: BTreeMap<String, ClassId>,
    learning_map_inv: BTreeMap<String, u16>,
}

/// Raw semantic id <-> train id tables.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMap {
    raw_to_train: HashMap<u16, ClassId>,
    train_to_raw: Vec<u16>,
    names: Vec<String>,
    ignore_class: ClassId,
}

impl ClassMap {
    /// The Semantic-KITTI mapping shipped with the crate (20 classes, 0 = unlabeled).
    pub fn semantic_kitti() -> Self {
        Self::from_toml_str(DEFAULT_CLASS_MAP).expect("bundled class map is valid")
    }

    /// Identity map over `0..num_classes`, used for synthetic corpora that store
    /// train ids directly.
    pub fn identity(num_classes: usize) -> Self {
        let raw_to_train = (0..num_classes as u16).map(|c| (c, c)).collect();
        Self {
            raw_to_train,
            train_to_raw: (0..num_classes as u16).collect(),
            names: (0..num_classes).map(|c| format!("class-{c}")).collect(),
            ignore_class: 0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ClassMapFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("class map: {e}")))?;
        let c = file.num_classes;
        if c == 0 || c > u16::MAX as usize {
            return Err(Error::Config(format!("class map: bad num_classes {c}")));
        }
        if file.names.len() != c {
            return Err(Error::Config(format!(
                "class map: {} names for {c} classes",
                file.names.len()
            )));
        }
        if file.ignore_class as usize >= c {
            return Err(Error::Config("class map: ignore_class out of range".into()));
        }
        let parse_key = |k: &str| {
            k.trim()
                .parse::<u16>()
                .map_err(|_| Error::Config(format!("class map: bad key `{k}`")))
        };
        let mut raw_to_train = HashMap::new();
        for (k, &train) in &file.learning_map {
            if train as usize >= c {
                return Err(Error::Config(format!("class map: train id {train} >= {c}")));
            }
            raw_to_train.insert(parse_key(k)?, train);
        }
        let mut train_to_raw = vec![None; c];
        for (k, &raw) in &file.learning_map_inv {
            let train = parse_key(k)? as usize;
            if train >= c {
                return Err(Error::Config(format!("class map: inverse key {train} >= {c}")));
            }
            train_to_raw[train] = Some(raw);
        }
        let train_to_raw = train_to_raw
            .into_iter()
            .enumerate()
            .map(|(t, r)| r.ok_or_else(|| Error::Config(format!("class map: no inverse for {t}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            raw_to_train,
            train_to_raw,
            names: file.names,
            ignore_class: file.ignore_class,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn num_classes(&self) -> usize {
        self.train_to_raw.len()
    }

    pub fn ignore_class(&self) -> ClassId {
        self.ignore_class
    }

    pub fn name(&self, class: ClassId) -> &str {
        self.names.get(class as usize).map_or("?", String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Unknown raw ids fold into the ignore class.
    pub fn to_train(&self, raw: u16) -> ClassId {
        self.raw_to_train.get(&raw).copied().unwrap_or(self.ignore_class)
    }

    pub fn to_raw(&self, train: ClassId) -> Result<u16> {
        self.train_to_raw
            .get(train as usize)
            .copied()
            .ok_or(Error::ClassOutOfRange {
                id: train as u32,
                num_classes: self.num_classes(),
            })
    }
}

impl Default for ClassMap {
    fn default() -> Self {
        Self::semantic_kitti()
    }
}

fn read_bytes(path: &Path, record: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % record != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            record,
        });
    }
    Ok(bytes)
}

/// Decodes a raw point buffer; `bytes.len()` must be a multiple of 16.
pub fn decode_points(bytes: &[u8]) -> Result<Vec<Point>> {
    if !bytes.len().is_multiple_of(POINT_RECORD) {
        return Err(Error::Input(format!(
            "point buffer of {} bytes is not a multiple of {POINT_RECORD}",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(POINT_RECORD)
        .enumerate()
        .map(|(index, rec)| {
            let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
            let p = Point::new(f(0), f(4), f(8), f(12));
            if [p.x, p.y, p.z, p.remission].iter().all(|v| v.is_finite()) {
                Ok(p)
            } else {
                Err(Error::NonFinite { index })
            }
        })
        .collect()
}

pub fn encode_points(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(points.len() * POINT_RECORD);
    for p in points {
        for v in [p.x, p.y, p.z, p.remission] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = read_bytes(path, POINT_RECORD)?;
    let scan_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(PointCloud::new(decode_points(&bytes)?).with_scan_id(scan_id))
}

pub fn write_point_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    write_atomic(path, &encode_points(&cloud.points))
}

pub fn read_labels(path: &Path, map: &ClassMap) -> Result<Vec<ClassId>> {
    let bytes = read_bytes(path, LABEL_RECORD)?;
    Ok(bytes
        .chunks_exact(LABEL_RECORD)
        .map(|w| {
            let word = u32::from_le_bytes(w.try_into().unwrap());
            map.to_train((word & 0xffff) as u16)
        })
        .collect())
}

pub fn encode_labels(labels: &[ClassId], map: &ClassMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(labels.len() * LABEL_RECORD);
    for &label in labels {
        let raw = map.to_raw(label)? as u32;
        out.extend_from_slice(&raw.to_le_bytes());
    }
    Ok(out)
}

/// Instance ids are written as zero.
pub fn write_labels(labels: &[ClassId], map: &ClassMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_labels(labels, map)?)
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Scanner class assignment for each synthetic primitive kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeClasses {
    pub ground: ClassId,
    pub boxes: ClassId,
    pub cylinders: ClassId,
    pub planes: ClassId,
}

impl Default for ShapeClasses {
    /// road, car, pole, building in the Semantic-KITTI train ids.
    fn default() -> Self {
        Self {
            ground: 9,
            boxes: 1,
            cylinders: 18,
            planes: 13,
        }
    }
}
