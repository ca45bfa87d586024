//! Seeded synthetic scenes sampled by a simulated rotating scanner.
//!
//! The scanner fires `rings x steps` rays from the origin. Each ray returns the
//! nearest hit among a finite ground plane and the placed primitives, with
//! truncated Gaussian range noise applied along the ray, so every sample keeps
//! the exact direction of its ray.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti_io::{ClassId, Point, PointCloud, ShapeClasses};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScannerSpec {
    pub rings: usize,
    pub steps: usize,
    /// Degrees above the horizon.
    pub fov_up: f64,
    /// Degrees, negative below the horizon.
    pub fov_down: f64,
    /// Sensor height above the ground plane in meters.
    pub height: f64,
}

impl Default for ScannerSpec {
    fn default() -> Self {
        Self {
            rings: 64,
            steps: 2048,
            fov_up: 3.0,
            fov_down: -25.0,
            height: 1.73,
        }
    }
}

impl ScannerSpec {
    pub fn nominal_rays(&self) -> usize {
        self.rings * self.steps
    }

    /// Unit direction of the ray fired by `ring` at azimuth `step`.
    pub fn ray(&self, ring: usize, step: usize) -> [f64; 3] {
        let span = self.fov_up - self.fov_down;
        let elev = (self.fov_up - (ring as f64 + 0.5) * span / self.rings as f64).to_radians();
        let azim = PI - 2.0 * PI * (step as f64 + 0.5) / self.steps as f64;
        [elev.cos() * azim.cos(), elev.cos() * azim.sin(), elev.sin()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectCounts {
    pub boxes: usize,
    pub cylinders: usize,
    pub planes: usize,
}

impl ObjectCounts {
    pub fn total(&self) -> usize {
        self.boxes + self.cylinders + self.planes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Ground,
    Box,
    Cylinder,
    Plane,
}

/// A primitive with explicit pose. Planes are thin oriented boxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Primitive {
    Box {
        center: [f64; 3],
        size: [f64; 3],
        yaw: f64,
    },
    Cylinder {
        center: [f64; 2],
        base_z: f64,
        radius: f64,
        height: f64,
    },
    Plane {
        center: [f64; 3],
        size: [f64; 3],
        yaw: f64,
    },
}

impl Primitive {
    pub fn kind(&self) -> ShapeKind {
        match self {
            Primitive::Box { .. } => ShapeKind::Box,
            Primitive::Cylinder { .. } => ShapeKind::Cylinder,
            Primitive::Plane { .. } => ShapeKind::Plane,
        }
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn aabb(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Primitive::Box { center, size, yaw } | Primitive::Plane { center, size, yaw } => {
                let (s, c) = yaw.sin_cos();
                let hx = 0.5 * (size[0] * c.abs() + size[1] * s.abs());
                let hy = 0.5 * (size[0] * s.abs() + size[1] * c.abs());
                let hz = 0.5 * size[2];
                (
                    [center[0] - hx, center[1] - hy, center[2] - hz],
                    [center[0] + hx, center[1] + hy, center[2] + hz],
                )
            }
            Primitive::Cylinder {
                center,
                base_z,
                radius,
                height,
            } => (
                [center[0] - radius, center[1] - radius, base_z],
                [center[0] + radius, center[1] + radius, base_z + height],
            ),
        }
    }

    fn intersect(&self, dir: [f64; 3]) -> Option<f64> {
        match *self {
            Primitive::Box { center, size, yaw } | Primitive::Plane { center, size, yaw } => {
                intersect_obb(dir, center, size, yaw)
            }
            Primitive::Cylinder {
                center,
                base_z,
                radius,
                height,
            } => intersect_cylinder(dir, center, base_z, radius, height),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneSpec {
    pub seed: u64,
    /// Half side of the square ground patch, meters.
    pub ground_extent: f64,
    pub ground: bool,
    pub object_counts: ObjectCounts,
    /// Extra primitives at fixed poses, added after the random ones.
    pub placed: Vec<Primitive>,
    pub noise_sigma: f64,
    pub class_assignment: ShapeClasses,
    pub scanner: ScannerSpec,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            ground_extent: 60.0,
            ground: true,
            object_counts: ObjectCounts {
                boxes: 8,
                cylinders: 12,
                planes: 4,
            },
            placed: Vec::new(),
            noise_sigma: 0.02,
            class_assignment: ShapeClasses::default(),
            scanner: ScannerSpec::default(),
        }
    }
}

impl SyntheticSceneSpec {
    fn class_of(&self, kind: ShapeKind) -> ClassId {
        let a = &self.class_assignment;
        match kind {
            ShapeKind::Ground => a.ground,
            ShapeKind::Box => a.boxes,
            ShapeKind::Cylinder => a.cylinders,
            ShapeKind::Plane => a.planes,
        }
    }

    /// Random primitives drawn from the spec's RNG followed by the placed ones.
    pub fn primitives(&self) -> Vec<Primitive> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ground_z = -self.scanner.height;
        let ext = self.ground_extent;
        let polar = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            let r = rng.random_range(lo..hi.max(lo + 1e-3));
            let a = rng.random_range(-PI..PI);
            (r * a.cos(), r * a.sin(), a)
        };
        let mut out = Vec::with_capacity(self.object_counts.total() + self.placed.len());
        for _ in 0..self.object_counts.boxes {
            let (x, y, _) = polar(&mut rng, 5.0, 0.7 * ext);
            let size = [
                rng.random_range(3.5..4.8),
                rng.random_range(1.6..2.0),
                rng.random_range(1.4..1.8),
            ];
            let yaw = rng.random_range(-PI..PI);
            out.push(Primitive::Box {
                center: [x, y, ground_z + 0.5 * size[2]],
                size,
                yaw,
            });
        }
        for _ in 0..self.object_counts.cylinders {
            let (x, y, _) = polar(&mut rng, 4.0, 0.7 * ext);
            out.push(Primitive::Cylinder {
                center: [x, y],
                base_z: ground_z,
                radius: rng.random_range(0.1..0.3),
                height: rng.random_range(2.0..5.0),
            });
        }
        for _ in 0..self.object_counts.planes {
            let (x, y, a) = polar(&mut rng, 10.0, 0.9 * ext);
            let size = [rng.random_range(8.0..25.0), 0.5, rng.random_range(4.0..10.0)];
            let yaw = a + 0.5 * PI + rng.random_range(-0.3..0.3);
            out.push(Primitive::Plane {
                center: [x, y, ground_z + 0.5 * size[2]],
                size,
                yaw,
            });
        }
        out.extend_from_slice(&self.placed);
        out
    }

    fn remission_base(kind: ShapeKind) -> f64 {
        match kind {
            ShapeKind::Ground => 0.25,
            ShapeKind::Box => 0.55,
            ShapeKind::Cylinder => 0.4,
            ShapeKind::Plane => 0.7,
        }
    }
}

fn intersect_obb(dir: [f64; 3], center: [f64; 3], size: [f64; 3], yaw: f64) -> Option<f64> {
    let (s, c) = yaw.sin_cos();
    // Ray origin and direction in the box frame.
    let o = [-center[0], -center[1], -center[2]];
    let ol = [c * o[0] + s * o[1], -s * o[0] + c * o[1], o[2]];
    let dl = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let half = 0.5 * size[axis];
        if dl[axis].abs() < 1e-12 {
            if ol[axis].abs() > half {
                return None;
            }
            continue;
        }
        let a = (-half - ol[axis]) / dl[axis];
        let b = (half - ol[axis]) / dl[axis];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 < t0 || t1 <= 0.0 {
        return None;
    }
    // Origin inside the box: no return.
    (t0 > 1e-6).then_some(t0)
}

fn intersect_cylinder(
    dir: [f64; 3],
    center: [f64; 2],
    base_z: f64,
    radius: f64,
    height: f64,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let top = base_z + height;
    let a = dir[0] * dir[0] + dir[1] * dir[1];
    if a > 1e-12 {
        let b = -2.0 * (dir[0] * center[0] + dir[1] * center[1]);
        let cc = center[0] * center[0] + center[1] * center[1] - radius * radius;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 && cc > 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            let z = t * dir[2];
            if t > 1e-6 && z >= base_z && z <= top {
                best = Some(t);
            }
        }
    }
    for cap in [base_z, top] {
        if dir[2].abs() > 1e-12 {
            let t = cap / dir[2];
            let (x, y) = (t * dir[0] - center[0], t * dir[1] - center[1]);
            if t > 1e-6 && x * x + y * y <= radius * radius && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best
}

/// Samples a labeled point cloud from `spec`. Equal specs give bit-identical clouds.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<PointCloud> {
    if !(spec.ground_extent > 0.0) {
        return Err(Error::Config("ground_extent must be > 0".into()));
    }
    if !spec.ground && spec.object_counts.total() == 0 && spec.placed.is_empty() {
        return Err(Error::Config("empty scene: no ground and no objects".into()));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::Config("noise_sigma must be >= 0".into()));
    }
    let sc = &spec.scanner;
    if sc.rings == 0 || sc.steps == 0 || !(sc.fov_up > sc.fov_down) {
        return Err(Error::Config("invalid scanner spec".into()));
    }
    let prims = spec.primitives();
    // Independent stream for noise so primitive layout does not depend on scanner size.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let clip = 3.0 * spec.noise_sigma;
    let ground_z = -sc.height;

    let mut points = Vec::with_capacity(sc.nominal_rays());
    let mut labels = Vec::with_capacity(sc.nominal_rays());
    for ring in 0..sc.rings {
        for step in 0..sc.steps {
            let dir = sc.ray(ring, step);
            let mut hit: Option<(f64, ShapeKind)> = None;
            if spec.ground && dir[2] < -1e-9 {
                let t = ground_z / dir[2];
                let (x, y) = (t * dir[0], t * dir[1]);
                if x.abs() <= spec.ground_extent && y.abs() <= spec.ground_extent {
                    hit = Some((t, ShapeKind::Ground));
                }
            }
            for p in &prims {
                if let Some(t) = p.intersect(dir) {
                    if hit.is_none_or(|(b, _)| t < b) {
                        hit = Some((t, p.kind()));
                    }
                }
            }
            let Some((t, kind)) = hit else { continue };
            let dt = if spec.noise_sigma > 0.0 {
                noise.sample(&mut rng).clamp(-clip, clip)
            } else {
                0.0
            };
            let t = (t + dt).max(1e-3);
            let rem = (SyntheticSceneSpec::remission_base(kind) + rng.random_range(-0.15..0.15))
                .clamp(0.0, 1.0);
            points.push(Point::new(
                (t * dir[0]) as f32,
                (t * dir[1]) as f32,
                (t * dir[2]) as f32,
                rem as f32,
            ));
            labels.push(spec.class_of(kind));
        }
    }
    PointCloud::new(points)
        .with_labels(labels)
        .map(|c| c.with_scan_id(format!("synthetic-{}", spec.seed)))
}
