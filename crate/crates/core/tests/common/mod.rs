//! Brute-force reference implementations shared by the integration and
//! acceptance tests. Nothing here calls into the crate's algorithms; only data
//! types are shared.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transupr::coarse::{CoarseSegmentation, CoarseSource};
use transupr::kitti_io::{ClassId, Point, PointCloud};
use transupr::projection::{LabelImage, ProjectionConfig, RangeImage};
use transupr::refiner::attention::AttentionLayer;
use transupr::refiner::dense::Dense;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random cloud with clustered directions so pixels collect several points,
/// exact duplicates for range ties, and a few points on shared rays.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, cfg: &ProjectionConfig) -> PointCloud {
    let mut points: Vec<Point> = Vec::with_capacity(n);
    while points.len() < n {
        let roll: f64 = rng.random();
        if roll < 0.05 && !points.is_empty() {
            let p = points[rng.random_range(0..points.len())];
            points.push(p);
            continue;
        }
        if roll < 0.25 && !points.is_empty() {
            // Same direction, different range.
            let p = points[rng.random_range(0..points.len())];
            let s: f32 = rng.random_range(0.5..3.0);
            points.push(Point::new(p.x * s, p.y * s, p.z * s, rng.random()));
            continue;
        }
        let az = rng.random_range(-PI..PI);
        let el = rng.random_range((cfg.fov_down - 2.0).to_radians()..(cfg.fov_up + 2.0).to_radians());
        let r = rng.random_range(1.0..40.0);
        points.push(Point::new(
            (r * el.cos() * az.cos()) as f32,
            (r * el.cos() * az.sin()) as f32,
            (r * el.sin()) as f32,
            rng.random(),
        ));
    }
    PointCloud::new(points)
}

pub fn small_projection(rng: &mut ChaCha8Rng) -> ProjectionConfig {
    ProjectionConfig {
        width: [16, 32, 64, 128][rng.random_range(0..4)],
        height: [8, 16, 32][rng.random_range(0..3)],
        fov_up: 3.0,
        fov_down: -25.0,
    }
}

pub fn range_of(p: &Point) -> f64 {
    let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
    (x * x + y * y + z * z).sqrt()
}

/// `(u, v)` straight from the projection formulas.
pub fn pixel_oracle(p: &Point, cfg: &ProjectionConfig) -> (usize, usize) {
    let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
    let r = range_of(p);
    let up = cfg.fov_up / 180.0 * PI;
    let down = cfg.fov_down / 180.0 * PI;
    let mut u = (0.5 * (1.0 - y.atan2(x) / PI) * cfg.width as f64).floor();
    let mut v = ((1.0 - ((z / r).asin() - down) / (up - down)) * cfg.height as f64).floor();
    u = u.clamp(0.0, cfg.width as f64 - 1.0);
    v = v.clamp(0.0, cfg.height as f64 - 1.0);
    (u as usize, v as usize)
}

/// Foreground point of every pixel by exhaustive search: minimum range,
/// lowest index on ties.
pub fn foreground_oracle(cloud: &PointCloud, cfg: &ProjectionConfig) -> Vec<Option<usize>> {
    let pixels: Vec<(usize, usize)> = cloud.points.iter().map(|p| pixel_oracle(p, cfg)).collect();
    let ranges: Vec<f64> = cloud.points.iter().map(range_of).collect();
    let mut out = vec![None; cfg.width * cfg.height];
    for v in 0..cfg.height {
        for u in 0..cfg.width {
            let mut best: Option<usize> = None;
            for i in 0..cloud.len() {
                if pixels[i] != (u, v) {
                    continue;
                }
                best = match best {
                    Some(b) if ranges[b] <= ranges[i] => Some(b),
                    _ => Some(i),
                };
            }
            out[v * cfg.width + u] = best;
        }
    }
    out
}

/// The `k` window foregrounds nearest in range to point `i` as `(delta, pixel)`,
/// ties by pixel index.
pub fn window_neighbors(
    cloud: &PointCloud,
    cfg: &ProjectionConfig,
    fg: &[Option<usize>],
    i: usize,
    window: usize,
    k: usize,
) -> Vec<(f64, usize)> {
    let (pu, pv) = pixel_oracle(&cloud.points[i], cfg);
    let half = (window / 2) as i64;
    let r = range_of(&cloud.points[i]);
    let mut cands = Vec::new();
    for v in 0..cfg.height {
        for u in 0..cfg.width {
            if (v as i64 - pv as i64).abs() > half || (u as i64 - pu as i64).abs() > half {
                continue;
            }
            let pixel = v * cfg.width + u;
            if let Some(f) = fg[pixel] {
                cands.push(((range_of(&cloud.points[f]) - r).abs(), pixel));
            }
        }
    }
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    cands.truncate(k);
    cands
}

/// Sort, filter, Gaussian vote; ties to the smaller class; fallback to the
/// point's own pixel label.
#[allow(clippy::too_many_arguments)]
pub fn knn_oracle(
    cloud: &PointCloud,
    cfg: &ProjectionConfig,
    labels: &LabelImage,
    k: usize,
    window: usize,
    sigma: f64,
    cutoff: f64,
) -> Vec<ClassId> {
    let fg = foreground_oracle(cloud, cfg);
    (0..cloud.len())
        .map(|i| {
            let mut votes: BTreeMap<ClassId, f64> = BTreeMap::new();
            for (d, pixel) in window_neighbors(cloud, cfg, &fg, i, window, k) {
                if d <= cutoff {
                    *votes.entry(labels.labels[pixel]).or_default() += (-d * d / (2.0 * sigma * sigma)).exp();
                }
            }
            let mut best: Option<(ClassId, f64)> = None;
            for (&c, &w) in &votes {
                if best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((c, w));
                }
            }
            match best {
                Some((c, _)) => c,
                None => {
                    let (u, v) = pixel_oracle(&cloud.points[i], cfg);
                    labels.labels[v * cfg.width + u]
                }
            }
        })
        .collect()
}

/// Renormalized mean probability vector over the `k` window neighbors.
pub fn aggregate_oracle(
    cloud: &PointCloud,
    cfg: &ProjectionConfig,
    seg: &CoarseSegmentation,
    i: usize,
    window: usize,
    k: usize,
) -> Vec<f64> {
    let fg = foreground_oracle(cloud, cfg);
    aggregate_with(cloud, cfg, &fg, seg, i, window, k)
}

pub fn aggregate_with(
    cloud: &PointCloud,
    cfg: &ProjectionConfig,
    fg: &[Option<usize>],
    seg: &CoarseSegmentation,
    i: usize,
    window: usize,
    k: usize,
) -> Vec<f64> {
    let c = seg.num_classes();
    let neigh = window_neighbors(cloud, cfg, fg, i, window, k);
    let mut mean = vec![0.0; c];
    for &(_, pixel) in &neigh {
        for (m, q) in mean.iter_mut().zip(seg.probs(pixel)) {
            *m += q / neigh.len() as f64;
        }
    }
    let s: f64 = mean.iter().sum();
    mean.iter().map(|m| m / s).collect()
}

/// Random normalized probabilities, masked to the image's valid pixels.
pub fn random_segmentation(rng: &mut ChaCha8Rng, img: &RangeImage, num_classes: usize) -> CoarseSegmentation {
    let mut probs = vec![0.0; img.num_pixels() * num_classes];
    for row in probs.chunks_mut(num_classes) {
        for x in row.iter_mut() {
            *x = rng.random_range(0.0..1.0f64).powi(3) + 1e-9;
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    CoarseSegmentation::new(img.height(), img.width(), num_classes, probs, CoarseSource::Oracle)
        .and_then(|s| s.masked_by(img))
        .expect("valid segmentation")
}

/// Jaccard set loss `|M| / |F ∪ M|` over bitmasks.
fn jaccard_set_loss(fg: u32, m: u32) -> f64 {
    let union = (fg | m).count_ones();
    if union == 0 {
        0.0
    } else {
        m.count_ones() as f64 / union as f64
    }
}

/// Lovász extension of the Jaccard loss for one class, as the Choquet
/// integral over the level sets of the error vector.
pub fn lovasz_extension_levels(errors: &[f64], fg: u32) -> f64 {
    let mut levels: Vec<f64> = errors.iter().copied().filter(|&e| e > 0.0).collect();
    levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
    levels.dedup();
    let mut total = 0.0;
    for (k, &t) in levels.iter().enumerate() {
        let next = levels.get(k + 1).copied().unwrap_or(0.0);
        let set = errors
            .iter()
            .enumerate()
            .filter(|(_, &e)| e >= t)
            .fold(0u32, |acc, (i, _)| acc | (1 << i));
        total += (t - next) * jaccard_set_loss(fg, set);
    }
    total
}

/// The same extension as the maximum over all orderings of the greedy sum;
/// valid because the Jaccard set loss is submodular.
pub fn lovasz_extension_permutations(errors: &[f64], fg: u32) -> f64 {
    fn rec(errors: &[f64], fg: u32, used: u32, prefix: u32, acc: f64, best: &mut f64) {
        if used.count_ones() as usize == errors.len() {
            *best = best.max(acc);
            return;
        }
        for i in 0..errors.len() {
            if used & (1 << i) == 0 {
                let next = prefix | (1 << i);
                let gain = jaccard_set_loss(fg, next) - jaccard_set_loss(fg, prefix);
                rec(errors, fg, used | (1 << i), next, acc + errors[i] * gain, best);
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(errors, fg, 0, 0, 0.0, &mut best);
    best
}

/// Lovász-Softmax by the level-set oracle: mean over present classes.
pub fn lovasz_softmax_oracle(probs: &Array2<f64>, targets: &[ClassId]) -> f64 {
    let c = probs.ncols();
    let mut total = 0.0;
    let mut present = 0;
    for class in 0..c {
        let fg = targets
            .iter()
            .enumerate()
            .filter(|(_, &t)| t as usize == class)
            .fold(0u32, |acc, (i, _)| acc | (1 << i));
        if fg == 0 {
            continue;
        }
        present += 1;
        let errors: Vec<f64> = (0..targets.len())
            .map(|i| ((targets[i] as usize == class) as u8 as f64 - probs[[i, class]]).abs())
            .collect();
        total += lovasz_extension_levels(&errors, fg);
    }
    total / present as f64
}

/// Dense `a · b` with explicit loops.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, m) = a.dim();
    let p = b.ncols();
    let mut out = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..m {
                s += a[[i, k]] * b[[k, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Per-class IoU by set arithmetic over point indices, skipping points whose
/// ground truth is `ignore`; `None` where the union is empty.
pub fn iou_oracle(gt: &[ClassId], pred: &[ClassId], num_classes: usize, ignore: ClassId) -> Vec<Option<f64>> {
    use std::collections::HashSet;
    (0..num_classes)
        .map(|c| {
            if c == ignore as usize {
                return None;
            }
            let a: HashSet<usize> = (0..gt.len()).filter(|&i| gt[i] != ignore && gt[i] as usize == c).collect();
            let b: HashSet<usize> = (0..gt.len()).filter(|&i| gt[i] != ignore && pred[i] as usize == c).collect();
            let union = a.union(&b).count();
            (union > 0).then(|| a.intersection(&b).count() as f64 / union as f64)
        })
        .collect()
}

/// Central finite-difference check of every parameter gradient of
/// `total_loss`. Returns the worst `(relative error, block, index, analytic,
/// numeric)` with relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    model: &transupr::refiner::RefinerModel,
    features: &Array2<f64>,
    targets: &[ClassId],
    weights: &[f64],
    floor: f64,
) -> (f64, usize, usize, f64, f64) {
    let (_, grads) = model.total_loss(features, targets, weights, None).unwrap();
    let analytic: Vec<Vec<f64>> = grads.param_blocks().iter().map(|b| b.to_vec()).collect();
    let mut m = model.clone();
    let mut worst = (0.0, 0, 0, 0.0, 0.0);
    for (k, block) in analytic.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let theta = m.param_blocks()[k][i];
            let h = 1e-5 * theta.abs().max(1.0);
            m.param_blocks_mut()[k][i] = theta + h;
            let lp = m.total_loss(features, targets, weights, None).unwrap().0.total;
            m.param_blocks_mut()[k][i] = theta - h;
            let lm = m.total_loss(features, targets, weights, None).unwrap().0.total;
            m.param_blocks_mut()[k][i] = theta;
            let n = (lp - lm) / (2.0 * h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, k, i, a, n);
            }
        }
    }
    worst
}

/// Model with the reduced widths used for gradient checks: 25 -> 16 -> 32,
/// two attention layers of width 32, head 64 -> 32 -> 16 -> 4.
pub fn gradient_check_dims() -> transupr::refiner::ModelDims {
    transupr::refiner::ModelDims {
        input_dim: 25,
        embed_hidden: 16,
        embed_dim: 32,
        num_layers: 2,
        head_hidden: [32, 16],
        num_classes: 4,
    }
}

/// Smallest distance of any ReLU pre-activation from its kink, and of any two
/// Lovász errors of the same class from a tie.
pub fn kink_margin(model: &transupr::refiner::RefinerModel, features: &Array2<f64>, targets: &[ClassId]) -> f64 {
    let cache = model.forward(features).unwrap();
    let pre = cache.embed_pre.iter().chain(cache.head_pre.iter());
    let mut margin = pre.flat_map(|m| m.iter().map(|x| x.abs())).fold(f64::INFINITY, f64::min);
    let probs = transupr::refiner::loss::softmax_rows(&cache.logits);
    for c in 0..probs.ncols() {
        let e: Vec<f64> =
            (0..targets.len()).map(|i| ((targets[i] as usize == c) as u8 as f64 - probs[[i, c]]).abs()).collect();
        for i in 0..e.len() {
            for j in 0..i {
                margin = margin.min((e[i] - e[j]).abs());
            }
        }
    }
    margin
}

/// First instance at or after `seed` (reduced model with every parameter
/// uniform in ±0.5, n = 6) whose non-smooth points all lie at least 1e-3 away,
/// so a central difference with step 1e-5 never straddles one. Fan-in scaled
/// init is avoided here: it makes attention nearly uniform, so every row gets
/// almost the same logits and the Lovász errors nearly tie.
pub fn gradient_check_instance(
    seed: u64,
) -> (transupr::refiner::RefinerModel, Array2<f64>, Vec<ClassId>) {
    for s in seed.. {
        let mut r = rng(s);
        let mut model = transupr::refiner::RefinerModel::zeros(gradient_check_dims());
        for block in model.param_blocks_mut() {
            block.iter_mut().for_each(|x| *x = r.random_range(-0.5..0.5));
        }
        let features = Array2::from_shape_simple_fn((6, 25), || r.random_range(-1.0..1.0));
        let targets: Vec<ClassId> = vec![0, 1, 2, 3, r.random_range(0..4), r.random_range(0..4)];
        if kink_margin(&model, &features, &targets) > 1e-3 {
            return (model, features, targets);
        }
    }
    unreachable!()
}

pub fn random_labels(r: &mut ChaCha8Rng, w: usize, h: usize, classes: u16) -> LabelImage {
    LabelImage {
        width: w,
        height: h,
        labels: (0..w * h).map(|_| r.random_range(0..classes)).collect(),
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-scale..scale))
}

pub fn random_layer(rng: &mut ChaCha8Rng, d: usize) -> AttentionLayer {
    let dense = |rng: &mut ChaCha8Rng| Dense {
        w: random_matrix(rng, d, d, 0.5),
        b: Array1::from_shape_simple_fn(d, || rng.random_range(-0.5..0.5)),
    };
    AttentionLayer {
        wp: dense(rng),
        wv: dense(rng),
    }
}

/// Q = K = F Wp + bp, V = F Wv + bv, softmax(Q Kᵀ / sqrt d) V with loops only.
pub fn attention_oracle(f: &Array2<f64>, layer: &AttentionLayer) -> Array2<f64> {
    let (n, d) = f.dim();
    let mut q = matmul(f, &layer.wp.w);
    let mut v = matmul(f, &layer.wv.w);
    for i in 0..n {
        for j in 0..d {
            q[[i, j]] += layer.wp.b[j];
            v[[i, j]] += layer.wv.b[j];
        }
    }
    let mut kt = Array2::zeros((d, n));
    for i in 0..n {
        for j in 0..d {
            kt[[j, i]] = q[[i, j]];
        }
    }
    let mut a = matmul(&q, &kt);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            a[[i, j]] /= (d as f64).sqrt();
            max = max.max(a[[i, j]]);
        }
        let mut s = 0.0;
        for j in 0..n {
            a[[i, j]] = (a[[i, j]] - max).exp();
            s += a[[i, j]];
        }
        for j in 0..n {
            a[[i, j]] /= s;
        }
    }
    matmul(&a, &v)
}
