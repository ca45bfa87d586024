use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attention_backward, attention_blocked, attention_forward, AttentionCache, AttentionLayer};
use super::dense::{relu, relu_backward, Dense};
use super::loss::{lovasz_softmax_loss, softmax_backward, softmax_rows, wce_loss};
use crate::error::{Error, Result};
use crate::kitti_io::ClassId;

/// Layer widths. The attention width equals `embed_dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub input_dim: usize,
    pub embed_hidden: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub head_hidden: [usize; 2],
    pub num_classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self::for_classes(20)
    }
}

impl ModelDims {
    /// Full-size network: 5 + C -> 128 -> 256, four attention layers of width
    /// 256, head 1024 -> 512 -> 256 -> C.
    pub fn for_classes(num_classes: usize) -> Self {
        Self {
            input_dim: 5 + num_classes,
            embed_hidden: 128,
            embed_dim: 256,
            num_layers: 4,
            head_hidden: [512, 256],
            num_classes,
        }
    }

    pub fn concat_dim(&self) -> usize {
        self.num_layers * self.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.input_dim,
            self.embed_hidden,
            self.embed_dim,
            self.num_layers,
            self.head_hidden[0],
            self.head_hidden[1],
            self.num_classes,
        ];
        if all.contains(&0) {
            return Err(Error::Config(format!("model dims must be non-zero: {self:?}")));
        }
        Ok(())
    }

    /// Learnable parameter count.
    pub fn num_params(&self) -> usize {
        let dense = |i: usize, o: usize| i * o + o;
        dense(self.input_dim, self.embed_hidden)
            + dense(self.embed_hidden, self.embed_dim)
            + self.num_layers * 2 * dense(self.embed_dim, self.embed_dim)
            + dense(self.concat_dim(), self.head_hidden[0])
            + dense(self.head_hidden[0], self.head_hidden[1])
            + dense(self.head_hidden[1], self.num_classes)
    }
}

/// Fixed per-feature standardization applied before the embedding. Estimated
/// from training data, not learned.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureNorm {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    /// Column mean and standard deviation over all rows of `batches`;
    /// near-constant columns keep unit scale.
    pub fn fit<'a>(dim: usize, batches: impl IntoIterator<Item = &'a Array2<f64>>) -> Self {
        let mut sum = Array1::<f64>::zeros(dim);
        let mut sq = Array1::<f64>::zeros(dim);
        let mut n = 0usize;
        for b in batches {
            sum += &b.sum_axis(Axis(0));
            sq += &b.mapv(|x| x * x).sum_axis(Axis(0));
            n += b.nrows();
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean.mapv(|m| m * m);
        let std = var.mapv(|v| if v > 1e-12 { v.sqrt() } else { 1.0 });
        Self { mean, std }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinerModel {
    pub dims: ModelDims,
    pub norm: FeatureNorm,
    pub embed: [Dense; 2],
    pub attn: Vec<AttentionLayer>,
    pub head: [Dense; 3],
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    pub embed_pre: [Array2<f64>; 2],
    pub embed_out: [Array2<f64>; 2],
    /// Input of each attention layer, then its cache and output.
    pub attn_in: Vec<Array2<f64>>,
    pub attn_cache: Vec<AttentionCache>,
    pub attn_out: Vec<Array2<f64>>,
    pub concat: Array2<f64>,
    pub head_pre: [Array2<f64>; 2],
    pub head_out: [Array2<f64>; 2],
    pub logits: Array2<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub wce: f64,
    pub lovasz: f64,
}

impl RefinerModel {
    /// Seeded fan-in uniform init, zero biases.
    pub fn new(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = [
            Dense::init(dims.input_dim, dims.embed_hidden, &mut rng),
            Dense::init(dims.embed_hidden, dims.embed_dim, &mut rng),
        ];
        let attn = (0..dims.num_layers)
            .map(|_| AttentionLayer {
                wp: Dense::init(dims.embed_dim, dims.embed_dim, &mut rng),
                wv: Dense::init(dims.embed_dim, dims.embed_dim, &mut rng),
            })
            .collect();
        let head = [
            Dense::init(dims.concat_dim(), dims.head_hidden[0], &mut rng),
            Dense::init(dims.head_hidden[0], dims.head_hidden[1], &mut rng),
            Dense::init(dims.head_hidden[1], dims.num_classes, &mut rng),
        ];
        Ok(Self {
            dims,
            norm: FeatureNorm::identity(dims.input_dim),
            embed,
            attn,
            head,
        })
    }

    /// Same shapes, every parameter zero.
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            norm: FeatureNorm::identity(dims.input_dim),
            embed: [
                Dense::zeros(dims.input_dim, dims.embed_hidden),
                Dense::zeros(dims.embed_hidden, dims.embed_dim),
            ],
            attn: (0..dims.num_layers)
                .map(|_| AttentionLayer::zeros(dims.embed_dim))
                .collect(),
            head: [
                Dense::zeros(dims.concat_dim(), dims.head_hidden[0]),
                Dense::zeros(dims.head_hidden[0], dims.head_hidden[1]),
                Dense::zeros(dims.head_hidden[1], dims.num_classes),
            ],
        }
    }

    fn dense_layers(&self) -> Vec<&Dense> {
        let mut out: Vec<&Dense> = self.embed.iter().collect();
        for a in &self.attn {
            out.push(&a.wp);
            out.push(&a.wv);
        }
        out.extend(self.head.iter());
        out
    }

    fn dense_layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = self.embed.iter_mut().collect();
        for a in &mut self.attn {
            out.push(&mut a.wp);
            out.push(&mut a.wv);
        }
        out.extend(self.head.iter_mut());
        out
    }

    /// Learnable parameter blocks in declaration order: embedding, then per
    /// attention layer `Wp, bp, Wv, bv`, then the head; weights before biases.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        self.dense_layers()
            .into_iter()
            .flat_map(|d| {
                [
                    d.w.as_slice().expect("standard layout"),
                    d.b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.dense_layers_mut()
            .into_iter()
            .flat_map(|d| {
                [
                    d.w.as_slice_mut().expect("standard layout"),
                    d.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.dense_layers().iter().map(|d| d.num_params()).sum()
    }

    pub fn forward(&self, features: &Array2<f64>) -> Result<ForwardCache> {
        let (n, f) = features.dim();
        if n == 0 || f != self.dims.input_dim {
            return Err(Error::shape(
                "refiner features",
                format!("n x {} with n >= 1", self.dims.input_dim),
                format!("{n}x{f}"),
            ));
        }
        let input = self.norm.apply(features);
        let e0_pre = self.embed[0].forward(&input);
        let e0 = relu(&e0_pre);
        let e1_pre = self.embed[1].forward(&e0);
        let e1 = relu(&e1_pre);

        let d = self.dims.embed_dim;
        let mut attn_in = Vec::with_capacity(self.attn.len());
        let mut attn_cache = Vec::with_capacity(self.attn.len());
        let mut attn_out: Vec<Array2<f64>> = Vec::with_capacity(self.attn.len());
        let mut concat = Array2::zeros((n, self.dims.concat_dim()));
        for (k, layer) in self.attn.iter().enumerate() {
            let x = attn_out.last().unwrap_or(&e1).clone();
            let (out, cache) = attention_forward(layer, &x)?;
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite output of attention layer {k}")));
            }
            concat.slice_mut(s![.., k * d..(k + 1) * d]).assign(&out);
            attn_in.push(x);
            attn_cache.push(cache);
            attn_out.push(out);
        }

        let h0_pre = self.head[0].forward(&concat);
        let h0 = relu(&h0_pre);
        let h1_pre = self.head[1].forward(&h0);
        let h1 = relu(&h1_pre);
        let logits = self.head[2].forward(&h1);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        Ok(ForwardCache {
            input,
            embed_pre: [e0_pre, e1_pre],
            embed_out: [e0, e1],
            attn_in,
            attn_cache,
            attn_out,
            concat,
            head_pre: [h0_pre, h1_pre],
            head_out: [h0, h1],
            logits,
        })
    }

    pub fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(features)?.logits)
    }

    /// Logits without keeping activations; attention scores are built
    /// `block` rows at a time.
    pub fn predict_logits(&self, features: &Array2<f64>, block: usize) -> Result<Array2<f64>> {
        let (n, f) = features.dim();
        if n == 0 || f != self.dims.input_dim {
            return Err(Error::shape(
                "refiner features",
                format!("n x {} with n >= 1", self.dims.input_dim),
                format!("{n}x{f}"),
            ));
        }
        let x = relu(&self.embed[0].forward(&self.norm.apply(features)));
        let mut x = relu(&self.embed[1].forward(&x));
        let d = self.dims.embed_dim;
        let mut concat = Array2::zeros((n, self.dims.concat_dim()));
        for (k, layer) in self.attn.iter().enumerate() {
            x = attention_blocked(layer, &x, block)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite output of attention layer {k}")));
            }
            concat.slice_mut(s![.., k * d..(k + 1) * d]).assign(&x);
        }
        let h = relu(&self.head[0].forward(&concat));
        let h = relu(&self.head[1].forward(&h));
        let logits = self.head[2].forward(&h);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        Ok(logits)
    }

    /// Parameter gradients for an upstream gradient on the logits.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Array2<f64>) -> RefinerModel {
        let mut g = RefinerModel::zeros(self.dims);
        let d_h1 = self.head[2].backward(&cache.head_out[1], d_logits, &mut g.head[2]);
        let d_h1 = relu_backward(&cache.head_pre[1], &d_h1);
        let d_h0 = self.head[1].backward(&cache.head_out[0], &d_h1, &mut g.head[1]);
        let d_h0 = relu_backward(&cache.head_pre[0], &d_h0);
        let d_concat = self.head[0].backward(&cache.concat, &d_h0, &mut g.head[0]);

        let d = self.dims.embed_dim;
        // Each layer's output feeds both the concat and the next layer.
        let mut d_next: Option<Array2<f64>> = None;
        for k in (0..self.attn.len()).rev() {
            let mut d_out = d_concat.slice(s![.., k * d..(k + 1) * d]).to_owned();
            if let Some(dn) = d_next.take() {
                d_out += &dn;
            }
            d_next = Some(attention_backward(
                &self.attn[k],
                &cache.attn_in[k],
                &cache.attn_cache[k],
                &d_out,
                &mut g.attn[k],
            ));
        }
        let d_e1 = relu_backward(&cache.embed_pre[1], &d_next.expect("at least one layer"));
        let d_e0 = self.embed[1].backward(&cache.embed_out[0], &d_e1, &mut g.embed[1]);
        let d_e0 = relu_backward(&cache.embed_pre[0], &d_e0);
        self.embed[0].backward(&cache.input, &d_e0, &mut g.embed[0]);
        g
    }

    /// Weighted cross-entropy plus Lovász-Softmax on the softmax of the logits,
    /// with gradients for every learnable parameter.
    pub fn total_loss(
        &self,
        features: &Array2<f64>,
        targets: &[ClassId],
        weights: &[f64],
        ignore: Option<ClassId>,
    ) -> Result<(LossBreakdown, RefinerModel)> {
        let cache = self.forward(features)?;
        let (wce, d_wce) = wce_loss(&cache.logits, targets, weights, ignore)?;
        let probs = softmax_rows(&cache.logits);
        let (lovasz, d_probs) = lovasz_softmax_loss(&probs, targets, ignore)?;
        let d_logits = d_wce + softmax_backward(&probs, &d_probs);
        let grads = self.backward(&cache, &d_logits);
        Ok((
            LossBreakdown {
                total: wce + lovasz,
                wce,
                lovasz,
            },
            grads,
        ))
    }
}
