//! Self-attention refiner for uncertain points: network, losses with exact
//! gradients, training loop and checkpoint format.

pub mod attention;
pub mod checkpoint;
pub mod dense;
pub mod loss;
pub mod model;
pub mod train;

pub use attention::{attention_layer, AttentionLayer};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{class_weights_from_counts, lovasz_softmax_loss, wce_loss};
pub use model::{FeatureNorm, LossBreakdown, ModelDims, RefinerModel};
pub use train::{refine, train, EpochLog, RefineConfig, TrainConfig, TrainingScan};
