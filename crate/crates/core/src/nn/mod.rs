//! Dense linear algebra and the GCN / GIN node classifiers.

pub mod dense;
mod loss;
mod model;
mod serialize;
mod train;

pub use dense::DenseMatrix;
pub use loss::{accuracy, accuracy_from_logits, cross_entropy, log_softmax_rows, softmax_rows};
pub use model::{
    backward, gcn_forward, gin_forward, Activation, ForwardCache, Gradients, Model, ModelKind,
};
pub use serialize::{load_model, model_from_json, model_to_json, save_model};
pub use train::{train, EpochRecord, TrainConfig, Trained};
