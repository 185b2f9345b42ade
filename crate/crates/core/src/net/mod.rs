//! The selection network and its training.

pub mod bundle;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use bundle::{BundleKind, ModelBundle, Normalization, Prediction, MODEL_FORMAT_VERSION};
pub use model::{joint_loss, ArchitectureSpec, BnMode, ConvBlockSpec, HeadOutput, LossOutput, Model, Params, Variant};
pub use optim::Adam;
pub use tensor::Tensor;
pub use train::{evaluate, macro_f1, weighted_f1, stratified_split, train, train_model, EvalStats, EpochLog, FreezeSchedule, TrainConfig, TrainOutcome};

#[cfg(test)]
mod tests;
