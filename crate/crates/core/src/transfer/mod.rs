//! Pretraining, head grafting, layer freezing and fine-tuning.

pub mod backbone;
pub mod finetune;
pub mod graft;
pub mod history;
pub mod pretrain;
pub mod source;
pub mod train;

pub use backbone::BackboneSpec;
pub use finetune::{finetune, resume_finetune, FineTuneConfig, FineTunedModel, FreezePolicy};
pub use graft::{graft_head, graft_head_with, head_start, middle_range, HeadSpec, InputLayer};
pub use history::TrainingHistory;
pub use pretrain::{pretrain_backbone, PretrainConfig, PretrainedModel, SourceMeta};
pub use source::{source_samples, SourceTaskConfig, SOURCE_CLASSES, SOURCE_TASK_ID};
pub use train::{evaluate, predict_probabilities, train_epoch, train_until, TrainOptions};
