//! Small residual convnet with hand-written reverse mode, losses, optimizers,
//! training loops, saliency and checkpoints.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod optim;
mod train;

pub use checkpoint::{
    check_compatible, decode_params, encode_params, load_params, load_params_for, save_params, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use layers::ReluBackward;
pub use loss::{bce_logit_grad, loss_bce, PROB_EPS};
pub use model::{guided_backprop, sigmoid, ConvNetConfig, ForwardCache, Gradients, ModelParams};
pub use optim::{OptimizerKind, OptimizerState};
pub use train::{
    finetune, pretrain_then_finetune, train, validation_scores, weighted_schedule, with_negative_ratio, Dataset, EpochRecord, History, Schedule,
    StopCriterion, StrongSet, TrainOutcome, TwoStageOutcome, TwoStageSchedule, HISTORY_CSV_HEADER,
};
