//! Representation model, losses and training loops.

pub mod loss;
pub mod network;
pub mod train;

pub use loss::{
    cross_entropy_loss, nt_xent_loss, softmax, supcon_loss, LossConfig, LossGrad,
};
pub use network::{Architecture, Dense, EncoderParams, ForwardPass};
pub use train::{
    augment, classifier_training_set, finetune_classifier, init_params, predict, predict_batch,
    representations, total_loss, total_loss_with_grad, train_classifier,
    train_representation, train_supervised_baseline, TrainConfig, TrainOutcome,
};
