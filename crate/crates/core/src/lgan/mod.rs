//! Conditional ConvLSTM GAN with locked (frozen) training phases.

mod loss;
mod network;
mod persist;
mod train;

pub use loss::{
    bce_loss, cross_entropy_graph, discriminator_loss, discriminator_loss_graph, generator_loss,
    generator_loss_graph, jsd, minimax_value, minimax_value_at_optimum, optimal_discriminator, GeneratorLoss,
    PROB_EPS,
};
pub use network::{
    discriminator_graph, generator_graph, one_hot, record_frames, uniform_condition, Discriminator,
    DiscriminatorNodes, DiscriminatorOutput, DiscriminatorSpec, Generator, GeneratorSpec, RecordLayout,
};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use train::{
    argmax, class_probabilities, classify, predict, train_lgan, train_lgan_observed, LganConfig, LganHistory,
    LganModel, NoObserver, Phase, StepEvent, TrainObserver, EPOCH_CHOICES,
};
