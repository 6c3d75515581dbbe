//! Neural networks: GRU sequence models and ReLU perceptrons.

pub mod adam;
pub mod dense;
pub mod forecast;
pub mod gru;
pub mod model;
pub mod train;

pub use adam::Adam;
pub use dense::{DenseHead, Mlp};
pub use forecast::{ModelBundle, YearForecasts};
pub use gru::{gru_cell_backward, gru_cell_forward, GruCache, GruParams};
pub use model::{batch_loss_grad, mae_loss, ForwardCache, HeadMode, Mode, SeqModel};
pub use train::{derive_seed, train, train_mlp, Hyperparams, TrainedModel};
