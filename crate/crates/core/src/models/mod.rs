//! Word-prediction networks over MFCC frames, their cross-entropy loss,
//! Adam training and checkpoint files.

mod arch;
mod checkpoint;
pub mod loss;
mod network;
mod train;

pub use arch::{ArchitectureSpec, LayerSpec, Variant};
pub use checkpoint::{load_checkpoint, save_checkpoint, EpochRecord, ModelCheckpoint, TrainingMetadata};
pub use loss::{batch_bow_loss, binary_entropy, bow_loss, bow_loss_grad};
pub use network::{Batch, Model, Prediction};
pub use train::{mean_loss, predict_all, train, Example, TrainConfig};
