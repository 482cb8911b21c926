//! Training: configuration, Adam, the joint loss and the schedules
//! (`fit_only`, `rendering_guided`, `two_stage`).

pub mod adam;
pub mod config;
pub mod init;
pub mod loss;
pub mod train;

pub use adam::Adam;
pub use config::{MeanMode, TrainMode, TrainingConfig, Weighting};
pub use init::init_from_sfm;
pub use loss::{image_loss, LossTerms};
pub use train::{compress, train, train_two_stage, LogRow, TrainOutcome};
