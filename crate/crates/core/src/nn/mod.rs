//! Neural-network gap filling: a bank of small width-specific networks, the
//! gap scheduler, training and model files.

mod model;
pub mod persist;
mod recover;
mod schedule;
mod train;

pub use model::{
    bank_param_count, bank_storage_bytes, model_param_count, window_scale, ModelKind, NnBank, NnModel, STD_FLOOR,
};
pub use persist::{load_bank, read_bank, save_bank, write_bank, Precision};
pub use recover::{recover_gaps, recover_gaps_unscheduled, NnRecovery};
pub use schedule::{input_layout, schedule_gaps, InputLayout, ScheduleResult, ScheduledGap};
pub use train::{
    gap_nmse, generate_dataset, loss_and_gradient, normalized_mse, train_bank, train_model, train_on, Dataset,
    Gradient, TrainReport, TrainingConfig,
};
