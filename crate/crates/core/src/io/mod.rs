//! File formats: model containers, signal CSVs, loss histories, JSON reports.

mod container;
mod signals;

pub use container::{load_model, model_from_bytes, model_to_bytes, save_model, ArrayEntry, MAGIC};
pub use signals::{
    metadata_path, read_loss_history, read_signals, write_json, write_loss_history, write_signals,
    LossRecord, SignalMetadata,
};
