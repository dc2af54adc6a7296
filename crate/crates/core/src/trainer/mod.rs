//! Optimizers, joint adversarial and self-supervised steps, pseudo labels,
//! training state archives, experiment configuration and the run driver.

pub mod config;
pub mod experiment;
pub mod optim;
pub mod pseudo;
pub mod state;
pub mod step;

pub use config::{apply_overrides, config_from_table, load_config, parse_table, ExperimentConfig};
pub use experiment::{initial_state, prepare_data, run_experiment, run_ssl_from, step_config, Datasets, EpochSampler, RunReport};
pub use optim::{poly_lr, Adam, Sgd};
pub use pseudo::{generate_pseudo_labels, pseudo_label_records, quantile, uncertainty_gate, GatePolicy, UncertaintyMap};
pub use state::{load_train_state, save_train_state};
pub use step::{ssl_step, train_step, BaseSupervision, Batch, LrSchedule, ModuleDiscriminators, OptimConfig, StepConfig, StepMetrics, TrainState};
