//! Data generation, training, sampling, evaluation and verification, plus
//! the file formats they share.

pub mod config;
pub mod data;
pub mod eval;
pub mod formats;
pub mod sample;
pub mod train;
pub mod verify;

pub use config::RunConfig;
pub use data::{gen_data, Dataset, ObjectData, Shape};
pub use eval::{eval_cmd, proportion_interval, EvalItem, EvalReport};
pub use formats::{read_grasps, write_grasps, CloudRecord, GraspRecord};
pub use sample::{load_model, model_from_checkpoint, sample_cmd, trace_tsv, SampleRun};
pub use train::{train, write_training_outputs, Adam, TrainReport};
pub use verify::{verify_cmd, SuiteResult, SuiteStatus, VerifyOptions, VerifyReport};
