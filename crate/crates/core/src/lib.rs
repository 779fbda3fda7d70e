//! Short/medium-term electricity demand forecasting with a from-scratch
//! LSTM: smart-meter ingestion, feature engineering, verified-gradient
//! training, closed-loop multi-step forecasting, and MAPE/RMSE experiment
//! harnesses, plus a seeded synthetic dataset generator.

pub mod data;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod lstm;
pub mod training;

pub use data::{ConsumptionMatrix, Dataset, MeterReading, SplitSpec};
pub use eval::{EvalConfig, ExperimentReport, ForecastResult};
pub use features::{FeatureSelector, FeatureWindow, ScalerParams, TimeEncoding, TimeStamp};
pub use linalg::{Matrix, Vector};
pub use lstm::{LstmParams, LstmState, ModelFile, StepTrace};
pub use training::{Gradients, TrainConfig, TrainReport};
