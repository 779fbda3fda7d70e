//! Forecast metrics (MAPE, RMSE, range-normalized RMSE) and the experiment
//! harnesses that train, forecast, and score per month and per cluster.

mod experiments;

pub use experiments::{
    fit_series, forecast_tail, month_slices, month_view, run_annual_15day,
    run_annual_15day_with, run_clusters_3day, run_clusters_3day_with, run_monthly_3day,
    run_monthly_3day_with, EvalConfig, FittedModel, ForecastModel, ForecastTask, LstmModel,
    MonthSlice, PerfectModel, PersistenceModel, TrainedForecaster, HORIZON_15_DAY,
    HORIZON_3_DAY,
};

use thiserror::Error;

use crate::data::DataError;
use crate::features::{FeatureError, FeatureSelector, TimeStamp};
use crate::lstm::LstmError;
use crate::training::TrainError;

/// Actual values at or below this magnitude (kWh) make the percentage error
/// meaningless; the metric refuses them instead of silently corrupting.
pub const MAPE_ACTUAL_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("series lengths differ: actual {actual}, predicted {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("empty series")]
    Empty,
    #[error("MAPE undefined: |actual| <= {floor} at indices {indices:?}", floor = MAPE_ACTUAL_FLOOR)]
    MapeNearZeroActual { indices: Vec<usize> },
    #[error("normalized RMSE undefined: actual series has zero range")]
    ConstantActual,
    #[error("no cluster {0} in the dataset")]
    UnknownCluster(u32),
    #[error("month {year}-{month:02} has {len} points, need at least {needed}")]
    MonthTooShort {
        year: i32,
        month: u32,
        len: usize,
        needed: usize,
    },
    #[error("month {year}-{month:02} not present in the dataset")]
    MonthNotFound { year: i32, month: u32 },
    #[error("dataset spans {len} points, need at least {needed} for this experiment")]
    SpanTooShort { len: usize, needed: usize },
    #[error("test segment has {test_len} points, horizon needs {horizon}")]
    TestShorterThanHorizon { test_len: usize, horizon: usize },
    #[error("persistence baseline needs {needed} points of history, got {got}")]
    NotEnoughHistory { needed: usize, got: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<(), EvalError> {
    if actual.is_empty() || predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    Ok(())
}

/// Mean absolute percentage error: `100/n * sum |a - p| / |a|`.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let offending: Vec<usize> = actual
        .iter()
        .enumerate()
        .filter(|(_, a)| a.abs() <= MAPE_ACTUAL_FLOOR)
        .map(|(i, _)| i)
        .collect();
    if !offending.is_empty() {
        return Err(EvalError::MapeNearZeroActual { indices: offending });
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted.iter())
        .map(|(a, p)| (a - p).abs() / a.abs())
        .sum();
    Ok(100.0 * sum / actual.len() as f64)
}

/// Plain RMSE in the series' own units.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let n = actual.len() as f64;
    Ok((actual
        .iter()
        .zip(predicted.iter())
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// RMSE normalized by the actual series' range, in percent.
// Negated comparison so a NaN range is rejected.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn nrmse_percent(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let max = actual.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = actual.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Err(EvalError::ConstantActual);
    }
    Ok(100.0 * rmse(actual, predicted)? / (max - min))
}

/// A scored horizon: predictions against actuals with all three metrics.
#[derive(Clone, Debug)]
pub struct ForecastResult {
    pub timestamps: Vec<TimeStamp>,
    pub predicted_kwh: Vec<f64>,
    pub actual_kwh: Vec<f64>,
    pub mape_percent: f64,
    pub rmse_kwh: f64,
    pub nrmse_percent: f64,
}

impl ForecastResult {
    pub fn score(
        timestamps: Vec<TimeStamp>,
        actual_kwh: Vec<f64>,
        predicted_kwh: Vec<f64>,
    ) -> Result<Self, EvalError> {
        check_pair(&actual_kwh, &predicted_kwh)?;
        if timestamps.len() != actual_kwh.len() {
            return Err(EvalError::LengthMismatch {
                actual: actual_kwh.len(),
                predicted: timestamps.len(),
            });
        }
        let mape_percent = mape(&actual_kwh, &predicted_kwh)?;
        let rmse_kwh = rmse(&actual_kwh, &predicted_kwh)?;
        let nrmse_percent = nrmse_percent(&actual_kwh, &predicted_kwh)?;
        Ok(ForecastResult {
            timestamps,
            predicted_kwh,
            actual_kwh,
            mape_percent,
            rmse_kwh,
            nrmse_percent,
        })
    }

    pub fn horizon(&self) -> usize {
        self.predicted_kwh.len()
    }

    /// CSV with header `timestamp,actual_kwh,predicted_kwh`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,actual_kwh,predicted_kwh\n");
        for ((t, a), p) in self
            .timestamps
            .iter()
            .zip(self.actual_kwh.iter())
            .zip(self.predicted_kwh.iter())
        {
            out.push_str(&format!("{t},{a},{p}\n"));
        }
        out
    }
}

/// One scored cell of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    /// "month", "cluster", or "average".
    pub scope: &'static str,
    /// `YYYY-MM`, empty on average rows.
    pub month: String,
    pub cluster: u32,
    pub features: FeatureSelector,
    pub mape_percent: f64,
    pub rmse_kwh: f64,
    pub nrmse_percent: f64,
}

/// How average rows group the detail rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupBy {
    /// One average row per feature set (the monthly experiment).
    Features,
    /// One average row per cluster (the remaining-clusters experiment).
    Cluster,
}

/// Detail rows plus recomputable aggregate averages.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub averages: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn from_rows(rows: Vec<ReportRow>, group: GroupBy) -> Self {
        let averages = compute_averages(&rows, group);
        ExperimentReport { rows, averages }
    }

    /// CSV with header
    /// `scope,month,cluster,features,mape_percent,rmse_kwh,nrmse_percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,month,cluster,features,mape_percent,rmse_kwh,nrmse_percent\n");
        for row in self.rows.iter().chain(self.averages.iter()) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.scope,
                row.month,
                row.cluster,
                row.features,
                row.mape_percent,
                row.rmse_kwh,
                row.nrmse_percent
            ));
        }
        out
    }
}

fn compute_averages(rows: &[ReportRow], group: GroupBy) -> Vec<ReportRow> {
    let mut keys: Vec<(u32, FeatureSelector)> = Vec::new();
    for row in rows {
        let key = match group {
            GroupBy::Features => (0, row.features),
            GroupBy::Cluster => (row.cluster, row.features),
        };
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(cluster_key, features)| {
            let members: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| match group {
                    GroupBy::Features => r.features == features,
                    GroupBy::Cluster => r.cluster == cluster_key && r.features == features,
                })
                .collect();
            let n = members.len() as f64;
            let mean = |f: fn(&ReportRow) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
            ReportRow {
                scope: "average",
                month: String::new(),
                cluster: if group == GroupBy::Cluster {
                    cluster_key
                } else {
                    members.first().map_or(0, |r| r.cluster)
                },
                features,
                mape_percent: mean(|r| r.mape_percent),
                rmse_kwh: mean(|r| r.rmse_kwh),
                nrmse_percent: mean(|r| r.nrmse_percent),
            }
        })
        .collect()
}
