//! Feature engineering for half-hourly demand series: the concatenated
//! day/interval time feature, min-max scaling, and sliding-window dataset
//! construction.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vector;

/// Number of 30-minute intervals in a day.
pub const INTERVALS_PER_DAY: u32 = 48;

/// Largest value the concatenated day/interval code can take: Saturday (7)
/// at interval 48 concatenates to 748.
pub const TIME_CODE_MAX: f64 = 748.0;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("minutes must be :00 or :30, got :{0:02}")]
    OffGridMinute(u32),
    #[error("invalid clock time {hour:02}:{minute:02}")]
    InvalidClock { hour: u32, minute: u32 },
    #[error("day code must be 1..=7, got {0}")]
    DayCodeOutOfRange(u8),
    #[error("interval index must be 1..=48, got {0}")]
    IntervalOutOfRange(u8),
    #[error("cannot fit scaler: {0}")]
    DegenerateScaler(String),
    #[error("series too short: need at least {needed} aligned points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("series lengths differ: consumption {consumption}, temperature {temperature}, timestamps {timestamps}")]
    MisalignedSeries {
        consumption: usize,
        temperature: usize,
        timestamps: usize,
    },
}

/// A point on the half-hourly metering grid.
///
/// Wraps a naive local timestamp whose minutes are always :00 or :30, and
/// derives the day-of-week code (Sunday = 1 .. Saturday = 7) and the
/// in-day interval index (00:00 = 1 .. 23:30 = 48).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeStamp(NaiveDateTime);

impl TimeStamp {
    pub fn new(datetime: NaiveDateTime) -> Result<Self, FeatureError> {
        if !datetime.minute().is_multiple_of(30) || datetime.second() != 0 {
            return Err(FeatureError::OffGridMinute(datetime.minute()));
        }
        Ok(TimeStamp(datetime))
    }

    pub fn from_ymd_hm(
        year: i32,
        month: u32,
        day: u32,
        hour: u32,
        minute: u32,
    ) -> Result<Self, FeatureError> {
        let date = NaiveDate::from_ymd_opt(year, month, day)
            .ok_or(FeatureError::InvalidClock { hour, minute })?;
        let dt = date
            .and_hms_opt(hour, minute, 0)
            .ok_or(FeatureError::InvalidClock { hour, minute })?;
        Self::new(dt)
    }

    pub fn datetime(&self) -> NaiveDateTime {
        self.0
    }

    pub fn date(&self) -> NaiveDate {
        self.0.date()
    }

    pub fn year_month(&self) -> (i32, u32) {
        (self.0.year(), self.0.month())
    }

    /// In-day interval index, 1..=48.
    pub fn interval_index(&self) -> u8 {
        (2 * self.0.hour() + self.0.minute() / 30 + 1) as u8
    }

    /// Day-of-week code with Sunday = 1 and Saturday = 7.
    pub fn day_code(&self) -> u8 {
        (self.0.weekday().num_days_from_sunday() + 1) as u8
    }

    /// The next point on the 30-minute grid.
    pub fn next(&self) -> TimeStamp {
        TimeStamp(self.0 + Duration::minutes(30))
    }

    /// Whole 30-minute steps from `earlier` to `self`; negative if `self`
    /// precedes `earlier`. `None` when the two are not grid-aligned.
    pub fn intervals_since(&self, earlier: &TimeStamp) -> Option<i64> {
        let minutes = (self.0 - earlier.0).num_minutes();
        (minutes % 30 == 0).then_some(minutes / 30)
    }

    pub fn time_feature(&self, encoding: TimeEncoding) -> f64 {
        match encoding {
            TimeEncoding::Concat => encode_time(self.day_code(), self.interval_index())
                .expect("valid by construction"),
            TimeEncoding::Sequential => {
                encode_time_sequential(self.day_code(), self.interval_index())
                    .expect("valid by construction")
            }
        }
    }
}

impl std::fmt::Display for TimeStamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M"))
    }
}

impl std::str::FromStr for TimeStamp {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dt = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").map_err(|_| {
            FeatureError::InvalidClock { hour: 99, minute: 99 }
        })?;
        Self::new(dt)
    }
}

/// Maps a clock time to the in-day interval index: 00:00 -> 1, 23:30 -> 48.
pub fn interval_of_clock(hour: u32, minute: u32) -> Result<u8, FeatureError> {
    if hour > 23 || minute > 59 {
        return Err(FeatureError::InvalidClock { hour, minute });
    }
    if minute != 0 && minute != 30 {
        // Raw meter data is aggregated on the half hour; anything else is a
        // grid violation, not a value to round.
        return Err(FeatureError::OffGridMinute(minute));
    }
    Ok((2 * hour + minute / 30 + 1) as u8)
}

/// How the (day, interval) pair is folded into a single scalar feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeEncoding {
    /// Digit concatenation of day code and interval index, divided by 748.
    /// Non-monotonic within a day between intervals 9 and 10, but every one
    /// of the 336 week slots gets a unique value.
    #[default]
    Concat,
    /// Strictly increasing alternative: ((day - 1) * 48 + interval) / 336.
    /// Kept behind this switch for ablation runs; off by default.
    Sequential,
}

/// Concatenates the day code onto the interval index and normalizes by the
/// largest code (Saturday at 23:30 -> 748). Interval indices below 10 take a
/// single digit, so Tuesday (3) at interval 18 becomes 318 and Sunday (1) at
/// interval 1 becomes 11.
pub fn encode_time(day_code: u8, interval: u8) -> Result<f64, FeatureError> {
    if !(1..=7).contains(&day_code) {
        return Err(FeatureError::DayCodeOutOfRange(day_code));
    }
    if !(1..=48).contains(&interval) {
        return Err(FeatureError::IntervalOutOfRange(interval));
    }
    let concat = if interval < 10 {
        day_code as u32 * 10 + interval as u32
    } else {
        day_code as u32 * 100 + interval as u32
    };
    Ok(concat as f64 / TIME_CODE_MAX)
}

/// The monotonic ablation encoding: ((day - 1) * 48 + interval) / 336.
pub fn encode_time_sequential(day_code: u8, interval: u8) -> Result<f64, FeatureError> {
    if !(1..=7).contains(&day_code) {
        return Err(FeatureError::DayCodeOutOfRange(day_code));
    }
    if !(1..=48).contains(&interval) {
        return Err(FeatureError::IntervalOutOfRange(interval));
    }
    let slot = (day_code as u32 - 1) * INTERVALS_PER_DAY + interval as u32;
    Ok(slot as f64 / 336.0)
}

/// Min-max bounds for one scaled channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: f64,
    pub max: f64,
}

/// Records the min and max of a series. Fit this on the training portion
/// only; fitting across the split boundary leaks the test range.
// Negated comparison so NaN inputs surface as a degenerate-scaler error.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn fit_scaler(series: &[f64]) -> Result<ScalerParams, FeatureError> {
    if series.is_empty() {
        return Err(FeatureError::DegenerateScaler("empty series".into()));
    }
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(FeatureError::DegenerateScaler(format!(
            "constant series (min = max = {min})"
        )));
    }
    Ok(ScalerParams { min, max })
}

/// Maps `x` into scaler coordinates. Values outside the fitted range map
/// outside [0, 1] and are intentionally not clipped.
pub fn scale(x: f64, s: &ScalerParams) -> f64 {
    (x - s.min) / (s.max - s.min)
}

/// Exact inverse of [`scale`].
pub fn unscale(y: f64, s: &ScalerParams) -> f64 {
    y * (s.max - s.min) + s.min
}

/// Which input channels feed the network. Consumption is always first;
/// the remaining channels keep the order temperature, then time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSelector {
    #[serde(rename = "consumption+temperature")]
    ConsumptionTemperature,
    #[serde(rename = "consumption+time")]
    ConsumptionTime,
    #[serde(rename = "all")]
    #[default]
    All,
}

impl FeatureSelector {
    pub fn input_size(&self) -> usize {
        match self {
            FeatureSelector::ConsumptionTemperature | FeatureSelector::ConsumptionTime => 2,
            FeatureSelector::All => 3,
        }
    }

    pub fn uses_temperature(&self) -> bool {
        matches!(
            self,
            FeatureSelector::ConsumptionTemperature | FeatureSelector::All
        )
    }

    pub fn uses_time(&self) -> bool {
        matches!(self, FeatureSelector::ConsumptionTime | FeatureSelector::All)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureSelector::ConsumptionTemperature => "consumption+temperature",
            FeatureSelector::ConsumptionTime => "consumption+time",
            FeatureSelector::All => "all",
        }
    }

    /// Builds the non-consumption channels for one step, in selector order.
    pub fn exogenous(
        &self,
        temperature: f64,
        timestamp: &TimeStamp,
        encoding: TimeEncoding,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(2);
        if self.uses_temperature() {
            out.push(temperature);
        }
        if self.uses_time() {
            out.push(timestamp.time_feature(encoding));
        }
        out
    }
}

impl std::fmt::Display for FeatureSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSelector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "3" => Ok(FeatureSelector::All),
            "consumption+temperature" | "consumption+temp" | "temp" | "temperature" => {
                Ok(FeatureSelector::ConsumptionTemperature)
            }
            "consumption+time" | "time" => Ok(FeatureSelector::ConsumptionTime),
            other => Err(format!(
                "unknown feature selector '{other}' (expected all, consumption+temperature or consumption+time)"
            )),
        }
    }
}

/// One supervised training window: `window_len` steps of input features and,
/// per step, the next step's normalized consumption as the target.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWindow {
    pub inputs: Vec<Vector>,
    pub targets: Vec<f64>,
}

impl FeatureWindow {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.inputs.first().map_or(0, Vector::len)
    }
}

/// Slides a stride-1 window over three aligned series and emits one
/// [`FeatureWindow`] per position. `consumption` and `temperature` must
/// already be normalized; the time feature is computed here from the
/// timestamps.
pub fn build_windows(
    consumption: &[f64],
    temperature: &[f64],
    timestamps: &[TimeStamp],
    window_len: usize,
    selector: FeatureSelector,
    encoding: TimeEncoding,
) -> Result<Vec<FeatureWindow>, FeatureError> {
    assert!(window_len >= 1, "window length must be positive");
    let n = consumption.len();
    if temperature.len() != n || timestamps.len() != n {
        return Err(FeatureError::MisalignedSeries {
            consumption: n,
            temperature: temperature.len(),
            timestamps: timestamps.len(),
        });
    }
    if n < window_len + 1 {
        return Err(FeatureError::SeriesTooShort {
            needed: window_len + 1,
            got: n,
        });
    }

    let step_input = |t: usize| -> Vector {
        let mut v = Vec::with_capacity(selector.input_size());
        v.push(consumption[t]);
        v.extend(selector.exogenous(temperature[t], &timestamps[t], encoding));
        Vector::new(v)
    };

    let mut windows = Vec::with_capacity(n - window_len);
    for start in 0..n - window_len {
        let inputs = (start..start + window_len).map(step_input).collect();
        let targets = consumption[start + 1..start + window_len + 1].to_vec();
        windows.push(FeatureWindow { inputs, targets });
    }
    Ok(windows)
}
