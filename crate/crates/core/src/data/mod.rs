//! Smart-meter data handling: ingestion, consumption-matrix assembly and
//! cleaning, cluster-profile aggregation, chronological splitting, and the
//! seeded synthetic dataset generator.

mod io;
mod synthetic;

pub use io::{
    load_data_dir, load_meter_files, parse_clusters_csv, parse_meter_csv,
    parse_temperature_csv, write_atomic, write_clusters_csv, write_dataset_dir,
    write_meter_csv, write_temperature_csv, LoadedDataDir, SynthManifest,
    GENERATOR_VERSION, MANIFEST_FILE,
};
pub use synthetic::{generate_synthetic, SeasonalTempSpec, SyntheticData, CLUSTER_COUNT};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::features::{FeatureError, TimeStamp};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: {message}")]
    MalformedRow { location: String, message: String },
    #[error("expected header `{expected}`, got `{got}`")]
    BadHeader { expected: String, got: String },
    #[error("{location}: negative energy value {value}")]
    NegativeEnergy { location: String, value: f64 },
    #[error("duplicate reading for consumer {consumer} at {timestamp}: rows {first} and {second}")]
    DuplicateReading {
        consumer: ConsumerId,
        timestamp: TimeStamp,
        first: String,
        second: String,
    },
    #[error("no {0} supplied")]
    Empty(&'static str),
    #[error("every row of the matrix had missing cells; nothing left after cleaning")]
    AllRowsRemoved,
    #[error("matrix still has missing cells; run drop_incomplete first")]
    IncompleteMatrix,
    #[error("consumer {0} has no cluster assignment")]
    UnassignedConsumer(ConsumerId),
    #[error("cluster assignment names consumer {0} which is not in the matrix")]
    UnknownConsumer(ConsumerId),
    #[error("cluster {0} has no members")]
    EmptyCluster(u32),
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("{segment} segment has {len} points, need at least {min}")]
    SegmentTooShort {
        segment: &'static str,
        len: usize,
        min: usize,
    },
    #[error("temperature series does not cover {timestamp} (nearest sample {nearest_minutes} minutes away)")]
    TemperatureCoverage {
        timestamp: TimeStamp,
        nearest_minutes: i64,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

/// Opaque consumer label. Cheap to clone; readings for the same consumer
/// share one allocation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConsumerId(Arc<str>);

impl ConsumerId {
    pub fn new(label: &str) -> Self {
        ConsumerId(Arc::from(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ConsumerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConsumerId {
    fn from(label: &str) -> Self {
        ConsumerId::new(label)
    }
}

/// One smart-meter record: energy over one 30-minute interval.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterReading {
    pub consumer_id: ConsumerId,
    pub timestamp: TimeStamp,
    pub kwh: f64,
}

/// Interval-by-consumer energy matrix with its aligned time index.
///
/// Cells may be absent (a consumer missing a time instance) until
/// [`drop_incomplete`] removes the affected rows. Absence is stored as NaN
/// internally; energies themselves are always finite and nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionMatrix {
    values: Vec<f64>,
    time_index: Vec<TimeStamp>,
    consumer_ids: Vec<ConsumerId>,
}

impl ConsumptionMatrix {
    pub fn rows(&self) -> usize {
        self.time_index.len()
    }

    pub fn consumers(&self) -> usize {
        self.consumer_ids.len()
    }

    pub fn time_index(&self) -> &[TimeStamp] {
        &self.time_index
    }

    pub fn consumer_ids(&self) -> &[ConsumerId] {
        &self.consumer_ids
    }

    /// Cell value, or `None` where the consumer has no reading.
    pub fn cell(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.consumer_ids.len() + col];
        (!v.is_nan()).then_some(v)
    }

    pub fn row_values(&self, row: usize) -> &[f64] {
        let w = self.consumer_ids.len();
        &self.values[row * w..(row + 1) * w]
    }

    pub fn is_complete(&self) -> bool {
        !self.values.iter().any(|v| v.is_nan())
    }

    pub fn missing_cell_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// True when consecutive timestamps are exactly 30 minutes apart.
    pub fn has_uniform_grid(&self) -> bool {
        self.time_index
            .windows(2)
            .all(|w| w[1].intervals_since(&w[0]) == Some(1))
    }
}

/// Reorganizes readings into the interval-by-consumer matrix: rows are the
/// observed timestamps ascending, columns the consumers sorted by label.
/// Cells nobody reported stay absent for [`drop_incomplete`] to deal with.
pub fn build_matrix(readings: &[MeterReading]) -> Result<ConsumptionMatrix, DataError> {
    if readings.is_empty() {
        return Err(DataError::Empty("readings"));
    }

    let mut stamp_set: BTreeSet<TimeStamp> = BTreeSet::new();
    let mut consumer_set: BTreeSet<ConsumerId> = BTreeSet::new();
    for r in readings {
        stamp_set.insert(r.timestamp);
        if !consumer_set.contains(&r.consumer_id) {
            consumer_set.insert(r.consumer_id.clone());
        }
    }
    let time_index: Vec<TimeStamp> = stamp_set.into_iter().collect();
    let consumer_ids: Vec<ConsumerId> = consumer_set.into_iter().collect();

    let row_of: HashMap<TimeStamp, usize> = time_index
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, i))
        .collect();
    let col_of: HashMap<ConsumerId, usize> = consumer_ids
        .iter()
        .enumerate()
        .map(|(i, c)| (c.clone(), i))
        .collect();

    let width = consumer_ids.len();
    let mut values = vec![f64::NAN; time_index.len() * width];
    for r in readings {
        let row = row_of[&r.timestamp];
        let col = col_of[&r.consumer_id];
        let cell = &mut values[row * width + col];
        if !cell.is_nan() {
            return Err(DataError::DuplicateReading {
                consumer: r.consumer_id.clone(),
                timestamp: r.timestamp,
                first: "earlier reading".into(),
                second: "later reading".into(),
            });
        }
        *cell = r.kwh;
    }

    Ok(ConsumptionMatrix {
        values,
        time_index,
        consumer_ids,
    })
}

/// Removes every row (time instance) with at least one absent cell, keeping
/// consumers intact, and reports which timestamps went.
pub fn drop_incomplete(
    matrix: &ConsumptionMatrix,
) -> Result<(ConsumptionMatrix, Vec<TimeStamp>), DataError> {
    let mut kept_values = Vec::with_capacity(matrix.values.len());
    let mut kept_index = Vec::with_capacity(matrix.rows());
    let mut removed = Vec::new();
    for (row, stamp) in matrix.time_index.iter().enumerate() {
        let cells = matrix.row_values(row);
        if cells.iter().any(|v| v.is_nan()) {
            removed.push(*stamp);
        } else {
            kept_values.extend_from_slice(cells);
            kept_index.push(*stamp);
        }
    }
    if kept_index.is_empty() {
        return Err(DataError::AllRowsRemoved);
    }
    Ok((
        ConsumptionMatrix {
            values: kept_values,
            time_index: kept_index,
            consumer_ids: matrix.consumer_ids.clone(),
        },
        removed,
    ))
}

/// The per-interval mean consumption of one cluster's members.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterProfile {
    pub cluster_id: u32,
    pub members: Vec<ConsumerId>,
    pub profile: Vec<f64>,
}

/// Aggregates matrix columns into per-cluster mean profiles. Every matrix
/// consumer must be assigned, every assigned consumer must exist, and no
/// cluster may end up empty.
pub fn cluster_profile(
    matrix: &ConsumptionMatrix,
    assignment: &BTreeMap<ConsumerId, u32>,
) -> Result<Vec<ClusterProfile>, DataError> {
    if !matrix.is_complete() {
        return Err(DataError::IncompleteMatrix);
    }
    for id in assignment.keys() {
        if !matrix.consumer_ids.contains(id) {
            return Err(DataError::UnknownConsumer(id.clone()));
        }
    }

    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (col, id) in matrix.consumer_ids.iter().enumerate() {
        let cluster = assignment
            .get(id)
            .ok_or_else(|| DataError::UnassignedConsumer(id.clone()))?;
        members.entry(*cluster).or_default().push(col);
    }

    let mut profiles = Vec::with_capacity(members.len());
    for (cluster_id, cols) in members {
        if cols.is_empty() {
            return Err(DataError::EmptyCluster(cluster_id));
        }
        let inv = 1.0 / cols.len() as f64;
        let mut profile = Vec::with_capacity(matrix.rows());
        for row in 0..matrix.rows() {
            let cells = matrix.row_values(row);
            profile.push(cols.iter().map(|&c| cells[c]).sum::<f64>() * inv);
        }
        profiles.push(ClusterProfile {
            cluster_id,
            members: cols
                .iter()
                .map(|&c| matrix.consumer_ids[c].clone())
                .collect(),
            profile,
        });
    }
    Ok(profiles)
}

/// Chronological train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64) -> Result<Self, DataError> {
        let spec = SplitSpec {
            train_frac,
            val_frac,
            test_frac,
        };
        spec.validate()?;
        Ok(spec)
    }

    // Negated comparisons so NaN fails validation.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), DataError> {
        for (name, v) in [
            ("train_frac", self.train_frac),
            ("val_frac", self.val_frac),
            ("test_frac", self.test_frac),
        ] {
            if !(v > 0.0) {
                return Err(DataError::BadSplit(format!("{name} must be > 0, got {v}")));
            }
        }
        let sum = self.train_frac + self.val_frac + self.test_frac;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::BadSplit(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.70,
            val_frac: 0.10,
            test_frac: 0.20,
        }
    }
}

/// Splits a series into contiguous chronological train/validation/test
/// segments: train and validation take `floor(frac * n)` points, test takes
/// the remainder. No shuffling; each segment must reach `min_segment`.
#[allow(clippy::type_complexity)]
pub fn split_chrono<'a, T>(
    series: &'a [T],
    spec: &SplitSpec,
    min_segment: usize,
) -> Result<(&'a [T], &'a [T], &'a [T]), DataError> {
    spec.validate()?;
    let n = series.len();
    let train_len = (spec.train_frac * n as f64).floor() as usize;
    let val_len = (spec.val_frac * n as f64).floor() as usize;
    let test_len = n - train_len - val_len;
    for (segment, len) in [
        ("train", train_len),
        ("validation", val_len),
        ("test", test_len),
    ] {
        if len < min_segment {
            return Err(DataError::SegmentTooShort {
                segment,
                len,
                min: min_segment,
            });
        }
    }
    let (train, rest) = series.split_at(train_len);
    let (val, test) = rest.split_at(val_len);
    Ok((train, val, test))
}

/// Resamples temperature samples onto a 30-minute grid. Interior grid points
/// between samples are linearly interpolated (hourly input is fine); the
/// first/last sample is held for up to an hour past the ends.
pub fn align_temperature(
    samples: &[(TimeStamp, f64)],
    grid: &[TimeStamp],
) -> Result<Vec<f64>, DataError> {
    const MAX_EDGE_HOLD_MINUTES: i64 = 60;
    if samples.is_empty() {
        return Err(DataError::Empty("temperature samples"));
    }
    let mut sorted: Vec<(TimeStamp, f64)> = samples.to_vec();
    sorted.sort_by_key(|(t, _)| *t);

    let mut out = Vec::with_capacity(grid.len());
    let mut cursor = 0usize;
    for stamp in grid {
        while cursor + 1 < sorted.len() && sorted[cursor + 1].0 <= *stamp {
            cursor += 1;
        }
        let (t0, v0) = sorted[cursor];
        let value = if t0 == *stamp {
            v0
        } else if *stamp < t0 {
            // Before the first sample (cursor can only be 0 here).
            let gap = (t0.datetime() - stamp.datetime()).num_minutes();
            if gap > MAX_EDGE_HOLD_MINUTES {
                return Err(DataError::TemperatureCoverage {
                    timestamp: *stamp,
                    nearest_minutes: gap,
                });
            }
            v0
        } else if cursor + 1 < sorted.len() {
            let (t1, v1) = sorted[cursor + 1];
            let span = (t1.datetime() - t0.datetime()).num_minutes() as f64;
            let frac = (stamp.datetime() - t0.datetime()).num_minutes() as f64 / span;
            v0 + frac * (v1 - v0)
        } else {
            let gap = (stamp.datetime() - t0.datetime()).num_minutes();
            if gap > MAX_EDGE_HOLD_MINUTES {
                return Err(DataError::TemperatureCoverage {
                    timestamp: *stamp,
                    nearest_minutes: gap,
                });
            }
            v0
        };
        out.push(value);
    }
    Ok(out)
}

/// Analysis-ready bundle: cluster profiles, aligned temperature, and the
/// shared time index.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub time_index: Vec<TimeStamp>,
    pub temperature: Vec<f64>,
    pub profiles: Vec<ClusterProfile>,
}

impl Dataset {
    pub fn assemble(
        matrix: &ConsumptionMatrix,
        assignment: &BTreeMap<ConsumerId, u32>,
        temperature_samples: &[(TimeStamp, f64)],
    ) -> Result<Self, DataError> {
        let profiles = cluster_profile(matrix, assignment)?;
        let temperature = align_temperature(temperature_samples, matrix.time_index())?;
        Ok(Dataset {
            time_index: matrix.time_index().to_vec(),
            temperature,
            profiles,
        })
    }

    pub fn profile(&self, cluster_id: u32) -> Option<&ClusterProfile> {
        self.profiles.iter().find(|p| p.cluster_id == cluster_id)
    }

    pub fn cluster_ids(&self) -> Vec<u32> {
        self.profiles.iter().map(|p| p.cluster_id).collect()
    }

    pub fn len(&self) -> usize {
        self.time_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_index.is_empty()
    }

    /// A copy restricted to `range` of the time index (profiles and
    /// temperature sliced alike).
    pub fn slice_range(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            time_index: self.time_index[range.clone()].to_vec(),
            temperature: self.temperature[range.clone()].to_vec(),
            profiles: self
                .profiles
                .iter()
                .map(|p| ClusterProfile {
                    cluster_id: p.cluster_id,
                    members: p.members.clone(),
                    profile: p.profile[range.clone()].to_vec(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(day: u32, hour: u32, minute: u32) -> TimeStamp {
        TimeStamp::from_ymd_hm(2015, 6, day, hour, minute).unwrap()
    }

    fn reading(consumer: &str, stamp: TimeStamp, kwh: f64) -> MeterReading {
        MeterReading {
            consumer_id: ConsumerId::new(consumer),
            timestamp: stamp,
            kwh,
        }
    }

    #[test]
    fn build_matrix_small_case() {
        let stamps = [ts(1, 0, 0), ts(1, 0, 30), ts(1, 1, 0)];
        let mut readings = Vec::new();
        for (i, s) in stamps.iter().enumerate() {
            readings.push(reading("b", *s, i as f64));
            readings.push(reading("a", *s, 10.0 + i as f64));
        }
        let m = build_matrix(&readings).unwrap();
        assert_eq!(m.rows(), 3);
        assert_eq!(m.consumers(), 2);
        // Columns sorted by consumer label.
        assert_eq!(m.consumer_ids()[0].as_str(), "a");
        assert_eq!(m.cell(0, 0), Some(10.0));
        assert_eq!(m.cell(2, 1), Some(2.0));
        assert!(m.is_complete());
        assert!(m.has_uniform_grid());
    }

    #[test]
    fn build_matrix_is_order_independent() {
        let stamps = [ts(2, 10, 0), ts(2, 10, 30), ts(2, 11, 0)];
        let mut readings = Vec::new();
        for (i, s) in stamps.iter().enumerate() {
            for c in ["x", "y", "z"] {
                readings.push(reading(c, *s, i as f64 + c.len() as f64));
            }
        }
        let forward = build_matrix(&readings).unwrap();
        readings.reverse();
        readings.swap(0, 4);
        let shuffled = build_matrix(&readings).unwrap();
        assert_eq!(forward, shuffled);
    }

    #[test]
    fn build_matrix_marks_missing_cells() {
        let readings = vec![
            reading("a", ts(1, 0, 0), 1.0),
            reading("b", ts(1, 0, 0), 2.0),
            reading("a", ts(1, 0, 30), 3.0),
        ];
        let m = build_matrix(&readings).unwrap();
        assert_eq!(m.missing_cell_count(), 1);
        assert_eq!(m.cell(1, 1), None);
        assert!(!m.is_complete());
    }

    #[test]
    fn build_matrix_rejects_duplicate_cells() {
        let readings = vec![
            reading("a", ts(1, 0, 0), 1.0),
            reading("a", ts(1, 0, 0), 2.0),
        ];
        assert!(matches!(
            build_matrix(&readings),
            Err(DataError::DuplicateReading { .. })
        ));
    }

    #[test]
    fn drop_incomplete_keeps_complete_matrix() {
        let readings = vec![
            reading("a", ts(1, 0, 0), 1.0),
            reading("b", ts(1, 0, 0), 2.0),
        ];
        let m = build_matrix(&readings).unwrap();
        let (clean, removed) = drop_incomplete(&m).unwrap();
        assert_eq!(clean, m);
        assert!(removed.is_empty());
    }

    #[test]
    fn drop_incomplete_removes_rows_with_any_absent_cell() {
        let readings = vec![
            reading("a", ts(1, 0, 0), 1.0),
            reading("b", ts(1, 0, 0), 2.0),
            reading("a", ts(1, 0, 30), 3.0),
            // "b" missing at 00:30; row must go.
            reading("a", ts(1, 1, 0), 5.0),
            reading("b", ts(1, 1, 0), 6.0),
        ];
        let m = build_matrix(&readings).unwrap();
        let (clean, removed) = drop_incomplete(&m).unwrap();
        assert_eq!(clean.rows(), 2);
        assert_eq!(clean.consumers(), 2);
        assert_eq!(removed, vec![ts(1, 0, 30)]);
        assert!(clean.is_complete());
    }

    #[test]
    fn edge_trimming_preserves_the_uniform_grid() {
        // Missing readings cluster at the collection boundaries (consumers
        // joining late or leaving early), so removing those rows keeps the
        // remaining index at a uniform 30-minute spacing.
        let stamps: Vec<TimeStamp> = {
            let mut out = Vec::new();
            let mut t = ts(1, 0, 0);
            for _ in 0..8 {
                out.push(t);
                t = t.next();
            }
            out
        };
        let mut readings = Vec::new();
        for (i, s) in stamps.iter().enumerate() {
            readings.push(reading("a", *s, 1.0));
            // "b" starts two intervals late and stops one early.
            if (2..7).contains(&i) {
                readings.push(reading("b", *s, 2.0));
            }
        }
        let m = build_matrix(&readings).unwrap();
        let (clean, removed) = drop_incomplete(&m).unwrap();
        assert_eq!(removed.len(), 3);
        assert_eq!(clean.rows(), 5);
        assert!(clean.has_uniform_grid());
        assert!(clean.is_complete());
        for col in 0..clean.consumers() {
            assert_eq!(
                (0..clean.rows()).filter(|&r| clean.cell(r, col).is_some()).count(),
                clean.rows()
            );
        }
    }

    #[test]
    fn drop_incomplete_rejects_fully_absent_result() {
        let readings = vec![
            reading("a", ts(1, 0, 0), 1.0),
            reading("b", ts(1, 0, 30), 2.0),
        ];
        let m = build_matrix(&readings).unwrap();
        assert!(matches!(drop_incomplete(&m), Err(DataError::AllRowsRemoved)));
    }

    fn complete_matrix() -> ConsumptionMatrix {
        let stamps = [ts(1, 0, 0), ts(1, 0, 30)];
        let mut readings = Vec::new();
        for s in &stamps {
            readings.push(reading("a", *s, 2.0));
            readings.push(reading("b", *s, 4.0));
            readings.push(reading("c", *s, 9.0));
        }
        build_matrix(&readings).unwrap()
    }

    fn assign(pairs: &[(&str, u32)]) -> BTreeMap<ConsumerId, u32> {
        pairs
            .iter()
            .map(|(c, k)| (ConsumerId::new(c), *k))
            .collect()
    }

    #[test]
    fn cluster_profile_all_in_one_equals_row_means() {
        let m = complete_matrix();
        let profiles =
            cluster_profile(&m, &assign(&[("a", 1), ("b", 1), ("c", 1)])).unwrap();
        assert_eq!(profiles.len(), 1);
        // Independent summation cross-check of the mean.
        for row in 0..m.rows() {
            let mut total = 0.0;
            for col in 0..m.consumers() {
                total += m.cell(row, col).unwrap();
            }
            assert!((profiles[0].profile[row] - total / 3.0).abs() < 1e-15);
        }
        assert_eq!(profiles[0].profile, vec![5.0, 5.0]);
    }

    #[test]
    fn cluster_profile_singleton_and_pair() {
        let m = complete_matrix();
        let profiles =
            cluster_profile(&m, &assign(&[("a", 1), ("b", 1), ("c", 2)])).unwrap();
        assert_eq!(profiles.len(), 2);
        // Two members with values 2 and 4 average to 3.
        assert_eq!(profiles[0].profile, vec![3.0, 3.0]);
        // Singleton cluster is that consumer's column.
        assert_eq!(profiles[1].profile, vec![9.0, 9.0]);
        assert_eq!(profiles[1].members, vec![ConsumerId::new("c")]);
    }

    #[test]
    fn cluster_profile_rejects_bad_assignments() {
        let m = complete_matrix();
        assert!(matches!(
            cluster_profile(&m, &assign(&[("a", 1), ("b", 1)])),
            Err(DataError::UnassignedConsumer(_))
        ));
        assert!(matches!(
            cluster_profile(&m, &assign(&[("a", 1), ("b", 1), ("c", 1), ("ghost", 2)])),
            Err(DataError::UnknownConsumer(_))
        ));
    }

    #[test]
    fn split_chrono_fraction_arithmetic() {
        let series: Vec<u32> = (0..100).collect();
        let spec = SplitSpec::default();
        let (train, val, test) = split_chrono(&series, &spec, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (70, 10, 20));

        let series: Vec<u32> = (0..101).collect();
        let (train, val, test) = split_chrono(&series, &spec, 1).unwrap();
        // Remainder goes to test.
        assert_eq!((train.len(), val.len(), test.len()), (70, 10, 21));
    }

    #[test]
    fn split_chrono_partitions_exactly() {
        let series: Vec<u32> = (0..137).collect();
        let spec = SplitSpec::default();
        let (train, val, test) = split_chrono(&series, &spec, 1).unwrap();
        let rejoined: Vec<u32> = train
            .iter()
            .chain(val.iter())
            .chain(test.iter())
            .cloned()
            .collect();
        assert_eq!(rejoined, series);
        // Contiguity: validation ends exactly where test begins.
        assert_eq!(val.last().unwrap() + 1, test[0]);
    }

    #[test]
    fn split_chrono_rejects_short_segments() {
        let series: Vec<u32> = (0..30).collect();
        let err = split_chrono(&series, &SplitSpec::default(), 5);
        assert!(matches!(
            err,
            Err(DataError::SegmentTooShort { segment: "validation", len: 3, min: 5 })
        ));
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec::new(0.7, 0.1, 0.2).is_ok());
        assert!(SplitSpec::new(0.7, 0.1, 0.1).is_err());
        assert!(SplitSpec::new(0.0, 0.5, 0.5).is_err());
        assert!(SplitSpec::new(-0.1, 0.6, 0.5).is_err());
    }

    #[test]
    fn align_temperature_passes_through_exact_grid() {
        let grid = [ts(1, 0, 0), ts(1, 0, 30), ts(1, 1, 0)];
        let samples: Vec<(TimeStamp, f64)> =
            grid.iter().zip([10.0, 11.0, 12.0]).map(|(t, v)| (*t, v)).collect();
        assert_eq!(align_temperature(&samples, &grid).unwrap(), vec![10.0, 11.0, 12.0]);
    }

    #[test]
    fn align_temperature_interpolates_hourly_input() {
        let grid = [ts(1, 0, 0), ts(1, 0, 30), ts(1, 1, 0), ts(1, 1, 30), ts(1, 2, 0)];
        let samples = vec![(ts(1, 0, 0), 10.0), (ts(1, 1, 0), 14.0), (ts(1, 2, 0), 12.0)];
        let aligned = align_temperature(&samples, &grid).unwrap();
        assert_eq!(aligned, vec![10.0, 12.0, 14.0, 13.0, 12.0]);
    }

    #[test]
    fn align_temperature_holds_edges_but_rejects_wide_gaps() {
        let grid = [ts(1, 0, 0), ts(1, 0, 30)];
        let samples = vec![(ts(1, 0, 30), 20.0)];
        // Half an hour before the first sample: held.
        assert_eq!(align_temperature(&samples, &grid).unwrap(), vec![20.0, 20.0]);

        let far_grid = [ts(2, 12, 0)];
        assert!(matches!(
            align_temperature(&samples, &far_grid),
            Err(DataError::TemperatureCoverage { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_chrono_always_partitions(n in 3usize..400) {
            let series: Vec<usize> = (0..n).collect();
            if let Ok((train, val, test)) = split_chrono(&series, &SplitSpec::default(), 1) {
                prop_assert_eq!(train.len() + val.len() + test.len(), n);
                prop_assert!(train.len() == (0.7 * n as f64).floor() as usize);
                let rejoined: Vec<usize> = train.iter().chain(val).chain(test).cloned().collect();
                prop_assert_eq!(rejoined, series);
            }
        }
    }
}
