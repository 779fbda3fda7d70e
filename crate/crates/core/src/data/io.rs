//! On-disk formats: meter/temperature/cluster CSVs, the synthetic dataset
//! manifest, and atomic file writes.
//!
//! Meter CSV: header `consumer_id,timestamp,kwh`, timestamps
//! `YYYY-MM-DDTHH:MM` on :00/:30 boundaries, kwh a nonnegative decimal.
//! Temperature CSV: header `timestamp,celsius`; an hourly series is accepted
//! and interpolated onto the 30-minute grid downstream.
//! Cluster CSV: header `consumer_id,cluster_id`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{ConsumerId, DataError, MeterReading, SyntheticData};
use crate::features::TimeStamp;

pub const METER_HEADER: [&str; 3] = ["consumer_id", "timestamp", "kwh"];
pub const TEMPERATURE_HEADER: [&str; 2] = ["timestamp", "celsius"];
pub const CLUSTERS_HEADER: [&str; 2] = ["consumer_id", "cluster_id"];

/// Version stamp written into synthetic dataset manifests.
pub const GENERATOR_VERSION: u32 = 1;

/// File name of the dataset manifest inside a data directory.
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_timestamp(raw: &str, location: &str) -> Result<TimeStamp, DataError> {
    let dt = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M").map_err(|e| {
        DataError::MalformedRow {
            location: location.to_string(),
            message: format!("bad timestamp '{raw}': {e}"),
        }
    })?;
    TimeStamp::new(dt).map_err(|e| DataError::MalformedRow {
        location: location.to_string(),
        message: format!("timestamp '{raw}' is off the 30-minute grid: {e}"),
    })
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<(), DataError> {
    let got: Vec<&str> = record.iter().map(str::trim).collect();
    if got != expected {
        return Err(DataError::BadHeader {
            expected: expected.join(","),
            got: got.join(","),
        });
    }
    Ok(())
}

struct ParsedMeterStream {
    readings: Vec<MeterReading>,
    locations: Vec<String>,
}

fn parse_meter_stream(
    reader: impl Read,
    source_name: &str,
) -> Result<ParsedMeterStream, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    check_header(csv_reader.headers().map_err(csv_problem(source_name))?, &METER_HEADER)?;

    let mut readings = Vec::new();
    let mut locations = Vec::new();
    // Readings for the same consumer share one id allocation.
    let mut interned: BTreeMap<String, ConsumerId> = BTreeMap::new();

    for record in csv_reader.records() {
        let record = record.map_err(csv_problem(source_name))?;
        let line = record.position().map_or(0, |p| p.line());
        let location = format!("{source_name}:{line}");
        if record.len() != 3 {
            return Err(DataError::MalformedRow {
                location,
                message: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let consumer_raw = record[0].trim();
        if consumer_raw.is_empty() {
            return Err(DataError::MalformedRow {
                location,
                message: "empty consumer_id".into(),
            });
        }
        let consumer_id = interned
            .entry(consumer_raw.to_string())
            .or_insert_with(|| ConsumerId::new(consumer_raw))
            .clone();
        let timestamp = parse_timestamp(record[1].trim(), &location)?;
        let kwh: f64 = record[2].trim().parse().map_err(|e| DataError::MalformedRow {
            location: location.clone(),
            message: format!("bad kwh '{}': {e}", &record[2]),
        })?;
        if !kwh.is_finite() {
            return Err(DataError::MalformedRow {
                location,
                message: format!("non-finite kwh {kwh}"),
            });
        }
        if kwh < 0.0 {
            return Err(DataError::NegativeEnergy {
                location,
                value: kwh,
            });
        }
        readings.push(MeterReading {
            consumer_id,
            timestamp,
            kwh,
        });
        locations.push(location);
    }
    Ok(ParsedMeterStream {
        readings,
        locations,
    })
}

fn csv_problem(source_name: &str) -> impl Fn(csv::Error) -> DataError + '_ {
    move |e0: csv::Error| {
        let line = match e0.position() {
            Some(p) => p.line().to_string(),
            None => "?".to_string(),
        };
        DataError::MalformedRow {
            location: format!("{source_name}:{line}"),
            message: e0.to_string(),
        }
    }
}

/// Rejects any (consumer, timestamp) pair that appears twice, naming both
/// rows involved.
fn check_duplicates(stream: &ParsedMeterStream) -> Result<(), DataError> {
    let mut order: Vec<usize> = (0..stream.readings.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        let ra = &stream.readings[a];
        let rb = &stream.readings[b];
        (&ra.consumer_id, ra.timestamp).cmp(&(&rb.consumer_id, rb.timestamp))
    });
    for pair in order.windows(2) {
        let first = &stream.readings[pair[0]];
        let second = &stream.readings[pair[1]];
        if first.consumer_id == second.consumer_id && first.timestamp == second.timestamp {
            return Err(DataError::DuplicateReading {
                consumer: first.consumer_id.clone(),
                timestamp: first.timestamp,
                first: stream.locations[pair[0]].clone(),
                second: stream.locations[pair[1]].clone(),
            });
        }
    }
    Ok(())
}

/// Parses one meter CSV stream, enforcing the grid, nonnegative energy, and
/// uniqueness of (consumer, timestamp).
pub fn parse_meter_csv(reader: impl Read) -> Result<Vec<MeterReading>, DataError> {
    let stream = parse_meter_stream(reader, "line")?;
    check_duplicates(&stream)?;
    Ok(stream.readings)
}

/// Parses and concatenates several meter CSV files; duplicates are rejected
/// across file boundaries too.
pub fn load_meter_files(paths: &[PathBuf]) -> Result<Vec<MeterReading>, DataError> {
    if paths.is_empty() {
        return Err(DataError::Empty("meter files"));
    }
    let mut combined = ParsedMeterStream {
        readings: Vec::new(),
        locations: Vec::new(),
    };
    for path in paths {
        let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let stream = parse_meter_stream(std::io::BufReader::new(file), &name)?;
        combined.readings.extend(stream.readings);
        combined.locations.extend(stream.locations);
    }
    check_duplicates(&combined)?;
    Ok(combined.readings)
}

/// Parses a temperature CSV (`timestamp,celsius`).
pub fn parse_temperature_csv(reader: impl Read) -> Result<Vec<(TimeStamp, f64)>, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    check_header(
        csv_reader.headers().map_err(csv_problem("line"))?,
        &TEMPERATURE_HEADER,
    )?;
    let mut out = Vec::new();
    for record in csv_reader.records() {
        let record = record.map_err(csv_problem("line"))?;
        let line = record.position().map_or(0, |p| p.line());
        let location = format!("line:{line}");
        let timestamp = parse_timestamp(record[0].trim(), &location)?;
        let celsius: f64 = record[1].trim().parse().map_err(|e| DataError::MalformedRow {
            location: location.clone(),
            message: format!("bad celsius '{}': {e}", &record[1]),
        })?;
        if !celsius.is_finite() {
            return Err(DataError::MalformedRow {
                location,
                message: format!("non-finite celsius {celsius}"),
            });
        }
        out.push((timestamp, celsius));
    }
    if out.is_empty() {
        return Err(DataError::Empty("temperature rows"));
    }
    Ok(out)
}

/// Parses a cluster assignment CSV (`consumer_id,cluster_id`).
pub fn parse_clusters_csv(reader: impl Read) -> Result<BTreeMap<ConsumerId, u32>, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    check_header(
        csv_reader.headers().map_err(csv_problem("line"))?,
        &CLUSTERS_HEADER,
    )?;
    let mut out = BTreeMap::new();
    for record in csv_reader.records() {
        let record = record.map_err(csv_problem("line"))?;
        let line = record.position().map_or(0, |p| p.line());
        let location = format!("line:{line}");
        let consumer = ConsumerId::new(record[0].trim());
        let cluster: u32 = record[1].trim().parse().map_err(|e| DataError::MalformedRow {
            location: location.clone(),
            message: format!("bad cluster_id '{}': {e}", &record[1]),
        })?;
        if out.insert(consumer.clone(), cluster).is_some() {
            return Err(DataError::MalformedRow {
                location,
                message: format!("consumer {consumer} assigned twice"),
            });
        }
    }
    if out.is_empty() {
        return Err(DataError::Empty("cluster assignments"));
    }
    Ok(out)
}

/// Writes `contents` to `path` atomically: a temp file in the same directory
/// followed by a rename, so failures never leave a partial file behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), DataError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| io_err(path, std::io::Error::other("path has no file name")))?;
    let mut tmp = PathBuf::from(dir.unwrap_or_else(|| Path::new(".")));
    tmp.push(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_err(path, e)
    })
}

pub fn write_meter_csv(readings: &[MeterReading]) -> String {
    let mut out = String::from("consumer_id,timestamp,kwh\n");
    for r in readings {
        out.push_str(&format!("{},{},{:.4}\n", r.consumer_id, r.timestamp, r.kwh));
    }
    out
}

pub fn write_temperature_csv(samples: &[(TimeStamp, f64)]) -> String {
    let mut out = String::from("timestamp,celsius\n");
    for (t, v) in samples {
        out.push_str(&format!("{t},{v:.2}\n"));
    }
    out
}

pub fn write_clusters_csv(assignment: &BTreeMap<ConsumerId, u32>) -> String {
    let mut out = String::from("consumer_id,cluster_id\n");
    for (consumer, cluster) in assignment {
        out.push_str(&format!("{consumer},{cluster}\n"));
    }
    out
}

/// Provenance stamp emitted beside generated CSVs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub consumers: usize,
    pub days: usize,
    pub generator_version: u32,
}

/// Writes a complete synthetic data directory: meter CSV(s), temperature
/// CSV, cluster CSV, and the manifest. `meter_files` > 1 splits the readings
/// into that many chronological chunks, mirroring multi-file deliveries.
pub fn write_dataset_dir(
    dir: &Path,
    data: &SyntheticData,
    manifest: &SynthManifest,
    meter_files: usize,
) -> Result<Vec<PathBuf>, DataError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();

    let chunks = meter_files.max(1);
    if chunks == 1 {
        let path = dir.join("meter.csv");
        write_atomic(&path, write_meter_csv(&data.readings).as_bytes())?;
        written.push(path);
    } else {
        // Chronological chunks: stable sort readings by timestamp, then cut.
        let mut by_time: Vec<&MeterReading> = data.readings.iter().collect();
        by_time.sort_by_key(|r| r.timestamp);
        let per_chunk = by_time.len().div_ceil(chunks);
        for (i, chunk) in by_time.chunks(per_chunk).enumerate() {
            let owned: Vec<MeterReading> = chunk.iter().map(|r| (*r).clone()).collect();
            let path = dir.join(format!("meter-{:02}.csv", i + 1));
            write_atomic(&path, write_meter_csv(&owned).as_bytes())?;
            written.push(path);
        }
    }

    let temp_path = dir.join("temperature.csv");
    write_atomic(&temp_path, write_temperature_csv(&data.temperature).as_bytes())?;
    written.push(temp_path);

    let clusters_path = dir.join("clusters.csv");
    write_atomic(&clusters_path, write_clusters_csv(&data.assignment).as_bytes())?;
    written.push(clusters_path);

    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_json = serde_json::to_string_pretty(manifest)?;
    write_atomic(&manifest_path, manifest_json.as_bytes())?;
    written.push(manifest_path);

    Ok(written)
}

/// Contents of a data directory: readings, temperature samples, and the
/// cluster assignment.
pub struct LoadedDataDir {
    pub readings: Vec<MeterReading>,
    pub temperature: Vec<(TimeStamp, f64)>,
    pub assignment: BTreeMap<ConsumerId, u32>,
}

/// Loads a data directory produced by [`write_dataset_dir`] (or assembled by
/// hand with the same layout): every `meter*.csv`, `temperature.csv`, and
/// `clusters.csv`.
pub fn load_data_dir(dir: &Path) -> Result<LoadedDataDir, DataError> {
    let mut meter_paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("meter") && n.ends_with(".csv"))
        })
        .collect();
    meter_paths.sort();
    let readings = load_meter_files(&meter_paths)?;

    let temp_path = dir.join("temperature.csv");
    let temp_file = std::fs::File::open(&temp_path).map_err(|e| io_err(&temp_path, e))?;
    let temperature = parse_temperature_csv(std::io::BufReader::new(temp_file))?;

    let clusters_path = dir.join("clusters.csv");
    let clusters_file =
        std::fs::File::open(&clusters_path).map_err(|e| io_err(&clusters_path, e))?;
    let assignment = parse_clusters_csv(std::io::BufReader::new(clusters_file))?;

    Ok(LoadedDataDir {
        readings,
        temperature,
        assignment,
    })
}
