//! Seeded synthetic smart-meter corpus: four household archetypes with
//! double-peak daily shapes, weekday/weekend modulation, and a comfort-band
//! temperature response, driven by a seasonal + diurnal temperature model.
//!
//! Output is fully deterministic per seed so shipped benchmarks and tests
//! reproduce bit for bit.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ConsumerId, MeterReading};
use crate::features::{TimeStamp, INTERVALS_PER_DAY};

/// Number of household archetypes, matching the cluster count the
/// experiments expect. Cluster ids run 1..=4.
pub const CLUSTER_COUNT: u32 = 4;

/// Lower edge of the comfort band in degrees C; colder drives heating load.
pub const COMFORT_LOW_C: f64 = 19.0;
/// Upper edge of the comfort band in degrees C; hotter drives cooling load.
pub const COMFORT_HIGH_C: f64 = 25.0;

/// Temperature model: an annual sinusoid, a diurnal sinusoid peaking
/// mid-afternoon, a per-day offset, and per-interval noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeasonalTempSpec {
    pub start_date: NaiveDate,
    pub mean_celsius: f64,
    pub seasonal_amplitude: f64,
    pub diurnal_amplitude: f64,
    /// Day of year with the warmest seasonal component (southern-hemisphere
    /// summer by default).
    pub hottest_day_of_year: f64,
    pub daily_offset_std: f64,
    pub noise_std: f64,
}

impl Default for SeasonalTempSpec {
    fn default() -> Self {
        SeasonalTempSpec {
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            mean_celsius: 15.0,
            seasonal_amplitude: 8.0,
            diurnal_amplitude: 5.0,
            hottest_day_of_year: 20.0,
            daily_offset_std: 1.5,
            noise_std: 0.3,
        }
    }
}

impl SeasonalTempSpec {
    /// A constant-temperature variant, handy for isolating the demand
    /// response in tests.
    pub fn constant(celsius: f64) -> Self {
        SeasonalTempSpec {
            mean_celsius: celsius,
            seasonal_amplitude: 0.0,
            diurnal_amplitude: 0.0,
            daily_offset_std: 0.0,
            noise_std: 0.0,
            ..SeasonalTempSpec::default()
        }
    }
}

/// Everything one generator run produces.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub readings: Vec<MeterReading>,
    pub temperature: Vec<(TimeStamp, f64)>,
    /// Ground-truth archetype per consumer, cluster ids 1..=4.
    pub assignment: BTreeMap<ConsumerId, u32>,
}

/// Extra demand, in kWh per 30 minutes, that temperature adds outside the
/// comfort band. Zero anywhere inside 19..=25 degrees C.
pub fn comfort_band_response(cooling_coeff: f64, heating_coeff: f64, celsius: f64) -> f64 {
    cooling_coeff * (celsius - COMFORT_HIGH_C).max(0.0)
        + heating_coeff * (COMFORT_LOW_C - celsius).max(0.0)
}

fn gaussian_bump(interval: f64, center: f64, width: f64) -> f64 {
    let z = (interval - center) / width;
    (-0.5 * z * z).exp()
}

/// Baseline consumption shape for one archetype at one in-day interval
/// (1..=48), in kWh per 30 minutes, before per-consumer scaling, the
/// temperature response, and noise.
pub fn base_profile(cluster_id: u32, interval: u8, weekend: bool) -> f64 {
    let k = interval as f64;
    match cluster_id {
        // Evening-dominant family: strong 19:00 peak, small breakfast bump.
        1 => {
            let evening = 0.24 * gaussian_bump(k, if weekend { 39.0 } else { 38.0 }, 5.5);
            let morning = 0.10 * gaussian_bump(k, if weekend { 19.0 } else { 15.0 }, 3.5);
            let level = if weekend { 0.14 } else { 0.12 };
            level + evening + morning
        }
        // Commuter double peak: out of the house during the day.
        2 => {
            let morning = 0.17 * gaussian_bump(k, if weekend { 19.0 } else { 16.0 }, 3.5);
            let evening = 0.21 * gaussian_bump(k, 37.0, 4.5);
            let level = if weekend { 0.13 } else { 0.10 };
            level + morning + evening
        }
        // Home during the day: broad midday plateau.
        3 => {
            let midday = 0.16 * gaussian_bump(k, 27.0, 7.0);
            let evening = 0.10 * gaussian_bump(k, 38.0, 4.0);
            0.12 + midday + evening
        }
        // Late-evening household.
        4 => {
            let late = 0.21 * gaussian_bump(k, 43.0, 4.5);
            let level = if weekend { 0.12 } else { 0.095 };
            level + late
        }
        other => panic!("cluster id {other} out of range 1..=4"),
    }
}

struct ConsumerParams {
    id: ConsumerId,
    cluster_id: u32,
    scale: f64,
    cooling_coeff: f64,
    heating_coeff: f64,
    noise_seed: u64,
}

/// Generates a complete corpus: per-consumer half-hourly readings over
/// `days` days, the aligned temperature series, and the ground-truth cluster
/// assignment. Identical arguments produce identical output.
pub fn generate_synthetic(
    seed: u64,
    consumers: usize,
    days: usize,
    temp_spec: &SeasonalTempSpec,
) -> SyntheticData {
    assert!(consumers >= 1, "need at least one consumer");
    assert!(days >= 1, "need at least one day");

    let intervals = days * INTERVALS_PER_DAY as usize;
    let grid = build_grid(temp_spec.start_date, intervals);
    let temperature = temperature_series(seed, temp_spec, &grid);

    let mut param_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let id_width = consumers.to_string().len().max(4);
    let consumer_params: Vec<ConsumerParams> = (0..consumers)
        .map(|i| ConsumerParams {
            id: ConsumerId::new(&format!("C{:0width$}", i + 1, width = id_width)),
            cluster_id: (i as u32 % CLUSTER_COUNT) + 1,
            scale: param_rng.gen_range(0.85..1.30),
            cooling_coeff: param_rng.gen_range(0.018..0.038),
            heating_coeff: param_rng.gen_range(0.008..0.020),
            noise_seed: seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(i as u64 + 1)),
        })
        .collect();

    let mut readings = Vec::with_capacity(consumers * intervals);
    for params in &consumer_params {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(params.noise_seed);
        let noise = Normal::new(0.0, 0.015).expect("valid std");
        for (idx, stamp) in grid.iter().enumerate() {
            let weekend = matches!(stamp.day_code(), 1 | 7);
            let base = base_profile(params.cluster_id, stamp.interval_index(), weekend);
            let response = comfort_band_response(
                params.cooling_coeff,
                params.heating_coeff,
                temperature[idx].1,
            );
            let kwh = (params.scale * base + response + noise.sample(&mut noise_rng)).max(0.0);
            readings.push(MeterReading {
                consumer_id: params.id.clone(),
                timestamp: *stamp,
                kwh,
            });
        }
    }

    let assignment = consumer_params
        .iter()
        .map(|p| (p.id.clone(), p.cluster_id))
        .collect();

    SyntheticData {
        readings,
        temperature,
        assignment,
    }
}

fn build_grid(start: NaiveDate, intervals: usize) -> Vec<TimeStamp> {
    let first = TimeStamp::new(start.and_hms_opt(0, 0, 0).expect("midnight"))
        .expect("midnight is on the grid");
    let mut grid = Vec::with_capacity(intervals);
    let mut t = first;
    for _ in 0..intervals {
        grid.push(t);
        t = t.next();
    }
    grid
}

fn temperature_series(
    seed: u64,
    spec: &SeasonalTempSpec,
    grid: &[TimeStamp],
) -> Vec<(TimeStamp, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x7e39));
    let days = grid.len().div_ceil(INTERVALS_PER_DAY as usize);
    let day_offsets: Vec<f64> = if spec.daily_offset_std > 0.0 {
        let dist = Normal::new(0.0, spec.daily_offset_std).expect("valid std");
        (0..days).map(|_| dist.sample(&mut rng)).collect()
    } else {
        vec![0.0; days]
    };
    let noise = (spec.noise_std > 0.0).then(|| Normal::new(0.0, spec.noise_std).expect("valid std"));

    grid.iter()
        .enumerate()
        .map(|(idx, stamp)| {
            let day_of_year = stamp.date().ordinal() as f64;
            let seasonal = spec.seasonal_amplitude
                * (std::f64::consts::TAU * (day_of_year - spec.hottest_day_of_year) / 365.25).cos();
            // Diurnal swing peaking around 14:00.
            let hour = (stamp.interval_index() as f64 - 1.0) * 0.5;
            let diurnal =
                -spec.diurnal_amplitude * (std::f64::consts::TAU * (hour - 2.0) / 24.0).cos();
            let offset = day_offsets[idx / INTERVALS_PER_DAY as usize];
            let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            (*stamp, spec.mean_celsius + seasonal + diurnal + offset + eps)
        })
        .collect()
}
