//! Shared fixtures for the pipeline benchmarks.

use demandcast_core::data::{build_matrix, generate_synthetic, Dataset, SeasonalTempSpec};
use demandcast_core::features::{build_windows, fit_scaler, scale, FeatureSelector, TimeEncoding};
use demandcast_core::FeatureWindow;

/// One month of cluster-1 profile data with aligned temperature and
/// timestamps, at the default 30-minute grid.
pub fn month_fixture(seed: u64, consumers: usize) -> Dataset {
    let data = generate_synthetic(seed, consumers, 31, &SeasonalTempSpec::default());
    let matrix = build_matrix(&data.readings).expect("nonempty");
    Dataset::assemble(&matrix, &data.assignment, &data.temperature).expect("complete")
}

/// Normalized training windows over the fixture's cluster-1 profile.
pub fn window_fixture(dataset: &Dataset, window_len: usize) -> Vec<FeatureWindow> {
    let profile = dataset.profile(1).expect("cluster 1 exists");
    let consumption_scaler = fit_scaler(&profile.profile).expect("non-constant");
    let temperature_scaler = fit_scaler(&dataset.temperature).expect("non-constant");
    let consumption: Vec<f64> = profile
        .profile
        .iter()
        .map(|v| scale(*v, &consumption_scaler))
        .collect();
    let temperature: Vec<f64> = dataset
        .temperature
        .iter()
        .map(|v| scale(*v, &temperature_scaler))
        .collect();
    build_windows(
        &consumption,
        &temperature,
        &dataset.time_index,
        window_len,
        FeatureSelector::All,
        TimeEncoding::Concat,
    )
    .expect("long enough")
}
