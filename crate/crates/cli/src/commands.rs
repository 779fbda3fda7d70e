//! Subcommand implementations. Every artifact write is atomic and every
//! artifact-producing run leaves a `run-manifest.json` beside its primary
//! output.

use std::path::Path;

use chrono::NaiveDate;

use demandcast_core::data::{
    build_matrix, drop_incomplete, generate_synthetic, load_data_dir, write_atomic,
    write_dataset_dir, Dataset, SeasonalTempSpec, SynthManifest, GENERATOR_VERSION,
};
use demandcast_core::eval::{
    fit_series, forecast_tail, month_view, run_annual_15day, run_clusters_3day,
    run_monthly_3day, FittedModel, ForecastResult,
};
use demandcast_core::features::FeatureSelector;
use demandcast_core::lstm::ModelFile;
use demandcast_core::training::{gradient_check_battery, DEFAULT_GRADCHECK_SEED};

use crate::config::{self, RunConfig, SEED_ENV_VAR};
use crate::manifest::RunManifest;
use crate::{plot, CliError};

fn env_seed() -> Option<u64> {
    std::env::var(SEED_ENV_VAR).ok().and_then(|v| v.parse().ok())
}

fn guard_distinct(out: &Path, inputs: &[&Path]) -> Result<(), CliError> {
    for input in inputs {
        if out == *input {
            return Err(CliError::usage(format!(
                "output path {} would overwrite an input",
                out.display()
            )));
        }
    }
    Ok(())
}

pub fn synth(
    seed: Option<u64>,
    consumers: usize,
    days: usize,
    start_date: Option<&str>,
    files: usize,
    out: &Path,
) -> Result<(), CliError> {
    if consumers == 0 || days == 0 {
        return Err(CliError::usage("consumers and days must be at least 1"));
    }
    let seed = seed.or_else(env_seed).unwrap_or(config::DEFAULT_SEED);
    let mut temp_spec = SeasonalTempSpec::default();
    if let Some(raw) = start_date {
        temp_spec.start_date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| CliError::usage(format!("bad start date '{raw}': {e}")))?;
    }

    let data = generate_synthetic(seed, consumers, days, &temp_spec);
    let synth_manifest = SynthManifest {
        seed,
        consumers,
        days,
        generator_version: GENERATOR_VERSION,
    };
    let written = write_dataset_dir(out, &data, &synth_manifest, files)?;

    let mut manifest = RunManifest::new(
        "synth",
        seed,
        serde_json::json!({
            "seed": seed,
            "consumers": consumers,
            "days": days,
            "start_date": temp_spec.start_date.to_string(),
            "files": files,
        }),
    )?;
    for path in &written {
        manifest.record_output(path)?;
    }
    manifest.write_beside(out)?;

    println!(
        "wrote {} readings for {} consumers over {} days to {}",
        data.readings.len(),
        consumers,
        days,
        out.display()
    );
    Ok(())
}

/// Loads a data directory into the analysis-ready bundle, restricted to one
/// month when requested.
fn load_dataset(data_dir: &Path, month: Option<(i32, u32)>) -> Result<Dataset, CliError> {
    let loaded = load_data_dir(data_dir)?;
    let matrix = build_matrix(&loaded.readings)?;
    let (clean, removed) = drop_incomplete(&matrix)?;
    if !removed.is_empty() {
        eprintln!("note: dropped {} incomplete time instance(s)", removed.len());
    }
    let dataset = Dataset::assemble(&clean, &loaded.assignment, &loaded.temperature)?;
    match month {
        None => Ok(dataset),
        Some((year, month)) => Ok(month_view(&dataset, year, month)?),
    }
}

fn cluster_series(
    dataset: &Dataset,
    cluster: u32,
) -> Result<&demandcast_core::data::ClusterProfile, CliError> {
    dataset
        .profile(cluster)
        .ok_or_else(|| CliError::data(format!("no cluster {cluster} in the dataset")))
}

pub fn train(
    cfg: &RunConfig,
    data_dir: &Path,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    guard_distinct(out, &[data_dir])?;
    if let Some(report) = report_path {
        guard_distinct(report, &[data_dir, out])?;
    }
    let dataset = load_dataset(data_dir, cfg.month_pair()?)?;
    let profile = cluster_series(&dataset, cfg.cluster)?;

    let fitted = fit_series(
        &profile.profile,
        &dataset.temperature,
        &dataset.time_index,
        cfg.features,
        &cfg.eval_config(),
    )?;

    let model_json = fitted.model.to_model_file(cfg.seed).to_json()?;
    write_atomic(out, model_json.as_bytes())?;

    let mut manifest = RunManifest::new("train", cfg.seed, cfg)?;
    manifest.record_input(data_dir);
    manifest.record_output(out)?;
    if let Some(report_path) = report_path {
        write_atomic(report_path, fitted.report.to_csv().as_bytes())?;
        manifest.record_output(report_path)?;
    }
    manifest.write_beside(out)?;

    let report = &fitted.report;
    println!(
        "trained cluster {} on {} points: best epoch {} of {}, validation RMSE {:.6}",
        cfg.cluster,
        dataset.len(),
        report.best_epoch,
        report.epochs.len(),
        report.best_val_rmse
    );
    println!("model written to {}", out.display());
    Ok(())
}

pub fn forecast(
    cfg: &RunConfig,
    model_path: &Path,
    data_dir: &Path,
    out: &Path,
) -> Result<(), CliError> {
    guard_distinct(out, &[model_path, data_dir])?;
    let text = std::fs::read_to_string(model_path)
        .map_err(|e| CliError::data(format!("{}: {e}", model_path.display())))?;
    let model_file = ModelFile::from_json(&text)?;
    let fitted = FittedModel::from_model_file(&model_file)?;

    let dataset = load_dataset(data_dir, cfg.month_pair()?)?;
    let profile = cluster_series(&dataset, cfg.cluster)?;
    let horizon = cfg.horizon;
    let n = dataset.len();
    if n <= horizon {
        return Err(CliError::data(format!(
            "dataset has {n} points, horizon {horizon} leaves no warmup"
        )));
    }

    let predicted = forecast_tail(
        &fitted,
        &profile.profile,
        &dataset.temperature,
        &dataset.time_index,
        horizon,
    )?;
    let result = ForecastResult::score(
        dataset.time_index[n - horizon..].to_vec(),
        profile.profile[n - horizon..].to_vec(),
        predicted,
    )?;

    write_atomic(out, result.to_csv().as_bytes())?;
    let mut manifest = RunManifest::new("forecast", cfg.seed, cfg)?;
    manifest.record_input(model_path);
    manifest.record_input(data_dir);
    manifest.record_output(out)?;
    manifest.write_beside(out)?;

    println!(
        "forecast {} steps of cluster {}: MAPE {:.4}%, RMSE {:.6} kWh, nRMSE {:.4}%",
        horizon, cfg.cluster, result.mape_percent, result.rmse_kwh, result.nrmse_percent
    );
    println!("forecast written to {}", out.display());
    Ok(())
}

fn parse_feature_sets(raw: &str) -> Result<Vec<FeatureSelector>, CliError> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let selector: FeatureSelector = part.trim().parse().map_err(CliError::usage)?;
        if !out.contains(&selector) {
            out.push(selector);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no feature sets given"));
    }
    Ok(out)
}

pub fn eval_monthly(
    cfg: &RunConfig,
    data_dir: &Path,
    feature_sets: &str,
    out: &Path,
) -> Result<(), CliError> {
    let selectors = parse_feature_sets(feature_sets)?;
    let dataset = load_dataset(data_dir, cfg.month_pair()?)?;
    let report = run_monthly_3day(&dataset, cfg.cluster, &selectors, &cfg.eval_config())?;

    write_atomic(out, report.to_csv().as_bytes())?;
    let mut manifest = RunManifest::new("eval-monthly", cfg.seed, cfg)?;
    manifest.record_input(data_dir);
    manifest.record_output(out)?;
    manifest.write_beside(out)?;

    for row in report.rows.iter().chain(report.averages.iter()) {
        println!(
            "{:<8} {:<8} cluster {} {:<24} MAPE {:>8.4}%  nRMSE {:>8.4}%",
            row.scope, row.month, row.cluster, row.features.to_string(), row.mape_percent, row.nrmse_percent
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

pub fn eval_clusters(
    cfg: &RunConfig,
    data_dir: &Path,
    months: &str,
    out: &Path,
) -> Result<(), CliError> {
    let parts: Vec<&str> = months.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::usage(format!(
            "expected two months as YYYY-MM,YYYY-MM, got '{months}'"
        )));
    }
    let month_pair = [
        config::parse_month(parts[0].trim())?,
        config::parse_month(parts[1].trim())?,
    ];

    let dataset = load_dataset(data_dir, None)?;
    let report = run_clusters_3day(&dataset, month_pair, &cfg.eval_config())?;

    write_atomic(out, report.to_csv().as_bytes())?;
    let mut manifest = RunManifest::new("eval-clusters", cfg.seed, cfg)?;
    manifest.record_input(data_dir);
    manifest.record_output(out)?;
    manifest.write_beside(out)?;

    for row in report.rows.iter().chain(report.averages.iter()) {
        println!(
            "{:<8} {:<8} cluster {} MAPE {:>8.4}%  nRMSE {:>8.4}%",
            row.scope, row.month, row.cluster, row.mape_percent, row.nrmse_percent
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

pub fn eval_annual(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(data_dir, None)?;
    let result = run_annual_15day(&dataset, cfg.cluster, &cfg.eval_config())?;

    write_atomic(out, result.to_csv().as_bytes())?;
    let mut manifest = RunManifest::new("eval-annual", cfg.seed, cfg)?;
    manifest.record_input(data_dir);
    manifest.record_output(out)?;
    manifest.write_beside(out)?;

    println!(
        "15-day forecast of cluster {}: MAPE {:.4}%, RMSE {:.6} kWh, nRMSE {:.4}%",
        cfg.cluster, result.mape_percent, result.rmse_kwh, result.nrmse_percent
    );
    println!("forecast written to {}", out.display());
    Ok(())
}

pub fn gradcheck(seed: Option<u64>, instances: usize) -> Result<(), CliError> {
    const TOLERANCE: f64 = 1e-5;
    let seed = seed.or_else(env_seed).unwrap_or(DEFAULT_GRADCHECK_SEED);
    let report = gradient_check_battery(seed, instances);
    println!(
        "gradient check: {} instances, {} parameters, max relative error {:.3e}",
        report.instances, report.parameters_checked, report.max_relative_error
    );
    if report.passes(TOLERANCE) {
        println!("PASS (tolerance {TOLERANCE:.0e})");
        Ok(())
    } else {
        Err(CliError::numeric(format!(
            "gradient check failed: max relative error {:.3e} >= {TOLERANCE:.0e}",
            report.max_relative_error
        )))
    }
}

pub fn plot_command(input: &Path, out: &Path) -> Result<(), CliError> {
    guard_distinct(out, &[input])?;
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    let series = plot::parse_forecast_csv(&text)?;
    let svg = plot::render_svg(&series);
    write_atomic(out, svg.as_bytes())?;

    let mut manifest = RunManifest::new("plot", 0, serde_json::json!({"input": input.display().to_string()}))?;
    manifest.record_input(input);
    manifest.record_output(out)?;
    manifest.write_beside(out)?;

    println!("chart written to {}", out.display());
    Ok(())
}
