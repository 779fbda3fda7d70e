//! Standalone SVG line chart of a forecast CSV: actual and predicted series
//! over time in a fixed 960x480 viewport. Output is deterministic byte for
//! byte for identical input.

use crate::CliError;

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 480.0;

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 56.0;

const ACTUAL_COLOR: &str = "#1f77b4";
const PREDICTED_COLOR: &str = "#d62728";

#[derive(Debug)]
pub struct ForecastSeries {
    pub timestamps: Vec<String>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Parses the `timestamp,actual_kwh,predicted_kwh` CSV a forecast run
/// writes.
pub fn parse_forecast_csv(text: &str) -> Result<ForecastSeries, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("timestamp,actual_kwh,predicted_kwh") => {}
        Some(other) => {
            return Err(CliError::data(format!(
                "expected header `timestamp,actual_kwh,predicted_kwh`, got `{other}`"
            )))
        }
        None => return Err(CliError::data("empty forecast CSV")),
    }
    let mut series = ForecastSeries {
        timestamps: Vec::new(),
        actual: Vec::new(),
        predicted: Vec::new(),
    };
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::data(format!(
                "line {}: expected 3 fields, got {}",
                idx + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::data(format!("line {}: bad number '{s}'", idx + 2)))
        };
        series.timestamps.push(fields[0].to_string());
        series.actual.push(parse(fields[1])?);
        series.predicted.push(parse(fields[2])?);
    }
    if series.timestamps.is_empty() {
        return Err(CliError::data("forecast CSV has a header but no rows"));
    }
    Ok(series)
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the chart. Two `<polyline>` elements for multi-point series;
/// a single point degenerates to one marker circle per series.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn render_svg(series: &ForecastSeries) -> String {
    let n = series.timestamps.len();
    let values: Vec<f64> = series
        .actual
        .iter()
        .chain(series.predicted.iter())
        .cloned()
        .collect();
    let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_at = |i: usize| {
        if n == 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + plot_w * i as f64 / (n - 1) as f64
        }
    };
    let y_at = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(x0),
        fmt(MARGIN_TOP),
        fmt(x0),
        fmt(y0)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(x0),
        fmt(y0),
        fmt(WIDTH - MARGIN_RIGHT),
        fmt(y0)
    ));

    // Y ticks and grid labels.
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let y = y_at(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(x0 - 4.0),
            fmt(y),
            fmt(x0),
            fmt(y)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            fmt(x0 - 7.0),
            fmt(y + 4.0),
            fmt(v)
        ));
    }

    // X ticks: first, middle, last timestamps.
    let tick_indices: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        vec![0, n / 2, n - 1]
    };
    for &i in &tick_indices {
        let x = x_at(i);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(x),
            fmt(y0),
            fmt(x),
            fmt(y0 + 4.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(y0 + 18.0),
            series.timestamps[i]
        ));
    }

    // Axis labels.
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">time</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 14.0)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">kWh</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0)
    ));

    // Series.
    let mut draw = |values: &[f64], color: &str| {
        if n == 1 {
            svg.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n",
                fmt(x_at(0)),
                fmt(y_at(values[0])),
                color
            ));
        } else {
            let points: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{},{}", fmt(x_at(i)), fmt(y_at(*v))))
                .collect();
            svg.push_str(&format!(
                "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                color,
                points.join(" ")
            ));
        }
    };
    draw(&series.actual, ACTUAL_COLOR);
    draw(&series.predicted, PREDICTED_COLOR);

    // Legend.
    let legend_x = MARGIN_LEFT + 12.0;
    for (slot, (label, color)) in [("actual", ACTUAL_COLOR), ("predicted", PREDICTED_COLOR)]
        .iter()
        .enumerate()
    {
        let y = MARGIN_TOP + 10.0 + 16.0 * slot as f64;
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            fmt(legend_x),
            fmt(y),
            fmt(legend_x + 22.0),
            fmt(y),
            color
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            fmt(legend_x + 28.0),
            fmt(y + 4.0),
            label
        ));
    }

    svg.push_str("</svg>\n");
    svg
}
