//! Deterministic SVG rendering for the explanation charts.
//!
//! Elements that carry a signed quantity have `data-value` set; those drawn
//! in green are positive, those in red are negative.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{moving_average, ContributionBreakdown, ExplainError};
use crate::stats::pearson_r;

pub const DEEP_TEAL: &str = "#00695C";
pub const LIGHT_TEAL: &str = "#4DB6AC";
pub const GREEN: &str = "#2E7D32";
pub const RED: &str = "#C62828";
pub const NEUTRAL: &str = "#9E9E9E";
const INK: &str = "#212121";
const AXIS: &str = "#757575";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Waterfall,
    Bar,
    Triangle,
    TimeSeries,
    Scatter,
}

impl ChartKind {
    pub fn name(self) -> &'static str {
        match self {
            ChartKind::Waterfall => "waterfall",
            ChartKind::Bar => "bar",
            ChartKind::Triangle => "triangle",
            ChartKind::TimeSeries => "timeseries",
            ChartKind::Scatter => "scatter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChartData {
    /// One signed bar per feature from a common zero line, plus the
    /// prediction with its interval, all in standardized units.
    Waterfall {
        rows: Vec<(String, f64)>,
        prediction: f64,
        half_width: f64,
    },
    /// Weight, difference from average and their product.
    Bar {
        feature: String,
        weight: f64,
        difference: f64,
    },
    /// Raw scatter of target against one feature, the model's slope through
    /// the means, and the triangle from the mean to today's value.
    Triangle {
        feature: String,
        target: String,
        points: Vec<[f64; 2]>,
        feature_mean: f64,
        feature_std: f64,
        target_mean: f64,
        target_std: f64,
        weight: f64,
        today: f64,
    },
    TimeSeries {
        label: String,
        dates: Vec<NaiveDate>,
        values: Vec<Option<f64>>,
        window: usize,
    },
    /// Scatter with least-squares line and the correlation as a bar.
    Scatter {
        x_label: String,
        y_label: String,
        points: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub title: String,
    pub width: u32,
    pub height: u32,
    pub data: ChartData,
}

impl ChartSpec {
    pub fn kind(&self) -> ChartKind {
        match self.data {
            ChartData::Waterfall { .. } => ChartKind::Waterfall,
            ChartData::Bar { .. } => ChartKind::Bar,
            ChartData::Triangle { .. } => ChartKind::Triangle,
            ChartData::TimeSeries { .. } => ChartKind::TimeSeries,
            ChartData::Scatter { .. } => ChartKind::Scatter,
        }
    }

    pub fn waterfall(breakdown: &ContributionBreakdown, width: u32, height: u32) -> Self {
        ChartSpec {
            title: format!("{} estimate", breakdown.target),
            width,
            height,
            data: ChartData::Waterfall {
                rows: breakdown
                    .rows
                    .iter()
                    .map(|r| (r.feature.clone(), r.contribution))
                    .collect(),
                prediction: breakdown.total,
                half_width: breakdown.prediction.half_width_standardized,
            },
        }
    }
}

/// Coordinates are written with three decimals, `-0.000` normalized.
fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn sign_color(v: f64) -> &'static str {
    if v > 0.0 {
        GREEN
    } else if v < 0.0 {
        RED
    } else {
        NEUTRAL
    }
}

fn invalid(msg: impl Into<String>) -> ExplainError {
    ExplainError::InvalidSpec(msg.into())
}

fn finite(values: impl IntoIterator<Item = f64>, what: &str) -> Result<(), ExplainError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(invalid(format!("non-finite {what}")))
    }
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    px_lo: f64,
    scale: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Axis {
            lo,
            px_lo,
            scale: (px_hi - px_lo) / (hi - lo),
        }
    }

    fn at(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) * self.scale
    }
}

fn padded(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

struct Doc {
    out: String,
}

impl Doc {
    fn new(spec: &ChartSpec, extra: &str) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-kind="{k}"{extra}>"#,
            w = spec.width,
            h = spec.height,
            k = spec.kind().name(),
        );
        let _ = writeln!(out, "<title>{}</title>", escape(&spec.title));
        let _ = writeln!(
            out,
            r##"<rect class="background" x="0" y="0" width="{}" height="{}" fill="#FFFFFF"/>"##,
            spec.width, spec.height
        );
        let _ = writeln!(
            out,
            r#"<text class="title" x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle" fill="{INK}">{}</text>"#,
            num(spec.width as f64 / 2.0),
            escape(&spec.title)
        );
        Doc { out }
    }

    fn line(&mut self, class: &str, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<line class="{class}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="1.5"{extra}/>"#,
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{fill}"{extra}/>"#,
            num(x),
            num(y),
            num(w),
            num(h)
        );
    }

    fn text(&mut self, class: &str, x: f64, y: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.out,
            r#"<text class="{class}" x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}" fill="{INK}">{}</text>"#,
            num(x),
            num(y),
            escape(content)
        );
    }

    fn circle(&mut self, class: &str, x: f64, y: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<circle class="{class}" cx="{}" cy="{}" r="2.5" fill="{fill}"/>"#,
            num(x),
            num(y)
        );
    }

    fn polyline(&mut self, class: &str, points: &[(f64, f64)], stroke: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", num(*x), num(*y)))
            .collect();
        let _ = writeln!(
            self.out,
            r#"<polyline class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
            coords.join(" ")
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Renders `spec` as a standalone SVG 1.1 document.
pub fn render_chart(spec: &ChartSpec) -> Result<String, ExplainError> {
    if spec.width < 120 || spec.height < 120 {
        return Err(invalid(format!(
            "chart must be at least 120x120, got {}x{}",
            spec.width, spec.height
        )));
    }
    match &spec.data {
        ChartData::Waterfall {
            rows,
            prediction,
            half_width,
        } => waterfall(spec, rows, *prediction, *half_width),
        ChartData::Bar {
            feature,
            weight,
            difference,
        } => bar(spec, feature, *weight, *difference),
        ChartData::Triangle { .. } => triangle(spec),
        ChartData::TimeSeries {
            label,
            dates,
            values,
            window,
        } => timeseries(spec, label, dates, values, *window),
        ChartData::Scatter {
            x_label,
            y_label,
            points,
        } => scatter(spec, x_label, y_label, points),
    }
}

const LABEL_WIDTH: f64 = 170.0;
const TOP: f64 = 40.0;
const MARGIN: f64 = 20.0;

fn waterfall(spec: &ChartSpec, rows: &[(String, f64)], prediction: f64, half_width: f64) -> Result<String, ExplainError> {
    finite(rows.iter().map(|r| r.1), "contribution")?;
    finite([prediction, half_width], "prediction")?;
    if half_width < 0.0 {
        return Err(invalid("negative interval half-width"));
    }
    let reach = rows
        .iter()
        .map(|r| r.1.abs())
        .chain([prediction.abs() + half_width])
        .fold(0.0, f64::max);
    let reach = if reach > 0.0 { reach * 1.1 } else { 1.0 };
    let (w, h) = (spec.width as f64, spec.height as f64);
    let x = Axis::new(-reach, reach, LABEL_WIDTH, w - MARGIN);
    let band = (h - TOP - MARGIN) / (rows.len() + 1) as f64;
    let mut doc = Doc::new(spec, &format!(r#" data-scale="{}""#, x.scale));
    let zero = x.at(0.0);
    doc.line("axis zero", zero, TOP, zero, h - MARGIN, AXIS, "");
    for (k, (label, value)) in rows.iter().enumerate() {
        let y = TOP + k as f64 * band;
        let left = x.at(value.min(0.0));
        doc.rect(
            "bar contribution",
            left,
            y + 0.15 * band,
            value.abs() * x.scale,
            0.7 * band,
            sign_color(*value),
            &format!(r#" data-feature="{}" data-value="{}""#, escape(label), value),
        );
        doc.text("label", LABEL_WIDTH - 6.0, y + 0.5 * band + 4.0, "end", label);
    }
    let y = TOP + rows.len() as f64 * band;
    let mid = y + 0.5 * band;
    let _ = writeln!(
        doc.out,
        r#"<g class="prediction" data-value="{prediction}" data-half-width="{half_width}">"#
    );
    doc.line("whisker", x.at(prediction - half_width), mid, x.at(prediction + half_width), mid, INK, "");
    for end in [prediction - half_width, prediction + half_width] {
        doc.line("whisker-cap", x.at(end), mid - 0.2 * band, x.at(end), mid + 0.2 * band, INK, "");
    }
    doc.rect("estimate", x.at(prediction) - 4.0, mid - 0.25 * band, 8.0, 0.5 * band, INK, "");
    doc.out.push_str("</g>\n");
    doc.text("label", LABEL_WIDTH - 6.0, mid + 4.0, "end", "estimate");
    Ok(doc.finish())
}

fn bar(spec: &ChartSpec, feature: &str, weight: f64, difference: f64) -> Result<String, ExplainError> {
    finite([weight, difference], "bar value")?;
    let contribution = weight * difference;
    let reach = [weight, difference, contribution]
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let reach = if reach > 0.0 { reach * 1.1 } else { 1.0 };
    let (w, h) = (spec.width as f64, spec.height as f64);
    let x = Axis::new(-reach, reach, LABEL_WIDTH, w - MARGIN);
    let band = (h - TOP - MARGIN) / 3.0;
    let mut doc = Doc::new(
        spec,
        &format!(r#" data-scale="{}" data-feature="{}""#, x.scale, escape(feature)),
    );
    let zero = x.at(0.0);
    doc.line("axis zero", zero, TOP, zero, h - MARGIN, AXIS, "");
    let bars = [
        ("bar weight", "weight", weight, DEEP_TEAL),
        ("bar difference", "difference from average", difference, LIGHT_TEAL),
        ("bar contribution", "contribution", contribution, sign_color(contribution)),
    ];
    for (k, (class, label, value, fill)) in bars.into_iter().enumerate() {
        let y = TOP + k as f64 * band;
        doc.rect(
            class,
            x.at(value.min(0.0)),
            y + 0.2 * band,
            value.abs() * x.scale,
            0.6 * band,
            fill,
            &format!(r#" data-value="{value}""#),
        );
        doc.text("label", LABEL_WIDTH - 6.0, y + 0.5 * band + 4.0, "end", label);
    }
    Ok(doc.finish())
}

fn triangle(spec: &ChartSpec) -> Result<String, ExplainError> {
    let ChartData::Triangle {
        feature,
        target,
        points,
        feature_mean,
        feature_std,
        target_mean,
        target_std,
        weight,
        today,
    } = &spec.data
    else {
        unreachable!("dispatched on kind")
    };
    finite(points.iter().flatten().copied(), "point")?;
    finite(
        [*feature_mean, *feature_std, *target_mean, *target_std, *weight, *today],
        "model value",
    )?;
    if !(*feature_std > 0.0 && *target_std > 0.0) {
        return Err(invalid("standard deviations must be positive"));
    }
    let slope = weight * target_std / feature_std;
    let difference = (today - feature_mean) / feature_std;
    let contribution = weight * difference;
    let apex = target_mean + slope * (today - feature_mean);

    let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    xs.extend([*feature_mean, *today]);
    let (x_lo, x_hi) = padded(&xs);
    let mut ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    ys.extend([*target_mean, apex]);
    ys.extend([x_lo, x_hi].map(|v| target_mean + slope * (v - feature_mean)));
    let (y_lo, y_hi) = padded(&ys);

    let (w, h) = (spec.width as f64, spec.height as f64);
    let left = 60.0;
    let x = Axis::new(x_lo, x_hi, left, w - MARGIN);
    let y = Axis::new(y_lo, y_hi, h - 40.0, TOP);
    let mut doc = Doc::new(
        spec,
        &format!(
            r#" data-x-scale="{}" data-y-scale="{}""#,
            x.scale,
            -y.scale
        ),
    );
    doc.line("axis x", left, h - 40.0, w - MARGIN, h - 40.0, AXIS, "");
    doc.line("axis y", left, TOP, left, h - 40.0, AXIS, "");
    doc.text("axis-label", (left + w - MARGIN) / 2.0, h - 10.0, "middle", feature);
    doc.text("axis-label", 14.0, TOP - 8.0, "start", target);
    for p in points {
        doc.circle("point", x.at(p[0]), y.at(p[1]), LIGHT_TEAL);
    }
    doc.line(
        "regression",
        x.at(x_lo),
        y.at(target_mean + slope * (x_lo - feature_mean)),
        x.at(x_hi),
        y.at(target_mean + slope * (x_hi - feature_mean)),
        DEEP_TEAL,
        &format!(r#" data-slope="{slope}""#),
    );
    doc.line(
        "leg horizontal",
        x.at(*feature_mean),
        y.at(*target_mean),
        x.at(*today),
        y.at(*target_mean),
        LIGHT_TEAL,
        &format!(r#" data-value="{difference}""#),
    );
    doc.line(
        "leg vertical contribution",
        x.at(*today),
        y.at(*target_mean),
        x.at(*today),
        y.at(apex),
        sign_color(contribution),
        &format!(r#" data-value="{contribution}""#),
    );
    Ok(doc.finish())
}

fn timeseries(
    spec: &ChartSpec,
    label: &str,
    dates: &[NaiveDate],
    values: &[Option<f64>],
    window: usize,
) -> Result<String, ExplainError> {
    if dates.len() != values.len() {
        return Err(invalid(format!("{} dates for {} values", dates.len(), values.len())));
    }
    if window == 0 {
        return Err(invalid("moving-average window must be positive"));
    }
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(invalid("series has no observations"));
    }
    finite(observed.iter().copied(), "series value")?;
    if dates.windows(2).any(|d| d[1] <= d[0]) {
        return Err(invalid("dates must be strictly increasing"));
    }
    let (w, h) = (spec.width as f64, spec.height as f64);
    let left = 60.0;
    let span = (dates[dates.len() - 1] - dates[0]).num_days() as f64;
    let x = Axis::new(0.0, span, left, w - MARGIN);
    let (y_lo, y_hi) = padded(&observed);
    let y = Axis::new(y_lo, y_hi, h - 40.0, TOP);
    let day = |d: &NaiveDate| (*d - dates[0]).num_days() as f64;
    let mut doc = Doc::new(spec, &format!(r#" data-window="{window}""#));
    doc.line("axis x", left, h - 40.0, w - MARGIN, h - 40.0, AXIS, "");
    doc.line("axis y", left, TOP, left, h - 40.0, AXIS, "");
    doc.text("axis-label", left, h - 22.0, "start", &dates[0].to_string());
    doc.text("axis-label", w - MARGIN, h - 22.0, "end", &dates[dates.len() - 1].to_string());
    doc.text("axis-label", 14.0, TOP - 8.0, "start", label);
    for (d, v) in dates.iter().zip(values) {
        if let Some(v) = v {
            doc.circle("point", x.at(day(d)), y.at(*v), LIGHT_TEAL);
        }
    }
    let smooth = moving_average(values, window);
    let mut run: Vec<(f64, f64)> = Vec::new();
    for (d, v) in dates.iter().zip(&smooth) {
        match v {
            Some(v) => run.push((x.at(day(d)), y.at(*v))),
            None if !run.is_empty() => {
                doc.polyline("moving-average", &run, DEEP_TEAL);
                run.clear();
            }
            None => {}
        }
    }
    if !run.is_empty() {
        doc.polyline("moving-average", &run, DEEP_TEAL);
    }
    Ok(doc.finish())
}

fn scatter(spec: &ChartSpec, x_label: &str, y_label: &str, points: &[[f64; 2]]) -> Result<String, ExplainError> {
    finite(points.iter().flatten().copied(), "point")?;
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let r = pearson_r(&xs, &ys).map_err(|e| invalid(format!("correlation undefined: {e}")))?;
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;

    let (w, h) = (spec.width as f64, spec.height as f64);
    let left = 60.0;
    let bar_top = TOP;
    let plot_top = TOP + 30.0;
    let (x_lo, x_hi) = padded(&xs);
    let mut all_y = ys.clone();
    all_y.extend([x_lo, x_hi].map(|v| my + slope * (v - mx)));
    let (y_lo, y_hi) = padded(&all_y);
    let x = Axis::new(x_lo, x_hi, left, w - MARGIN);
    let y = Axis::new(y_lo, y_hi, h - 40.0, plot_top);

    // correlation bar over [-1, 1]
    let bar = Axis::new(-1.0, 1.0, left, w - MARGIN);
    let mut doc = Doc::new(spec, &format!(r#" data-r="{r}" data-scale="{}""#, bar.scale));
    doc.rect("correlation-track", left, bar_top, w - MARGIN - left, 12.0, "#EEEEEE", "");
    doc.rect(
        "bar correlation",
        bar.at(r.min(0.0)),
        bar_top,
        r.abs() * bar.scale,
        12.0,
        sign_color(r),
        &format!(r#" data-value="{r}""#),
    );
    doc.text("correlation-label", w - MARGIN, bar_top + 24.0, "end", &format!("r = {r:.2}"));
    doc.line("axis x", left, h - 40.0, w - MARGIN, h - 40.0, AXIS, "");
    doc.line("axis y", left, plot_top, left, h - 40.0, AXIS, "");
    doc.text("axis-label", (left + w - MARGIN) / 2.0, h - 10.0, "middle", x_label);
    doc.text("axis-label", 14.0, plot_top - 4.0, "start", y_label);
    for p in points {
        doc.circle("point", x.at(p[0]), y.at(p[1]), LIGHT_TEAL);
    }
    doc.line(
        "regression",
        x.at(x_lo),
        y.at(my + slope * (x_lo - mx)),
        x.at(x_hi),
        y.at(my + slope * (x_hi - mx)),
        DEEP_TEAL,
        &format!(r#" data-slope="{slope}""#),
    );
    Ok(doc.finish())
}
