//! Report emission: Markdown summary, RFC-4180 CSVs, and self-contained
//! SVG line charts. Byte-deterministic for identical inputs; the only
//! run metadata written comes from the inputs, never the wall clock.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SentimentDistribution, TopicRow, TrendSeries};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("output directory {path} is not writable: {reason}")]
    Unwritable { path: PathBuf, reason: String },
    #[error("nothing to report: no distribution, tables, or series")]
    NoInputs,
    #[error("write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(format!("unknown report format: {other}")),
        }
    }
}

/// Run metadata rendered into the report header; sourced from the inputs
/// so identical inputs yield identical bytes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_digest: String,
    pub corpus_digest: String,
    pub post_count: u64,
}

/// One topic table (per group) with its outlier footer count.
#[derive(Debug, Clone)]
pub struct GroupTable {
    pub group: String,
    pub rows: Vec<TopicRow>,
    pub outliers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub meta: RunMeta,
    pub distribution: Option<SentimentDistribution>,
    pub tables: Vec<GroupTable>,
    pub series: Vec<TrendSeries>,
}

/// One emitted file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
    pub subject: String,
}

/// Renders the requested formats into `out_dir` and returns the manifest.
pub fn render_report(
    inputs: &ReportInputs,
    out_dir: &Path,
    formats: &BTreeSet<ReportFormat>,
) -> Result<Vec<ManifestEntry>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ReportError::Unwritable {
        path: out_dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let probe = out_dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|e| ReportError::Unwritable {
        path: out_dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let _ = std::fs::remove_file(&probe);
    if inputs.distribution.is_none() && inputs.tables.is_empty() && inputs.series.is_empty() {
        return Err(ReportError::NoInputs);
    }

    let mut manifest = Vec::new();
    let mut write = |name: &str, kind: &str, subject: &str, bytes: &[u8]| -> Result<(), ReportError> {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| ReportError::Io {
            path: path.clone(),
            source: e,
        })?;
        manifest.push(ManifestEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            subject: subject.to_string(),
        });
        Ok(())
    };

    if formats.contains(&ReportFormat::Markdown) {
        write("report.md", "markdown", "report", markdown(inputs).as_bytes())?;
    }
    if formats.contains(&ReportFormat::Csv) {
        if let Some(dist) = &inputs.distribution {
            write("sentiment.csv", "csv", "sentiment", &distribution_csv(dist)?)?;
        }
        for table in &inputs.tables {
            let name = format!("topics-{}.csv", slugify(&table.group));
            write(&name, "csv", &table.group, &table_csv(table)?)?;
        }
        for series in &inputs.series {
            let name = format!("trend-{}.csv", series.subject.slug());
            write(&name, "csv", &series.subject.display(), &series_csv(series)?)?;
        }
    }
    if formats.contains(&ReportFormat::Svg) {
        for series in &inputs.series {
            let name = format!("trend-{}.svg", series.subject.slug());
            write(&name, "svg", &series.subject.display(), svg_line_chart(series).as_bytes())?;
        }
    }
    Ok(manifest)
}

fn slugify(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect::<String>()
        .trim_matches('-')
        .to_string()
}

fn markdown(inputs: &ReportInputs) -> String {
    let mut md = String::new();
    md.push_str("# Vaccine surveillance report\n\n");
    md.push_str("## Run metadata\n\n");
    let _ = writeln!(md, "- config digest: `{}`", inputs.meta.config_digest);
    let _ = writeln!(md, "- corpus digest: `{}`", inputs.meta.corpus_digest);
    let _ = writeln!(md, "- posts analysed: {}", inputs.meta.post_count);
    md.push('\n');

    if let Some(dist) = &inputs.distribution {
        md.push_str("## Sentiment distribution\n\n");
        md.push_str("| label | count | percent |\n|---|---:|---:|\n");
        let _ = writeln!(md, "| negative | {} | {:.2}% |", dist.n_negative, dist.pct_negative);
        let _ = writeln!(md, "| neutral | {} | {:.2}% |", dist.n_neutral, dist.pct_neutral);
        let _ = writeln!(md, "| positive | {} | {:.2}% |", dist.n_positive, dist.pct_positive);
        let _ = writeln!(md, "| total | {} | 100.00% |", dist.n_total);
        md.push('\n');
    }

    for table in &inputs.tables {
        let _ = writeln!(md, "## Topics — {}\n", table.group);
        if table.rows.is_empty() {
            md.push_str("No topics above the minimum size.\n");
        } else {
            md.push_str("| # | topic | comments |\n|---:|---|---:|\n");
            for row in &table.rows {
                let _ = writeln!(md, "| {} | {} | {} |", row.serial, row.label, row.count);
            }
        }
        let _ = writeln!(md, "\nOutliers: {}\n", table.outliers);
    }

    if !inputs.series.is_empty() {
        md.push_str("## Trends\n\n");
        for series in &inputs.series {
            let peak = series.buckets.iter().max_by_key(|b| b.count);
            match peak {
                Some(peak) if !series.buckets.is_empty() => {
                    let _ = writeln!(
                        md,
                        "- {}: {} posts across {} buckets; peak {} at {}",
                        series.subject.display(),
                        series.total(),
                        series.buckets.len(),
                        peak.count,
                        peak.start.format("%Y-%m-%d"),
                    );
                }
                _ => {
                    let _ = writeln!(md, "- {}: no posts", series.subject.display());
                }
            }
        }
    }
    md
}

fn distribution_csv(dist: &SentimentDistribution) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "count", "percent"])?;
    w.write_record(["negative", &dist.n_negative.to_string(), &format!("{:.2}", dist.pct_negative)])?;
    w.write_record(["neutral", &dist.n_neutral.to_string(), &format!("{:.2}", dist.pct_neutral)])?;
    w.write_record(["positive", &dist.n_positive.to_string(), &format!("{:.2}", dist.pct_positive)])?;
    Ok(w.into_inner().expect("vec writer never fails"))
}

fn table_csv(table: &GroupTable) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["serial", "topic", "comments"])?;
    for row in &table.rows {
        w.write_record([&row.serial.to_string(), &row.label, &row.count.to_string()])?;
    }
    Ok(w.into_inner().expect("vec writer never fails"))
}

fn series_csv(series: &TrendSeries) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bucket_start", "count"])?;
    for bucket in &series.buckets {
        w.write_record([
            &bucket.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            &bucket.count.to_string(),
        ])?;
    }
    Ok(w.into_inner().expect("vec writer never fails"))
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 400.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 60.0;

/// Self-contained 800x400 line chart: inline styling, no scripts. A
/// single-bucket series degenerates to one point and a zero-length
/// polyline, which is still well-formed SVG.
fn svg_line_chart(series: &TrendSeries) -> String {
    let inner_w = SVG_W - MARGIN_L - MARGIN_R;
    let inner_h = SVG_H - MARGIN_T - MARGIN_B;
    let n = series.buckets.len();
    let max_count = series.buckets.iter().map(|b| b.count).max().unwrap_or(0).max(1);

    let x = |i: usize| -> f64 {
        if n <= 1 {
            MARGIN_L + inner_w / 2.0
        } else {
            MARGIN_L + inner_w * i as f64 / (n - 1) as f64
        }
    };
    let y = |count: u64| -> f64 { MARGIN_T + inner_h - inner_h * count as f64 / max_count as f64 };

    let mut svg = String::new();
    svg.push_str(r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    svg.push('\n');
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W:.0} {SVG_H:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"  <title>{}</title>"#,
        xml_escape(&series.subject.display())
    );
    // Axes.
    let x0 = MARGIN_L;
    let y0 = MARGIN_T + inner_h;
    let _ = writeln!(
        svg,
        r#"  <line x1="{x0:.2}" y1="{:.2}" x2="{x0:.2}" y2="{y0:.2}" stroke="black"/>"#,
        MARGIN_T
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#,
        SVG_W - MARGIN_R
    );
    // Y-axis labels: zero and max.
    let _ = writeln!(
        svg,
        r#"  <text x="{:.2}" y="{y0:.2}" text-anchor="end">0</text>"#,
        x0 - 6.0
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{:.2}" y="{:.2}" text-anchor="end">{max_count}</text>"#,
        x0 - 6.0,
        MARGIN_T + 4.0
    );

    if n > 0 {
        let points: Vec<String> = series
            .buckets
            .iter()
            .enumerate()
            .map(|(i, b)| format!("{:.2},{:.2}", x(i), y(b.count)))
            .collect();
        let polyline_points = if n == 1 {
            format!("{} {}", points[0], points[0])
        } else {
            points.join(" ")
        };
        let _ = writeln!(
            svg,
            r##"  <polyline points="{polyline_points}" fill="none" stroke="#1f6f8b" stroke-width="2"/>"##
        );
        for (i, bucket) in series.buckets.iter().enumerate() {
            let _ = writeln!(
                svg,
                r##"  <circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f6f8b"/>"##,
                x(i),
                y(bucket.count)
            );
        }
        // X-axis labels: first, middle, last bucket starts.
        let mut label_indices = vec![0];
        if n > 2 {
            label_indices.push(n / 2);
        }
        if n > 1 {
            label_indices.push(n - 1);
        }
        for i in label_indices {
            let _ = writeln!(
                svg,
                r#"  <text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x(i),
                y0 + 20.0,
                series.buckets[i].start.format("%Y-%m-%d")
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
