//! Time-bucketed aggregation: sentiment distributions, topic tables, and
//! per-subject trend series.

mod report;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ConcernCategory;
use crate::sentiment::SentimentLabel;
use crate::topics::TopicModel;

pub use report::{
    render_report, GroupTable, ManifestEntry, ReportError, ReportFormat, ReportInputs, RunMeta,
};

#[derive(Debug, Error)]
pub enum TrendsError {
    #[error("sentiment distribution over an empty stream is undefined")]
    EmptyDistribution,
}

/// Calendar bucket size. Buckets anchor at 00:00 UTC; weeks start Monday,
/// months on day 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Daily,
    Weekly,
    Monthly,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "daily" => Ok(Granularity::Daily),
            "weekly" => Ok(Granularity::Weekly),
            "monthly" => Ok(Granularity::Monthly),
            other => Err(format!("unknown granularity: {other}")),
        }
    }
}

/// Start of the bucket containing `ts`.
pub fn bucket_start(ts: DateTime<Utc>, granularity: Granularity) -> DateTime<Utc> {
    let date = ts.date_naive();
    let anchored = match granularity {
        Granularity::Daily => date,
        Granularity::Weekly => {
            date - chrono::Duration::days(date.weekday().num_days_from_monday() as i64)
        }
        Granularity::Monthly => date.with_day(1).expect("day 1 exists"),
    };
    Utc.from_utc_datetime(&anchored.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

/// Start of the bucket after `start`.
pub fn bucket_next(start: DateTime<Utc>, granularity: Granularity) -> DateTime<Utc> {
    match granularity {
        Granularity::Daily => start + chrono::Duration::days(1),
        Granularity::Weekly => start + chrono::Duration::days(7),
        Granularity::Monthly => {
            let (year, month) = if start.month() == 12 {
                (start.year() + 1, 1)
            } else {
                (start.year(), start.month() + 1)
            };
            Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0)
                .single()
                .expect("first of month exists")
        }
    }
}

/// What a trend series counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesSubject {
    Topic { id: i32, label: String },
    Concern(ConcernCategory),
}

impl SeriesSubject {
    /// Human-readable name used in reports.
    pub fn display(&self) -> String {
        match self {
            SeriesSubject::Topic { id, label } => format!("topic {id}: {label}"),
            SeriesSubject::Concern(c) => format!("concern: {c}"),
        }
    }

    /// Filesystem-safe slug used in output file names.
    pub fn slug(&self) -> String {
        let base = match self {
            SeriesSubject::Topic { id, label } => format!("topic-{id}-{label}"),
            SeriesSubject::Concern(c) => format!("concern-{c}"),
        };
        let mut slug: String = base
            .to_lowercase()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
            .collect();
        while slug.contains("--") {
            slug = slug.replace("--", "-");
        }
        slug.trim_matches('-').to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    #[serde(with = "crate::corpus::ts_second")]
    pub start: DateTime<Utc>,
    pub count: u64,
}

/// Contiguous bucket counts for one subject; interior gaps are zero-filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub subject: SeriesSubject,
    pub granularity: Granularity,
    pub buckets: Vec<Bucket>,
}

impl TrendSeries {
    pub fn total(&self) -> u64 {
        self.buckets.iter().map(|b| b.count).sum()
    }
}

/// Buckets the timestamps of the (already subject-filtered) posts.
pub fn bucket_counts(
    times: &[DateTime<Utc>],
    granularity: Granularity,
    subject: SeriesSubject,
) -> TrendSeries {
    if times.is_empty() {
        return TrendSeries {
            subject,
            granularity,
            buckets: Vec::new(),
        };
    }
    let mut counts: std::collections::BTreeMap<DateTime<Utc>, u64> = std::collections::BTreeMap::new();
    for &ts in times {
        *counts.entry(bucket_start(ts, granularity)).or_insert(0) += 1;
    }
    let first = *counts.keys().next().expect("non-empty");
    let last = *counts.keys().next_back().expect("non-empty");
    let mut buckets = Vec::new();
    let mut cursor = first;
    while cursor <= last {
        buckets.push(Bucket {
            start: cursor,
            count: counts.get(&cursor).copied().unwrap_or(0),
        });
        cursor = bucket_next(cursor, granularity);
    }
    TrendSeries {
        subject,
        granularity,
        buckets,
    }
}

/// Exact counts with display percentages rounded half-up to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentDistribution {
    pub n_total: u64,
    pub n_negative: u64,
    pub n_neutral: u64,
    pub n_positive: u64,
    pub pct_negative: f64,
    pub pct_neutral: f64,
    pub pct_positive: f64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Counts the labels; errors on an empty stream.
pub fn sentiment_distribution(
    labels: impl IntoIterator<Item = SentimentLabel>,
) -> Result<SentimentDistribution, TrendsError> {
    let (mut negative, mut neutral, mut positive) = (0u64, 0u64, 0u64);
    for label in labels {
        match label {
            SentimentLabel::Negative => negative += 1,
            SentimentLabel::Neutral => neutral += 1,
            SentimentLabel::Positive => positive += 1,
        }
    }
    let total = negative + neutral + positive;
    if total == 0 {
        return Err(TrendsError::EmptyDistribution);
    }
    let pct = |count: u64| round2(100.0 * count as f64 / total as f64);
    Ok(SentimentDistribution {
        n_total: total,
        n_negative: negative,
        n_neutral: neutral,
        n_positive: positive,
        pct_negative: pct(negative),
        pct_neutral: pct(neutral),
        pct_positive: pct(positive),
    })
}

/// One row of a topic table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRow {
    pub serial: usize,
    pub label: String,
    pub count: usize,
}

/// Non-outlier topics ordered by count descending (label tie-break),
/// plus the outlier count for the footer.
pub fn topic_table(model: &TopicModel) -> (Vec<TopicRow>, usize) {
    let mut rows: Vec<(String, usize)> = model
        .topics
        .iter()
        .map(|t| (t.label.clone(), t.size))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, (label, count))| TopicRow {
            serial: i + 1,
            label,
            count,
        })
        .collect();
    (rows, model.outlier_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 12, 30, 0).unwrap()
    }

    fn concern_subject() -> SeriesSubject {
        SeriesSubject::Concern(ConcernCategory::SideEffects)
    }

    #[test]
    fn monthly_buckets_zero_fill_interior_gaps() {
        let times = vec![
            ts(2023, 11, 2),
            ts(2023, 11, 3),
            ts(2023, 11, 3),
            ts(2023, 11, 15),
            ts(2024, 5, 1),
        ];
        let series = bucket_counts(&times, Granularity::Monthly, concern_subject());
        let starts: Vec<(i32, u32)> = series.buckets.iter().map(|b| (b.start.year(), b.start.month())).collect();
        assert_eq!(
            starts,
            vec![
                (2023, 11),
                (2023, 12),
                (2024, 1),
                (2024, 2),
                (2024, 3),
                (2024, 4),
                (2024, 5)
            ]
        );
        let counts: Vec<u64> = series.buckets.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![4, 0, 0, 0, 0, 0, 1]);
        assert_eq!(series.total(), 5);
    }

    #[test]
    fn daily_buckets_match_hand_count() {
        let times = vec![
            ts(2023, 11, 2),
            ts(2023, 11, 3),
            ts(2023, 11, 3),
            ts(2023, 11, 15),
            ts(2024, 5, 1),
        ];
        let series = bucket_counts(&times, Granularity::Daily, concern_subject());
        assert_eq!(series.buckets[0].count, 1);
        assert_eq!(series.buckets[1].count, 2);
        // 2023-11-04 .. 2023-11-14 zero-filled.
        for bucket in &series.buckets[2..13] {
            assert_eq!(bucket.count, 0);
        }
        assert_eq!(series.buckets[13].count, 1);
        assert_eq!(series.total(), 5);
        // Day count from 2023-11-02 through 2024-05-01 inclusive.
        assert_eq!(series.buckets.len(), 182);
    }

    #[test]
    fn weekly_buckets_anchor_on_monday() {
        // 2023-11-02 is a Thursday; its week starts Monday 2023-10-30.
        let series = bucket_counts(&[ts(2023, 11, 2)], Granularity::Weekly, concern_subject());
        assert_eq!(series.buckets.len(), 1);
        let start = series.buckets[0].start;
        assert_eq!((start.year(), start.month(), start.day()), (2023, 10, 30));
        assert_eq!(start.weekday(), chrono::Weekday::Mon);
    }

    #[test]
    fn empty_series_is_empty() {
        let series = bucket_counts(&[], Granularity::Monthly, concern_subject());
        assert!(series.buckets.is_empty());
        assert_eq!(series.total(), 0);
    }

    #[test]
    fn distribution_matches_reported_percentages() {
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat_n(SentimentLabel::Negative, 987));
        labels.extend(std::iter::repeat_n(SentimentLabel::Positive, 2723));
        labels.extend(std::iter::repeat_n(SentimentLabel::Neutral, 6290));
        let dist = sentiment_distribution(labels).unwrap();
        assert_eq!(dist.n_total, 10_000);
        assert_eq!(format!("{:.2}", dist.pct_negative), "9.87");
        assert_eq!(format!("{:.2}", dist.pct_positive), "27.23");
        assert_eq!(format!("{:.2}", dist.pct_neutral), "62.90");
        assert_eq!(dist.n_negative + dist.n_neutral + dist.n_positive, dist.n_total);
    }

    #[test]
    fn single_class_and_rounding_edge() {
        let dist = sentiment_distribution([SentimentLabel::Neutral]).unwrap();
        assert_eq!(format!("{:.2}", dist.pct_neutral), "100.00");
        assert_eq!(format!("{:.2}", dist.pct_negative), "0.00");

        let dist = sentiment_distribution([
            SentimentLabel::Negative,
            SentimentLabel::Neutral,
            SentimentLabel::Positive,
        ])
        .unwrap();
        assert_eq!(format!("{:.2}", dist.pct_negative), "33.33");
        assert_eq!(dist.n_total, 3);
        // Displayed values within 0.005 of exact.
        assert!((dist.pct_negative - 100.0 / 3.0).abs() < 0.005);
    }

    #[test]
    fn empty_distribution_is_an_error() {
        assert!(matches!(
            sentiment_distribution(std::iter::empty()),
            Err(TrendsError::EmptyDistribution)
        ));
    }

    #[test]
    fn daily_refines_monthly() {
        // Deterministic spread of timestamps across several months.
        let mut times = Vec::new();
        for i in 0..500u32 {
            let day = 1 + (i * 7) % 28;
            let month = 8 + (i % 12);
            let (y, m) = if month > 12 { (2024, month - 12) } else { (2023, month) };
            times.push(ts(y, m, day));
        }
        let monthly = bucket_counts(&times, Granularity::Monthly, concern_subject());
        let daily = bucket_counts(&times, Granularity::Daily, concern_subject());
        for bucket in &monthly.buckets {
            let daily_sum: u64 = daily
                .buckets
                .iter()
                .filter(|d| bucket_start(d.start, Granularity::Monthly) == bucket.start)
                .map(|d| d.count)
                .sum();
            assert_eq!(daily_sum, bucket.count, "month {}", bucket.start);
        }
        assert_eq!(monthly.total(), 500);
        assert_eq!(daily.total(), 500);
    }

    fn model_with_topics(topics: Vec<(i32, &str, usize)>, outliers: usize) -> TopicModel {
        TopicModel {
            group: "all".into(),
            assignments: Default::default(),
            ctfidf: crate::topics::CTfidfWeights {
                weights: Default::default(),
                term_freq: Default::default(),
                total_freq: Default::default(),
                avg_words_per_class: 0.0,
            },
            topics: topics
                .into_iter()
                .map(|(id, label, size)| crate::topics::Topic {
                    id,
                    top_terms: Vec::new(),
                    label: label.to_string(),
                    size,
                })
                .collect(),
            outlier_count: outliers,
            params: Default::default(),
            corpus_digest: "d".into(),
        }
    }

    #[test]
    fn topic_table_orders_by_count_with_label_tiebreak() {
        let model = model_with_topics(
            vec![
                (0, "Myocarditis and Pericarditis Following COVID-19 Vaccination", 2574),
                (1, "Vaccine-Related Deaths", 1907),
                (2, "Blood Clot Concerns and Experiences", 1844),
            ],
            0,
        );
        let (rows, outliers) = topic_table(&model);
        let counts: Vec<usize> = rows.iter().map(|r| r.count).collect();
        assert_eq!(counts, vec![2574, 1907, 1844]);
        assert_eq!(rows[0].serial, 1);
        assert_eq!(outliers, 0);

        // Equal counts break ties lexicographically by label.
        let model = model_with_topics(vec![(0, "zeta", 5), (1, "alpha", 5)], 0);
        let (rows, _) = topic_table(&model);
        assert_eq!(rows[0].label, "alpha");
        assert_eq!(rows[1].label, "zeta");
    }

    #[test]
    fn all_outlier_model_yields_empty_table_with_footer() {
        let model = model_with_topics(Vec::new(), 17);
        let (rows, outliers) = topic_table(&model);
        assert!(rows.is_empty());
        assert_eq!(outliers, 17);
    }

    #[test]
    fn subject_slugs_are_filesystem_safe() {
        let subject = SeriesSubject::Topic {
            id: 2,
            label: "Blood Clot Concerns and Experiences".into(),
        };
        assert_eq!(subject.slug(), "topic-2-blood-clot-concerns-and-experiences");
        assert_eq!(concern_subject().slug(), "concern-side-effects");
    }
}
