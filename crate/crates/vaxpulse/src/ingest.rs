//! Pulling posts from pluggable source adapters into the corpus store.
//!
//! Live platform integrations implement [`SourceAdapter`]; this crate
//! ships a fixture-file adapter, a recorded-response adapter for replay
//! tests, and a CSV loader that models search-interest rows as synthetic
//! posts. Jobs follow pagination cursors, pace requests against a
//! per-minute rate limit, and retry transport errors with exponential
//! backoff before aborting with partial stats.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{BackoffPolicy, Clock, RateLimiter};
use crate::corpus::{CorpusError, CorpusStore, Platform, RawPost, Upsert};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("fixture {path}: {reason}")]
    Fixture { path: PathBuf, reason: String },
    #[error("adapter transport failure: {0}")]
    Transport(String),
    #[error("adapter returned an unknown cursor: {0}")]
    UnknownCursor(String),
    #[error("job aborted after {attempts} attempts: {last}; partial stats {stats:?}")]
    Aborted {
        attempts: u32,
        last: String,
        stats: IngestStats,
    },
    #[error(transparent)]
    Store(#[from] CorpusError),
    #[error("invalid job: {0}")]
    InvalidJob(String),
}

/// One page of results plus the cursor for the next page, when any.
#[derive(Debug, Clone)]
pub struct Page {
    pub posts: Vec<RawPost>,
    pub next_cursor: Option<String>,
}

/// Time window for a fetch; `since <= created_at < until`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchWindow {
    #[serde(with = "crate::corpus::ts_second")]
    pub since: DateTime<Utc>,
    #[serde(with = "crate::corpus::ts_second")]
    pub until: DateTime<Utc>,
}

impl FetchWindow {
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.since && ts < self.until
    }

    /// A window wide enough for any fixture.
    pub fn unbounded() -> Self {
        Self {
            since: Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap(),
            until: Utc.with_ymd_and_hms(2100, 1, 1, 0, 0, 0).unwrap(),
        }
    }
}

/// Behavioural contract for a post source. Given unchanged source state,
/// repeated fetches with the same arguments return the same page, and
/// every returned post falls within the requested window.
pub trait SourceAdapter {
    fn platform(&self) -> Platform;
    fn fetch(
        &self,
        query: &str,
        window: &FetchWindow,
        cursor: Option<&str>,
    ) -> Result<Page, IngestError>;
}

/// One ingestion job.
#[derive(Debug, Clone)]
pub struct FetchJob {
    pub source: Platform,
    pub query: String,
    pub window: FetchWindow,
    /// Max adapter requests per minute.
    pub rate_limit: u32,
    pub max_pages: Option<u32>,
}

impl FetchJob {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.window.since >= self.window.until {
            return Err(IngestError::InvalidJob("window since must precede until".into()));
        }
        if self.rate_limit < 1 {
            return Err(IngestError::InvalidJob("rate_limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run accounting; `fetched = stored + duplicates + skipped_invalid`
/// always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub fetched: u64,
    pub stored: u64,
    pub duplicates: u64,
    pub skipped_invalid: u64,
}

impl IngestStats {
    pub fn consistent(&self) -> bool {
        self.fetched == self.stored + self.duplicates + self.skipped_invalid
    }
}

/// Parse warnings from fixture loading, with 1-based line numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineWarning {
    pub line: usize,
    pub message: String,
}

/// Loads line-delimited raw posts; unparseable lines become warnings.
/// A nonempty file with zero parseable lines is an error (wrong format).
pub fn load_fixture(path: &Path) -> Result<(Vec<RawPost>, Vec<LineWarning>), IngestError> {
    let body = std::fs::read_to_string(path).map_err(|e| IngestError::Fixture {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut posts = Vec::new();
    let mut warnings = Vec::new();
    let mut nonempty_lines = 0usize;
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        nonempty_lines += 1;
        match serde_json::from_str::<RawPost>(line) {
            Ok(post) => posts.push(post),
            Err(err) => warnings.push(LineWarning {
                line: idx + 1,
                message: err.to_string(),
            }),
        }
    }
    if posts.is_empty() && nonempty_lines > 0 {
        return Err(IngestError::Fixture {
            path: path.to_path_buf(),
            reason: "no parseable records; is this a corpus-format fixture?".into(),
        });
    }
    Ok((posts, warnings))
}

/// Salted author anonymization: lowercase hex digest of the native id.
pub fn author_hash(salt: &str, native_author_id: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt.as_bytes());
    hasher.update([0x1e]);
    hasher.update(native_author_id.as_bytes());
    hex::encode(hasher.finalize())
}

/// Loads a CSV of search-interest rows (`date,query,interest`) as
/// synthetic posts: text is the query term, created_at the row date at
/// midnight UTC, and the interest value rides along in `source_query`.
pub fn load_trends_series(
    path: &Path,
    salt: &str,
) -> Result<(Vec<RawPost>, Vec<LineWarning>), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| IngestError::Fixture {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| IngestError::Fixture {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let expected = ["date", "query", "interest"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IngestError::Fixture {
            path: path.to_path_buf(),
            reason: format!("expected header date,query,interest, got {headers:?}"),
        });
    }

    let mut posts = Vec::new();
    let mut warnings = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                warnings.push(LineWarning {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let (date, query, interest) = (&record[0], &record[1], &record[2]);
        let parsed_date = match NaiveDate::parse_from_str(date, "%Y-%m-%d") {
            Ok(d) => d,
            Err(e) => {
                warnings.push(LineWarning {
                    line,
                    message: format!("bad date {date:?}: {e}"),
                });
                continue;
            }
        };
        let interest_value: f64 = match interest.parse() {
            Ok(v) => v,
            Err(_) => {
                warnings.push(LineWarning {
                    line,
                    message: format!("non-numeric interest {interest:?}"),
                });
                continue;
            }
        };
        let created = Utc.from_utc_datetime(&parsed_date.and_hms_opt(0, 0, 0).expect("midnight"));
        posts.push(RawPost {
            id: format!("{date}:{query}"),
            platform: Platform::GoogleTrends,
            platform_id: format!("{date}:{query}"),
            author_hash: author_hash(salt, "google_trends"),
            created_at: created,
            fetched_at: created,
            text: query.to_string(),
            lang: "und".into(),
            source_query: format!("{query}#interest={interest_value}"),
        });
    }
    Ok((posts, warnings))
}

/// Adapter over a corpus-format fixture file, paged deterministically.
pub struct FixtureAdapter {
    platform: Platform,
    posts: Vec<RawPost>,
    page_size: usize,
    pub warnings: Vec<LineWarning>,
}

impl FixtureAdapter {
    pub fn open(platform: Platform, path: &Path, page_size: usize) -> Result<Self, IngestError> {
        let (posts, warnings) = load_fixture(path)?;
        Ok(Self {
            platform,
            posts,
            page_size: page_size.max(1),
            warnings,
        })
    }

    pub fn from_posts(platform: Platform, posts: Vec<RawPost>, page_size: usize) -> Self {
        Self {
            platform,
            posts,
            page_size: page_size.max(1),
            warnings: Vec::new(),
        }
    }
}

impl SourceAdapter for FixtureAdapter {
    fn platform(&self) -> Platform {
        self.platform
    }

    fn fetch(
        &self,
        _query: &str,
        window: &FetchWindow,
        cursor: Option<&str>,
    ) -> Result<Page, IngestError> {
        let in_window: Vec<&RawPost> = self
            .posts
            .iter()
            .filter(|p| window.contains(p.created_at))
            .collect();
        let offset: usize = match cursor {
            Some(c) => c
                .parse()
                .map_err(|_| IngestError::UnknownCursor(c.to_string()))?,
            None => 0,
        };
        let page: Vec<RawPost> = in_window
            .iter()
            .skip(offset)
            .take(self.page_size)
            .map(|p| (*p).clone())
            .collect();
        let next = offset + page.len();
        let next_cursor = if next < in_window.len() {
            Some(next.to_string())
        } else {
            None
        };
        Ok(Page {
            posts: page,
            next_cursor,
        })
    }
}

#[derive(Debug, Deserialize)]
struct RecordedMeta {
    platform: Platform,
    /// Cursor chain: entry i serves cursor `chain[i].cursor` from file
    /// `chain[i].file` and advances to `chain[i].next`.
    chain: Vec<RecordedPageMeta>,
}

#[derive(Debug, Deserialize)]
struct RecordedPageMeta {
    cursor: Option<String>,
    file: String,
    next: Option<String>,
}

/// Replays a recorded fetch session from `page-NN.jsonl` files plus a
/// `meta.json` cursor chain.
pub struct RecordedAdapter {
    dir: PathBuf,
    meta: RecordedMeta,
}

impl RecordedAdapter {
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        let meta_path = dir.join("meta.json");
        let body = std::fs::read_to_string(&meta_path).map_err(|e| IngestError::Fixture {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;
        let meta: RecordedMeta = serde_json::from_str(&body).map_err(|e| IngestError::Fixture {
            path: meta_path,
            reason: e.to_string(),
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
        })
    }
}

impl SourceAdapter for RecordedAdapter {
    fn platform(&self) -> Platform {
        self.meta.platform
    }

    fn fetch(
        &self,
        _query: &str,
        window: &FetchWindow,
        cursor: Option<&str>,
    ) -> Result<Page, IngestError> {
        let entry = self
            .meta
            .chain
            .iter()
            .find(|e| e.cursor.as_deref() == cursor)
            .ok_or_else(|| IngestError::UnknownCursor(cursor.unwrap_or("<start>").to_string()))?;
        let (posts, _warnings) = load_fixture(&self.dir.join(&entry.file))?;
        Ok(Page {
            posts: posts
                .into_iter()
                .filter(|p| window.contains(p.created_at))
                .collect(),
            next_cursor: entry.next.clone(),
        })
    }
}

/// Runs a fetch job to exhaustion (or `max_pages`), validating and
/// upserting every post. Transport errors retry with backoff; once
/// retries are exhausted the job aborts carrying the partial stats.
pub fn run_job(
    job: &FetchJob,
    adapter: &dyn SourceAdapter,
    store: &mut CorpusStore,
    clock: &dyn Clock,
    backoff: &mut BackoffPolicy,
) -> Result<IngestStats, IngestError> {
    job.validate()?;
    let mut stats = IngestStats::default();
    let mut limiter = RateLimiter::new(job.rate_limit);
    let mut cursor: Option<String> = None;
    let mut pages = 0u32;

    loop {
        if let Some(max) = job.max_pages {
            if pages >= max {
                break;
            }
        }
        let page = match fetch_with_retry(job, adapter, &mut limiter, clock, backoff, cursor.as_deref()) {
            Ok(page) => page,
            Err((attempts, last)) => {
                return Err(IngestError::Aborted {
                    attempts,
                    last,
                    stats,
                });
            }
        };
        pages += 1;
        for post in &page.posts {
            stats.fetched += 1;
            if post.validate().is_err() || !job.window.contains(post.created_at) {
                stats.skipped_invalid += 1;
                continue;
            }
            match store.upsert(post)? {
                Upsert::Stored => stats.stored += 1,
                Upsert::Duplicate => stats.duplicates += 1,
            }
        }
        match page.next_cursor {
            Some(next) => cursor = Some(next),
            None => break,
        }
    }
    debug_assert!(stats.consistent());
    Ok(stats)
}

fn fetch_with_retry(
    job: &FetchJob,
    adapter: &dyn SourceAdapter,
    limiter: &mut RateLimiter,
    clock: &dyn Clock,
    backoff: &mut BackoffPolicy,
    cursor: Option<&str>,
) -> Result<Page, (u32, String)> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        limiter.acquire(clock);
        match adapter.fetch(&job.query, &job.window, cursor) {
            Ok(page) => return Ok(page),
            Err(IngestError::Transport(reason)) if attempt < backoff.max_attempts => {
                log::warn!("fetch attempt {attempt} failed, retrying: {reason}");
                backoff.backoff(attempt, clock);
            }
            Err(IngestError::Transport(reason)) => return Err((attempt, reason)),
            Err(other) => return Err((attempt, other.to_string())),
        }
    }
}

/// Convenience map of adapters by platform, for multi-source runs.
pub type AdapterSet = BTreeMap<Platform, Box<dyn SourceAdapter>>;
