//! Canonical post records and the append-only, deduplicating corpus store.
//!
//! Records are UTF-8 JSON, one object per line, stored under
//! `segments/NNNN.jsonl`. A sidecar index (`index/keys.idx`) maps each
//! dedup key to the latest record location; segments are the source of
//! truth and the index is rebuilt when missing or unreadable. Records are
//! never mutated in place: reprocessing a post appends a new version and
//! queries resolve the latest version per key.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sentiment::{SentimentLabel, SentimentResult};

/// Source platform a post was retrieved from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    X,
    Reddit,
    Youtube,
    Facebook,
    GoogleTrends,
}

impl Platform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::X => "x",
            Platform::Reddit => "reddit",
            Platform::Youtube => "youtube",
            Platform::Facebook => "facebook",
            Platform::GoogleTrends => "google_trends",
        }
    }

    pub const ALL: [Platform; 5] = [
        Platform::X,
        Platform::Reddit,
        Platform::Youtube,
        Platform::Facebook,
        Platform::GoogleTrends,
    ];
}

impl std::str::FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Platform::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown platform: {s}"))
    }
}

impl std::fmt::Display for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relevance class assigned by the two-step cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceLabel {
    GeneralDiscussion,
    PersonalExperience,
    Unrelated,
}

impl RelevanceLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelevanceLabel::GeneralDiscussion => "general_discussion",
            RelevanceLabel::PersonalExperience => "personal_experience",
            RelevanceLabel::Unrelated => "unrelated",
        }
    }

    pub const ALL: [RelevanceLabel; 3] = [
        RelevanceLabel::GeneralDiscussion,
        RelevanceLabel::PersonalExperience,
        RelevanceLabel::Unrelated,
    ];
}

impl std::str::FromStr for RelevanceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelevanceLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown relevance label: {s}"))
    }
}

/// Vaccine a post refers to; `Other` covers generic or unlisted vaccines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaccineTag {
    Covid19,
    Shingrix,
    Rsv,
    Hpv,
    Other,
}

impl VaccineTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            VaccineTag::Covid19 => "covid19",
            VaccineTag::Shingrix => "shingrix",
            VaccineTag::Rsv => "rsv",
            VaccineTag::Hpv => "hpv",
            VaccineTag::Other => "other",
        }
    }

    pub const ALL: [VaccineTag; 5] = [
        VaccineTag::Covid19,
        VaccineTag::Shingrix,
        VaccineTag::Rsv,
        VaccineTag::Hpv,
        VaccineTag::Other,
    ];
}

impl std::str::FromStr for VaccineTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VaccineTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown vaccine tag: {s}"))
    }
}

/// Closed set of vaccine-hesitancy concern categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcernCategory {
    Safety,
    SideEffects,
    Misinformation,
    TrustInAuthorities,
    PreviousNegativeExperience,
}

impl ConcernCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConcernCategory::Safety => "safety",
            ConcernCategory::SideEffects => "side_effects",
            ConcernCategory::Misinformation => "misinformation",
            ConcernCategory::TrustInAuthorities => "trust_in_authorities",
            ConcernCategory::PreviousNegativeExperience => "previous_negative_experience",
        }
    }

    pub const ALL: [ConcernCategory; 5] = [
        ConcernCategory::Safety,
        ConcernCategory::SideEffects,
        ConcernCategory::Misinformation,
        ConcernCategory::TrustInAuthorities,
        ConcernCategory::PreviousNegativeExperience,
    ];
}

impl std::str::FromStr for ConcernCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConcernCategory::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown concern category: {s}"))
    }
}

impl std::fmt::Display for ConcernCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Serde helper: ISO-8601 timestamps at second precision with a `Z` suffix.
pub mod ts_second {
    use chrono::{DateTime, SecondsFormat, Timelike, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        let parsed = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
        Ok(parsed
            .with_timezone(&Utc)
            .with_nanosecond(0)
            .expect("zero nanosecond is valid"))
    }
}

/// One social-media comment as retrieved from a source, before any
/// processing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: String,
    pub platform: Platform,
    pub platform_id: String,
    /// Lowercase hex digest of the native author id (never the raw id).
    pub author_hash: String,
    #[serde(with = "ts_second")]
    pub created_at: DateTime<Utc>,
    #[serde(with = "ts_second")]
    pub fetched_at: DateTime<Utc>,
    pub text: String,
    /// BCP-47 tag, or "und" when the source does not report a language.
    pub lang: String,
    pub source_query: String,
}

impl RawPost {
    /// Deduplication key: `<platform>:<platform_id>`, injective over
    /// distinct `(platform, platform_id)` pairs.
    pub fn dedup_key(&self) -> String {
        dedup_key(self.platform, &self.platform_id)
    }

    /// Checks the record invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.platform_id.is_empty() {
            return Err(CorpusError::Invalid {
                field: "platform_id",
                reason: "must be non-empty".into(),
            });
        }
        if self.text.is_empty() {
            return Err(CorpusError::Invalid {
                field: "text",
                reason: "must be non-empty".into(),
            });
        }
        if self.created_at > self.fetched_at {
            return Err(CorpusError::Invalid {
                field: "created_at",
                reason: format!(
                    "created_at {} is after fetched_at {}",
                    self.created_at, self.fetched_at
                ),
            });
        }
        Ok(())
    }
}

/// Deduplication key for a `(platform, platform_id)` pair.
pub fn dedup_key(platform: Platform, platform_id: &str) -> String {
    format!("{}:{}", platform.as_str(), platform_id)
}

/// A post carried through the pipeline. Processing fields stay absent
/// until the corresponding stage has run; `kept = false` implies all
/// classification fields are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedPost {
    #[serde(flatten)]
    pub raw: RawPost,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_text: Option<String>,
    #[serde(default)]
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceLabel>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub vaccine_tags: BTreeSet<VaccineTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<SentimentResult>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub concerns: BTreeSet<ConcernCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_id: Option<i32>,
}

impl ProcessedPost {
    /// Wraps a raw post with no processing applied yet.
    pub fn from_raw(raw: RawPost) -> Self {
        Self {
            raw,
            clean_text: None,
            kept: false,
            relevance: None,
            vaccine_tags: BTreeSet::new(),
            sentiment: None,
            concerns: BTreeSet::new(),
            topic_id: None,
        }
    }

    pub fn dedup_key(&self) -> String {
        self.raw.dedup_key()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        self.raw.validate()?;
        if !self.kept
            && (self.relevance.is_some()
                || self.sentiment.is_some()
                || !self.concerns.is_empty()
                || self.topic_id.is_some())
        {
            return Err(CorpusError::Invalid {
                field: "kept",
                reason: "dropped post carries classification fields".into(),
            });
        }
        if self.relevance == Some(RelevanceLabel::Unrelated) && !self.vaccine_tags.is_empty() {
            return Err(CorpusError::Invalid {
                field: "vaccine_tags",
                reason: "unrelated post carries vaccine tags".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid record field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("store is read-only")]
    ReadOnly,
    #[error("store i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Outcome of inserting a raw post.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsert {
    Stored,
    Duplicate,
}

/// Predicates applied conjunctively by [`CorpusStore::query`]. Time range
/// is `since <= created_at < until`; set-valued predicates match on
/// non-empty intersection.
#[derive(Debug, Clone, Default)]
pub struct Filter {
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
    pub platforms: Option<BTreeSet<Platform>>,
    pub vaccine_tags: Option<BTreeSet<VaccineTag>>,
    pub sentiments: Option<BTreeSet<SentimentLabel>>,
    pub concerns: Option<BTreeSet<ConcernCategory>>,
    pub kept: Option<bool>,
}

impl Filter {
    pub fn matches(&self, post: &ProcessedPost) -> bool {
        if let Some(since) = self.since {
            if post.raw.created_at < since {
                return false;
            }
        }
        if let Some(until) = self.until {
            if post.raw.created_at >= until {
                return false;
            }
        }
        if let Some(platforms) = &self.platforms {
            if !platforms.contains(&post.raw.platform) {
                return false;
            }
        }
        if let Some(tags) = &self.vaccine_tags {
            if post.vaccine_tags.is_disjoint(tags) {
                return false;
            }
        }
        if let Some(sentiments) = &self.sentiments {
            match &post.sentiment {
                Some(s) if sentiments.contains(&s.label) => {}
                _ => return false,
            }
        }
        if let Some(concerns) = &self.concerns {
            if post.concerns.is_disjoint(concerns) {
                return false;
            }
        }
        if let Some(kept) = self.kept {
            if post.kept != kept {
                return false;
            }
        }
        true
    }
}

/// Query result: latest version per key, matching records only, ordered
/// by `created_at` then dedup key.
#[derive(Debug)]
pub struct QueryOutput {
    pub posts: Vec<ProcessedPost>,
    /// Lines that failed to parse; reported and skipped.
    pub malformed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RecordLoc {
    segment: u32,
    line: u64,
}

const SEGMENT_CAP: u64 = 100_000;

/// Append-only store. One writer at a time; readers opened read-only see
/// the segment contents as of open time.
pub struct CorpusStore {
    root: PathBuf,
    writable: bool,
    index: BTreeMap<String, RecordLoc>,
    /// Segment sequence numbers present on disk, ascending.
    segments: Vec<u32>,
    /// Byte length per segment at open time (read-only snapshot bound).
    snapshot_len: BTreeMap<u32, u64>,
    current_segment: u32,
    current_lines: u64,
    writer: Option<BufWriter<File>>,
    index_writer: Option<BufWriter<File>>,
}

impl CorpusStore {
    /// Opens (creating if needed) a store for reading and writing.
    pub fn open_rw(root: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        Self::open(root.into(), true)
    }

    /// Opens an existing store read-only; queries see a snapshot as of
    /// open time.
    pub fn open_ro(root: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        Self::open(root.into(), false)
    }

    fn open(root: PathBuf, writable: bool) -> Result<Self, CorpusError> {
        let seg_dir = root.join("segments");
        let idx_dir = root.join("index");
        if writable {
            fs::create_dir_all(&seg_dir).map_err(|e| CorpusError::io(&seg_dir, e))?;
            fs::create_dir_all(&idx_dir).map_err(|e| CorpusError::io(&idx_dir, e))?;
        }

        let mut segments = Vec::new();
        let mut snapshot_len = BTreeMap::new();
        if seg_dir.is_dir() {
            for entry in fs::read_dir(&seg_dir).map_err(|e| CorpusError::io(&seg_dir, e))? {
                let entry = entry.map_err(|e| CorpusError::io(&seg_dir, e))?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                if let Some(stem) = name.strip_suffix(".jsonl") {
                    if let Ok(seq) = stem.parse::<u32>() {
                        let len = entry
                            .metadata()
                            .map_err(|e| CorpusError::io(&entry.path(), e))?
                            .len();
                        segments.push(seq);
                        snapshot_len.insert(seq, len);
                    }
                }
            }
        }
        segments.sort_unstable();

        let mut store = Self {
            root,
            writable,
            index: BTreeMap::new(),
            segments,
            snapshot_len,
            current_segment: 0,
            current_lines: 0,
            writer: None,
            index_writer: None,
        };
        store.load_index()?;

        if writable {
            let (seg, lines) = match store.segments.last() {
                Some(&seq) => (seq, store.count_lines(seq)?),
                None => (0, 0),
            };
            store.current_segment = seg;
            store.current_lines = lines;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Number of unique dedup keys in the store.
    pub fn unique_keys(&self) -> usize {
        self.index.len()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    fn segment_path(&self, seq: u32) -> PathBuf {
        self.root.join("segments").join(format!("{seq:04}.jsonl"))
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index").join("keys.idx")
    }

    fn count_lines(&self, seq: u32) -> Result<u64, CorpusError> {
        let path = self.segment_path(seq);
        if !path.exists() {
            return Ok(0);
        }
        let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
        let reader = BufReader::new(file);
        Ok(reader.lines().count() as u64)
    }

    /// Loads `index/keys.idx`; rebuilds from segments when the file is
    /// missing or does not parse.
    fn load_index(&mut self) -> Result<(), CorpusError> {
        let path = self.index_path();
        if path.exists() {
            if let Ok(index) = Self::parse_index(&path) {
                self.index = index;
                return Ok(());
            }
            log::warn!("index file unreadable, rebuilding from segments");
        }
        self.rebuild_index()
    }

    fn parse_index(path: &Path) -> Result<BTreeMap<String, RecordLoc>, std::io::Error> {
        let file = File::open(path)?;
        let mut index = BTreeMap::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.rsplitn(3, '\t');
            let line_no = parts.next().and_then(|v| v.parse::<u64>().ok());
            let seg = parts.next().and_then(|v| v.parse::<u32>().ok());
            let key = parts.next();
            match (key, seg, line_no) {
                (Some(key), Some(segment), Some(line)) => {
                    index.insert(key.to_string(), RecordLoc { segment, line });
                }
                _ => {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        "malformed index line",
                    ))
                }
            }
        }
        Ok(index)
    }

    fn rebuild_index(&mut self) -> Result<(), CorpusError> {
        self.index.clear();
        for &seq in &self.segments.clone() {
            let path = self.segment_path(seq);
            let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
            for (line_no, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| CorpusError::io(&path, e))?;
                if let Ok(post) = serde_json::from_str::<ProcessedPost>(&line) {
                    self.index.insert(
                        post.dedup_key(),
                        RecordLoc {
                            segment: seq,
                            line: line_no as u64,
                        },
                    );
                }
            }
        }
        if self.writable {
            self.rewrite_index_file()?;
        }
        Ok(())
    }

    fn rewrite_index_file(&mut self) -> Result<(), CorpusError> {
        let path = self.index_path();
        let file = File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (key, loc) in &self.index {
            writeln!(w, "{key}\t{}\t{}", loc.segment, loc.line)
                .map_err(|e| CorpusError::io(&path, e))?;
        }
        w.flush().map_err(|e| CorpusError::io(&path, e))?;
        self.index_writer = None;
        Ok(())
    }

    fn append_record(&mut self, post: &ProcessedPost) -> Result<(), CorpusError> {
        if !self.writable {
            return Err(CorpusError::ReadOnly);
        }
        if self.current_lines >= SEGMENT_CAP {
            self.current_segment += 1;
            self.current_lines = 0;
            self.writer = None;
        }
        let seq = self.current_segment;
        if self.writer.is_none() {
            let path = self.segment_path(seq);
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| CorpusError::io(&path, e))?;
            self.writer = Some(BufWriter::new(file));
            if !self.segments.contains(&seq) {
                self.segments.push(seq);
                self.segments.sort_unstable();
            }
        }
        let line = serde_json::to_string(post)?;
        let seg_path = self.segment_path(seq);
        {
            let w = self.writer.as_mut().expect("writer just opened");
            writeln!(w, "{line}").map_err(|e| CorpusError::io(&seg_path, e))?;
            w.flush().map_err(|e| CorpusError::io(&seg_path, e))?;
        }

        let loc = RecordLoc {
            segment: seq,
            line: self.current_lines,
        };
        self.current_lines += 1;
        let key = post.dedup_key();
        self.index.insert(key.clone(), loc);
        self.append_index_line(&key, loc)?;
        Ok(())
    }

    fn append_index_line(&mut self, key: &str, loc: RecordLoc) -> Result<(), CorpusError> {
        let path = self.index_path();
        if self.index_writer.is_none() {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| CorpusError::io(&path, e))?;
            self.index_writer = Some(BufWriter::new(file));
        }
        let w = self.index_writer.as_mut().expect("index writer open");
        writeln!(w, "{key}\t{}\t{}", loc.segment, loc.line)
            .map_err(|e| CorpusError::io(&path, e))?;
        w.flush().map_err(|e| CorpusError::io(&path, e))?;
        Ok(())
    }

    /// Inserts a raw post unless its dedup key is already present.
    pub fn upsert(&mut self, post: &RawPost) -> Result<Upsert, CorpusError> {
        post.validate()?;
        if self.index.contains_key(&post.dedup_key()) {
            return Ok(Upsert::Duplicate);
        }
        self.append_record(&ProcessedPost::from_raw(post.clone()))?;
        Ok(Upsert::Stored)
    }

    /// Appends a new version of a processed post; queries will return
    /// this version for its key from now on.
    pub fn put_processed(&mut self, post: &ProcessedPost) -> Result<(), CorpusError> {
        post.validate()?;
        self.append_record(post)
    }

    /// Returns the latest version of every record matching the filter,
    /// ordered by `created_at` ascending with dedup-key tie-break.
    pub fn query(&self, filter: &Filter) -> Result<QueryOutput, CorpusError> {
        let mut latest: BTreeMap<String, ProcessedPost> = BTreeMap::new();
        let mut malformed = 0usize;
        for &seq in &self.segments {
            let path = self.segment_path(seq);
            if !path.exists() {
                continue;
            }
            let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
            let limit = if self.writable {
                u64::MAX
            } else {
                self.snapshot_len.get(&seq).copied().unwrap_or(u64::MAX)
            };
            let mut reader = BufReader::new(file).take(limit);
            let mut line = String::new();
            let mut line_no = 0u64;
            loop {
                line.clear();
                let n = reader
                    .read_line(&mut line)
                    .map_err(|e| CorpusError::io(&path, e))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let trimmed = line.trim_end_matches('\n');
                if trimmed.is_empty() {
                    continue;
                }
                match serde_json::from_str::<ProcessedPost>(trimmed) {
                    Ok(post) => {
                        latest.insert(post.dedup_key(), post);
                    }
                    Err(err) => {
                        malformed += 1;
                        log::warn!("skipping malformed record {path:?}:{line_no}: {err}");
                    }
                }
            }
        }

        let mut posts: Vec<ProcessedPost> = latest
            .into_values()
            .filter(|p| filter.matches(p))
            .collect();
        posts.sort_by(|a, b| {
            a.raw
                .created_at
                .cmp(&b.raw.created_at)
                .then_with(|| a.dedup_key().cmp(&b.dedup_key()))
        });
        Ok(QueryOutput { posts, malformed })
    }
}
