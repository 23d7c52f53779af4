//! Stage orchestration: one config drives ingest, cleaning,
//! classification, topic fitting, and report emission against a single
//! corpus store. Each stage only writes versions that change a record,
//! so re-running a pipeline against an unchanged corpus is a no-op.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clock::{BackoffPolicy, SystemClock};
use crate::config::{PipelineConfig, ProviderSection};
use crate::corpus::{ConcernCategory, CorpusStore, Filter, Platform, ProcessedPost, RelevanceLabel};
use crate::error::Error;
use crate::ingest::{self, FetchJob, FetchWindow, FixtureAdapter, IngestStats};
use crate::normalize;
use crate::providers::{
    HttpProvider, MockProvider, ProviderClient, ResponseCache,
};
use crate::relevance::{self, EnsemblePolicy, VaccineLexicon};
use crate::sentiment::{self, BaselineModel, FallbackPolicy, TrainingExample};
use crate::topics::{self, ClusterParams, ConcernTaxonomy, FitParams, TopicModel};
use crate::trends::{
    self, render_report, Granularity, GroupTable, ManifestEntry, ReportInputs, RunMeta,
    SeriesSubject, TrendSeries,
};

/// Cap on warnings retained per stage in the manifest.
const WARNING_CAP: usize = 50;

/// Per-stage accounting for the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    /// Records handed to this stage.
    pub input: u64,
    /// Records handed to the next stage.
    pub output: u64,
    pub provider_calls: u64,
    pub degraded: u64,
    pub millis: u128,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Everything a scheduled run leaves behind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub stages: Vec<StageReport>,
    pub outputs: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

/// Index of the current topic model files, written next to the models.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelIndex {
    models: Vec<String>,
}

pub struct Pipeline {
    config: PipelineConfig,
    store: CorpusStore,
    client: Option<ProviderClient>,
}

impl Pipeline {
    /// Opens the store and builds the provider client named first in the
    /// config (mock table or HTTP endpoint).
    pub fn open(config: PipelineConfig) -> Result<Self, Error> {
        let store = CorpusStore::open_rw(&config.store_root)?;
        let client = match config.providers.first() {
            Some(section) => Some(build_client(section, &config)?),
            None => None,
        };
        Ok(Self {
            config,
            store,
            client,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn store(&self) -> &CorpusStore {
        &self.store
    }

    pub fn client(&self) -> Option<&ProviderClient> {
        self.client.as_ref()
    }

    /// Ingests one fixture file as the given platform.
    pub fn ingest_fixture(&mut self, source: Platform, path: &Path) -> Result<IngestStats, Error> {
        let adapter = FixtureAdapter::open(source, path, self.config.ingest.page_size)?;
        for warning in &adapter.warnings {
            log::warn!("{}: line {}: {}", path.display(), warning.line, warning.message);
        }
        let job = FetchJob {
            source,
            query: "fixture".into(),
            window: FetchWindow::unbounded(),
            rate_limit: self.config.ingest.rate_limit,
            max_pages: None,
        };
        let clock = SystemClock::new();
        let mut backoff = BackoffPolicy::new(self.config.seed);
        Ok(ingest::run_job(&job, &adapter, &mut self.store, &clock, &mut backoff)?)
    }

    /// Ingests a search-interest CSV as synthetic posts.
    pub fn ingest_trends(&mut self, path: &Path) -> Result<IngestStats, Error> {
        let (posts, warnings) =
            ingest::load_trends_series(path, &self.config.ingest.author_salt)?;
        for warning in &warnings {
            log::warn!("{}: line {}: {}", path.display(), warning.line, warning.message);
        }
        let mut stats = IngestStats::default();
        for post in &posts {
            stats.fetched += 1;
            if post.validate().is_err() {
                stats.skipped_invalid += 1;
                continue;
            }
            match self.store.upsert(post)? {
                crate::corpus::Upsert::Stored => stats.stored += 1,
                crate::corpus::Upsert::Duplicate => stats.duplicates += 1,
            }
        }
        Ok(stats)
    }

    /// Cleans every record that has not been cleaned yet.
    pub fn run_normalize(&mut self) -> Result<StageReport, Error> {
        let started = Instant::now();
        let all = self.store.query(&Filter::default())?;
        let pending: Vec<ProcessedPost> = all
            .posts
            .into_iter()
            .filter(|p| p.clean_text.is_none())
            .collect();
        let input = pending.len() as u64;
        let mut kept = 0u64;
        for mut post in pending {
            let result = normalize::clean(&post.raw.text, &self.config.clean);
            post.clean_text = Some(result.clean_text);
            post.kept = result.kept;
            if result.kept {
                kept += 1;
            }
            self.store.put_processed(&post)?;
        }
        let mut notes = Vec::new();
        if all.malformed > 0 {
            notes.push(format!("malformed records skipped: {}", all.malformed));
        }
        Ok(StageReport {
            stage: "normalize".into(),
            input,
            output: kept,
            provider_calls: 0,
            degraded: 0,
            millis: started.elapsed().as_millis(),
            notes,
        })
    }

    fn relevance_model(&self) -> Result<BaselineModel, Error> {
        if let Some(path) = &self.config.relevance.model_path {
            return Ok(BaselineModel::load(path)?);
        }
        let examples: Vec<TrainingExample> = match &self.config.relevance.train_path {
            Some(path) => sentiment::load_labeled(path)?,
            None => bundled_relevance_seed(),
        };
        Ok(BaselineModel::train(
            &relevance::relevance_labels(),
            &examples,
            1.0,
        )?)
    }

    fn sentiment_model(&self) -> Result<BaselineModel, Error> {
        let path = &self.config.sentiment.model_path;
        if !path.exists() {
            return Err(Error::Config(crate::config::ConfigError::Field {
                field: "sentiment.model_path",
                reason: format!(
                    "model file {} does not exist; run train-sentiment first",
                    path.display()
                ),
            }));
        }
        Ok(BaselineModel::load(path)?)
    }

    /// Relevance cascade over kept posts that have no relevance label
    /// yet, including vaccine tagging for everything not unrelated.
    pub fn run_relevance(&mut self) -> Result<StageReport, Error> {
        let started = Instant::now();
        let model = self.relevance_model()?;
        let lexicon = match &self.config.relevance.lexicon {
            Some(path) => VaccineLexicon::from_file(path).map_err(Error::Pipeline)?,
            None => VaccineLexicon::bundled(),
        };
        let policy = EnsemblePolicy {
            tau_r: self.config.relevance.tau_r,
            ..EnsemblePolicy::default()
        };
        let client = if self.config.relevance.use_provider { self.client.as_ref() } else { None };
        let calls_before = client.map_or(0, |c| c.call_count());

        let kept = self.store.query(&Filter {
            kept: Some(true),
            ..Filter::default()
        })?;
        let pending: Vec<ProcessedPost> = kept
            .posts
            .into_iter()
            .filter(|p| p.relevance.is_none())
            .collect();
        let input = pending.len() as u64;
        let mut relevant = 0u64;
        let mut degraded = 0u64;
        let mut warnings = Vec::new();
        for mut post in pending {
            let text = post.clean_text.clone().unwrap_or_default();
            let outcome = relevance::classify_relevance(&text, &model, client, &policy);
            if let Some(warning) = outcome.warning {
                degraded += 1;
                push_capped(&mut warnings, warning);
            }
            post.relevance = Some(outcome.result.label);
            if outcome.result.label != RelevanceLabel::Unrelated {
                relevant += 1;
                let tagged = relevance::tag_vaccines(
                    &text,
                    &lexicon,
                    client,
                    self.config.relevance.use_provider,
                );
                if let Some(warning) = tagged.warning {
                    push_capped(&mut warnings, warning);
                }
                post.vaccine_tags = tagged.tags;
            }
            self.store.put_processed(&post)?;
        }
        let provider_calls = client.map_or(0, |c| c.call_count()) - calls_before;
        Ok(StageReport {
            stage: "relevance".into(),
            input,
            output: relevant,
            provider_calls: provider_calls as u64,
            degraded,
            millis: started.elapsed().as_millis(),
            notes: warnings,
        })
    }

    /// Sentiment with fallback over relevant posts lacking a label.
    pub fn run_sentiment(&mut self) -> Result<StageReport, Error> {
        let started = Instant::now();
        let model = self.sentiment_model()?;
        let policy = FallbackPolicy {
            tau_s: self.config.sentiment.tau_s,
            ..FallbackPolicy::default()
        };
        let client = if self.config.sentiment.use_provider { self.client.as_ref() } else { None };
        let calls_before = client.map_or(0, |c| c.call_count());

        let pending: Vec<ProcessedPost> = self
            .relevant_posts()?
            .into_iter()
            .filter(|p| p.sentiment.is_none())
            .collect();
        let input = pending.len() as u64;
        let mut degraded = 0u64;
        let mut warnings = Vec::new();
        for mut post in pending {
            let text = post.clean_text.clone().unwrap_or_default();
            let outcome = sentiment::classify_with_fallback(&model, client, &policy, &text);
            if let Some(warning) = outcome.warning {
                degraded += 1;
                push_capped(&mut warnings, warning);
            }
            post.sentiment = Some(outcome.result);
            self.store.put_processed(&post)?;
        }
        let provider_calls = client.map_or(0, |c| c.call_count()) - calls_before;
        Ok(StageReport {
            stage: "sentiment".into(),
            input,
            output: input,
            provider_calls: provider_calls as u64,
            degraded,
            millis: started.elapsed().as_millis(),
            notes: warnings,
        })
    }

    /// Concern categorization over relevant posts; records are only
    /// rewritten when the category set changes.
    pub fn run_concern(&mut self) -> Result<StageReport, Error> {
        let started = Instant::now();
        let taxonomy = match &self.config.topics.taxonomy {
            Some(path) => ConcernTaxonomy::from_file(path)?,
            None => ConcernTaxonomy::bundled(),
        };
        let client = if self.config.topics.use_provider { self.client.as_ref() } else { None };
        let calls_before = client.map_or(0, |c| c.call_count());

        let posts = self.relevant_posts()?;
        let input = posts.len() as u64;
        let mut degraded = 0u64;
        let mut warnings = Vec::new();
        for mut post in posts {
            let text = post.clean_text.clone().unwrap_or_default();
            let outcome = topics::categorize_concern(
                &text,
                &taxonomy,
                client,
                self.config.topics.use_provider,
            );
            if let Some(warning) = outcome.warning {
                degraded += 1;
                push_capped(&mut warnings, warning);
            }
            if post.concerns != outcome.concerns {
                post.concerns = outcome.concerns;
                self.store.put_processed(&post)?;
            }
        }
        let provider_calls = client.map_or(0, |c| c.call_count()) - calls_before;
        Ok(StageReport {
            stage: "concern".into(),
            input,
            output: input,
            provider_calls: provider_calls as u64,
            degraded,
            millis: started.elapsed().as_millis(),
            notes: warnings,
        })
    }

    fn relevant_posts(&self) -> Result<Vec<ProcessedPost>, Error> {
        let kept = self.store.query(&Filter {
            kept: Some(true),
            ..Filter::default()
        })?;
        Ok(kept
            .posts
            .into_iter()
            .filter(|p| {
                matches!(
                    p.relevance,
                    Some(RelevanceLabel::GeneralDiscussion) | Some(RelevanceLabel::PersonalExperience)
                )
            })
            .collect())
    }

    fn topic_slice(&self) -> Result<Vec<ProcessedPost>, Error> {
        let mut posts = self.relevant_posts()?;
        if let Some(filter) = &self.config.topics.sentiment_filter {
            let allowed: BTreeSet<_> = filter.iter().copied().collect();
            posts.retain(|p| {
                p.sentiment
                    .as_ref()
                    .is_some_and(|s| allowed.contains(&s.label))
            });
        }
        Ok(posts)
    }

    /// Fits topic models (per concern group when configured), saves them
    /// under `<store>/models/`, and rewrites the current-model index.
    pub fn run_topics(&mut self) -> Result<(StageReport, Vec<TopicModel>), Error> {
        self.run_topics_filtered(None)
    }

    /// Like [`Pipeline::run_topics`] but optionally restricted to posts
    /// carrying one concern category.
    pub fn run_topics_filtered(
        &mut self,
        concern: Option<ConcernCategory>,
    ) -> Result<(StageReport, Vec<TopicModel>), Error> {
        let started = Instant::now();
        let mut slice = self.topic_slice()?;
        if let Some(category) = concern {
            // Fit only the requested group: posts keep their membership in
            // it and drop the rest, so multi-concern posts do not fan out
            // into sibling groups.
            slice.retain(|p| p.concerns.contains(&category));
            for post in &mut slice {
                post.concerns = [category].into_iter().collect();
            }
        }
        let input = self.relevant_posts()?.len() as u64;
        if slice.is_empty() {
            return Err(Error::Topics(topics::TopicsError::EmptySlice));
        }
        let params = FitParams {
            cluster: ClusterParams {
                distance_threshold: self.config.topics.distance_threshold,
                min_topic_size: self.config.topics.min_topic_size,
            },
            label_terms: 4,
            concern_grouping: self.config.topics.concern_grouping,
            use_provider: self.config.topics.use_provider,
        };
        let client = if self.config.topics.use_provider { self.client.as_ref() } else { None };
        let calls_before = client.map_or(0, |c| c.call_count());
        let refs: Vec<&ProcessedPost> = slice.iter().collect();
        let outcome = topics::fit_topics(&refs, &params, client)?;

        // Ungrouped fits write the topic id back onto each post; grouped
        // fits leave assignment lookup to the model files, since one post
        // may belong to several groups.
        if !params.concern_grouping {
            if let Some(model) = outcome.models.first() {
                for post in &slice {
                    let key = post.dedup_key();
                    if let Some(&assigned) = model.assignments.get(&key) {
                        if post.topic_id != Some(assigned) {
                            let mut updated = post.clone();
                            updated.topic_id = Some(assigned);
                            self.store.put_processed(&updated)?;
                        }
                    }
                }
            }
        }

        let models_dir = self.config.store_root.join("models");
        std::fs::create_dir_all(&models_dir).map_err(|e| {
            Error::Pipeline(format!("create {}: {e}", models_dir.display()))
        })?;
        let mut index = ModelIndex { models: Vec::new() };
        for model in &outcome.models {
            let name = format!("topics-{}-{}.json", model.group, &model.corpus_digest[..12]);
            model.save(&models_dir.join(&name))?;
            index.models.push(name);
        }
        let index_body = serde_json::to_string_pretty(&index).expect("index serializes");
        std::fs::write(models_dir.join("topics-current.json"), index_body)
            .map_err(|e| Error::Pipeline(format!("write model index: {e}")))?;

        let provider_calls = client.map_or(0, |c| c.call_count()) - calls_before;
        let report = StageReport {
            stage: "topics".into(),
            input,
            output: input,
            provider_calls: provider_calls as u64,
            degraded: 0,
            millis: started.elapsed().as_millis(),
            notes: outcome
                .notices
                .iter()
                .take(WARNING_CAP)
                .cloned()
                .collect(),
        };
        Ok((report, outcome.models))
    }

    /// Loads the models referenced by the current-model index.
    pub fn load_current_models(&self) -> Result<Vec<TopicModel>, Error> {
        let models_dir = self.config.store_root.join("models");
        let index_path = models_dir.join("topics-current.json");
        if !index_path.exists() {
            return Ok(Vec::new());
        }
        let body = std::fs::read_to_string(&index_path)
            .map_err(|e| Error::Pipeline(format!("read model index: {e}")))?;
        let index: ModelIndex = serde_json::from_str(&body)
            .map_err(|e| Error::Pipeline(format!("parse model index: {e}")))?;
        index
            .models
            .iter()
            .map(|name| TopicModel::load(&models_dir.join(name)).map_err(Error::Topics))
            .collect()
    }

    /// Renders the report from the current corpus and topic models.
    pub fn run_report(
        &mut self,
        models: &[TopicModel],
    ) -> Result<(StageReport, Vec<ManifestEntry>), Error> {
        let started = Instant::now();
        let posts = self.relevant_posts()?;
        let input = posts.len() as u64;

        let sentiments: Vec<_> = posts
            .iter()
            .filter_map(|p| p.sentiment.as_ref().map(|s| s.label))
            .collect();
        let distribution = if sentiments.is_empty() {
            None
        } else {
            Some(trends::sentiment_distribution(sentiments)?)
        };

        let mut tables = Vec::new();
        for model in models {
            let (rows, outliers) = trends::topic_table(model);
            tables.push(GroupTable {
                group: model.group.clone(),
                rows,
                outliers,
            });
        }

        let granularity: Granularity = self.config.report.granularity;
        let mut series: Vec<TrendSeries> = Vec::new();
        for category in ConcernCategory::ALL {
            let times: Vec<_> = posts
                .iter()
                .filter(|p| p.concerns.contains(&category))
                .map(|p| p.raw.created_at)
                .collect();
            if !times.is_empty() {
                series.push(trends::bucket_counts(
                    &times,
                    granularity,
                    SeriesSubject::Concern(category),
                ));
            }
        }
        for model in models {
            for topic in &model.topics {
                let member_keys: BTreeSet<&String> = model
                    .assignments
                    .iter()
                    .filter(|(_, &id)| id == topic.id)
                    .map(|(key, _)| key)
                    .collect();
                let times: Vec<_> = posts
                    .iter()
                    .filter(|p| member_keys.contains(&p.dedup_key()))
                    .map(|p| p.raw.created_at)
                    .collect();
                if !times.is_empty() {
                    series.push(trends::bucket_counts(
                        &times,
                        granularity,
                        SeriesSubject::Topic {
                            id: topic.id,
                            label: format!("{} {}", model.group, topic.label),
                        },
                    ));
                }
            }
        }

        let corpus_digest = corpus_digest(&posts);
        let inputs = ReportInputs {
            meta: RunMeta {
                config_digest: self.config.digest(),
                corpus_digest,
                post_count: posts.len() as u64,
            },
            distribution,
            tables,
            series,
        };
        let outputs = render_report(&inputs, &self.config.report.out_dir, &self.config.report.formats)?;
        let report = StageReport {
            stage: "report".into(),
            input,
            output: outputs.len() as u64,
            provider_calls: 0,
            degraded: 0,
            millis: started.elapsed().as_millis(),
            notes: Vec::new(),
        };
        Ok((report, outputs))
    }

    /// All stages in order; writes `manifest.json` under the report
    /// out_dir and returns the manifest.
    pub fn run_all(&mut self) -> Result<RunManifest, Error> {
        let mut stages = Vec::new();
        let mut warnings = Vec::new();

        let started = Instant::now();
        let mut ingest_stats = IngestStats::default();
        let fixtures = self.config.ingest.fixtures.clone();
        let trends_files = self.config.ingest.trends.clone();
        for path in &fixtures {
            let stats = self.ingest_fixture(Platform::X, path)?;
            accumulate(&mut ingest_stats, &stats);
        }
        for path in &trends_files {
            let stats = self.ingest_trends(path)?;
            accumulate(&mut ingest_stats, &stats);
        }
        let mut ingest_notes = Vec::new();
        if ingest_stats.skipped_invalid > 0 {
            ingest_notes.push(format!("skipped_invalid: {}", ingest_stats.skipped_invalid));
        }
        stages.push(StageReport {
            stage: "ingest".into(),
            input: ingest_stats.fetched,
            output: ingest_stats.stored,
            provider_calls: 0,
            degraded: 0,
            millis: started.elapsed().as_millis(),
            notes: ingest_notes,
        });

        stages.push(self.run_normalize()?);
        stages.push(self.run_relevance()?);
        stages.push(self.run_sentiment()?);
        stages.push(self.run_concern()?);
        let (topics_report, models) = self.run_topics()?;
        stages.push(topics_report);
        let (report_stage, outputs) = self.run_report(&models)?;
        stages.push(report_stage);

        for stage in &stages {
            for note in &stage.notes {
                push_capped(&mut warnings, format!("{}: {}", stage.stage, note));
            }
        }
        let manifest = RunManifest {
            config_digest: self.config.digest(),
            stages,
            outputs,
            warnings,
        };
        let manifest_path = self.config.report.out_dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&manifest_path, body)
            .map_err(|e| Error::Pipeline(format!("write {}: {e}", manifest_path.display())))?;
        Ok(manifest)
    }

    /// Trains the sentiment baseline from a labeled fixture and saves it
    /// at the configured model path.
    pub fn train_sentiment(&self, labeled: &Path) -> Result<PathBuf, Error> {
        let examples = sentiment::load_labeled(labeled)?;
        let model = BaselineModel::train(&crate::sentiment::SentimentLabel::label_set(), &examples, 1.0)?;
        model.save(&self.config.sentiment.model_path)?;
        Ok(self.config.sentiment.model_path.clone())
    }
}

fn push_capped(warnings: &mut Vec<String>, warning: String) {
    if warnings.len() < WARNING_CAP {
        warnings.push(warning);
    } else if warnings.len() == WARNING_CAP {
        warnings.push("further warnings suppressed".into());
    }
}

fn accumulate(total: &mut IngestStats, stats: &IngestStats) {
    total.fetched += stats.fetched;
    total.stored += stats.stored;
    total.duplicates += stats.duplicates;
    total.skipped_invalid += stats.skipped_invalid;
}

/// Digest over dedup keys and clean texts in query order; stable across
/// machines because no paths or timestamps are involved.
pub fn corpus_digest(posts: &[ProcessedPost]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for post in posts {
        hasher.update(post.dedup_key().as_bytes());
        hasher.update([0x1e]);
        hasher.update(post.clean_text.as_deref().unwrap_or("").as_bytes());
        hasher.update([0x1f]);
    }
    hex::encode(hasher.finalize())
}

fn bundled_relevance_seed() -> Vec<TrainingExample> {
    include_str!("../data/relevance-seed.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled seed line is valid"))
        .collect()
}

fn build_client(section: &ProviderSection, config: &PipelineConfig) -> Result<ProviderClient, Error> {
    let cache = ResponseCache::on_disk(config.store_root.join("cache"))?;
    let client = match (&section.mock_file, &section.endpoint) {
        (Some(path), _) => {
            let mock = MockProvider::from_file(path)?;
            ProviderClient::new(mock, cache)
        }
        (None, Some(endpoint)) => {
            let model = section.model.as_deref().unwrap_or("default");
            let http = HttpProvider::new(
                &section.id,
                endpoint,
                model,
                section.credential_env.as_deref(),
            )?;
            ProviderClient::new(http, cache)
        }
        (None, None) => {
            return Err(Error::Pipeline(format!(
                "provider {} has neither mock_file nor endpoint",
                section.id
            )));
        }
    };
    Ok(client
        .with_rate_limit(section.rate_limit)
        .with_clock(Arc::new(SystemClock::new()))
        .with_backoff_seed(config.seed))
}
