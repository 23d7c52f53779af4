//! Deterministic synthetic data: posts with injected URLs, mentions,
//! emoji and short fragments, plus labeled sentiment corpora. Everything
//! is seeded, so fixture files and in-test corpora are reproducible.

use std::io::Write;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use rand::rngs::SmallRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use crate::corpus::{ConcernCategory, Platform, RawPost};
use crate::ingest::author_hash;
use crate::sentiment::{SentimentLabel, TrainingExample};

const NEGATIVE_WORDS: [&str; 12] = [
    "terrible", "awful", "scared", "worried", "horrible", "regret", "angry", "miserable",
    "exhausted", "dreadful", "anxious", "suffering",
];
const NEUTRAL_WORDS: [&str; 12] = [
    "appointment", "scheduled", "clinic", "information", "question", "wondering", "update",
    "booked", "records", "forms", "session", "timeline",
];
const POSITIVE_WORDS: [&str; 12] = [
    "grateful", "relieved", "glad", "smooth", "easy", "protected", "thankful", "happy",
    "reassured", "painless", "confident", "encouraging",
];
const NOISE_WORDS: [&str; 12] = [
    "today", "yesterday", "really", "just", "very", "honestly", "again", "still", "maybe",
    "people", "think", "getting",
];

const VACCINE_PHRASES: [&str; 8] = [
    "covid vaccine",
    "pfizer",
    "moderna",
    "booster",
    "shingrix",
    "rsv vaccine",
    "hpv vaccine",
    "flu shot",
];

const PERSONAL_OPENERS: [&str; 4] = [
    "my arm was sore after my",
    "i had a rough night after my",
    "my mum felt dizzy after her",
    "i just got my",
];
const GENERAL_OPENERS: [&str; 4] = [
    "the clinic posted an update about the",
    "new guidance came out on the",
    "interesting discussion about the",
    "local pharmacy now offers the",
];

fn concern_phrases(category: ConcernCategory) -> [&'static str; 4] {
    match category {
        ConcernCategory::Safety => [
            "is it safe long term",
            "worried about safety data",
            "long term effects unknown",
            "rushed approval process",
        ],
        ConcernCategory::SideEffects => [
            "fever and chills",
            "sore arm for days",
            "headache and fatigue",
            "heart inflammation reports",
        ],
        ConcernCategory::Misinformation => [
            "microchip rumours everywhere",
            "claims it is a hoax",
            "conspiracy theories spreading",
            "they are hiding the numbers",
        ],
        ConcernCategory::TrustInAuthorities => [
            "don't trust the government",
            "the cdc keeps changing advice",
            "they lied about this before",
            "hard to trust the science now",
        ],
        ConcernCategory::PreviousNegativeExperience => [
            "last time i reacted badly",
            "after my first dose i was sick",
            "never again after that reaction",
            "bad reaction before so hesitant",
        ],
    }
}

const UNRELATED_TEXTS: [&str; 10] = [
    "best pizza dough recipe i have ever tried",
    "the game last night went to overtime",
    "looking for hiking trails near the coast",
    "my sourdough starter finally doubled overnight",
    "new coffee place opened around the corner",
    "anyone else watching the new series finale",
    "garden tomatoes are ripening early this year",
    "traffic on the bridge was unbearable this morning",
    "found a great deal on secondhand bookshelves",
    "learning watercolor painting from online tutorials",
];

const SHORT_TEXTS: [&str; 6] = ["ok thanks", "so scary", "great news", "no way", "same here", "oh no"];

const URL_DECORATIONS: [&str; 4] = [
    "https://t.co/x9q2",
    "http://example.com/read-this",
    "www.vaxnews.example/article?id=77",
    "https://short.link/abc",
];
const MENTION_DECORATIONS: [&str; 4] = ["@newsdesk", "@vax_updates", "@friend42", "@clinic_au"];
const EMOJI_DECORATIONS: [&str; 4] = ["😷", "💉", "😟", "🙏"];

fn sentiment_words(label: SentimentLabel) -> &'static [&'static str; 12] {
    match label {
        SentimentLabel::Negative => &NEGATIVE_WORDS,
        SentimentLabel::Neutral => &NEUTRAL_WORDS,
        SentimentLabel::Positive => &POSITIVE_WORDS,
    }
}

/// One template sentence plus the ground truth it was built from.
#[derive(Debug, Clone)]
pub struct PostTemplate {
    pub text: String,
    pub sentiment: SentimentLabel,
    pub concern: ConcernCategory,
    pub personal: bool,
}

/// Fixed pool of relevant-comment templates: every concern x four
/// phrases x three sentiments x three voices. The pool is deliberately
/// finite so large fixtures contain many duplicate texts, and the
/// sentiment-word slots rotate through strong, weak, and bare variants
/// so baseline confidence genuinely varies across posts.
pub fn template_pool() -> Vec<PostTemplate> {
    let mut pool = Vec::new();
    for (ci, category) in ConcernCategory::ALL.into_iter().enumerate() {
        for (pi, phrase) in concern_phrases(category).into_iter().enumerate() {
            for (si, sentiment) in SentimentLabel::ALL.into_iter().enumerate() {
                let words = sentiment_words(sentiment);
                let vaccine = VACCINE_PHRASES[(ci * 4 + pi) % VACCINE_PHRASES.len()];
                let w1 = words[(ci + pi) % words.len()];
                let w2 = words[(ci + pi + 5) % words.len()];
                let noise = NOISE_WORDS[(ci + pi + si) % NOISE_WORDS.len()];
                // Rotating evidence strength: two in-class words, one
                // word plus noise, or no sentiment vocabulary at all.
                let tail = match (ci * 4 + pi + si) % 3 {
                    0 => format!("feeling {w1} and {w2}"),
                    1 => format!("feeling {w1} {noise}"),
                    _ => format!("{noise} thoughts on this"),
                };
                let personal_opener = PERSONAL_OPENERS[(ci + pi) % PERSONAL_OPENERS.len()];
                let general_opener = GENERAL_OPENERS[(ci + pi) % GENERAL_OPENERS.len()];
                pool.push(PostTemplate {
                    text: format!("{personal_opener} {vaccine}, {phrase}, {tail}"),
                    sentiment,
                    concern: category,
                    personal: true,
                });
                pool.push(PostTemplate {
                    text: format!("{general_opener} {vaccine}, people mention {phrase}, {tail}"),
                    sentiment,
                    concern: category,
                    personal: false,
                });
                pool.push(PostTemplate {
                    text: format!("{vaccine} and {phrase}, {tail}"),
                    sentiment,
                    concern: category,
                    personal: false,
                });
            }
        }
    }
    pool
}

/// Generates `n` raw posts spanning August 2023 through July 2024:
/// mostly vaccine comments from the template pool, with unrelated posts,
/// short fragments, and URL/mention/emoji injections mixed in.
pub fn synthetic_posts(seed: u64, n: usize) -> Vec<RawPost> {
    let mut rng = SmallRng::seed_from_u64(seed);
    let pool = template_pool();
    let start = Utc.with_ymd_and_hms(2023, 8, 1, 0, 0, 0).unwrap();
    let span_secs = (Utc.with_ymd_and_hms(2024, 7, 31, 23, 59, 59).unwrap() - start).num_seconds();
    let platforms = [Platform::X, Platform::Reddit, Platform::Youtube, Platform::Facebook];

    (0..n)
        .map(|i| {
            let roll: f64 = rng.random();
            let base_text = if roll < 0.06 {
                SHORT_TEXTS.choose(&mut rng).expect("non-empty").to_string()
            } else if roll < 0.16 {
                UNRELATED_TEXTS.choose(&mut rng).expect("non-empty").to_string()
            } else {
                pool.choose(&mut rng).expect("non-empty").text.clone()
            };

            let mut text = base_text;
            if rng.random_bool(0.22) {
                let url = URL_DECORATIONS.choose(&mut rng).expect("non-empty");
                if rng.random_bool(0.5) {
                    text = format!("{text} {url}");
                } else {
                    text = format!("{url} {text}");
                }
            }
            if rng.random_bool(0.22) {
                let mention = MENTION_DECORATIONS.choose(&mut rng).expect("non-empty");
                text = format!("{mention} {text}");
            }
            if rng.random_bool(0.12) {
                let emoji = EMOJI_DECORATIONS.choose(&mut rng).expect("non-empty");
                text = format!("{text} {emoji}");
            }

            let created = start + Duration::seconds(rng.random_range(0..span_secs));
            let platform = *platforms.choose(&mut rng).expect("non-empty");
            RawPost {
                id: format!("syn-{i:05}"),
                platform,
                platform_id: format!("s{i:05}"),
                author_hash: author_hash("fixture", &format!("author{}", rng.random_range(0..250))),
                created_at: created,
                fetched_at: created + Duration::hours(1),
                text,
                lang: "en".into(),
                source_query: "vaccine".into(),
            }
        })
        .collect()
}

/// Labeled three-class corpus with class-indicative vocabulary and a 10%
/// noise-token rate, split deterministically into train and held-out.
pub fn sentiment_corpus(
    seed: u64,
    n_train: usize,
    n_held: usize,
) -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut make = |count: usize| -> Vec<TrainingExample> {
        (0..count)
            .map(|i| {
                let label = SentimentLabel::ALL[i % 3];
                let words = sentiment_words(label);
                let len = rng.random_range(8..=14);
                let tokens: Vec<&str> = (0..len)
                    .map(|_| {
                        if rng.random_bool(0.10) {
                            NOISE_WORDS.choose(&mut rng).expect("non-empty")
                        } else {
                            words.choose(&mut rng).expect("non-empty")
                        }
                    })
                    .copied()
                    .collect();
                TrainingExample::new(&tokens.join(" "), label.as_str())
            })
            .collect()
    };
    (make(n_train), make(n_held))
}

/// Writes posts as line-delimited JSON in the corpus record format.
pub fn write_posts_jsonl(path: &Path, posts: &[RawPost]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for post in posts {
        let line = serde_json::to_string(post).expect("post serializes");
        writeln!(file, "{line}")?;
    }
    file.flush()
}

/// Writes labeled examples as line-delimited JSON (`clean_text` + `label`).
pub fn write_labeled_jsonl(path: &Path, examples: &[TrainingExample]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for example in examples {
        let line = serde_json::to_string(example).expect("example serializes");
        writeln!(file, "{line}")?;
    }
    file.flush()
}
