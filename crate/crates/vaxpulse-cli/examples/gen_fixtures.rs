//! Regenerates the bundled synthetic fixtures under `fixtures/`.
//!
//! Run from anywhere in the workspace:
//!   cargo run -p vaxpulse-cli --example gen_fixtures
//!
//! Everything is seeded, so the output is reproducible; the generated
//! files are committed so tests and README walkthroughs never need to
//! regenerate them.

use std::fmt::Write as _;
use std::path::PathBuf;

use vaxpulse::fixtures::{sentiment_corpus, synthetic_posts, write_labeled_jsonl, write_posts_jsonl};

const POSTS_SEED: u64 = 23_279;
const TRAIN_SEED: u64 = 7;

fn main() -> std::io::Result<()> {
    let fixtures_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::create_dir_all(&fixtures_dir)?;

    let posts = synthetic_posts(POSTS_SEED, 1_000);
    write_posts_jsonl(&fixtures_dir.join("posts-1k.jsonl"), &posts)?;
    println!("wrote posts-1k.jsonl ({} posts)", posts.len());

    let (train, _) = sentiment_corpus(TRAIN_SEED, 600, 0);
    write_labeled_jsonl(&fixtures_dir.join("sentiment-train.jsonl"), &train)?;
    println!("wrote sentiment-train.jsonl ({} examples)", train.len());

    let mut csv = String::from("date,query,interest\n");
    for month in 0..12u32 {
        let (year, month) = if month < 5 { (2023, 8 + month) } else { (2024, month - 4) };
        for (query, base) in [("covid vaccine side effects", 60), ("shingles vaccine", 35)] {
            let interest = base + ((month as i64 * 7 + year as i64) % 23);
            let _ = writeln!(csv, "{year}-{month:02}-01,{query},{interest}");
        }
    }
    std::fs::write(fixtures_dir.join("trends.csv"), csv)?;
    println!("wrote trends.csv");
    Ok(())
}
