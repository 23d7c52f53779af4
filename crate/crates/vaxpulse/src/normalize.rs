//! Deterministic text cleaning: strip URLs and mentions, remove special
//! characters, collapse repeated punctuation and whitespace, and drop
//! posts that end up too short.
//!
//! Rules run in a fixed order (R1 URLs, R2 mentions, R3 character filter,
//! R4 punctuation collapse, R5 whitespace collapse) and the whole pass
//! repeats until a fixed point so the output never contains a URL or
//! mention pattern, even when character removal would re-expose one.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// A URL is a `scheme://` or `www.`-prefixed run extending to the next
/// whitespace.
pub const URL_PATTERN: &str = r"(?i)(?:[a-z][a-z0-9+.\-]*://|\bwww\.)\S*";
/// A mention is `@` followed by word characters.
pub const MENTION_PATTERN: &str = r"@\w+";

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(URL_PATTERN).expect("url pattern compiles"))
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(MENTION_PATTERN).expect("mention pattern compiles"))
}

fn default_min_tokens() -> usize {
    4
}

fn default_allowed_punct() -> BTreeSet<char> {
    ['.', ',', '!', '?', '\'', '-'].into_iter().collect()
}

fn default_collapse() -> bool {
    true
}

/// Cleaning parameters; defaults follow the pipeline configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanConfig {
    #[serde(default = "default_min_tokens")]
    pub min_tokens: usize,
    #[serde(default = "default_allowed_punct")]
    pub allowed_punct: BTreeSet<char>,
    #[serde(default = "default_collapse")]
    pub collapse_repeat_punct: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            min_tokens: default_min_tokens(),
            allowed_punct: default_allowed_punct(),
            collapse_repeat_punct: default_collapse(),
        }
    }
}

/// Result of cleaning one post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanResult {
    pub clean_text: String,
    /// `token_count >= min_tokens`.
    pub kept: bool,
    pub removed_urls: usize,
    pub removed_mentions: usize,
    pub token_count: usize,
}

/// Cleans `text`. Total function: any input, including empty, yields a
/// result.
pub fn clean(text: &str, cfg: &CleanConfig) -> CleanResult {
    let mut current = text.to_string();
    let mut removed_urls = 0;
    let mut removed_mentions = 0;
    // Character removal (R3) can join fragments into a new URL or mention
    // pattern; repeat until stable. Each pass only removes characters, so
    // this terminates.
    for _ in 0..16 {
        let (next, urls, mentions) = clean_pass(&current, cfg);
        removed_urls += urls;
        removed_mentions += mentions;
        let stable = next == current;
        current = next;
        if stable {
            break;
        }
    }
    let token_count = current.split_whitespace().count();
    CleanResult {
        kept: token_count >= cfg.min_tokens,
        clean_text: current,
        removed_urls,
        removed_mentions,
        token_count,
    }
}

fn clean_pass(text: &str, cfg: &CleanConfig) -> (String, usize, usize) {
    // R1: URLs.
    let urls = url_re().find_iter(text).count();
    let text = url_re().replace_all(text, " ");
    // R2: mentions.
    let mentions = mention_re().find_iter(&text).count();
    let text = mention_re().replace_all(&text, " ");
    // R3: drop everything that is not a letter, digit, whitespace, or
    // allowed punctuation; R4: collapse runs of the same punctuation char.
    let mut filtered = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    for c in text.chars() {
        let keep = c.is_alphanumeric() || c.is_whitespace() || cfg.allowed_punct.contains(&c);
        if !keep {
            prev = None;
            continue;
        }
        if cfg.collapse_repeat_punct && cfg.allowed_punct.contains(&c) && prev == Some(c) {
            continue;
        }
        filtered.push(c);
        prev = Some(c);
    }
    // R5: collapse whitespace runs and trim.
    let collapsed = filtered.split_whitespace().collect::<Vec<_>>().join(" ");
    (collapsed, urls, mentions)
}

/// Whitespace tokens of already-cleaned text.
pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// Lowercased whitespace tokens; the tokenization used by classifier
/// features, lexicon matching, and topic vectorization.
pub fn tokens_lower(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> CleanConfig {
        CleanConfig::default()
    }

    #[test]
    fn strips_url_mention_and_collapses_punct() {
        let r = clean(
            "Check https://t.co/ab @user vaccine side effects worry me!!",
            &cfg(),
        );
        assert_eq!(r.clean_text, "Check vaccine side effects worry me!");
        assert!(r.kept);
        assert_eq!(r.removed_urls, 1);
        assert_eq!(r.removed_mentions, 1);
        assert_eq!(r.token_count, 6);
    }

    #[test]
    fn identity_on_already_clean_text() {
        let r = clean("Vaccines are safe and effective", &cfg());
        assert_eq!(r.clean_text, "Vaccines are safe and effective");
        assert!(r.kept);
        assert_eq!(r.token_count, 5);
        assert_eq!(r.removed_urls, 0);
        assert_eq!(r.removed_mentions, 0);
    }

    #[test]
    fn short_text_not_kept() {
        let r = clean("ok thanks", &cfg());
        assert_eq!(r.clean_text, "ok thanks");
        assert!(!r.kept);
        assert_eq!(r.token_count, 2);
    }

    #[test]
    fn empty_input_is_fine() {
        let r = clean("", &cfg());
        assert_eq!(r.clean_text, "");
        assert!(!r.kept);
        assert_eq!(r.token_count, 0);
    }

    #[test]
    fn www_urls_and_whole_token_runs_removed() {
        let r = clean("see www.example.com/page?x=1 now please everyone", &cfg());
        assert_eq!(r.clean_text, "see now please everyone");
        assert_eq!(r.removed_urls, 1);
    }

    #[test]
    fn emoji_and_special_chars_removed() {
        let r = clean("fever 😷 and #chills… after dose", &cfg());
        assert_eq!(r.clean_text, "fever and chills after dose");
        assert!(r.kept);
    }

    #[test]
    fn non_latin_scripts_survive() {
        let r = clean("le vaccin était sûr — 疫苗 很 安全 了", &cfg());
        assert_eq!(r.clean_text, "le vaccin était sûr 疫苗 很 安全 了");
    }

    #[test]
    fn repeated_punct_collapses_only_same_char() {
        let r = clean("really??!! what?!", &cfg());
        assert_eq!(r.clean_text, "really?! what?!");
        let loose = CleanConfig {
            collapse_repeat_punct: false,
            ..cfg()
        };
        let r = clean("really??!!", &loose);
        assert_eq!(r.clean_text, "really??!!");
    }

    #[test]
    fn character_removal_cannot_reexpose_a_url() {
        // '#' removal joins "w#ww." into "www."; the fixpoint pass must
        // still leave no URL pattern behind.
        let r = clean("w#ww.sketchy.example plus ordinary vaccine words here", &cfg());
        assert!(!url_re().is_match(&r.clean_text), "{:?}", r.clean_text);
        let again = clean(&r.clean_text, &cfg());
        assert_eq!(again.clean_text, r.clean_text);
    }

    proptest! {
        #[test]
        fn idempotent_and_alphabet_clean(input in "\\PC*") {
            let config = cfg();
            let first = clean(&input, &config);
            let second = clean(&first.clean_text, &config);
            prop_assert_eq!(&second.clean_text, &first.clean_text);
            prop_assert!(!url_re().is_match(&first.clean_text));
            prop_assert!(!mention_re().is_match(&first.clean_text));
            for c in first.clean_text.chars() {
                prop_assert!(
                    c.is_alphanumeric() || c == ' ' || config.allowed_punct.contains(&c),
                    "stray char {:?}", c
                );
            }
        }

        #[test]
        fn alphanumeric_tokens_come_from_input(input in "\\PC*") {
            // Monotone containment: alphanumeric-only tokens of the output
            // appear somewhere in the input.
            let first = clean(&input, &cfg());
            for token in first.clean_text.split_whitespace() {
                let alnum: String = token.chars().filter(|c| c.is_alphanumeric()).collect();
                if !alnum.is_empty() {
                    let input_joined: String = input
                        .chars()
                        .filter(|c| c.is_alphanumeric())
                        .collect();
                    prop_assert!(input_joined.contains(&alnum), "token {:?} not in input", alnum);
                }
            }
        }
    }
}
