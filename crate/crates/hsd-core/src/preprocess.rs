//! The seven-rule text cleaning pipeline.
//!
//! Rules apply in a fixed order; structured patterns go first because they
//! contain characters later rules would destroy (URLs contain digits and
//! punctuation, emails contain `@`):
//!
//! 1. URL removal ([`URL_PATTERN`])
//! 2. email removal ([`EMAIL_PATTERN`])
//! 3. IP-address removal ([`IP_PATTERN`])
//! 4. number removal (maximal digit runs, also inside tokens: `covid19` ->
//!    `covid`)
//! 5. lowercasing
//! 6. special-character removal: `#` and `@` and every other character that
//!    is neither alphabetic nor whitespace
//! 7. whitespace collapse and trim
//!
//! The three patterns are part of the external interface and must not change
//! without versioning; `fixtures/preprocess_golden.tsv` at the repo root is
//! the cross-implementation conformance file.

use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::LabeledCorpus;
use crate::par;

/// Matches http(s) URLs and bare `www.` hosts up to the next whitespace.
pub const URL_PATTERN: &str = r"(?i)(?:https?://|www\.)\S+";
/// Matches common mailbox@host addresses.
pub const EMAIL_PATTERN: &str = r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}";
/// Matches dotted-quad IPv4 addresses.
pub const IP_PATTERN: &str = r"\b(?:[0-9]{1,3}\.){3}[0-9]{1,3}\b";
/// Matches maximal decimal-digit runs.
pub const NUMBER_PATTERN: &str = r"\d+";

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(URL_PATTERN).unwrap())
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(EMAIL_PATTERN).unwrap())
}

fn ip_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(IP_PATTERN).unwrap())
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(NUMBER_PATTERN).unwrap())
}

/// Apply the seven rules in order. Total: any unicode input is accepted and
/// the result may be empty (callers drop and count empties).
pub fn clean(text: &str) -> String {
    let step = url_re().replace_all(text, "");
    let step = email_re().replace_all(&step, "");
    let step = ip_re().replace_all(&step, "");
    let step = number_re().replace_all(&step, "");
    let step = step.to_lowercase();
    let step: String = step.chars().filter(|c| keep_char(*c)).collect();
    step.split_whitespace().collect::<Vec<_>>().join(" ")
}

// Letters that survive lowercasing as uppercase (styled math alphabets)
// count as special characters and go too.
fn keep_char(c: char) -> bool {
    (c.is_alphabetic() && !c.is_uppercase()) || c.is_whitespace()
}

/// Names of the rules in application order, paired with the intermediate
/// string after each rule. Debugging aid; `clean` is the production path.
pub fn clean_trace(text: &str) -> Vec<(&'static str, String)> {
    let mut out = Vec::with_capacity(7);
    let s = url_re().replace_all(text, "").into_owned();
    out.push(("url-removal", s.clone()));
    let s = email_re().replace_all(&s, "").into_owned();
    out.push(("email-removal", s.clone()));
    let s = ip_re().replace_all(&s, "").into_owned();
    out.push(("ip-removal", s.clone()));
    let s = number_re().replace_all(&s, "").into_owned();
    out.push(("number-removal", s.clone()));
    let s = s.to_lowercase();
    out.push(("lowercase", s.clone()));
    let s: String = s.chars().filter(|c| keep_char(*c)).collect();
    out.push(("special-char-removal", s.clone()));
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    out.push(("whitespace-collapse", s));
    out
}

/// Check the cleaned-text invariants: no URL/email/IP/digit substrings, no
/// uppercase, no `#` or `@`, no double spaces, no surrounding space.
pub fn is_clean(text: &str) -> bool {
    !url_re().is_match(text)
        && !email_re().is_match(text)
        && !ip_re().is_match(text)
        && !number_re().is_match(text)
        && !text.chars().any(|c| c.is_uppercase())
        && !text.contains(['#', '@'])
        && !text.contains("  ")
        && text.trim() == text
}

/// Clean every sample text, dropping (and counting) samples that clean to
/// the empty string. Labels and ids are untouched; order is preserved.
pub fn clean_corpus(corpus: &LabeledCorpus) -> (LabeledCorpus, usize) {
    let cleaned = par::map_ordered(&corpus.samples, |s| clean(&s.text));
    collect_cleaned(corpus, cleaned)
}

/// Sequential twin of [`clean_corpus`]; used by the benchmark suite to
/// measure the rayon speedup.
pub fn clean_corpus_sequential(corpus: &LabeledCorpus) -> (LabeledCorpus, usize) {
    let cleaned: Vec<String> = corpus.samples.iter().map(|s| clean(&s.text)).collect();
    collect_cleaned(corpus, cleaned)
}

fn collect_cleaned(corpus: &LabeledCorpus, cleaned: Vec<String>) -> (LabeledCorpus, usize) {
    let mut out = LabeledCorpus::new(corpus.task.clone(), corpus.split);
    let mut removed = 0;
    for (sample, text) in corpus.samples.iter().zip(cleaned) {
        if text.is_empty() {
            removed += 1;
            continue;
        }
        let mut s = sample.clone();
        s.text = text;
        out.samples.push(s);
    }
    (out, removed)
}
