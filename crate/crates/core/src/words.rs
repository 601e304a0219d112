//! Word counting and truncation for description length limits.
//!
//! A word is a whitespace-separated token. Text in CJK scripts has no
//! spaces, so each run of two CJK characters counts as one word.

pub const COLUMN_WORD_LIMIT: usize = 20;
pub const TABLE_WORD_LIMIT: usize = 100;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF    // kana
        | 0x3400..=0x4DBF  // CJK extension A
        | 0x4E00..=0x9FFF  // CJK unified
        | 0xAC00..=0xD7AF  // hangul
        | 0xF900..=0xFAFF  // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

fn token_words(token: &str) -> usize {
    let cjk = token.chars().filter(|c| is_cjk(*c)).count();
    if cjk == 0 {
        return 1;
    }
    let other = token.chars().any(|c| !is_cjk(c) && c.is_alphanumeric());
    cjk.div_ceil(2) + usize::from(other)
}

pub fn count_words(text: &str) -> usize {
    text.split_whitespace().map(token_words).sum()
}

/// First `limit` words of `text`, re-joined with single spaces. Never ends
/// in a partial Latin word; a CJK token may be cut between characters.
pub fn truncate_words(text: &str, limit: usize) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut used = 0;
    for token in text.split_whitespace() {
        let w = token_words(token);
        if used + w <= limit {
            out.push(token.to_string());
            used += w;
            continue;
        }
        let budget = limit - used;
        if budget > 0 && token.chars().any(is_cjk) {
            // Keep whole CJK pairs, dropping any Latin part of the token.
            let mut kept = String::new();
            let mut pairs = 0;
            let mut in_pair = 0;
            for c in token.chars() {
                if !is_cjk(c) {
                    continue;
                }
                if in_pair == 0 && pairs == budget {
                    break;
                }
                kept.push(c);
                in_pair += 1;
                if in_pair == 2 {
                    in_pair = 0;
                    pairs += 1;
                }
            }
            if !kept.is_empty() {
                out.push(kept);
            }
        }
        break;
    }
    out.join(" ")
}
