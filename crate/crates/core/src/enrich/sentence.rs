use crate::error::{Error, Result};

/// Lowercased words that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "inc", "ltd", "co", "corp",
    "mt", "ft", "approx", "ca", "c", "fl", "gen", "gov", "sen", "rep", "rev", "col", "lt", "sgt",
    "capt", "cf", "al", "est", "dept", "univ", "jan", "feb", "mar", "apr", "jun", "jul", "aug",
    "sep", "sept", "oct", "nov", "dec",
];

fn closes(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '”' | '’')
}

/// Whether the period at `chars[dot]` belongs to an abbreviation.
fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 && !chars[start - 1].is_whitespace() && !matches!(chars[start - 1], '(' | '[' | '"') {
        start -= 1;
    }
    let word: String = chars[start..dot].iter().collect();
    if word.is_empty() {
        return false;
    }
    // Dotted short forms: "e.g", "U.S", "Ph.D", "a.m".
    if word.contains('.')
        && word
            .split('.')
            .all(|seg| seg.len() <= 3 && seg.chars().all(char::is_alphabetic))
    {
        return true;
    }
    let mut letters = word.chars();
    // Initials such as "A." in "A. B. Smith".
    if let (Some(c), None) = (letters.next(), letters.next()) {
        if c.is_uppercase() {
            return true;
        }
    }
    let lower = word.to_lowercase();
    if matches!(lower.as_str(), "no" | "nos") {
        // "No. 1" but not "the answer was no."
        return chars[dot + 1..]
            .iter()
            .find(|c| !c.is_whitespace())
            .is_some_and(|c| c.is_ascii_digit());
    }
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Prefix of `text` up to and including the first sentence terminator.
///
/// A terminator is `.`, `!` or `?` followed (after optional closing quotes or
/// brackets) by whitespace or the end of the text. Periods that end common
/// abbreviations, initials or dotted acronyms do not count. Returns the whole
/// trimmed text if no terminator is found.
pub fn first_sentence(text: &str) -> Result<String> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Degenerate("first_sentence of empty text".into()));
    }
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && closes(chars[end]) {
                end += 1;
            }
            let at_break = end == chars.len() || chars[end].is_whitespace();
            if at_break && !(c == '.' && is_abbreviation(&chars, i)) {
                return Ok(chars[..end].iter().collect());
            }
        }
        i += 1;
    }
    Ok(text.to_string())
}
