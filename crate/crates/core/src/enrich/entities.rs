use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A gazetteer title found in a text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// The text as it appears in the source.
    pub surface: String,
    pub canonical_title: String,
    /// Character offsets `[start, end)` into the source text.
    pub span: (usize, usize),
}

/// Known entity titles, matched case-insensitively.
#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    titles: Vec<String>,
    /// Lowercased title characters.
    folded: Vec<Vec<char>>,
    /// First folded character → indices into `titles`.
    by_first: HashMap<char, Vec<usize>>,
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

impl Gazetteer {
    pub fn new<S: AsRef<str>>(titles: impl IntoIterator<Item = S>) -> Self {
        let mut g = Gazetteer::default();
        let mut seen = HashSet::new();
        for t in titles {
            let t = t.as_ref().trim();
            if t.is_empty() {
                continue;
            }
            let folded: Vec<char> = t.chars().map(fold).collect();
            if !seen.insert(folded.clone()) {
                continue;
            }
            g.by_first.entry(folded[0]).or_default().push(g.titles.len());
            g.titles.push(t.to_string());
            g.folded.push(folded);
        }
        g
    }

    /// One title per line, UTF-8. Blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Gazetteer::new(text.lines()))
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    fn longest_at(&self, chars: &[char], folded: &[char], start: usize) -> Option<(usize, usize)> {
        let candidates = self.by_first.get(&folded[start])?;
        let mut best: Option<(usize, usize)> = None;
        for &ti in candidates {
            let title = &self.folded[ti];
            let end = start + title.len();
            if end > folded.len() || folded[start..end] != title[..] {
                continue;
            }
            if end < chars.len() && is_word(chars[end]) && is_word(chars[end - 1]) {
                continue;
            }
            if best.is_none_or(|(_, e)| end > e) {
                best = Some((ti, end));
            }
        }
        best
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Greedy longest-match scan, left to right, non-overlapping.
///
/// Matches must start and end on word boundaries. Repeated titles keep only
/// their first mention.
pub fn extract_entities(text: &str, gazetteer: &Gazetteer) -> Vec<Entity> {
    let chars: Vec<char> = text.chars().collect();
    let folded: Vec<char> = chars.iter().map(|&c| fold(c)).collect();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut i = 0;
    while i < chars.len() {
        let at_boundary = i == 0 || !is_word(chars[i - 1]) || !is_word(chars[i]);
        if at_boundary {
            if let Some((ti, end)) = gazetteer.longest_at(&chars, &folded, i) {
                let title = &gazetteer.titles[ti];
                if seen.insert(ti) {
                    out.push(Entity {
                        surface: chars[i..end].iter().collect(),
                        canonical_title: title.clone(),
                        span: (i, end),
                    });
                }
                i = end;
                continue;
            }
        }
        i += 1;
    }
    out
}
