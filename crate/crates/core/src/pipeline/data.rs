//! News items, datasets and their JSON Lines representation.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::{ImageFeatureVector, TextInput, Vocabulary};
use crate::enrich::{extract_entities, DescriptionFetcher, FetchMode, Gazetteer, Lookup};
use crate::error::{Error, Result};
use crate::model::ModelInput;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    pub text: String,
    pub image_vec: Vec<f64>,
    /// Canonical entity titles mentioned in the text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<String>>,
    /// One description sentence per resolved entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc_sentences: Option<Vec<String>>,
    pub label: u8,
}

impl NewsItem {
    pub fn descriptions(&self) -> &[String] {
        self.desc_sentences.as_deref().unwrap_or(&[])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Jsonl { path: PathBuf },
    Synthetic { seed: u64, config_hash: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub items: Vec<NewsItem>,
    pub split: Split,
    pub provenance: Provenance,
}

impl Dataset {
    /// Validates that the dataset is non-empty, ids are unique, labels are
    /// binary and every image vector has the same length.
    pub fn new(items: Vec<NewsItem>, split: Split, provenance: Provenance) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Schema(format!("{split} dataset is empty")));
        }
        let mut seen = HashSet::new();
        let d_raw = items[0].image_vec.len();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id {:?}", item.id)));
            }
            if item.label > 1 {
                return Err(Error::Schema(format!("item {:?} has label {}", item.id, item.label)));
            }
            if item.image_vec.len() != d_raw {
                return Err(Error::Schema(format!(
                    "item {:?} has image_vec of length {}, expected {d_raw}",
                    item.id,
                    item.image_vec.len()
                )));
            }
        }
        Ok(Dataset {
            items,
            split,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_dim(&self) -> usize {
        self.items[0].image_vec.len()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|x| x.label).collect()
    }

    /// Every text and description sentence, for vocabulary construction.
    pub fn corpus(&self) -> impl Iterator<Item = &str> {
        self.items.iter().flat_map(|x| {
            std::iter::once(x.text.as_str()).chain(x.descriptions().iter().map(String::as_str))
        })
    }

    /// Tokenizes every item. Descriptions that tokenize to nothing are
    /// dropped.
    pub fn model_inputs(&self, vocab: &Vocabulary, max_len: usize) -> Result<Vec<ModelInput>> {
        self.items
            .iter()
            .map(|item| {
                let text = vocab.encode(&item.text, max_len);
                if text.active_len() == 0 {
                    return Err(Error::Schema(format!("item {:?} has no tokens", item.id)));
                }
                let descriptions = item
                    .descriptions()
                    .iter()
                    .map(|s| vocab.encode(s, max_len))
                    .filter(|seq| seq.active_len() > 0)
                    .map(TextInput::Tokens)
                    .collect();
                Ok(ModelInput {
                    text: TextInput::Tokens(text),
                    image: ImageFeatureVector(Tensor::vector(item.image_vec.clone())),
                    descriptions,
                    label: item.label,
                })
            })
            .collect()
    }
}

/// Lines skipped by [`load_jsonl`] under the exclusion rule.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub skipped: Vec<(usize, String)>,
}

#[derive(Deserialize)]
struct RawItem {
    id: Option<String>,
    text: Option<String>,
    image_vec: Option<Vec<f64>>,
    entities: Option<Vec<String>>,
    desc_sentences: Option<Vec<String>>,
    label: Option<i64>,
}

/// Reads one [`NewsItem`] per line. Items without text or image are skipped
/// and reported; anything else malformed is an error.
pub fn load_jsonl(path: &Path, split: Split) -> Result<(Dataset, LoadReport)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut report = LoadReport::default();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let id = raw.id.ok_or_else(|| parse_err(lineno, "missing field `id`".into()))?;
        let label = match raw.label {
            Some(l @ 0..=1) => l as u8,
            Some(l) => return Err(parse_err(lineno, format!("label must be 0 or 1, got {l}"))),
            None => return Err(parse_err(lineno, "missing field `label`".into())),
        };
        let text = raw.text.filter(|t| !t.trim().is_empty());
        let image = raw.image_vec.filter(|v| !v.is_empty());
        let (text, image_vec) = match (text, image) {
            (Some(t), Some(v)) => (t, v),
            (t, _) => {
                let missing = if t.is_none() { "text" } else { "image_vec" };
                log::warn!("{}:{lineno}: item {id:?} has no {missing}; skipped", path.display());
                report.skipped.push((lineno, format!("missing {missing}")));
                continue;
            }
        };
        items.push(NewsItem {
            id,
            text,
            image_vec,
            entities: raw.entities,
            desc_sentences: raw.desc_sentences,
            label,
        });
    }
    let provenance = Provenance::Jsonl {
        path: path.to_path_buf(),
    };
    Ok((Dataset::new(items, split, provenance)?, report))
}

pub fn write_jsonl(path: &Path, items: &[NewsItem]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResolveReport {
    pub resolved: usize,
    pub missing: Vec<String>,
}

/// Fills `desc_sentences` for items that lack them, using listed entities or
/// gazetteer matches in the text.
pub fn resolve_descriptions(
    dataset: &mut Dataset,
    gazetteer: &Gazetteer,
    fetcher: &DescriptionFetcher,
    mode: FetchMode,
) -> Result<ResolveReport> {
    let mut report = ResolveReport::default();
    for item in dataset.items.iter_mut().filter(|x| x.desc_sentences.is_none()) {
        let titles = match &item.entities {
            Some(t) => t.clone(),
            None => extract_entities(&item.text, gazetteer)
                .into_iter()
                .map(|e| e.canonical_title)
                .collect(),
        };
        let mut sentences = Vec::new();
        for title in &titles {
            match fetcher.fetch_title(title, mode) {
                Ok(Lookup::Found(desc)) => sentences.push(desc.sentence),
                Ok(Lookup::Missing { title }) | Err(Error::CacheMiss(title)) => {
                    report.missing.push(title)
                }
                Err(e) => return Err(e),
            }
        }
        report.resolved += sentences.len();
        item.entities = Some(titles);
        item.desc_sentences = Some(sentences);
    }
    if !report.missing.is_empty() {
        log::warn!("{} entity descriptions unavailable", report.missing.len());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("d.jsonl");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"id\":\"a\",\"text\":\"x y\",\"image_vec\":[1,2],\"label\":0}\n\
             {\"id\":\"b\",\"text\":\"z\",\"image_vec\":[3,4],\"label\":1,\"entities\":[\"Q\"]}\n",
        );
        let (ds, report) = load_jsonl(&p, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(report.skipped.is_empty());
        assert_eq!(ds.items[1].entities.as_deref(), Some(&["Q".to_string()][..]));
    }

    #[test]
    fn missing_image_is_skipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"id\":\"a\",\"text\":\"x\",\"image_vec\":[1],\"label\":0}\n\
             {\"id\":\"b\",\"text\":\"y\",\"label\":1}\n",
        );
        let (ds, report) = load_jsonl(&p, Split::Test).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(report.skipped, vec![(2, "missing image_vec".to_string())]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"id\":\"a\",\"text\":\"x\",\"image_vec\":[1],\"label\":0}\n{oops\n",
        );
        match load_jsonl(&p, Split::Train) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let line = "{\"id\":\"a\",\"text\":\"x\",\"image_vec\":[1],\"label\":0}\n";
        let p = write(dir.path(), &line.repeat(2));
        assert!(matches!(load_jsonl(&p, Split::Train), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "{\"id\":\"a\",\"text\":\"x\",\"image_vec\":[1],\"label\":2}\n");
        assert!(matches!(load_jsonl(&p, Split::Train), Err(Error::Parse { line: 1, .. })));
    }
}
