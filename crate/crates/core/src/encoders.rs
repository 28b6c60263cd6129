//! Unimodal feature extraction for text, image and entity descriptions.
//!
//! Text is encoded by mean-pooling trainable token embeddings and projecting
//! the pooled vector; images arrive as pre-extracted feature vectors and are
//! projected linearly. Any of the pooled inputs can be replaced by externally
//! computed vectors loaded with [`load_precomputed`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

pub const DEFAULT_MAX_LEN: usize = 64;
pub const OOV_ID: usize = 0;

param_group! {
    /// Token embeddings plus the three input projections.
    pub struct EncoderParams / EncoderGrads : "encoder" {
        /// `[vocab × d]`, shared by text and description encoding.
        tok_emb,
        /// `[d × d]`
        w_tf,
        /// `[d × d_raw]`
        w_vf,
        /// `[d × d]`
        w_df,
    }
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Closed vocabulary. Id 0 is reserved for out-of-vocabulary words; the
/// remaining ids follow sorted word order so construction is independent of
/// corpus order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        let mut words = vec!["<unk>".to_string()];
        words.extend(set);
        Vocabulary::from(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(OOV_ID)
    }

    pub fn encode(&self, text: &str, max_len: usize) -> TokenSequence {
        let ids: Vec<usize> = tokenize(text)
            .iter()
            .take(max_len)
            .map(|w| self.id(w))
            .collect();
        TokenSequence::padded(ids, max_len)
    }
}

/// Fixed-length token ids; `mask[i]` is false on padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TokenSequence {
    pub fn padded(mut ids: Vec<usize>, max_len: usize) -> Self {
        ids.truncate(max_len);
        let n = ids.len();
        ids.resize(max_len, OOV_ID);
        let mask = (0..max_len).map(|i| i < n).collect();
        TokenSequence { tokens: ids, mask }
    }

    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&t, _)| t)
    }

    pub fn active_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Input to a text-side encoder: either tokens to pool, or a vector that
/// already plays the pooled role.
#[derive(Clone, Debug, PartialEq)]
pub enum TextInput {
    Tokens(TokenSequence),
    Vector(Tensor),
}

/// Pre-extracted image features of fixed dimension `d_raw`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatureVector(pub Tensor);

/// Masked mean of token embedding rows.
pub fn pool_tokens(tok_emb: &Tensor, seq: &TokenSequence) -> Result<Tensor> {
    let n = seq.active_len();
    if n == 0 {
        return Err(Error::EmptyText);
    }
    let d = tok_emb.cols();
    let mut out = vec![0.0; d];
    for t in seq.active() {
        if t >= tok_emb.rows() {
            return Err(Error::Schema(format!(
                "token id {t} outside vocabulary of {}",
                tok_emb.rows()
            )));
        }
        out.iter_mut().zip(tok_emb.row(t)).for_each(|(o, e)| *o += e);
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    Ok(Tensor::vector(out))
}

/// Spreads `d_pooled / n` onto every active token's embedding row.
pub fn pool_tokens_backward_accum(seq: &TokenSequence, d_pooled: &Tensor, d_emb: &mut Tensor) {
    let n = seq.active_len() as f64;
    for t in seq.active() {
        d_emb
            .row_mut(t)
            .iter_mut()
            .zip(d_pooled.data())
            .for_each(|(g, d)| *g += d / n);
    }
}

/// The pooled stand-in for a transformer `[CLS]` vector.
pub fn pooled_input(tok_emb: &Tensor, input: &TextInput) -> Result<Tensor> {
    match input {
        TextInput::Tokens(seq) => pool_tokens(tok_emb, seq),
        TextInput::Vector(v) => {
            if v.len() != tok_emb.cols() {
                return Err(Error::dim("pooled_input", &[tok_emb.cols()], v.shape()));
            }
            Ok(v.clone())
        }
    }
}

impl EncoderParams {
    pub fn width(&self) -> usize {
        self.w_tf.value.shape()[0]
    }

    pub fn raw_image_dim(&self) -> usize {
        self.w_vf.value.shape()[1]
    }

    /// `r^t = W_tf · pool(text)`.
    pub fn encode_text(&self, input: &TextInput) -> Result<Tensor> {
        let cls = pooled_input(&self.tok_emb.value, input)?;
        ops::matmul(&self.w_tf.value, &cls)
    }

    /// `r^v = W_vf · img`.
    pub fn encode_image(&self, img: &ImageFeatureVector) -> Result<Tensor> {
        if img.0.len() != self.raw_image_dim() {
            return Err(Error::dim("encode_image", &[self.raw_image_dim()], img.0.shape()));
        }
        ops::matmul(&self.w_vf.value, &img.0)
    }

    /// One row `r^d` of the description matrix: `W_df · pool(description)`.
    pub fn encode_description(&self, input: &TextInput) -> Result<Tensor> {
        let cls = pooled_input(&self.tok_emb.value, input)?;
        ops::matmul(&self.w_df.value, &cls)
    }

    /// Backward through `W · pool(input)`. `use_desc` selects `W_df` over
    /// `W_tf`. Embedding gradients flow only for token inputs.
    pub fn text_backward(
        &self,
        input: &TextInput,
        pooled: &Tensor,
        dy: &Tensor,
        use_desc: bool,
        grads: &mut EncoderGrads,
    ) {
        let (w, dw) = if use_desc {
            (&self.w_df.value, &mut grads.w_df)
        } else {
            (&self.w_tf.value, &mut grads.w_tf)
        };
        let d_pooled = ops::matvec_backward_accum(w, pooled, dy, dw);
        if let TextInput::Tokens(seq) = input {
            pool_tokens_backward_accum(seq, &d_pooled, &mut grads.tok_emb);
        }
    }

    pub fn image_backward(&self, img: &ImageFeatureVector, dy: &Tensor, grads: &mut EncoderGrads) {
        ops::matvec_backward_accum(&self.w_vf.value, &img.0, dy, &mut grads.w_vf);
    }
}

/// One line of an embedding file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputedItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_vec: Option<Vec<f64>>,
    pub image_vec: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc_vecs: Option<Vec<Vec<f64>>>,
}

/// Reads a JSON Lines embedding file keyed by item id.
///
/// Every `image_vec` must share one length, as must every text and
/// description vector.
pub fn load_precomputed(path: &Path) -> Result<BTreeMap<String, PrecomputedItem>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut image_dim = None;
    let mut text_dim = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: PrecomputedItem = serde_json::from_str(&line).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("missing field") || msg.contains("unknown field") {
                Error::Schema(format!("{}:{lineno}: {msg}", path.display()))
            } else {
                Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg,
                }
            }
        })?;
        let schema = |what: &str| {
            Error::Schema(format!(
                "{}:{lineno}: inconsistent {what} dimension for item {:?}",
                path.display(),
                item.id
            ))
        };
        check_dim(&mut image_dim, item.image_vec.len()).map_err(|_| schema("image_vec"))?;
        if let Some(t) = &item.text_vec {
            check_dim(&mut text_dim, t.len()).map_err(|_| schema("text_vec"))?;
        }
        for v in item.desc_vecs.iter().flatten() {
            check_dim(&mut text_dim, v.len()).map_err(|_| schema("desc_vecs"))?;
        }
        if out.contains_key(&item.id) {
            return Err(Error::Schema(format!(
                "{}:{lineno}: duplicate id {:?}",
                path.display(),
                item.id
            )));
        }
        out.insert(item.id.clone(), item);
    }
    Ok(out)
}

fn check_dim(expected: &mut Option<usize>, got: usize) -> std::result::Result<(), ()> {
    match *expected {
        Some(e) if e != got => Err(()),
        _ => {
            *expected = Some(got);
            Ok(())
        }
    }
}

pub fn write_precomputed<'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a PrecomputedItem>,
) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
