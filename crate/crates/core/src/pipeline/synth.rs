//! Seeded synthetic news with a text/image/description consistency signal.
//!
//! Each item draws a topic `k` and a latent `z = e_k + jitter`. The text mixes
//! topic words with filler and mentions 1 to 3 entities. Real items pair the
//! text with an image `B·z + noise` and mention entities of the same topic.
//! Fake items use the latent of another topic for the image and mention
//! entities from yet another random topic, so their descriptions disagree
//! with the text.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::data::{Dataset, NewsItem, Provenance, Split};
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor};

/// Dimension of the per-item latent `z`.
pub const LATENT_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Number of topics, at most [`LATENT_DIM`]. Topic `k` is centred on the
    /// `k`-th basis vector of the latent space.
    pub topics: usize,
    pub words_per_topic: usize,
    pub filler_words: usize,
    pub min_text_len: usize,
    pub max_text_len: usize,
    /// Probability that a text token is drawn from the topic vocabulary.
    pub topic_word_rate: f64,
    pub entities_per_topic: usize,
    pub d_raw: usize,
    pub topic_jitter: f64,
    pub image_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 2000,
            n_test: 500,
            seed: 42,
            topics: 4,
            words_per_topic: 12,
            filler_words: 40,
            min_text_len: 10,
            max_text_len: 16,
            topic_word_rate: 0.5,
            entities_per_topic: 4,
            d_raw: 32,
            topic_jitter: 0.3,
            image_noise: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_train < 10 || self.n_test < 10 {
            return bad("synthetic splits need at least 10 items each");
        }
        if !(3..=LATENT_DIM).contains(&self.topics) {
            return bad("topics must be between 3 and 8");
        }
        if self.words_per_topic < 4 || self.filler_words == 0 || self.entities_per_topic < 3 {
            return bad("vocabulary sizes too small");
        }
        if self.min_text_len == 0 || self.max_text_len < self.min_text_len {
            return bad("invalid text length range");
        }
        if !(0.0..=1.0).contains(&self.topic_word_rate) {
            return bad("topic_word_rate must be in [0, 1]");
        }
        if self.d_raw == 0 || self.topic_jitter < 0.0 || self.image_noise < 0.0 {
            return bad("invalid image settings");
        }
        Ok(())
    }

    /// FNV-1a over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plain struct");
        let h = json.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        });
        format!("{h:016x}")
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub train: Dataset,
    pub test: Dataset,
    /// Entity titles, one gazetteer line each.
    pub gazetteer: Vec<String>,
    /// `(title, summary)` for every entity.
    pub fixtures: Vec<(String, String)>,
    /// Per-topic vocabularies.
    pub topic_words: Vec<Vec<String>>,
    /// `[d_raw × 8]` image basis.
    pub image_basis: Tensor,
}

struct Lexicon {
    topic_words: Vec<Vec<String>>,
    filler: Vec<String>,
    /// Entity titles by topic.
    entities: Vec<Vec<String>>,
    summaries: Vec<Vec<String>>,
    basis: Tensor,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

fn pseudo_word(rng: &mut RngState, taken: &mut HashSet<String>) -> String {
    loop {
        let syllables = 2 + rng.below(2);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS[rng.below(ONSETS.len())], VOWELS[rng.below(VOWELS.len())]))
            .collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pick<'a>(rng: &mut RngState, xs: &'a [String]) -> &'a str {
    &xs[rng.below(xs.len())]
}

impl Lexicon {
    fn build(cfg: &SynthConfig, rng: &mut RngState) -> Self {
        let mut taken = HashSet::new();
        let topic_words: Vec<Vec<String>> = (0..cfg.topics)
            .map(|_| (0..cfg.words_per_topic).map(|_| pseudo_word(rng, &mut taken)).collect())
            .collect();
        let filler = (0..cfg.filler_words).map(|_| pseudo_word(rng, &mut taken)).collect();
        let mut entities = Vec::new();
        let mut summaries = Vec::new();
        for words in &topic_words {
            let mut titles = Vec::new();
            let mut texts = Vec::new();
            for _ in 0..cfg.entities_per_topic {
                let title = format!(
                    "{} {}",
                    capitalize(&pseudo_word(rng, &mut taken)),
                    capitalize(&pseudo_word(rng, &mut taken))
                );
                let w: Vec<&str> = (0..6).map(|_| pick(rng, words)).collect();
                texts.push(format!(
                    "{title} is a {} {} of the {} {}. It is also known for {} and {}.",
                    w[0], w[1], w[2], w[3], w[4], w[5]
                ));
                titles.push(title);
            }
            entities.push(titles);
            summaries.push(texts);
        }
        let basis = Tensor::matrix(
            cfg.d_raw,
            LATENT_DIM,
            rng.normal_vec(cfg.d_raw * LATENT_DIM, 1.0),
        )
        .expect("shape");
        Lexicon {
            topic_words,
            filler,
            entities,
            summaries,
            basis,
        }
    }

    fn image(&self, cfg: &SynthConfig, topic: usize, rng: &mut RngState) -> Vec<f64> {
        let mut z = rng.normal_vec(LATENT_DIM, cfg.topic_jitter);
        z[topic] += 1.0;
        (0..cfg.d_raw)
            .map(|r| {
                crate::numerics::dot(self.basis.row(r), &z) + cfg.image_noise * rng.normal()
            })
            .collect()
    }
}

fn other_topic(rng: &mut RngState, topics: usize, not: usize) -> usize {
    (not + 1 + rng.below(topics - 1)) % topics
}

fn balanced_labels(n: usize, rng: &mut RngState) -> Vec<u8> {
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
    rng.shuffle(&mut labels);
    labels
}

fn generate_split(
    cfg: &SynthConfig,
    lex: &Lexicon,
    n: usize,
    split: Split,
    rng: &mut RngState,
) -> Vec<NewsItem> {
    let labels = balanced_labels(n, rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let topic = rng.below(cfg.topics);
            let len = cfg.min_text_len + rng.below(cfg.max_text_len - cfg.min_text_len + 1);
            let mut words: Vec<String> = (0..len)
                .map(|_| {
                    let pool = if rng.uniform() < cfg.topic_word_rate {
                        &lex.topic_words[topic]
                    } else {
                        &lex.filler
                    };
                    pick(rng, pool).to_string()
                })
                .collect();

            let fake = label == 1;
            let entity_topic = if fake { other_topic(rng, cfg.topics, topic) } else { topic };
            let image_topic = if fake { other_topic(rng, cfg.topics, topic) } else { topic };
            let mentions = 1 + rng.below(3);
            let mut order: Vec<usize> = (0..cfg.entities_per_topic).collect();
            rng.shuffle(&mut order);
            let chosen = &order[..mentions];
            let mut entities = Vec::new();
            let mut descs = Vec::new();
            for &e in chosen {
                let title = lex.entities[entity_topic][e].clone();
                let at = rng.below(words.len() + 1);
                words.insert(at, title.clone());
                let summary = &lex.summaries[entity_topic][e];
                let first = summary.split_inclusive(". ").next().unwrap_or(summary).trim_end();
                descs.push(first.to_string());
                entities.push(title);
            }
            let mut text = words.join(" ");
            text.push('.');
            NewsItem {
                id: format!("{split}-{i:05}"),
                text,
                image_vec: lex.image(cfg, image_topic, rng),
                entities: Some(entities),
                desc_sentences: Some(descs),
                label,
            }
        })
        .collect()
}

/// Deterministic in `cfg`, including its seed.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let root = RngState::new(cfg.seed);
    let lex = Lexicon::build(cfg, &mut root.split(0));
    let provenance = Provenance::Synthetic {
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    let train = generate_split(cfg, &lex, cfg.n_train, Split::Train, &mut root.split(1));
    let test = generate_split(cfg, &lex, cfg.n_test, Split::Test, &mut root.split(2));
    let gazetteer = lex.entities.iter().flatten().cloned().collect();
    let fixtures = lex
        .entities
        .iter()
        .flatten()
        .zip(lex.summaries.iter().flatten())
        .map(|(t, s)| (t.clone(), s.clone()))
        .collect();
    Ok(SynthOutput {
        train: Dataset::new(train, Split::Train, provenance.clone())?,
        test: Dataset::new(test, Split::Test, provenance)?,
        gazetteer,
        fixtures,
        topic_words: lex.topic_words,
        image_basis: lex.basis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrich::first_sentence;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 101,
            n_test: 40,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.fixtures, b.fixtures);
        let c = synth_generate(&SynthConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(a.train.items, c.train.items);
    }

    #[test]
    fn labels_are_balanced() {
        let out = synth_generate(&small()).unwrap();
        for ds in [&out.train, &out.test] {
            let fake = ds.items.iter().filter(|x| x.label == 1).count();
            let real = ds.len() - fake;
            assert!(real.abs_diff(fake) as f64 <= (0.01 * ds.len() as f64).max(1.0));
        }
    }

    #[test]
    fn descriptions_are_first_sentences_of_fixtures() {
        let out = synth_generate(&small()).unwrap();
        let fixtures: std::collections::HashMap<_, _> = out.fixtures.iter().cloned().collect();
        for item in &out.train.items {
            let ents = item.entities.as_ref().unwrap();
            assert!((1..=3).contains(&ents.len()));
            for (t, s) in ents.iter().zip(item.descriptions()) {
                assert!(item.text.contains(t.as_str()));
                assert_eq!(&first_sentence(&fixtures[t]).unwrap(), s);
            }
        }
    }

    #[test]
    fn rejects_tiny_splits() {
        assert!(synth_generate(&SynthConfig { n_test: 5, ..small() }).is_err());
    }
}
