//! Inter-annotator agreement (Fleiss' kappa at token and entity level),
//! annotator confusion counts, and automatic quality-control flags.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, EntityClass, EntitySpan, TaggedSentence};
use crate::noise::TokenClass;

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("need at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("need at least 1 item")]
    NoItems,
    #[error("annotators are misaligned: {0}")]
    Misaligned(String),
    #[error("all ratings fall in a single category but observed agreement is not perfect")]
    DegenerateAgreement,
}

/// Aligned annotations from k >= 2 annotators over the same token stream.
#[derive(Debug, Clone)]
pub struct AnnotationSet {
    annotators: Vec<Corpus>,
}

impl AnnotationSet {
    pub fn new(annotators: Vec<Corpus>) -> Result<Self, AgreementError> {
        if annotators.len() < 2 {
            return Err(AgreementError::TooFewAnnotators(annotators.len()));
        }
        let first = &annotators[0];
        for (a, corpus) in annotators.iter().enumerate().skip(1) {
            if corpus.sentences.len() != first.sentences.len() {
                return Err(AgreementError::Misaligned(format!(
                    "annotator {a} has {} sentences, expected {}",
                    corpus.sentences.len(),
                    first.sentences.len()
                )));
            }
            for (i, (s, f)) in corpus.sentences.iter().zip(&first.sentences).enumerate() {
                if s.tokens() != f.tokens() {
                    return Err(AgreementError::Misaligned(format!(
                        "annotator {a} differs in token text at sentence {i}"
                    )));
                }
            }
        }
        Ok(AnnotationSet { annotators })
    }

    pub fn n_annotators(&self) -> usize {
        self.annotators.len()
    }

    pub fn annotators(&self) -> &[Corpus] {
        &self.annotators
    }

    /// Token items: per token, each annotator's 5-way class rating.
    fn token_items(&self) -> Vec<Vec<usize>> {
        let mut items = Vec::new();
        let n_sentences = self.annotators[0].sentences.len();
        for si in 0..n_sentences {
            let len = self.annotators[0].sentences[si].len();
            for ti in 0..len {
                let ratings = self
                    .annotators
                    .iter()
                    .map(|c| TokenClass::from_tag(&c.sentences[si].tags()[ti]).index())
                    .collect();
                items.push(ratings);
            }
        }
        items
    }

    /// Entity items: the union of all proposed (sentence, span) triples.
    /// Category 0..4 = entity class, 4 = "not marked" for annotators that
    /// did not propose that exact span.
    fn entity_items(&self) -> Vec<Vec<usize>> {
        const NOT_MARKED: usize = 4;
        let mut keys: Vec<(usize, usize, usize)> = Vec::new();
        let mut per_annotator: Vec<HashMap<(usize, usize, usize), usize>> = Vec::new();
        for corpus in &self.annotators {
            let mut map = HashMap::new();
            for (si, sentence) in corpus.sentences.iter().enumerate() {
                for span in sentence.spans() {
                    let key = (si, span.start, span.end);
                    map.insert(key, class_index(span.class));
                    keys.push(key);
                }
            }
            per_annotator.push(map);
        }
        keys.sort_unstable();
        keys.dedup();
        keys.iter()
            .map(|key| {
                per_annotator
                    .iter()
                    .map(|map| map.get(key).copied().unwrap_or(NOT_MARKED))
                    .collect()
            })
            .collect()
    }
}

fn class_index(class: EntityClass) -> usize {
    match class {
        EntityClass::Per => 0,
        EntityClass::Loc => 1,
        EntityClass::Org => 2,
        EntityClass::Date => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Token,
    Entity,
}

/// Fleiss' kappa over categorical items rated by a fixed number of raters.
/// `items[i][r]` is rater r's category index for item i.
pub fn fleiss_kappa_from_items(
    items: &[Vec<usize>],
    n_categories: usize,
) -> Result<f64, AgreementError> {
    if items.is_empty() {
        return Err(AgreementError::NoItems);
    }
    let n_raters = items[0].len();
    if n_raters < 2 {
        return Err(AgreementError::TooFewAnnotators(n_raters));
    }
    let n_items = items.len() as f64;
    let n = n_raters as f64;
    let mut category_totals = vec![0.0f64; n_categories];
    let mut p_bar = 0.0f64;
    for ratings in items {
        let mut counts = vec![0usize; n_categories];
        for &r in ratings {
            counts[r] += 1;
        }
        let sum_sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
        p_bar += (sum_sq - n) / (n * (n - 1.0));
        for (j, &c) in counts.iter().enumerate() {
            category_totals[j] += c as f64;
        }
    }
    p_bar /= n_items;
    let p_e: f64 = category_totals
        .iter()
        .map(|&t| {
            let p = t / (n_items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        if (p_bar - 1.0).abs() < 1e-15 {
            return Ok(1.0);
        }
        return Err(AgreementError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa over an annotation set at token or entity granularity.
pub fn fleiss_kappa(a: &AnnotationSet, granularity: Granularity) -> Result<f64, AgreementError> {
    let (items, n_categories) = match granularity {
        Granularity::Token => (a.token_items(), 5),
        Granularity::Entity => (a.entity_items(), 5),
    };
    fleiss_kappa_from_items(&items, n_categories)
}

/// Symmetric entity-level class-pair counts over all annotator pairs.
/// Index 0..3 = PER/LOC/ORG/DATE, 4 = "not marked".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub labels: Vec<String>,
    pub counts: [[u64; 5]; 5],
}

pub fn annotator_confusion(a: &AnnotationSet) -> Result<ConfusionCounts, AgreementError> {
    let items = a.entity_items();
    let mut counts = [[0u64; 5]; 5];
    for ratings in &items {
        for i in 0..ratings.len() {
            for j in (i + 1)..ratings.len() {
                let (lo, hi) = if ratings[i] <= ratings[j] {
                    (ratings[i], ratings[j])
                } else {
                    (ratings[j], ratings[i])
                };
                counts[lo][hi] += 1;
                if lo != hi {
                    counts[hi][lo] += 1;
                }
            }
        }
    }
    Ok(ConfusionCounts {
        labels: vec![
            "PER".into(),
            "LOC".into(),
            "ORG".into(),
            "DATE".into(),
            "not-marked".into(),
        ],
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagKind {
    FrequentEntityUnmarked,
    TypeEntropy,
    ShortSentence,
    AbbreviationFinal,
}

/// One quality-control finding with its location and evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub kind: FlagKind,
    pub sentence: usize,
    pub token: Option<usize>,
    pub evidence: String,
}

/// Thresholds for [`qc_flags`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcConfig {
    /// Minimum occurrences of a surface before frequency flags apply.
    pub min_occurrences: usize,
    /// Minimum entity fraction for frequent-entity-unmarked.
    pub entity_fraction: f64,
    /// Entropy threshold in nats for type-entropy flags.
    pub entropy_nats: f64,
    /// Sentences shorter than this token count are flagged.
    pub min_sentence_len: usize,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            min_occurrences: 5,
            entity_fraction: 0.9,
            entropy_nats: 0.1,
            min_sentence_len: 3,
        }
    }
}

struct TokenStats {
    total: usize,
    entity: usize,
    per_type: BTreeMap<EntityClass, usize>,
}

fn entropy_nats(counts: impl Iterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p.ln()
        })
        .sum::<f64>()
}

fn looks_like_abbreviation(token: &str) -> bool {
    token.ends_with('.')
        && token.chars().filter(|c| c.is_alphabetic()).count() <= 4
        && token.chars().any(|c| c.is_uppercase())
}

/// Scans a corpus for likely annotation and segmentation errors.
pub fn qc_flags(corpus: &Corpus, cfg: &QcConfig) -> Vec<Flag> {
    let mut stats: HashMap<&str, TokenStats> = HashMap::new();
    for sentence in &corpus.sentences {
        let classes = token_classes(sentence);
        for (token, class) in sentence.tokens().iter().zip(&classes) {
            let entry = stats.entry(token.as_str()).or_insert(TokenStats {
                total: 0,
                entity: 0,
                per_type: BTreeMap::new(),
            });
            entry.total += 1;
            if let Some(c) = class {
                entry.entity += 1;
                *entry.per_type.entry(*c).or_default() += 1;
            }
        }
    }

    let mut flags = Vec::new();
    for (si, sentence) in corpus.sentences.iter().enumerate() {
        if sentence.len() < cfg.min_sentence_len {
            flags.push(Flag {
                kind: FlagKind::ShortSentence,
                sentence: si,
                token: None,
                evidence: format!("{} tokens", sentence.len()),
            });
        }
        if let Some(last) = sentence.tokens().last() {
            if looks_like_abbreviation(last) {
                flags.push(Flag {
                    kind: FlagKind::AbbreviationFinal,
                    sentence: si,
                    token: Some(sentence.len() - 1),
                    evidence: last.clone(),
                });
            }
        }
        let classes = token_classes(sentence);
        for (ti, (token, class)) in sentence.tokens().iter().zip(&classes).enumerate() {
            let st = &stats[token.as_str()];
            if class.is_none()
                && st.total >= cfg.min_occurrences
                && st.entity as f64 / st.total as f64 >= cfg.entity_fraction
            {
                flags.push(Flag {
                    kind: FlagKind::FrequentEntityUnmarked,
                    sentence: si,
                    token: Some(ti),
                    evidence: format!(
                        "{token:?} is an entity in {}/{} occurrences but O here",
                        st.entity, st.total
                    ),
                });
            }
            if let Some(c) = class {
                // Leave this occurrence out; if the remaining type
                // distribution is near-deterministic and disagrees, flag.
                let mut rest = st.per_type.clone();
                *rest.get_mut(c).expect("counted above") -= 1;
                let rest_total: usize = rest.values().sum();
                if rest_total > 0 {
                    let h = entropy_nats(rest.values().copied());
                    let majority = rest
                        .iter()
                        .filter(|(_, &n)| n > 0)
                        .max_by_key(|(_, &n)| n)
                        .map(|(k, _)| *k);
                    if h < cfg.entropy_nats && majority.is_some() && majority != Some(*c) {
                        flags.push(Flag {
                            kind: FlagKind::TypeEntropy,
                            sentence: si,
                            token: Some(ti),
                            evidence: format!(
                                "{token:?} tagged {c} here but {} elsewhere",
                                majority.unwrap()
                            ),
                        });
                    }
                }
            }
        }
    }
    flags
}

fn token_classes(sentence: &TaggedSentence) -> Vec<Option<EntityClass>> {
    let mut classes = vec![None; sentence.len()];
    for EntitySpan { start, end, class } in sentence.spans() {
        for slot in classes.iter_mut().take(end).skip(start) {
            *slot = Some(class);
        }
    }
    classes
}
