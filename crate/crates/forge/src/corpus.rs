//! Core data model for tokenized, IOB2-tagged corpora and CoNLL-style I/O.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four entity classes used throughout the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityClass {
    Per,
    Loc,
    Org,
    Date,
}

impl EntityClass {
    pub const ALL: [EntityClass; 4] = [
        EntityClass::Per,
        EntityClass::Loc,
        EntityClass::Org,
        EntityClass::Date,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityClass::Per => "PER",
            EntityClass::Loc => "LOC",
            EntityClass::Org => "ORG",
            EntityClass::Date => "DATE",
        }
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityClass {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PER" => Ok(EntityClass::Per),
            "LOC" => Ok(EntityClass::Loc),
            "ORG" => Ok(EntityClass::Org),
            "DATE" => Ok(EntityClass::Date),
            _ => Err(CorpusError::UnknownClass(s.to_string())),
        }
    }
}

/// IOB2 tag: `O` or `B-`/`I-` plus one of the four classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Outside,
    Begin(EntityClass),
    Inside(EntityClass),
}

impl Tag {
    pub fn class(&self) -> Option<EntityClass> {
        match self {
            Tag::Outside => None,
            Tag::Begin(c) | Tag::Inside(c) => Some(*c),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(c) => write!(f, "B-{c}"),
            Tag::Inside(c) => write!(f, "I-{c}"),
        }
    }
}

impl FromStr for Tag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        if let Some(class) = s.strip_prefix("B-") {
            return Ok(Tag::Begin(class.parse()?));
        }
        if let Some(class) = s.strip_prefix("I-") {
            return Ok(Tag::Inside(class.parse()?));
        }
        Err(CorpusError::UnknownTag(s.to_string()))
    }
}

/// A contiguous entity mention: `[start, end)` token indices plus its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub class: EntityClass,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, class: EntityClass) -> Self {
        EntitySpan { start, end, class }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A tokenized sentence with one IOB2 tag per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    tokens: Vec<String>,
    tags: Vec<Tag>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("unknown entity class {0:?}")]
    UnknownClass(String),
    #[error("I-{class} at line {line} has no preceding B-{class} or I-{class}")]
    OrphanInsideTag { class: EntityClass, line: usize },
    #[error("empty token at line {0}")]
    EmptyToken(usize),
    #[error("token {0:?} contains whitespace")]
    TokenHasWhitespace(String),
    #[error("tokens and tags have different lengths ({tokens} vs {tags})")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("sentence is empty")]
    EmptySentence,
    #[error("missing tag column at line {0}")]
    MalformedLine(usize),
    #[error("spans overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingSpans(usize, usize, usize, usize),
    #[error("span [{start}, {end}) out of range for sentence length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
}

impl TaggedSentence {
    /// Builds a sentence, validating lengths and IOB2 well-formedness.
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>) -> Result<Self, CorpusError> {
        if tokens.len() != tags.len() {
            return Err(CorpusError::LengthMismatch {
                tokens: tokens.len(),
                tags: tags.len(),
            });
        }
        if tokens.is_empty() {
            return Err(CorpusError::EmptySentence);
        }
        for tok in &tokens {
            if tok.is_empty() {
                return Err(CorpusError::EmptyToken(0));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(CorpusError::TokenHasWhitespace(tok.clone()));
            }
        }
        validate_iob2(&tags)?;
        Ok(TaggedSentence { tokens, tags })
    }

    /// All-O sentence over the given tokens.
    pub fn untagged(tokens: Vec<String>) -> Result<Self, CorpusError> {
        let tags = vec![Tag::Outside; tokens.len()];
        TaggedSentence::new(tokens, tags)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Maximal same-class B/I runs as spans, sorted by start.
    pub fn spans(&self) -> Vec<EntitySpan> {
        spans_of(&self.tags)
    }
}

fn validate_iob2(tags: &[Tag]) -> Result<(), CorpusError> {
    for (i, tag) in tags.iter().enumerate() {
        if let Tag::Inside(class) = tag {
            let ok = i > 0
                && match tags[i - 1] {
                    Tag::Begin(p) | Tag::Inside(p) => p == *class,
                    Tag::Outside => false,
                };
            if !ok {
                return Err(CorpusError::OrphanInsideTag {
                    class: *class,
                    line: i,
                });
            }
        }
    }
    Ok(())
}

/// Span view of an IOB2 tag sequence.
pub fn spans_of(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut current: Option<EntitySpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Begin(class) => {
                if let Some(span) = current.take() {
                    spans.push(span);
                }
                current = Some(EntitySpan::new(i, i + 1, *class));
            }
            Tag::Inside(_) => {
                if let Some(span) = current.as_mut() {
                    span.end = i + 1;
                }
            }
            Tag::Outside => {
                if let Some(span) = current.take() {
                    spans.push(span);
                }
            }
        }
    }
    if let Some(span) = current {
        spans.push(span);
    }
    spans
}

/// Inverse of [`spans_of`]: rebuilds an IOB2 tag sequence from spans.
pub fn tags_from(spans: &[EntitySpan], length: usize) -> Result<Vec<Tag>, CorpusError> {
    let mut sorted: Vec<EntitySpan> = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut tags = vec![Tag::Outside; length];
    let mut prev_end = 0usize;
    let mut prev: Option<EntitySpan> = None;
    for span in &sorted {
        if span.start >= span.end || span.end > length {
            return Err(CorpusError::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len: length,
            });
        }
        if let Some(p) = prev {
            if span.start < prev_end {
                return Err(CorpusError::OverlappingSpans(
                    p.start, p.end, span.start, span.end,
                ));
            }
        }
        tags[span.start] = Tag::Begin(span.class);
        for tag in tags.iter_mut().take(span.end).skip(span.start + 1) {
            *tag = Tag::Inside(span.class);
        }
        prev_end = span.end;
        prev = Some(*span);
    }
    Ok(tags)
}

/// A named collection of tagged sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub sentences: Vec<TaggedSentence>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, sentences: Vec<TaggedSentence>) -> Self {
        Corpus {
            name: name.into(),
            sentences,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.sentences.iter().map(TaggedSentence::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    /// Rewrites orphan I-X tags to B-X.
    Repair,
}

/// Parses two-column CoNLL text ("token<TAB or SPACE>tag", blank-line
/// sentence separator, `#` comment lines ignored).
pub fn parse_conll(text: &str, mode: ParseMode) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<Tag>| -> Result<(), CorpusError> {
        if !tokens.is_empty() {
            sentences.push(TaggedSentence::new(
                std::mem::take(tokens),
                std::mem::take(tags),
            )?);
        }
        Ok(())
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (token, tag_str) = split_columns(line).ok_or(CorpusError::MalformedLine(lineno + 1))?;
        if token.is_empty() {
            return Err(CorpusError::EmptyToken(lineno + 1));
        }
        let mut tag: Tag = tag_str.parse()?;
        if let Tag::Inside(class) = tag {
            let orphan = match tags.last() {
                Some(Tag::Begin(p)) | Some(Tag::Inside(p)) => *p != class,
                _ => true,
            };
            if orphan {
                match mode {
                    ParseMode::Repair => tag = Tag::Begin(class),
                    ParseMode::Strict => {
                        return Err(CorpusError::OrphanInsideTag {
                            class,
                            line: lineno + 1,
                        })
                    }
                }
            }
        }
        tokens.push(token.to_string());
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags)?;
    Ok(Corpus::new("", sentences))
}

fn split_columns(line: &str) -> Option<(&str, &str)> {
    if let Some((token, rest)) = line.split_once('\t') {
        return Some((token, rest.trim()));
    }
    let (token, rest) = line.split_once(' ')?;
    Some((token, rest.trim()))
}

/// Serializes a corpus to CoNLL text; round-trips through [`parse_conll`].
pub fn write_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for (token, tag) in sentence.tokens().iter().zip(sentence.tags()) {
            out.push_str(token);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Corpus-level counts in the style of a corpus statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub per_class: Vec<(EntityClass, usize)>,
    pub n_spans: usize,
    pub entity_token_pct: f64,
}

/// Sentence/token/entity counts and the percentage of tokens inside a span.
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    let n_tokens = corpus.n_tokens();
    if n_tokens == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut per_class: Vec<(EntityClass, usize)> =
        EntityClass::ALL.iter().map(|c| (*c, 0)).collect();
    let mut n_spans = 0usize;
    let mut entity_tokens = 0usize;
    for sentence in &corpus.sentences {
        for span in sentence.spans() {
            n_spans += 1;
            entity_tokens += span.len();
            let slot = per_class
                .iter_mut()
                .find(|(c, _)| *c == span.class)
                .expect("all classes enumerated");
            slot.1 += 1;
        }
    }
    Ok(CorpusStats {
        n_sentences: corpus.sentences.len(),
        n_tokens,
        per_class,
        n_spans,
        entity_token_pct: 100.0 * entity_tokens as f64 / n_tokens as f64,
    })
}
