//! Subword-vocabulary reduction: greedy longest-match tokenization,
//! per-group frequency counting, top-k selection, and UNK accounting.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Word-initial marker glyph (the SentencePiece convention).
pub const WORD_MARKER: char = '\u{2581}'; // ▁

pub const SPECIAL_TOKENS: [&str; 4] = ["<unk>", "<s>", "</s>", "<pad>"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("group {group:?} requests top-{k} but only {available} tokens have in-group frequency")]
    KExceedsVocab {
        group: String,
        k: usize,
        available: usize,
    },
    #[error("group {0:?} has k > 0 but no corpus text")]
    EmptyGroupCorpus(String),
}

/// Rank-ordered subword vocabulary; rank = list position. Specials are
/// always present and survive every transformation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordVocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    max_token_chars: usize,
}

impl SubwordVocab {
    /// Builds a vocabulary from rank-ordered tokens, prepending any
    /// missing special tokens and dropping duplicates.
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut ordered: Vec<String> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for special in SPECIAL_TOKENS {
            ordered.push(special.to_string());
            seen.insert(special.to_string());
        }
        for token in tokens {
            if seen.insert(token.clone()) {
                ordered.push(token);
            }
        }
        Self::from_ordered(ordered)
    }

    fn from_ordered(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let max_token_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        SubwordVocab {
            tokens,
            index,
            max_token_chars,
        }
    }

    /// One token per line, rank order.
    pub fn from_lines(text: &str) -> Self {
        SubwordVocab::new(
            text.lines()
                .map(str::trim_end)
                .filter(|l| !l.is_empty())
                .map(str::to_string),
        )
    }

    pub fn to_lines(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn rank(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// Greedy longest-prefix segmentation of whitespace-separated words.
/// Word-initial positions try marker-prefixed tokens first; a position
/// with no match emits `<unk>` and advances one character.
pub fn subword_tokenize(text: &str, vocab: &SubwordVocab) -> Vec<String> {
    let text: String = text.nfc().collect();
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut pos = 0usize;
        let mut word_initial = true;
        while pos < chars.len() {
            let remaining = chars.len() - pos;
            let mut matched = false;
            let max_len = remaining.min(vocab.max_token_chars.max(1));
            'lengths: for len in (1..=max_len).rev() {
                let piece: String = chars[pos..pos + len].iter().collect();
                if word_initial {
                    let marked: String = std::iter::once(WORD_MARKER).chain(piece.chars()).collect();
                    if vocab.contains(&marked) {
                        out.push(marked);
                        pos += len;
                        matched = true;
                        break 'lengths;
                    }
                }
                if vocab.contains(&piece) {
                    out.push(piece);
                    pos += len;
                    matched = true;
                    break 'lengths;
                }
            }
            if !matched {
                out.push("<unk>".to_string());
                pos += 1;
            }
            word_initial = false;
        }
    }
    out
}

/// Token frequencies over one or more corpora (lines of text); `<unk>`
/// emissions are counted like any other token.
pub fn count_subwords<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    vocab: &SubwordVocab,
) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for line in lines {
        for token in subword_tokenize(line, vocab) {
            *counts.entry(token).or_default() += 1;
        }
    }
    counts
}

/// One corpus group with its top-k budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    /// Corpus text, one sentence per line (possibly concatenated files).
    pub corpus: String,
    pub top_k: usize,
}

/// Reduction plan: per-group budgets plus the head of the original ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub groups: Vec<Group>,
    /// Number of tokens taken from the front of the original vocabulary.
    pub extra_top_m: usize,
}

/// Reduces a vocabulary to specials ∪ per-group top-k (by in-group
/// frequency, ties by original rank) ∪ the original head. Output keeps
/// the original rank order.
pub fn reduce_vocab(original: &SubwordVocab, spec: &GroupSpec) -> Result<SubwordVocab, VocabError> {
    let mut keep: HashSet<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    for group in &spec.groups {
        if group.top_k == 0 {
            continue;
        }
        if group.corpus.trim().is_empty() {
            return Err(VocabError::EmptyGroupCorpus(group.name.clone()));
        }
        let counts = count_subwords(group.corpus.lines(), original);
        let mut ranked: Vec<(&String, &u64)> = counts
            .iter()
            .filter(|(token, _)| original.contains(token))
            .collect();
        if group.top_k > ranked.len() {
            return Err(VocabError::KExceedsVocab {
                group: group.name.clone(),
                k: group.top_k,
                available: ranked.len(),
            });
        }
        ranked.sort_by(|a, b| {
            b.1.cmp(a.1)
                .then_with(|| original.rank(a.0).cmp(&original.rank(b.0)))
        });
        for (token, _) in ranked.into_iter().take(group.top_k) {
            keep.insert(token.clone());
        }
    }
    for token in original.tokens().iter().take(spec.extra_top_m) {
        keep.insert(token.clone());
    }
    let ordered = original
        .tokens()
        .iter()
        .filter(|t| keep.contains(*t))
        .cloned();
    Ok(SubwordVocab::new(ordered))
}

/// UNK count and coverage of a vocabulary on a test corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub unk_count: u64,
    pub total_tokens: u64,
    pub covered_pct: f64,
}

pub fn coverage_stats<'a>(
    vocab: &SubwordVocab,
    test_lines: impl IntoIterator<Item = &'a str>,
) -> CoverageStats {
    let mut unk = 0u64;
    let mut total = 0u64;
    for line in test_lines {
        for token in subword_tokenize(line, vocab) {
            total += 1;
            if token == "<unk>" {
                unk += 1;
            }
        }
    }
    let covered_pct = if total > 0 {
        100.0 * (1.0 - unk as f64 / total as f64)
    } else {
        100.0
    };
    CoverageStats {
        unk_count: unk,
        total_tokens: total,
        covered_pct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(tokens: &[&str]) -> SubwordVocab {
        SubwordVocab::new(tokens.iter().map(|t| t.to_string()))
    }

    #[test]
    fn specials_always_present() {
        let v = vocab(&[]);
        for special in SPECIAL_TOKENS {
            assert!(v.contains(special));
        }
    }

    #[test]
    fn tokenize_whole_word_in_vocab() {
        let v = vocab(&["▁hello"]);
        assert_eq!(subword_tokenize("hello", &v), vec!["▁hello"]);
    }

    #[test]
    fn tokenize_empty_text() {
        let v = vocab(&["▁a"]);
        assert!(subword_tokenize("", &v).is_empty());
    }

    #[test]
    fn tokenize_longest_first() {
        // "abc" with {▁ab, c, ▁a, bc} -> [▁ab, c].
        let v = vocab(&["▁ab", "c", "▁a", "bc"]);
        assert_eq!(subword_tokenize("abc", &v), vec!["▁ab", "c"]);
    }

    #[test]
    fn tokenize_unknown_char_emits_unk() {
        let v = vocab(&["▁a"]);
        assert_eq!(subword_tokenize("ax", &v), vec!["▁a", "<unk>"]);
    }

    #[test]
    fn tokenize_is_total() {
        let v = vocab(&[]);
        assert_eq!(subword_tokenize("xy z", &v), vec!["<unk>"; 3]);
    }

    #[test]
    fn count_fixture_matches_recount() {
        let v = vocab(&["▁a", "▁b", "b"]);
        let counts = count_subwords(["a b", "a a"], &v);
        assert_eq!(counts["▁a"], 3);
        assert_eq!(counts["▁b"], 1);
        assert_eq!(counts.get("b"), None);
    }

    #[test]
    fn count_empty_corpus() {
        let v = vocab(&["▁a"]);
        assert!(count_subwords(std::iter::empty::<&str>(), &v).is_empty());
    }

    #[test]
    fn reduce_saturating_k_keeps_all_group_tokens() {
        let original = vocab(&["▁a", "▁b", "▁c"]);
        let spec = GroupSpec {
            groups: vec![Group {
                name: "g".into(),
                corpus: "a b\nb c".into(),
                top_k: 3,
            }],
            extra_top_m: 0,
        };
        let reduced = reduce_vocab(&original, &spec).unwrap();
        for t in ["▁a", "▁b", "▁c"] {
            assert!(reduced.contains(t));
        }
        assert!(reduced.tokens().iter().all(|t| original.contains(t)));
    }

    #[test]
    fn reduce_disjoint_groups_union_arithmetic() {
        let original = vocab(&["▁a", "▁b", "▁c", "▁p", "▁q", "▁r", "▁s"]);
        let spec = GroupSpec {
            groups: vec![
                Group {
                    name: "g1".into(),
                    corpus: "a b c\na b c".into(),
                    top_k: 3,
                },
                Group {
                    name: "g2".into(),
                    corpus: "p q r s".into(),
                    top_k: 4,
                },
            ],
            extra_top_m: 0,
        };
        let reduced = reduce_vocab(&original, &spec).unwrap();
        assert_eq!(reduced.len(), 7 + SPECIAL_TOKENS.len());
    }

    #[test]
    fn reduce_keeps_original_rank_order() {
        let original = vocab(&["▁b", "▁a"]);
        let spec = GroupSpec {
            groups: vec![Group {
                name: "g".into(),
                corpus: "a a a b".into(),
                top_k: 2,
            }],
            extra_top_m: 0,
        };
        let reduced = reduce_vocab(&original, &spec).unwrap();
        assert!(reduced.rank("▁b").unwrap() < reduced.rank("▁a").unwrap());
    }

    #[test]
    fn reduce_k_exceeds_available() {
        let original = vocab(&["▁a"]);
        let spec = GroupSpec {
            groups: vec![Group {
                name: "g".into(),
                corpus: "a".into(),
                top_k: 5,
            }],
            extra_top_m: 0,
        };
        assert!(matches!(
            reduce_vocab(&original, &spec),
            Err(VocabError::KExceedsVocab { .. })
        ));
    }

    #[test]
    fn reduce_includes_original_head() {
        let original = SubwordVocab::new(["▁x", "▁y"].map(str::to_string));
        let spec = GroupSpec {
            groups: vec![],
            extra_top_m: SPECIAL_TOKENS.len() + 1, // specials + ▁x
        };
        let reduced = reduce_vocab(&original, &spec).unwrap();
        assert!(reduced.contains("▁x"));
        assert!(!reduced.contains("▁y"));
    }

    #[test]
    fn coverage_char_vocab_has_no_unk() {
        let v = vocab(&["▁a", "▁b", "a", "b"]);
        let stats = coverage_stats(&v, ["ab ba", "aa"]);
        assert_eq!(stats.unk_count, 0);
        assert_eq!(stats.covered_pct, 100.0);
    }

    #[test]
    fn coverage_missing_script_yields_unks() {
        let v = vocab(&["▁a"]);
        let stats = coverage_stats(&v, ["α β"]);
        assert!(stats.unk_count >= 2);
    }

    #[test]
    fn unk_monotone_under_shrinkage() {
        let big = vocab(&["▁ab", "▁a", "b", "c"]);
        let small = vocab(&["▁a", "b"]);
        let lines = ["ab c", "abc ab"];
        let unk_big = coverage_stats(&big, lines).unk_count;
        let unk_small = coverage_stats(&small, lines).unk_count;
        assert!(unk_small >= unk_big);
    }

    #[test]
    fn lines_round_trip() {
        let v = vocab(&["▁a", "▁b"]);
        let back = SubwordVocab::from_lines(&v.to_lines());
        assert_eq!(back.tokens(), v.tokens());
    }
}
