//! Diacritic handling for tonal Latin-script orthographies: normalization,
//! stripping, seeded stochastic corruption, and a frequency-lookup
//! restoration baseline with metrics.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Tonal combining marks: grave (low), acute (high), macron (mid).
pub const TONAL_MARKS: [char; 3] = ['\u{0300}', '\u{0301}', '\u{0304}'];
/// Structural combining marks: dot below.
pub const STRUCTURAL_MARKS: [char; 1] = ['\u{0323}'];

pub fn is_tonal_mark(c: char) -> bool {
    TONAL_MARKS.contains(&c)
}

pub fn is_structural_mark(c: char) -> bool {
    STRUCTURAL_MARKS.contains(&c)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiacriticError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("token counts differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("malformed restorer line {0}")]
    MalformedRestorerLine(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalForm {
    Nfc,
    Nfd,
}

/// Canonical Unicode normalization; idempotent.
pub fn normalize(text: &str, form: NormalForm) -> String {
    match form {
        NormalForm::Nfc => text.nfc().collect(),
        NormalForm::Nfd => text.nfd().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripMode {
    /// Delete tonal marks only.
    Tonal,
    /// Delete tonal and structural marks.
    All,
}

/// Decomposes, deletes the selected marks, recomposes to NFC.
pub fn strip(text: &str, mode: StripMode) -> String {
    text.nfd()
        .filter(|&c| {
            !(is_tonal_mark(c) || (mode == StripMode::All && is_structural_mark(c)))
        })
        .collect::<String>()
        .nfc()
        .collect()
}

/// Stochastically corrupts tonal marks: with `p_remove` a mark is deleted,
/// otherwise with `p_replace` it is swapped for one of the other two tonal
/// marks uniformly at random. Deterministic given (text, parameters, seed):
/// the generator is keyed by (seed, global mark index).
pub fn corrupt(text: &str, p_remove: f64, p_replace: f64, seed: u64) -> String {
    let mut out = String::with_capacity(text.len());
    let mut mark_index = 0u64;
    for c in text.nfd() {
        if is_tonal_mark(c) {
            let mut rng = mark_rng(seed, mark_index);
            mark_index += 1;
            let u1: f64 = rng.gen();
            if u1 < p_remove {
                continue;
            }
            let u2: f64 = rng.gen();
            if u2 < p_replace {
                let others: Vec<char> =
                    TONAL_MARKS.iter().copied().filter(|&m| m != c).collect();
                out.push(others[rng.gen_range(0..others.len())]);
                continue;
            }
        }
        out.push(c);
    }
    out.nfc().collect()
}

fn mark_rng(seed: u64, mark_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mark_index);
    rng
}

/// Frequency lookup from fully stripped word forms to their most common
/// diacritized surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restorer {
    mapping: HashMap<String, String>,
    pub training_tokens: u64,
}

impl Restorer {
    pub fn lookup(&self, stripped: &str) -> Option<&str> {
        self.mapping.get(stripped).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// TSV: stripped<TAB>restored<TAB>count (count recorded for audit).
    pub fn to_tsv(&self, counts: Option<&HashMap<String, u64>>) -> String {
        let mut rows: Vec<(&String, &String)> = self.mapping.iter().collect();
        rows.sort();
        let mut out = String::new();
        for (key, value) in rows {
            let count = counts.and_then(|c| c.get(value)).copied().unwrap_or(0);
            out.push_str(&format!("{key}\t{value}\t{count}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Restorer, DiacriticError> {
        let mut mapping = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next()) {
                (Some(key), Some(value)) => {
                    mapping.insert(key.to_string(), value.to_string());
                }
                _ => return Err(DiacriticError::MalformedRestorerLine(lineno + 1)),
            }
        }
        Ok(Restorer {
            mapping,
            training_tokens: 0,
        })
    }
}

/// Builds a restorer from a diacritized token stream. For every stripped
/// form, the most frequent surface wins; ties go to the lexicographically
/// smallest surface.
pub fn train_restorer<'a>(
    tokens: impl IntoIterator<Item = &'a str>,
) -> Result<(Restorer, HashMap<String, u64>), DiacriticError> {
    let mut counts: HashMap<String, HashMap<String, u64>> = HashMap::new();
    let mut total = 0u64;
    for token in tokens {
        let token: String = token.nfc().collect();
        let key = strip(&token, StripMode::All);
        *counts.entry(key).or_default().entry(token).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(DiacriticError::EmptyCorpus);
    }
    let mut mapping = HashMap::new();
    let mut surface_counts = HashMap::new();
    for (key, surfaces) in counts {
        let best = surfaces
            .iter()
            .max_by(|(sa, ca), (sb, cb)| ca.cmp(cb).then_with(|| sb.cmp(sa)))
            .map(|(s, c)| (s.clone(), *c))
            .expect("at least one surface per key");
        surface_counts.insert(best.0.clone(), best.1);
        mapping.insert(key, best.0);
    }
    Ok((
        Restorer {
            mapping,
            training_tokens: total,
        },
        surface_counts,
    ))
}

/// Replaces each whitespace word by its restorer entry when the fully
/// stripped form is known; unknown words pass through unchanged.
pub fn restore(text: &str, restorer: &Restorer) -> String {
    text.split_whitespace()
        .map(|word| {
            let key = strip(&word.nfc().collect::<String>(), StripMode::All);
            restorer.lookup(&key).unwrap_or(word).to_string()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Word accuracy plus micro-averaged diacritic precision/recall over
/// (base-character position, mark) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestorationMetrics {
    pub word_accuracy: f64,
    pub diacritic_precision: f64,
    pub diacritic_recall: f64,
}

fn mark_pairs(word: &str) -> Vec<(usize, char)> {
    let mut pairs = Vec::new();
    let mut base_index = 0usize;
    let mut started = false;
    for c in word.nfd() {
        if is_tonal_mark(c) || is_structural_mark(c) {
            pairs.push((base_index, c));
        } else {
            if started {
                base_index += 1;
            }
            started = true;
        }
    }
    pairs
}

pub fn restoration_metrics(
    reference: &[String],
    hypothesis: &[String],
) -> Result<RestorationMetrics, DiacriticError> {
    if reference.len() != hypothesis.len() {
        return Err(DiacriticError::LengthMismatch(
            reference.len(),
            hypothesis.len(),
        ));
    }
    let mut exact = 0usize;
    let (mut tp, mut ref_marks, mut hyp_marks) = (0usize, 0usize, 0usize);
    for (r, h) in reference.iter().zip(hypothesis) {
        let r: String = r.nfc().collect();
        let h: String = h.nfc().collect();
        if r == h {
            exact += 1;
        }
        let mut rp = mark_pairs(&r);
        let hp = mark_pairs(&h);
        ref_marks += rp.len();
        hyp_marks += hp.len();
        for pair in &hp {
            if let Some(pos) = rp.iter().position(|p| p == pair) {
                rp.swap_remove(pos);
                tp += 1;
            }
        }
    }
    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    Ok(RestorationMetrics {
        word_accuracy: ratio(exact, reference.len().max(1)),
        diacritic_precision: ratio(tp, hyp_marks),
        diacritic_recall: ratio(tp, ref_marks),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_composes() {
        assert_eq!(normalize("e\u{0301}", NormalForm::Nfc), "é");
        let text = "ọwọ́";
        assert_eq!(normalize(text, NormalForm::Nfc), normalize(&normalize(text, NormalForm::Nfc), NormalForm::Nfc));
    }

    #[test]
    fn nfd_then_nfc_equals_direct_nfc() {
        let text = "èdè ọwọ́ Ọpẹ wákàtí";
        let via_nfd = normalize(&normalize(text, NormalForm::Nfd), NormalForm::Nfc);
        assert_eq!(via_nfd, normalize(text, NormalForm::Nfc));
    }

    #[test]
    fn strip_owo_family() {
        for word in ["owó", "owò", "òwò", "ọwọ̀", "ọwọ́", "ọ̀wọ"] {
            assert_eq!(strip(word, StripMode::All), "owo", "word {word}");
        }
    }

    #[test]
    fn strip_tonal_keeps_dot_below() {
        assert_eq!(strip("ọwọ́", StripMode::Tonal), "ọwọ");
    }

    #[test]
    fn strip_plain_text_unchanged() {
        assert_eq!(strip("plain text", StripMode::All), "plain text");
    }

    #[test]
    fn strip_is_idempotent() {
        for mode in [StripMode::Tonal, StripMode::All] {
            let once = strip("ọ̀wọ́ èdè", mode);
            assert_eq!(strip(&once, mode), once);
        }
    }

    #[test]
    fn corrupt_zero_probability_is_identity() {
        let text = normalize("èdè ọwọ́", NormalForm::Nfc);
        assert_eq!(corrupt(&text, 0.0, 0.0, 42), text);
    }

    #[test]
    fn corrupt_full_removal_equals_tonal_strip() {
        let text = "èdè ọwọ́ wákàtí";
        assert_eq!(corrupt(text, 1.0, 0.0, 7), strip(text, StripMode::Tonal));
    }

    #[test]
    fn corrupt_is_seed_deterministic() {
        let text = "èdè ọwọ́ wákàtí ọjọ́";
        assert_eq!(corrupt(text, 0.3, 0.3, 99), corrupt(text, 0.3, 0.3, 99));
        assert_ne!(corrupt(text, 1.0, 0.0, 1), text);
    }

    #[test]
    fn corrupt_replacement_changes_mark_but_keeps_count() {
        let text = "è";
        let out = corrupt(text, 0.0, 1.0, 3);
        let marks: Vec<char> = out.nfd().filter(|&c| is_tonal_mark(c)).collect();
        assert_eq!(marks.len(), 1);
        assert_ne!(marks[0], '\u{0300}');
    }

    #[test]
    fn corrupt_preserves_tonal_stripped_form() {
        let text = "èdè ọwọ́ wákàtí";
        let out = corrupt(text, 0.3, 0.3, 5);
        assert_eq!(strip(&out, StripMode::Tonal), strip(text, StripMode::Tonal));
    }

    #[test]
    fn restorer_majority_vote() {
        let (r, _) = train_restorer(["èdè", "èdè", "edé"]).unwrap();
        assert_eq!(r.lookup("ede"), Some("èdè"));
    }

    #[test]
    fn restorer_tie_breaks_lexicographically() {
        let (r, _) = train_restorer(["àá", "áà"]).unwrap();
        let expected: String = "àá".nfc().collect();
        assert_eq!(r.lookup(&strip("àá", StripMode::All)), Some(expected.as_str()));
    }

    #[test]
    fn restorer_plain_corpus_is_identity() {
        let (r, _) = train_restorer(["abc", "de"]).unwrap();
        assert_eq!(restore("abc de", &r), "abc de");
    }

    #[test]
    fn restorer_empty_corpus_is_error() {
        assert_eq!(
            train_restorer(std::iter::empty()).map(|_| ()),
            Err(DiacriticError::EmptyCorpus)
        );
    }

    #[test]
    fn restore_applies_lookup_and_passes_unknown() {
        let (r, _) = train_restorer(["èdè", "èdè"]).unwrap();
        assert_eq!(restore("ede unknown", &r), "èdè unknown");
    }

    #[test]
    fn restorer_tsv_round_trip() {
        let (r, counts) = train_restorer(["èdè", "èdè", "ọwọ́"]).unwrap();
        let tsv = r.to_tsv(Some(&counts));
        let back = Restorer::from_tsv(&tsv).unwrap();
        assert_eq!(back.lookup("ede"), r.lookup("ede"));
        assert_eq!(back.lookup("owo"), r.lookup("owo"));
    }

    #[test]
    fn metrics_perfect() {
        let words = vec!["èdè".to_string(), "ọwọ́".to_string()];
        let m = restoration_metrics(&words, &words).unwrap();
        assert_eq!(m.word_accuracy, 1.0);
        assert_eq!(m.diacritic_precision, 1.0);
        assert_eq!(m.diacritic_recall, 1.0);
    }

    #[test]
    fn metrics_stripped_hypothesis_recall_zero() {
        let reference = vec!["èdè".to_string()];
        let hypothesis = vec![strip("èdè", StripMode::All)];
        let m = restoration_metrics(&reference, &hypothesis).unwrap();
        assert_eq!(m.diacritic_recall, 0.0);
        assert_eq!(m.word_accuracy, 0.0);
    }

    #[test]
    fn metrics_hand_checked_single_pair() {
        // "èdè" has marks {(0, grave), (2, grave)}; "édè" has
        // {(0, acute), (2, grave)} -> tp 1, precision 1/2, recall 1/2.
        let m = restoration_metrics(&["èdè".to_string()], &["édè".to_string()]).unwrap();
        assert_eq!(m.diacritic_precision, 0.5);
        assert_eq!(m.diacritic_recall, 0.5);
    }

    #[test]
    fn metrics_length_mismatch() {
        assert_eq!(
            restoration_metrics(&["a".to_string()], &[]),
            Err(DiacriticError::LengthMismatch(1, 0))
        );
    }
}
