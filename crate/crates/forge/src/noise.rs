//! Class-level confusion matrix between clean (gold) and noisy
//! (distantly supervised) labels: estimation, correction, quality report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tags_from, Corpus, EntityClass, Tag, TaggedSentence};
use crate::eval::{span_prf, EvalError, PrfReport};

/// Token-level class: one of the four entity classes or O.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenClass {
    Per,
    Loc,
    Org,
    Date,
    Outside,
}

impl TokenClass {
    pub const ALL: [TokenClass; 5] = [
        TokenClass::Per,
        TokenClass::Loc,
        TokenClass::Org,
        TokenClass::Date,
        TokenClass::Outside,
    ];

    pub fn index(&self) -> usize {
        match self {
            TokenClass::Per => 0,
            TokenClass::Loc => 1,
            TokenClass::Org => 2,
            TokenClass::Date => 3,
            TokenClass::Outside => 4,
        }
    }

    pub fn from_tag(tag: &Tag) -> TokenClass {
        match tag.class() {
            Some(EntityClass::Per) => TokenClass::Per,
            Some(EntityClass::Loc) => TokenClass::Loc,
            Some(EntityClass::Org) => TokenClass::Org,
            Some(EntityClass::Date) => TokenClass::Date,
            None => TokenClass::Outside,
        }
    }

    pub fn entity_class(&self) -> Option<EntityClass> {
        match self {
            TokenClass::Per => Some(EntityClass::Per),
            TokenClass::Loc => Some(EntityClass::Loc),
            TokenClass::Org => Some(EntityClass::Org),
            TokenClass::Date => Some(EntityClass::Date),
            TokenClass::Outside => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TokenClass::Outside => "O",
            other => other.entity_class().unwrap().as_str(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("corpora are misaligned: {0}")]
    Misaligned(String),
    #[error("input corpora are empty")]
    EmptyInput,
    #[error("invalid noise matrix: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Row-stochastic 5×5 matrix P(noisy | clean) plus clean-class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMatrix {
    pub classes: Vec<String>,
    pub matrix: [[f64; 5]; 5],
    pub priors: [f64; 5],
    pub alpha: f64,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl NoiseMatrix {
    pub fn validate(&self) -> Result<(), NoiseError> {
        for (i, row) in self.matrix.iter().enumerate() {
            if row.iter().any(|&p| p < 0.0) {
                return Err(NoiseError::InvalidMatrix(format!("negative entry in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(NoiseError::InvalidMatrix(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        let prior_sum: f64 = self.priors.iter().sum();
        if (prior_sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(NoiseError::InvalidMatrix(format!(
                "priors sum to {prior_sum}, expected 1"
            )));
        }
        Ok(())
    }
}

fn check_alignment(gold: &Corpus, noisy: &Corpus) -> Result<(), NoiseError> {
    if gold.sentences.len() != noisy.sentences.len() {
        return Err(NoiseError::Misaligned(format!(
            "sentence counts differ ({} vs {})",
            gold.sentences.len(),
            noisy.sentences.len()
        )));
    }
    for (i, (g, n)) in gold.sentences.iter().zip(&noisy.sentences).enumerate() {
        if g.tokens() != n.tokens() {
            return Err(NoiseError::Misaligned(format!(
                "token text differs in sentence {i}"
            )));
        }
    }
    Ok(())
}

/// Raw clean→noisy pair counts, one cell per (clean class, noisy class).
pub fn pair_counts(gold: &Corpus, noisy: &Corpus) -> Result<[[u64; 5]; 5], NoiseError> {
    check_alignment(gold, noisy)?;
    let mut counts = [[0u64; 5]; 5];
    for (g, n) in gold.sentences.iter().zip(&noisy.sentences) {
        for (gt, nt) in g.tags().iter().zip(n.tags()) {
            counts[TokenClass::from_tag(gt).index()][TokenClass::from_tag(nt).index()] += 1;
        }
    }
    Ok(counts)
}

/// Estimates P(noisy | clean) from an aligned gold/noisy pair with add-alpha
/// count smoothing; priors come from gold class frequencies.
pub fn estimate_noise(gold: &Corpus, noisy: &Corpus, alpha: f64) -> Result<NoiseMatrix, NoiseError> {
    let counts = pair_counts(gold, noisy)?;
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(NoiseError::EmptyInput);
    }
    let mut matrix = [[0.0f64; 5]; 5];
    let mut priors = [0.0f64; 5];
    for c in 0..5 {
        let row_total: u64 = counts[c].iter().sum();
        priors[c] = row_total as f64 / total as f64;
        let denom = row_total as f64 + 5.0 * alpha;
        for n in 0..5 {
            if denom > 0.0 {
                matrix[c][n] = (counts[c][n] as f64 + alpha) / denom;
            } else {
                // Unseen clean class without smoothing: identity row keeps
                // the matrix row-stochastic and the correction a no-op.
                matrix[c][n] = if c == n { 1.0 } else { 0.0 };
            }
        }
        // Renormalize away accumulated rounding so rows sum to 1 exactly
        // within the declared tolerance.
        let sum: f64 = matrix[c].iter().sum();
        for cell in matrix[c].iter_mut() {
            *cell /= sum;
        }
    }
    let nm = NoiseMatrix {
        classes: TokenClass::ALL.iter().map(|c| c.as_str().to_string()).collect(),
        matrix,
        priors,
        alpha,
    };
    nm.validate()?;
    Ok(nm)
}

/// Relabels every token to argmax_c priors[c]·P(observed | c), rebuilding
/// spans by fusing consecutive same-class tokens. Ties break by the fixed
/// class order PER, LOC, ORG, DATE, O.
pub fn posterior_correct(noisy: &Corpus, nm: &NoiseMatrix) -> Result<Corpus, NoiseError> {
    nm.validate()?;
    let mut sentences = Vec::with_capacity(noisy.sentences.len());
    for sentence in &noisy.sentences {
        let classes: Vec<TokenClass> = sentence
            .tags()
            .iter()
            .map(|tag| {
                let observed = TokenClass::from_tag(tag).index();
                let mut best = TokenClass::Outside;
                let mut best_score = f64::NEG_INFINITY;
                for clean in TokenClass::ALL {
                    let score = nm.priors[clean.index()] * nm.matrix[clean.index()][observed];
                    if score > best_score {
                        best_score = score;
                        best = clean;
                    }
                }
                best
            })
            .collect();
        sentences.push(rebuild_sentence(sentence, &classes));
    }
    Ok(Corpus::new(noisy.name.clone(), sentences))
}

fn rebuild_sentence(sentence: &TaggedSentence, classes: &[TokenClass]) -> TaggedSentence {
    let mut spans = Vec::new();
    let mut i = 0usize;
    while i < classes.len() {
        if let Some(class) = classes[i].entity_class() {
            let mut end = i + 1;
            while end < classes.len() && classes[end] == classes[i] {
                end += 1;
            }
            spans.push(crate::corpus::EntitySpan::new(i, end, class));
            i = end;
        } else {
            i += 1;
        }
    }
    let tags = tags_from(&spans, classes.len()).expect("fused spans never overlap");
    TaggedSentence::new(sentence.tokens().to_vec(), tags).expect("valid rebuild")
}

/// Span-level P/R/F1 of the noisy annotation against gold.
pub fn noise_report(gold: &Corpus, noisy: &Corpus) -> Result<PrfReport, NoiseError> {
    check_alignment(gold, noisy)?;
    Ok(span_prf(gold, noisy, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, ParseMode};

    fn corpus(text: &str) -> Corpus {
        parse_conll(text, ParseMode::Strict).unwrap()
    }

    #[test]
    fn identity_on_noise_free_pair() {
        let gold = corpus("a\tB-PER\nb\tO\n\nc\tB-LOC\n\n");
        let nm = estimate_noise(&gold, &gold, 0.0).unwrap();
        for c in 0..5 {
            for n in 0..5 {
                assert_eq!(nm.matrix[c][n], if c == n { 1.0 } else { 0.0 });
            }
        }
        nm.validate().unwrap();
    }

    #[test]
    fn hand_counted_two_tokens() {
        let gold = corpus("a\tB-PER\nb\tO\n\n");
        let noisy = corpus("a\tO\nb\tO\n\n");
        let nm = estimate_noise(&gold, &noisy, 0.0).unwrap();
        assert_eq!(nm.matrix[TokenClass::Per.index()], [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(nm.matrix[TokenClass::Outside.index()], [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(nm.priors[TokenClass::Per.index()], 0.5);
    }

    #[test]
    fn smoothing_limit_is_uniform() {
        // Classes with zero gold tokens get a uniform row under alpha = 1.
        let gold = corpus("a\tO\n\n");
        let noisy = corpus("a\tO\n\n");
        let nm = estimate_noise(&gold, &noisy, 1.0).unwrap();
        for n in 0..5 {
            assert!((nm.matrix[TokenClass::Per.index()][n] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn misaligned_tokens_rejected() {
        let gold = corpus("a\tO\n\n");
        let noisy = corpus("b\tO\n\n");
        assert!(matches!(
            estimate_noise(&gold, &noisy, 0.0),
            Err(NoiseError::Misaligned(_))
        ));
    }

    #[test]
    fn correct_with_identity_is_noop() {
        let noisy = corpus("a\tB-PER\nb\tO\nc\tB-LOC\nd\tI-LOC\n\n");
        let nm = estimate_noise(&noisy, &noisy, 0.0).unwrap();
        let corrected = posterior_correct(&noisy, &nm).unwrap();
        assert_eq!(corrected.sentences, noisy.sentences);
        // Idempotence.
        let twice = posterior_correct(&corrected, &nm).unwrap();
        assert_eq!(twice.sentences, corrected.sentences);
    }

    #[test]
    fn correct_flips_o_to_per_under_strong_noise() {
        // P(noisy=O | clean=PER) = 0.9 and PER-heavy priors: observed O
        // tokens should flip to PER.
        let mut matrix = [[0.0; 5]; 5];
        matrix[TokenClass::Per.index()][TokenClass::Outside.index()] = 0.9;
        matrix[TokenClass::Per.index()][TokenClass::Per.index()] = 0.1;
        for c in [TokenClass::Loc, TokenClass::Org, TokenClass::Date, TokenClass::Outside] {
            matrix[c.index()][c.index()] = 1.0;
        }
        let nm = NoiseMatrix {
            classes: TokenClass::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            matrix,
            priors: [0.96, 0.01, 0.01, 0.01, 0.01],
            alpha: 0.0,
        };
        let noisy = corpus("a\tO\nb\tO\n\n");
        let corrected = posterior_correct(&noisy, &nm).unwrap();
        // 0.96*0.9 = 0.864 > 0.01*1.0, and consecutive PER tokens fuse.
        assert_eq!(
            corrected.sentences[0].spans(),
            vec![crate::corpus::EntitySpan::new(0, 2, EntityClass::Per)]
        );
    }

    #[test]
    fn uniform_matrix_takes_max_prior() {
        let nm = NoiseMatrix {
            classes: TokenClass::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            matrix: [[0.2; 5]; 5],
            priors: [0.1, 0.5, 0.2, 0.1, 0.1],
            alpha: 0.0,
        };
        let noisy = corpus("a\tB-PER\nb\tO\n\n");
        let corrected = posterior_correct(&noisy, &nm).unwrap();
        assert_eq!(
            corrected.sentences[0].spans(),
            vec![crate::corpus::EntitySpan::new(0, 2, EntityClass::Loc)]
        );
    }

    #[test]
    fn report_perfect_and_all_o() {
        let gold = corpus("a\tB-PER\nb\tO\n\n");
        let report = noise_report(&gold, &gold).unwrap();
        assert_eq!(report.overall.f1, 1.0);
        let all_o = corpus("a\tO\nb\tO\n\n");
        let report = noise_report(&gold, &all_o).unwrap();
        assert_eq!(report.overall.recall, 0.0);
    }

    #[test]
    fn json_round_trip() {
        let gold = corpus("a\tB-PER\nb\tO\n\n");
        let nm = estimate_noise(&gold, &gold, 1.0).unwrap();
        let json = serde_json::to_string(&nm).unwrap();
        let back: NoiseMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, nm);
    }
}
