//! Distant supervision: gazetteer matching and keyword/digit date rules.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{tags_from, EntityClass, EntitySpan, TaggedSentence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeakLabelError {
    #[error("unknown entity class {0:?} at line {1}")]
    UnknownClass(String, usize),
    #[error("malformed gazetteer line {0}: expected name<TAB>class<TAB>source")]
    MalformedLine(usize),
    #[error("DATE is not a gazetteer class (line {0})")]
    DateInGazetteer(usize),
}

/// One gazetteer surface form with its class and provenance label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GazetteerEntry {
    pub surface: Vec<String>,
    pub class: EntityClass,
    pub source: String,
}

/// Entity lists for dictionary annotation, length-filtered per source.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeSet<GazetteerEntry>,
    trie: TokenTrie,
}

/// Minimum character lengths per source; `default` applies to unlisted sources.
#[derive(Debug, Clone)]
pub struct MinLengths {
    pub default: usize,
    pub per_source: HashMap<String, usize>,
}

impl Default for MinLengths {
    fn default() -> Self {
        MinLengths {
            default: 2,
            per_source: HashMap::new(),
        }
    }
}

impl MinLengths {
    fn for_source(&self, source: &str) -> usize {
        self.per_source.get(source).copied().unwrap_or(self.default)
    }
}

impl Gazetteer {
    pub fn new(entries: impl IntoIterator<Item = GazetteerEntry>) -> Self {
        let entries: BTreeSet<GazetteerEntry> = entries.into_iter().collect();
        let mut trie = TokenTrie::default();
        for entry in &entries {
            trie.insert(&entry.surface, entry.class);
        }
        Gazetteer { entries, trie }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &GazetteerEntry> {
        self.entries.iter()
    }
}

/// Parses "name<TAB>class<TAB>source" lines, NFC-normalizing surfaces and
/// dropping names shorter than their source's minimum character length.
pub fn load_gazetteer(tsv: &str, min_len: &MinLengths) -> Result<Gazetteer, WeakLabelError> {
    let mut entries = Vec::new();
    for (lineno, line) in tsv.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (name, class, source) = match (cols.next(), cols.next(), cols.next()) {
            (Some(n), Some(c), Some(s)) if !n.trim().is_empty() => (n, c.trim(), s.trim()),
            _ => return Err(WeakLabelError::MalformedLine(lineno + 1)),
        };
        let class: EntityClass = class
            .parse()
            .map_err(|_| WeakLabelError::UnknownClass(class.to_string(), lineno + 1))?;
        if class == EntityClass::Date {
            return Err(WeakLabelError::DateInGazetteer(lineno + 1));
        }
        let surface: Vec<String> = name
            .split_whitespace()
            .map(|t| t.nfc().collect::<String>())
            .collect();
        let char_len: usize = surface.iter().map(|t| t.chars().count()).sum();
        if char_len < min_len.for_source(source) {
            continue;
        }
        entries.push(GazetteerEntry {
            surface,
            class,
            source: source.to_string(),
        });
    }
    Ok(Gazetteer::new(entries))
}

/// Token-level trie for leftmost-longest multi-word matching.
#[derive(Debug, Clone, Default)]
struct TokenTrie {
    nodes: Vec<TrieNode>,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    // Classes of entries ending at this node (identical spans may carry
    // several classes; precedence resolves the tie at match time).
    accepts: Vec<EntityClass>,
}

impl TokenTrie {
    fn insert(&mut self, surface: &[String], class: EntityClass) {
        if self.nodes.is_empty() {
            self.nodes.push(TrieNode::default());
        }
        let mut node = 0usize;
        for token in surface {
            node = match self.nodes[node].children.get(token) {
                Some(&next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(token.clone(), next);
                    next
                }
            };
        }
        if !self.nodes[node].accepts.contains(&class) {
            self.nodes[node].accepts.push(class);
        }
    }

    /// Longest match starting at `tokens[start]`; returns (end, classes).
    fn longest_match<'a>(&'a self, tokens: &[String], start: usize) -> Option<(usize, &'a [EntityClass])> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut node = 0usize;
        let mut best: Option<(usize, &[EntityClass])> = None;
        for (offset, token) in tokens[start..].iter().enumerate() {
            node = match self.nodes[node].children.get(token) {
                Some(&next) => next,
                None => break,
            };
            if !self.nodes[node].accepts.is_empty() {
                best = Some((start + offset + 1, self.nodes[node].accepts.as_slice()));
            }
        }
        best
    }
}

fn pick_class(classes: &[EntityClass], precedence: &[EntityClass]) -> EntityClass {
    for class in precedence {
        if classes.contains(class) {
            return *class;
        }
    }
    classes[0]
}

pub const DEFAULT_PRECEDENCE: [EntityClass; 3] =
    [EntityClass::Per, EntityClass::Loc, EntityClass::Org];

/// Leftmost-longest non-overlapping gazetteer matching over NFC token text.
/// Identical-span class ties resolve by `precedence` order.
pub fn match_entities(
    tokens: &[String],
    gaz: &Gazetteer,
    precedence: &[EntityClass],
) -> Vec<EntitySpan> {
    let tokens: Vec<String> = tokens.iter().map(|t| t.nfc().collect()).collect();
    let mut spans = Vec::new();
    let mut i = 0usize;
    while i < tokens.len() {
        match gaz.trie.longest_match(&tokens, i) {
            Some((end, classes)) => {
                spans.push(EntitySpan::new(i, end, pick_class(classes, precedence)));
                i = end;
            }
            None => i += 1,
        }
    }
    spans
}

/// Date keyword list plus an all-digit-token rule.
#[derive(Debug, Clone)]
pub struct DateRuleSet {
    keywords: HashSet<String>,
    pub digit_rule: bool,
}

impl DateRuleSet {
    pub fn new(keywords: impl IntoIterator<Item = String>, digit_rule: bool) -> Self {
        DateRuleSet {
            keywords: keywords.into_iter().map(|k| k.nfc().collect()).collect(),
            digit_rule,
        }
    }

    /// Empty keyword set, digit rule off: tags nothing.
    pub fn inactive() -> Self {
        DateRuleSet::new(std::iter::empty(), false)
    }

    /// One keyword per line; blank lines and `#` comments skipped.
    pub fn from_keyword_file(text: &str, digit_rule: bool) -> Self {
        DateRuleSet::new(
            text.lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            digit_rule,
        )
    }

    fn is_keyword(&self, token: &str) -> bool {
        self.keywords.contains(token)
    }
}

fn is_all_digits(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_digit())
}

/// Marks a token DATE when it is a keyword, immediately follows a keyword,
/// or (digit rule) consists entirely of decimal digits; maximal runs merge.
pub fn tag_dates(tokens: &[String], rules: &DateRuleSet) -> Vec<EntitySpan> {
    let tokens: Vec<String> = tokens.iter().map(|t| t.nfc().collect()).collect();
    let mut marked = vec![false; tokens.len()];
    for (i, token) in tokens.iter().enumerate() {
        marked[i] = rules.is_keyword(token)
            || (i > 0 && rules.is_keyword(&tokens[i - 1]))
            || (rules.digit_rule && is_all_digits(token));
    }
    runs_to_spans(&marked)
}

fn runs_to_spans(marked: &[bool]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &m) in marked.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(EntitySpan::new(s, i, EntityClass::Date));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(EntitySpan::new(s, marked.len(), EntityClass::Date));
    }
    spans
}

/// Full weak annotation: gazetteer spans first, then date spans over tokens
/// still unclaimed.
pub fn annotate(
    tokens: &[String],
    gaz: &Gazetteer,
    rules: &DateRuleSet,
    precedence: &[EntityClass],
) -> TaggedSentence {
    let mut spans = match_entities(tokens, gaz, precedence);
    let mut occupied = vec![false; tokens.len()];
    for span in &spans {
        for slot in occupied.iter_mut().take(span.end).skip(span.start) {
            *slot = true;
        }
    }
    for date in tag_dates(tokens, rules) {
        // Date spans may be cut by already-placed gazetteer spans; keep the
        // free sub-runs as separate DATE spans.
        let mut free = vec![false; tokens.len()];
        for (i, slot) in free.iter_mut().enumerate().take(date.end).skip(date.start) {
            *slot = !occupied[i];
        }
        for sub in runs_to_spans(&free) {
            for slot in occupied.iter_mut().take(sub.end).skip(sub.start) {
                *slot = true;
            }
            spans.push(sub);
        }
    }
    spans.sort_by_key(|s| s.start);
    let tags = tags_from(&spans, tokens.len()).expect("weak spans never overlap");
    TaggedSentence::new(tokens.to_vec(), tags).expect("tags_from output is valid IOB2")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|t| t.to_string()).collect()
    }

    fn gaz(lines: &str) -> Gazetteer {
        load_gazetteer(lines, &MinLengths::default()).unwrap()
    }

    #[test]
    fn load_drops_short_names() {
        let g = gaz("a\tPER\twikidata\n");
        assert!(g.is_empty());
    }

    #[test]
    fn load_keeps_kano() {
        let g = gaz("Kano\tLOC\tgeo\n");
        assert_eq!(g.len(), 1);
        let entry = g.entries().next().unwrap();
        assert_eq!(entry.surface, vec!["Kano".to_string()]);
    }

    #[test]
    fn load_collapses_duplicates() {
        let g = gaz("Kano\tLOC\tgeo\nKano\tLOC\tgeo\n");
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn load_per_source_min_length() {
        let mut min = MinLengths::default();
        min.per_source.insert("nigerian-names".to_string(), 3);
        let tsv = "Ayo\tPER\tnigerian-names\nJo\tPER\tnigerian-names\nJo\tPER\twikidata\n";
        let g = load_gazetteer(tsv, &min).unwrap();
        let surfaces: Vec<_> = g.entries().map(|e| (e.surface[0].clone(), e.source.clone())).collect();
        assert_eq!(
            surfaces,
            vec![
                ("Ayo".to_string(), "nigerian-names".to_string()),
                ("Jo".to_string(), "wikidata".to_string())
            ]
        );
    }

    #[test]
    fn load_rejects_bad_class() {
        let err = load_gazetteer("Kano\tPLACE\tgeo\n", &MinLengths::default()).unwrap_err();
        assert_eq!(err, WeakLabelError::UnknownClass("PLACE".to_string(), 1));
    }

    #[test]
    fn match_empty_gazetteer() {
        let g = Gazetteer::new(vec![]);
        assert!(match_entities(&toks(&["Kano"]), &g, &DEFAULT_PRECEDENCE).is_empty());
    }

    #[test]
    fn match_prefers_longest() {
        let g = gaz("New York\tLOC\tgeo\nYork\tPER\tnames\n");
        let spans = match_entities(&toks(&["New", "York"]), &g, &DEFAULT_PRECEDENCE);
        assert_eq!(spans, vec![EntitySpan::new(0, 2, EntityClass::Loc)]);
    }

    #[test]
    fn match_tie_uses_precedence() {
        let g = gaz("Kano\tLOC\tgeo\nKano\tPER\tnames\n");
        let spans = match_entities(&toks(&["Kano"]), &g, &DEFAULT_PRECEDENCE);
        assert_eq!(spans, vec![EntitySpan::new(0, 1, EntityClass::Per)]);
        let swapped = [EntityClass::Loc, EntityClass::Per, EntityClass::Org];
        let spans = match_entities(&toks(&["Kano"]), &g, &swapped);
        assert_eq!(spans, vec![EntitySpan::new(0, 1, EntityClass::Loc)]);
    }

    #[test]
    fn match_is_nfc_insensitive_to_input_form() {
        // "é" composed in the gazetteer, decomposed in the sentence.
        let g = gaz("Ad\u{00e9}\tPER\tnames\n");
        let spans = match_entities(&toks(&["Ade\u{0301}"]), &g, &DEFAULT_PRECEDENCE);
        assert_eq!(spans, vec![EntitySpan::new(0, 1, EntityClass::Per)]);
    }

    #[test]
    fn dates_inactive_rules() {
        assert!(tag_dates(&toks(&["2018", "x"]), &DateRuleSet::inactive()).is_empty());
    }

    #[test]
    fn dates_digit_rule() {
        let rules = DateRuleSet::new(std::iter::empty(), true);
        assert_eq!(
            tag_dates(&toks(&["2018"]), &rules),
            vec![EntitySpan::new(0, 1, EntityClass::Date)]
        );
    }

    #[test]
    fn dates_follow_keyword_window_one() {
        let rules = DateRuleSet::new(vec!["oṣù".to_string()], false);
        // keyword, follower, but not the follower's follower
        assert_eq!(
            tag_dates(&toks(&["oṣù", "Ọpẹ", ","]), &rules),
            vec![EntitySpan::new(0, 2, EntityClass::Date)]
        );
    }

    #[test]
    fn annotate_empty_resources() {
        let s = annotate(
            &toks(&["a", "b"]),
            &Gazetteer::new(vec![]),
            &DateRuleSet::inactive(),
            &DEFAULT_PRECEDENCE,
        );
        assert!(s.spans().is_empty());
    }

    #[test]
    fn annotate_composes_gazetteer_and_dates() {
        let g = gaz("Kano\tLOC\tgeo\n");
        let rules = DateRuleSet::new(std::iter::empty(), true);
        let s = annotate(&toks(&["Kano", "2018"]), &g, &rules, &DEFAULT_PRECEDENCE);
        assert_eq!(
            s.spans(),
            vec![
                EntitySpan::new(0, 1, EntityClass::Loc),
                EntitySpan::new(1, 2, EntityClass::Date)
            ]
        );
    }

    #[test]
    fn annotate_gazetteer_blocks_date_rule() {
        let g = gaz("Boko 2018 Group\tORG\tlists\n");
        let rules = DateRuleSet::new(std::iter::empty(), true);
        let s = annotate(
            &toks(&["Boko", "2018", "Group"]),
            &g,
            &rules,
            &DEFAULT_PRECEDENCE,
        );
        assert_eq!(s.spans(), vec![EntitySpan::new(0, 3, EntityClass::Org)]);
    }
}
