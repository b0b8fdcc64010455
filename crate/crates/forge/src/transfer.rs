//! Transfer-language features, a linear source-ranking scorer, and
//! rank-correlation evaluation against a transfer-score table.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransferError {
    #[error("lineages share no root")]
    DisjointTrees,
    #[error("vectors share no jointly present feature")]
    NoSharedFeatures,
    #[error("vector has zero norm on the shared coordinates")]
    ZeroVector,
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("candidate {0} has no usable weighted feature")]
    NoUsableFeatures(String),
    #[error("missing transfer score for {0}")]
    MissingScore(String),
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("invalid coordinates: lat {0}, lon {1}")]
    InvalidCoordinates(f64, f64),
}

/// Sparse feature vector with optional missing entries, keyed by index.
pub type SparseVec = BTreeMap<usize, f64>;

/// Typological and data-dependent description of one language.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub code: String,
    pub lat: f64,
    pub lon: f64,
    /// Root-to-leaf family-tree node names.
    pub lineage: Vec<String>,
    #[serde(default)]
    pub inventory: SparseVec,
    #[serde(default)]
    pub syntax: SparseVec,
    #[serde(default)]
    pub phonology: SparseVec,
    #[serde(default)]
    pub dataset_size: u64,
    #[serde(default)]
    pub entity_surfaces: HashSet<String>,
}

impl LanguageProfile {
    pub fn validate(&self) -> Result<(), TransferError> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(TransferError::InvalidCoordinates(self.lat, self.lon));
        }
        Ok(())
    }
}

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two language locations (haversine).
pub fn geo_distance(a: &LanguageProfile, b: &LanguageProfile) -> f64 {
    haversine_km(a.lat, a.lon, b.lat, b.lon)
}

pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Shared-prefix genealogical distance:
/// 1 - |common prefix| / max(|lineage_a|, |lineage_b|).
pub fn genetic_distance(a: &LanguageProfile, b: &LanguageProfile) -> Result<f64, TransferError> {
    let common = a
        .lineage
        .iter()
        .zip(&b.lineage)
        .take_while(|(x, y)| x == y)
        .count();
    if common == 0 {
        return Err(TransferError::DisjointTrees);
    }
    let max_depth = a.lineage.len().max(b.lineage.len());
    Ok(1.0 - common as f64 / max_depth as f64)
}

/// Cosine distance restricted to jointly present coordinates.
pub fn vector_distance(u: &SparseVec, v: &SparseVec) -> Result<f64, TransferError> {
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    let mut shared = false;
    for (idx, &x) in u {
        if let Some(&y) = v.get(idx) {
            shared = true;
            dot += x * y;
            nu += x * x;
            nv += y * y;
        }
    }
    if !shared {
        return Err(TransferError::NoSharedFeatures);
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(TransferError::ZeroVector);
    }
    Ok(1.0 - dot / (nu.sqrt() * nv.sqrt()))
}

/// Entity overlap |A ∩ B| / (|A| + |B|); 0 when either set is empty.
pub fn entity_overlap(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len()) as f64
}

/// The full source→target feature vector. Absent optional inputs yield
/// `None`, not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFeatures {
    pub d_geo: f64,
    pub d_gen: Option<f64>,
    pub d_inv: Option<f64>,
    pub d_syn: Option<f64>,
    pub d_pho: Option<f64>,
    pub d_fea: Option<f64>,
    pub s_tf: u64,
    pub s_tg: u64,
    pub sr: Option<f64>,
    pub eo: f64,
}

impl TransferFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "d_geo" => Some(self.d_geo),
            "d_gen" => self.d_gen,
            "d_inv" => self.d_inv,
            "d_syn" => self.d_syn,
            "d_pho" => self.d_pho,
            "d_fea" => self.d_fea,
            "s_tf" => Some(self.s_tf as f64),
            "s_tg" => Some(self.s_tg as f64),
            "sr" => self.sr,
            "eo" => Some(self.eo),
            _ => None,
        }
    }
}

/// Features where smaller is better; everything else counts as a similarity.
pub const DISTANCE_FEATURES: [&str; 6] = ["d_geo", "d_gen", "d_inv", "d_syn", "d_pho", "d_fea"];
pub const ALL_FEATURES: [&str; 10] = [
    "d_geo", "d_gen", "d_inv", "d_syn", "d_pho", "d_fea", "s_tf", "s_tg", "sr", "eo",
];

fn concat_typological(p: &LanguageProfile) -> SparseVec {
    // Disjoint index ranges keep the three vectors from colliding.
    const STRIDE: usize = 1 << 20;
    let mut out = SparseVec::new();
    for (block, vec) in [&p.inventory, &p.syntax, &p.phonology].iter().enumerate() {
        for (&idx, &val) in vec.iter() {
            out.insert(block * STRIDE + idx, val);
        }
    }
    out
}

/// Computes all ten features for a (source, target) pair.
pub fn compute_features(
    source: &LanguageProfile,
    target: &LanguageProfile,
) -> Result<TransferFeatures, TransferError> {
    source.validate()?;
    target.validate()?;
    let d_gen = match genetic_distance(source, target) {
        Ok(d) => Some(d),
        Err(TransferError::DisjointTrees) => None,
        Err(e) => return Err(e),
    };
    let optional_cosine = |u: &SparseVec, v: &SparseVec| match vector_distance(u, v) {
        Ok(d) => Some(d),
        Err(_) => None,
    };
    let s_tf = source.dataset_size;
    let s_tg = target.dataset_size;
    Ok(TransferFeatures {
        d_geo: geo_distance(source, target),
        d_gen,
        d_inv: optional_cosine(&source.inventory, &target.inventory),
        d_syn: optional_cosine(&source.syntax, &target.syntax),
        d_pho: optional_cosine(&source.phonology, &target.phonology),
        d_fea: optional_cosine(&concat_typological(source), &concat_typological(target)),
        s_tf,
        s_tg,
        sr: (s_tg > 0).then(|| s_tf as f64 / s_tg as f64),
        eo: entity_overlap(&source.entity_surfaces, &target.entity_surfaces),
    })
}

/// One ranked candidate with its linear score and raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSource {
    pub code: String,
    pub score: f64,
    pub features: TransferFeatures,
}

/// Default scorer weights: geographic distance and entity overlap.
pub fn default_weights() -> HashMap<String, f64> {
    HashMap::from([("d_geo".to_string(), 1.0), ("eo".to_string(), 1.0)])
}

/// Ranks candidate source languages for a target by a weighted sum of
/// min-max normalized features (distances negated). Ties break by
/// ascending ISO code.
pub fn rank_sources(
    target: &LanguageProfile,
    candidates: &[LanguageProfile],
    weights: &HashMap<String, f64>,
) -> Result<Vec<RankedSource>, TransferError> {
    if candidates.is_empty() {
        return Err(TransferError::NoCandidates);
    }
    let features: Vec<TransferFeatures> = candidates
        .iter()
        .map(|c| compute_features(c, target))
        .collect::<Result<_, _>>()?;

    let active: Vec<&str> = ALL_FEATURES
        .iter()
        .copied()
        .filter(|f| weights.get(*f).map_or(false, |w| *w != 0.0))
        .collect();

    // Min-max bounds per active feature over candidates that have it.
    let mut bounds: HashMap<&str, (f64, f64)> = HashMap::new();
    for name in &active {
        let values: Vec<f64> = features.iter().filter_map(|f| f.get(name)).collect();
        if let (Some(min), Some(max)) = (
            values.iter().copied().reduce(f64::min),
            values.iter().copied().reduce(f64::max),
        ) {
            bounds.insert(name, (min, max));
        }
    }

    let mut ranked = Vec::with_capacity(candidates.len());
    for (candidate, feats) in candidates.iter().zip(&features) {
        let mut score = 0.0f64;
        let mut usable = false;
        for name in &active {
            let Some(value) = feats.get(name) else { continue };
            usable = true;
            let (min, max) = bounds[name];
            let norm = if max > min { (value - min) / (max - min) } else { 0.0 };
            let signed = if DISTANCE_FEATURES.contains(name) { -norm } else { norm };
            score += weights[*name] * signed;
        }
        if !usable && !active.is_empty() {
            return Err(TransferError::NoUsableFeatures(candidate.code.clone()));
        }
        ranked.push(RankedSource {
            code: candidate.code.clone(),
            score,
            features: feats.clone(),
        });
    }
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.code.cmp(&b.code))
    });
    Ok(ranked)
}

/// How well a predicted ranking agrees with observed transfer scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEval {
    pub top1_hit: bool,
    pub topk_contains: bool,
    pub spearman: f64,
}

/// Evaluates a ranking against a source→F1 table. `top1_hit` checks the
/// first prediction against the score argmax; `topk_contains` checks
/// whether the argmax appears in the first k predictions.
pub fn eval_ranking(
    ranking: &[String],
    transfer_scores: &HashMap<String, f64>,
    k: usize,
) -> Result<RankingEval, TransferError> {
    if ranking.is_empty() {
        return Err(TransferError::NoCandidates);
    }
    let scores: Vec<f64> = ranking
        .iter()
        .map(|code| {
            transfer_scores
                .get(code)
                .copied()
                .ok_or_else(|| TransferError::MissingScore(code.clone()))
        })
        .collect::<Result<_, _>>()?;
    let best = scores
        .iter()
        .copied()
        .reduce(f64::max)
        .expect("non-empty ranking");
    let top1_hit = scores[0] == best;
    let topk_contains = scores.iter().take(k).any(|&s| s == best);
    // Predicted rank 1..n against the observed scores; higher score should
    // mean earlier rank, hence the negation.
    let predicted: Vec<f64> = (0..ranking.len()).map(|i| -(i as f64)).collect();
    let spearman = if ranking.len() >= 2 {
        spearman(&predicted, &scores)?
    } else {
        1.0
    };
    Ok(RankingEval {
        top1_hit,
        topk_contains,
        spearman,
    })
}

/// Average ranks (ties get the mean of the positions they occupy).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0f64; xs.len()];
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, TransferError> {
    if xs.len() != ys.len() {
        return Err(TransferError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(TransferError::LengthMismatch(xs.len(), 2));
    }
    pearson_of(&average_ranks(xs), &average_ranks(ys))
}

fn pearson_of(xs: &[f64], ys: &[f64]) -> Result<f64, TransferError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(TransferError::ZeroVariance);
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}
