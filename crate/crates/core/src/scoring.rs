//! User preference, subjective similarity and the two recommenders.
//!
//! The objective recommender ranks every candidate `c` by
//! `max over purchased p of J(p, c)`. The subjective one replaces `J(p, c)`
//! with `gamma_u(p) * J(p, c)`, where `gamma_u` is the user's preference for
//! `p`: a base preference from purchase quantities, optionally propagated
//! `t` steps through the neighbor graph,
//!
//! ```text
//! gamma_u^(0)(p) = base_u(p)
//! gamma_u^(t)(p) = sum over q in N⁺(p) of gamma_u^(t-1)(q) * J(p, q),   J(p, p) = 1
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{Corpus, ProductId, UserProfile};
use crate::similarity::{neighbor_order, SimilarityModel};

/// Deepest preference propagation allowed.
pub const MAX_DEPTH: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("preference depth {0} exceeds the maximum of {MAX_DEPTH}")]
    DepthTooLarge(u32),
    #[error("ranking cap {0} must be a positive finite number")]
    BadRankingCap(f64),
    #[error("top-n must be at least 1")]
    ZeroTopN,
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("unknown candidate policy `{0}` (expected neighbors or complement)")]
    BadCandidatePolicy(String),
}

/// Which items may be recommended to a user. Purchased items never are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidatePolicy {
    /// Neighbors of any purchased item.
    #[default]
    NeighborsOfProfile,
    /// Every known item.
    ComplementOfProfile,
}

impl fmt::Display for CandidatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NeighborsOfProfile => "neighbors",
            Self::ComplementOfProfile => "complement",
        })
    }
}

impl FromStr for CandidatePolicy {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neighbors" => Ok(Self::NeighborsOfProfile),
            "complement" => Ok(Self::ComplementOfProfile),
            _ => Err(ScoringError::BadCandidatePolicy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    depth: u32,
    ranking_cap: Option<f64>,
    candidates: CandidatePolicy,
    top_n: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            ranking_cap: None,
            candidates: CandidatePolicy::default(),
            top_n: 10,
        }
    }
}

impl ScoringConfig {
    pub fn new(
        depth: u32,
        ranking_cap: Option<f64>,
        candidates: CandidatePolicy,
        top_n: usize,
    ) -> Result<Self, ScoringError> {
        if depth > MAX_DEPTH {
            return Err(ScoringError::DepthTooLarge(depth));
        }
        if let Some(cap) = ranking_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(ScoringError::BadRankingCap(cap));
            }
        }
        if top_n == 0 {
            return Err(ScoringError::ZeroTopN);
        }
        Ok(Self {
            depth,
            ranking_cap,
            candidates,
            top_n,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// When set, base preferences go through [`rho`] with this cap instead of
    /// using normalized quantities.
    pub fn ranking_cap(&self) -> Option<f64> {
        self.ranking_cap
    }

    pub fn candidates(&self) -> CandidatePolicy {
        self.candidates
    }

    pub fn top_n(&self) -> usize {
        self.top_n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub product_id: ProductId,
    pub score: f64,
    /// The purchased item that produced the winning score.
    pub best_source_item: ProductId,
}

/// A non-negative value kept as an unevaluated sum `hi + lo` with
/// `|lo| <= ulp(hi) / 2`, so values closer together than `f64` can resolve
/// still compare correctly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankValue {
    hi: f64,
    lo: f64,
}

impl RankValue {
    pub fn exact(value: f64) -> Self {
        Self { hi: value, lo: 0.0 }
    }

    /// Nearest `f64`.
    pub fn value(self) -> f64 {
        self.hi
    }

    /// Rounding error left over from `value()`.
    pub fn residual(self) -> f64 {
        self.lo
    }
}

impl PartialOrd for RankValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

/// `cap * (1/2 + 1/4 + ... + 1/2^quantity) = cap * (1 - 2^-quantity)`.
///
/// The partial sums approach `cap` faster than `f64` spacing near `cap`
/// allows, so the result carries its rounding error (see [`RankValue`]) and
/// stays strictly increasing and strictly below `cap` for every quantity up
/// to the point where `cap * 2^-quantity` underflows.
pub fn rho(quantity: u64, cap: f64) -> RankValue {
    let exponent = i32::try_from(quantity).unwrap_or(i32::MAX);
    // exact: scaling by a power of two
    let deficit = cap * 0.5f64.powi(exponent);
    // two-sum of cap + (-deficit)
    let hi = cap - deficit;
    let back = hi - cap;
    let lo = (cap - (hi - back)) + (-deficit - back);
    RankValue { hi, lo }
}

/// Candidate items for the owner of `profile`.
pub fn candidates(
    model: &SimilarityModel,
    profile: &UserProfile,
    policy: CandidatePolicy,
) -> BTreeSet<ProductId> {
    match policy {
        CandidatePolicy::NeighborsOfProfile => profile
            .items()
            .filter_map(|p| model.neighbors(p.as_str()))
            .flatten()
            .map(|n| &n.product)
            .filter(|c| !profile.contains(c.as_str()))
            .cloned()
            .collect(),
        CandidatePolicy::ComplementOfProfile => model
            .products()
            .filter(|c| !profile.contains(c.as_str()))
            .cloned()
            .collect(),
    }
}

fn base_preference(corpus: &Corpus, user: &str, product: &str, config: &ScoringConfig) -> f64 {
    match config.ranking_cap {
        None => corpus.normalized_quantity(product, user),
        Some(cap) => rho(corpus.matrix().count(product, user), cap).value(),
    }
}

fn gamma_unchecked(
    corpus: &Corpus,
    model: &SimilarityModel,
    user: &str,
    product: &str,
    depth: u32,
    config: &ScoringConfig,
) -> f64 {
    if depth == 0 {
        return base_preference(corpus, user, product, config);
    }
    let own = gamma_unchecked(corpus, model, user, product, depth - 1, config);
    let neighbors = model.neighbors(product).unwrap_or_default();
    own + neighbors
        .iter()
        .map(|n| {
            gamma_unchecked(corpus, model, user, n.product.as_str(), depth - 1, config) * n.similarity
        })
        .sum::<f64>()
}

/// Preference of `user` for `product` propagated `depth` steps through the
/// model's neighbor lists.
pub fn gamma(
    corpus: &Corpus,
    model: &SimilarityModel,
    user: &str,
    product: &str,
    depth: u32,
    config: &ScoringConfig,
) -> Result<f64, ScoringError> {
    if depth > MAX_DEPTH {
        return Err(ScoringError::DepthTooLarge(depth));
    }
    if !model.contains(product) {
        return Err(ScoringError::UnknownProduct(product.to_string()));
    }
    Ok(gamma_unchecked(corpus, model, user, product, depth, config))
}

/// `gamma_u(p) * J(p, c)` at the configured depth.
pub fn subjective_similarity(
    corpus: &Corpus,
    model: &SimilarityModel,
    user: &str,
    p: &str,
    c: &str,
    config: &ScoringConfig,
) -> Result<f64, ScoringError> {
    if !model.contains(c) {
        return Err(ScoringError::UnknownProduct(c.to_string()));
    }
    let preference = gamma(corpus, model, user, p, config.depth, config)?;
    Ok(preference * model.similarity(p, c))
}

/// Scores candidates by `max over purchased p of weight(p) * J(p, c)`.
///
/// Purchased items are visited in ascending id order and only a strictly
/// better score replaces the current best, so the source item of a tie is
/// the smallest id.
fn rank_candidates(
    model: &SimilarityModel,
    profile: &UserProfile,
    config: &ScoringConfig,
    weight: impl Fn(&ProductId) -> f64,
) -> Vec<Recommendation> {
    let eligible = candidates(model, profile, config.candidates);
    let mut best: BTreeMap<&ProductId, (f64, &ProductId)> = BTreeMap::new();
    for p in profile.items() {
        let Some(list) = model.neighbors(p.as_str()) else {
            continue;
        };
        let w = weight(p);
        for n in list {
            if !eligible.contains(&n.product) {
                continue;
            }
            let score = w * n.similarity;
            let entry = best.entry(&n.product).or_insert((score, p));
            if score > entry.0 {
                *entry = (score, p);
            }
        }
    }
    let mut ranked: Vec<Recommendation> = best
        .into_iter()
        .filter(|(_, (score, _))| *score > 0.0)
        .map(|(c, (score, p))| Recommendation {
            product_id: c.clone(),
            score,
            best_source_item: p.clone(),
        })
        .collect();
    ranked.sort_by(|a, b| {
        neighbor_order(a.score, a.product_id.as_str(), b.score, b.product_id.as_str())
    });
    ranked.truncate(config.top_n);
    ranked
}

/// Top-n items by plain item-item similarity to the user's purchases.
pub fn recommend_objective(
    model: &SimilarityModel,
    profile: &UserProfile,
    config: &ScoringConfig,
) -> Vec<Recommendation> {
    rank_candidates(model, profile, config, |_| 1.0)
}

/// Top-n items by preference-weighted similarity to the user's purchases.
pub fn recommend_subjective(
    corpus: &Corpus,
    model: &SimilarityModel,
    profile: &UserProfile,
    config: &ScoringConfig,
) -> Vec<Recommendation> {
    let user = profile.user_id.as_str();
    let preferences: BTreeMap<&ProductId, f64> = profile
        .items()
        .filter(|p| model.contains(p.as_str()))
        .map(|p| {
            (p, gamma_unchecked(corpus, model, user, p.as_str(), config.depth, config))
        })
        .collect();
    rank_candidates(model, profile, config, |p| {
        preferences.get(p).copied().unwrap_or(0.0)
    })
}
