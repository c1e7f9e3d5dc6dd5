//! Item-item Jaccard similarity: exact set ratios, sketch estimates, the
//! off-line all-pairs neighbor model, and merging of near-duplicate items.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use thiserror::Error;

use crate::corpus::{Corpus, ItemUserSet, ProductId, PurchaseMatrix};
use crate::parallel::Execution;
use crate::sketch::{jaccard_from_estimates, LinearCountingSketch, SketchError};

pub const DEFAULT_KNN: usize = 20;
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("similarity threshold {0} must lie in (0, 1]")]
    BadThreshold(f64),
    #[error("merge threshold {0} must lie in (0, 1]")]
    BadMergeThreshold(f64),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("cannot parse {what} from `{input}`")]
    Parse { what: &'static str, input: String },
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// How the neighbor set N(p) of each item is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborPolicy {
    /// The `k` most similar items.
    Knn(usize),
    /// Every item with similarity at least `tau`.
    Threshold(f64),
}

impl NeighborPolicy {
    pub fn knn(k: usize) -> Result<Self, SimilarityError> {
        if k == 0 {
            return Err(SimilarityError::ZeroK);
        }
        Ok(Self::Knn(k))
    }

    pub fn threshold(tau: f64) -> Result<Self, SimilarityError> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(SimilarityError::BadThreshold(tau));
        }
        Ok(Self::Threshold(tau))
    }
}

impl Default for NeighborPolicy {
    fn default() -> Self {
        Self::Knn(DEFAULT_KNN)
    }
}

impl fmt::Display for NeighborPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Knn(k) => write!(f, "knn:{k}"),
            Self::Threshold(tau) => write!(f, "threshold:{tau}"),
        }
    }
}

impl FromStr for NeighborPolicy {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = || SimilarityError::Parse {
            what: "neighbor policy",
            input: s.to_string(),
        };
        match s.split_once(':') {
            Some(("knn", k)) => Self::knn(k.parse().map_err(|_| parse_err())?),
            Some(("threshold", tau)) => Self::threshold(tau.parse().map_err(|_| parse_err())?),
            _ => Err(parse_err()),
        }
    }
}

/// Whether similarities come from exact buyer sets or from sketches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimilarityMode {
    Exact,
    #[default]
    Sketch,
}

impl fmt::Display for SimilarityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Sketch => "sketch",
        })
    }
}

impl FromStr for SimilarityMode {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Self::Exact),
            "sketch" => Ok(Self::Sketch),
            _ => Err(SimilarityError::Parse {
                what: "similarity mode",
                input: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub product: ProductId,
    pub similarity: f64,
}

/// Descending similarity, then ascending id.
pub fn neighbor_order(a_sim: f64, a_id: &str, b_sim: f64, b_id: &str) -> Ordering {
    b_sim.total_cmp(&a_sim).then_with(|| a_id.cmp(b_id))
}

/// Precomputed neighbor lists for every product.
///
/// Lists never contain the product itself or zero similarities and are
/// ordered by [`neighbor_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel {
    pub(crate) mode: SimilarityMode,
    pub(crate) policy: NeighborPolicy,
    pub(crate) neighbors: BTreeMap<ProductId, Vec<Neighbor>>,
    /// Per-product sketches; present in sketch mode only.
    pub(crate) sketches: BTreeMap<ProductId, LinearCountingSketch>,
}

impl SimilarityModel {
    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }

    pub fn policy(&self) -> NeighborPolicy {
        self.policy
    }

    pub fn products(&self) -> impl Iterator<Item = &ProductId> {
        self.neighbors.keys()
    }

    pub fn num_products(&self) -> usize {
        self.neighbors.len()
    }

    pub fn contains(&self, product: &str) -> bool {
        self.neighbors.contains_key(product)
    }

    pub fn neighbors(&self, product: &str) -> Option<&[Neighbor]> {
        self.neighbors.get(product).map(Vec::as_slice)
    }

    pub fn sketches(&self) -> &BTreeMap<ProductId, LinearCountingSketch> {
        &self.sketches
    }

    /// J(p, q) as stored in p's neighbor list; 0 when q is not a neighbor.
    pub fn similarity(&self, p: &str, q: &str) -> f64 {
        self.neighbors
            .get(p)
            .and_then(|list| list.iter().find(|n| n.product.as_str() == q))
            .map_or(0.0, |n| n.similarity)
    }

    /// N⁺(p) = N(p) ∪ {p}.
    pub fn neighbors_plus(&self, product: &str) -> Result<BTreeSet<ProductId>, SimilarityError> {
        let (id, list) = self
            .neighbors
            .get_key_value(product)
            .ok_or_else(|| SimilarityError::UnknownProduct(product.to_string()))?;
        let mut set: BTreeSet<ProductId> = list.iter().map(|n| n.product.clone()).collect();
        set.insert(id.clone());
        Ok(set)
    }
}

/// Counters from an all-pairs build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    /// Ordered (p, q) similarity evaluations performed.
    pub pair_evaluations: u64,
}

/// Exact Jaccard ratio of the buyer sets of `p` and `c`; 0 when both are
/// empty or unknown.
pub fn exact_jaccard(matrix: &PurchaseMatrix, p: &str, c: &str) -> f64 {
    let (a, b) = match (matrix.column(p), matrix.column(c)) {
        (Some(a), Some(b)) => (a, b),
        _ => return 0.0,
    };
    let (small, large) = if a.num_buyers() <= b.num_buyers() { (a, b) } else { (b, a) };
    let shared = small.buyers().filter(|u| large.get(u.as_str()) > 0).count();
    let union = a.num_buyers() + b.num_buyers() - shared;
    if union == 0 {
        return 0.0;
    }
    shared as f64 / union as f64
}

/// Sketch estimate of the Jaccard similarity of two items.
pub fn approx_jaccard(a: &ItemUserSet<'_>, b: &ItemUserSet<'_>) -> Result<f64, SketchError> {
    a.sketch.estimate_jaccard(b.sketch)
}

/// Dense integer view of a corpus used by the all-pairs loops.
struct PairIndex<'a> {
    products: Vec<&'a ProductId>,
    /// Buyer count per product.
    sizes: Vec<usize>,
    /// Sorted product indices per user.
    products_of_user: Vec<Vec<u32>>,
    /// Sorted user indices per product.
    users_of_product: Vec<Vec<u32>>,
}

impl<'a> PairIndex<'a> {
    fn new(matrix: &'a PurchaseMatrix) -> Self {
        let user_index: BTreeMap<&str, u32> = matrix
            .users()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i as u32))
            .collect();
        let mut products_of_user = vec![Vec::new(); user_index.len()];
        let mut products = Vec::with_capacity(matrix.num_products());
        let mut users_of_product = Vec::with_capacity(matrix.num_products());
        for (pi, (p, column)) in matrix.columns().enumerate() {
            products.push(p);
            let users: Vec<u32> = column.buyers().map(|u| user_index[u.as_str()]).collect();
            for &u in &users {
                products_of_user[u as usize].push(pi as u32);
            }
            users_of_product.push(users);
        }
        Self {
            sizes: users_of_product.iter().map(Vec::len).collect(),
            products,
            products_of_user,
            users_of_product,
        }
    }

    /// Exact similarities of product `p` with every co-purchased product
    /// (excluding `p`), as `(q, J)` in ascending `q`.
    fn exact_row(&self, p: usize) -> Vec<(u32, f64)> {
        let mut co: Vec<u32> = self.users_of_product[p]
            .iter()
            .flat_map(|&u| self.products_of_user[u as usize].iter().copied())
            .filter(|&q| q as usize != p)
            .collect();
        co.sort_unstable();
        let mut row = Vec::new();
        for run in co.chunk_by(|a, b| a == b) {
            let q = run[0];
            let shared = run.len();
            let union = self.sizes[p] + self.sizes[q as usize] - shared;
            row.push((q, shared as f64 / union as f64));
        }
        row
    }
}

fn select_neighbors(mut row: Vec<Neighbor>, policy: NeighborPolicy) -> Vec<Neighbor> {
    let order = |a: &Neighbor, b: &Neighbor| {
        neighbor_order(a.similarity, a.product.as_str(), b.similarity, b.product.as_str())
    };
    match policy {
        NeighborPolicy::Knn(k) => {
            if row.len() > k {
                row.select_nth_unstable_by(k - 1, order);
                row.truncate(k);
            }
        }
        NeighborPolicy::Threshold(tau) => row.retain(|n| n.similarity >= tau),
    }
    row.sort_unstable_by(order);
    row
}

pub fn build_model(corpus: &Corpus, policy: NeighborPolicy, mode: SimilarityMode) -> SimilarityModel {
    build_model_with(corpus, policy, mode, Execution::default()).0
}

/// All-pairs build. Each product's row is computed independently, so the
/// result does not depend on `execution`.
///
/// Exact mode only visits pairs with at least one shared buyer. Sketch mode
/// compares every pair, reusing each product's cardinality estimate.
pub fn build_model_with(
    corpus: &Corpus,
    policy: NeighborPolicy,
    mode: SimilarityMode,
    execution: Execution,
) -> (SimilarityModel, BuildStats) {
    let index = PairIndex::new(corpus.matrix());
    let n = index.products.len();

    let rows: Vec<(Vec<Neighbor>, u64)> = match mode {
        SimilarityMode::Exact => execution.map_indexed(n, |p| {
            let row = index.exact_row(p);
            let evaluated = row.len() as u64;
            let row = row
                .into_iter()
                .filter(|&(_, s)| s > 0.0)
                .map(|(q, s)| Neighbor {
                    product: index.products[q as usize].clone(),
                    similarity: s,
                })
                .collect();
            (select_neighbors(row, policy), evaluated)
        }),
        SimilarityMode::Sketch => {
            let sketches: Vec<&LinearCountingSketch> = index
                .products
                .iter()
                .map(|p| corpus.sketch(p.as_str()).expect("every product has a sketch"))
                .collect();
            let estimates: Vec<f64> = sketches.iter().map(|s| s.estimate().value).collect();
            let m = corpus.sketch_width();
            execution.map_indexed(n, |p| {
                let row = (0..n)
                    .filter(|&q| q != p)
                    .filter_map(|q| {
                        let zeros = sketches[p]
                            .union_zero_count(sketches[q])
                            .expect("corpus sketches share one width");
                        let union = crate::sketch::estimate_from_zeros(m, zeros).value;
                        let s = jaccard_from_estimates(estimates[p], estimates[q], union);
                        (s > 0.0).then(|| Neighbor {
                            product: index.products[q].clone(),
                            similarity: s,
                        })
                    })
                    .collect();
                (select_neighbors(row, policy), n.saturating_sub(1) as u64)
            })
        }
    };

    let mut stats = BuildStats::default();
    let mut neighbors = BTreeMap::new();
    for (p, (row, evaluated)) in index.products.iter().zip(rows) {
        stats.pair_evaluations += evaluated;
        neighbors.insert((*p).clone(), row);
    }
    let sketches = match mode {
        SimilarityMode::Exact => BTreeMap::new(),
        SimilarityMode::Sketch => index
            .products
            .iter()
            .map(|p| ((*p).clone(), corpus.sketch(p.as_str()).unwrap().clone()))
            .collect(),
    };
    let model = SimilarityModel {
        mode,
        policy,
        neighbors,
        sketches,
    };
    (model, stats)
}

/// Result of [`merge_similar_items`].
#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub corpus: Corpus,
    /// Every original product id mapped to the id of the item now standing
    /// for it (itself when it was not merged).
    pub mapping: BTreeMap<ProductId, ProductId>,
}

impl MergeOutcome {
    /// Number of original products folded into another item.
    pub fn merged_count(&self) -> usize {
        self.mapping.iter().filter(|(from, to)| from != to).count()
    }
}

/// Folds near-duplicate items together.
///
/// Items are linked when their exact Jaccard similarity is at least
/// `theta`, and every connected component of that graph becomes one item:
/// its column is the element-wise sum of the member columns and it takes the
/// smallest member id. A merged item can end up above `theta` with another
/// item, so linking repeats until no pair qualifies; the result is therefore
/// a fixpoint and merging it again changes nothing.
pub fn merge_similar_items(corpus: &Corpus, theta: f64) -> Result<MergeOutcome, SimilarityError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(SimilarityError::BadMergeThreshold(theta));
    }
    let mut mapping: BTreeMap<ProductId, ProductId> =
        corpus.products().map(|p| (p.clone(), p.clone())).collect();
    let mut current = corpus.clone();
    loop {
        let index = PairIndex::new(current.matrix());
        let n = index.products.len();
        let mut components = UnionFind::<usize>::new(n);
        let mut linked = false;
        for p in 0..n {
            for (q, s) in index.exact_row(p) {
                if (q as usize) > p && s >= theta {
                    linked |= components.union(p, q as usize);
                }
            }
        }
        if !linked {
            break;
        }
        // union-find roots are arbitrary; the representative is the smallest
        // member, which is the first one met in sorted product order
        let mut representative: BTreeMap<usize, &ProductId> = BTreeMap::new();
        let mut rep_of = Vec::with_capacity(n);
        for (i, p) in index.products.iter().enumerate() {
            let rep = *representative.entry(components.find(i)).or_insert(p);
            rep_of.push(rep.clone());
        }
        let mut merged = PurchaseMatrix::new();
        for ((_, column), rep) in current.matrix().columns().zip(&rep_of) {
            for (user, &count) in column.iter() {
                merged.add(rep, user, count);
            }
        }
        let renamed: BTreeMap<&ProductId, &ProductId> =
            index.products.iter().copied().zip(&rep_of).collect();
        for target in mapping.values_mut() {
            *target = renamed[target].clone();
        }
        current = current.with_matrix(merged);
    }
    Ok(MergeOutcome {
        corpus: current,
        mapping,
    })
}
