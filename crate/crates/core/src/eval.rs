//! Seeded evaluation harnesses: sketch accuracy over a grid of set sizes and
//! widths, synthetic purchase logs, and exact-vs-sketch model agreement.
//!
//! All randomness comes from SplitMix64 streams. Every trial derives its own
//! stream from the run seed and the trial's coordinates, so results do not
//! depend on the order in which trials execute.

use std::collections::{BTreeSet, HashSet};
use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::corpus::{Corpus, Event, ProductId, EVENT_LOG_HEADER};
use crate::parallel::Execution;
use crate::scoring::{recommend_objective, recommend_subjective, ScoringConfig};
use crate::similarity::{build_model_with, NeighborPolicy, SimilarityMode, SimilarityModel};
use crate::sketch::LinearCountingSketch;

/// Independent generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> SplitMix64 {
    let scrambled = SplitMix64::seed_from_u64(stream).next_u64();
    SplitMix64::seed_from_u64(seed ^ scrambled)
}

/// `n` distinct random user ids.
pub fn random_user_ids<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    let mut seen = HashSet::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    while ids.len() < n {
        let raw = rng.next_u64();
        if seen.insert(raw) {
            ids.push(format!("u{raw:016x}"));
        }
    }
    ids
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalGrid {
    pub cardinalities: Vec<usize>,
    pub widths: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self {
            cardinalities: vec![0, 64, 256, 512, 1024, 2048, 4096],
            widths: vec![256, 1024, 4096],
            trials: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub median_rel_err_cardinality: f64,
    pub mae_jaccard: f64,
}

/// Errors of one trial: two sets of `n` users sharing `n / 2` of them.
fn sketch_trial(n: usize, m: usize, seed: u64, stream: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, stream);
    let shared = n / 2;
    let ids = random_user_ids(&mut rng, 2 * n - shared);
    let a = LinearCountingSketch::from_ids(m, &ids[..n]).expect("grid widths are positive");
    let b = LinearCountingSketch::from_ids(m, &ids[n - shared..]).expect("grid widths are positive");
    let estimate = a.estimate().value;
    let rel_err = if n == 0 {
        estimate
    } else {
        (estimate - n as f64).abs() / n as f64
    };
    let union = 2 * n - shared;
    let true_jaccard = if union == 0 { 0.0 } else { shared as f64 / union as f64 };
    let jaccard = a.estimate_jaccard(&b).expect("same width");
    (rel_err, (jaccard - true_jaccard).abs())
}

/// Runs `grid.trials` trials for every `(n, m)` cell, in the order
/// cardinalities × widths.
pub fn eval_sketch(grid: &EvalGrid, execution: Execution) -> Vec<EvalRow> {
    let cells: Vec<(usize, usize)> = grid
        .cardinalities
        .iter()
        .flat_map(|&n| grid.widths.iter().map(move |&m| (n, m)))
        .collect();
    let trials = grid.trials;
    let outcomes = execution.map_indexed(cells.len() * trials, |i| {
        let (n, m) = cells[i / trials];
        sketch_trial(n, m, grid.seed, i as u64)
    });
    cells
        .iter()
        .enumerate()
        .map(|(c, &(n, m))| {
            let cell = &outcomes[c * trials..(c + 1) * trials];
            let mut rel: Vec<f64> = cell.iter().map(|o| o.0).collect();
            let mae = if trials == 0 {
                0.0
            } else {
                cell.iter().map(|o| o.1).sum::<f64>() / trials as f64
            };
            EvalRow {
                n,
                m,
                trials,
                median_rel_err_cardinality: median(&mut rel),
                mae_jaccard: mae,
            }
        })
        .collect()
}

pub fn write_eval_csv<W: Write + ?Sized>(rows: &[EvalRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "n,m,trials,median_rel_err_cardinality,mae_jaccard")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            r.n, r.m, r.trials, r.median_rel_err_cardinality, r.mae_jaccard
        )?;
    }
    Ok(())
}

/// Shape of a synthetic purchase log with planted taste groups.
///
/// Items are split round-robin into `groups`; each user belongs to one group
/// and buys mostly from it, with Zipf-like popularity inside the group.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub groups: usize,
    pub min_purchases: usize,
    pub max_purchases: usize,
    /// Probability that a purchase ignores the user's group.
    pub noise: f64,
    pub max_quantity: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 100,
            items: 30,
            groups: 3,
            min_purchases: 2,
            max_purchases: 6,
            noise: 0.1,
            max_quantity: 3,
        }
    }
}

/// Generates a purchase log; timestamps count up from zero.
pub fn synthetic_events(spec: &SyntheticSpec, seed: u64) -> Vec<Event> {
    assert!(spec.items >= 1 && spec.groups >= 1 && spec.groups <= spec.items);
    assert!(spec.min_purchases <= spec.max_purchases && spec.max_quantity >= 1);
    let mut rng = stream_rng(seed, 0);
    let group_items: Vec<Vec<usize>> = (0..spec.groups)
        .map(|g| (g..spec.items).step_by(spec.groups).collect())
        .collect();
    let group_pickers: Vec<WeightedIndex<f64>> = group_items
        .iter()
        .map(|items| {
            WeightedIndex::new((0..items.len()).map(|rank| 1.0 / (rank + 1) as f64))
                .expect("non-empty group")
        })
        .collect();
    let width = spec.items.to_string().len();
    let mut events = Vec::new();
    for user in 0..spec.users {
        let group = rng.random_range(0..spec.groups);
        let purchases = rng.random_range(spec.min_purchases..=spec.max_purchases);
        for _ in 0..purchases {
            let item = if rng.random_bool(spec.noise) {
                rng.random_range(0..spec.items)
            } else {
                group_items[group][group_pickers[group].sample(&mut rng)]
            };
            events.push(Event {
                timestamp: events.len() as i64,
                user: format!("user{user}").into(),
                product: format!("item{item:0width$}").into(),
                quantity: rng.random_range(1..=spec.max_quantity),
            });
        }
    }
    events
}

pub fn write_event_log<W: Write + ?Sized>(events: &[Event], out: &mut W) -> io::Result<()> {
    writeln!(out, "{EVENT_LOG_HEADER}")?;
    for e in events {
        writeln!(out, "{},{},{},{}", e.timestamp, e.user, e.product, e.quantity)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemAgreement {
    pub item: ProductId,
    pub exact_neighbors: usize,
    pub sketch_neighbors: usize,
    /// Jaccard overlap of the two neighbor sets; 1 when both are empty.
    pub neighbor_jaccard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub sketch_width: usize,
    pub items: Vec<ItemAgreement>,
    pub users: usize,
    /// Users whose top recommendation is the same item under both models
    /// (both empty counts as agreement).
    pub top1_agreements: usize,
    /// Users whose sketch-model top item also reaches the exact model's best
    /// score, so exact ties resolved differently still agree.
    pub top1_argmax_agreements: usize,
}

impl CompareReport {
    pub fn top1_agreement(&self) -> f64 {
        if self.users == 0 {
            1.0
        } else {
            self.top1_agreements as f64 / self.users as f64
        }
    }

    pub fn top1_argmax_agreement(&self) -> f64 {
        if self.users == 0 {
            1.0
        } else {
            self.top1_argmax_agreements as f64 / self.users as f64
        }
    }

    pub fn mean_neighbor_jaccard(&self) -> f64 {
        if self.items.is_empty() {
            1.0
        } else {
            self.items.iter().map(|i| i.neighbor_jaccard).sum::<f64>() / self.items.len() as f64
        }
    }

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "item,exact_neighbors,sketch_neighbors,neighbor_jaccard")?;
        for i in &self.items {
            writeln!(
                out,
                "{},{},{},{:.6}",
                i.item, i.exact_neighbors, i.sketch_neighbors, i.neighbor_jaccard
            )?;
        }
        writeln!(out)?;
        writeln!(out, "metric,value")?;
        writeln!(out, "sketch_m,{}", self.sketch_width)?;
        writeln!(out, "items,{}", self.items.len())?;
        writeln!(out, "users,{}", self.users)?;
        writeln!(out, "top1_agreements,{}", self.top1_agreements)?;
        writeln!(out, "top1_agreement,{:.6}", self.top1_agreement())?;
        writeln!(out, "top1_argmax_agreements,{}", self.top1_argmax_agreements)?;
        writeln!(out, "top1_argmax_agreement,{:.6}", self.top1_argmax_agreement())?;
        writeln!(out, "mean_neighbor_jaccard,{:.6}", self.mean_neighbor_jaccard())
    }
}

fn neighbor_set(model: &SimilarityModel, item: &str) -> BTreeSet<ProductId> {
    model
        .neighbors(item)
        .unwrap_or_default()
        .iter()
        .map(|n| n.product.clone())
        .collect()
}

/// Builds exact and sketch models of `corpus` (at its sketch width) and
/// measures how far their neighbor sets and top recommendations agree.
pub fn compare_models(
    corpus: &Corpus,
    policy: NeighborPolicy,
    scoring: &ScoringConfig,
    objective: bool,
    execution: Execution,
) -> CompareReport {
    let (exact, _) = build_model_with(corpus, policy, SimilarityMode::Exact, execution);
    let (sketch, _) = build_model_with(corpus, policy, SimilarityMode::Sketch, execution);
    let items = corpus
        .products()
        .map(|p| {
            let a = neighbor_set(&exact, p.as_str());
            let b = neighbor_set(&sketch, p.as_str());
            let union = a.union(&b).count();
            let neighbor_jaccard = if union == 0 {
                1.0
            } else {
                a.intersection(&b).count() as f64 / union as f64
            };
            ItemAgreement {
                item: p.clone(),
                exact_neighbors: a.len(),
                sketch_neighbors: b.len(),
                neighbor_jaccard,
            }
        })
        .collect();
    let users: Vec<_> = corpus.matrix().users().collect();
    let full = ScoringConfig::new(
        scoring.depth(),
        scoring.ranking_cap(),
        scoring.candidates(),
        usize::MAX,
    )
    .expect("derived from a valid config");
    let agreements = execution.map_indexed(users.len(), |i| {
        let profile = corpus.user_profile(users[i].as_str());
        let ranked = |model: &SimilarityModel| {
            if objective {
                recommend_objective(model, &profile, &full)
            } else {
                recommend_subjective(corpus, model, &profile, &full)
            }
        };
        let exact_list = ranked(&exact);
        let sketch_top = ranked(&sketch).into_iter().next().map(|r| r.product_id);
        let exact_top = exact_list.first();
        let same = exact_top.map(|r| &r.product_id) == sketch_top.as_ref();
        let argmax = match (exact_top, &sketch_top) {
            (None, None) => true,
            (Some(best), Some(id)) => exact_list
                .iter()
                .find(|r| &r.product_id == id)
                .is_some_and(|r| best.score - r.score <= 1e-12 * best.score),
            _ => false,
        };
        (same, argmax)
    });
    CompareReport {
        sketch_width: corpus.sketch_width(),
        items,
        users: users.len(),
        top1_agreements: agreements.iter().filter(|a| a.0).count(),
        top1_argmax_agreements: agreements.iter().filter(|a| a.1).count(),
    }
}
