//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here works on plain `BTreeMap`/`BTreeSet` data built straight
//! from event triples, never on the library's own indexes.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use sketchrec::Corpus;

pub type Triples = Vec<(String, String, u64)>;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Random purchase triples over at most `max_users` users and `max_items`
/// items; repeated (user, item) pairs are allowed and accumulate.
pub fn random_triples<R: Rng>(rng: &mut R, max_users: usize, max_items: usize, max_qty: u64) -> Triples {
    let users = rng.random_range(1..=max_users);
    let items = rng.random_range(1..=max_items);
    let density = rng.random_range(0.05..0.5);
    let mut out = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(density) {
                out.push((format!("u{u}"), format!("p{i:02}"), rng.random_range(1..=max_qty)));
            }
        }
    }
    if out.is_empty() {
        out.push(("u0".into(), "p00".into(), 1));
    }
    out
}

pub fn corpus_of(triples: &Triples, m: usize) -> Corpus {
    let mut corpus = Corpus::new(m).unwrap();
    for (u, p, q) in triples {
        corpus.record_event(u.as_str(), p.as_str(), *q).unwrap();
    }
    corpus
}

/// item -> user -> summed quantity
pub fn counts(triples: &Triples) -> BTreeMap<String, BTreeMap<String, u64>> {
    let mut m: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (u, p, q) in triples {
        *m.entry(p.clone()).or_default().entry(u.clone()).or_default() += q;
    }
    m
}

pub fn buyers(counts: &BTreeMap<String, BTreeMap<String, u64>>, p: &str) -> BTreeSet<String> {
    counts.get(p).map(|c| c.keys().cloned().collect()).unwrap_or_default()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Policy {
    Knn(usize),
    Threshold(f64),
}

/// Neighbor lists by full sort: similarity descending, id ascending, zero
/// similarities excluded.
pub fn neighbor_lists(
    counts: &BTreeMap<String, BTreeMap<String, u64>>,
    policy: Policy,
) -> BTreeMap<String, Vec<(String, f64)>> {
    let mut lists = BTreeMap::new();
    for p in counts.keys() {
        let bp = buyers(counts, p);
        let mut row: Vec<(String, f64)> = counts
            .keys()
            .filter(|q| *q != p)
            .map(|q| (q.clone(), jaccard(&bp, &buyers(counts, q))))
            .filter(|(_, j)| *j > 0.0)
            .collect();
        row.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        match policy {
            Policy::Knn(k) => row.truncate(k),
            Policy::Threshold(tau) => row.retain(|(_, j)| *j >= tau),
        }
        lists.insert(p.clone(), row);
    }
    lists
}

pub fn lookup(lists: &BTreeMap<String, Vec<(String, f64)>>, p: &str, q: &str) -> f64 {
    lists[p].iter().find(|(id, _)| id == q).map_or(0.0, |(_, j)| *j)
}

/// `(candidate, score, source)` ranked by score descending then id; each
/// candidate's source is the smallest purchased item reaching its best
/// score.
pub fn rank(
    lists: &BTreeMap<String, Vec<(String, f64)>>,
    profile: &BTreeSet<String>,
    weight: impl Fn(&str) -> f64,
    top_n: usize,
) -> Vec<(String, f64, String)> {
    let candidates: BTreeSet<&String> = profile
        .iter()
        .filter_map(|p| lists.get(p))
        .flatten()
        .map(|(c, _)| c)
        .filter(|c| !profile.contains(*c))
        .collect();
    let mut out = Vec::new();
    for c in candidates {
        let mut best: Option<(f64, &String)> = None;
        for p in profile.iter().filter(|p| lists.contains_key(*p)) {
            let s = weight(p) * lookup(lists, p, c);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, p));
            }
        }
        if let Some((s, p)) = best.filter(|(s, _)| *s > 0.0) {
            out.push((c.clone(), s, p.clone()));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out.truncate(top_n);
    out
}

pub fn profile_of(counts: &BTreeMap<String, BTreeMap<String, u64>>, user: &str) -> BTreeSet<String> {
    counts
        .iter()
        .filter(|(_, col)| col.contains_key(user))
        .map(|(p, _)| p.clone())
        .collect()
}

pub fn users_of(triples: &Triples) -> BTreeSet<String> {
    triples.iter().map(|(u, _, _)| u.clone()).collect()
}

/// Quantity over the mean quantity among the item's buyers.
pub fn normalized(counts: &BTreeMap<String, BTreeMap<String, u64>>, p: &str, user: &str) -> f64 {
    let col = &counts[p];
    let Some(&q) = col.get(user) else {
        return 0.0;
    };
    let mean = col.values().sum::<u64>() as f64 / col.len() as f64;
    q as f64 / mean
}

/// Preference by explicit path enumeration: every walk
/// `p = p0 -> p1 -> ... -> pt` with each step in the closed neighborhood
/// (the item itself at similarity 1) contributes
/// `base(pt) * J(p0,p1) * ... * J(p(t-1),pt)`.
pub fn gamma_paths(
    lists: &BTreeMap<String, Vec<(String, f64)>>,
    p: &str,
    depth: u32,
    base: &dyn Fn(&str) -> f64,
) -> f64 {
    let closed = |x: &str| -> Vec<(String, f64)> {
        let mut v = vec![(x.to_string(), 1.0)];
        v.extend(lists[x].iter().cloned());
        v
    };
    let mut walks: Vec<(String, f64)> = vec![(p.to_string(), 1.0)];
    for _ in 0..depth {
        walks = walks
            .iter()
            .flat_map(|(end, w)| closed(end).into_iter().map(move |(next, j)| (next, w * j)))
            .collect();
    }
    walks.iter().map(|(end, w)| base(end) * w).sum()
}
