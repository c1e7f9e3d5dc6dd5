mod common;

use std::collections::BTreeSet;

use sketchrec::{build_model, gamma, recommend_subjective, CandidatePolicy, NeighborPolicy, ScoringConfig, SimilarityMode};

use common::Policy;

/// Preference-weighted recommendation by exhaustive search over every
/// (purchased item, candidate) pair, with the depth-1 preference spelled out.
fn brute_subjective_depth1(
    triples: &common::Triples,
    policy: Policy,
    user: &str,
    top_n: usize,
) -> Vec<(String, f64, String)> {
    let counts = common::counts(triples);
    let lists = common::neighbor_lists(&counts, policy);
    let profile = common::profile_of(&counts, user);
    let gamma1 = |p: &str| {
        common::normalized(&counts, p, user)
            + lists[p]
                .iter()
                .map(|(q, j)| common::normalized(&counts, q, user) * j)
                .sum::<f64>()
    };
    let mut scored = Vec::new();
    for c in counts.keys().filter(|c| !profile.contains(*c)) {
        let mut best: Option<(f64, &String)> = None;
        for p in &profile {
            let in_neighbors = lists[p].iter().any(|(q, _)| q == c);
            let s = if in_neighbors { gamma1(p) * common::lookup(&lists, p, c) } else { 0.0 };
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, p));
            }
        }
        if let Some((s, p)) = best.filter(|(s, _)| *s > 0.0) {
            scored.push((c.clone(), s, p.clone()));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top_n);
    scored
}

fn assert_same(got: &[sketchrec::Recommendation], want: &[(String, f64, String)]) {
    assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
    for (g, (c, s, p)) in got.iter().zip(want) {
        assert_eq!(g.product_id.as_str(), c);
        assert!((g.score - s).abs() <= 1e-12 * s.max(1.0), "{} vs {s}", g.score);
        assert_eq!(g.best_source_item.as_str(), p);
    }
}

#[test]
fn depth_one_on_four_items_matches_brute_force() {
    let triples: common::Triples = [
        ("u1", "a", 3), ("u1", "b", 1),
        ("u2", "a", 1), ("u2", "c", 2),
        ("u3", "b", 4), ("u3", "c", 1), ("u3", "d", 1),
        ("u4", "d", 2), ("u4", "a", 1),
        ("u5", "c", 1),
    ]
    .iter()
    .map(|&(u, p, q)| (u.to_string(), p.to_string(), q))
    .collect();
    let corpus = common::corpus_of(&triples, 16);
    let model = build_model(&corpus, NeighborPolicy::Knn(2), SimilarityMode::Exact);
    let config = ScoringConfig::new(1, None, CandidatePolicy::NeighborsOfProfile, 10).unwrap();
    let mut nonempty = 0;
    for user in common::users_of(&triples) {
        let got = recommend_subjective(&corpus, &model, &corpus.user_profile(&user), &config);
        assert_same(&got, &brute_subjective_depth1(&triples, Policy::Knn(2), &user, 10));
        nonempty += usize::from(!got.is_empty());
    }
    assert!(nonempty >= 3);
}

#[test]
fn depth_one_on_random_corpora_matches_brute_force() {
    let mut rng = common::rng(41);
    for _ in 0..100 {
        let triples = common::random_triples(&mut rng, 12, 6, 5);
        let corpus = common::corpus_of(&triples, 16);
        let model = build_model(&corpus, NeighborPolicy::Threshold(0.1), SimilarityMode::Exact);
        let config = ScoringConfig::new(1, None, CandidatePolicy::NeighborsOfProfile, 4).unwrap();
        for user in common::users_of(&triples) {
            let got = recommend_subjective(&corpus, &model, &corpus.user_profile(&user), &config);
            assert_same(&got, &brute_subjective_depth1(&triples, Policy::Threshold(0.1), &user, 4));
        }
    }
}

#[test]
fn depth_two_on_three_items_by_hand() {
    // a={u,v} b={v,w} c={w}: J(a,b)=1/3, J(b,c)=1/2, J(a,c)=0
    let triples: common::Triples = [("u", "a", 1), ("v", "a", 1), ("v", "b", 2), ("w", "b", 2), ("w", "c", 1)]
        .iter()
        .map(|&(u, p, q)| (u.to_string(), p.to_string(), q))
        .collect();
    let corpus = common::corpus_of(&triples, 16);
    let model = build_model(&corpus, NeighborPolicy::Knn(5), SimilarityMode::Exact);
    let config = ScoringConfig::default();
    // user v: base a=1, b=1, c=0
    // depth 1: a = 1 + 1/3, b = 1 + 1/3 + 0, c = 0 + 1/2
    // depth 2: a = 4/3 + (4/3)/3 = 16/9
    //          b = 4/3 + (4/3)/3 + (1/2)/2 = 16/9 + 1/4
    //          c = 1/2 + (4/3)/2 = 7/6
    let want = [("a", 16.0 / 9.0), ("b", 16.0 / 9.0 + 0.25), ("c", 7.0 / 6.0)];
    for (p, value) in want {
        let got = gamma(&corpus, &model, "v", p, 2, &config).unwrap();
        assert!((got - value).abs() < 1e-12, "{p}: {got} vs {value}");
    }
    let counts = common::counts(&triples);
    let lists = common::neighbor_lists(&counts, Policy::Knn(5));
    let base = |q: &str| common::normalized(&counts, q, "v");
    for (p, value) in want {
        assert!((common::gamma_paths(&lists, p, 2, &base) - value).abs() < 1e-12);
    }
}

#[test]
fn complement_candidates_reach_every_unowned_item() {
    let triples: common::Triples = [("x", "a", 1), ("y", "a", 1), ("y", "b", 1), ("z", "c", 1)]
        .iter()
        .map(|&(u, p, q)| (u.to_string(), p.to_string(), q))
        .collect();
    let corpus = common::corpus_of(&triples, 16);
    let model = build_model(&corpus, NeighborPolicy::Knn(5), SimilarityMode::Exact);
    let candidates = sketchrec::scoring::candidates(&model, &corpus.user_profile("x"), CandidatePolicy::ComplementOfProfile);
    let ids: BTreeSet<&str> = candidates.iter().map(|c| c.as_str()).collect();
    assert_eq!(ids, BTreeSet::from(["b", "c"]));
    // c shares no buyer with a, so it never scores
    let config = ScoringConfig::new(1, None, CandidatePolicy::ComplementOfProfile, 10).unwrap();
    let recs = recommend_subjective(&corpus, &model, &corpus.user_profile("x"), &config);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].product_id.as_str(), "b");
}
