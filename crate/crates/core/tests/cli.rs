mod common;

use std::fs;
use std::path::{Path, PathBuf};

use sketchrec::cli::run;
use tempfile::TempDir;

fn sketchrec(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["sketchrec"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOY: &str = "timestamp,user_id,product_id,quantity\n\
    2024-01-01,alice,apple,1\n\
    2024-01-02,bob,apple,1\n\
    2024-01-03,bob,pear,1\n";

#[test]
fn toy_log_builds_and_recommends() {
    let dir = TempDir::new().unwrap();
    let events = write(&dir, "events.csv", TOY);
    let model = dir.path().join("toy.model");
    let (code, out, err) = sketchrec(&["build", "--events", s(&events), "--model", s(&model), "--mode", "exact"]);
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("mode,policy,m,products,users,events,skipped_rows,merged_items,pair_evaluations,build_ms")
    );
    assert!(lines.next().unwrap().starts_with("exact,knn:20,1,2,2,3,0,0,"));
    assert_eq!(
        fs::read_to_string(&model).unwrap(),
        "sketchrec-model v1 mode=exact policy=knn:20\nitem apple : pear=0.500000\nitem pear : apple=0.500000\n"
    );

    let (code, out, err) = sketchrec(&["recommend", "--events", s(&events), "--model", s(&model), "--user", "alice"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out, "1 pear 0.500000 apple\n");
}

#[test]
fn build_reports_mode_for_exact_and_sketch() {
    let dir = TempDir::new().unwrap();
    let events = write(&dir, "events.csv", TOY);
    for mode in ["exact", "sketch"] {
        let model = dir.path().join(format!("{mode}.model"));
        let (code, out, _) =
            sketchrec(&["build", "--events", s(&events), "--model", s(&model), "--mode", mode, "--m", "auto"]);
        assert_eq!(code, 0);
        assert!(out.lines().nth(1).unwrap().starts_with(&format!("{mode},")));
        let text = fs::read_to_string(&model).unwrap();
        assert_eq!(text.contains("\nsketch "), mode == "sketch");
    }
}

#[test]
fn unreadable_log_fails_with_diagnostic() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let model = dir.path().join("m.model");
    let (code, out, err) = sketchrec(&["build", "--events", s(&missing), "--model", s(&model)]);
    assert_ne!(code, 0);
    assert!(out.is_empty());
    assert!(err.starts_with("error:"), "{err}");
    assert!(!model.exists());
}

#[test]
fn malformed_rows_abort_or_warn() {
    let dir = TempDir::new().unwrap();
    let events = write(&dir, "events.csv", &format!("{TOY}2024-01-04,carol,fig,0\n"));
    let model = dir.path().join("m.model");
    let (code, _, err) = sketchrec(&["build", "--events", s(&events), "--model", s(&model)]);
    assert_eq!(code, 1);
    assert!(err.contains("line 5"), "{err}");

    let (code, out, err) =
        sketchrec(&["build", "--events", s(&events), "--model", s(&model), "--on-malformed", "skip"]);
    assert_eq!(code, 0);
    assert!(err.starts_with("warning:"), "{err}");
    assert!(out.lines().nth(1).unwrap().contains(",3,1,0,"));
}

#[test]
fn objective_and_default_agree_on_unit_quantities() {
    let dir = TempDir::new().unwrap();
    let mut log = String::from("timestamp,user_id,product_id,quantity\n");
    let mut rng = common::rng(11);
    let triples = common::random_triples(&mut rng, 30, 12, 1);
    for (i, (u, p, _)) in triples.iter().enumerate() {
        log.push_str(&format!("{i},{u},{p},1\n"));
    }
    let events = write(&dir, "events.csv", &log);
    let model = dir.path().join("m.model");
    let (code, _, _) = sketchrec(&["build", "--events", s(&events), "--model", s(&model), "--mode", "exact"]);
    assert_eq!(code, 0);
    let mut nonempty = 0;
    for user in common::users_of(&triples) {
        let base = ["recommend", "--events", s(&events), "--model", s(&model), "--user", &user, "--depth", "0"];
        let (_, default, _) = sketchrec(&base);
        let mut objective_args = base.to_vec();
        objective_args.push("--objective");
        let (_, objective, _) = sketchrec(&objective_args);
        assert_eq!(default, objective, "user {user}");
        nonempty += usize::from(!default.is_empty());
    }
    assert!(nonempty > 0);
}

#[test]
fn unknown_user_prints_nothing() {
    let dir = TempDir::new().unwrap();
    let events = write(&dir, "events.csv", TOY);
    let model = dir.path().join("m.model");
    assert_eq!(sketchrec(&["build", "--events", s(&events), "--model", s(&model)]).0, 0);
    let (code, out, err) = sketchrec(&["recommend", "--events", s(&events), "--model", s(&model), "--user", "zed"]);
    assert_eq!((code, out.as_str(), err.as_str()), (0, "", ""));
}

#[test]
fn recommend_matches_hand_computed_list() {
    // buyers: a={1,2,3} b={2,3} c={3,4} d={4} e={1} f={5}
    let rows = [
        ("u1", "a"), ("u2", "a"), ("u3", "a"),
        ("u2", "b"), ("u3", "b"),
        ("u3", "c"), ("u4", "c"),
        ("u4", "d"),
        ("u1", "e"),
        ("u5", "f"),
    ];
    let mut log = String::from("timestamp,user_id,product_id,quantity\n");
    for (i, (u, p)) in rows.iter().enumerate() {
        log.push_str(&format!("{i},{u},{p},1\n"));
    }
    let dir = TempDir::new().unwrap();
    let events = write(&dir, "events.csv", &log);
    let model = dir.path().join("m.model");
    let build = ["build", "--events", s(&events), "--model", s(&model), "--mode", "exact", "--knn", "2"];
    assert_eq!(sketchrec(&build).0, 0);
    // u2 owns a and b; N(a) = [b 2/3, e 1/3], N(b) = [a 2/3, c 1/3]
    let (_, out, _) = sketchrec(&["recommend", "--events", s(&events), "--model", s(&model), "--user", "u2", "--objective"]);
    assert_eq!(out, "1 c 0.333333 b\n2 e 0.333333 a\n");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let events = write(&dir, "events.csv", TOY);
    let config = write(&dir, "run.conf", "# shared settings\nmode=exact\nknn=5\n");
    let model = dir.path().join("m.model");
    let (code, out, _) = sketchrec(&[
        "build", "--config", s(&config), "--events", s(&events), "--model", s(&model), "--threshold", "0.25",
    ]);
    assert_eq!(code, 0);
    assert!(out.lines().nth(1).unwrap().starts_with("exact,threshold:0.25,"));
}

#[test]
fn eval_sketch_is_seeded() {
    let args = ["eval-sketch", "--seed", "5", "--trials", "20", "--grid-n", "0,100", "--grid-m", "64,256"];
    let (code, first, _) = sketchrec(&args);
    assert_eq!(code, 0);
    assert_eq!(sketchrec(&args).1, first);
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "n,m,trials,median_rel_err_cardinality,mae_jaccard");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0,64,20,0.000000,"));
    let other = sketchrec(&["eval-sketch", "--seed", "6", "--trials", "20", "--grid-n", "0,100", "--grid-m", "64,256"]).1;
    assert_ne!(other, first);
}

#[test]
fn compare_on_single_item_is_trivial() {
    let dir = TempDir::new().unwrap();
    let events = write(
        &dir,
        "events.csv",
        "timestamp,user_id,product_id,quantity\n1,alice,apple,2\n2,bob,apple,1\n",
    );
    let (code, out, err) = sketchrec(&["compare", "--events", s(&events)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("item,exact_neighbors,sketch_neighbors,neighbor_jaccard\napple,0,0,1.000000\n"));
    assert!(out.contains("\ntop1_agreement,1.000000\n"));
}

#[test]
fn merge_flag_folds_duplicates_before_building() {
    let dir = TempDir::new().unwrap();
    let events = write(
        &dir,
        "events.csv",
        "timestamp,user_id,product_id,quantity\n\
         1,u1,x,1\n2,u1,x2,1\n3,u2,x,1\n4,u2,x2,1\n5,u2,y,1\n6,u3,y,1\n",
    );
    let model = dir.path().join("m.model");
    let (code, out, _) =
        sketchrec(&["build", "--events", s(&events), "--model", s(&model), "--mode", "exact", "--merge", "0.95"]);
    assert_eq!(code, 0);
    assert!(out.lines().nth(1).unwrap().starts_with("exact,knn:20,1,2,3,6,0,1,"));
    assert_eq!(
        fs::read_to_string(&model).unwrap(),
        "sketchrec-model v1 mode=exact policy=knn:20\nitem x : y=0.333333\nitem y : x=0.333333\n"
    );
}
