//! Command-line front end: `build`, `recommend`, `eval-sketch`, `compare`.
//!
//! Settings come from built-in defaults, then an optional `--config` file of
//! `key=value` lines (keys are the long flag names), then the flags
//! themselves. Reports go to standard output as CSV; diagnostics go to
//! standard error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::corpus::{Corpus, LoadReport, MalformedRows, UserProfile};
use crate::eval::{compare_models, eval_sketch, write_eval_csv, EvalGrid};
use crate::parallel::Execution;
use crate::scoring::{recommend_objective, recommend_subjective, ScoringConfig};
use crate::similarity::{
    build_model_with, merge_similar_items, NeighborPolicy, SimilarityMode, SimilarityModel,
};
use crate::sketch::auto_width;

#[derive(Debug, Parser)]
#[command(name = "sketchrec", version, about = "Item-based recommendations from purchase logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a similarity model from an event log.
    Build(Flags),
    /// Print recommendations for one user.
    Recommend(Flags),
    /// Measure sketch accuracy on synthetic sets.
    EvalSketch(Flags),
    /// Compare exact and sketch models built from the same log.
    Compare(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Event log (CSV: timestamp,user_id,product_id,quantity).
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Model file to write (build) or read (recommend).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub user: Option<String>,
    /// exact | sketch
    #[arg(long)]
    pub mode: Option<String>,
    /// Sketch width in bits, or `auto` for the next power of two >= |U|/10.
    #[arg(long)]
    pub m: Option<String>,
    #[arg(long, conflicts_with = "threshold")]
    pub knn: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Preference propagation depth (0..=2).
    #[arg(long)]
    pub depth: Option<u32>,
    /// Cap of the saturating quantity transform; unset uses normalized quantities.
    #[arg(long)]
    pub ranking_cap: Option<f64>,
    /// neighbors | complement
    #[arg(long)]
    pub candidates: Option<String>,
    #[arg(long)]
    pub top: Option<usize>,
    /// Merge items whose exact similarity reaches this threshold before building.
    #[arg(long)]
    pub merge: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rank by plain similarity instead of preference-weighted similarity.
    #[arg(long)]
    pub objective: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// abort | skip
    #[arg(long)]
    pub on_malformed: Option<String>,
    /// Trials per grid cell (eval-sketch).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated set sizes (eval-sketch).
    #[arg(long)]
    pub grid_n: Option<String>,
    /// Comma-separated sketch widths (eval-sketch).
    #[arg(long)]
    pub grid_m: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchWidth {
    Auto,
    Fixed(usize),
}

impl SketchWidth {
    pub fn resolve(self, num_users: usize) -> usize {
        match self {
            Self::Auto => auto_width(num_users),
            Self::Fixed(m) => m,
        }
    }
}

impl FromStr for SketchWidth {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(m) if m > 0 => Ok(Self::Fixed(m)),
            _ => bail!("sketch width must be a positive integer or `auto`, got `{s}`"),
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub events: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub user: Option<String>,
    pub sketch_m: SketchWidth,
    pub policy: NeighborPolicy,
    pub mode: SimilarityMode,
    pub scoring: ScoringConfig,
    pub merge_threshold: Option<f64>,
    pub rng_seed: u64,
    pub objective: bool,
    pub on_malformed: MalformedRows,
    pub grid: EvalGrid,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            events: None,
            model: None,
            user: None,
            sketch_m: SketchWidth::Auto,
            policy: NeighborPolicy::default(),
            mode: SimilarityMode::default(),
            scoring: ScoringConfig::default(),
            merge_threshold: None,
            rng_seed: 0,
            objective: false,
            on_malformed: MalformedRows::Abort,
            grid: EvalGrid::default(),
        }
    }
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|v| v.trim().parse::<usize>().with_context(|| format!("bad {key} entry `{v}`")))
        .collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("{key} expects true or false, got `{raw}`"),
    }
}

/// Reads a `key=value` config file into flags. Blank lines and lines
/// starting with `#` are ignored; `_` and `-` are interchangeable in keys.
pub fn read_config_file(path: &Path) -> Result<Flags> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<Flags> {
    let mut flags = Flags::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().to_string();
        let num_err = || format!("line {}: bad value for {key}", i + 1);
        match key.as_str() {
            "events" => flags.events = Some(value.into()),
            "model" => flags.model = Some(value.into()),
            "user" => flags.user = Some(value),
            "mode" => flags.mode = Some(value),
            "m" => flags.m = Some(value),
            "knn" => flags.knn = Some(value.parse().with_context(num_err)?),
            "threshold" => flags.threshold = Some(value.parse().with_context(num_err)?),
            "depth" => flags.depth = Some(value.parse().with_context(num_err)?),
            "ranking-cap" => flags.ranking_cap = Some(value.parse().with_context(num_err)?),
            "candidates" => flags.candidates = Some(value),
            "top" => flags.top = Some(value.parse().with_context(num_err)?),
            "merge" => flags.merge = Some(value.parse().with_context(num_err)?),
            "seed" => flags.seed = Some(value.parse().with_context(num_err)?),
            "objective" => flags.objective = parse_bool("objective", &value)?,
            "on-malformed" => flags.on_malformed = Some(value),
            "trials" => flags.trials = Some(value.parse().with_context(num_err)?),
            "grid-n" => flags.grid_n = Some(value),
            "grid-m" => flags.grid_m = Some(value),
            "config" => bail!("line {}: config files cannot include other config files", i + 1),
            other => bail!("line {}: unknown key `{other}`", i + 1),
        }
    }
    if flags.knn.is_some() && flags.threshold.is_some() {
        bail!("knn and threshold are mutually exclusive");
    }
    Ok(flags)
}

impl CliConfig {
    /// Defaults, overridden by the config file (if any), overridden by flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => Flags::default(),
        };
        let mut config = Self::default();
        config.apply(&file)?;
        config.apply(flags)?;
        Ok(config)
    }

    fn apply(&mut self, flags: &Flags) -> Result<()> {
        if let Some(v) = &flags.events {
            self.events = Some(v.clone());
        }
        if let Some(v) = &flags.model {
            self.model = Some(v.clone());
        }
        if let Some(v) = &flags.user {
            self.user = Some(v.clone());
        }
        if let Some(v) = &flags.mode {
            self.mode = v.parse()?;
        }
        if let Some(v) = &flags.m {
            self.sketch_m = v.parse()?;
        }
        if let Some(k) = flags.knn {
            self.policy = NeighborPolicy::knn(k)?;
        }
        if let Some(tau) = flags.threshold {
            self.policy = NeighborPolicy::threshold(tau)?;
        }
        let depth = flags.depth.unwrap_or(self.scoring.depth());
        let cap = flags.ranking_cap.or(self.scoring.ranking_cap());
        let candidates = match &flags.candidates {
            Some(v) => v.parse()?,
            None => self.scoring.candidates(),
        };
        let top = flags.top.unwrap_or(self.scoring.top_n());
        self.scoring = ScoringConfig::new(depth, cap, candidates, top)?;
        if let Some(theta) = flags.merge {
            if !(theta > 0.0 && theta <= 1.0) {
                bail!("merge threshold {theta} must lie in (0, 1]");
            }
            self.merge_threshold = Some(theta);
        }
        if let Some(seed) = flags.seed {
            self.rng_seed = seed;
            self.grid.seed = seed;
        }
        self.objective |= flags.objective;
        if let Some(v) = &flags.on_malformed {
            self.on_malformed = match v.as_str() {
                "abort" => MalformedRows::Abort,
                "skip" => MalformedRows::Skip,
                _ => bail!("on-malformed expects abort or skip, got `{v}`"),
            };
        }
        if let Some(trials) = flags.trials {
            self.grid.trials = trials;
        }
        if let Some(v) = &flags.grid_n {
            self.grid.cardinalities = parse_list("grid-n", v)?;
        }
        if let Some(v) = &flags.grid_m {
            self.grid.widths = parse_list("grid-m", v)?;
            if self.grid.widths.contains(&0) {
                bail!("grid-m widths must be positive");
            }
        }
        Ok(())
    }

    fn events_path(&self) -> Result<&Path> {
        self.events.as_deref().ok_or_else(|| anyhow!("--events is required"))
    }

    fn model_path(&self) -> Result<&Path> {
        self.model.as_deref().ok_or_else(|| anyhow!("--model is required"))
    }
}

/// Loads the event log and sketches it at the configured width.
fn load_corpus(
    config: &CliConfig,
    width: Option<usize>,
    err: &mut dyn Write,
) -> Result<(Corpus, LoadReport)> {
    let path = config.events_path()?;
    let initial = width.unwrap_or(match config.sketch_m {
        SketchWidth::Fixed(m) => m,
        SketchWidth::Auto => 1,
    });
    let mut corpus = Corpus::new(initial)?;
    let report = corpus.load_events(path, config.on_malformed)?;
    for row in &report.skipped {
        writeln!(err, "warning: skipped {}: {row}", path.display())?;
    }
    if width.is_none() && config.sketch_m == SketchWidth::Auto {
        let m = auto_width(corpus.matrix().num_users());
        corpus = corpus.with_sketch_width(m)?;
    }
    Ok((corpus, report))
}

fn apply_merge(config: &CliConfig, corpus: Corpus) -> Result<(Corpus, usize)> {
    match config.merge_threshold {
        None => Ok((corpus, 0)),
        Some(theta) => {
            let outcome = merge_similar_items(&corpus, theta)?;
            let merged = outcome.merged_count();
            Ok((outcome.corpus, merged))
        }
    }
}

pub fn cmd_build(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model_path = config.model_path()?;
    let (corpus, load) = load_corpus(config, None, err)?;
    let (corpus, merged) = apply_merge(config, corpus)?;
    let started = Instant::now();
    let (model, stats) = build_model_with(&corpus, config.policy, config.mode, Execution::default());
    let build_ms = started.elapsed().as_millis();
    model.save(model_path)?;
    writeln!(
        out,
        "mode,policy,m,products,users,events,skipped_rows,merged_items,pair_evaluations,build_ms"
    )?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        config.mode,
        config.policy,
        corpus.sketch_width(),
        corpus.matrix().num_products(),
        corpus.matrix().num_users(),
        load.applied,
        load.skipped.len(),
        merged,
        stats.pair_evaluations,
        build_ms
    )?;
    Ok(())
}

pub fn cmd_recommend(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let user = config.user.as_deref().ok_or_else(|| anyhow!("--user is required"))?;
    let model = SimilarityModel::load(config.model_path()?)?;
    // sketches play no part in scoring
    let (corpus, _) = load_corpus(config, Some(1), err)?;
    let (corpus, _) = apply_merge(config, corpus)?;
    let profile: UserProfile = corpus.user_profile(user);
    let recs = if config.objective {
        recommend_objective(&model, &profile, &config.scoring)
    } else {
        recommend_subjective(&corpus, &model, &profile, &config.scoring)
    };
    for (rank, r) in recs.iter().enumerate() {
        writeln!(
            out,
            "{} {} {:.6} {}",
            rank + 1,
            r.product_id,
            r.score,
            r.best_source_item
        )?;
    }
    Ok(())
}

pub fn cmd_eval_sketch(config: &CliConfig, out: &mut dyn Write) -> Result<()> {
    let mut grid = config.grid.clone();
    if let SketchWidth::Fixed(m) = config.sketch_m {
        grid.widths = vec![m];
    }
    let rows = eval_sketch(&grid, Execution::default());
    write_eval_csv(&rows, out)?;
    Ok(())
}

pub fn cmd_compare(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let (corpus, _) = load_corpus(config, None, err)?;
    let (corpus, _) = apply_merge(config, corpus)?;
    let report = compare_models(
        &corpus,
        config.policy,
        &config.scoring,
        config.objective,
        Execution::default(),
    );
    report.write_csv(out)?;
    Ok(())
}

pub fn execute(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Build(flags) => cmd_build(&CliConfig::resolve(flags)?, out, err),
        Command::Recommend(flags) => cmd_recommend(&CliConfig::resolve(flags)?, out, err),
        Command::EvalSketch(flags) => cmd_eval_sketch(&CliConfig::resolve(flags)?, out),
        Command::Compare(flags) => cmd_compare(&CliConfig::resolve(flags)?, out, err),
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}
