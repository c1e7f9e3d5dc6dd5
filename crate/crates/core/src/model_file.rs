//! Versioned text encoding of a [`SimilarityModel`].
//!
//! ```text
//! sketchrec-model v1 mode=<exact|sketch> policy=<knn:k|threshold:tau>
//! item <id> : <neighbor>=<similarity> ...
//! sketch <id> <m> <hex bits>
//! ```
//!
//! Similarities are written with six decimals. Item lines come in ascending
//! id order; sketch lines follow in sketch mode, one per item. Loading keeps
//! the neighbor order found in the file, so writing a loaded model reproduces
//! the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::corpus::ProductId;
use crate::similarity::{Neighbor, NeighborPolicy, SimilarityMode, SimilarityModel};
use crate::sketch::LinearCountingSketch;

pub const MODEL_MAGIC: &str = "sketchrec-model";
pub const MODEL_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot access model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("model line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("model file: {0}")]
    Inconsistent(String),
}

fn syntax(line: usize, reason: impl Into<String>) -> ModelFileError {
    ModelFileError::Syntax {
        line,
        reason: reason.into(),
    }
}

impl SimilarityModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{MODEL_MAGIC} {MODEL_VERSION} mode={} policy={}",
            self.mode, self.policy
        )
        .unwrap();
        for (product, list) in &self.neighbors {
            write!(out, "item {product} :").unwrap();
            for n in list {
                write!(out, " {}={:.6}", n.product, n.similarity).unwrap();
            }
            out.push('\n');
        }
        for (product, sketch) in &self.sketches {
            writeln!(out, "sketch {product} {} {}", sketch.width(), sketch.to_hex()).unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        fs::write(path, self.to_text()).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelFileError> {
        let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ModelFileError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| syntax(1, "empty model file"))?;
        let (mode, policy) = parse_header(header)?;

        let mut neighbors: BTreeMap<ProductId, Vec<Neighbor>> = BTreeMap::new();
        let mut sketches = BTreeMap::new();
        let mut last_item: Option<String> = None;
        let mut last_sketch: Option<String> = None;
        for (line_no, line) in lines {
            let mut tokens = line.split(' ');
            match tokens.next() {
                Some("item") => {
                    if last_sketch.is_some() {
                        return Err(syntax(line_no, "item line after sketch section"));
                    }
                    let id = tokens.next().filter(|s| !s.is_empty());
                    let id = id.ok_or_else(|| syntax(line_no, "missing item id"))?;
                    if tokens.next() != Some(":") {
                        return Err(syntax(line_no, "expected ` : ` after item id"));
                    }
                    if last_item.as_deref().is_some_and(|prev| prev >= id) {
                        return Err(syntax(line_no, "item lines must be in ascending id order"));
                    }
                    let list = tokens
                        .map(|tok| parse_neighbor(line_no, id, tok))
                        .collect::<Result<Vec<_>, _>>()?;
                    if list.windows(2).any(|w| w[1].similarity > w[0].similarity) {
                        return Err(syntax(line_no, "neighbors must be in descending similarity"));
                    }
                    last_item = Some(id.to_string());
                    neighbors.insert(id.into(), list);
                }
                Some("sketch") => {
                    let parts: Vec<&str> = tokens.collect();
                    let [id, m, hex] = parts[..] else {
                        return Err(syntax(line_no, "expected `sketch <id> <m> <hex>`"));
                    };
                    if last_sketch.as_deref().is_some_and(|prev| prev >= id) {
                        return Err(syntax(line_no, "sketch lines must be in ascending id order"));
                    }
                    let m: usize = m
                        .parse()
                        .map_err(|_| syntax(line_no, format!("bad sketch width `{m}`")))?;
                    let sketch = LinearCountingSketch::from_hex(m, hex)
                        .map_err(|e| syntax(line_no, e.to_string()))?;
                    last_sketch = Some(id.to_string());
                    sketches.insert(ProductId::from(id), sketch);
                }
                _ => return Err(syntax(line_no, format!("unrecognized line `{line}`"))),
            }
        }

        for (product, list) in &neighbors {
            for n in list {
                if !neighbors.contains_key(n.product.as_str()) {
                    return Err(ModelFileError::Inconsistent(format!(
                        "item {product} lists unknown neighbor {}",
                        n.product
                    )));
                }
            }
        }
        match mode {
            SimilarityMode::Exact if !sketches.is_empty() => {
                return Err(ModelFileError::Inconsistent(
                    "exact-mode model carries sketches".into(),
                ));
            }
            SimilarityMode::Sketch => {
                if !sketches.keys().eq(neighbors.keys()) {
                    return Err(ModelFileError::Inconsistent(
                        "sketch-mode model needs exactly one sketch per item".into(),
                    ));
                }
                let mut widths = sketches.values().map(LinearCountingSketch::width);
                if let Some(first) = widths.next() {
                    if widths.any(|w| w != first) {
                        return Err(ModelFileError::Inconsistent(
                            "sketch widths differ".into(),
                        ));
                    }
                }
            }
            SimilarityMode::Exact => {}
        }
        Ok(SimilarityModel {
            mode,
            policy,
            neighbors,
            sketches,
        })
    }
}

fn parse_header(header: &str) -> Result<(SimilarityMode, NeighborPolicy), ModelFileError> {
    let parts: Vec<&str> = header.split(' ').collect();
    let [magic, version, mode, policy] = parts[..] else {
        return Err(syntax(1, "malformed header"));
    };
    if magic != MODEL_MAGIC {
        return Err(syntax(1, "not a sketchrec model file"));
    }
    if version != MODEL_VERSION {
        return Err(syntax(1, format!("unsupported model version `{version}`")));
    }
    let mode = mode
        .strip_prefix("mode=")
        .ok_or_else(|| syntax(1, "missing mode="))?
        .parse()
        .map_err(|e: crate::similarity::SimilarityError| syntax(1, e.to_string()))?;
    let policy = policy
        .strip_prefix("policy=")
        .ok_or_else(|| syntax(1, "missing policy="))?
        .parse()
        .map_err(|e: crate::similarity::SimilarityError| syntax(1, e.to_string()))?;
    Ok((mode, policy))
}

fn parse_neighbor(line: usize, item: &str, token: &str) -> Result<Neighbor, ModelFileError> {
    let (id, sim) = token
        .rsplit_once('=')
        .ok_or_else(|| syntax(line, format!("expected `<id>=<similarity>`, found `{token}`")))?;
    if id.is_empty() || id == item {
        return Err(syntax(line, format!("invalid neighbor `{token}`")));
    }
    let similarity: f64 = sim
        .parse()
        .map_err(|_| syntax(line, format!("bad similarity `{sim}`")))?;
    if !(0.0..=1.0).contains(&similarity) {
        return Err(syntax(line, format!("similarity {similarity} outside [0, 1]")));
    }
    Ok(Neighbor {
        product: id.into(),
        similarity,
    })
}
