//! Purchase events, the product × user purchase matrix, user profiles and
//! per-item buyer sets with their sketches.

use std::borrow::Borrow;
use std::collections::btree_map;
use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use thiserror::Error;

use crate::sketch::{LinearCountingSketch, SketchError};

/// Header line of the event log.
pub const EVENT_LOG_HEADER: &str = "timestamp,user_id,product_id,quantity";

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_string())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

string_id!(
    /// Identifier of a product.
    ProductId
);
string_id!(
    /// Identifier of a user. Its UTF-8 bytes are what the sketches hash.
    UserId
);

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line 1: expected header `{EVENT_LOG_HEADER}`, found `{found}`")]
    BadHeader { found: String },
    #[error("{0}")]
    MalformedRow(RowError),
    #[error("quantity must be a positive integer")]
    ZeroQuantity,
    #[error("{kind} id must not be empty")]
    EmptyId { kind: &'static str },
    #[error("{kind} id `{id}` contains whitespace or a comma")]
    InvalidId { kind: &'static str, id: String },
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

/// A rejected event-log row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

/// What to do with a malformed event-log row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedRows {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub applied: u64,
    pub skipped: Vec<RowError>,
}

/// One purchase: `quantity` units of `product` bought by `user`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub user: UserId,
    pub product: ProductId,
    pub quantity: u64,
}

/// Parses integer epoch seconds, RFC 3339 date-times, naive ISO-8601
/// date-times (taken as UTC) and plain dates.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn validate_id(kind: &'static str, id: &str) -> Result<(), CorpusError> {
    if id.is_empty() {
        return Err(CorpusError::EmptyId { kind });
    }
    if id.chars().any(|c| c.is_whitespace() || c.is_control() || c == ',') {
        return Err(CorpusError::InvalidId {
            kind,
            id: id.to_string(),
        });
    }
    Ok(())
}

/// Parses one data row of the event log.
pub fn parse_event_row(row: &str) -> Result<Event, String> {
    let fields: Vec<&str> = row.split(',').collect();
    let [timestamp, user, product, quantity] = fields[..] else {
        return Err(format!("expected 4 comma-separated fields, found {}", fields.len()));
    };
    let timestamp =
        parse_timestamp(timestamp).ok_or_else(|| format!("unparseable timestamp `{timestamp}`"))?;
    validate_id("user", user).map_err(|e| e.to_string())?;
    validate_id("product", product).map_err(|e| e.to_string())?;
    if quantity.is_empty() || !quantity.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("quantity `{quantity}` is not a decimal integer"));
    }
    let quantity: u64 = quantity
        .parse()
        .map_err(|_| format!("quantity `{quantity}` out of range"))?;
    if quantity == 0 {
        return Err("quantity must be positive".to_string());
    }
    Ok(Event {
        timestamp,
        user: user.into(),
        product: product.into(),
        quantity,
    })
}

/// Buyers of one product with their purchase counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Column {
    counts: BTreeMap<UserId, u64>,
    total: u64,
}

impl Column {
    pub fn get(&self, user: &str) -> u64 {
        self.counts.get(user).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, UserId, u64> {
        self.counts.iter()
    }

    pub fn buyers(&self) -> btree_map::Keys<'_, UserId, u64> {
        self.counts.keys()
    }

    pub fn num_buyers(&self) -> usize {
        self.counts.len()
    }

    /// Sum of all purchase counts in the column.
    pub fn total(&self) -> u64 {
        self.total
    }

    fn add(&mut self, user: &UserId, quantity: u64) {
        *self.counts.entry(user.clone()).or_insert(0) += quantity;
        self.total += quantity;
    }
}

/// Sparse product × user matrix of purchase counts. Absent entries are zero,
/// so the product and user sets are exactly the ids that appear in entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PurchaseMatrix {
    columns: BTreeMap<ProductId, Column>,
    rows: BTreeMap<UserId, BTreeMap<ProductId, u64>>,
}

impl PurchaseMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, product: &str, user: &str) -> u64 {
        self.columns.get(product).map_or(0, |c| c.get(user))
    }

    pub fn column(&self, product: &str) -> Option<&Column> {
        self.columns.get(product)
    }

    pub fn columns(&self) -> btree_map::Iter<'_, ProductId, Column> {
        self.columns.iter()
    }

    pub fn row(&self, user: &str) -> Option<&BTreeMap<ProductId, u64>> {
        self.rows.get(user)
    }

    pub fn products(&self) -> btree_map::Keys<'_, ProductId, Column> {
        self.columns.keys()
    }

    pub fn users(&self) -> btree_map::Keys<'_, UserId, BTreeMap<ProductId, u64>> {
        self.rows.keys()
    }

    pub fn num_products(&self) -> usize {
        self.columns.len()
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    pub fn contains_product(&self, product: &str) -> bool {
        self.columns.contains_key(product)
    }

    pub(crate) fn add(&mut self, product: &ProductId, user: &UserId, quantity: u64) {
        debug_assert!(quantity > 0);
        self.columns.entry(product.clone()).or_default().add(user, quantity);
        *self
            .rows
            .entry(user.clone())
            .or_default()
            .entry(product.clone())
            .or_insert(0) += quantity;
    }
}

/// The items a user bought, with quantities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: UserId,
    pub purchased: BTreeMap<ProductId, u64>,
}

impl UserProfile {
    pub fn new(user_id: impl Into<UserId>) -> Self {
        Self {
            user_id: user_id.into(),
            purchased: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.purchased.is_empty()
    }

    pub fn contains(&self, product: &str) -> bool {
        self.purchased.contains_key(product)
    }

    pub fn quantity(&self, product: &str) -> u64 {
        self.purchased.get(product).copied().unwrap_or(0)
    }

    pub fn items(&self) -> btree_map::Keys<'_, ProductId, u64> {
        self.purchased.keys()
    }
}

/// Exact buyer set of one product together with its sketch.
#[derive(Debug, Clone, Copy)]
pub struct ItemUserSet<'a> {
    pub product_id: &'a ProductId,
    column: &'a Column,
    pub sketch: &'a LinearCountingSketch,
}

impl<'a> ItemUserSet<'a> {
    pub fn exact_users(&self) -> btree_map::Keys<'a, UserId, u64> {
        self.column.buyers()
    }

    pub fn len(&self) -> usize {
        self.column.num_buyers()
    }

    pub fn is_empty(&self) -> bool {
        self.column.num_buyers() == 0
    }
}

/// Ingested purchase data: the purchase matrix plus one linear-counting
/// sketch per product, all of width `sketch_width`.
///
/// Ingestion goes through [`Corpus::record_event`]; once loading is done the
/// corpus is only read.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    matrix: PurchaseMatrix,
    sketch_width: usize,
    sketches: BTreeMap<ProductId, LinearCountingSketch>,
    events: u64,
    time_span: Option<(i64, i64)>,
}

impl Corpus {
    pub fn new(sketch_width: usize) -> Result<Self, CorpusError> {
        LinearCountingSketch::new(sketch_width)?;
        Ok(Self {
            matrix: PurchaseMatrix::new(),
            sketch_width,
            sketches: BTreeMap::new(),
            events: 0,
            time_span: None,
        })
    }

    pub fn matrix(&self) -> &PurchaseMatrix {
        &self.matrix
    }

    pub fn sketch_width(&self) -> usize {
        self.sketch_width
    }

    pub fn num_events(&self) -> u64 {
        self.events
    }

    /// Earliest and latest event timestamps seen, in epoch seconds.
    pub fn time_span(&self) -> Option<(i64, i64)> {
        self.time_span
    }

    pub fn record_event(
        &mut self,
        user: impl Into<UserId>,
        product: impl Into<ProductId>,
        quantity: u64,
    ) -> Result<(), CorpusError> {
        let user = user.into();
        let product = product.into();
        validate_id("user", user.as_str())?;
        validate_id("product", product.as_str())?;
        if quantity == 0 {
            return Err(CorpusError::ZeroQuantity);
        }
        self.matrix.add(&product, &user, quantity);
        let width = self.sketch_width;
        self.sketches
            .entry(product)
            .or_insert_with(|| LinearCountingSketch::new(width).expect("width checked in new"))
            .insert(user.as_str().as_bytes());
        self.events += 1;
        Ok(())
    }

    pub fn record(&mut self, event: &Event) -> Result<(), CorpusError> {
        self.record_event(event.user.clone(), event.product.clone(), event.quantity)?;
        self.time_span = Some(match self.time_span {
            None => (event.timestamp, event.timestamp),
            Some((lo, hi)) => (lo.min(event.timestamp), hi.max(event.timestamp)),
        });
        Ok(())
    }

    /// Re-sketches every product at a new width. The exact sets are the
    /// source, so the result is bit-identical to having ingested at `m`.
    pub fn with_sketch_width(mut self, m: usize) -> Result<Self, CorpusError> {
        LinearCountingSketch::new(m)?;
        self.sketch_width = m;
        self.rebuild_sketches();
        Ok(self)
    }

    /// Same corpus metadata over a different matrix.
    pub(crate) fn with_matrix(&self, matrix: PurchaseMatrix) -> Self {
        let mut corpus = Self {
            matrix,
            sketch_width: self.sketch_width,
            sketches: BTreeMap::new(),
            events: self.events,
            time_span: self.time_span,
        };
        corpus.rebuild_sketches();
        corpus
    }

    fn rebuild_sketches(&mut self) {
        self.sketches = self
            .matrix
            .columns
            .iter()
            .map(|(p, column)| {
                let sketch = LinearCountingSketch::from_ids(
                    self.sketch_width,
                    column.buyers().map(|u| u.as_str().as_bytes()),
                )
                .expect("width checked");
                (p.clone(), sketch)
            })
            .collect();
    }

    pub fn user_profile(&self, user: &str) -> UserProfile {
        UserProfile {
            user_id: user.into(),
            purchased: self.matrix.row(user).cloned().unwrap_or_default(),
        }
    }

    /// `m[p,u]` divided by the mean count over the buyers of `p`; zero for
    /// non-buyers.
    pub fn normalized_quantity(&self, product: &str, user: &str) -> f64 {
        let Some(column) = self.matrix.column(product) else {
            return 0.0;
        };
        let count = column.get(user);
        if count == 0 {
            return 0.0;
        }
        // count / (total / buyers), as a single rounding of an exact ratio
        let numerator = u128::from(count) * column.num_buyers() as u128;
        numerator as f64 / column.total() as f64
    }

    pub fn item_set(&self, product: &str) -> Option<ItemUserSet<'_>> {
        let (product_id, column) = self.matrix.columns.get_key_value(product)?;
        Some(ItemUserSet {
            product_id,
            column,
            sketch: &self.sketches[product],
        })
    }

    pub fn sketch(&self, product: &str) -> Option<&LinearCountingSketch> {
        self.sketches.get(product)
    }

    pub fn products(&self) -> btree_map::Keys<'_, ProductId, Column> {
        self.matrix.products()
    }

    /// Applies every row of an event log read from `reader`, in order.
    pub fn read_events<R: BufRead>(
        &mut self,
        reader: R,
        on_malformed: MalformedRows,
    ) -> Result<LoadReport, CorpusError> {
        let mut report = LoadReport::default();
        let mut seen_header = false;
        for (index, line) in reader.lines().enumerate() {
            let line_no = index + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: PathBuf::from("<input>"),
                source,
            })?;
            let mut line = line.trim_end_matches('\r');
            if index == 0 {
                line = line.trim_start_matches('\u{feff}');
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_header {
                if line != EVENT_LOG_HEADER {
                    return Err(CorpusError::BadHeader {
                        found: line.to_string(),
                    });
                }
                seen_header = true;
                continue;
            }
            let applied = parse_event_row(line).and_then(|event| {
                self.record(&event).map_err(|e| e.to_string())
            });
            match applied {
                Ok(()) => report.applied += 1,
                Err(reason) => {
                    let err = RowError {
                        line: line_no,
                        reason,
                    };
                    match on_malformed {
                        MalformedRows::Abort => return Err(CorpusError::MalformedRow(err)),
                        MalformedRows::Skip => report.skipped.push(err),
                    }
                }
            }
        }
        Ok(report)
    }

    pub fn load_events(
        &mut self,
        path: &Path,
        on_malformed: MalformedRows,
    ) -> Result<LoadReport, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.read_events(BufReader::new(file), on_malformed)
            .map_err(|e| match e {
                CorpusError::Io { source, .. } => CorpusError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => other,
            })
    }
}
