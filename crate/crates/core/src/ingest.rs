//! CSV ingestion for alpha series, position tensors, tick data and stock
//! factor loadings.
//!
//! Matrices are wide (one row per alpha), tensors are long
//! (`alpha_id,stock_id,timestamp,position`). Missing cells are a hard error;
//! absent position triples are zero positions.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::Array3;
use thiserror::Error;

use crate::output::fmt_f64;

/// Silent renormalization window for per-(alpha, time) L1 norms.
pub const POSITION_RENORM_TOLERANCE: f64 = 1e-3;
/// Norms within this distance of one are accepted verbatim.
pub const POSITION_EXACT_TOLERANCE: f64 = 1e-8;
/// 9:30 to 16:00 in milliseconds.
pub const DEFAULT_SESSION_MS: i64 = 23_400_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing value at line {line}, column {column}")]
    MissingValue { line: usize, column: usize },
    #[error("cannot parse {value:?} at line {line}, column {column}")]
    Parse {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("timestamps must be strictly decreasing from index 0 (position {0})")]
    TimestampOrder(usize),
    #[error("alpha {alpha} at timestamp {timestamp}: sum of |position| is {sum}, expected 1")]
    NormalizationError {
        alpha: String,
        timestamp: i64,
        sum: f64,
    },
    #[error("duplicate key: {0}")]
    DuplicateKey(String),
    #[error("print at time {0} precedes the first quote")]
    NoQuoteCoverage(i64),
    #[error("{what} times decrease at line {line}")]
    NonMonotoneTime { what: &'static str, line: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// `N x (M+1)` alpha time series; column 0 is the most recent observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    pub values: DMatrix<f64>,
    pub alpha_ids: Vec<String>,
    pub timestamps: Vec<i64>,
}

impl AlphaMatrix {
    pub fn new(values: DMatrix<f64>, alpha_ids: Vec<String>, timestamps: Vec<i64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(IngestError::EmptyInput("no alphas".into()));
        }
        if values.ncols() < 2 {
            return Err(IngestError::ShapeError(
                "at least two observations (M >= 1) are required".into(),
            ));
        }
        if alpha_ids.len() != values.nrows() || timestamps.len() != values.ncols() {
            return Err(IngestError::ShapeError("label count does not match values".into()));
        }
        if let Some((r, c)) = first_non_finite(&values) {
            return Err(IngestError::MissingValue {
                line: r + 2,
                column: c + 2,
            });
        }
        check_strictly_decreasing(&timestamps)?;
        check_unique(&alpha_ids)?;
        Ok(Self {
            values,
            alpha_ids,
            timestamps,
        })
    }

    pub fn n_alphas(&self) -> usize {
        self.values.nrows()
    }

    /// Number of observation gaps `M` (there are `M + 1` observations).
    pub fn m(&self) -> usize {
        self.values.ncols() - 1
    }

    /// The most recent value of each alpha, `alpha_i(t_0)`.
    pub fn latest(&self) -> nalgebra::DVector<f64> {
        self.values.column(0).into_owned()
    }
}

/// Normalized dollar holdings `P[i, A, s]`, shape `N x F x (M+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTensor {
    pub values: Array3<f64>,
    pub alpha_ids: Vec<String>,
    pub stock_ids: Vec<String>,
    pub timestamps: Vec<i64>,
}

impl PositionTensor {
    /// Validates shapes and enforces `sum_A |P[i,A,s]| = 1`, renormalizing
    /// norms that are off by at most [`POSITION_RENORM_TOLERANCE`].
    pub fn new(
        mut values: Array3<f64>,
        alpha_ids: Vec<String>,
        stock_ids: Vec<String>,
        timestamps: Vec<i64>,
    ) -> Result<Self> {
        let (n, f, t) = values.dim();
        if n == 0 || f == 0 || t == 0 {
            return Err(IngestError::EmptyInput("position tensor".into()));
        }
        if alpha_ids.len() != n || stock_ids.len() != f || timestamps.len() != t {
            return Err(IngestError::ShapeError("label count does not match tensor".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::InvalidValue("non-finite position".into()));
        }
        check_strictly_decreasing(&timestamps)?;
        check_unique(&alpha_ids)?;
        check_unique(&stock_ids)?;
        for i in 0..n {
            for s in 0..t {
                let sum: f64 = (0..f).map(|a| values[[i, a, s]].abs()).sum();
                let gap = (sum - 1.0).abs();
                if gap <= POSITION_EXACT_TOLERANCE {
                    continue;
                }
                if gap > POSITION_RENORM_TOLERANCE {
                    return Err(IngestError::NormalizationError {
                        alpha: alpha_ids[i].clone(),
                        timestamp: timestamps[s],
                        sum,
                    });
                }
                for a in 0..f {
                    values[[i, a, s]] /= sum;
                }
            }
        }
        Ok(Self {
            values,
            alpha_ids,
            stock_ids,
            timestamps,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.values.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Print {
    pub time: i64,
    pub price: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub time: i64,
    pub bid: f64,
    pub ask: f64,
}

impl Quote {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

/// A print together with the latest quote at or before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPrint {
    pub print: Print,
    pub quote: Quote,
}

/// One trading day of prints and quotes for a single stock. Times are
/// milliseconds since the session open.
#[derive(Debug, Clone, PartialEq)]
pub struct TickDay {
    pub prints: Vec<MatchedPrint>,
    pub quotes: Vec<Quote>,
    pub session_close: i64,
}

impl TickDay {
    pub fn new(prints: Vec<Print>, quotes: Vec<Quote>) -> Result<Self> {
        Self::with_session(prints, quotes, DEFAULT_SESSION_MS)
    }

    pub fn with_session(prints: Vec<Print>, quotes: Vec<Quote>, session_close: i64) -> Result<Self> {
        if session_close <= 0 {
            return Err(IngestError::InvalidValue("session close must be positive".into()));
        }
        for (k, w) in prints.windows(2).enumerate() {
            if w[1].time < w[0].time {
                return Err(IngestError::NonMonotoneTime {
                    what: "print",
                    line: k + 3,
                });
            }
        }
        for (k, w) in quotes.windows(2).enumerate() {
            if w[1].time < w[0].time {
                return Err(IngestError::NonMonotoneTime {
                    what: "quote",
                    line: k + 3,
                });
            }
        }
        for p in &prints {
            if !(p.price > 0.0 && p.price.is_finite()) || !(p.volume > 0.0 && p.volume.is_finite()) {
                return Err(IngestError::InvalidValue(format!(
                    "print at {} must have positive price and volume",
                    p.time
                )));
            }
        }
        for q in &quotes {
            // Crossed and locked markets are kept; classification drops them.
            if !(q.bid > 0.0 && q.ask > 0.0 && q.bid.is_finite() && q.ask.is_finite()) {
                return Err(IngestError::InvalidValue(format!(
                    "quote at {} must have positive prices",
                    q.time
                )));
            }
        }
        let mut matched = Vec::with_capacity(prints.len());
        for p in prints {
            let quote = latest_at_or_before(&quotes, p.time).ok_or(IngestError::NoQuoteCoverage(p.time))?;
            matched.push(MatchedPrint { print: p, quote });
        }
        Ok(Self {
            prints: matched,
            quotes,
            session_close,
        })
    }

    /// Midquote in force at `time`, if any quote precedes it.
    pub fn midquote_at(&self, time: i64) -> Option<f64> {
        latest_at_or_before(&self.quotes, time).map(|q| q.mid())
    }
}

fn latest_at_or_before(quotes: &[Quote], time: i64) -> Option<Quote> {
    let idx = quotes.partition_point(|q| q.time <= time);
    if idx == 0 {
        None
    } else {
        Some(quotes[idx - 1])
    }
}

/// Stock exposures to stock risk factors, `F x F_S`.
#[derive(Debug, Clone, PartialEq)]
pub struct StockFactorLoadings {
    pub matrix: DMatrix<f64>,
    pub stock_ids: Vec<String>,
    pub factor_ids: Vec<String>,
}

/// A single execution used for realized cost estimation. `shares > 0` buys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fill {
    pub time: i64,
    pub price: f64,
    pub shares: f64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_f64(field: &str, line: usize, column: usize) -> Result<f64> {
    if field.is_empty() {
        return Err(IngestError::MissingValue { line, column });
    }
    let v: f64 = field.parse().map_err(|_| IngestError::Parse {
        line,
        column,
        value: field.to_string(),
    })?;
    if v.is_nan() {
        return Err(IngestError::MissingValue { line, column });
    }
    if !v.is_finite() {
        return Err(IngestError::InvalidValue(format!("non-finite value at line {line}")));
    }
    Ok(v)
}

fn parse_i64(field: &str, line: usize, column: usize) -> Result<i64> {
    if field.is_empty() {
        return Err(IngestError::MissingValue { line, column });
    }
    field.parse().map_err(|_| IngestError::Parse {
        line,
        column,
        value: field.to_string(),
    })
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

fn check_strictly_decreasing(ts: &[i64]) -> Result<()> {
    for (k, w) in ts.windows(2).enumerate() {
        if w[1] >= w[0] {
            return Err(IngestError::TimestampOrder(k + 1));
        }
    }
    Ok(())
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(IngestError::DuplicateKey(id.clone()));
        }
    }
    Ok(())
}

fn records<R: Read>(r: R) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads `alphas.csv`: a header of `M+1` timestamps (optionally preceded by
/// an id-column label) followed by rows `alpha_id,v0,...,vM`.
pub fn load_alpha_matrix(path: impl AsRef<Path>) -> Result<AlphaMatrix> {
    read_alpha_matrix(open(path.as_ref())?)
}

pub fn read_alpha_matrix<R: Read>(r: R) -> Result<AlphaMatrix> {
    let recs = records(r)?;
    let (header, rows) = recs
        .split_first()
        .ok_or_else(|| IngestError::EmptyInput("alpha file has no header".into()))?;
    if rows.is_empty() {
        return Err(IngestError::EmptyInput("alpha file has no rows".into()));
    }
    let width = rows[0].len();
    let skip = if header.len() + 1 == width {
        0
    } else if header.len() == width {
        1
    } else {
        return Err(IngestError::ShapeError(format!(
            "header has {} fields but rows have {}",
            header.len(),
            width
        )));
    };
    let timestamps = header
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(c, f)| parse_i64(f, 1, c + 1))
        .collect::<Result<Vec<_>>>()?;
    let t = timestamps.len();
    let mut ids = Vec::with_capacity(rows.len());
    let mut values = DMatrix::zeros(rows.len(), t);
    for (r, rec) in rows.iter().enumerate() {
        let line = r + 2;
        if rec.len() != t + 1 {
            return Err(IngestError::ShapeError(format!(
                "line {line} has {} fields, expected {}",
                rec.len(),
                t + 1
            )));
        }
        let id = &rec[0];
        if id.is_empty() {
            return Err(IngestError::MissingValue { line, column: 1 });
        }
        ids.push(id.to_string());
        for c in 0..t {
            values[(r, c)] = parse_f64(&rec[c + 1], line, c + 2)?;
        }
    }
    AlphaMatrix::new(values, ids, timestamps)
}

pub fn write_alpha_matrix<W: Write>(a: &AlphaMatrix, mut w: W) -> std::io::Result<()> {
    let header: Vec<String> = a.timestamps.iter().map(|t| t.to_string()).collect();
    writeln!(w, "{}", header.join(","))?;
    for (r, id) in a.alpha_ids.iter().enumerate() {
        write!(w, "{id}")?;
        for c in 0..a.values.ncols() {
            write!(w, ",{}", fmt_f64(a.values[(r, c)]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads `positions.csv` in long format. Alpha and stock order follow first
/// appearance; timestamps are sorted most recent first.
pub fn load_position_tensor(path: impl AsRef<Path>) -> Result<PositionTensor> {
    read_position_tensor(open(path.as_ref())?)
}

pub fn read_position_tensor<R: Read>(r: R) -> Result<PositionTensor> {
    let recs = records(r)?;
    let (header, rows) = recs
        .split_first()
        .ok_or_else(|| IngestError::EmptyInput("position file has no header".into()))?;
    if header.len() != 4 {
        return Err(IngestError::ShapeError(
            "positions header must be alpha_id,stock_id,timestamp,position".into(),
        ));
    }
    if rows.is_empty() {
        return Err(IngestError::EmptyInput("position file has no rows".into()));
    }
    let mut alpha_ids: Vec<String> = Vec::new();
    let mut stock_ids: Vec<String> = Vec::new();
    let mut alpha_idx = HashMap::new();
    let mut stock_idx = HashMap::new();
    let mut times = BTreeSet::new();
    let mut entries = Vec::with_capacity(rows.len());
    let mut seen = std::collections::HashSet::new();
    for (k, rec) in rows.iter().enumerate() {
        let line = k + 2;
        if rec.len() != 4 {
            return Err(IngestError::ShapeError(format!("line {line} must have 4 fields")));
        }
        for (c, f) in rec.iter().enumerate().take(2) {
            if f.is_empty() {
                return Err(IngestError::MissingValue { line, column: c + 1 });
            }
        }
        let t = parse_i64(&rec[2], line, 3)?;
        let p = parse_f64(&rec[3], line, 4)?;
        let ai = *alpha_idx.entry(rec[0].to_string()).or_insert_with(|| {
            alpha_ids.push(rec[0].to_string());
            alpha_ids.len() - 1
        });
        let si = *stock_idx.entry(rec[1].to_string()).or_insert_with(|| {
            stock_ids.push(rec[1].to_string());
            stock_ids.len() - 1
        });
        if !seen.insert((ai, si, t)) {
            return Err(IngestError::DuplicateKey(format!("{},{},{}", &rec[0], &rec[1], t)));
        }
        times.insert(t);
        entries.push((ai, si, t, p));
    }
    let timestamps: Vec<i64> = times.into_iter().rev().collect();
    let time_idx: HashMap<i64, usize> = timestamps.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let mut values = Array3::zeros((alpha_ids.len(), stock_ids.len(), timestamps.len()));
    for (ai, si, t, p) in entries {
        values[[ai, si, time_idx[&t]]] = p;
    }
    PositionTensor::new(values, alpha_ids, stock_ids, timestamps)
}

/// Writes every entry, zeros included, so the stock universe survives a
/// round trip.
pub fn write_position_tensor<W: Write>(p: &PositionTensor, mut w: W) -> std::io::Result<()> {
    writeln!(w, "alpha_id,stock_id,timestamp,position")?;
    let (n, f, t) = p.dims();
    for i in 0..n {
        for a in 0..f {
            for s in 0..t {
                writeln!(
                    w,
                    "{},{},{},{}",
                    p.alpha_ids[i],
                    p.stock_ids[a],
                    p.timestamps[s],
                    fmt_f64(p.values[[i, a, s]])
                )?;
            }
        }
    }
    Ok(())
}

fn read_triples<R: Read>(r: R, expected: &[&str]) -> Result<Vec<(i64, f64, f64)>> {
    let recs = records(r)?;
    let Some((header, rows)) = recs.split_first() else {
        return Ok(Vec::new());
    };
    if header.len() != expected.len() {
        return Err(IngestError::ShapeError(format!(
            "header must be {}",
            expected.join(",")
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(k, rec)| {
            let line = k + 2;
            if rec.len() != 3 {
                return Err(IngestError::ShapeError(format!("line {line} must have 3 fields")));
            }
            Ok((
                parse_i64(&rec[0], line, 1)?,
                parse_f64(&rec[1], line, 2)?,
                parse_f64(&rec[2], line, 3)?,
            ))
        })
        .collect()
}

pub fn read_prints<R: Read>(r: R) -> Result<Vec<Print>> {
    Ok(read_triples(r, &["time", "price", "volume"])?
        .into_iter()
        .map(|(time, price, volume)| Print { time, price, volume })
        .collect())
}

pub fn read_quotes<R: Read>(r: R) -> Result<Vec<Quote>> {
    Ok(read_triples(r, &["time", "bid", "ask"])?
        .into_iter()
        .map(|(time, bid, ask)| Quote { time, bid, ask })
        .collect())
}

/// Reads `prints.csv` and `quotes.csv` and matches each print to the latest
/// quote at or before it.
pub fn load_tick_day(path_prints: impl AsRef<Path>, path_quotes: impl AsRef<Path>) -> Result<TickDay> {
    let prints = read_prints(open(path_prints.as_ref())?)?;
    let quotes = read_quotes(open(path_quotes.as_ref())?)?;
    TickDay::new(prints, quotes)
}

pub fn write_prints<W: Write>(prints: &[Print], mut w: W) -> std::io::Result<()> {
    writeln!(w, "time,price,volume")?;
    for p in prints {
        writeln!(w, "{},{},{}", p.time, fmt_f64(p.price), fmt_f64(p.volume))?;
    }
    Ok(())
}

pub fn write_quotes<W: Write>(quotes: &[Quote], mut w: W) -> std::io::Result<()> {
    writeln!(w, "time,bid,ask")?;
    for q in quotes {
        writeln!(w, "{},{},{}", q.time, fmt_f64(q.bid), fmt_f64(q.ask))?;
    }
    Ok(())
}

/// Reads `fills.csv` (`time,price,shares`), sorted by time.
pub fn load_fills(path: impl AsRef<Path>) -> Result<Vec<Fill>> {
    read_fills(open(path.as_ref())?)
}

pub fn read_fills<R: Read>(r: R) -> Result<Vec<Fill>> {
    let fills: Vec<Fill> = read_triples(r, &["time", "price", "shares"])?
        .into_iter()
        .map(|(time, price, shares)| Fill { time, price, shares })
        .collect();
    for (k, w) in fills.windows(2).enumerate() {
        if w[1].time < w[0].time {
            return Err(IngestError::NonMonotoneTime {
                what: "fill",
                line: k + 3,
            });
        }
    }
    Ok(fills)
}

pub fn write_fills<W: Write>(fills: &[Fill], mut w: W) -> std::io::Result<()> {
    writeln!(w, "time,price,shares")?;
    for f in fills {
        writeln!(w, "{},{},{}", f.time, fmt_f64(f.price), fmt_f64(f.shares))?;
    }
    Ok(())
}

/// Reads a stock factor loadings file: header `stock_id,factor_1,...`, one
/// row per stock. Rows are reordered to `universe` and must cover it exactly.
pub fn load_stock_factor_loadings(path: impl AsRef<Path>, universe: &[String]) -> Result<StockFactorLoadings> {
    read_stock_factor_loadings(open(path.as_ref())?, universe)
}

pub fn read_stock_factor_loadings<R: Read>(r: R, universe: &[String]) -> Result<StockFactorLoadings> {
    let recs = records(r)?;
    let (header, rows) = recs
        .split_first()
        .ok_or_else(|| IngestError::EmptyInput("loadings file has no header".into()))?;
    if header.len() < 2 {
        return Err(IngestError::ShapeError("loadings need at least one factor".into()));
    }
    let factor_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut by_stock = HashMap::new();
    for (k, rec) in rows.iter().enumerate() {
        let line = k + 2;
        if rec.len() != header.len() {
            return Err(IngestError::ShapeError(format!("line {line} is ragged")));
        }
        let row = (1..rec.len())
            .map(|c| parse_f64(&rec[c], line, c + 1))
            .collect::<Result<Vec<_>>>()?;
        if by_stock.insert(rec[0].to_string(), row).is_some() {
            return Err(IngestError::DuplicateKey(rec[0].to_string()));
        }
    }
    if by_stock.len() != universe.len() {
        return Err(IngestError::ShapeError(format!(
            "loadings cover {} stocks, position universe has {}",
            by_stock.len(),
            universe.len()
        )));
    }
    let mut matrix = DMatrix::zeros(universe.len(), factor_ids.len());
    for (a, sid) in universe.iter().enumerate() {
        let row = by_stock
            .get(sid)
            .ok_or_else(|| IngestError::ShapeError(format!("no loadings for stock {sid}")))?;
        for (c, v) in row.iter().enumerate() {
            matrix[(a, c)] = *v;
        }
    }
    Ok(StockFactorLoadings {
        matrix,
        stock_ids: universe.to_vec(),
        factor_ids,
    })
}

/// Reads a cluster file (`alpha_id,cluster`) and returns the labels in the
/// order of `alpha_ids`, which must be covered exactly.
pub fn load_cluster_labels(path: impl AsRef<Path>, alpha_ids: &[String]) -> Result<Vec<String>> {
    read_cluster_labels(open(path.as_ref())?, alpha_ids)
}

pub fn read_cluster_labels<R: Read>(r: R, alpha_ids: &[String]) -> Result<Vec<String>> {
    let recs = records(r)?;
    let (header, rows) = recs
        .split_first()
        .ok_or_else(|| IngestError::EmptyInput("cluster file has no header".into()))?;
    if header.len() != 2 {
        return Err(IngestError::ShapeError("cluster file needs columns alpha_id,cluster".into()));
    }
    let mut by_alpha = HashMap::new();
    for (k, rec) in rows.iter().enumerate() {
        let line = k + 2;
        if rec.len() != 2 {
            return Err(IngestError::ShapeError(format!("line {line} is ragged")));
        }
        if rec[1].is_empty() {
            return Err(IngestError::MissingValue { line, column: 2 });
        }
        if by_alpha.insert(rec[0].to_string(), rec[1].to_string()).is_some() {
            return Err(IngestError::DuplicateKey(rec[0].to_string()));
        }
    }
    if by_alpha.len() != alpha_ids.len() {
        return Err(IngestError::ShapeError(format!(
            "cluster file covers {} alphas, expected {}",
            by_alpha.len(),
            alpha_ids.len()
        )));
    }
    alpha_ids
        .iter()
        .map(|id| {
            by_alpha
                .remove(id)
                .ok_or_else(|| IngestError::ShapeError(format!("no cluster for alpha {id}")))
        })
        .collect()
}

pub fn write_cluster_labels<W: Write>(alpha_ids: &[String], labels: &[String], mut w: W) -> std::io::Result<()> {
    writeln!(w, "alpha_id,cluster")?;
    for (a, c) in alpha_ids.iter().zip(labels) {
        writeln!(w, "{a},{c}")?;
    }
    Ok(())
}
