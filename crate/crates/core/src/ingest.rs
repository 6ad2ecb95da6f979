//! Access-log parsing and per-user period aggregation.

use std::collections::BTreeMap;
use std::io;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::period::Granularity;

pub const CSV_HEADER: [&str; 3] = ["user_id", "date", "duration_min"];
const DATE_FORMAT: &str = "%Y-%m-%d";

/// One raw access event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub user_id: String,
    pub date: NaiveDate,
    /// Minutes the data was in use.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("malformed row: {0}")]
    MalformedRow(String),
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("empty user_id")]
    EmptyUserId,
}

impl AccessRecord {
    pub fn new(user_id: &str, date: NaiveDate, duration: f64) -> Result<Self, RecordError> {
        let user_id = user_id.trim();
        if user_id.is_empty() {
            return Err(RecordError::EmptyUserId);
        }
        if !duration.is_finite() {
            return Err(RecordError::MalformedRow(format!(
                "duration {duration} is not a finite number"
            )));
        }
        if duration < 0.0 {
            return Err(RecordError::NegativeDuration(duration));
        }
        Ok(Self {
            user_id: user_id.to_string(),
            date,
            duration,
        })
    }

    fn from_fields(user_id: &str, date: &str, duration: &str) -> Result<Self, RecordError> {
        let parsed_date = NaiveDate::parse_from_str(date.trim(), DATE_FORMAT)
            .map_err(|e| RecordError::MalformedRow(format!("date {date:?}: {e}")))?;
        let parsed_duration: f64 = duration
            .trim()
            .parse()
            .map_err(|_| RecordError::MalformedRow(format!("duration {duration:?} is not numeric")))?;
        Self::new(user_id, parsed_date, parsed_duration)
    }
}

/// A rejected input row, identified by its 1-based line number.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {error}")]
pub struct RowError {
    pub line: u64,
    pub error: RecordError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedRecords {
    pub records: Vec<AccessRecord>,
    pub rejected: Vec<RowError>,
}

/// Parses every row it can; bad rows are collected, never fatal.
///
/// CSV input may start with the `user_id,date,duration_min` header line.
pub fn parse_records(input: &[u8], format: InputFormat) -> ParsedRecords {
    match format {
        InputFormat::Csv => parse_csv(input),
        InputFormat::Jsonl => parse_jsonl(input),
    }
}

fn parse_csv(input: &[u8]) -> ParsedRecords {
    let mut out = ParsedRecords::default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    // Running newline count up to the start of each record.
    let (mut scanned, mut newlines) = (0usize, 0u64);
    let mut line_of = |byte: u64| {
        // With CRLF endings a record's offset can sit on the preceding '\n'.
        let mut end = (byte as usize).clamp(scanned, input.len());
        while end < input.len() && matches!(input[end], b'\r' | b'\n') {
            end += 1;
        }
        newlines += input[scanned..end].iter().filter(|&&b| b == b'\n').count() as u64;
        scanned = end;
        newlines + 1
    };
    let mut first = true;
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map_or(0, |p| line_of(p.byte()));
                out.rejected.push(RowError {
                    line,
                    error: RecordError::MalformedRow(e.to_string()),
                });
                first = false;
                continue;
            }
        };
        let line = row.position().map_or(0, |p| line_of(p.byte()));
        if std::mem::take(&mut first) && row.iter().map(str::trim).eq(CSV_HEADER) {
            continue;
        }
        let parsed = if row.len() != 3 {
            Err(RecordError::MalformedRow(format!(
                "expected 3 fields, found {}",
                row.len()
            )))
        } else {
            AccessRecord::from_fields(&row[0], &row[1], &row[2])
        };
        match parsed {
            Ok(r) => out.records.push(r),
            Err(error) => out.rejected.push(RowError { line, error }),
        }
    }
    out
}

#[derive(Deserialize)]
struct JsonRow {
    user_id: String,
    date: String,
    duration_min: f64,
}

fn parse_jsonl(input: &[u8]) -> ParsedRecords {
    let mut out = ParsedRecords::default();
    for (i, raw) in input.split(|&b| b == b'\n').enumerate() {
        let line = i as u64 + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let parsed = serde_json::from_slice::<JsonRow>(raw)
            .map_err(|e| RecordError::MalformedRow(e.to_string()))
            .and_then(|row| {
                let date = NaiveDate::parse_from_str(row.date.trim(), DATE_FORMAT).map_err(
                    |e| RecordError::MalformedRow(format!("date {:?}: {e}", row.date)),
                )?;
                AccessRecord::new(&row.user_id, date, row.duration_min)
            });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(error) => out.rejected.push(RowError { line, error }),
        }
    }
    out
}

/// Writes records in CSV ingest format.
pub fn write_csv<W: io::Write>(
    records: &[AccessRecord],
    out: W,
    with_header: bool,
) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    if with_header {
        w.write_record(CSV_HEADER)?;
    }
    for r in records {
        w.write_record([
            r.user_id.as_str(),
            &r.date.format(DATE_FORMAT).to_string(),
            &r.duration.to_string(),
        ])?;
    }
    w.flush()
}

/// Per-user access minutes on a contiguous period axis `t = 0, 1, ..., n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSeries {
    pub user_id: String,
    pub granularity: Granularity,
    /// Start date of period 0.
    pub origin: NaiveDate,
    pub values: Vec<f64>,
}

impl UserSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| i as f64).collect()
    }

    pub fn period_start(&self, index: i64) -> NaiveDate {
        self.granularity.start_of(self.origin, index)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("no records and no date range to aggregate over")]
    EmptyInput,
    #[error("range end {end} precedes start {start}")]
    InvertedRange { start: NaiveDate, end: NaiveDate },
}

/// Sums durations into periods, zero-filling periods without records.
///
/// Without an explicit range the axis spans the earliest to the latest record
/// over all users, so every returned series shares one origin. Records outside
/// an explicit range are ignored.
pub fn aggregate(
    records: &[AccessRecord],
    granularity: Granularity,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<BTreeMap<String, UserSeries>, AggregateError> {
    let (start, end) = match range {
        Some((s, e)) if e < s => return Err(AggregateError::InvertedRange { start: s, end: e }),
        Some(r) => r,
        None => {
            let min = records.iter().map(|r| r.date).min();
            let max = records.iter().map(|r| r.date).max();
            match (min, max) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(AggregateError::EmptyInput),
            }
        }
    };
    let origin = granularity.floor(start);
    let n = granularity.span(start, end);
    let mut out: BTreeMap<String, UserSeries> = BTreeMap::new();
    for r in records.iter().filter(|r| r.date >= start && r.date <= end) {
        let idx = granularity.index(origin, r.date) as usize;
        let series = out.entry(r.user_id.clone()).or_insert_with(|| UserSeries {
            user_id: r.user_id.clone(),
            granularity,
            origin,
            values: vec![0.0; n],
        });
        series.values[idx] += r.duration;
    }
    Ok(out)
}
