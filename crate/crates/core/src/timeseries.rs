//! Sensor and message-log ingestion, validation, and alignment of both
//! roadways onto a single uniform time grid.
//!
//! Missing bins are flagged in [`AlignedSeries::gap_mask`], never
//! interpolated; downstream stages decide how to treat them. Duplicate
//! `(timestamp, roadway)` rows are fatal because they signal upstream data
//! corruption rather than a recoverable condition.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which of the two paired roadways a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Roadway {
    Departures,
    Arrivals,
}

impl Roadway {
    pub fn parse(label: &str) -> Option<Roadway> {
        match label.trim().to_ascii_lowercase().as_str() {
            "departures" => Some(Roadway::Departures),
            "arrivals" => Some(Roadway::Arrivals),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Roadway::Departures => "departures",
            Roadway::Arrivals => "arrivals",
        }
    }
}

impl fmt::Display for Roadway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Diversion message kind: `TD` requests Departures -> Arrivals, `TA` the
/// converse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreatmentKind {
    #[serde(rename = "TD")]
    Td,
    #[serde(rename = "TA")]
    Ta,
}

impl TreatmentKind {
    pub fn parse(label: &str) -> Option<TreatmentKind> {
        match label.trim().to_ascii_uppercase().as_str() {
            "TD" => Some(TreatmentKind::Td),
            "TA" => Some(TreatmentKind::Ta),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TreatmentKind::Td => "TD",
            TreatmentKind::Ta => "TA",
        }
    }

    /// Roadway whose drivers the message asks to divert away.
    pub fn origin(&self) -> Roadway {
        match self {
            TreatmentKind::Td => Roadway::Departures,
            TreatmentKind::Ta => Roadway::Arrivals,
        }
    }
}

impl fmt::Display for TreatmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One sensor observation: flow and median speed for one roadway over one
/// time bin (timestamp is the bin start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub timestamp: DateTime<Utc>,
    pub roadway: Roadway,
    /// Vehicles per bin, non-negative.
    pub flow: f64,
    /// Median speed in mph, non-negative.
    pub median_speed: f64,
}

/// One displayed-message interval from the sign log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub kind: TreatmentKind,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl MessageEvent {
    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

impl fmt::Display for MessageEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}..{}",
            self.kind,
            self.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            self.end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        )
    }
}

/// Both roadways' observations on a uniform grid. `gap_mask[i]` is true
/// when bin `i` is missing either roadway's record; values at gap bins are
/// NaN and must not be consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSeries {
    start: DateTime<Utc>,
    bin_minutes: i64,
    pub dep_flow: Vec<f64>,
    pub arr_flow: Vec<f64>,
    pub dep_speed: Vec<f64>,
    pub arr_speed: Vec<f64>,
    pub gap_mask: Vec<bool>,
}

impl AlignedSeries {
    pub fn len(&self) -> usize {
        self.gap_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gap_mask.is_empty()
    }

    pub fn bin_minutes(&self) -> i64 {
        self.bin_minutes
    }

    pub fn bin_start(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(self.bin_minutes * index as i64)
    }

    pub fn bin_starts(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.len()).map(|i| self.bin_start(i))
    }

    pub fn grid_start(&self) -> DateTime<Utc> {
        self.start
    }

    /// End of the last bin (exclusive grid end).
    pub fn grid_end(&self) -> DateTime<Utc> {
        self.bin_start(self.len())
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask.iter().filter(|g| **g).count()
    }

    /// Hour of day of a bin start under a fixed UTC offset.
    pub fn local_hour(&self, index: usize, utc_offset_minutes: i32) -> u32 {
        use chrono::Timelike;
        (self.bin_start(index) + Duration::minutes(utc_offset_minutes as i64)).hour()
    }

    pub fn flow(&self, roadway: Roadway, index: usize) -> f64 {
        match roadway {
            Roadway::Departures => self.dep_flow[index],
            Roadway::Arrivals => self.arr_flow[index],
        }
    }

    pub fn speed(&self, roadway: Roadway, index: usize) -> f64 {
        match roadway {
            Roadway::Departures => self.dep_speed[index],
            Roadway::Arrivals => self.arr_speed[index],
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("overlapping message events: {0} and {1}")]
    OverlappingEvents(MessageEvent, MessageEvent),
    #[error("duplicate sensor record for ({roadway}, {timestamp})")]
    DuplicateRecord {
        roadway: Roadway,
        timestamp: DateTime<Utc>,
    },
    #[error("no records for roadway `{0}`")]
    EmptyRoadway(Roadway),
    #[error("record timestamp {0} is not aligned to the {1}-minute grid")]
    MisalignedTimestamp(DateTime<Utc>, i64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no sensor records")]
    NoRecords,
}

/// A rejected input row with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowReject {
    pub line: u64,
    pub message: String,
}

/// Result of parsing one CSV stream: accepted records plus per-row rejects.
#[derive(Debug, Clone)]
pub struct ParseOutcome<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RowReject>,
}

impl<T> ParseOutcome<T> {
    pub fn accepted(&self) -> usize {
        self.records.len()
    }

    pub fn rejected(&self) -> usize {
        self.rejects.len()
    }
}

/// Column-name remapping for sensor CSVs. Each field names the actual
/// header of the corresponding logical column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorSchema {
    pub timestamp: String,
    pub roadway: String,
    pub flow: String,
    pub median_speed: String,
}

impl Default for SensorSchema {
    fn default() -> Self {
        SensorSchema {
            timestamp: "timestamp".into(),
            roadway: "roadway".into(),
            flow: "flow".into(),
            median_speed: "median_speed".into(),
        }
    }
}

fn parse_instant(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.with_timezone(&Utc));
    }
    // Minute-resolution form, e.g. `2023-03-01T06:00Z`.
    chrono::NaiveDateTime::parse_from_str(text.trim_end_matches('Z'), "%Y-%m-%dT%H:%M")
        .ok()
        .map(|naive| naive.and_utc())
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

/// Parse a sensor CSV stream. Malformed rows are reported with their line
/// number rather than aborting the parse; only an unreadable stream or a
/// missing column is fatal.
pub fn parse_sensor_csv<R: Read>(
    stream: R,
    schema: &SensorSchema,
) -> Result<ParseOutcome<SensorRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(stream);
    let headers = reader.headers()?.clone();
    let ts_col = header_index(&headers, &schema.timestamp)?;
    let road_col = header_index(&headers, &schema.roadway)?;
    let flow_col = header_index(&headers, &schema.flow)?;
    let speed_col = header_index(&headers, &schema.median_speed)?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let mut reject = |message: String| rejects.push(RowReject { line, message });

        let field = |col: usize| row.get(col).unwrap_or("");
        let Some(timestamp) = parse_instant(field(ts_col)) else {
            reject(format!("malformed timestamp `{}`", field(ts_col)));
            continue;
        };
        let Some(roadway) = Roadway::parse(field(road_col)) else {
            reject(format!("unknown roadway label `{}`", field(road_col)));
            continue;
        };
        let Ok(flow) = field(flow_col).parse::<f64>() else {
            reject(format!("malformed flow `{}`", field(flow_col)));
            continue;
        };
        let Ok(median_speed) = field(speed_col).parse::<f64>() else {
            reject(format!("malformed median_speed `{}`", field(speed_col)));
            continue;
        };
        if !flow.is_finite() || flow < 0.0 {
            reject(format!("negative or non-finite flow {flow}"));
            continue;
        }
        if !median_speed.is_finite() || median_speed < 0.0 {
            reject(format!("negative or non-finite median_speed {median_speed}"));
            continue;
        }
        records.push(SensorRecord {
            timestamp,
            roadway,
            flow,
            median_speed,
        });
    }
    Ok(ParseOutcome { records, rejects })
}

/// Parse a message-log CSV (`kind,start,end`). Events are returned sorted
/// by start. Row-level defects (bad kind, `end <= start`) become rejects;
/// any overlap between two events is fatal because the downstream model
/// assumes at most one active treatment at a time.
pub fn parse_message_log<R: Read>(
    stream: R,
) -> Result<ParseOutcome<MessageEvent>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(stream);
    let headers = reader.headers()?.clone();
    let kind_col = header_index(&headers, "kind")?;
    let start_col = header_index(&headers, "start")?;
    let end_col = header_index(&headers, "end")?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let mut reject = |message: String| rejects.push(RowReject { line, message });

        let field = |col: usize| row.get(col).unwrap_or("");
        let Some(kind) = TreatmentKind::parse(field(kind_col)) else {
            reject(format!("unknown treatment kind `{}`", field(kind_col)));
            continue;
        };
        let Some(start) = parse_instant(field(start_col)) else {
            reject(format!("malformed start `{}`", field(start_col)));
            continue;
        };
        let Some(end) = parse_instant(field(end_col)) else {
            reject(format!("malformed end `{}`", field(end_col)));
            continue;
        };
        if end <= start {
            reject(format!("event end {end} not after start {start}"));
            continue;
        }
        records.push(MessageEvent { kind, start, end });
    }
    records.sort_by_key(|e| (e.start, e.end));
    for pair in records.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(IngestError::OverlappingEvents(pair[0], pair[1]));
        }
    }
    Ok(ParseOutcome { records, rejects })
}

/// Grid specification for [`align`]: bin width plus optional explicit
/// bounds. When the bounds are omitted the grid spans the observed
/// min..max bin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub bin_minutes: i64,
    pub start: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
}

impl GridSpec {
    pub fn new(bin_minutes: i64) -> GridSpec {
        GridSpec {
            bin_minutes,
            start: None,
            end: None,
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::new(15)
    }
}

/// Place records from both roadways onto one uniform grid. Bins missing
/// either roadway's record are gap-flagged; every non-gap value comes from
/// exactly one input record.
pub fn align(records: &[SensorRecord], grid: &GridSpec) -> Result<AlignedSeries, IngestError> {
    if grid.bin_minutes <= 0 {
        return Err(IngestError::InvalidGrid(format!(
            "bin width must be positive, got {}",
            grid.bin_minutes
        )));
    }
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    for roadway in [Roadway::Departures, Roadway::Arrivals] {
        if !records.iter().any(|r| r.roadway == roadway) {
            return Err(IngestError::EmptyRoadway(roadway));
        }
    }

    let step = Duration::minutes(grid.bin_minutes);
    let observed_min = records.iter().map(|r| r.timestamp).min().unwrap();
    let observed_max = records.iter().map(|r| r.timestamp).max().unwrap();
    let start = grid.start.unwrap_or(observed_min);
    let last = grid.end.unwrap_or(observed_max);
    if last < start {
        return Err(IngestError::InvalidGrid(format!(
            "grid end {last} precedes start {start}"
        )));
    }

    let bin_index = |ts: DateTime<Utc>| -> Result<i64, IngestError> {
        let offset = ts - start;
        let millis = offset.num_milliseconds();
        let step_millis = step.num_milliseconds();
        if millis % step_millis != 0 {
            return Err(IngestError::MisalignedTimestamp(ts, grid.bin_minutes));
        }
        Ok(millis / step_millis)
    };
    let len = (bin_index(last)? + 1) as usize;

    let mut by_bin: BTreeMap<(i64, Roadway), &SensorRecord> = BTreeMap::new();
    for record in records {
        let index = bin_index(record.timestamp)?;
        if index < 0 || index as usize >= len {
            // Outside an explicitly bounded grid: ignore.
            continue;
        }
        if by_bin.insert((index, record.roadway), record).is_some() {
            return Err(IngestError::DuplicateRecord {
                roadway: record.roadway,
                timestamp: record.timestamp,
            });
        }
    }

    let mut series = AlignedSeries {
        start,
        bin_minutes: grid.bin_minutes,
        dep_flow: vec![f64::NAN; len],
        arr_flow: vec![f64::NAN; len],
        dep_speed: vec![f64::NAN; len],
        arr_speed: vec![f64::NAN; len],
        gap_mask: vec![true; len],
    };
    for i in 0..len as i64 {
        let dep = by_bin.get(&(i, Roadway::Departures));
        let arr = by_bin.get(&(i, Roadway::Arrivals));
        if let (Some(dep), Some(arr)) = (dep, arr) {
            let i = i as usize;
            series.dep_flow[i] = dep.flow;
            series.arr_flow[i] = arr.flow;
            series.dep_speed[i] = dep.median_speed;
            series.arr_speed[i] = arr.median_speed;
            series.gap_mask[i] = false;
        }
    }
    Ok(series)
}

/// Write sensor records in the canonical CSV format accepted by
/// [`parse_sensor_csv`] with the default schema.
pub fn write_sensor_csv<W: Write>(out: W, records: &[SensorRecord]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["timestamp", "roadway", "flow", "median_speed"])?;
    for r in records {
        writer.write_record([
            r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            r.roadway.label().to_string(),
            format!("{}", r.flow),
            format!("{}", r.median_speed),
        ])?;
    }
    writer.flush().map_err(IngestError::Io)
}

/// Write message events in the canonical CSV format accepted by
/// [`parse_message_log`].
pub fn write_message_csv<W: Write>(out: W, events: &[MessageEvent]) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["kind", "start", "end"])?;
    for e in events {
        writer.write_record([
            e.kind.label().to_string(),
            e.start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            e.end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        ])?;
    }
    writer.flush().map_err(IngestError::Io)
}
