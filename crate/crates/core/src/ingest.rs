//! Session-log aggregation, churn imputation and the two CSV formats.
//!
//! Durations CSV: `player_id,duration_hours,censored` (censored is `0` or `1`),
//! optionally followed by extra columns such as a stratum label.
//! Sessions CSV: `player_id,start_iso8601,end_iso8601` with RFC 3339 timestamps.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use crate::error::{invalid, Error, Result};
use crate::types::{Cohort, Observation};

const SECONDS_PER_HOUR: f64 = 3600.0;
const DURATION_HEADER: [&str; 3] = ["player_id", "duration_hours", "censored"];
type Interval = (DateTime<Utc>, DateTime<Utc>);

const SESSION_HEADER: [&str; 3] = ["player_id", "start_iso8601", "end_iso8601"];

/// One logged play session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub player_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl SessionRecord {
    pub fn new(player_id: impl Into<String>, start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        SessionRecord {
            player_id: player_id.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestConfig {
    pub collection_cutoff: DateTime<Utc>,
    /// Players seen within this window before the cutoff are treated as still
    /// active (censored).
    pub inactivity_window: Duration,
    /// Players with total playtime at or below this are dropped.
    pub min_total_playtime: Duration,
    pub time_resolution: Duration,
}

impl IngestConfig {
    pub fn new(collection_cutoff: DateTime<Utc>) -> Self {
        IngestConfig {
            collection_cutoff,
            inactivity_window: Duration::days(14),
            min_total_playtime: Duration::zero(),
            time_resolution: Duration::seconds(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inactivity_window <= Duration::zero() {
            return invalid("inactivity window must be positive");
        }
        if self.time_resolution <= Duration::zero() {
            return invalid("time resolution must be positive");
        }
        if self.min_total_playtime < Duration::zero() {
            return invalid("minimum total playtime must be non-negative");
        }
        Ok(())
    }
}

/// A subject row of a durations file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerRecord {
    pub player_id: String,
    pub observation: Observation,
    pub stratum: Option<String>,
}

/// Per-player durations with identifiers and optional strata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DurationTable {
    pub label: String,
    pub records: Vec<PlayerRecord>,
}

impl DurationTable {
    pub fn to_cohort(&self) -> Cohort {
        Cohort::new(
            self.label.clone(),
            self.records.iter().map(|r| r.observation).collect(),
        )
    }

    /// Splits into one cohort per stratum label, ordered by label.
    /// Records without a stratum are an error.
    pub fn by_stratum(&self) -> Result<BTreeMap<String, Cohort>> {
        let mut out: BTreeMap<String, Cohort> = BTreeMap::new();
        for r in &self.records {
            let Some(s) = &r.stratum else {
                return invalid(format!("player {} has no stratum", r.player_id));
            };
            out.entry(s.clone())
                .or_insert_with(|| Cohort::new(format!("{}[{}]", self.label, s), vec![]))
                .observations
                .push(r.observation);
        }
        Ok(out)
    }
}

fn round_to_resolution(d: Duration, resolution: Duration) -> Result<f64> {
    let (Some(total), Some(res)) = (d.num_microseconds(), resolution.num_microseconds()) else {
        return invalid("duration out of range");
    };
    let units = (total as f64 / res as f64).round();
    Ok(units * res as f64 / 1e6 / SECONDS_PER_HOUR)
}

/// Like [`aggregate_sessions`] but keeps player identifiers.
/// Players are ordered by identifier.
pub fn aggregate_players(
    records: &[SessionRecord],
    config: &IngestConfig,
) -> Result<DurationTable> {
    config.validate()?;
    let mut per_player: BTreeMap<&str, Vec<Interval>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.player_id.is_empty() {
            return invalid(format!("session record {i} has an empty player id"));
        }
        if r.end < r.start {
            return invalid(format!(
                "session record {i} ({}) ends before it starts",
                r.player_id
            ));
        }
        if r.end > config.collection_cutoff {
            return invalid(format!(
                "session record {i} ({}) ends at {} after the collection cutoff {}",
                r.player_id, r.end, config.collection_cutoff
            ));
        }
        per_player
            .entry(&r.player_id)
            .or_default()
            .push((r.start, r.end));
    }

    let mut out = Vec::with_capacity(per_player.len());
    for (id, mut sessions) in per_player {
        sessions.sort();
        let mut total = Duration::zero();
        let (mut cur_start, mut cur_end) = sessions[0];
        for &(s, e) in &sessions[1..] {
            if s <= cur_end {
                cur_end = cur_end.max(e);
            } else {
                total += cur_end - cur_start;
                (cur_start, cur_end) = (s, e);
            }
        }
        total += cur_end - cur_start;
        if total <= config.min_total_playtime {
            continue;
        }
        let censored = config.collection_cutoff - cur_end < config.inactivity_window;
        out.push(PlayerRecord {
            player_id: id.to_string(),
            observation: Observation::new(
                round_to_resolution(total, config.time_resolution)?,
                censored,
            ),
            stratum: None,
        });
    }
    Ok(DurationTable {
        label: String::new(),
        records: out,
    })
}

/// Total playtime per player, with censoring imputed from the inactivity window.
pub fn aggregate_sessions(records: &[SessionRecord], config: &IngestConfig) -> Result<Cohort> {
    Ok(aggregate_players(records, config)?.to_cohort())
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<(csv::Reader<std::fs::File>, csv::StringRecord)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_error(path, 1, "missing header row"));
    }
    Ok((reader, header))
}

fn column(path: &Path, header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| parse_error(path, 1, format!("missing column `{name}`")))
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Reads a durations file, optionally taking stratum labels from `strata_column`.
pub fn read_duration_table(
    path: impl AsRef<Path>,
    strata_column: Option<&str>,
) -> Result<DurationTable> {
    let path = path.as_ref();
    let (mut reader, header) = open_reader(path)?;
    let [id_col, dur_col, cens_col] = DURATION_HEADER.map(|name| column(path, &header, name));
    let (id_col, dur_col, cens_col) = (id_col?, dur_col?, cens_col?);
    let strata_col = strata_column
        .map(|name| column(path, &header, name))
        .transpose()?;

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = row_line(&row);
        let id = row[id_col].trim();
        if id.is_empty() {
            return Err(parse_error(path, line, "empty player_id"));
        }
        let raw = row[dur_col].trim();
        let duration: f64 = raw
            .parse()
            .map_err(|_| parse_error(path, line, format!("bad duration `{raw}`")))?;
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(parse_error(
                path,
                line,
                format!("duration must be finite and >= 0, got `{raw}`"),
            ));
        }
        let censored = match row[cens_col].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(
                    path,
                    line,
                    format!("censored flag must be 0 or 1, got `{other}`"),
                ))
            }
        };
        records.push(PlayerRecord {
            player_id: id.to_string(),
            observation: Observation::new(duration, censored),
            stratum: strata_col.map(|c| row[c].trim().to_string()),
        });
    }
    Ok(DurationTable {
        label: label_of(path),
        records,
    })
}

/// Reads a durations file into a cohort labelled with the file stem.
pub fn read_durations(path: impl AsRef<Path>) -> Result<Cohort> {
    Ok(read_duration_table(path, None)?.to_cohort())
}

/// Hours with at most six fractional digits and no trailing zeros.
pub fn format_hours(hours: f64) -> String {
    let s = format!("{hours:.6}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Writes a durations table; a stratum column named `stratum` is added when
/// any record carries one.
pub fn write_duration_table(table: &DurationTable, path: impl AsRef<Path>) -> Result<()> {
    write_duration_table_to(table, std::fs::File::create(path)?)
}

pub fn write_duration_table_to<W: std::io::Write>(table: &DurationTable, out: W) -> Result<()> {
    let with_strata = table.records.iter().any(|r| r.stratum.is_some());
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    if with_strata {
        writer.write_record(DURATION_HEADER.iter().copied().chain(["stratum"]))?;
    } else {
        writer.write_record(DURATION_HEADER)?;
    }
    for r in &table.records {
        let hours = format_hours(r.observation.duration);
        let flag = if r.observation.censored { "1" } else { "0" };
        if with_strata {
            writer.write_record([
                r.player_id.as_str(),
                &hours,
                flag,
                r.stratum.as_deref().unwrap_or(""),
            ])?;
        } else {
            writer.write_record([r.player_id.as_str(), &hours, flag])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes a cohort with generated identifiers `p0, p1, ...`.
pub fn write_durations(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    write_durations_to(cohort, std::fs::File::create(path)?)
}

pub fn write_durations_to<W: std::io::Write>(cohort: &Cohort, out: W) -> Result<()> {
    cohort.validate()?;
    let table = DurationTable {
        label: cohort.label.clone(),
        records: cohort
            .observations
            .iter()
            .enumerate()
            .map(|(i, &observation)| PlayerRecord {
                player_id: format!("p{i}"),
                observation,
                stratum: None,
            })
            .collect(),
    };
    write_duration_table_to(&table, out)
}

fn parse_timestamp(path: &Path, line: u64, raw: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| parse_error(path, line, format!("bad timestamp `{raw}`: {e}")))
}

pub fn read_sessions(path: impl AsRef<Path>) -> Result<Vec<SessionRecord>> {
    let path = path.as_ref();
    let (mut reader, header) = open_reader(path)?;
    let [id_col, start_col, end_col] = SESSION_HEADER.map(|name| column(path, &header, name));
    let (id_col, start_col, end_col) = (id_col?, start_col?, end_col?);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = row_line(&row);
        let id = row[id_col].trim();
        if id.is_empty() {
            return Err(parse_error(path, line, "empty player_id"));
        }
        let start = parse_timestamp(path, line, &row[start_col])?;
        let end = parse_timestamp(path, line, &row[end_col])?;
        if end < start {
            return Err(parse_error(path, line, "session ends before it starts"));
        }
        out.push(SessionRecord::new(id, start, end));
    }
    Ok(out)
}

pub fn write_sessions(records: &[SessionRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    writer.write_record(SESSION_HEADER)?;
    for r in records {
        writer.write_record([
            r.player_id.as_str(),
            &r.start.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            &r.end.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
