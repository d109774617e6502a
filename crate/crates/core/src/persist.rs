//! Versioned on-disk formats.
//!
//! Every artifact is a JSON document `{"schema": "snoopy.<kind>",
//! "version": 1, "body": ...}`. Trace files are line-delimited: a header
//! line with the same schema fields, then one JSON record per session.
//! Writes go through a temporary file in the target directory and a
//! rename, so readers never see a partial file.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EnsembleSpec, EnsembleStudyReport, ExperimentReport, ExperimentSpec, StabilityTable};
use crate::predictor::PredictionResult;
use crate::profiler::SnoopyDatabase;
use crate::sim::{BrowsingContext, EncoderParams, EncryptedTrace, GroundTruth, SessionPlan};
use crate::site::{SiteSpec, Website};

pub const FORMAT_VERSION: u32 = 1;
const SCHEMA_PREFIX: &str = "snoopy.";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("expected schema `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },
    #[error("unsupported version {found} (this build reads version {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("serialization failed: {0}")]
    Encode(String),
}

/// A type with a stable on-disk schema name.
pub trait Artifact: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn schema() -> String {
        format!("{SCHEMA_PREFIX}{}", Self::KIND)
    }
}

impl Artifact for Website {
    const KIND: &'static str = "website";
}
impl Artifact for SiteSpec {
    const KIND: &'static str = "site-spec";
}
impl Artifact for SnoopyDatabase {
    const KIND: &'static str = "database";
}
impl Artifact for PredictionResult {
    const KIND: &'static str = "prediction";
}
impl Artifact for Vec<PredictionResult> {
    const KIND: &'static str = "predictions";
}
impl Artifact for ExperimentSpec {
    const KIND: &'static str = "experiment-spec";
}
impl Artifact for ExperimentReport {
    const KIND: &'static str = "experiment-report";
}
impl Artifact for EnsembleSpec {
    const KIND: &'static str = "ensemble-spec";
}
impl Artifact for EnsembleStudyReport {
    const KIND: &'static str = "ensemble-report";
}
impl Artifact for StabilityTable {
    const KIND: &'static str = "stability";
}
impl Artifact for EncoderParams {
    const KIND: &'static str = "encoder-params";
}
impl Artifact for Vec<BrowsingContext> {
    const KIND: &'static str = "contexts";
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: String,
    version: u32,
    body: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    body: T,
}

/// Zero-based byte offset of a 1-based (line, column) position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn parse_error(text: &str, base: usize, e: &serde_json::Error) -> PersistError {
    let (line, column) = (e.line(), e.column());
    PersistError::Parse {
        offset: base + byte_offset(text, line, column),
        line,
        column,
        message: e.to_string(),
    }
}

fn check_header(h: &Header, expected: &str) -> Result<(), PersistError> {
    if h.schema != expected {
        return Err(PersistError::Schema {
            expected: expected.to_owned(),
            found: h.schema.clone(),
        });
    }
    if h.version != FORMAT_VERSION {
        return Err(PersistError::Version { found: h.version });
    }
    Ok(())
}

pub fn to_string<T: Artifact>(value: &T) -> Result<String, PersistError> {
    let env = EnvelopeOut {
        schema: T::schema(),
        version: FORMAT_VERSION,
        body: value,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| PersistError::Encode(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_str<T: Artifact>(text: &str) -> Result<T, PersistError> {
    let header: Header = serde_json::from_str(text).map_err(|e| parse_error(text, 0, &e))?;
    check_header(&header, &T::schema())?;
    let env: EnvelopeIn<T> = serde_json::from_str(text).map_err(|e| parse_error(text, 0, &e))?;
    Ok(env.body)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PersistError {
    PersistError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Replaces `path` with `bytes` in one rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn save<T: Artifact>(path: &Path, value: &T) -> Result<(), PersistError> {
    write_atomic(path, to_string(value)?.as_bytes())
}

pub fn load<T: Artifact>(path: &Path) -> Result<T, PersistError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    from_str(&text)
}

/// One captured session. Blind records carry only what a passive observer
/// sees: the trace and its context annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub session: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<BrowsingContext>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SessionPlan>,
    pub trace: EncryptedTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

impl TraceRecord {
    pub fn blind(&self) -> Self {
        Self {
            session: self.session,
            context: None,
            plan: None,
            trace: self.trace.clone(),
            ground_truth: None,
        }
    }
}

pub const TRACES_KIND: &str = "traces";

pub fn traces_to_string(records: &[TraceRecord]) -> Result<String, PersistError> {
    let enc = |e: serde_json::Error| PersistError::Encode(e.to_string());
    let mut out = serde_json::to_string(&serde_json::json!({
        "schema": format!("{SCHEMA_PREFIX}{TRACES_KIND}"),
        "version": FORMAT_VERSION,
    }))
    .map_err(enc)?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(enc)?);
        out.push('\n');
    }
    Ok(out)
}

/// Reads a trace file line by line. Offsets in errors count from the start
/// of the stream.
pub fn read_traces<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, PersistError> {
    let mut offset = 0usize;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PersistError::Io {
            path: "<trace stream>".into(),
            reason: e.to_string(),
        })?;
        let base = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fix = |e: serde_json::Error| match parse_error(&line, base, &e) {
            PersistError::Parse { offset, column, message, .. } => PersistError::Parse {
                offset,
                line: i + 1,
                column,
                message,
            },
            other => other,
        };
        if !header_seen {
            let h: Header = serde_json::from_str(&line).map_err(fix)?;
            check_header(&h, &format!("{SCHEMA_PREFIX}{TRACES_KIND}"))?;
            header_seen = true;
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(fix)?);
    }
    if !header_seen {
        return Err(PersistError::Parse {
            offset,
            line: 1,
            column: 1,
            message: "empty trace file".into(),
        });
    }
    Ok(out)
}

pub fn save_traces(path: &Path, records: &[TraceRecord]) -> Result<(), PersistError> {
    write_atomic(path, traces_to_string(records)?.as_bytes())
}

pub fn load_traces(path: &Path) -> Result<Vec<TraceRecord>, PersistError> {
    let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_traces(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::{profile_website, ProfileVariant, QueryBudget};
    use crate::sim::{sample_session_plan, simulate_session, EncoderParams};
    use crate::site::generate_synthetic_site;

    fn site() -> Website {
        generate_synthetic_site(&SiteSpec::new(6, 1)).unwrap()
    }

    #[test]
    fn website_round_trip() {
        let s = site();
        let text = to_string(&s).unwrap();
        assert!(text.contains("\"schema\": \"snoopy.website\""));
        assert_eq!(from_str::<Website>(&text).unwrap(), s);
        assert_eq!(to_string(&from_str::<Website>(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn wrong_schema_rejected() {
        let text = to_string(&site()).unwrap();
        assert!(matches!(from_str::<SiteSpec>(&text), Err(PersistError::Schema { .. })));
    }

    #[test]
    fn other_versions_rejected() {
        let text = to_string(&site()).unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(from_str::<Website>(&text), Err(PersistError::Version { found: 2 })));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let text = to_string(&site()).unwrap();
        let cut = &text[..text.len() / 2];
        match from_str::<Website>(cut) {
            Err(PersistError::Parse { offset, .. }) => assert!(offset <= cut.len() && offset > 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offset_points_at_the_bad_byte() {
        let text = "{\n  \"schema\": @\n}";
        match from_str::<Website>(text) {
            Err(PersistError::Parse { offset, line, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(&text[offset..offset + 1], "@");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn database_round_trip_and_atomic_save() {
        let s = site();
        let db = profile_website(
            &s,
            &BrowsingContext::new("os_a", "browser_a"),
            2,
            &ProfileVariant::standard(),
            &QueryBudget::new(24),
            &EncoderParams::default(),
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        save(&path, &db).unwrap();
        let back: SnoopyDatabase = load(&path).unwrap();
        assert_eq!(back, db);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn trace_file_round_trip_and_blinding() {
        let s = site();
        let ctx = BrowsingContext::new("os_b", "browser_b");
        let plan = sample_session_plan(&s, 1, 3, 4).unwrap();
        let (trace, truth) = simulate_session(&s, &plan, &ctx, &EncoderParams::default(), 4).unwrap();
        let rec = TraceRecord {
            session: 0,
            context: Some(ctx),
            plan: Some(plan),
            trace,
            ground_truth: Some(truth),
        };
        let text = traces_to_string(&[rec.clone(), rec.blind()]).unwrap();
        assert_eq!(text.lines().count(), 3);
        let back = read_traces(text.as_bytes()).unwrap();
        assert_eq!(back, [rec.clone(), rec.blind()]);
        assert!(!text.lines().nth(2).unwrap().contains("ground_truth"));
    }

    #[test]
    fn trace_parse_error_offset_spans_lines() {
        let text = traces_to_string(&[]).unwrap() + "{\"session\": x}\n";
        let header_len = text.lines().next().unwrap().len() + 1;
        match read_traces(text.as_bytes()) {
            Err(PersistError::Parse { offset, line, .. }) => {
                assert_eq!(line, 2);
                assert!(offset > header_len);
                assert_eq!(&text[offset..offset + 1], "x");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_header_rejected() {
        assert!(read_traces("".as_bytes()).is_err());
        let bad = "{\"schema\":\"snoopy.website\",\"version\":1}\n";
        assert!(matches!(read_traces(bad.as_bytes()), Err(PersistError::Schema { .. })));
    }
}
