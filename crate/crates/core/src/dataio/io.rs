use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::{Event, Outcome, Playlist, Session, DEFAULT_CAP};
use crate::error::{Error, Result};

use super::Dataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionFormat {
    /// One session object per line.
    #[default]
    Jsonl,
    /// One event per row: `session_id,playlist_id,pos,action`.
    Csv,
}

impl FromStr for SessionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(SessionFormat::Jsonl),
            "csv" => Ok(SessionFormat::Csv),
            other => Err(Error::invalid(format!("unknown session format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: SessionFormat,
    /// Abort on the first session that breaks a state-machine rule instead of
    /// skipping it.
    pub strict: bool,
    pub cap: u32,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: SessionFormat::Jsonl,
            strict: false,
            cap: DEFAULT_CAP,
        }
    }
}

/// A session dropped during a lenient load.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadIssue {
    pub line: usize,
    pub session_id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub issues: Vec<LoadIssue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    pos: usize,
    action: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    session_id: String,
    playlist_id: String,
    events: Vec<RawEvent>,
}

#[derive(Deserialize)]
struct RawCsvEvent {
    session_id: String,
    playlist_id: String,
    pos: usize,
    action: String,
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_action(path: &Path, line: usize, action: &str) -> Result<Outcome> {
    action
        .parse()
        .map_err(|_| schema(path, line, format!("unknown outcome `{action}`")))
}

pub fn load_playlists(path: &Path) -> Result<Vec<Playlist>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let playlist: Playlist = serde_json::from_str(&line).map_err(|e| schema(path, k + 1, e.to_string()))?;
        playlist.validate().map_err(|e| schema(path, k + 1, e.to_string()))?;
        out.push(playlist);
    }
    Ok(out)
}

/// Reads sessions with the line each one starts on.
fn read_sessions(path: &Path, format: SessionFormat) -> Result<Vec<(usize, Session)>> {
    match format {
        SessionFormat::Jsonl => {
            let reader = BufReader::new(File::open(path)?);
            let mut out = Vec::new();
            for (k, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawSession = serde_json::from_str(&line).map_err(|e| schema(path, k + 1, e.to_string()))?;
                let events = raw
                    .events
                    .iter()
                    .map(|e| Ok(Event::new(e.pos, parse_action(path, k + 1, &e.action)?)))
                    .collect::<Result<Vec<_>>>()?;
                out.push((k + 1, Session::new(raw.session_id, raw.playlist_id, events)));
            }
            Ok(out)
        }
        SessionFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)?;
            let headers = reader.headers()?.clone();
            for column in ["session_id", "playlist_id", "pos", "action"] {
                if !headers.iter().any(|h| h == column) {
                    return Err(schema(path, 1, format!("missing column `{column}`")));
                }
            }
            let mut out: Vec<(usize, Session)> = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            for record in reader.records() {
                let record = record?;
                let line = record.position().map_or(0, |p| p.line() as usize);
                let raw: RawCsvEvent = record
                    .deserialize(Some(&headers))
                    .map_err(|e| schema(path, line, e.to_string()))?;
                let event = Event::new(raw.pos, parse_action(path, line, &raw.action)?);
                match index.get(&raw.session_id) {
                    Some(&k) => {
                        if out[k].1.playlist_id != raw.playlist_id {
                            return Err(schema(path, line, format!("session `{}` changes playlist", raw.session_id)));
                        }
                        out[k].1.events.push(event);
                    }
                    None => {
                        index.insert(raw.session_id.clone(), out.len());
                        out.push((line, Session::new(raw.session_id, raw.playlist_id, vec![event])));
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Loads sessions against known playlists. Malformed rows, unknown outcome
/// strings and unknown playlists are always fatal; sessions that break a
/// state-machine rule are fatal in strict mode and skipped (with an issue
/// record and a warning) otherwise.
pub fn load_sessions(path: &Path, playlists: Vec<Playlist>, options: LoadOptions) -> Result<Loaded> {
    let raw = read_sessions(path, options.format)?;
    let lookup: HashMap<&str, usize> = playlists
        .iter()
        .map(|p| (p.playlist_id.as_str(), p.len()))
        .collect();
    let mut sessions = Vec::with_capacity(raw.len());
    let mut issues = Vec::new();
    for (line, session) in raw {
        let n = *lookup
            .get(session.playlist_id.as_str())
            .ok_or_else(|| Error::UnknownPlaylist(session.playlist_id.clone()))?;
        match session.validate(n, options.cap) {
            Ok(()) => sessions.push(session),
            Err(e) if options.strict => return Err(e),
            Err(e) => {
                warn!("{}:{line}: skipping session: {e}", path.display());
                issues.push(LoadIssue {
                    line,
                    session_id: session.session_id.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(Loaded {
        dataset: Dataset::new(playlists, sessions, options.cap)?,
        issues,
    })
}

pub fn load_dataset(sessions: &Path, playlists: &Path, options: LoadOptions) -> Result<Loaded> {
    load_sessions(sessions, load_playlists(playlists)?, options)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_sessions_jsonl<'a>(path: &Path, sessions: impl IntoIterator<Item = &'a Session>) -> Result<()> {
    let mut w = create(path)?;
    for s in sessions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sessions_csv<'a>(path: &Path, sessions: impl IntoIterator<Item = &'a Session>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["session_id", "playlist_id", "pos", "action"])?;
    for s in sessions {
        for e in &s.events {
            w.write_record([s.session_id.as_str(), s.playlist_id.as_str(), &e.pos.to_string(), e.action.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_playlists_jsonl<'a>(path: &Path, playlists: impl IntoIterator<Item = &'a Playlist>) -> Result<()> {
    let mut w = create(path)?;
    for p in playlists {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
