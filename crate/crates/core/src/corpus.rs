//! Protocol parsing and speech attribution.
//!
//! A protocol file is plain UTF-8 text:
//!
//! ```text
//! #id: S/PV.4541
//! #date: 2002-06-13
//! #agenda: Situation in Afghanistan
//! #attendees:
//! Mr. Khalid | Pakistan
//! Ms. Lee | United States
//! #body:
//! Mr. Khalid (Pakistan): ...
//! The President: ...
//! ```
//!
//! The body is split at column-0 turn markers. Each turn becomes one
//! [`Speech`]; presidential turns and turns whose speaker cannot be
//! attributed are kept but flagged with an [`ExclusionReason`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::par::{self, Execution};

/// Honorifics accepted at the start of a turn marker.
pub const HONORIFICS: &[&str] = &["Mr.", "Mrs.", "Ms.", "Dr.", "Sir", "Baroness"];

/// Marker used by the presiding member.
pub const PRESIDENT_MARKER: &str = "The President";

/// Affiliation recorded on presidential turns when no attendee entry names one.
pub const PRESIDENCY_AFFILIATION: &str = "Presidency";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("no speaker turns found in protocol body")]
    NoTurnsFound,
    #[error("attendee block is never terminated by `#body:`")]
    UnterminatedHeader,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("agenda `{0}` is not in the accept-list")]
    AgendaMismatch(String),
    #[error("protocol date {date} lies outside the corpus window {from}..={to}")]
    DateOutOfWindow {
        date: NaiveDate,
        from: NaiveDate,
        to: NaiveDate,
    },
    #[error("turn {ordinal} (`{marker}`) carries no text")]
    EmptyTurn { ordinal: usize, marker: String },
    #[error("protocol id `{0}` appears in more than one file")]
    DuplicateProtocol(String),
    #[error("overrides line {line}: {message}")]
    MalformedOverrides { line: usize, message: String },
    #[error("no protocol could be parsed ({failures} file(s) failed)")]
    NoProtocols { failures: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("corpus record {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attendee {
    pub speaker_name: String,
    pub affiliation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub id: String,
    pub date: NaiveDate,
    pub agenda_label: String,
    pub attendees: Vec<Attendee>,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionReason {
    President,
    Unresolved,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::President => "president",
            ExclusionReason::Unresolved => "unresolved",
        })
    }
}

/// One attributed intervention.
///
/// `excluded` is `None` for speeches that enter the analysis and carries the
/// single reason otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Speech {
    pub id: String,
    pub protocol_id: String,
    pub date: NaiveDate,
    pub year: i32,
    pub speaker_name: String,
    pub affiliation: String,
    pub text: String,
    pub excluded: Option<ExclusionReason>,
}

impl Speech {
    pub fn is_included(&self) -> bool {
        self.excluded.is_none()
    }
}

/// Manually supplied affiliations for speakers missing from attendee lists.
///
/// Keys are stored normalized (see [`normalize_name`]).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AffiliationOverrides {
    map: BTreeMap<String, String>,
}

impl AffiliationOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry. Re-adding a name with a different affiliation is an error.
    pub fn insert(&mut self, speaker_name: &str, affiliation: &str) -> Result<()> {
        let key = normalize_name(speaker_name);
        let affiliation = affiliation.trim();
        if key.is_empty() || affiliation.is_empty() {
            return Err(CorpusError::MalformedOverrides {
                line: 0,
                message: format!("empty name or affiliation in `{speaker_name} | {affiliation}`"),
            });
        }
        match self.map.get(&key) {
            Some(existing) if existing != affiliation => Err(CorpusError::MalformedOverrides {
                line: 0,
                message: format!("`{key}` mapped to both `{existing}` and `{affiliation}`"),
            }),
            _ => {
                self.map.insert(key, affiliation.to_string());
                Ok(())
            }
        }
    }

    pub fn get(&self, speaker_name: &str) -> Option<&str> {
        self.map
            .get(&normalize_name(speaker_name))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Parses `Name | Affiliation` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, aff) = split_pipe(line).ok_or_else(|| CorpusError::MalformedOverrides {
                line: i + 1,
                message: format!("expected `Name | Affiliation`, got `{line}`"),
            })?;
            out.insert(name, aff).map_err(|e| match e {
                CorpusError::MalformedOverrides { message, .. } => {
                    CorpusError::MalformedOverrides {
                        line: i + 1,
                        message,
                    }
                }
                other => other,
            })?;
        }
        Ok(out)
    }
}

/// Which agendas are accepted and which dates a protocol may carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub agenda_accept: Vec<String>,
    pub window: Option<(NaiveDate, NaiveDate)>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            agenda_accept: vec!["Situation in Afghanistan".into(), "Afghanistan".into()],
            window: None,
        }
    }
}

impl CorpusConfig {
    fn accepts_agenda(&self, label: &str) -> bool {
        let label = label.trim();
        self.agenda_accept
            .iter()
            .any(|a| a.trim().eq_ignore_ascii_case(label))
    }
}

/// One speaker turn as it appears in the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    /// The marker exactly as written, including the trailing colon.
    pub marker: String,
    /// Everything after the marker up to the next marker or end of body.
    pub text: String,
}

/// Result of splitting a body into turns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    /// Text before the first marker (procedural lines such as call to order).
    pub preamble: String,
    pub turns: Vec<Turn>,
}

impl Segmentation {
    /// Reassembles the original body.
    pub fn reconstruct(&self) -> String {
        let mut s = self.preamble.clone();
        for t in &self.turns {
            s.push_str(&t.marker);
            s.push_str(&t.text);
        }
        s
    }
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let hon = HONORIFICS
            .iter()
            .map(|h| regex::escape(h))
            .collect::<Vec<_>>()
            .join("|");
        Regex::new(&format!(
            r"(?m)^(?:The President|(?:{hon}) [\p{{L}}][\p{{L}}\p{{M}} .'\-]*?(?: \([^\n()]+\))?):"
        ))
        .expect("marker regex")
    })
}

/// Splits a protocol body at column-0 speaker-turn markers.
pub fn segment_speeches(body: &str) -> Result<Segmentation> {
    let re = marker_regex();
    let starts: Vec<(usize, usize)> = re.find_iter(body).map(|m| (m.start(), m.end())).collect();
    if starts.is_empty() {
        return Err(CorpusError::NoTurnsFound);
    }
    let preamble = body[..starts[0].0].to_string();
    let turns = starts
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| {
            let next = starts.get(i + 1).map_or(body.len(), |n| n.0);
            Turn {
                marker: body[s..e].to_string(),
                text: body[e..next].to_string(),
            }
        })
        .collect();
    Ok(Segmentation { preamble, turns })
}

/// Speaker information carried by a turn marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerSpeaker {
    /// Speaker as written, honorific included, e.g. `Mr. Khalid`.
    pub name: String,
    pub inline_affiliation: Option<String>,
    pub is_president: bool,
}

pub fn parse_marker(marker: &str) -> MarkerSpeaker {
    let inner = marker.trim_end_matches(':').trim();
    if inner == PRESIDENT_MARKER {
        return MarkerSpeaker {
            name: PRESIDENT_MARKER.to_string(),
            inline_affiliation: None,
            is_president: true,
        };
    }
    match (inner.rfind(" ("), inner.ends_with(')')) {
        (Some(p), true) => MarkerSpeaker {
            name: inner[..p].trim().to_string(),
            inline_affiliation: Some(inner[p + 2..inner.len() - 1].trim().to_string()),
            is_president: false,
        },
        _ => MarkerSpeaker {
            name: inner.to_string(),
            inline_affiliation: None,
            is_president: false,
        },
    }
}

fn strip_honorific(name: &str) -> &str {
    let trimmed = name.trim();
    for h in HONORIFICS.iter().chain(["The"].iter()) {
        if let Some(rest) = trimmed.strip_prefix(h) {
            if rest.starts_with(char::is_whitespace) {
                return rest.trim_start();
            }
        }
    }
    trimmed
}

fn fold(s: &str) -> String {
    s.nfd()
        .filter(|c| !is_combining_mark(*c))
        .collect::<String>()
        .to_lowercase()
}

/// Matching key for a speaker: honorific stripped, diacritics removed,
/// case-folded, last token only.
pub fn normalize_name(name: &str) -> String {
    fold(strip_honorific(name))
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn full_key(name: &str) -> String {
    fold(strip_honorific(name))
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Attendee list first, then the override map. `None` means unresolved.
pub fn resolve_affiliation(
    speaker_name: &str,
    attendees: &[Attendee],
    overrides: &AffiliationOverrides,
) -> Option<String> {
    let key = normalize_name(speaker_name);
    if key.is_empty() {
        return None;
    }
    let hits: Vec<&Attendee> = attendees
        .iter()
        .filter(|a| normalize_name(&a.speaker_name) == key)
        .collect();
    let from_attendees = match hits.as_slice() {
        [] => None,
        [only] => Some(only.affiliation.clone()),
        many => {
            // shared surname: require the full name to disambiguate
            let full = full_key(speaker_name);
            many.iter()
                .find(|a| full_key(&a.speaker_name) == full)
                .map(|a| a.affiliation.clone())
        }
    };
    from_attendees.or_else(|| overrides.get(speaker_name).map(str::to_string))
}

fn split_pipe(line: &str) -> Option<(&str, &str)> {
    let (a, b) = line.split_once('|')?;
    let (a, b) = (a.trim(), b.trim());
    (!a.is_empty() && !b.is_empty()).then_some((a, b))
}

fn parse_header(raw: &str) -> Result<(Protocol, &str)> {
    let mut id = None;
    let mut date = None;
    let mut agenda = None;
    let mut attendees = Vec::new();
    let mut in_attendees = false;
    let mut seen = HashSet::new();

    let mut rest = raw;
    loop {
        let Some((line, tail)) = next_line(rest) else {
            return Err(CorpusError::UnterminatedHeader);
        };
        rest = tail;
        let line = line.trim_end();
        if line.trim() == "#body:" {
            break;
        }
        if let Some(v) = line.strip_prefix("#id:") {
            id = Some(v.trim().to_string());
        } else if let Some(v) = line.strip_prefix("#date:") {
            let v = v.trim();
            date = Some(
                NaiveDate::parse_from_str(v, "%Y-%m-%d")
                    .map_err(|e| CorpusError::MalformedHeader(format!("bad date `{v}`: {e}")))?,
            );
        } else if let Some(v) = line.strip_prefix("#agenda:") {
            agenda = Some(v.trim().to_string());
        } else if line.trim() == "#attendees:" {
            in_attendees = true;
        } else if line.trim().is_empty() {
            continue;
        } else if in_attendees {
            let (name, aff) = split_pipe(line).ok_or_else(|| {
                CorpusError::MalformedHeader(format!(
                    "attendee line `{line}` is not `Name | Affiliation`"
                ))
            })?;
            if !seen.insert(name.to_string()) {
                return Err(CorpusError::MalformedHeader(format!(
                    "duplicate attendee `{name}`"
                )));
            }
            attendees.push(Attendee {
                speaker_name: name.to_string(),
                affiliation: aff.to_string(),
            });
        } else {
            return Err(CorpusError::MalformedHeader(format!(
                "unexpected header line `{line}`"
            )));
        }
    }

    let id = id
        .filter(|s| !s.is_empty())
        .ok_or_else(|| CorpusError::MalformedHeader("missing `#id:`".into()))?;
    let date = date.ok_or_else(|| CorpusError::MalformedHeader("missing `#date:`".into()))?;
    let agenda_label =
        agenda.ok_or_else(|| CorpusError::MalformedHeader("missing `#agenda:`".into()))?;
    Ok((
        Protocol {
            id,
            date,
            agenda_label,
            attendees,
            body: String::new(),
        },
        rest,
    ))
}

fn next_line(s: &str) -> Option<(&str, &str)> {
    if s.is_empty() {
        return None;
    }
    Some(match s.find('\n') {
        Some(i) => (&s[..i], &s[i + 1..]),
        None => (s, ""),
    })
}

fn normalize_newlines(raw: &str) -> String {
    raw.trim_start_matches('\u{feff}').replace("\r\n", "\n")
}

/// Parses one protocol file into its header and attributed speeches.
pub fn parse_protocol(
    raw: &str,
    overrides: &AffiliationOverrides,
    config: &CorpusConfig,
) -> Result<(Protocol, Vec<Speech>)> {
    let raw = normalize_newlines(raw);
    let (mut protocol, body) = parse_header(&raw)?;
    if !config.accepts_agenda(&protocol.agenda_label) {
        return Err(CorpusError::AgendaMismatch(protocol.agenda_label));
    }
    if let Some((from, to)) = config.window {
        if protocol.date < from || protocol.date > to {
            return Err(CorpusError::DateOutOfWindow {
                date: protocol.date,
                from,
                to,
            });
        }
    }
    protocol.body = body.to_string();
    let seg = segment_speeches(&protocol.body)?;

    let mut speeches = Vec::with_capacity(seg.turns.len());
    for (i, turn) in seg.turns.iter().enumerate() {
        let ordinal = i + 1;
        let text = turn.text.trim();
        if text.is_empty() {
            return Err(CorpusError::EmptyTurn {
                ordinal,
                marker: turn.marker.clone(),
            });
        }
        let speaker = parse_marker(&turn.marker);
        let (affiliation, excluded) = if speaker.is_president {
            let aff = resolve_affiliation(&speaker.name, &protocol.attendees, overrides)
                .unwrap_or_else(|| PRESIDENCY_AFFILIATION.to_string());
            (aff, Some(ExclusionReason::President))
        } else {
            let resolved = resolve_affiliation(
                &speaker.name,
                &protocol.attendees,
                &AffiliationOverrides::new(),
            )
            .or_else(|| speaker.inline_affiliation.clone())
            .or_else(|| overrides.get(&speaker.name).map(str::to_string));
            match resolved {
                Some(a) => (a, None),
                None => (String::new(), Some(ExclusionReason::Unresolved)),
            }
        };
        speeches.push(Speech {
            id: speech_id(&protocol.id, ordinal),
            protocol_id: protocol.id.clone(),
            date: protocol.date,
            year: protocol.date.year(),
            speaker_name: speaker.name,
            affiliation,
            text: text.to_string(),
            excluded,
        });
    }
    Ok((protocol, speeches))
}

pub fn speech_id(protocol_id: &str, ordinal: usize) -> String {
    format!("{protocol_id}/{ordinal:03}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub protocols: Vec<Protocol>,
    pub speeches: Vec<Speech>,
    pub affiliations: BTreeSet<String>,
}

impl Corpus {
    /// Assembles a corpus, sorting protocols by (date, id) and speeches by
    /// (date, protocol id, turn ordinal).
    pub fn new(mut protocols: Vec<Protocol>, mut speeches: Vec<Speech>) -> Self {
        protocols.sort_by(|a, b| (a.date, &a.id).cmp(&(b.date, &b.id)));
        speeches
            .sort_by(|a, b| (a.date, &a.protocol_id, &a.id).cmp(&(b.date, &b.protocol_id, &b.id)));
        let affiliations = speeches
            .iter()
            .filter(|s| s.is_included())
            .map(|s| s.affiliation.clone())
            .collect();
        Self {
            protocols,
            speeches,
            affiliations,
        }
    }

    pub fn included(&self) -> impl Iterator<Item = &Speech> {
        self.speeches.iter().filter(|s| s.is_included())
    }

    pub fn speech(&self, id: &str) -> Option<&Speech> {
        self.speeches.iter().find(|s| s.id == id)
    }

    pub fn stats(&self) -> CorpusStats {
        let mut stats = CorpusStats {
            protocols: self.protocols.len(),
            speeches_total: self.speeches.len(),
            affiliation_count: self.affiliations.len(),
            ..Default::default()
        };
        for s in &self.speeches {
            match s.excluded {
                None => {
                    stats.speeches_included += 1;
                    *stats.speeches_per_year.entry(s.year).or_default() += 1;
                    *stats
                        .speeches_per_affiliation_per_year
                        .entry(s.affiliation.clone())
                        .or_default()
                        .entry(s.year)
                        .or_default() += 1;
                }
                Some(reason) => {
                    *stats.excluded.entry(reason.to_string()).or_default() += 1;
                    *stats.excluded_per_year.entry(s.year).or_default() += 1;
                }
            }
        }
        stats
    }

    /// Writes one JSON record per speech.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.speeches {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Speech>> {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CorpusError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let s: Speech =
                serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            out.push(s);
        }
        Ok(out)
    }
}

/// Distribution report emitted alongside the corpus.
///
/// Per-year and per-affiliation counts cover included speeches only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub protocols: usize,
    pub speeches_total: usize,
    pub speeches_included: usize,
    pub excluded: BTreeMap<String, usize>,
    pub speeches_per_year: BTreeMap<i32, usize>,
    pub excluded_per_year: BTreeMap<i32, usize>,
    pub speeches_per_affiliation_per_year: BTreeMap<String, BTreeMap<i32, usize>>,
    pub affiliation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct CorpusBuild {
    pub corpus: Corpus,
    pub stats: CorpusStats,
    pub failures: Vec<FileFailure>,
}

/// Reads and parses every file; failures are collected, not fatal, unless
/// nothing parses.
pub fn build_corpus(
    files: &[PathBuf],
    overrides: &AffiliationOverrides,
    config: &CorpusConfig,
    exec: Execution,
) -> Result<CorpusBuild> {
    let mut files = files.to_vec();
    files.sort();
    let parsed = par::map(&files, exec, |path| {
        read_to_string(path).and_then(|raw| parse_protocol(&raw, overrides, config))
    });

    let mut protocols = Vec::new();
    let mut speeches = Vec::new();
    let mut failures = Vec::new();
    let mut ids = HashSet::new();
    for (path, res) in files.iter().zip(parsed) {
        let res = res.and_then(|(p, s)| {
            if ids.insert(p.id.clone()) {
                Ok((p, s))
            } else {
                Err(CorpusError::DuplicateProtocol(p.id))
            }
        });
        match res {
            Ok((p, s)) => {
                protocols.push(p);
                speeches.extend(s);
            }
            Err(e) => failures.push(FileFailure {
                path: path.display().to_string(),
                error: e.to_string(),
            }),
        }
    }
    if protocols.is_empty() {
        return Err(CorpusError::NoProtocols {
            failures: failures.len(),
        });
    }
    let corpus = Corpus::new(protocols, speeches);
    let stats = corpus.stats();
    Ok(CorpusBuild {
        corpus,
        stats,
        failures,
    })
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
