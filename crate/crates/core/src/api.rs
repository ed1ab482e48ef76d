//! Read-only JSON API over a loaded bundle, independent of any HTTP stack.
//!
//! | path | answer |
//! |------|--------|
//! | `/api/meta` | grid values, corpus stats, provenance |
//! | `/api/landscape` | the landscape export |
//! | `/api/topics` | topic keywords |
//! | `/api/topics/{t}/speeches?threshold=` | speeches with `θ[t] > threshold` (default 0.20) |
//! | `/api/speech/{id}` | one speech; the id may contain `/` |
//! | `/api/network?level=&resolution=&mode=` | nearest precomputed graph |
//!
//! Unknown ids give 404, malformed queries 400. A bundle that failed
//! validation answers 409 on every path.

use std::collections::BTreeMap;
use std::path::Path;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::corpus::{CorpusStats, Speech};
use crate::landscape::{ProminentSpeech, PROMINENCE_THRESHOLD};
use crate::netgraph::{GraphBundle, GraphMode};
use crate::topicmodel::{topic_label, TopicWords};
use crate::SCHEMA_VERSION;

/// Level served when the query names none.
pub const DEFAULT_LEVEL: f64 = 0.25;
/// Resolution served when the query names none.
pub const DEFAULT_RESOLUTION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorResponse {
    pub schema_version: u32,
    pub status: u16,
    pub error: String,
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaResponse {
    pub schema_version: u32,
    pub k: usize,
    pub years: Vec<i32>,
    pub levels: Vec<f64>,
    pub resolutions: Vec<f64>,
    pub modes: Vec<GraphMode>,
    pub default_threshold: f64,
    pub corpus_stats: CorpusStats,
    pub provenance: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsResponse {
    pub schema_version: u32,
    pub topics: Vec<TopicWords>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechesResponse {
    pub schema_version: u32,
    pub topic: usize,
    pub label: String,
    pub threshold: f64,
    pub speeches: Vec<ProminentSpeech>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechResponse {
    pub schema_version: u32,
    pub speech: Speech,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRequest {
    pub level: Option<f64>,
    pub resolution: Option<f64>,
    pub mode: GraphMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkServed {
    pub level: f64,
    pub resolution: f64,
    pub mode: GraphMode,
    /// True when the served cell equals the requested one, defaults filled in.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkResponse {
    pub schema_version: u32,
    pub requested: NetworkRequest,
    pub served: NetworkServed,
    pub graph: GraphBundle,
}

enum State {
    Ready(Box<Bundle>),
    Invalid(Vec<String>),
}

/// Immutable request handler; safe to share across threads.
pub struct Api {
    state: State,
}

fn json<T: Serialize>(status: u16, v: &T) -> ApiResponse {
    ApiResponse {
        status,
        body: serde_json::to_string(v).expect("response serializes"),
    }
}

fn error(status: u16, msg: impl Into<String>, problems: Vec<String>) -> ApiResponse {
    json(
        status,
        &ErrorResponse {
            schema_version: SCHEMA_VERSION,
            status,
            error: msg.into(),
            problems,
        },
    )
}

fn bad_request(msg: impl Into<String>) -> ApiResponse {
    error(400, msg, Vec::new())
}

fn not_found(msg: impl Into<String>) -> ApiResponse {
    error(404, msg, Vec::new())
}

type Query = BTreeMap<String, String>;

fn parse_query(q: Option<&str>) -> Query {
    q.map(|q| form_urlencoded::parse(q.as_bytes()).into_owned().collect())
        .unwrap_or_default()
}

fn parse_f64(q: &Query, key: &str) -> Result<Option<f64>, ApiResponse> {
    match q.get(key) {
        None => Ok(None),
        Some(v) => match v.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(bad_request(format!(
                "`{key}` must be a finite number, got `{v}`"
            ))),
        },
    }
}

const TIE_EPS: f64 = 1e-12;

/// Grid value closest to `want` under `dist`; ties (within rounding) go to
/// the smaller value.
fn nearest(grid: &[f64], want: f64, dist: impl Fn(f64, f64) -> f64) -> Option<f64> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for g in sorted {
        let d = dist(g, want);
        if best.is_none_or(|(_, bd)| d < bd - TIE_EPS) {
            best = Some((g, d));
        }
    }
    best.map(|(g, _)| g)
}

impl Api {
    pub fn new(bundle: Bundle) -> Self {
        let problems = bundle.validate();
        let state = if problems.is_empty() {
            State::Ready(Box::new(bundle))
        } else {
            State::Invalid(problems)
        };
        Self { state }
    }

    /// Loads `dir/bundle.json`; read or parse failures yield an API that
    /// answers 409.
    pub fn load(dir: &Path) -> Self {
        match Bundle::read(dir) {
            Ok(b) => Self::new(b),
            Err(e) => Self {
                state: State::Invalid(vec![e.to_string()]),
            },
        }
    }

    pub fn problems(&self) -> &[String] {
        match &self.state {
            State::Ready(_) => &[],
            State::Invalid(p) => p,
        }
    }

    pub fn bundle(&self) -> Option<&Bundle> {
        match &self.state {
            State::Ready(b) => Some(b),
            State::Invalid(_) => None,
        }
    }

    /// `path` is the raw (possibly percent-encoded) request path, `query`
    /// the raw query string without `?`.
    pub fn handle(&self, path: &str, query: Option<&str>) -> ApiResponse {
        let b = match &self.state {
            State::Ready(b) => b,
            State::Invalid(p) => return error(409, "bundle failed validation", p.clone()),
        };
        let q = parse_query(query);
        let rest = match path.strip_prefix("/api/") {
            Some(r) => r,
            None => return not_found(format!("no route for {path}")),
        };
        let segs: Vec<&str> = rest.split('/').collect();
        match segs.as_slice() {
            ["meta"] => self.meta(b),
            ["landscape"] => json(200, &b.landscape),
            ["topics"] => json(
                200,
                &TopicsResponse {
                    schema_version: SCHEMA_VERSION,
                    topics: b.topics.clone(),
                },
            ),
            ["topics", t, "speeches"] => self.speeches(b, t, &q),
            ["speech", ..] if rest.len() > "speech/".len() => {
                let raw = &rest["speech/".len()..];
                match percent_decode_str(raw).decode_utf8() {
                    Ok(id) => match b.speeches.get(id.as_ref()) {
                        Some(s) => json(
                            200,
                            &SpeechResponse {
                                schema_version: SCHEMA_VERSION,
                                speech: s.clone(),
                            },
                        ),
                        None => not_found(format!("unknown speech `{id}`")),
                    },
                    Err(_) => bad_request("speech id is not valid UTF-8"),
                }
            }
            ["network"] => self.network(b, &q),
            _ => not_found(format!("no route for {path}")),
        }
    }

    fn meta(&self, b: &Bundle) -> ApiResponse {
        let mut modes: Vec<GraphMode> = Vec::new();
        for n in &b.networks {
            if !modes.contains(&n.mode) {
                modes.push(n.mode);
            }
        }
        json(
            200,
            &MetaResponse {
                schema_version: SCHEMA_VERSION,
                k: b.k(),
                years: b.landscape.years.clone(),
                levels: b.levels(),
                resolutions: b.resolutions(),
                modes,
                default_threshold: PROMINENCE_THRESHOLD,
                corpus_stats: b.corpus_stats.clone(),
                provenance: b.provenance.clone(),
            },
        )
    }

    fn speeches(&self, b: &Bundle, t: &str, q: &Query) -> ApiResponse {
        let topic: usize = match t.parse() {
            Ok(t) => t,
            Err(_) => {
                return bad_request(format!(
                    "topic id must be a non-negative integer, got `{t}`"
                ))
            }
        };
        let threshold = match parse_f64(q, "threshold") {
            Ok(x) => x.unwrap_or(PROMINENCE_THRESHOLD),
            Err(r) => return r,
        };
        if !(0.0..=1.0).contains(&threshold) {
            return bad_request(format!("threshold {threshold} outside [0, 1]"));
        }
        match b.prominent(topic, threshold) {
            Some(speeches) => json(
                200,
                &SpeechesResponse {
                    schema_version: SCHEMA_VERSION,
                    topic,
                    label: topic_label(topic),
                    threshold,
                    speeches,
                },
            ),
            None => not_found(format!("unknown topic {topic} (k = {})", b.k())),
        }
    }

    fn network(&self, b: &Bundle, q: &Query) -> ApiResponse {
        let (level, resolution) = match (parse_f64(q, "level"), parse_f64(q, "resolution")) {
            (Ok(l), Ok(r)) => (l, r),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        if level.is_some_and(|l| !(l > 0.0 && l <= 1.0)) {
            return bad_request("level must lie in (0, 1]");
        }
        if resolution.is_some_and(|r| r <= 0.0) {
            return bad_request("resolution must be positive");
        }
        let mode = match q.get("mode").map(String::as_str) {
            None | Some("twomode") => GraphMode::TwoMode,
            Some("onemode") => GraphMode::OneMode,
            Some(m) => {
                return bad_request(format!("mode must be `twomode` or `onemode`, got `{m}`"))
            }
        };
        let levels = b.levels();
        let resolutions = b.resolutions();
        let served_level = nearest(&levels, level.unwrap_or(DEFAULT_LEVEL), |a, w| {
            (a - w).abs()
        });
        // resolutions act multiplicatively, so compare on a log scale
        let served_res = nearest(
            &resolutions,
            resolution.unwrap_or(DEFAULT_RESOLUTION),
            |a, w| (a.ln() - w.ln()).abs(),
        );
        let entry = served_level
            .zip(served_res)
            .and_then(|(l, r)| b.network(mode, l, r));
        match entry {
            Some(e) => json(
                200,
                &NetworkResponse {
                    schema_version: SCHEMA_VERSION,
                    requested: NetworkRequest {
                        level,
                        resolution,
                        mode,
                    },
                    served: NetworkServed {
                        level: e.level,
                        resolution: e.resolution,
                        mode,
                        exact: level.unwrap_or(DEFAULT_LEVEL) == e.level
                            && resolution.unwrap_or(DEFAULT_RESOLUTION) == e.resolution,
                    },
                    graph: e.graph.clone(),
                },
            ),
            None => not_found(format!("no precomputed {mode:?} network")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_prefers_smaller_on_ties() {
        let g = [0.15, 0.25];
        assert_eq!(nearest(&g, 0.2, |a, w| (a - w).abs()), Some(0.15));
        assert_eq!(nearest(&g, 0.9, |a, w| (a - w).abs()), Some(0.25));
        assert_eq!(nearest(&[], 0.9, |a, w| (a - w).abs()), None);
    }

    #[test]
    fn log_scale_snapping() {
        let g = [0.33, 1.0];
        let d = |a: f64, w: f64| (a.ln() - w.ln()).abs();
        assert_eq!(nearest(&g, 0.6, d), Some(1.0));
        assert_eq!(nearest(&g, 0.5, d), Some(0.33));
    }

    #[test]
    fn query_decoding() {
        let q = parse_query(Some("threshold=0.3&mode=one%6Dode"));
        assert_eq!(q["mode"], "onemode");
        assert_eq!(parse_f64(&q, "threshold").unwrap(), Some(0.3));
        let q = parse_query(Some("threshold=abc"));
        assert_eq!(parse_f64(&q, "threshold").unwrap_err().status, 400);
        let q = parse_query(Some("threshold=NaN"));
        assert_eq!(parse_f64(&q, "threshold").unwrap_err().status, 400);
    }
}
