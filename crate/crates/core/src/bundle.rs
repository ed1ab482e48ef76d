//! The self-contained artifact served to the explorer.
//!
//! `bundle.json` holds everything the service answers from: corpus
//! statistics, the landscape export, topic keywords, per-topic speech
//! rankings, the precomputed network grid and every speech text by id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusStats, Speech};
use crate::landscape::{prominent_speeches, LandscapeError, LandscapeExport, ProminentSpeech};
use crate::netgraph::{Category, GraphBundle, GraphMode};
use crate::topicmodel::{TopicModel, TopicWords};
use crate::SCHEMA_VERSION;

pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("bundle is not valid JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error("bundle failed validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

pub type Result<T, E = BundleError> = std::result::Result<T, E>;

/// One precomputed cell of the network grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub mode: GraphMode,
    pub level: f64,
    pub resolution: f64,
    pub graph: GraphBundle,
}

/// Ranked speeches for one topic. Scores are `θ[topic]`, descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicRanking {
    pub topic: usize,
    pub speeches: Vec<ProminentSpeech>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub schema_version: u32,
    /// Stage name to the provenance record that stage wrote.
    pub provenance: BTreeMap<String, serde_json::Value>,
    pub corpus_stats: CorpusStats,
    pub landscape: LandscapeExport,
    pub topics: Vec<TopicWords>,
    pub rankings: Vec<TopicRanking>,
    pub networks: Vec<NetworkEntry>,
    pub speeches: BTreeMap<String, Speech>,
}

impl Bundle {
    /// Rankings keep every document with a positive score so that any
    /// threshold query is a prefix of the stored list.
    pub fn assemble(
        corpus: &Corpus,
        model: &TopicModel,
        landscape: LandscapeExport,
        topics: Vec<TopicWords>,
        networks: Vec<NetworkEntry>,
        provenance: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self> {
        let rankings = (0..model.k())
            .map(|t| {
                Ok(TopicRanking {
                    topic: t,
                    speeches: prominent_speeches(model, corpus, t, 0.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            provenance,
            corpus_stats: corpus.stats(),
            landscape,
            topics,
            rankings,
            networks,
            speeches: corpus
                .speeches
                .iter()
                .map(|s| (s.id.clone(), s.clone()))
                .collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.topics.len()
    }

    /// Speeches of `topic` scoring strictly above `threshold`, in ranking
    /// order. `None` for an unknown topic.
    pub fn prominent(&self, topic: usize, threshold: f64) -> Option<Vec<ProminentSpeech>> {
        let r = self.rankings.get(topic)?;
        Some(
            r.speeches
                .iter()
                .filter(|s| s.score > threshold)
                .cloned()
                .collect(),
        )
    }

    pub fn levels(&self) -> Vec<f64> {
        sorted_unique(self.networks.iter().map(|n| n.level))
    }

    pub fn resolutions(&self) -> Vec<f64> {
        sorted_unique(self.networks.iter().map(|n| n.resolution))
    }

    pub fn network(&self, mode: GraphMode, level: f64, resolution: f64) -> Option<&NetworkEntry> {
        self.networks
            .iter()
            .find(|n| n.mode == mode && n.level == level && n.resolution == resolution)
    }

    /// Every internal-consistency problem found; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            p.push(format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let k = self.k();
        if k == 0 {
            p.push("no topics".into());
        }
        for (i, t) in self.topics.iter().enumerate() {
            if t.topic != i {
                p.push(format!("topic entry {i} carries id {}", t.topic));
            }
        }
        if self.landscape.topics.len() != k {
            p.push(format!(
                "landscape has {} topics, bundle {k}",
                self.landscape.topics.len()
            ));
        }
        if self.landscape.years.len() != self.landscape.shares.len()
            || self.landscape.years.len() != self.landscape.doc_counts.len()
        {
            p.push("landscape years, shares and doc_counts differ in length".into());
        }
        for (y, row) in self.landscape.years.iter().zip(&self.landscape.shares) {
            if row.len() != k {
                p.push(format!("share row {y} has {} entries", row.len()));
            }
        }

        if self.rankings.len() != k {
            p.push(format!("{} rankings for {k} topics", self.rankings.len()));
        }
        for (i, r) in self.rankings.iter().enumerate() {
            if r.topic != i {
                p.push(format!("ranking {i} carries topic {}", r.topic));
            }
            if r.speeches.windows(2).any(|w| w[0].score < w[1].score) {
                p.push(format!("ranking {i} is not sorted by score"));
            }
            for s in &r.speeches {
                match self.speeches.get(&s.id) {
                    None => p.push(format!("ranking {i} references unknown speech {}", s.id)),
                    Some(sp) if !sp.is_included() => {
                        p.push(format!("ranking {i} lists excluded speech {}", s.id))
                    }
                    _ => {}
                }
                if !(0.0..=1.0).contains(&s.score) {
                    p.push(format!("ranking {i}: score {} outside [0, 1]", s.score));
                }
            }
        }
        for (id, s) in &self.speeches {
            if *id != s.id {
                p.push(format!("speech key {id} holds id {}", s.id));
            }
        }

        let affiliations: BTreeSet<&str> = self
            .speeches
            .values()
            .filter(|s| s.is_included())
            .map(|s| s.affiliation.as_str())
            .collect();
        if self.networks.is_empty() {
            p.push("no networks".into());
        }
        let mut cells = BTreeSet::new();
        for n in &self.networks {
            let name = format!("{:?} level={} resolution={}", n.mode, n.level, n.resolution);
            if !cells.insert((n.mode as u8, n.level.to_bits(), n.resolution.to_bits())) {
                p.push(format!("{name}: duplicate grid cell"));
            }
            if n.graph.meta.level != n.level
                || n.graph.meta.resolution != n.resolution
                || n.graph.meta.mode != n.mode
            {
                p.push(format!("{name}: metadata disagrees with grid cell"));
            }
            let mut ids = BTreeSet::new();
            for node in &n.graph.nodes {
                ids.insert(node.id.as_str());
                match node.category {
                    Category::Country => {
                        if !affiliations.contains(node.label.as_str()) {
                            p.push(format!("{name}: unknown affiliation {}", node.label));
                        }
                    }
                    Category::Topic => {
                        let t = node
                            .id
                            .strip_prefix("topic:")
                            .and_then(|t| t.parse::<usize>().ok());
                        if !t.is_some_and(|t| t < k) {
                            p.push(format!("{name}: unknown topic node {}", node.id));
                        }
                    }
                }
                if node.community.is_none() {
                    p.push(format!("{name}: node {} has no community", node.id));
                }
            }
            for e in &n.graph.edges {
                if !ids.contains(e.source.as_str()) || !ids.contains(e.target.as_str()) {
                    p.push(format!(
                        "{name}: edge {} - {} has a dangling end",
                        e.source, e.target
                    ));
                }
            }
        }
        p
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| BundleError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(BUNDLE_FILE), self.to_json()).map_err(io)
    }

    /// Reads `dir/bundle.json` without validating it.
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(BUNDLE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| BundleError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| BundleError::Json(e.to_string()))
    }
}

fn sorted_unique(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
