//! Speaker-topic networks.
//!
//! Affiliations are tied to topics by their summed θ mass. The bipartite
//! graph is thinned per topic relative to the topic's strongest tie, node
//! sizes come from category-normalized strength, and affiliations are linked
//! to each other through the topics they share.

mod export;
mod louvain;

pub use export::{
    export_graph, ExportFormat, GraphBundle, GraphEdge, GraphMeta, GraphMode, GraphNode,
};
pub use louvain::{louvain_communities, modularity, CommunityAssignment};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::SpeakerTopicWeights;
use crate::topicmodel::topic_label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("filter level {0} outside (0, 1]")]
    InvalidLevel(f64),
    #[error("resolution {0} must be positive")]
    InvalidResolution(f64),
    #[error("node `{0}` is not in the view")]
    NodeNotInView(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("partition covers {got} of {expected} nodes")]
    PartitionIncomplete { got: usize, expected: usize },
    #[error("unsupported export format `{0}`")]
    UnsupportedFormat(String),
    #[error("i/o failure: {0}")]
    IoFailure(String),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Country,
    Topic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiEdge {
    pub country: usize,
    pub topic: usize,
    pub weight: f64,
}

/// Affiliations × topics with positive weights. `countries` is sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub countries: Vec<String>,
    pub k: usize,
    pub edges: Vec<BiEdge>,
}

/// One edge per positive weight entry.
pub fn build_bipartite(weights: &SpeakerTopicWeights) -> BipartiteGraph {
    let countries: Vec<String> = weights.weights.keys().cloned().collect();
    let edges = weights
        .weights
        .values()
        .enumerate()
        .flat_map(|(c, ws)| {
            ws.iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0 && w.is_finite())
                .map(move |(t, &w)| BiEdge {
                    country: c,
                    topic: t,
                    weight: w,
                })
        })
        .collect();
    BipartiteGraph {
        countries,
        k: weights.k,
        edges,
    }
}

/// Which maximum an edge is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxScope {
    /// Strongest tie of the same topic.
    #[default]
    PerTopic,
    /// Strongest tie in the whole graph.
    Global,
}

/// A thinned bipartite graph. Edge `country` indices point into
/// `countries`; `topic` is the model's topic id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredView {
    pub level: f64,
    pub scope: MaxScope,
    pub isolates_removed: bool,
    pub countries: Vec<String>,
    pub topics: Vec<usize>,
    pub edges: Vec<BiEdge>,
}

/// Keeps `(c, t)` iff `w(c, t) ≥ level · max`, then optionally drops
/// degree-0 nodes.
pub fn filter_edges(
    graph: &BipartiteGraph,
    level: f64,
    remove_isolates: bool,
    scope: MaxScope,
) -> Result<FilteredView> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(NetError::InvalidLevel(level));
    }
    let mut topic_max = vec![0.0f64; graph.k];
    for e in &graph.edges {
        topic_max[e.topic] = topic_max[e.topic].max(e.weight);
    }
    let global = topic_max.iter().copied().fold(0.0, f64::max);
    let kept: Vec<BiEdge> = graph
        .edges
        .iter()
        .filter(|e| {
            let max = match scope {
                MaxScope::PerTopic => topic_max[e.topic],
                MaxScope::Global => global,
            };
            e.weight >= level * max
        })
        .copied()
        .collect();

    let (country_ids, topics): (Vec<usize>, Vec<usize>) = if remove_isolates {
        let mut cs: Vec<usize> = kept.iter().map(|e| e.country).collect();
        let mut ts: Vec<usize> = kept.iter().map(|e| e.topic).collect();
        cs.sort_unstable();
        cs.dedup();
        ts.sort_unstable();
        ts.dedup();
        (cs, ts)
    } else {
        ((0..graph.countries.len()).collect(), (0..graph.k).collect())
    };
    let remap: BTreeMap<usize, usize> = country_ids
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i))
        .collect();
    Ok(FilteredView {
        level,
        scope,
        isolates_removed: remove_isolates,
        countries: country_ids
            .iter()
            .map(|&c| graph.countries[c].clone())
            .collect(),
        topics,
        edges: kept
            .into_iter()
            .map(|e| BiEdge {
                country: remap[&e.country],
                ..e
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef<'a> {
    Country(&'a str),
    Topic(usize),
}

/// Denominator of the normalized degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralityNorm {
    #[default]
    Max,
    Sum,
}

impl FilteredView {
    pub fn country_strengths(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.countries.len()];
        for e in &self.edges {
            s[e.country] += e.weight;
        }
        s
    }

    /// Strength per entry of `topics`.
    pub fn topic_strengths(&self) -> Vec<f64> {
        let pos: BTreeMap<usize, usize> = self
            .topics
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i))
            .collect();
        let mut s = vec![0.0; self.topics.len()];
        for e in &self.edges {
            s[pos[&e.topic]] += e.weight;
        }
        s
    }

    /// Nodes as a general weighted graph: countries first, then topics.
    pub fn to_weighted_graph(&self) -> WeightedGraph {
        let nc = self.countries.len();
        let pos: BTreeMap<usize, usize> = self
            .topics
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, i))
            .collect();
        let mut labels = self.countries.clone();
        labels.extend(self.topics.iter().map(|&t| topic_label(t)));
        WeightedGraph::new(
            labels,
            self.edges
                .iter()
                .map(|e| (e.country, nc + pos[&e.topic], e.weight))
                .collect(),
        )
    }
}

/// Strengths divided by the category maximum (or sum). Zero strength maps
/// to zero.
pub fn normalize(strengths: &[f64], norm: CentralityNorm) -> Vec<f64> {
    let denom = match norm {
        CentralityNorm::Max => strengths.iter().copied().fold(0.0, f64::max),
        CentralityNorm::Sum => strengths.iter().sum(),
    };
    strengths
        .iter()
        .map(|&s| if denom > 0.0 { s / denom } else { 0.0 })
        .collect()
}

/// Node strength relative to the other nodes of its category in the view.
pub fn weighted_normalized_degree(
    view: &FilteredView,
    node: NodeRef<'_>,
    norm: CentralityNorm,
) -> Result<f64> {
    match node {
        NodeRef::Country(name) => {
            let i = view
                .countries
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| NetError::NodeNotInView(name.to_string()))?;
            Ok(normalize(&view.country_strengths(), norm)[i])
        }
        NodeRef::Topic(t) => {
            let i = view
                .topics
                .iter()
                .position(|&x| x == t)
                .ok_or_else(|| NetError::NodeNotInView(topic_label(t)))?;
            Ok(normalize(&view.topic_strengths(), norm)[i])
        }
    }
}

/// Undirected weighted graph without self-loops; `edges` hold `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub labels: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Orients edges as `i < j`, merges parallel edges, drops self-loops and
    /// non-positive weights.
    pub fn new(labels: Vec<String>, edges: Vec<(usize, usize, f64)>) -> Self {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b || !(w > 0.0) {
                continue;
            }
            *merged.entry((a.min(b), a.max(b))).or_default() += w;
        }
        Self {
            labels,
            edges: merged.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn strengths(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n()];
        for &(a, b, w) in &self.edges {
            s[a] += w;
            s[b] += w;
        }
        s
    }
}

/// How shared topics combine into a country-country weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionWeight {
    /// `Σ_t w(c,t)·w(c',t)`
    #[default]
    DotProduct,
    /// number of shared topics
    CoOccurrence,
    /// `Σ_t min(w(c,t), w(c',t))`
    MinWeight,
}

/// Country-country graph over the view's countries.
pub type Projection = WeightedGraph;

pub fn project_one_mode(view: &FilteredView, weight: ProjectionWeight) -> Projection {
    let mut by_topic: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for e in &view.edges {
        by_topic
            .entry(e.topic)
            .or_default()
            .push((e.country, e.weight));
    }
    let mut pairs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for members in by_topic.values() {
        for (i, &(a, wa)) in members.iter().enumerate() {
            for &(b, wb) in &members[i + 1..] {
                let contrib = match weight {
                    ProjectionWeight::DotProduct => wa * wb,
                    ProjectionWeight::CoOccurrence => 1.0,
                    ProjectionWeight::MinWeight => wa.min(wb),
                };
                *pairs.entry((a.min(b), a.max(b))).or_default() += contrib;
            }
        }
    }
    WeightedGraph::new(
        view.countries.clone(),
        pairs.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
    )
}
