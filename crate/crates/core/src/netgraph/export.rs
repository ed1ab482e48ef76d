use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    normalize, Category, CentralityNorm, CommunityAssignment, FilteredView, MaxScope, NetError,
    ProjectionWeight, Result, WeightedGraph,
};
use crate::topicmodel::topic_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// affiliations and topics
    TwoMode,
    /// affiliations linked through shared topics
    OneMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphNode {
    pub id: String,
    pub label: String,
    pub category: Category,
    pub strength: f64,
    pub centrality: f64,
    pub community: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub mode: GraphMode,
    pub level: f64,
    pub resolution: f64,
    /// Multiplier on the modularity null term, `1 / resolution`.
    pub gamma: f64,
    pub seed: u64,
    pub scope: MaxScope,
    pub centrality_norm: CentralityNorm,
    pub projection_weight: Option<ProjectionWeight>,
    pub isolates_removed: bool,
    pub modularity: f64,
}

/// Exportable graph with per-node attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphBundle {
    pub schema_version: u32,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub meta: GraphMeta,
}

pub fn country_node_id(name: &str) -> String {
    format!("country:{name}")
}

pub fn topic_node_id(topic: usize) -> String {
    format!("topic:{topic}")
}

impl GraphBundle {
    /// Two-mode bundle. `communities` indexes nodes as in
    /// [`FilteredView::to_weighted_graph`].
    pub fn from_view(
        view: &FilteredView,
        communities: &CommunityAssignment,
        norm: CentralityNorm,
        seed: u64,
    ) -> Self {
        let cs = view.country_strengths();
        let ts = view.topic_strengths();
        let (cc, tc) = (normalize(&cs, norm), normalize(&ts, norm));
        let nc = view.countries.len();
        let mut nodes: Vec<GraphNode> = view
            .countries
            .iter()
            .enumerate()
            .map(|(i, c)| GraphNode {
                id: country_node_id(c),
                label: c.clone(),
                category: Category::Country,
                strength: cs[i],
                centrality: cc[i],
                community: communities.membership.get(i).copied(),
            })
            .collect();
        nodes.extend(view.topics.iter().enumerate().map(|(i, &t)| GraphNode {
            id: topic_node_id(t),
            label: topic_label(t),
            category: Category::Topic,
            strength: ts[i],
            centrality: tc[i],
            community: communities.membership.get(nc + i).copied(),
        }));
        let edges = view
            .edges
            .iter()
            .map(|e| GraphEdge {
                source: country_node_id(&view.countries[e.country]),
                target: topic_node_id(e.topic),
                weight: e.weight,
            })
            .collect();
        Self {
            schema_version: crate::SCHEMA_VERSION,
            nodes,
            edges,
            meta: GraphMeta {
                mode: GraphMode::TwoMode,
                level: view.level,
                resolution: communities.resolution,
                gamma: 1.0 / communities.resolution,
                seed,
                scope: view.scope,
                centrality_norm: norm,
                projection_weight: None,
                isolates_removed: view.isolates_removed,
                modularity: communities.modularity,
            },
        }
    }

    /// One-mode bundle over a projection of `view`.
    pub fn from_projection(
        view: &FilteredView,
        projection: &WeightedGraph,
        weight: ProjectionWeight,
        communities: &CommunityAssignment,
        norm: CentralityNorm,
        seed: u64,
    ) -> Self {
        let s = projection.strengths();
        let c = normalize(&s, norm);
        let nodes = projection
            .labels
            .iter()
            .enumerate()
            .map(|(i, name)| GraphNode {
                id: country_node_id(name),
                label: name.clone(),
                category: Category::Country,
                strength: s[i],
                centrality: c[i],
                community: communities.membership.get(i).copied(),
            })
            .collect();
        let edges = projection
            .edges
            .iter()
            .map(|&(a, b, w)| GraphEdge {
                source: country_node_id(&projection.labels[a]),
                target: country_node_id(&projection.labels[b]),
                weight: w,
            })
            .collect();
        Self {
            schema_version: crate::SCHEMA_VERSION,
            nodes,
            edges,
            meta: GraphMeta {
                mode: GraphMode::OneMode,
                level: view.level,
                resolution: communities.resolution,
                gamma: 1.0 / communities.resolution,
                seed,
                scope: view.scope,
                centrality_norm: norm,
                projection_weight: Some(weight),
                isolates_removed: view.isolates_removed,
                modularity: communities.modularity,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_gexf(&self) -> String {
        let mut x = String::new();
        x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        x.push_str("<gexf xmlns=\"http://www.gexf.net/1.2draft\" version=\"1.2\">\n");
        let _ = writeln!(
            x,
            "  <meta>\n    <creator>discourse</creator>\n    <description>{} level={} resolution={} gamma={} seed={}</description>\n  </meta>",
            match self.meta.mode {
                GraphMode::TwoMode => "two-mode",
                GraphMode::OneMode => "one-mode",
            },
            self.meta.level,
            self.meta.resolution,
            self.meta.gamma,
            self.meta.seed
        );
        x.push_str("  <graph mode=\"static\" defaultedgetype=\"undirected\">\n");
        x.push_str("    <attributes class=\"node\">\n");
        x.push_str("      <attribute id=\"category\" title=\"category\" type=\"string\"/>\n");
        x.push_str("      <attribute id=\"strength\" title=\"strength\" type=\"double\"/>\n");
        x.push_str("      <attribute id=\"centrality\" title=\"centrality\" type=\"double\"/>\n");
        x.push_str("      <attribute id=\"community\" title=\"community\" type=\"integer\"/>\n");
        x.push_str("    </attributes>\n    <nodes>\n");
        for n in &self.nodes {
            let _ = writeln!(
                x,
                "      <node id=\"{}\" label=\"{}\">",
                esc(&n.id),
                esc(&n.label)
            );
            x.push_str("        <attvalues>\n");
            let cat = match n.category {
                Category::Country => "country",
                Category::Topic => "topic",
            };
            let _ = writeln!(x, "          <attvalue for=\"category\" value=\"{cat}\"/>");
            let _ = writeln!(
                x,
                "          <attvalue for=\"strength\" value=\"{:?}\"/>",
                n.strength
            );
            let _ = writeln!(
                x,
                "          <attvalue for=\"centrality\" value=\"{:?}\"/>",
                n.centrality
            );
            if let Some(c) = n.community {
                let _ = writeln!(x, "          <attvalue for=\"community\" value=\"{c}\"/>");
            }
            x.push_str("        </attvalues>\n      </node>\n");
        }
        x.push_str("    </nodes>\n    <edges>\n");
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                x,
                "      <edge id=\"{i}\" source=\"{}\" target=\"{}\" weight=\"{:?}\"/>",
                esc(&e.source),
                esc(&e.target),
                e.weight
            );
        }
        x.push_str("    </edges>\n  </graph>\n</gexf>\n");
        x
    }

    /// `source,target,weight`.
    pub fn to_csv(&self) -> String {
        let mut wr = csv::Writer::from_writer(Vec::new());
        let _ = wr.write_record(["source", "target", "weight"]);
        for e in &self.edges {
            let _ = wr.write_record([
                e.source.as_str(),
                e.target.as_str(),
                &format!("{:?}", e.weight),
            ]);
        }
        String::from_utf8(wr.into_inner().expect("in-memory writer")).expect("utf-8 csv")
    }
}

fn esc(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&apos;"),
            c => o.push(c),
        }
    }
    o
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Gexf,
    Json,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Gexf => "gexf",
            ExportFormat::Json => "json",
            ExportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gexf" => Ok(ExportFormat::Gexf),
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(NetError::UnsupportedFormat(other.to_string())),
        }
    }
}

pub fn export_graph(bundle: &GraphBundle, format: ExportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ExportFormat::Gexf => bundle.to_gexf(),
        ExportFormat::Json => bundle.to_json(),
        ExportFormat::Csv => bundle.to_csv(),
    };
    std::fs::write(path, body).map_err(|e| NetError::IoFailure(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::SpeakerTopicWeights;
    use crate::netgraph::{build_bipartite, filter_edges, louvain_communities, project_one_mode};

    fn fixture() -> FilteredView {
        let w = SpeakerTopicWeights {
            k: 2,
            weights: [
                ("A & B".to_string(), vec![2.0, 0.0]),
                ("C".to_string(), vec![1.0, 0.0]),
            ]
            .into_iter()
            .collect(),
            speech_counts: Default::default(),
        };
        filter_edges(&build_bipartite(&w), 0.25, true, MaxScope::PerTopic).unwrap()
    }

    #[test]
    fn gexf_has_every_node() {
        let v = fixture();
        let comm = louvain_communities(&v.to_weighted_graph(), 1.0, 1).unwrap();
        let b = GraphBundle::from_view(&v, &comm, CentralityNorm::Max, 1);
        let g = b.to_gexf();
        assert_eq!(g.matches("<node ").count(), 3);
        assert!(g.contains("label=\"A &amp; B\""));
        assert!(g.contains("weight=\"2.0\""));
        assert_eq!(g.matches("<edge ").count(), 2);
    }

    #[test]
    fn json_round_trip_and_communities() {
        let v = fixture();
        let p = project_one_mode(&v, ProjectionWeight::DotProduct);
        let comm = louvain_communities(&p, 1.0, 1).unwrap();
        let b = GraphBundle::from_projection(
            &v,
            &p,
            ProjectionWeight::DotProduct,
            &comm,
            CentralityNorm::Max,
            1,
        );
        let back = GraphBundle::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        let got: Vec<usize> = back.nodes.iter().map(|n| n.community.unwrap()).collect();
        assert_eq!(got, comm.membership);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("GEXF".parse::<ExportFormat>().unwrap(), ExportFormat::Gexf);
        assert!(matches!(
            "graphml".parse::<ExportFormat>(),
            Err(NetError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn export_reports_io_failure() {
        let v = fixture();
        let comm = louvain_communities(&v.to_weighted_graph(), 1.0, 1).unwrap();
        let b = GraphBundle::from_view(&v, &comm, CentralityNorm::Max, 1);
        let err =
            export_graph(&b, ExportFormat::Json, Path::new("/nonexistent/dir/x.json")).unwrap_err();
        assert!(matches!(err, NetError::IoFailure(_)));
    }
}
