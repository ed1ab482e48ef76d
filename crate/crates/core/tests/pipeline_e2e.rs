//! Full pipeline on the fixture corpus, then every API route against the
//! module oracles.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use discourse_core::api::*;
use discourse_core::bundle::{Bundle, BUNDLE_FILE};
use discourse_core::landscape::{prominent_speeches, speaker_topic_weights, LandscapeExport};
use discourse_core::netgraph::*;
use discourse_core::par::Execution;
use discourse_core::pipeline::*;
use discourse_testkit::{overrides_file, protocols_dir};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::TempDir;

struct Run {
    dir: TempDir,
    bundle: Bundle,
}

fn config(out: &Path, exec: Execution) -> PipelineConfig {
    let mut c = PipelineConfig::new(protocols_dir(), out);
    c.overrides = Some(overrides_file());
    c.exec = exec;
    c.network.exec = exec;
    c
}

fn run(exec: Execution) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let bundle = config(dir.path(), exec).run().unwrap();
    Run { dir, bundle }
}

fn shared() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run(Execution::default()))
}

fn api() -> Api {
    Api::new(shared().bundle.clone())
}

/// Parses `body` as `T` and checks nothing was dropped on the way.
fn typed<T: DeserializeOwned + Serialize>(r: &ApiResponse) -> T {
    let v: T = serde_json::from_str(&r.body).unwrap_or_else(|e| panic!("{e}: {}", r.body));
    let back: serde_json::Value = serde_json::to_value(&v).unwrap();
    let orig: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(back, orig);
    v
}

fn get(api: &Api, path: &str, query: Option<&str>) -> ApiResponse {
    let r = api.handle(path, query);
    assert_eq!(api.handle(path, query), r, "responses must be stable");
    r
}

#[test]
fn bundles_are_byte_identical_across_runs() {
    let a = shared();
    let b = run(Execution::Sequential);
    let bytes = |r: &Run| std::fs::read(r.dir.path().join(BUNDLE_DIR).join(BUNDLE_FILE)).unwrap();
    assert_eq!(bytes(a), bytes(&b));
    assert_eq!(a.bundle, b.bundle);
}

#[test]
fn work_dir_layout() {
    let w = shared().dir.path();
    let stages = [
        ("ingest", CORPUS_DIR),
        ("prep", DTM_DIR),
        ("select-k", SELECTK_DIR),
        ("fit", MODEL_DIR),
        ("landscape", LANDSCAPE_DIR),
        ("network", NETWORK_DIR),
        ("bundle", BUNDLE_DIR),
    ];
    for (stage, dir) in stages {
        let p = w.join(dir).join(PROVENANCE_FILE);
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
        assert_eq!(v["stage"], stage);
        let names: Vec<&str> = v["inputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["name"].as_str().unwrap())
            .collect();
        assert!(
            names.iter().all(|n| !n.starts_with('/')),
            "{stage}: {names:?}"
        );
    }
    let index: NetworkIndex =
        serde_json::from_slice(&std::fs::read(w.join(NETWORK_DIR).join("index.json")).unwrap())
            .unwrap();
    assert_eq!(
        index.entries.len(),
        2 * DEFAULT_LEVELS.len() * DEFAULT_RESOLUTIONS.len()
    );
    for e in &index.entries {
        for ext in ["gexf", "json", "csv"] {
            assert!(w
                .join(NETWORK_DIR)
                .join(format!("{}.{ext}", e.stem))
                .is_file());
        }
    }
    let back = Bundle::read(&w.join(BUNDLE_DIR)).unwrap();
    assert_eq!(back, shared().bundle);
    assert!(back.validate().is_empty());
}

#[test]
fn meta_landscape_and_topics() {
    let api = api();
    let w = shared().dir.path();
    let b = &shared().bundle;
    let meta: MetaResponse = typed(&get(&api, "/api/meta", None));
    assert_eq!(meta.levels, DEFAULT_LEVELS);
    assert_eq!(meta.resolutions, DEFAULT_RESOLUTIONS);
    assert_eq!(meta.default_threshold, 0.20);
    assert_eq!(meta.corpus_stats.speeches_included, 44);
    let scan: serde_json::Value =
        serde_json::from_slice(&std::fs::read(w.join(SELECTK_DIR).join("scan.json")).unwrap())
            .unwrap();
    assert_eq!(meta.k as u64, scan["chosen_k"].as_u64().unwrap());

    let land: LandscapeExport = typed(&get(&api, "/api/landscape", None));
    assert_eq!(land, b.landscape);
    // argmax recount from the stored model
    let model = load_model(w).unwrap();
    let corpus = load_corpus(w).unwrap();
    for (y, row) in land.years.iter().zip(&land.shares) {
        let labels: Vec<usize> = model
            .doc_ids
            .iter()
            .zip(&model.theta)
            .filter(|(id, _)| corpus.speech(id).unwrap().year == *y)
            .map(|(_, r)| {
                let m = r.iter().cloned().fold(f64::MIN, f64::max);
                r.iter().position(|&x| x == m).unwrap()
            })
            .collect();
        let want: Vec<f64> = (0..model.k())
            .map(|t| labels.iter().filter(|&&l| l == t).count() as f64 / labels.len() as f64)
            .collect();
        assert_eq!(row, &want, "year {y}");
    }

    let topics: TopicsResponse = typed(&get(&api, "/api/topics", None));
    assert_eq!(topics.topics.len(), meta.k);
    assert_eq!(
        topics.topics,
        discourse_core::topicmodel::topic_keywords(&model, 25)
    );
}

#[test]
fn topic_speeches_follow_prominence() {
    let api = api();
    let w = shared().dir.path();
    let model = load_model(w).unwrap();
    let corpus = load_corpus(w).unwrap();
    for t in 0..model.k() {
        let r: SpeechesResponse = typed(&get(&api, &format!("/api/topics/{t}/speeches"), None));
        assert_eq!(r.threshold, 0.20);
        assert_eq!(
            r.speeches,
            prominent_speeches(&model, &corpus, t, 0.20).unwrap()
        );
        assert!(r.speeches.iter().all(|s| s.score > 0.20));
        let mut prev = usize::MAX;
        for th in [0.0, 0.1, 0.2, 0.35, 0.5, 0.8, 1.0] {
            let r: SpeechesResponse = typed(&get(
                &api,
                &format!("/api/topics/{t}/speeches"),
                Some(&format!("threshold={th}")),
            ));
            assert_eq!(
                r.speeches,
                prominent_speeches(&model, &corpus, t, th).unwrap()
            );
            assert!(r.speeches.len() <= prev);
            prev = r.speeches.len();
        }
    }
}

#[test]
fn speech_text_is_byte_identical() {
    let api = api();
    let corpus = load_corpus(shared().dir.path()).unwrap();
    assert_eq!(corpus.speeches.len(), 62);
    for s in &corpus.speeches {
        let r: SpeechResponse = typed(&get(&api, &format!("/api/speech/{}", s.id), None));
        assert_eq!(r.speech.text.as_bytes(), s.text.as_bytes());
        assert_eq!(&r.speech, s);
        let encoded = s.id.replace('/', "%2F");
        assert_eq!(
            get(&api, &format!("/api/speech/{encoded}"), None).body,
            get(&api, &format!("/api/speech/{}", s.id), None).body
        );
    }
}

type EdgeSet = BTreeSet<(String, String, u64)>;

fn filter_oracle(w: &discourse_core::landscape::SpeakerTopicWeights, level: f64) -> EdgeSet {
    let k = w.k;
    let col_max: Vec<f64> = (0..k)
        .map(|t| w.weights.values().map(|r| r[t]).fold(0.0, f64::max))
        .collect();
    let mut out = EdgeSet::new();
    for (c, r) in &w.weights {
        for t in 0..k {
            if r[t] > 0.0 && r[t] >= level * col_max[t] {
                out.insert((format!("country:{c}"), format!("topic:{t}"), r[t].to_bits()));
            }
        }
    }
    out
}

#[test]
fn network_edges_satisfy_the_filter_rule() {
    let api = api();
    let w = shared().dir.path();
    let weights = speaker_topic_weights(&load_corpus(w).unwrap(), &load_model(w).unwrap()).unwrap();
    for level in DEFAULT_LEVELS {
        for res in DEFAULT_RESOLUTIONS {
            let q = format!("level={level}&resolution={res}");
            let r: NetworkResponse = typed(&get(&api, "/api/network", Some(&q)));
            assert!(r.served.exact);
            assert_eq!((r.served.level, r.served.resolution), (level, res));
            let got: EdgeSet = r
                .graph
                .edges
                .iter()
                .map(|e| (e.source.clone(), e.target.clone(), e.weight.to_bits()))
                .collect();
            assert_eq!(got, filter_oracle(&weights, level), "level {level}");

            // communities match a fresh Louvain run on the same view
            let view =
                filter_edges(&build_bipartite(&weights), level, true, MaxScope::PerTopic).unwrap();
            let comm =
                louvain_communities(&view.to_weighted_graph(), res, r.graph.meta.seed).unwrap();
            let got: Vec<usize> = r.graph.nodes.iter().map(|n| n.community.unwrap()).collect();
            assert_eq!(got, comm.membership);
            assert!(r
                .graph
                .nodes
                .iter()
                .all(|n| n.centrality > 0.0 && n.centrality <= 1.0));

            // one-mode graph is the dot-product projection of the view
            let r: NetworkResponse = typed(&get(
                &api,
                "/api/network",
                Some(&format!("{q}&mode=onemode")),
            ));
            let proj = project_one_mode(&view, ProjectionWeight::DotProduct);
            assert_eq!(r.graph.edges.len(), proj.edges.len());
            for (e, &(a, b, wt)) in r.graph.edges.iter().zip(&proj.edges) {
                assert_eq!(e.source, format!("country:{}", proj.labels[a]));
                assert_eq!(e.target, format!("country:{}", proj.labels[b]));
                assert_eq!(e.weight, wt);
            }
        }
    }
}

#[test]
fn network_snaps_to_the_grid() {
    let api = api();
    let served = |q: &str| typed::<NetworkResponse>(&get(&api, "/api/network", Some(q))).served;
    let s = typed::<NetworkResponse>(&get(&api, "/api/network", None)).served;
    assert_eq!(
        (s.level, s.resolution, s.mode),
        (0.25, 1.0, GraphMode::TwoMode)
    );
    assert!(s.exact);
    let s = served("level=0.2");
    assert_eq!(s.level, 0.15);
    assert!(!s.exact);
    assert_eq!(served("level=0.9").level, 0.25);
    assert_eq!(served("resolution=0.6").resolution, 1.0);
    assert_eq!(served("resolution=0.5").resolution, 0.33);
    assert_eq!(served("resolution=50").resolution, 1.0);
}

#[test]
fn malformed_requests() {
    let api = api();
    let cases: &[(&str, Option<&str>, u16)] = &[
        ("/api/topics/x/speeches", None, 400),
        ("/api/topics/-1/speeches", None, 400),
        ("/api/topics/0/speeches", Some("threshold=2"), 400),
        ("/api/topics/0/speeches", Some("threshold=abc"), 400),
        ("/api/topics/0/speeches", Some("threshold=inf"), 400),
        ("/api/topics/999/speeches", None, 404),
        ("/api/network", Some("level=0"), 400),
        ("/api/network", Some("level=1.5"), 400),
        ("/api/network", Some("resolution=-1"), 400),
        ("/api/network", Some("mode=threemode"), 400),
        ("/api/speech/S%2FPV.0000%2F001", None, 404),
        ("/api/speech/%FF", None, 400),
        ("/api/nothing", None, 404),
        ("/index.html", None, 404),
    ];
    for &(path, q, status) in cases {
        let r = get(&api, path, q);
        assert_eq!(r.status, status, "{path}?{q:?}: {}", r.body);
        let e: ErrorResponse = typed(&r);
        assert_eq!(e.status, status);
    }
}

#[test]
fn invalid_bundle_answers_conflict_everywhere() {
    let mut b = shared().bundle.clone();
    b.rankings[0].speeches[0].id = "S/PV.0000/001".into();
    b.networks.clear();
    let api = Api::new(b);
    assert!(api.problems().len() >= 2);
    for path in [
        "/api/meta",
        "/api/landscape",
        "/api/topics",
        "/api/topics/0/speeches",
        "/api/network",
        "/api/x",
    ] {
        let r = api.handle(path, None);
        assert_eq!(r.status, 409, "{path}");
        let e: ErrorResponse = typed(&r);
        assert!(!e.problems.is_empty());
    }
    let missing = Api::load(Path::new("/nonexistent"));
    assert_eq!(missing.handle("/api/meta", None).status, 409);

    // a stray field makes the stored bundle unreadable, not silently accepted
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&shared().bundle.to_json()).unwrap();
    v["surprise"] = serde_json::json!(true);
    std::fs::write(dir.path().join(BUNDLE_FILE), v.to_string()).unwrap();
    assert_eq!(
        Api::load(dir.path()).handle("/api/topics", None).status,
        409
    );
}
