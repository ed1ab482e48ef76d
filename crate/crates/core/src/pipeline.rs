//! Staged pipeline over a work directory.
//!
//! ```text
//! work/
//!   corpus/     corpus.jsonl protocols.json stats.json failures.json
//!   dtm/        dtm.csv vocabulary.csv dtm_meta.json
//!   selectk/    scan.csv scan.json
//!   model/      config theta.csv phi.csv z.bin topwords.json
//!   landscape/  landscape.json shares.csv rank_table.csv weights.csv weights.json
//!   network/    index.json {twomode,onemode}_level<L>_res<R>.{gexf,json,csv}
//!   bundle/     bundle.json
//! ```
//!
//! Every stage directory also carries `provenance.json` with the stage
//! config, seed and SHA-256 digests of its inputs. Stages read only files
//! written by earlier stages, so any stage can be rerun on its own.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundle::{Bundle, BundleError, NetworkEntry};
use crate::corpus::{
    build_corpus, AffiliationOverrides, Corpus, CorpusBuild, CorpusConfig, CorpusError, Protocol,
};
use crate::landscape::{
    rank_table, speaker_topic_weights, yearly_shares, LandscapeError, LandscapeExport,
    SpeakerTopicWeights, RANK_THRESHOLD,
};
use crate::modelselect::{scan_k, ScanOptions, ScanReport, SelectError};
use crate::netgraph::{
    build_bipartite, export_graph, filter_edges, louvain_communities, project_one_mode,
    CentralityNorm, ExportFormat, GraphBundle, GraphMode, MaxScope, NetError, ProjectionWeight,
};
use crate::par::{self, Execution};
use crate::textprep::{
    parse_stopwords, prepare, DocTermMatrix, PrepConfig, PrepError, PrepReport, Vocabulary,
};
use crate::topicmodel::{
    fit_lda, topic_keywords, LdaConfig, LdaError, TopicModel, DEFAULT_SEED, TOP_WORDS,
};
use crate::SCHEMA_VERSION;

pub const CORPUS_DIR: &str = "corpus";
pub const DTM_DIR: &str = "dtm";
pub const SELECTK_DIR: &str = "selectk";
pub const MODEL_DIR: &str = "model";
pub const LANDSCAPE_DIR: &str = "landscape";
pub const NETWORK_DIR: &str = "network";
pub const BUNDLE_DIR: &str = "bundle";
pub const PROVENANCE_FILE: &str = "provenance.json";

pub const DEFAULT_LEVELS: [f64; 2] = [0.15, 0.25];
pub const DEFAULT_RESOLUTIONS: [f64; 2] = [0.33, 1.0];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("missing artifact {path}; run `{stage}` first")]
    MissingArtifact { stage: &'static str, path: String },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

/// Header written next to every stage's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub stage: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    fn new(
        stage: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        inputs: Vec<InputDigest>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs,
        }
    }
}

fn digest_file(path: &Path, name: String) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(InputDigest {
        name,
        sha256: format!("{:x}", Sha256::digest(&bytes)),
    })
}

/// Digests of artifacts inside `work`, named by their relative path.
fn digest_artifacts(work: &Path, rel: &[&str]) -> Result<Vec<InputDigest>> {
    rel.iter()
        .map(|r| digest_file(&work.join(r), r.to_string()))
        .collect()
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Artifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::result::Result<(), String>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|message| PipelineError::Artifact {
        path: path.display().to_string(),
        message,
    })?;
    fs::write(path, buf).map_err(io_err(path))
}

fn require(work: &Path, rel: &str, stage: &'static str) -> Result<PathBuf> {
    let p = work.join(rel);
    if p.exists() {
        Ok(p)
    } else {
        Err(PipelineError::MissingArtifact {
            stage,
            path: p.display().to_string(),
        })
    }
}

fn read_json<T: DeserializeOwned>(work: &Path, rel: &str, stage: &'static str) -> Result<T> {
    let p = require(work, rel, stage)?;
    let f = fs::File::open(&p).map_err(io_err(&p))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| PipelineError::Artifact {
        path: p.display().to_string(),
        message: e.to_string(),
    })
}

fn write_provenance(dir: &Path, p: &Provenance) -> Result<()> {
    write_json(&dir.join(PROVENANCE_FILE), p)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub protocols: PathBuf,
    pub overrides: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub exec: Execution,
}

/// Regular, non-hidden files directly inside `dir`, sorted.
pub fn protocol_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::Config(format!(
            "no protocol files in {}",
            dir.display()
        )));
    }
    Ok(files)
}

pub fn ingest(work: &Path, opts: &IngestOptions) -> Result<CorpusBuild> {
    let files = protocol_files(&opts.protocols)?;
    let mut inputs = Vec::new();
    for f in &files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        inputs.push(digest_file(f, format!("protocols/{name}"))?);
    }
    let overrides = match &opts.overrides {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            inputs.push(digest_file(path, format!("overrides/{name}"))?);
            AffiliationOverrides::parse(&text)?
        }
        None => AffiliationOverrides::new(),
    };
    let build = build_corpus(&files, &overrides, &opts.corpus, opts.exec)?;

    let dir = work.join(CORPUS_DIR);
    fresh_dir(&dir)?;
    write_with(&dir.join("corpus.jsonl"), |b| {
        build.corpus.write_jsonl(b).map_err(|e| e.to_string())
    })?;
    write_json(&dir.join("protocols.json"), &build.corpus.protocols)?;
    write_json(&dir.join("stats.json"), &build.stats)?;
    write_json(&dir.join("failures.json"), &build.failures)?;
    let config = serde_json::json!({
        "corpus": opts.corpus,
        "override_entries": overrides.len(),
    });
    write_provenance(&dir, &Provenance::new("ingest", None, config, inputs))?;
    Ok(build)
}

pub fn load_corpus(work: &Path) -> Result<Corpus> {
    let protocols: Vec<Protocol> = read_json(work, "corpus/protocols.json", "ingest")?;
    let p = require(work, "corpus/corpus.jsonl", "ingest")?;
    let f = fs::File::open(&p).map_err(io_err(&p))?;
    let speeches = Corpus::read_jsonl(BufReader::new(f))?;
    Ok(Corpus::new(protocols, speeches))
}

// ------------------------------------------------------------------ prep

#[derive(Debug, Clone, Default)]
pub struct PrepOptions {
    pub config: PrepConfig,
    /// Replaces the built-in stop-word list when given.
    pub stopwords: Option<PathBuf>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmMeta {
    pub schema_version: u32,
    pub doc_ids: Vec<String>,
    pub dropped_docs: Vec<String>,
    pub report: PrepReport,
}

pub fn prep(work: &Path, opts: &PrepOptions) -> Result<(DocTermMatrix, PrepReport)> {
    let corpus = load_corpus(work)?;
    let mut inputs = digest_artifacts(work, &["corpus/corpus.jsonl"])?;
    let mut config = opts.config.clone();
    if let Some(path) = &opts.stopwords {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        config.stopwords = parse_stopwords(&text);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        inputs.push(digest_file(path, format!("stopwords/{name}"))?);
    }
    let (dtm, report) = prepare(&corpus.speeches, &config, opts.exec)?;
    write_dtm(work, &dtm, report)?;
    write_provenance(
        &work.join(DTM_DIR),
        &Provenance::new("prep", None, to_value(&config.summary()), inputs),
    )?;
    Ok((dtm, report))
}

/// Replaces `dtm/` with `dtm`. Also the way to feed an externally built
/// matrix to `select-k` and `fit`.
pub fn write_dtm(work: &Path, dtm: &DocTermMatrix, report: PrepReport) -> Result<()> {
    let dir = work.join(DTM_DIR);
    fresh_dir(&dir)?;
    write_with(&dir.join("dtm.csv"), |b| {
        dtm.write_csv(b).map_err(|e| e.to_string())
    })?;
    write_with(&dir.join("vocabulary.csv"), |b| {
        dtm.vocabulary.write_csv(b).map_err(|e| e.to_string())
    })?;
    write_json(
        &dir.join("dtm_meta.json"),
        &DtmMeta {
            schema_version: SCHEMA_VERSION,
            doc_ids: dtm.doc_ids.clone(),
            dropped_docs: dtm.dropped_docs.clone(),
            report,
        },
    )
}

pub fn load_dtm(work: &Path) -> Result<DocTermMatrix> {
    let meta: DtmMeta = read_json(work, "dtm/dtm_meta.json", "prep")?;
    let vp = require(work, "dtm/vocabulary.csv", "prep")?;
    let vocab = Vocabulary::read_csv(fs::File::open(&vp).map_err(io_err(&vp))?)?;
    let mp = require(work, "dtm/dtm.csv", "prep")?;
    let dtm = DocTermMatrix::read_csv(
        fs::File::open(&mp).map_err(io_err(&mp))?,
        vocab,
        meta.dropped_docs,
    )?;
    if dtm.doc_ids != meta.doc_ids {
        return Err(PipelineError::Artifact {
            path: mp.display().to_string(),
            message: "row order disagrees with dtm_meta.json".into(),
        });
    }
    Ok(dtm)
}

// -------------------------------------------------------------- select-k

#[derive(Debug, Clone)]
pub struct SelectOptions {
    pub k_min: usize,
    pub k_max: usize,
    /// Everything but `k` is taken from here.
    pub base: LdaConfig,
    pub top_n: Option<usize>,
    pub exec: Execution,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 25,
            base: LdaConfig::default(),
            top_n: None,
            exec: Execution::default(),
        }
    }
}

pub fn select_k(work: &Path, opts: &SelectOptions) -> Result<ScanReport> {
    if opts.k_min < 2 || opts.k_min > opts.k_max {
        return Err(PipelineError::Config(format!(
            "k range {}..={} must satisfy 2 <= kmin <= kmax",
            opts.k_min, opts.k_max
        )));
    }
    let dtm = load_dtm(work)?;
    let inputs = digest_artifacts(work, &["dtm/dtm.csv", "dtm/vocabulary.csv"])?;
    let ks: Vec<usize> = (opts.k_min..=opts.k_max).collect();
    let scan = scan_k(
        &dtm,
        &ks,
        &opts.base,
        &ScanOptions {
            top_n: opts.top_n,
            keep_models: false,
            exec: opts.exec,
        },
    )?;
    let report = scan.report();

    let dir = work.join(SELECTK_DIR);
    fresh_dir(&dir)?;
    write_with(&dir.join("scan.csv"), |b| {
        scan.write_csv(b).map_err(|e| e.to_string())
    })?;
    write_json(&dir.join("scan.json"), &report)?;
    let config = serde_json::json!({
        "k_min": opts.k_min,
        "k_max": opts.k_max,
        "top_n": opts.top_n,
        "base": opts.base,
    });
    write_provenance(
        &dir,
        &Provenance::new("select-k", Some(opts.base.seed), config, inputs),
    )?;
    Ok(report)
}

// ------------------------------------------------------------------- fit

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// `config.k` is ignored when `k` is `None`; the chosen k of the last
    /// scan is used instead.
    pub config: LdaConfig,
    pub k: Option<usize>,
}

pub fn fit(work: &Path, opts: &FitOptions) -> Result<TopicModel> {
    let dtm = load_dtm(work)?;
    let mut inputs = digest_artifacts(work, &["dtm/dtm.csv", "dtm/vocabulary.csv"])?;
    let mut config = opts.config.clone();
    config.k = match opts.k {
        Some(k) => k,
        None => {
            let report: ScanReport = read_json(work, "selectk/scan.json", "select-k")?;
            inputs.extend(digest_artifacts(work, &["selectk/scan.json"])?);
            report.chosen_k.ok_or_else(|| {
                PipelineError::Config("the scan produced no chosen k; pass --k".into())
            })?
        }
    };
    let model = fit_lda(&dtm, &config)?;
    let dir = work.join(MODEL_DIR);
    fresh_dir(&dir)?;
    model.write_dir(&dir)?;
    write_provenance(
        &dir,
        &Provenance::new("fit", Some(config.seed), to_value(&config), inputs),
    )?;
    Ok(model)
}

pub fn load_model(work: &Path) -> Result<TopicModel> {
    require(work, "model/config", "fit")?;
    Ok(TopicModel::read_dir(&work.join(MODEL_DIR))?)
}

// ------------------------------------------------------------- landscape

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeOptions {
    pub rank_threshold: f64,
    pub keywords: usize,
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        Self {
            rank_threshold: RANK_THRESHOLD,
            keywords: TOP_WORDS,
        }
    }
}

pub fn landscape(
    work: &Path,
    opts: &LandscapeOptions,
) -> Result<(LandscapeExport, SpeakerTopicWeights)> {
    if !(opts.rank_threshold > 0.0 && opts.rank_threshold <= 1.0) {
        return Err(PipelineError::Config(format!(
            "rank threshold {} outside (0, 1]",
            opts.rank_threshold
        )));
    }
    let corpus = load_corpus(work)?;
    let model = load_model(work)?;
    let inputs = digest_artifacts(
        work,
        &["corpus/corpus.jsonl", "model/theta.csv", "model/phi.csv"],
    )?;
    let series = yearly_shares(&corpus, &model)?;
    let rank = rank_table(&series, opts.rank_threshold);
    let export = LandscapeExport::new(&series, &rank, &topic_keywords(&model, opts.keywords));
    let weights = speaker_topic_weights(&corpus, &model)?;

    let dir = work.join(LANDSCAPE_DIR);
    fresh_dir(&dir)?;
    write_json(&dir.join("landscape.json"), &export)?;
    write_with(&dir.join("shares.csv"), |b| {
        export.write_shares_csv(b).map_err(|e| e.to_string())
    })?;
    write_with(&dir.join("rank_table.csv"), |b| {
        export.write_rank_csv(b).map_err(|e| e.to_string())
    })?;
    write_with(&dir.join("weights.csv"), |b| {
        weights.write_csv(b).map_err(|e| e.to_string())
    })?;
    write_json(&dir.join("weights.json"), &weights)?;
    write_provenance(
        &dir,
        &Provenance::new("landscape", Some(model.config.seed), to_value(opts), inputs),
    )?;
    Ok((export, weights))
}

// --------------------------------------------------------------- network

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkOptions {
    pub levels: Vec<f64>,
    pub resolutions: Vec<f64>,
    pub scope: MaxScope,
    pub remove_isolates: bool,
    pub centrality: CentralityNorm,
    pub projection: ProjectionWeight,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS.to_vec(),
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            scope: MaxScope::PerTopic,
            remove_isolates: true,
            centrality: CentralityNorm::Max,
            projection: ProjectionWeight::DotProduct,
            seed: DEFAULT_SEED,
            exec: Execution::default(),
        }
    }
}

impl NetworkOptions {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.resolutions.is_empty() {
            return Err(PipelineError::Config(
                "at least one level and one resolution are required".into(),
            ));
        }
        if let Some(l) = self.levels.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return Err(PipelineError::Config(format!("level {l} outside (0, 1]")));
        }
        if let Some(r) = self
            .resolutions
            .iter()
            .find(|&&r| !(r > 0.0 && r.is_finite()))
        {
            return Err(PipelineError::Config(format!(
                "resolution {r} must be positive"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkIndexEntry {
    pub mode: GraphMode,
    pub level: f64,
    pub resolution: f64,
    /// File name without extension inside `network/`.
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkIndex {
    pub schema_version: u32,
    pub entries: Vec<NetworkIndexEntry>,
}

pub fn network_stem(mode: GraphMode, level: f64, resolution: f64) -> String {
    let m = match mode {
        GraphMode::TwoMode => "twomode",
        GraphMode::OneMode => "onemode",
    };
    format!("{m}_level{level}_res{resolution}")
}

fn sorted_grid(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Computes the full (level, resolution) grid in both modes.
pub fn network_grid(
    weights: &SpeakerTopicWeights,
    opts: &NetworkOptions,
) -> Result<Vec<NetworkEntry>> {
    opts.validate()?;
    let graph = build_bipartite(weights);
    let levels = sorted_grid(&opts.levels);
    let resolutions = sorted_grid(&opts.resolutions);
    let cells: Vec<(f64, f64)> = levels
        .iter()
        .flat_map(|&l| resolutions.iter().map(move |&r| (l, r)))
        .collect();
    let results = par::map(
        &cells,
        opts.exec,
        |&(level, resolution)| -> Result<[NetworkEntry; 2]> {
            let view = filter_edges(&graph, level, opts.remove_isolates, opts.scope)?;
            let two = louvain_communities(&view.to_weighted_graph(), resolution, opts.seed)?;
            let proj = project_one_mode(&view, opts.projection);
            let one = louvain_communities(&proj, resolution, opts.seed)?;
            Ok([
                NetworkEntry {
                    mode: GraphMode::TwoMode,
                    level,
                    resolution,
                    graph: GraphBundle::from_view(&view, &two, opts.centrality, opts.seed),
                },
                NetworkEntry {
                    mode: GraphMode::OneMode,
                    level,
                    resolution,
                    graph: GraphBundle::from_projection(
                        &view,
                        &proj,
                        opts.projection,
                        &one,
                        opts.centrality,
                        opts.seed,
                    ),
                },
            ])
        },
    );
    let mut out = Vec::with_capacity(cells.len() * 2);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn network(work: &Path, opts: &NetworkOptions) -> Result<Vec<NetworkEntry>> {
    opts.validate()?;
    let weights: SpeakerTopicWeights = read_json(work, "landscape/weights.json", "landscape")?;
    let inputs = digest_artifacts(work, &["landscape/weights.json"])?;
    let entries = network_grid(&weights, opts)?;

    let dir = work.join(NETWORK_DIR);
    fresh_dir(&dir)?;
    let mut index = NetworkIndex {
        schema_version: SCHEMA_VERSION,
        entries: Vec::new(),
    };
    for e in &entries {
        let stem = network_stem(e.mode, e.level, e.resolution);
        for f in [ExportFormat::Gexf, ExportFormat::Json, ExportFormat::Csv] {
            export_graph(&e.graph, f, &dir.join(format!("{stem}.{}", f.extension())))?;
        }
        index.entries.push(NetworkIndexEntry {
            mode: e.mode,
            level: e.level,
            resolution: e.resolution,
            stem,
        });
    }
    write_json(&dir.join("index.json"), &index)?;
    write_provenance(
        &dir,
        &Provenance::new("network", Some(opts.seed), to_value(opts), inputs),
    )?;
    Ok(entries)
}

pub fn load_networks(work: &Path) -> Result<Vec<NetworkEntry>> {
    let index: NetworkIndex = read_json(work, "network/index.json", "network")?;
    index
        .entries
        .into_iter()
        .map(|e| {
            let graph: GraphBundle =
                read_json(work, &format!("network/{}.json", e.stem), "network")?;
            Ok(NetworkEntry {
                mode: e.mode,
                level: e.level,
                resolution: e.resolution,
                graph,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- bundle

const STAGES: [(&str, &str); 6] = [
    ("ingest", CORPUS_DIR),
    ("prep", DTM_DIR),
    ("select-k", SELECTK_DIR),
    ("fit", MODEL_DIR),
    ("landscape", LANDSCAPE_DIR),
    ("network", NETWORK_DIR),
];

/// Assembles, validates and writes `bundle/bundle.json`. The scan stage is
/// optional since `fit` can run with an explicit k.
pub fn bundle(work: &Path) -> Result<Bundle> {
    let corpus = load_corpus(work)?;
    let model = load_model(work)?;
    let landscape: LandscapeExport = read_json(work, "landscape/landscape.json", "landscape")?;
    let networks = load_networks(work)?;
    let mut provenance = BTreeMap::new();
    let mut upstream = Vec::new();
    for (stage, dir) in STAGES {
        let rel = format!("{dir}/{PROVENANCE_FILE}");
        if work.join(&rel).exists() {
            provenance.insert(
                stage.to_string(),
                read_json::<serde_json::Value>(work, &rel, stage)?,
            );
            upstream.push(rel);
        }
    }
    let b = Bundle::assemble(
        &corpus,
        &model,
        landscape,
        topic_keywords(&model, TOP_WORDS),
        networks,
        provenance,
    )?;
    let problems = b.validate();
    if !problems.is_empty() {
        return Err(BundleError::Invalid(problems).into());
    }
    let dir = work.join(BUNDLE_DIR);
    fresh_dir(&dir)?;
    b.write(&dir)?;
    let rel: Vec<&str> = upstream.iter().map(String::as_str).collect();
    let inputs = digest_artifacts(work, &rel)?;
    write_provenance(
        &dir,
        &Provenance::new("bundle", None, serde_json::Value::Null, inputs),
    )?;
    Ok(b)
}

// ------------------------------------------------------------ whole run

/// Everything needed to run all stages in one go.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub protocols: PathBuf,
    pub overrides: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub output: PathBuf,
    pub corpus: CorpusConfig,
    pub prep: PrepConfig,
    pub lda: LdaConfig,
    /// Inclusive k range for the scan; `None` fits `lda.k` directly.
    pub scan: Option<(usize, usize)>,
    pub top_n: Option<usize>,
    pub network: NetworkOptions,
    pub port: u16,
    pub exec: Execution,
}

impl PipelineConfig {
    pub fn new(protocols: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            protocols: protocols.into(),
            overrides: None,
            stopwords: None,
            output: output.into(),
            corpus: CorpusConfig::default(),
            prep: PrepConfig::default(),
            lda: LdaConfig::default(),
            scan: Some((2, 25)),
            top_n: None,
            network: NetworkOptions::default(),
            port: 8080,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [
            Some(&self.protocols),
            self.overrides.as_ref(),
            self.stopwords.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(PipelineError::Config(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
        }
        self.network.validate()
    }

    /// Runs ingest through bundle.
    pub fn run(&self) -> Result<Bundle> {
        self.validate()?;
        let work = &self.output;
        ingest(
            work,
            &IngestOptions {
                protocols: self.protocols.clone(),
                overrides: self.overrides.clone(),
                corpus: self.corpus.clone(),
                exec: self.exec,
            },
        )?;
        prep(
            work,
            &PrepOptions {
                config: self.prep.clone(),
                stopwords: self.stopwords.clone(),
                exec: self.exec,
            },
        )?;
        let k = match self.scan {
            Some((k_min, k_max)) => {
                select_k(
                    work,
                    &SelectOptions {
                        k_min,
                        k_max,
                        base: self.lda.clone(),
                        top_n: self.top_n,
                        exec: self.exec,
                    },
                )?;
                None
            }
            None => Some(self.lda.k),
        };
        fit(
            work,
            &FitOptions {
                config: self.lda.clone(),
                k,
            },
        )?;
        landscape(work, &LandscapeOptions::default())?;
        let mut net = self.network.clone();
        net.exec = self.exec;
        network(work, &net)?;
        bundle(work)
    }
}
