//! `discourse`: staged topic-landscape pipeline and its read-only HTTP service.

mod serve;

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use discourse_core::api::Api;
use discourse_core::corpus::CorpusConfig;
use discourse_core::netgraph::{CentralityNorm, MaxScope, ProjectionWeight};
use discourse_core::par::Execution;
use discourse_core::pipeline::{self, PipelineConfig, PipelineError, BUNDLE_DIR};
use discourse_core::textprep::PrepConfig;
use discourse_core::topicmodel::{topic_label, LdaConfig, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(
    name = "discourse",
    version,
    about = "Topic landscapes and speaker networks from debate protocols"
)]
struct Cli {
    /// Work directory holding one sub-directory per stage.
    #[arg(long, global = true, default_value = "work")]
    work: PathBuf,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse protocol files into corpus/.
    Ingest(IngestArgs),
    /// Tokenize and build the document-term matrix in dtm/.
    Prep(PrepArgs),
    /// Score k over a range and pick the first local peak.
    SelectK(SelectArgs),
    /// Fit the topic model into model/.
    Fit(FitArgs),
    /// Yearly topic shares, rank table and speaker weights.
    Landscape(LandscapeArgs),
    /// Filtered speaker-topic networks for every level and resolution.
    Network(NetworkCmd),
    /// Assemble bundle/bundle.json for serving.
    Bundle,
    /// All stages from ingest to bundle.
    Run(RunArgs),
    /// Serve a bundle over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
struct IngestArgs {
    /// Directory of protocol text files.
    #[arg(long)]
    protocols: PathBuf,
    /// `name | affiliation` lines for speakers missing from attendee lists.
    #[arg(long)]
    overrides: Option<PathBuf>,
    /// Accepted agenda item; repeat for several. Defaults to the Afghanistan items.
    #[arg(long = "agenda")]
    agenda: Vec<String>,
    /// First meeting date kept (YYYY-MM-DD).
    #[arg(long, requires = "to")]
    from: Option<NaiveDate>,
    /// Last meeting date kept (YYYY-MM-DD).
    #[arg(long, requires = "from")]
    to: Option<NaiveDate>,
}

impl IngestArgs {
    fn corpus_config(&self) -> CorpusConfig {
        let mut c = CorpusConfig::default();
        if !self.agenda.is_empty() {
            c.agenda_accept = self.agenda.clone();
        }
        c.window = self.from.zip(self.to);
        c
    }
}

#[derive(Args, Debug, Clone)]
struct PrepArgs {
    /// Stop-word file (one word per line); replaces the built-in list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Minimum corpus-wide count for a term to stay.
    #[arg(long, default_value_t = 3)]
    min_count: usize,
    #[arg(long, default_value_t = 2)]
    min_token_len: usize,
    /// Keep digit runs such as years.
    #[arg(long)]
    keep_numeric: bool,
}

impl PrepArgs {
    fn config(&self) -> PrepConfig {
        PrepConfig {
            min_count: self.min_count,
            min_token_len: self.min_token_len,
            keep_numeric: self.keep_numeric,
            ..PrepConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
struct LdaArgs {
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    /// Document-topic prior; defaults to 50/k.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Average estimates over this many final sweeps.
    #[arg(long, default_value_t = 0)]
    average_last: usize,
}

impl LdaArgs {
    fn config(&self, k: usize) -> LdaConfig {
        LdaConfig {
            k,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed,
            average_last_m: self.average_last,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SelectArgs {
    #[arg(long = "kmin", alias = "k-min", default_value_t = 2)]
    k_min: usize,
    #[arg(long = "kmax", alias = "k-max", default_value_t = 25)]
    k_max: usize,
    /// Score topics on their top-N words only.
    #[arg(long)]
    top_n: Option<usize>,
    #[command(flatten)]
    lda: LdaArgs,
}

#[derive(Args, Debug, Clone)]
struct FitArgs {
    /// Number of topics; defaults to the k chosen by `select-k`.
    #[arg(long)]
    k: Option<usize>,
    #[command(flatten)]
    lda: LdaArgs,
}

#[derive(Args, Debug, Clone)]
struct LandscapeArgs {
    /// Cumulative share the rank table must reach per year.
    #[arg(long, default_value_t = discourse_core::landscape::RANK_THRESHOLD)]
    rank_threshold: f64,
    /// Keywords listed per topic.
    #[arg(long, default_value_t = discourse_core::topicmodel::TOP_WORDS)]
    keywords: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Centrality {
    Max,
    Sum,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Projection {
    DotProduct,
    CoOccurrence,
    MinWeight,
}

#[derive(Args, Debug, Clone)]
struct NetworkArgs {
    /// Filter levels in (0, 1]; comma separated or repeated.
    #[arg(long = "level", alias = "levels", value_delimiter = ',', default_values_t = pipeline::DEFAULT_LEVELS)]
    levels: Vec<f64>,
    /// Louvain resolutions (> 0); lower values give more communities.
    #[arg(long = "resolution", alias = "resolutions", value_delimiter = ',', default_values_t = pipeline::DEFAULT_RESOLUTIONS)]
    resolutions: Vec<f64>,
    /// Compare edges with the strongest tie overall instead of per topic.
    #[arg(long)]
    global_max: bool,
    /// Keep countries and topics left without edges.
    #[arg(long)]
    keep_isolates: bool,
    #[arg(long, value_enum, default_value_t = Centrality::Max)]
    centrality: Centrality,
    #[arg(long, value_enum, default_value_t = Projection::DotProduct)]
    projection: Projection,
    /// Seed for the community visit order.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    network_seed: u64,
}

impl NetworkArgs {
    fn options(&self, exec: Execution) -> pipeline::NetworkOptions {
        pipeline::NetworkOptions {
            levels: self.levels.clone(),
            resolutions: self.resolutions.clone(),
            scope: if self.global_max {
                MaxScope::Global
            } else {
                MaxScope::PerTopic
            },
            remove_isolates: !self.keep_isolates,
            centrality: match self.centrality {
                Centrality::Max => CentralityNorm::Max,
                Centrality::Sum => CentralityNorm::Sum,
            },
            projection: match self.projection {
                Projection::DotProduct => ProjectionWeight::DotProduct,
                Projection::CoOccurrence => ProjectionWeight::CoOccurrence,
                Projection::MinWeight => ProjectionWeight::MinWeight,
            },
            seed: self.network_seed,
            exec,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct NetworkCmd {
    #[command(flatten)]
    net: NetworkArgs,
    /// Same as `--network-seed`.
    #[arg(long, conflicts_with = "network_seed")]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    prep: PrepArgs,
    #[arg(long = "kmin", alias = "k-min", default_value_t = 2)]
    k_min: usize,
    #[arg(long = "kmax", alias = "k-max", default_value_t = 25)]
    k_max: usize,
    /// Skip the scan and fit this many topics.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
    #[command(flatten)]
    lda: LdaArgs,
    #[command(flatten)]
    network: NetworkArgs,
}

#[derive(Args, Debug, Clone)]
struct ServeArgs {
    /// Directory containing bundle.json; defaults to <work>/bundle.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long, env = "DISCOURSE_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Explorer build served at `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

/// Exit status per failure kind; 2 is left to argument errors.
fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_) => 3,
        PipelineError::Io { .. } => 4,
        PipelineError::MissingArtifact { .. } => 5,
        PipelineError::Artifact { .. } => 6,
        PipelineError::Corpus(_) => 10,
        PipelineError::Prep(_) => 11,
        PipelineError::Lda(_) => 12,
        PipelineError::Select(_) => 13,
        PipelineError::Landscape(_) => 14,
        PipelineError::Net(_) => 15,
        PipelineError::Bundle(_) => 16,
    }
}

const SERVE_FAILED: u8 = 20;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    if let Command::Serve(args) = &cli.command {
        return match run_serve(&cli.work, args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(SERVE_FAILED)
            }
        };
    }
    match dispatch(&cli.work, &cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(work: &Path, command: &Command, exec: Execution) -> Result<(), PipelineError> {
    let mut out = std::io::stdout().lock();
    match command {
        Command::Ingest(a) => {
            let build = pipeline::ingest(
                work,
                &pipeline::IngestOptions {
                    protocols: a.protocols.clone(),
                    overrides: a.overrides.clone(),
                    corpus: a.corpus_config(),
                    exec,
                },
            )?;
            let s = &build.stats;
            let _ = writeln!(
                out,
                "{} protocols, {} speeches, {} included",
                s.protocols, s.speeches_total, s.speeches_included
            );
            for (reason, n) in &s.excluded {
                let _ = writeln!(out, "excluded {reason}: {n}");
            }
            for f in &build.failures {
                let _ = writeln!(out, "skipped {}: {}", f.path, f.error);
            }
        }
        Command::Prep(a) => {
            let (dtm, report) = pipeline::prep(
                work,
                &pipeline::PrepOptions {
                    config: a.config(),
                    stopwords: a.stopwords.clone(),
                    exec,
                },
            )?;
            let _ = writeln!(
                out,
                "{} documents x {} terms, {} tokens kept, {} pruned, {} documents dropped",
                dtm.n_docs(),
                dtm.n_terms(),
                report.kept_tokens,
                report.pruned_tokens,
                report.dropped_documents
            );
        }
        Command::SelectK(a) => {
            let report = pipeline::select_k(
                work,
                &pipeline::SelectOptions {
                    k_min: a.k_min,
                    k_max: a.k_max,
                    base: a.lda.config(a.k_min),
                    top_n: a.top_n,
                    exec,
                },
            )?;
            for (k, s) in report.k_values.iter().zip(&report.scores) {
                let _ = writeln!(out, "k = {k:>3}  score = {s:.6}");
            }
            for f in &report.failures {
                let _ = writeln!(out, "k = {:>3}  failed: {}", f.k, f.error);
            }
            match report.chosen_k {
                Some(k) => {
                    let _ = writeln!(out, "chosen k = {k}");
                }
                None => {
                    let _ = writeln!(out, "no local peak in {}..={}", a.k_min, a.k_max);
                }
            }
        }
        Command::Fit(a) => {
            let model = pipeline::fit(
                work,
                &pipeline::FitOptions {
                    config: a.lda.config(a.k.unwrap_or(1)),
                    k: a.k,
                },
            )?;
            let _ = writeln!(
                out,
                "fitted k = {} on {} documents",
                model.k(),
                model.n_docs()
            );
        }
        Command::Landscape(a) => {
            let (export, weights) = pipeline::landscape(
                work,
                &pipeline::LandscapeOptions {
                    rank_threshold: a.rank_threshold,
                    keywords: a.keywords,
                },
            )?;
            for y in &export.rank_table.years {
                let topics: Vec<String> = y
                    .rows
                    .iter()
                    .map(|r| format!("{} {:.2}", topic_label(r.topic), r.share))
                    .collect();
                let _ = writeln!(out, "{}: {}", y.year, topics.join(", "));
            }
            let _ = writeln!(out, "{} affiliations weighted", weights.weights.len());
        }
        Command::Network(a) => {
            let mut opts = a.net.options(exec);
            if let Some(seed) = a.seed {
                opts.seed = seed;
            }
            let entries = pipeline::network(work, &opts)?;
            let _ = writeln!(
                out,
                "{} graphs written to {}",
                entries.len(),
                work.join(pipeline::NETWORK_DIR).display()
            );
        }
        Command::Bundle => {
            let b = pipeline::bundle(work)?;
            let _ = writeln!(
                out,
                "bundle with k = {}, {} networks, {} speeches",
                b.k(),
                b.networks.len(),
                b.speeches.len()
            );
        }
        Command::Run(a) => {
            let mut c = PipelineConfig::new(&a.ingest.protocols, work);
            c.overrides = a.ingest.overrides.clone();
            c.stopwords = a.prep.stopwords.clone();
            c.corpus = a.ingest.corpus_config();
            c.prep = a.prep.config();
            c.lda = a.lda.config(a.k.unwrap_or(a.k_min));
            c.scan = if a.k.is_some() {
                None
            } else {
                Some((a.k_min, a.k_max))
            };
            c.top_n = a.top_n;
            c.network = a.network.options(exec);
            c.exec = exec;
            let b = c.run()?;
            let _ = writeln!(
                out,
                "bundle with k = {} written to {}",
                b.k(),
                work.join(BUNDLE_DIR).display()
            );
        }
        Command::Serve(_) => unreachable!("handled in main"),
    }
    Ok(())
}

fn run_serve(work: &Path, args: &ServeArgs) -> std::io::Result<()> {
    let dir = args.bundle.clone().unwrap_or_else(|| work.join(BUNDLE_DIR));
    let api = Api::load(&dir);
    for p in api.problems() {
        eprintln!("warning: bundle invalid, every request answers 409: {p}");
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(serve::serve(
        api,
        SocketAddr::new(args.host, args.port),
        args.static_dir.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_are_distinct() {
        use discourse_core::bundle::BundleError;
        let errors = [
            PipelineError::Config(String::new()),
            PipelineError::Io {
                path: String::new(),
                message: String::new(),
            },
            PipelineError::MissingArtifact {
                stage: "fit",
                path: String::new(),
            },
            PipelineError::Artifact {
                path: String::new(),
                message: String::new(),
            },
            PipelineError::Corpus(discourse_core::corpus::CorpusError::NoTurnsFound),
            PipelineError::Prep(discourse_core::textprep::PrepError::Malformed(String::new())),
            PipelineError::Lda(discourse_core::topicmodel::LdaError::EmptyMatrix),
            PipelineError::Select(discourse_core::modelselect::SelectError::InvalidRange),
            PipelineError::Landscape(discourse_core::landscape::LandscapeError::UnknownDocument(
                String::new(),
            )),
            PipelineError::Net(discourse_core::netgraph::NetError::EmptyGraph),
            PipelineError::Bundle(BundleError::Invalid(Vec::new())),
        ];
        let mut codes: Vec<u8> = errors.iter().map(exit_code).collect();
        codes.push(SERVE_FAILED);
        let n = codes.len();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), n);
        assert!(codes.iter().all(|&c| c > 2));
    }
}
