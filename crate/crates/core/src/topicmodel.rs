//! LDA by collapsed Gibbs sampling.
//!
//! Tokens are visited in a fixed global order (documents sorted by id, then
//! token position) and the chain draws from one ChaCha stream seeded by
//! [`LdaConfig::seed`]. Reordering the rows of the input matrix therefore
//! leaves the fitted model unchanged up to the same row permutation.
//!
//! Token positions within a document follow the expanded matrix row: term
//! indices ascending, each repeated `count` times.
//!
//! Serialized models live in a directory:
//!
//! * `config`: `key=value` lines
//! * `theta.csv`: `doc_id,t0,..,t{k-1}`
//! * `phi.csv`: `topic,term,probability`
//! * `z.bin`: little-endian `u32` values: the document count, then for each
//!   document its token count followed by one topic id per token
//! * `topwords.json`: the 25 leading terms of every topic

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::DocTermMatrix;
use crate::SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("invalid LDA config: {0}")]
    InvalidConfig(String),
    #[error("document-term matrix is empty")]
    EmptyMatrix,
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("topic {topic} out of range for k = {k}")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("model does not match matrix: {0}")]
    ModelMatrixMismatch(String),
    #[error("malformed model file {file}: {message}")]
    Malformed { file: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LdaError> = std::result::Result<T, E>;

/// Default RNG seed.
pub const DEFAULT_SEED: u64 = 2017;

/// Number of leading terms written per topic.
pub const TOP_WORDS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior; `None` means `50 / k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Average the estimates over this many final sweeps; 0 or 1 keeps the
    /// final state only.
    pub average_last_m: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            k: 10,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed: DEFAULT_SEED,
            average_last_m: 0,
        }
    }
}

impl LdaConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LdaError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        let a = self.alpha();
        if !(a.is_finite() && a > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be smaller than iterations");
        }
        if self.average_last_m > self.iterations - self.burn_in {
            return bad("average_last_m exceeds the post-burn-in sweeps");
        }
        Ok(())
    }

    fn to_kv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("k={}\n", self.k));
        match self.alpha {
            Some(a) => s.push_str(&format!("alpha={a}\n")),
            None => s.push_str("alpha=auto\n"),
        }
        s.push_str(&format!("beta={}\n", self.beta));
        s.push_str(&format!("iterations={}\n", self.iterations));
        s.push_str(&format!("burn_in={}\n", self.burn_in));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("average_last_m={}\n", self.average_last_m));
        s
    }

    fn from_kv(text: &str) -> Result<Self> {
        let bad = |m: String| LdaError::Malformed {
            file: "config".into(),
            message: m,
        };
        let mut c = LdaConfig::default();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("`{line}`")))?;
            let v = v.trim();
            let num = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{k}: {e}")));
            match k.trim() {
                "k" => c.k = num(v)?,
                "alpha" if v == "auto" => c.alpha = None,
                "alpha" => c.alpha = Some(v.parse().map_err(|e| bad(format!("alpha: {e}")))?),
                "beta" => c.beta = v.parse().map_err(|e| bad(format!("beta: {e}")))?,
                "iterations" => c.iterations = num(v)?,
                "burn_in" => c.burn_in = num(v)?,
                "seed" => c.seed = v.parse().map_err(|e| bad(format!("seed: {e}")))?,
                "average_last_m" => c.average_last_m = num(v)?,
                _ => {}
            }
        }
        Ok(c)
    }
}

/// A fitted model. Rows of `theta` and `z` follow `doc_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub config: LdaConfig,
    pub doc_ids: Vec<String>,
    pub terms: Vec<String>,
    pub z: Vec<Vec<u32>>,
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

impl TopicModel {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    /// Relabels topics: new topic `i` is old topic `perm[i]`.
    pub fn permute_topics(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.k());
        let mut inv = vec![0u32; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new as u32;
        }
        Self {
            config: self.config.clone(),
            doc_ids: self.doc_ids.clone(),
            terms: self.terms.clone(),
            z: self
                .z
                .iter()
                .map(|zs| zs.iter().map(|&t| inv[t as usize]).collect())
                .collect(),
            theta: self
                .theta
                .iter()
                .map(|r| perm.iter().map(|&o| r[o]).collect())
                .collect(),
            phi: perm.iter().map(|&o| self.phi[o].clone()).collect(),
        }
    }
}

struct Sampler<'a> {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    /// word id per token, rows concatenated
    words: Vec<u32>,
    offsets: Vec<usize>,
    order: Vec<usize>,
    z: Vec<u32>,
    ndt: Vec<u32>,
    nwt: Vec<u32>,
    nt: Vec<u64>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
    dtm: &'a DocTermMatrix,
}

impl<'a> Sampler<'a> {
    fn new(dtm: &'a DocTermMatrix, config: &LdaConfig) -> Self {
        let (k, v) = (config.k, dtm.n_terms());
        let mut words = Vec::with_capacity(dtm.total_count() as usize);
        let mut offsets = Vec::with_capacity(dtm.n_docs() + 1);
        offsets.push(0);
        for row in &dtm.rows {
            for &(t, c) in row {
                words.extend(std::iter::repeat_n(t, c as usize));
            }
            offsets.push(words.len());
        }
        let mut order: Vec<usize> = (0..dtm.n_docs()).collect();
        order.sort_by(|&a, &b| dtm.doc_ids[a].cmp(&dtm.doc_ids[b]));

        let mut s = Self {
            k,
            v,
            alpha: config.alpha(),
            beta: config.beta,
            z: vec![0; words.len()],
            ndt: vec![0; dtm.n_docs() * k],
            nwt: vec![0; v * k],
            nt: vec![0; k],
            words,
            offsets,
            order,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            probs: vec![0.0; k],
            dtm,
        };
        for oi in 0..s.order.len() {
            let d = s.order[oi];
            for i in s.offsets[d]..s.offsets[d + 1] {
                let t = s.rng.random_range(0..k) as u32;
                s.z[i] = t;
                s.add(d, s.words[i] as usize, t as usize);
            }
        }
        s
    }

    #[inline]
    fn add(&mut self, d: usize, w: usize, t: usize) {
        self.ndt[d * self.k + t] += 1;
        self.nwt[w * self.k + t] += 1;
        self.nt[t] += 1;
    }

    #[inline]
    fn remove(&mut self, d: usize, w: usize, t: usize) {
        self.ndt[d * self.k + t] -= 1;
        self.nwt[w * self.k + t] -= 1;
        self.nt[t] -= 1;
    }

    fn sweep(&mut self) {
        let k = self.k;
        let vbeta = self.v as f64 * self.beta;
        for oi in 0..self.order.len() {
            let d = self.order[oi];
            for i in self.offsets[d]..self.offsets[d + 1] {
                let w = self.words[i] as usize;
                let old = self.z[i] as usize;
                self.remove(d, w, old);

                let nd = &self.ndt[d * k..(d + 1) * k];
                let nw = &self.nwt[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (nd[t] as f64 + self.alpha) * (nw[t] as f64 + self.beta)
                        / (self.nt[t] as f64 + vbeta);
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.z[i] = new as u32;
                self.add(d, w, new);
            }
        }
    }

    /// Recounts every tally from `z`.
    fn counts_consistent(&self) -> bool {
        let k = self.k;
        let mut ndt = vec![0u32; self.ndt.len()];
        let mut nwt = vec![0u32; self.nwt.len()];
        let mut nt = vec![0u64; k];
        for d in 0..self.offsets.len() - 1 {
            for i in self.offsets[d]..self.offsets[d + 1] {
                let (w, t) = (self.words[i] as usize, self.z[i] as usize);
                ndt[d * k + t] += 1;
                nwt[w * k + t] += 1;
                nt[t] += 1;
            }
        }
        ndt == self.ndt && nwt == self.nwt && nt == self.nt
    }

    fn theta(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        (0..self.offsets.len() - 1)
            .map(|d| {
                let nd = (self.offsets[d + 1] - self.offsets[d]) as f64;
                let denom = nd + k as f64 * self.alpha;
                (0..k)
                    .map(|t| (self.ndt[d * k + t] as f64 + self.alpha) / denom)
                    .collect()
            })
            .collect()
    }

    fn phi(&self) -> Vec<Vec<f64>> {
        let k = self.k;
        let vbeta = self.v as f64 * self.beta;
        (0..k)
            .map(|t| {
                let denom = self.nt[t] as f64 + vbeta;
                (0..self.v)
                    .map(|w| (self.nwt[w * k + t] as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    fn z_rows(&self) -> Vec<Vec<u32>> {
        (0..self.offsets.len() - 1)
            .map(|d| self.z[self.offsets[d]..self.offsets[d + 1]].to_vec())
            .collect()
    }

    fn model(&self, config: &LdaConfig, theta: Vec<Vec<f64>>, phi: Vec<Vec<f64>>) -> TopicModel {
        TopicModel {
            config: config.clone(),
            doc_ids: self.dtm.doc_ids.clone(),
            terms: self.dtm.vocabulary.terms().to_vec(),
            z: self.z_rows(),
            theta,
            phi,
        }
    }
}

fn accumulate(acc: &mut [Vec<f64>], x: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(x) {
        for (ai, xi) in a.iter_mut().zip(r) {
            *ai += xi;
        }
    }
}

fn check_input(dtm: &DocTermMatrix, config: &LdaConfig) -> Result<()> {
    config.validate()?;
    if dtm.n_docs() == 0 || dtm.n_terms() == 0 || dtm.total_count() == 0 {
        return Err(LdaError::EmptyMatrix);
    }
    let mut ids: Vec<&String> = dtm.doc_ids.iter().collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(LdaError::DuplicateDocId(w[0].clone()));
    }
    Ok(())
}

/// Fits LDA. Deterministic for a given `(dtm, config)`.
pub fn fit_lda(dtm: &DocTermMatrix, config: &LdaConfig) -> Result<TopicModel> {
    fit_lda_traced(dtm, config, 0).map(|(m, _)| m)
}

/// Like [`fit_lda`], also recording the log-likelihood of the current
/// point estimate every `every` sweeps (`0` disables the trace).
pub fn fit_lda_traced(
    dtm: &DocTermMatrix,
    config: &LdaConfig,
    every: usize,
) -> Result<(TopicModel, Vec<(usize, f64)>)> {
    check_input(dtm, config)?;
    let mut s = Sampler::new(dtm, config);
    let avg = config.average_last_m.max(1);
    let mut theta_acc: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;
    let mut trace = Vec::new();

    for it in 1..=config.iterations {
        s.sweep();
        debug_assert!(s.counts_consistent(), "count tallies drifted at sweep {it}");
        if every > 0 && it % every == 0 {
            let m = s.model(config, s.theta(), s.phi());
            trace.push((it, log_likelihood(&m, dtm)?));
        }
        if avg > 1 && it > config.iterations - avg {
            let (th, ph) = (s.theta(), s.phi());
            match theta_acc.as_mut() {
                None => theta_acc = Some((th, ph)),
                Some((ta, pa)) => {
                    accumulate(ta, &th);
                    accumulate(pa, &ph);
                }
            }
        }
    }

    let (theta, phi) = match theta_acc {
        Some((mut th, mut ph)) => {
            for r in th.iter_mut().chain(ph.iter_mut()) {
                let total: f64 = r.iter().sum();
                r.iter_mut().for_each(|x| *x /= total);
            }
            (th, ph)
        }
        None => (s.theta(), s.phi()),
    };
    Ok((s.model(config, theta, phi), trace))
}

/// Leading `n` terms of a topic by descending probability, ties broken
/// lexicographically.
pub fn top_words(model: &TopicModel, topic: usize, n: usize) -> Result<Vec<&str>> {
    let row = model.phi.get(topic).ok_or(LdaError::TopicOutOfRange {
        topic,
        k: model.k(),
    })?;
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| {
        row[b]
            .total_cmp(&row[a])
            .then_with(|| model.terms[a].cmp(&model.terms[b]))
    });
    Ok(idx
        .into_iter()
        .take(n)
        .map(|i| model.terms[i].as_str())
        .collect())
}

/// `Σ_d Σ_w count · ln(Σ_t θ_dt φ_tw)`.
pub fn log_likelihood(model: &TopicModel, dtm: &DocTermMatrix) -> Result<f64> {
    if model.doc_ids != dtm.doc_ids {
        return Err(LdaError::ModelMatrixMismatch("document ids differ".into()));
    }
    if model.terms.len() != dtm.n_terms() {
        return Err(LdaError::ModelMatrixMismatch(format!(
            "vocabulary size {} vs {}",
            model.terms.len(),
            dtm.n_terms()
        )));
    }
    let mut ll = 0.0;
    for (d, row) in dtm.rows.iter().enumerate() {
        for &(w, c) in row {
            let p: f64 = (0..model.k())
                .map(|t| model.theta[d][t] * model.phi[t][w as usize])
                .sum();
            ll += c as f64 * p.ln();
        }
    }
    Ok(ll)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub topic: usize,
    pub label: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopWordsFile {
    pub schema_version: u32,
    pub k: usize,
    pub n: usize,
    pub topics: Vec<TopicWords>,
}

/// Display label for a zero-based topic index.
pub fn topic_label(topic: usize) -> String {
    format!("T{}", topic + 1)
}

pub fn topic_keywords(model: &TopicModel, n: usize) -> Vec<TopicWords> {
    (0..model.k())
        .map(|t| TopicWords {
            topic: t,
            label: topic_label(t),
            words: top_words(model, t, n)
                .expect("topic in range")
                .into_iter()
                .map(str::to_string)
                .collect(),
        })
        .collect()
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl TopicModel {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut cfg = self.config.to_kv();
        cfg.push_str(&format!(
            "n_docs={}\nn_terms={}\n",
            self.n_docs(),
            self.terms.len()
        ));
        fs::write(dir.join("config"), cfg)?;

        let mut wr = csv::Writer::from_path(dir.join("theta.csv"))?;
        let mut header = vec!["doc_id".to_string()];
        header.extend((0..self.k()).map(|t| format!("t{t}")));
        wr.write_record(&header)?;
        for (id, row) in self.doc_ids.iter().zip(&self.theta) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|&x| fmt_f64(x)));
            wr.write_record(&rec)?;
        }
        wr.flush()?;

        let mut wr = csv::Writer::from_path(dir.join("phi.csv"))?;
        wr.write_record(["topic", "term", "probability"])?;
        for (t, row) in self.phi.iter().enumerate() {
            for (term, &p) in self.terms.iter().zip(row) {
                wr.write_record([t.to_string(), term.clone(), fmt_f64(p)])?;
            }
        }
        wr.flush()?;

        let mut z = Vec::new();
        z.extend_from_slice(&(self.z.len() as u32).to_le_bytes());
        for row in &self.z {
            z.extend_from_slice(&(row.len() as u32).to_le_bytes());
            for &t in row {
                z.extend_from_slice(&t.to_le_bytes());
            }
        }
        fs::write(dir.join("z.bin"), z)?;

        let tw = TopWordsFile {
            schema_version: SCHEMA_VERSION,
            k: self.k(),
            n: TOP_WORDS.min(self.terms.len()),
            topics: topic_keywords(self, TOP_WORDS),
        };
        let mut f = fs::File::create(dir.join("topwords.json"))?;
        serde_json::to_writer_pretty(&mut f, &tw)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let bad = |file: &str, message: String| LdaError::Malformed {
            file: file.into(),
            message,
        };
        let config = LdaConfig::from_kv(&fs::read_to_string(dir.join("config"))?)?;
        let k = config.k;

        let mut rd = csv::Reader::from_path(dir.join("theta.csv"))?;
        let mut doc_ids = Vec::new();
        let mut theta = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != k + 1 {
                return Err(bad("theta.csv", format!("expected {} columns", k + 1)));
            }
            doc_ids.push(rec[0].to_string());
            theta.push(
                rec.iter()
                    .skip(1)
                    .map(|x| {
                        x.parse::<f64>()
                            .map_err(|e| bad("theta.csv", e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }

        let mut rd = csv::Reader::from_path(dir.join("phi.csv"))?;
        let mut terms = Vec::new();
        let mut phi = vec![Vec::new(); k];
        for rec in rd.records() {
            let rec = rec?;
            let t: usize = rec[0].parse().map_err(|_| bad("phi.csv", "topic".into()))?;
            if t >= k {
                return Err(bad("phi.csv", format!("topic {t} >= k")));
            }
            if t == 0 {
                terms.push(rec[1].to_string());
            }
            phi[t].push(
                rec[2]
                    .parse::<f64>()
                    .map_err(|e| bad("phi.csv", e.to_string()))?,
            );
        }
        if phi.iter().any(|r| r.len() != terms.len()) {
            return Err(bad("phi.csv", "ragged topic rows".into()));
        }

        let raw = fs::read(dir.join("z.bin"))?;
        if raw.len() % 4 != 0 {
            return Err(bad("z.bin", "length not a multiple of 4".into()));
        }
        let mut vals = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let n = vals.next().ok_or_else(|| bad("z.bin", "empty".into()))? as usize;
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let len = vals
                .next()
                .ok_or_else(|| bad("z.bin", "truncated".into()))? as usize;
            let row: Vec<u32> = vals.by_ref().take(len).collect();
            if row.len() != len || row.iter().any(|&t| t as usize >= k) {
                return Err(bad("z.bin", "truncated or out-of-range topic".into()));
            }
            z.push(row);
        }
        if n != doc_ids.len() {
            return Err(bad("z.bin", "document count differs from theta.csv".into()));
        }
        Ok(Self {
            config,
            doc_ids,
            terms,
            z,
            theta,
            phi,
        })
    }
}
