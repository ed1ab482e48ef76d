//! Tokenization, stop-word removal, vocabulary pruning and vectorization.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Speech;
use crate::par::{self, Execution};

const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
    #[error("no term survives pruning")]
    EmptyVocabulary,
    #[error("malformed matrix data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = PrepError> = std::result::Result<T, E>;

/// Maps a token to its base form.
pub trait Lemmatizer: Send + Sync {
    fn name(&self) -> &str;
    fn lemmatize<'a>(&self, token: &'a str) -> Cow<'a, str>;
}

/// Leaves tokens untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityLemmatizer;

impl Lemmatizer for IdentityLemmatizer {
    fn name(&self) -> &str {
        "identity"
    }

    fn lemmatize<'a>(&self, token: &'a str) -> Cow<'a, str> {
        Cow::Borrowed(token)
    }
}

#[derive(Clone)]
pub struct PrepConfig {
    pub stopwords: BTreeSet<String>,
    /// Corpus-wide frequency a term needs to stay in the vocabulary.
    pub min_count: usize,
    pub min_token_len: usize,
    /// Admit runs of digits (years) as tokens.
    pub keep_numeric: bool,
    pub lemmatizer: Arc<dyn Lemmatizer>,
}

impl fmt::Debug for PrepConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrepConfig")
            .field("stopwords", &self.stopwords.len())
            .field("min_count", &self.min_count)
            .field("min_token_len", &self.min_token_len)
            .field("keep_numeric", &self.keep_numeric)
            .field("lemmatizer", &self.lemmatizer.name())
            .finish()
    }
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            min_count: 3,
            min_token_len: 2,
            keep_numeric: false,
            lemmatizer: Arc::new(IdentityLemmatizer),
        }
    }
}

impl PrepConfig {
    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_count < 1 {
            return Err(PrepError::InvalidConfig(
                "min_count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Serializable summary for provenance records.
    pub fn summary(&self) -> PrepSummary {
        PrepSummary {
            stopword_count: self.stopwords.len(),
            min_count: self.min_count,
            min_token_len: self.min_token_len,
            keep_numeric: self.keep_numeric,
            lemmatizer: self.lemmatizer.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub stopword_count: usize,
    pub min_count: usize,
    pub min_token_len: usize,
    pub keep_numeric: bool,
    pub lemmatizer: String,
}

/// One term per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn raw_tokens(text: &str, keep_numeric: bool) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_numeric = false;
    let flush = |cur: &mut String, out: &mut Vec<String>, numeric: bool| {
        if !cur.is_empty() {
            if !numeric || keep_numeric {
                out.push(std::mem::take(cur));
            } else {
                cur.clear();
            }
        }
    };
    for c in text.chars() {
        let (is_alpha, is_digit) = (c.is_alphabetic(), c.is_ascii_digit());
        if is_alpha || is_digit {
            if !cur.is_empty() && cur_numeric != is_digit {
                flush(&mut cur, &mut out, cur_numeric);
            }
            cur_numeric = is_digit;
            cur.extend(c.to_lowercase());
        } else {
            flush(&mut cur, &mut out, cur_numeric);
        }
    }
    flush(&mut cur, &mut out, cur_numeric);
    out
}

/// Tokenizes, case-folds, lemmatizes and drops short tokens and stop-words.
/// Token order is preserved.
pub fn preprocess_speech(text: &str, config: &PrepConfig) -> Vec<String> {
    raw_tokens(text, config.keep_numeric)
        .into_iter()
        .filter_map(|tok| {
            let lemma = config.lemmatizer.lemmatize(&tok).into_owned();
            (lemma.chars().count() >= config.min_token_len && !config.stopwords.contains(&lemma))
                .then_some(lemma)
        })
        .collect()
}

/// Pruned vocabulary ordered by descending corpus count, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    counts: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.counts)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, counts: Vec<usize>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            terms,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// `index,term,count` sidecar for the triplet CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "term", "count"])?;
        for (i, (t, c)) in self.terms.iter().zip(&self.counts).enumerate() {
            wr.write_record([i.to_string(), t.clone(), c.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut terms = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let idx: usize = field(&rec, 0)?;
            if idx != i {
                return Err(PrepError::Malformed(format!(
                    "vocabulary index {idx} at row {i}"
                )));
            }
            terms.push(rec.get(1).unwrap_or_default().to_string());
            counts.push(field(&rec, 2)?);
        }
        Ok(Self::from_parts(terms, counts))
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| PrepError::Malformed(format!("bad field {i} in {rec:?}")))
}

/// Counts terms over all documents and keeps those with count ≥ `min_count`.
pub fn build_vocabulary<D, S>(docs: &[D], config: &PrepConfig) -> Result<Vocabulary>
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    config.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in docs.iter().flat_map(|d| d.as_ref()) {
        let tok = tok.as_ref();
        if !config.stopwords.contains(tok) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count)
        .collect();
    if kept.is_empty() {
        return Err(PrepError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (terms, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Ok(Vocabulary::from_parts(terms, counts))
}

/// Sparse document-term counts. Rows hold `(term index, count)` sorted by
/// term index; every count is positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocTermMatrix {
    pub doc_ids: Vec<String>,
    pub rows: Vec<Vec<(u32, u32)>>,
    pub dropped_docs: Vec<String>,
    pub vocabulary: Vocabulary,
}

impl DocTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_len(&self, d: usize) -> u64 {
        self.rows[d].iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn total_count(&self) -> u64 {
        (0..self.n_docs()).map(|d| self.doc_len(d)).sum()
    }

    /// Builds a matrix directly from rows, e.g. for synthetic data.
    pub fn from_rows(
        doc_ids: Vec<String>,
        rows: Vec<Vec<(u32, u32)>>,
        vocabulary: Vocabulary,
    ) -> Result<Self> {
        if doc_ids.len() != rows.len() {
            return Err(PrepError::Malformed(
                "doc id count differs from row count".into(),
            ));
        }
        let v = vocabulary.len() as u32;
        let mut rows = rows;
        for row in &mut rows {
            row.retain(|&(_, c)| c > 0);
            row.sort_unstable_by_key(|&(t, _)| t);
            if row.windows(2).any(|w| w[0].0 == w[1].0) || row.iter().any(|&(t, _)| t >= v) {
                return Err(PrepError::Malformed(
                    "duplicate or out-of-range term in row".into(),
                ));
            }
        }
        Ok(Self {
            doc_ids,
            rows,
            dropped_docs: Vec::new(),
            vocabulary,
        })
    }

    /// Triplet CSV `doc_id,term,count`, rows in matrix order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["doc_id", "term", "count"])?;
        for (id, row) in self.doc_ids.iter().zip(&self.rows) {
            for &(t, c) in row {
                wr.write_record([
                    id.as_str(),
                    self.vocabulary.term(t as usize),
                    &c.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reverses [`write_csv`](Self::write_csv). Row order follows first
    /// appearance of each doc id.
    pub fn read_csv<R: Read>(
        r: R,
        vocabulary: Vocabulary,
        dropped_docs: Vec<String>,
    ) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut doc_ids: Vec<String> = Vec::new();
        let mut rows: Vec<Vec<(u32, u32)>> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for rec in rd.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let term = rec.get(1).unwrap_or_default();
            let t = vocabulary
                .index_of(term)
                .ok_or_else(|| PrepError::Malformed(format!("term `{term}` not in vocabulary")))?;
            let c: u32 = field(&rec, 2)?;
            let d = *seen.entry(id.clone()).or_insert_with(|| {
                doc_ids.push(id);
                rows.push(Vec::new());
                rows.len() - 1
            });
            rows[d].push((t as u32, c));
        }
        let mut m = Self::from_rows(doc_ids, rows, vocabulary)?;
        m.dropped_docs = dropped_docs;
        Ok(m)
    }
}

/// A speech after preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Maps each document onto the vocabulary. Documents with no surviving
/// token go to `dropped_docs`.
pub fn vectorize(docs: &[TokenizedDoc], vocabulary: &Vocabulary) -> DocTermMatrix {
    let mut doc_ids = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for doc in docs {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for tok in &doc.tokens {
            if let Some(i) = vocabulary.index_of(tok) {
                *counts.entry(i as u32).or_default() += 1;
            }
        }
        if counts.is_empty() {
            dropped.push(doc.id.clone());
            continue;
        }
        let mut row: Vec<(u32, u32)> = counts.into_iter().collect();
        row.sort_unstable();
        doc_ids.push(doc.id.clone());
        rows.push(row);
    }
    DocTermMatrix {
        doc_ids,
        rows,
        dropped_docs: dropped,
        vocabulary: vocabulary.clone(),
    }
}

/// Token accounting for one preprocessing run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepReport {
    pub documents: usize,
    pub dropped_documents: usize,
    pub raw_tokens: u64,
    pub kept_tokens: u64,
    pub pruned_tokens: u64,
}

/// Preprocesses every included speech (in parallel when enabled) and builds
/// the matrix.
pub fn prepare(
    speeches: &[Speech],
    config: &PrepConfig,
    exec: Execution,
) -> Result<(DocTermMatrix, PrepReport)> {
    config.validate()?;
    let included: Vec<&Speech> = speeches.iter().filter(|s| s.is_included()).collect();
    let docs: Vec<TokenizedDoc> = par::map(&included, exec, |s| TokenizedDoc {
        id: s.id.clone(),
        tokens: preprocess_speech(&s.text, config),
    });
    let token_lists: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
    let vocab = build_vocabulary(&token_lists, config)?;
    let dtm = vectorize(&docs, &vocab);
    let raw: u64 = docs.iter().map(|d| d.tokens.len() as u64).sum();
    let kept = dtm.total_count();
    let report = PrepReport {
        documents: docs.len(),
        dropped_documents: dtm.dropped_docs.len(),
        raw_tokens: raw,
        kept_tokens: kept,
        pruned_tokens: raw - kept,
    };
    Ok((dtm, report))
}
