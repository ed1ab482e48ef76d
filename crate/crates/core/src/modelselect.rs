//! Choosing the number of topics by mean pairwise Jensen-Shannon divergence
//! between topic-word distributions (the Deveaud score) and a first-local-peak
//! rule over a scan of candidate `k`.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::textprep::DocTermMatrix;
use crate::topicmodel::{fit_lda, LdaConfig, TopicModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("distributions differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("a single topic has no pairs to compare")]
    SingleTopic,
    #[error("k range must be non-empty and strictly ascending")]
    InvalidRange,
    #[error("every k in the scan failed: {0}")]
    AllFailed(String),
    #[error("scan is empty")]
    EmptyScan,
}

pub type Result<T, E = SelectError> = std::result::Result<T, E>;

const DIST_TOL: f64 = 1e-9;

fn check_distribution(p: &[f64]) -> Result<()> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(SelectError::NotADistribution(format!("entry {x}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > DIST_TOL {
        return Err(SelectError::NotADistribution(format!("sums to {s}")));
    }
    Ok(())
}

fn kl_term(a: f64, m: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / m).ln()
    }
}

/// JSD in nats for already-validated inputs.
pub(crate) fn jsd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        s += kl_term(a, m) + kl_term(b, m);
    }
    (0.5 * s).clamp(0.0, std::f64::consts::LN_2)
}

/// Jensen-Shannon divergence with natural logarithm, bounded by ln 2.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(SelectError::DimensionMismatch(p.len(), q.len()));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    Ok(jsd_unchecked(p, q))
}

fn top_support(row: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn restricted(row: &[f64], support: &[usize]) -> Vec<f64> {
    let vals: Vec<f64> = support.iter().map(|&i| row[i]).collect();
    let s: f64 = vals.iter().sum();
    vals.into_iter().map(|x| x / s).collect()
}

/// Mean JSD over all unordered topic pairs.
///
/// With `top_n`, each pair is compared on the union of both rows' `top_n`
/// leading terms, each row renormalized over that union.
pub fn deveaud_score(phi: &[Vec<f64>], top_n: Option<usize>) -> Result<f64> {
    let k = phi.len();
    if k < 2 {
        return Err(SelectError::SingleTopic);
    }
    let tops: Option<Vec<Vec<usize>>> =
        top_n.map(|n| phi.iter().map(|r| top_support(r, n)).collect());
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            total += match &tops {
                None => jsd_unchecked(&phi[a], &phi[b]),
                Some(tops) => {
                    let union: Vec<usize> = tops[a]
                        .iter()
                        .chain(&tops[b])
                        .copied()
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    jsd_unchecked(&restricted(&phi[a], &union), &restricted(&phi[b], &union))
                }
            };
        }
    }
    Ok(total * 2.0 / (k * (k - 1)) as f64)
}

pub fn model_score(model: &TopicModel, top_n: Option<usize>) -> Result<f64> {
    deveaud_score(&model.phi, top_n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub k: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct DeveaudScan {
    pub k_values: Vec<usize>,
    pub scores: Vec<f64>,
    pub models: Option<Vec<TopicModel>>,
    pub base_config: LdaConfig,
    pub top_n: Option<usize>,
    pub failures: Vec<ScanFailure>,
}

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    pub top_n: Option<usize>,
    pub keep_models: bool,
    pub exec: Execution,
}

/// Seed used for the fit at topic count `k`.
pub fn seed_for_k(base_seed: u64, k: usize) -> u64 {
    base_seed ^ k as u64
}

/// Fits one model per `k` (concurrently when enabled) and scores each.
pub fn scan_k(
    dtm: &DocTermMatrix,
    k_values: &[usize],
    base: &LdaConfig,
    opts: &ScanOptions,
) -> Result<DeveaudScan> {
    if k_values.is_empty() || k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SelectError::InvalidRange);
    }
    let results = par::map(k_values, opts.exec, |&k| {
        let cfg = LdaConfig {
            k,
            seed: seed_for_k(base.seed, k),
            ..base.clone()
        };
        if k < 2 {
            return Err(SelectError::SingleTopic.to_string());
        }
        let model = fit_lda(dtm, &cfg).map_err(|e| e.to_string())?;
        let score = model_score(&model, opts.top_n).map_err(|e| e.to_string())?;
        Ok((score, model))
    });

    let mut scan = DeveaudScan {
        k_values: Vec::new(),
        scores: Vec::new(),
        models: opts.keep_models.then(Vec::new),
        base_config: base.clone(),
        top_n: opts.top_n,
        failures: Vec::new(),
    };
    for (&k, res) in k_values.iter().zip(results) {
        match res {
            Ok((score, model)) => {
                scan.k_values.push(k);
                scan.scores.push(score);
                if let Some(ms) = scan.models.as_mut() {
                    ms.push(model);
                }
            }
            Err(error) => scan.failures.push(ScanFailure { k, error }),
        }
    }
    if scan.k_values.is_empty() {
        let msg = scan
            .failures
            .iter()
            .map(|f| format!("k={}: {}", f.k, f.error))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(SelectError::AllFailed(msg));
    }
    Ok(scan)
}

/// Index of the first local peak: the smallest `i` whose score beats its left
/// neighbour (or has none) and is not beaten by its right neighbour (or has
/// none). Plateaus resolve to their leftmost element.
pub fn first_local_peak_index(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(SelectError::EmptyScan);
    }
    let last = scores.len() - 1;
    Ok((0..=last)
        .find(|&i| {
            (i == 0 || scores[i] > scores[i - 1]) && (i == last || scores[i] >= scores[i + 1])
        })
        .unwrap_or(last))
}

pub fn select_first_local_peak(scan: &DeveaudScan) -> Result<usize> {
    first_local_peak_index(&scan.scores).map(|i| scan.k_values[i])
}

impl DeveaudScan {
    /// `k,score` rows followed by a `# chosen_k=` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,score")?;
        for (k, s) in self.k_values.iter().zip(&self.scores) {
            writeln!(w, "{k},{s:?}")?;
        }
        if let Ok(k) = select_first_local_peak(self) {
            writeln!(w, "# chosen_k={k}")?;
        }
        Ok(())
    }

    pub fn report(&self) -> ScanReport {
        ScanReport {
            schema_version: crate::SCHEMA_VERSION,
            k_values: self.k_values.clone(),
            scores: self.scores.clone(),
            chosen_k: select_first_local_peak(self).ok(),
            top_n: self.top_n,
            base_config: self.base_config.clone(),
            failures: self.failures.clone(),
        }
    }
}

/// Plot data for the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub k_values: Vec<usize>,
    pub scores: Vec<f64>,
    pub chosen_k: Option<usize>,
    pub top_n: Option<usize>,
    pub base_config: LdaConfig,
    pub failures: Vec<ScanFailure>,
}
