//! Temporal and per-speaker aggregation of a fitted model.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Speech};
use crate::topicmodel::{topic_label, TopicModel, TopicWords};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandscapeError {
    #[error("topic {topic} out of range for k = {k}")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("model row `{0}` has no included speech in the corpus")]
    UnknownDocument(String),
}

pub type Result<T, E = LandscapeError> = std::result::Result<T, E>;

/// Default cumulative share listed per year.
pub const RANK_THRESHOLD: f64 = 0.5;
/// A speech addresses a topic when its share exceeds this.
pub const PROMINENCE_THRESHOLD: f64 = 0.20;

const CUM_EPS: f64 = 1e-12;

/// Argmax with ties going to the lowest index.
pub fn dominant_topic(theta_row: &[f64]) -> usize {
    let mut best = 0;
    for (t, &x) in theta_row.iter().enumerate() {
        if x > theta_row[best] {
            best = t;
        }
    }
    best
}

/// Matches model rows to included speeches.
fn aligned<'a>(corpus: &'a Corpus, model: &TopicModel) -> Result<Vec<&'a Speech>> {
    let by_id: HashMap<&str, &Speech> = corpus.included().map(|s| (s.id.as_str(), s)).collect();
    model
        .doc_ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| LandscapeError::UnknownDocument(id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSeries {
    pub k: usize,
    pub years: Vec<i32>,
    /// `share[y][t]` for `years[y]`.
    pub share: Vec<Vec<f64>>,
    pub doc_counts: Vec<usize>,
}

impl LandscapeSeries {
    /// Shares from per-year dominant-topic labels. Years without documents
    /// are omitted.
    pub fn from_labels(k: usize, labels: impl IntoIterator<Item = (i32, usize)>) -> Self {
        let mut counts: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (year, t) in labels {
            counts.entry(year).or_insert_with(|| vec![0; k])[t] += 1;
        }
        let mut s = Self {
            k,
            years: Vec::new(),
            share: Vec::new(),
            doc_counts: Vec::new(),
        };
        for (year, c) in counts {
            let n: usize = c.iter().sum();
            s.years.push(year);
            s.doc_counts.push(n);
            s.share
                .push(c.iter().map(|&x| x as f64 / n as f64).collect());
        }
        s
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }
}

/// Per year, the fraction of speeches whose dominant topic is `t`.
pub fn yearly_shares(corpus: &Corpus, model: &TopicModel) -> Result<LandscapeSeries> {
    let speeches = aligned(corpus, model)?;
    Ok(LandscapeSeries::from_labels(
        model.k(),
        speeches
            .iter()
            .zip(&model.theta)
            .map(|(s, row)| (s.year, dominant_topic(row))),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub topic: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankYear {
    pub year: i32,
    pub rows: Vec<RankRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub threshold: f64,
    pub years: Vec<RankYear>,
}

/// Topics in descending share order (ties to the lower index), until
/// the cumulative share reaches `threshold`.
pub fn rank_shares(shares: &[f64], threshold: f64) -> Vec<RankRow> {
    let mut idx: Vec<usize> = (0..shares.len()).collect();
    idx.sort_by(|&a, &b| shares[b].total_cmp(&shares[a]).then(a.cmp(&b)));
    let mut rows = Vec::new();
    let mut cum = 0.0;
    for t in idx {
        if cum >= threshold - CUM_EPS {
            break;
        }
        cum += shares[t];
        rows.push(RankRow {
            topic: t,
            share: shares[t],
        });
    }
    rows
}

pub fn rank_table(series: &LandscapeSeries, threshold: f64) -> RankTable {
    RankTable {
        threshold,
        years: series
            .years
            .iter()
            .zip(&series.share)
            .map(|(&year, shares)| RankYear {
                year,
                rows: rank_shares(shares, threshold),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProminentSpeech {
    pub id: String,
    pub score: f64,
    pub affiliation: String,
    pub speaker_name: String,
    pub year: i32,
}

/// Speeches with `θ[topic] > threshold`, most relevant first, ties by id.
pub fn prominent_speeches(
    model: &TopicModel,
    corpus: &Corpus,
    topic: usize,
    threshold: f64,
) -> Result<Vec<ProminentSpeech>> {
    if topic >= model.k() {
        return Err(LandscapeError::TopicOutOfRange {
            topic,
            k: model.k(),
        });
    }
    let speeches = aligned(corpus, model)?;
    let mut out: Vec<ProminentSpeech> = speeches
        .iter()
        .zip(&model.theta)
        .filter(|(_, row)| row[topic] > threshold)
        .map(|(s, row)| ProminentSpeech {
            id: s.id.clone(),
            score: row[topic],
            affiliation: s.affiliation.clone(),
            speaker_name: s.speaker_name.clone(),
            year: s.year,
        })
        .collect();
    sort_prominent(&mut out);
    Ok(out)
}

pub(crate) fn sort_prominent(list: &mut [ProminentSpeech]) {
    list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
}

/// Summed θ per affiliation and topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerTopicWeights {
    pub k: usize,
    pub weights: BTreeMap<String, Vec<f64>>,
    pub speech_counts: BTreeMap<String, usize>,
}

pub fn speaker_topic_weights(corpus: &Corpus, model: &TopicModel) -> Result<SpeakerTopicWeights> {
    let speeches = aligned(corpus, model)?;
    let k = model.k();
    let mut weights: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (s, row) in speeches.iter().zip(&model.theta) {
        let w = weights
            .entry(s.affiliation.clone())
            .or_insert_with(|| vec![0.0; k]);
        for (acc, x) in w.iter_mut().zip(row) {
            *acc += x;
        }
        *counts.entry(s.affiliation.clone()).or_default() += 1;
    }
    Ok(SpeakerTopicWeights {
        k,
        weights,
        speech_counts: counts,
    })
}

impl SpeakerTopicWeights {
    /// `affiliation,topic,weight` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["affiliation", "topic", "weight"])?;
        for (a, ws) in &self.weights {
            for (t, x) in ws.iter().enumerate() {
                wr.write_record([a.clone(), t.to_string(), format!("{x:?}")])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub id: usize,
    pub label: String,
    pub keywords: Vec<String>,
}

/// Landscape export consumed by the bundle and the explorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeExport {
    pub schema_version: u32,
    pub years: Vec<i32>,
    pub topics: Vec<TopicSummary>,
    pub shares: Vec<Vec<f64>>,
    pub doc_counts: Vec<usize>,
    pub rank_table: RankTable,
    pub topic_keywords: Vec<Vec<String>>,
}

impl LandscapeExport {
    pub fn new(series: &LandscapeSeries, rank: &RankTable, keywords: &[TopicWords]) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            years: series.years.clone(),
            topics: (0..series.k)
                .map(|t| TopicSummary {
                    id: t,
                    label: topic_label(t),
                    keywords: keywords.get(t).map(|k| k.words.clone()).unwrap_or_default(),
                })
                .collect(),
            shares: series.share.clone(),
            doc_counts: series.doc_counts.clone(),
            rank_table: rank.clone(),
            topic_keywords: keywords.iter().map(|k| k.words.clone()).collect(),
        }
    }

    /// `year,topic,share,doc_count`.
    pub fn write_shares_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["year", "topic", "share", "doc_count"])?;
        for ((y, shares), n) in self.years.iter().zip(&self.shares).zip(&self.doc_counts) {
            for (t, s) in shares.iter().enumerate() {
                wr.write_record([
                    y.to_string(),
                    topic_label(t),
                    format!("{s:?}"),
                    n.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// `year,rank,topic,share,cumulative`.
    pub fn write_rank_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["year", "rank", "topic", "share", "cumulative"])?;
        for y in &self.rank_table.years {
            let mut cum = 0.0;
            for (r, row) in y.rows.iter().enumerate() {
                cum += row.share;
                wr.write_record([
                    y.year.to_string(),
                    (r + 1).to_string(),
                    topic_label(row.topic),
                    format!("{:?}", row.share),
                    format!("{cum:?}"),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topicmodel::LdaConfig;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn speech(id: &str, year: i32, aff: &str) -> Speech {
        Speech {
            id: id.into(),
            protocol_id: "P".into(),
            date: NaiveDate::from_ymd_opt(year, 1, 1).unwrap(),
            year,
            speaker_name: "Mr. X".into(),
            affiliation: aff.into(),
            text: "t".into(),
            excluded: None,
        }
    }

    fn model(ids: &[&str], theta: Vec<Vec<f64>>) -> TopicModel {
        let k = theta[0].len();
        TopicModel {
            config: LdaConfig::with_k(k),
            doc_ids: ids.iter().map(|s| s.to_string()).collect(),
            terms: vec![],
            z: vec![],
            theta,
            phi: vec![],
        }
    }

    #[test]
    fn dominant_examples() {
        assert_eq!(dominant_topic(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(dominant_topic(&[0.5, 0.5]), 0);
        assert_eq!(dominant_topic(&[0.25; 4]), 0);
    }

    #[test]
    fn shares_count_dominant_labels() {
        let s = LandscapeSeries::from_labels(10, [(2005, 8), (2005, 8), (2005, 1)]);
        assert_eq!(s.years, [2005]);
        assert!((s.share[0][8] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.share[0][1] - 1.0 / 3.0).abs() < 1e-15);
        let s = LandscapeSeries::from_labels(3, [(2001, 2)]);
        assert_eq!(s.share[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn shares_skip_excluded_and_unknown_rows() {
        let mut excluded = speech("b", 2002, "B");
        excluded.excluded = Some(crate::corpus::ExclusionReason::President);
        let corpus = Corpus::new(vec![], vec![speech("a", 2002, "A"), excluded]);
        let m = model(&["a"], vec![vec![0.1, 0.9]]);
        let s = yearly_shares(&corpus, &m).unwrap();
        assert_eq!(s.doc_counts, [1]);
        let bad = model(&["b"], vec![vec![0.1, 0.9]]);
        assert_eq!(
            yearly_shares(&corpus, &bad),
            Err(LandscapeError::UnknownDocument("b".into()))
        );
    }

    fn table3_2001() -> Vec<f64> {
        // T1..T10; T4 .27, T9 .20, T2 .17, remaining .36 below .17
        vec![0.10, 0.17, 0.08, 0.27, 0.06, 0.05, 0.04, 0.02, 0.20, 0.01]
    }

    #[test]
    fn rank_rows_from_published_shares() {
        let rows = rank_shares(&table3_2001(), 0.5);
        let topics: Vec<String> = rows.iter().map(|r| topic_label(r.topic)).collect();
        assert_eq!(topics, ["T4", "T9", "T2"]);
        let mut s = vec![0.31 / 9.0; 10];
        s[7] = 0.69;
        let rows = rank_shares(&s, 0.5);
        assert_eq!(rows.len(), 1);
        assert_eq!(topic_label(rows[0].topic), "T8");
        let rows = rank_shares(&[0.5, 0.5], 0.5);
        assert_eq!(
            rows,
            [RankRow {
                topic: 0,
                share: 0.5
            }]
        );
    }

    #[test]
    fn prominence_is_strict() {
        let corpus = Corpus::new(
            vec![],
            vec![
                speech("s1", 2001, "A"),
                speech("s2", 2001, "A"),
                speech("s3", 2001, "B"),
            ],
        );
        let m = model(
            &["s1", "s2", "s3"],
            vec![vec![0.35, 0.65], vec![0.19, 0.81], vec![0.21, 0.79]],
        );
        let ids: Vec<String> = prominent_speeches(&m, &corpus, 0, 0.20)
            .unwrap()
            .into_iter()
            .map(|p| p.id)
            .collect();
        assert_eq!(ids, ["s1", "s3"]);
        let all = prominent_speeches(&m, &corpus, 0, 0.0).unwrap();
        assert_eq!(all.len(), 3);
        let m2 = model(&["s1", "s2", "s3"], vec![vec![0.2, 0.8]; 3]);
        assert!(prominent_speeches(&m2, &corpus, 0, 0.2).unwrap().is_empty());
        assert!(matches!(
            prominent_speeches(&m, &corpus, 2, 0.2),
            Err(LandscapeError::TopicOutOfRange { .. })
        ));
    }

    #[test]
    fn weights_sum_theta() {
        let corpus = Corpus::new(
            vec![],
            vec![
                speech("a1", 2001, "A"),
                speech("a2", 2002, "A"),
                speech("b1", 2001, "B"),
            ],
        );
        let m = model(
            &["a1", "a2", "b1"],
            vec![vec![0.6, 0.4], vec![0.2, 0.8], vec![0.3, 0.7]],
        );
        let w = speaker_topic_weights(&corpus, &m).unwrap();
        let a = &w.weights["A"];
        assert!((a[0] - 0.8).abs() < 1e-12 && (a[1] - 1.2).abs() < 1e-12);
        assert_eq!(w.weights["B"], vec![0.3, 0.7]);
        assert_eq!(w.speech_counts["A"], 2);
    }

    fn shares_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0u32..20, 2..12).prop_filter_map("empty", |c| {
            let n: u32 = c.iter().sum();
            (n > 0).then(|| c.iter().map(|&x| x as f64 / n as f64).collect())
        })
    }

    proptest! {
        #[test]
        fn rank_table_is_minimal(shares in shares_strategy(), th in 0.05f64..1.0) {
            let rows = rank_shares(&shares, th);
            let cum: f64 = rows.iter().map(|r| r.share).sum();
            prop_assert!(cum >= th - 1e-9);
            let without_last: f64 = rows[..rows.len() - 1].iter().map(|r| r.share).sum();
            prop_assert!(without_last < th);
            prop_assert!(rows.windows(2).all(|w| w[0].share >= w[1].share));
        }

        #[test]
        fn prominence_monotone(theta in prop::collection::vec(0.0f64..1.0, 1..30), lo in 0.0f64..0.5, d in 0.0f64..0.5) {
            let ids: Vec<String> = (0..theta.len()).map(|i| format!("s{i:02}")).collect();
            let speeches: Vec<Speech> = ids.iter().map(|i| speech(i, 2001, "A")).collect();
            let corpus = Corpus::new(vec![], speeches);
            let rows: Vec<Vec<f64>> = theta.iter().map(|&x| vec![x, 1.0 - x]).collect();
            let m = model(&ids.iter().map(String::as_str).collect::<Vec<_>>(), rows);
            let low: Vec<String> = prominent_speeches(&m, &corpus, 0, lo).unwrap().into_iter().map(|p| p.id).collect();
            let high: Vec<String> = prominent_speeches(&m, &corpus, 0, lo + d).unwrap().into_iter().map(|p| p.id).collect();
            prop_assert!(high.iter().all(|h| low.contains(h)));
        }
    }
}
