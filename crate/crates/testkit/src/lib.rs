//! Fixture locations, a planted-topic corpus generator and the matching
//! oracle used to compare fitted topics with planted ones.

use std::path::PathBuf;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn protocols_dir() -> PathBuf {
    fixtures_dir().join("protocols")
}

pub fn broken_dir() -> PathBuf {
    fixtures_dir().join("broken")
}

pub fn overrides_file() -> PathBuf {
    fixtures_dir().join("overrides.txt")
}

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    pub docs: usize,
    pub doc_len: usize,
    /// Dirichlet concentration of each document's topic mixture.
    pub doc_alpha: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            topics: 3,
            words_per_topic: 10,
            docs: 200,
            doc_len: 100,
            doc_alpha: 0.1,
        }
    }
}

/// Documents drawn from topics with disjoint word supports.
#[derive(Debug, Clone)]
pub struct Planted {
    pub terms: Vec<String>,
    pub doc_ids: Vec<String>,
    /// Sparse `(term, count)` rows sorted by term.
    pub rows: Vec<Vec<(u32, u32)>>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
}

/// Word weights inside a topic fall off as `1/(rank+1)`.
pub fn planted_corpus(spec: &PlantedSpec, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, w) = (spec.topics, spec.words_per_topic);
    let v = k * w;
    let terms: Vec<String> = (0..v).map(|i| format!("t{}w{}", i / w, i % w)).collect();
    let harmonic: f64 = (0..w).map(|r| 1.0 / (r + 1) as f64).sum();
    let phi: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            (0..v)
                .map(|i| {
                    if i / w == t {
                        1.0 / ((i % w + 1) as f64 * harmonic)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let word_dists: Vec<WeightedIndex<f64>> = phi
        .iter()
        .map(|p| WeightedIndex::new(p).expect("valid weights"))
        .collect();
    let gamma = Gamma::new(spec.doc_alpha, 1.0).expect("valid concentration");

    let mut rows = Vec::with_capacity(spec.docs);
    let mut theta = Vec::with_capacity(spec.docs);
    for _ in 0..spec.docs {
        // normalized gammas are Dirichlet distributed
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let sum: f64 = g.iter().sum();
        let th: Vec<f64> = if sum > 0.0 {
            g.iter().map(|x| x / sum).collect()
        } else {
            vec![1.0 / k as f64; k]
        };
        let topic_dist = WeightedIndex::new(&th).expect("valid mixture");
        let mut counts = vec![0u32; v];
        for _ in 0..spec.doc_len {
            let t = topic_dist.sample(&mut rng);
            counts[word_dists[t].sample(&mut rng)] += 1;
        }
        rows.push(
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (i as u32, c))
                .collect(),
        );
        theta.push(th);
    }
    Planted {
        terms,
        doc_ids: (0..spec.docs).map(|d| format!("d{d:04}")).collect(),
        rows,
        phi,
        theta,
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Matching of fitted to planted topics minimizing the summed TV distance,
/// by exhaustive search. Returns `perm` with fitted topic `perm[t]` matched
/// to planted topic `t`, and the per-topic distances.
pub fn match_topics(fitted: &[Vec<f64>], planted: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    assert_eq!(fitted.len(), planted.len(), "topic counts differ");
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for perm in permutations(planted.len()) {
        let d: Vec<f64> = perm
            .iter()
            .enumerate()
            .map(|(t, &f)| total_variation(&fitted[f], &planted[t]))
            .collect();
        let s: f64 = d.iter().sum();
        if best.as_ref().is_none_or(|b| s < b.0) {
            best = Some((s, perm, d));
        }
    }
    let (_, perm, d) = best.expect("at least one permutation");
    (perm, d)
}
