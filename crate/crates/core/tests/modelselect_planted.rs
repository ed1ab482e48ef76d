//! Deveaud scan on a planted corpus.

use std::f64::consts::LN_2;

use discourse_core::modelselect::*;
use discourse_core::par::Execution;
use discourse_core::textprep::{DocTermMatrix, Vocabulary};
use discourse_core::topicmodel::LdaConfig;
use discourse_testkit::{planted_corpus, PlantedSpec};

fn planted_dtm(seed: u64) -> DocTermMatrix {
    let p = planted_corpus(&PlantedSpec::default(), seed);
    let vocab = Vocabulary::from_parts(p.terms.clone(), vec![1; p.terms.len()]);
    DocTermMatrix::from_rows(p.doc_ids, p.rows, vocab).unwrap()
}

fn base(seed: u64) -> LdaConfig {
    LdaConfig {
        seed,
        average_last_m: 200,
        ..LdaConfig::default()
    }
}

#[test]
fn jsd_reference_values() {
    let p = [0.2, 0.3, 0.5];
    assert_eq!(jensen_shannon(&p, &p).unwrap(), 0.0);
    assert!(
        (jensen_shannon(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.25, 0.75]).unwrap() - LN_2).abs()
            < 1e-12
    );
    // symmetric two-point case: m = (0.5, 0.5), JSD = ln2 - H(0.9, 0.1)
    let h = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
    let got = jensen_shannon(&[0.9, 0.1], &[0.1, 0.9]).unwrap();
    assert!((got - (LN_2 - h)).abs() < 1e-15);
}

#[test]
fn planted_scan_peaks_at_three() {
    let dtm = planted_dtm(100);
    let ks: Vec<usize> = (2..=8).collect();
    let scan = scan_k(&dtm, &ks, &base(2017), &ScanOptions::default()).unwrap();
    assert_eq!(scan.k_values, ks);
    assert!(scan.failures.is_empty());
    assert_eq!(select_first_local_peak(&scan).unwrap(), 3);
    assert!(scan.scores.iter().all(|&s| s > 0.0 && s <= LN_2 + 1e-12));

    let report = scan.report();
    assert_eq!(report.chosen_k, Some(3));
    let mut csv = Vec::new();
    scan.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("k,score\n2,"));
    assert!(csv.ends_with("# chosen_k=3\n"));
}

#[test]
fn execution_modes_agree_and_models_match_seeds() {
    let dtm = planted_dtm(101);
    let ks = [2, 3, 4];
    let cfg = LdaConfig {
        iterations: 200,
        burn_in: 50,
        average_last_m: 20,
        ..base(5)
    };
    let opts = |exec| ScanOptions {
        keep_models: true,
        exec,
        ..ScanOptions::default()
    };
    let a = scan_k(&dtm, &ks, &cfg, &opts(Execution::Parallel)).unwrap();
    let b = scan_k(&dtm, &ks, &cfg, &opts(Execution::Sequential)).unwrap();
    assert_eq!(a.scores, b.scores);
    let models = a.models.unwrap();
    for (m, &k) in models.iter().zip(&ks) {
        assert_eq!(m.k(), k);
        assert_eq!(m.config.seed, seed_for_k(5, k));
        assert_eq!(
            model_score(m, None).unwrap(),
            a.scores[ks.iter().position(|&x| x == k).unwrap()]
        );
    }
}

#[test]
fn top_n_scoring_stays_bounded() {
    let dtm = planted_dtm(102);
    let cfg = LdaConfig {
        iterations: 200,
        burn_in: 50,
        average_last_m: 20,
        ..base(3)
    };
    let scan = scan_k(
        &dtm,
        &[2, 3, 4],
        &cfg,
        &ScanOptions {
            top_n: Some(5),
            ..ScanOptions::default()
        },
    )
    .unwrap();
    assert!(scan
        .scores
        .iter()
        .all(|&s| (0.0..=LN_2 + 1e-12).contains(&s)));
}

#[test]
fn bad_ranges_are_rejected() {
    let dtm = planted_dtm(103);
    let cfg = base(1);
    assert!(matches!(
        scan_k(&dtm, &[], &cfg, &ScanOptions::default()),
        Err(SelectError::InvalidRange)
    ));
    assert!(matches!(
        scan_k(&dtm, &[3, 2], &cfg, &ScanOptions::default()),
        Err(SelectError::InvalidRange)
    ));
}
