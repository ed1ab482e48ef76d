//! Corpus construction on the handcrafted fixture protocols. Expected
//! numbers were counted by hand from the files under `fixtures/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use discourse_core::corpus::*;
use discourse_core::par::Execution;
use discourse_core::pipeline::protocol_files;
use discourse_testkit::{broken_dir, overrides_file, protocols_dir};

fn overrides() -> AffiliationOverrides {
    AffiliationOverrides::parse(&fs::read_to_string(overrides_file()).unwrap()).unwrap()
}

fn build(exec: Execution) -> CorpusBuild {
    let files = protocol_files(&protocols_dir()).unwrap();
    build_corpus(&files, &overrides(), &CorpusConfig::default(), exec).unwrap()
}

// turns per protocol, in file order
const TURNS: [(&str, usize); 12] = [
    ("S/PV.4414", 5),
    ("S/PV.4443", 4),
    ("S/PV.4501", 6),
    ("S/PV.4541", 4),
    ("S/PV.4611", 5),
    ("S/PV.4774", 5),
    ("S/PV.4855", 5),
    ("S/PV.5025", 5),
    ("S/PV.5097", 5),
    ("S/PV.5279", 6),
    ("S/PV.5323", 6),
    ("S/PV.5386", 6),
];

#[test]
fn hand_counts() {
    let b = build(Execution::default());
    assert!(b.failures.is_empty(), "{:?}", b.failures);
    let s = &b.stats;
    assert_eq!(s.protocols, 12);
    assert_eq!(s.speeches_total, 62);
    assert_eq!(s.speeches_included, 44);
    assert_eq!(
        s.excluded,
        BTreeMap::from([("president".into(), 16), ("unresolved".into(), 2)])
    );
    assert_eq!(
        s.speeches_per_year,
        BTreeMap::from([
            (2001, 6),
            (2002, 10),
            (2003, 7),
            (2004, 8),
            (2005, 9),
            (2006, 4)
        ])
    );
    assert_eq!(
        s.excluded_per_year,
        BTreeMap::from([
            (2001, 3),
            (2002, 5),
            (2003, 3),
            (2004, 2),
            (2005, 3),
            (2006, 2)
        ])
    );
    assert_eq!(s.affiliation_count, 7);
    let totals: BTreeMap<&str, usize> = s
        .speeches_per_affiliation_per_year
        .iter()
        .map(|(a, years)| (a.as_str(), years.values().sum()))
        .collect();
    assert_eq!(
        totals,
        BTreeMap::from([
            ("Afghanistan", 10),
            ("France", 3),
            ("Pakistan", 3),
            ("Russian Federation", 4),
            ("UN", 12),
            ("United Kingdom", 6),
            ("United States", 6),
        ])
    );
    assert_eq!(
        s.speeches_per_affiliation_per_year["UN"],
        BTreeMap::from([
            (2001, 1),
            (2002, 2),
            (2003, 2),
            (2004, 3),
            (2005, 3),
            (2006, 1)
        ])
    );
}

#[test]
fn per_protocol_turn_counts() {
    let b = build(Execution::default());
    for (id, n) in TURNS {
        let got = b
            .corpus
            .speeches
            .iter()
            .filter(|s| s.protocol_id == id)
            .count();
        assert_eq!(got, n, "{id}");
    }
}

/// Counts column-0 markers with a plain line scan, independent of the
/// segmentation regex.
fn scan_markers(body: &str) -> usize {
    body.lines()
        .filter(|l| {
            l.starts_with("The President:")
                || HONORIFICS.iter().any(|h| {
                    l.strip_prefix(h)
                        .and_then(|r| r.strip_prefix(' '))
                        .and_then(|r| r.split_once(':'))
                        .is_some_and(|(name, _)| !name.contains('.') && !name.contains(','))
                })
        })
        .count()
}

#[test]
fn text_round_trip_and_marker_conservation() {
    let b = build(Execution::default());
    for p in &b.corpus.protocols {
        let seg = segment_speeches(&p.body).unwrap();
        assert_eq!(seg.reconstruct(), p.body, "{}", p.id);
        assert_eq!(seg.turns.len(), scan_markers(&p.body), "{}", p.id);
        let n = b
            .corpus
            .speeches
            .iter()
            .filter(|s| s.protocol_id == p.id)
            .count();
        assert_eq!(n, seg.turns.len(), "{}", p.id);
    }
    let first = b
        .corpus
        .protocols
        .iter()
        .find(|p| p.id == "S/PV.4414")
        .unwrap();
    let seg = segment_speeches(&first.body).unwrap();
    assert_eq!(seg.turns.len(), 5);
    assert!(seg.preamble.is_empty());
    let len: usize = seg
        .turns
        .iter()
        .map(|t| t.marker.len() + t.text.len())
        .sum();
    assert_eq!(len, first.body.len());
}

#[test]
fn attributions() {
    let b = build(Execution::default());
    let c = &b.corpus;
    let get = |id: &str| c.speech(id).unwrap_or_else(|| panic!("{id}"));
    assert_eq!(get("S/PV.4611/002").affiliation, "UN"); // override
    assert_eq!(get("S/PV.5097/005").affiliation, "UN"); // override
    assert_eq!(get("S/PV.4541/002").affiliation, "Pakistan"); // inline marker
    assert_eq!(get("S/PV.4774/003").affiliation, "France"); // diacritics
    assert_eq!(get("S/PV.5025/004").affiliation, "United Kingdom"); // two-word surname
    assert_eq!(get("S/PV.5386/003").affiliation, "United Kingdom"); // Baroness
    for id in ["S/PV.4611/004", "S/PV.5279/006"] {
        assert_eq!(get(id).excluded, Some(ExclusionReason::Unresolved));
        assert_eq!(get(id).affiliation, "");
    }
    let p = get("S/PV.4414/001");
    assert_eq!(p.excluded, Some(ExclusionReason::President));
    assert_eq!(p.affiliation, PRESIDENCY_AFFILIATION);
    assert!(get("S/PV.4501/002")
        .text
        .contains("quoted by Mr. Brahimi: peace"));
}

#[test]
fn without_overrides_more_speakers_are_unresolved() {
    let files = protocol_files(&protocols_dir()).unwrap();
    let b = build_corpus(
        &files,
        &AffiliationOverrides::new(),
        &CorpusConfig::default(),
        Execution::default(),
    )
    .unwrap();
    assert_eq!(b.stats.excluded["unresolved"], 4);
    assert_eq!(b.stats.speeches_included, 42);
}

#[test]
fn ordering_follows_date_protocol_ordinal() {
    let c = build(Execution::default()).corpus;
    let keys: Vec<_> = c
        .speeches
        .iter()
        .map(|s| (s.date, s.protocol_id.clone(), s.id.clone()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(c
        .speeches
        .iter()
        .all(|s| c.protocols.iter().any(|p| p.id == s.protocol_id)));
}

#[test]
fn serialization_is_deterministic_and_round_trips() {
    let a = build(Execution::Parallel).corpus;
    let b = build(Execution::Sequential).corpus;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_jsonl(&mut x).unwrap();
    b.write_jsonl(&mut y).unwrap();
    assert_eq!(x, y);
    let back = Corpus::read_jsonl(x.as_slice()).unwrap();
    assert_eq!(back, a.speeches);
}

#[test]
fn broken_files() {
    let raw = |name: &str| fs::read_to_string(broken_dir().join(name)).unwrap();
    let o = AffiliationOverrides::new();
    let cfg = CorpusConfig::default();
    assert!(matches!(
        parse_protocol(&raw("cyprus.txt"), &o, &cfg),
        Err(CorpusError::AgendaMismatch(_))
    ));
    assert!(matches!(
        parse_protocol(&raw("no-date.txt"), &o, &cfg),
        Err(CorpusError::MalformedHeader(_))
    ));
    assert!(matches!(
        parse_protocol(&raw("no-turns.txt"), &o, &cfg),
        Err(CorpusError::NoTurnsFound)
    ));
    assert!(matches!(
        parse_protocol(&raw("unterminated.txt"), &o, &cfg),
        Err(CorpusError::UnterminatedHeader)
    ));

    let files = protocol_files(&broken_dir()).unwrap();
    assert!(matches!(
        build_corpus(&files, &o, &cfg, Execution::default()),
        Err(CorpusError::NoProtocols { failures: 4 })
    ));
}

#[test]
fn partial_failures_are_reported() {
    let mut files: Vec<PathBuf> = protocol_files(&protocols_dir()).unwrap();
    files.extend(protocol_files(&broken_dir()).unwrap());
    let b = build_corpus(
        &files,
        &overrides(),
        &CorpusConfig::default(),
        Execution::default(),
    )
    .unwrap();
    assert_eq!(b.stats.protocols, 12);
    assert_eq!(b.failures.len(), 4);
    assert!(b
        .failures
        .iter()
        .any(|f| f.path.ends_with("cyprus.txt") && f.error.contains("Cyprus")));
}

#[test]
fn window_rejects_out_of_range_dates() {
    let files = protocol_files(&protocols_dir()).unwrap();
    let d = |s: &str| s.parse().unwrap();
    let cfg = CorpusConfig {
        window: Some((d("2002-01-01"), d("2004-12-31"))),
        ..CorpusConfig::default()
    };
    let b = build_corpus(&files, &overrides(), &cfg, Execution::default()).unwrap();
    assert_eq!(b.stats.protocols, 7);
    assert_eq!(b.failures.len(), 5);
}
