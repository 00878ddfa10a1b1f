mod common;

use std::collections::BTreeMap;

use lfag_core::cleaner::{clean, DropReason, Stage};
use lfag_core::pipelines::{build_local_index, retrieve_local, run_pipeline, PipelineInputs, PipelineMode};
use lfag_core::providers::Providers;
use lfag_core::text::tokens;

#[test]
fn two_seeded_runs_are_byte_identical() {
    let corpus = common::Corpus::materialize();
    let out = tempfile::tempdir().unwrap();
    common::full_run(&corpus, &out.path().join("a"), 7);
    common::full_run(&corpus, &out.path().join("b"), 7);
    let (a, b) = (common::snapshot(&out.path().join("a")), common::snapshot(&out.path().join("b")));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a.len() >= 3 + 4 + 3 * 4 * 2, "only {} files written", a.len());
    for (path, bytes) in &a {
        assert!(bytes == &b[path], "{} differs between runs", path.display());
    }
}

#[test]
fn cleaning_is_a_fixpoint() {
    let corpus = common::Corpus::materialize();
    let built = common::build(&corpus, 7);
    let cfg = common::fixture_cleaner_config();
    let providers = Providers::fallback();
    let (once, _) = clean(built.dataset, Some(&built.articles), &cfg, &providers, None).map_err(|a| a.error).unwrap();
    assert!(!once.qa.is_empty() && !once.abstract_sets.is_empty());
    let (twice, report) = clean(once.clone(), Some(&built.articles), &cfg, &providers, None).map_err(|a| a.error).unwrap();
    assert_eq!(once, twice);
    assert_eq!(report.total_dropped(), 0);
    assert_eq!(report.abstracts_removed, 0);
}

#[test]
fn engineered_fixture_drops_one_record_per_reason() {
    let (data, articles) = common::engineered_fixture();
    let input = data.len();
    let (out, report) = clean(data, Some(&articles), &common::fixture_cleaner_config(), &Providers::fallback(), None)
        .map_err(|a| a.error)
        .unwrap();
    let expected: BTreeMap<DropReason, usize> = [
        DropReason::RichnessWords,
        DropReason::RichnessRefs,
        DropReason::Relevance,
        DropReason::Coverage,
        DropReason::ShortAnswer,
    ]
    .into_iter()
    .map(|r| (r, 1))
    .collect();
    assert_eq!(report.reason_counts(), expected);
    assert_eq!(out.len() + report.total_dropped(), input);
    assert_eq!((out.outlines.len(), out.abstract_sets.len(), out.qa.len()), (1, 1, 1));
    let stages: Vec<_> = report.stages.iter().map(|s| (s.stage, s.input, s.kept, s.dropped)).collect();
    assert_eq!(
        stages,
        vec![
            (Stage::Richness, 8, 6, 2),
            (Stage::Relevance, 6, 5, 1),
            (Stage::Coverage, 5, 4, 1),
            (Stage::AnswerLength, 4, 3, 1),
        ]
    );
    for s in &report.stages {
        assert_eq!(s.kept + s.dropped, s.input);
    }
    assert!(report.complete);
}

#[test]
fn direct_mode_cites_nothing_and_grounded_cites_only_supplied_urls() {
    let corpus = common::Corpus::materialize();
    let built = common::build(&corpus, 3);
    let providers = Providers::fallback();
    let cfg = common::seeded_pipeline_config(3);
    let index = build_local_index(&built.dataset.abstract_sets, Default::default()).unwrap();
    let fetcher = common::offline_fetcher();
    for article in &built.articles {
        let sets: Vec<_> = built.dataset.abstract_sets.iter().filter(|s| s.topic == article.topic).cloned().collect();
        let all = PipelineInputs { index: Some(&index), fetcher: Some(&fetcher), grounded: Some(&sets) };
        let direct = run_pipeline(&article.topic, PipelineMode::Direct, &cfg, &providers, all).unwrap();
        assert!(direct.citations().is_empty());
        assert!(direct.sections.iter().all(|s| s.retrieval_trace.is_empty()));
        assert!(!direct.plain_text().is_empty());

        let supplied: Vec<&str> = sets.iter().flat_map(|s| s.abstracts.iter().map(|a| a.source_url.as_str())).collect();
        let grounded = run_pipeline(&article.topic, PipelineMode::Grounded, &cfg, &providers, all).unwrap();
        assert!(!grounded.citations().is_empty(), "{} cites nothing", article.topic);
        for url in grounded.citations() {
            assert!(supplied.contains(&url), "{url} was not supplied");
        }

        let local = run_pipeline(&article.topic, PipelineMode::Local, &cfg, &providers, all).unwrap();
        let urls = index.urls();
        assert!(local.citations().iter().all(|u| urls.contains(u)));
    }
}

#[test]
fn local_retrieval_matches_the_naive_ranker() {
    let corpus = common::Corpus::materialize();
    let built = common::build(&corpus, 1);
    let index = build_local_index(&built.dataset.abstract_sets, Default::default()).unwrap();
    assert!(index.len() <= 100);
    let docs: Vec<Vec<String>> = index.documents.iter().map(|d| tokens(&d.text)).collect();
    for query in ["AlphaGo Fan Hui match", "Marie Curie Nobel Prize", "Seoul campus Gwanak 1975", "unrelated words"] {
        let got = retrieve_local(query, &index, 4).unwrap();
        let want = common::naive::top_k(&tokens(query), &docs, 4);
        assert_eq!(got.len(), want.len());
        for (a, (d, _)) in got.iter().zip(&want) {
            assert_eq!(a.text, index.documents[*d].text, "query `{query}`");
            let rel = common::naive::bm25_normalized(&tokens(query), &docs, *d);
            assert!((a.relevance.unwrap() - rel).abs() < 1e-9);
        }
    }
}
