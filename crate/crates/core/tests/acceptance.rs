//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails. Tolerances are fixed here and nowhere else.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::SeedableRng;

use common::naive;
use lfag_core::cleaner::{clean, DropReason};
use lfag_core::corpus::{validate_dataset, DatasetPaths, Decoder, RecordKind};
use lfag_core::hdacr::{detect, HdacrConfig, MatchKind, Verdict};
use lfag_core::metrics::{heading_soft_recall, rouge, MetricsConfig, RougeLVariant};
use lfag_core::pipelines::{build_local_index, outline_from_levels, retrieve_local, run_pipeline, PipelineInputs, PipelineMode};
use lfag_core::providers::{HashEmbedder, Providers};
use lfag_core::text::{tokens, Lang};

const GAMMA_TOL: f64 = 1e-9;
const LAW_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;
const SOFT_RECALL_TOL: f64 = 1e-9;
const HDACR_BUDGET: Duration = Duration::from_secs(5);
const SUITE_BUDGET: Duration = Duration::from_secs(120);
const HDACR_INSTANCES: usize = 200;
const RANDOM_OUTLINES: usize = 100;
const THRESHOLD: f64 = 0.6;
const RELEASED_COUNTS: [(RecordKind, usize); 3] =
    [(RecordKind::Qa, 6_502), (RecordKind::AbstractSet, 9_647), (RecordKind::Outline, 52_045)];

enum Outcome {
    Pass(String),
    Skip(String),
}

type Check = Result<Outcome, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn hdacr_oracle() -> Check {
    let providers = Providers::fallback();
    let cfg = HdacrConfig { threshold: THRESHOLD, ..Default::default() };
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let started = Instant::now();
    let mut entities = 0;
    for i in 0..HDACR_INSTANCES {
        let (g, r) = naive::random_instance(&mut rng);
        let report = detect(&g, &r, &cfg, &providers).map_err(|e| e.to_string())?;
        let (present, expected) = naive::detect(&g, &r, THRESHOLD);
        ensure((report.verdict == Verdict::HallucinationPresent) == present, || format!("verdict differs on instance {i}"))?;
        ensure(report.scores.len() == expected.len(), || format!("entity count differs on instance {i}"))?;
        for (s, (surface, gamma)) in report.scores.iter().zip(&expected) {
            ensure(&s.entity.surface == surface && (s.gamma - gamma).abs() <= GAMMA_TOL, || {
                format!("instance {i} `{surface}`: {} vs {gamma}", s.gamma)
            })?;
        }
        entities += expected.len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed < HDACR_BUDGET, || format!("{HDACR_INSTANCES} instances took {elapsed:?}"))?;

    let r = "AlphaGo defeated Fan Hui in London during October 2015.";
    let covered = detect("Fan Hui lost to AlphaGo in London.", r, &cfg, &providers).map_err(|e| e.to_string())?;
    ensure(covered.verdict == Verdict::NoHallucination, || "covered text was flagged".into())?;
    let flipped =
        detect("Fan Hui lost to AlphaGo in London. Zbigniew Quarrington watched.", r, &cfg, &providers).map_err(|e| e.to_string())?;
    ensure(flipped.verdict == Verdict::HallucinationPresent && flipped.unverifiable.len() == 1, || {
        "an unsupported entity did not flip the verdict".into()
    })?;
    Ok(Outcome::Pass(format!("{HDACR_INSTANCES} instances, {entities} entities, {elapsed:.2?}")))
}

fn weighted_score_law() -> Check {
    let providers = Providers::fallback();
    let mut rng = StdRng::seed_from_u64(0x1a3);
    let mut soft = 0;
    for _ in 0..HDACR_INSTANCES {
        let (g, r) = naive::random_instance(&mut rng);
        let report = detect(&g, &r, &HdacrConfig::default(), &providers).map_err(|e| e.to_string())?;
        for s in report.scores.iter().filter(|s| s.kind == MatchKind::Soft) {
            let (a, b) = (s.gamma_sbert.unwrap_or(f64::NAN), s.gamma_bm25.unwrap_or(f64::NAN));
            ensure((s.gamma - (a + b) / 2.0).abs() <= LAW_TOL, || format!("`{}`: {} vs ({a}+{b})/2", s.entity.surface, s.gamma))?;
            soft += 1;
        }
    }
    ensure(soft > 0, || "no soft matches exercised".into())?;
    Ok(Outcome::Pass(format!("{soft} soft matches")))
}

fn metric_oracles() -> Check {
    let s = rouge("the cat sat", "the cat ran", Lang::En, RougeLVariant::Text).map_err(|e| e.to_string())?;
    for (name, got, want) in [("rouge1", s.rouge1.f1, 2.0 / 3.0), ("rouge2", s.rouge2.f1, 0.5), ("rougeL", s.rouge_l.f1, 2.0 / 3.0)] {
        ensure((got - want).abs() <= METRIC_TOL, || format!("{name} f1 {got}, expected {want}"))?;
    }
    let text = "Marie Curie worked in Paris. She won the Nobel Prize in 1903.";
    let same = rouge(text, text, Lang::En, RougeLVariant::Text).map_err(|e| e.to_string())?;
    for prf in [same.rouge1, same.rouge2, same.rouge_l] {
        ensure(prf.precision == 1.0 && prf.recall == 1.0 && prf.f1 == 1.0, || "identical texts scored below 1".into())?;
    }
    let providers = Providers::fallback();
    let er = lfag_core::metrics::article_entity_recall(text, text, &providers.ner, &MetricsConfig::default()).map_err(|e| e.to_string())?;
    ensure(er.value == 1.0, || "identical texts: entity recall below 1".into())?;

    let mut rng = StdRng::seed_from_u64(0x0a71);
    let words = ["History", "Career", "Legacy", "Awards", "Campus", "Research", "Rankings", "Early life"];
    let embedder = HashEmbedder::default();
    for i in 0..RANDOM_OUTLINES {
        use rand::Rng;
        let n = rng.gen_range(1..12);
        let items: Vec<(u32, String)> =
            (0..n).map(|_| (rng.gen_range(1..=3), format!("{} {}", words[rng.gen_range(0..words.len())], rng.gen_range(0..4)))).collect();
        let o = outline_from_levels("Topic", Lang::En, &items, "random");
        let v = heading_soft_recall(&o, &o, &embedder, &MetricsConfig::default()).map_err(|e| e.to_string())?;
        ensure((v - 1.0).abs() <= SOFT_RECALL_TOL, || format!("outline {i}: self recall {v}"))?;
    }
    Ok(Outcome::Pass(format!("cat fixture, identity, {RANDOM_OUTLINES} self-recall outlines")))
}

fn determinism() -> Check {
    let corpus = common::Corpus::materialize();
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (out.path().join("a"), out.path().join("b"));
    common::full_run(&corpus, &a, 7);
    common::full_run(&corpus, &b, 7);
    let (sa, sb) = (common::snapshot(&a), common::snapshot(&b));
    ensure(sa == sb, || {
        let diff: Vec<_> = sa.keys().filter(|k| sb.get(*k) != sa.get(*k)).map(|k| k.display().to_string()).collect();
        format!("outputs differ: {diff:?}")
    })?;

    let built = common::build(&corpus, 7);
    let cfg = common::fixture_cleaner_config();
    let providers = Providers::fallback();
    let (once, _) = clean(built.dataset, Some(&built.articles), &cfg, &providers, None).map_err(|a| a.error.to_string())?;
    let (twice, rep) = clean(once.clone(), Some(&built.articles), &cfg, &providers, None).map_err(|a| a.error.to_string())?;
    ensure(once == twice && rep.total_dropped() == 0, || "clean is not a fixpoint on its output".into())?;

    let (data, articles) = common::engineered_fixture();
    let input = data.len();
    let (kept, report) = clean(data, Some(&articles), &cfg, &providers, None).map_err(|a| a.error.to_string())?;
    let counts = report.reason_counts();
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
    ensure(counts == expected, || format!("reason counts {counts:?}"))?;
    ensure(kept.len() + report.total_dropped() == input, || "kept + dropped != input".into())?;
    ensure(report.stages.iter().all(|s| s.kept + s.dropped == s.input), || "a stage's accounting is off".into())?;
    Ok(Outcome::Pass(format!("{} files identical, fixpoint, {input} engineered records accounted", sa.len())))
}

fn schema_validation() -> Check {
    let corpus = common::Corpus::materialize();
    let built = common::build(&corpus, 7);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    built.dataset.write_dir(dir.path()).map_err(|e| e.to_string())?;
    let report = validate_dataset(&DatasetPaths::in_dir(dir.path()), &Decoder::default()).map_err(|e| e.to_string())?;
    let got: Vec<usize> = [RecordKind::Outline, RecordKind::AbstractSet, RecordKind::Qa].iter().map(|k| report.count(*k).valid).collect();
    ensure(got == [3, 12, 11] && report.violation_count() == 0, || format!("fixture counts {got:?}, {} violations", report.violation_count()))?;

    let qa = dir.path().join("short.jsonl");
    std::fs::write(&qa, common::qa_lines_with_one_short_answer().join("\n")).map_err(|e| e.to_string())?;
    let report = validate_dataset(&DatasetPaths { qa: Some(qa), ..Default::default() }, &Decoder::default()).map_err(|e| e.to_string())?;
    let v = &report.violations[&RecordKind::Qa];
    ensure(report.count(RecordKind::Qa).lines == 10 && v.len() == 1 && v[0].rule == "E_SHORT_ANSWER", || {
        format!("short-answer fixture: {:?}", report.count(RecordKind::Qa))
    })?;
    Ok(Outcome::Pass("fixture counts 3/12/11, one E_SHORT_ANSWER in ten".into()))
}

fn released_counts() -> Check {
    let Some(dir) = std::env::var_os("DEFINE_DATASET_DIR").map(PathBuf::from) else {
        return Ok(Outcome::Skip("DEFINE_DATASET_DIR not set".into()));
    };
    let report = validate_dataset(&DatasetPaths::in_dir(&dir), &Decoder::default()).map_err(|e| e.to_string())?;
    for (kind, want) in RELEASED_COUNTS {
        let got = report.count(kind).lines;
        ensure(got == want, || format!("{kind}: {got} lines, expected {want}"))?;
    }
    Ok(Outcome::Pass("6,502 / 9,647 / 52,045".into()))
}

fn mode_isolation() -> Check {
    let corpus = common::Corpus::materialize();
    let built = common::build(&corpus, 5);
    let providers = Providers::fallback();
    let cfg = common::seeded_pipeline_config(5);
    let index = build_local_index(&built.dataset.abstract_sets, Default::default()).map_err(|e| e.to_string())?;
    let fetcher = common::offline_fetcher();
    for article in &built.articles {
        let sets: Vec<_> = built.dataset.abstract_sets.iter().filter(|s| s.topic == article.topic).cloned().collect();
        let inputs = PipelineInputs { index: Some(&index), fetcher: Some(&fetcher), grounded: Some(&sets) };
        let direct = run_pipeline(&article.topic, PipelineMode::Direct, &cfg, &providers, inputs).map_err(|e| e.to_string())?;
        ensure(direct.citations().is_empty(), || format!("{}: direct mode cited sources", article.topic))?;
        let grounded = run_pipeline(&article.topic, PipelineMode::Grounded, &cfg, &providers, inputs).map_err(|e| e.to_string())?;
        let supplied: Vec<&str> = sets.iter().flat_map(|s| s.abstracts.iter().map(|a| a.source_url.as_str())).collect();
        ensure(grounded.citations().iter().all(|u| supplied.contains(u)), || format!("{}: grounded cited an unsupplied URL", article.topic))?;
    }
    ensure(index.len() <= 100, || "local corpus exceeds 100 documents".into())?;
    let docs: Vec<Vec<String>> = index.documents.iter().map(|d| tokens(&d.text)).collect();
    for query in ["AlphaGo Fan Hui", "Nobel Prize Chemistry", "Gwanak campus 1975", "no such thing"] {
        let got = retrieve_local(query, &index, 4).map_err(|e| e.to_string())?;
        let want = naive::top_k(&tokens(query), &docs, 4);
        ensure(got.iter().map(|a| a.text.as_str()).eq(want.iter().map(|(d, _)| index.documents[*d].text.as_str())), || {
            format!("ranking differs for `{query}`")
        })?;
    }
    Ok(Outcome::Pass(format!("{} topics, {} local documents", built.articles.len(), index.len())))
}

fn run(name: &str, check: fn() -> Check, failed: &mut bool) {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let t = started.elapsed();
    match outcome {
        Ok(Outcome::Pass(note)) => println!("PASS {name} ({note}; {t:.2?})"),
        Ok(Outcome::Skip(note)) => println!("SKIP {name} ({note})"),
        Err(why) => {
            *failed = true;
            println!("FAIL {name} ({why})");
        }
    }
}

fn main() {
    let started = Instant::now();
    let mut failed = false;
    run("hdacr-oracle-equivalence", hdacr_oracle, &mut failed);
    run("weighted-score-law", weighted_score_law, &mut failed);
    run("metric-oracles", metric_oracles, &mut failed);
    run("pipeline-determinism-and-idempotence", determinism, &mut failed);
    run("schema-validation-fixtures", schema_validation, &mut failed);
    run("schema-validation-released-counts", released_counts, &mut failed);
    run("baseline-mode-isolation", mode_isolation, &mut failed);
    let elapsed = started.elapsed();
    let offline = Providers::fallback();
    let fallback_only = offline.embedder.id().starts_with("fallback") && offline.generator.id().starts_with("fallback");
    if fallback_only && elapsed < SUITE_BUDGET {
        println!("PASS offline-within-budget (fallback providers, loopback and file:// only; {elapsed:.2?} < {SUITE_BUDGET:?})");
    } else {
        failed = true;
        println!("FAIL offline-within-budget ({elapsed:.2?}; fallback only: {fallback_only})");
    }
    if failed {
        std::process::exit(1);
    }
}
