use std::collections::HashMap;

use proptest::prelude::*;

use lfag_core::metrics::{
    article_entity_recall, heading_entity_recall, heading_soft_recall, rouge, rouge_n, soft_cardinality,
    MetricsConfig, RougeLVariant,
};
use lfag_core::pipelines::outline_from_levels;
use lfag_core::providers::{HashEmbedder, Providers};
use lfag_core::text::{tokenize, Lang};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<String>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *out.entry(tokens[i..i + n].to_vec()).or_default() += 1;
        }
    }
    out
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence by enumerating every subsequence of `a`.
fn brute_lcs(a: &[String], b: &[String]) -> usize {
    (0u32..1 << a.len())
        .map(|mask| a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t).collect::<Vec<_>>())
        .filter(|sub| is_subsequence(sub, b))
        .map(|sub| sub.len())
        .max()
        .unwrap_or(0)
}

fn f1(hits: usize, g: usize, r: usize) -> f64 {
    let (p, rec) = (hits as f64 / g as f64, hits as f64 / r as f64);
    if p + rec == 0.0 { 0.0 } else { 2.0 * p * rec / (p + rec) }
}

#[test]
fn cat_fixture_matches_brute_force_and_frozen_values() {
    let (g, r) = ("the cat sat", "the cat ran");
    let (gt, rt) = (tokenize(g, Lang::En), tokenize(r, Lang::En));
    let overlap = |n| {
        let (a, b) = (ngram_counts(&gt, n), ngram_counts(&rt, n));
        a.iter().map(|(k, c)| (*c).min(b.get(k).copied().unwrap_or(0))).sum::<usize>()
    };
    let brute = [
        f1(overlap(1), gt.len(), rt.len()),
        f1(overlap(2), gt.len() - 1, rt.len() - 1),
        f1(brute_lcs(&gt, &rt), gt.len(), rt.len()),
    ];
    let frozen = [2.0 / 3.0, 0.5, 2.0 / 3.0];
    let scores = rouge(g, r, Lang::En, RougeLVariant::Text).unwrap();
    let got = [scores.rouge1.f1, scores.rouge2.f1, scores.rouge_l.f1];
    for i in 0..3 {
        assert!((brute[i] - frozen[i]).abs() < 1e-12, "brute force disagrees with frozen value {i}");
        assert!((got[i] - frozen[i]).abs() < 1e-12, "metric {i}: {} vs {}", got[i], frozen[i]);
    }
}

#[test]
fn identical_texts_score_one_everywhere() {
    let text = "Marie Curie worked in Paris.\n\nShe won the Nobel Prize in 1903 and again in 1911.";
    let cfg = MetricsConfig::default();
    let providers = Providers::fallback();
    for variant in [RougeLVariant::Text, RougeLVariant::Summary] {
        let s = rouge(text, text, Lang::En, variant).unwrap();
        for prf in [s.rouge1, s.rouge2, s.rouge_l] {
            assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
        }
    }
    let recall = article_entity_recall(text, text, &providers.ner, &cfg).unwrap();
    assert_eq!((recall.value, recall.vacuous), (1.0, false));

    let items = vec![(1, "Early life in Warsaw".to_string()), (1, "Work in Paris".to_string()), (2, "Nobel Prize".to_string())];
    let outline = outline_from_levels("Marie Curie", Lang::En, &items, "fixture");
    let soft = heading_soft_recall(&outline, &outline, providers.embedder.as_ref(), &cfg).unwrap();
    assert!((soft - 1.0).abs() < 1e-9);
    let her = heading_entity_recall(&outline, &outline, &providers.ner, &cfg).unwrap();
    assert_eq!(her.value, 1.0);
}

#[test]
fn chinese_rouge_counts_characters() {
    let s = rouge("首尔大学", "首尔国立大学", Lang::Zh, RougeLVariant::Text).unwrap();
    assert!((s.rouge1.recall - 4.0 / 6.0).abs() < 1e-12);
    assert!((s.rouge1.precision - 1.0).abs() < 1e-12);
}

#[test]
fn empty_reference_entities_give_a_flagged_vacuous_recall() {
    let cfg = MetricsConfig::default();
    let r = article_entity_recall("Paris is large.", "nothing named here.", &Providers::fallback().ner, &cfg).unwrap();
    assert!(r.vacuous);
    assert_eq!(r.value, 1.0);
}

fn outline_items() -> impl Strategy<Value = Vec<(u32, String)>> {
    let word = prop::sample::select(vec!["History", "Early life", "Career", "Legacy", "Awards", "Campus", "Research", "Rankings"]);
    prop::collection::vec((1u32..=3, word, 0u8..4), 1..12)
        .prop_map(|v| v.into_iter().map(|(l, w, n)| (l, format!("{w} {n}"))).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn an_outline_fully_recalls_itself(items in outline_items()) {
        let outline = outline_from_levels("Topic", Lang::En, &items, "random");
        for full_paths in [true, false] {
            let cfg = MetricsConfig { full_paths, ..Default::default() };
            let v = heading_soft_recall(&outline, &outline, &HashEmbedder::default(), &cfg).unwrap();
            prop_assert!((v - 1.0).abs() < 1e-9, "recall {}", v);
        }
    }

    #[test]
    fn soft_recall_stays_in_unit_range(a in outline_items(), b in outline_items()) {
        let (ga, rb) = (outline_from_levels("T", Lang::En, &a, "g"), outline_from_levels("T", Lang::En, &b, "r"));
        let v = heading_soft_recall(&ga, &rb, &HashEmbedder::default(), &MetricsConfig::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn soft_cardinality_ignores_item_order(n in 1usize..8, seed in any::<u64>()) {
        let e = HashEmbedder::default();
        let texts: Vec<String> = (0..n).map(|i| format!("heading {} {}", i, seed % (i as u64 + 3))).collect();
        let vecs: Vec<_> = texts.iter().map(|t| e.embed_one(t).unwrap()).collect();
        let sim = |order: &[usize]| -> Vec<Vec<f64>> {
            order.iter().map(|&i| order.iter().map(|&j| vecs[i].similarity(&vecs[j])).collect()).collect()
        };
        let forward: Vec<usize> = (0..n).collect();
        let backward: Vec<usize> = (0..n).rev().collect();
        let (a, b) = (soft_cardinality(&sim(&forward)), soft_cardinality(&sim(&backward)));
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= 1.0 - 1e-9 && a <= n as f64 + 1e-9);
    }

    #[test]
    fn rouge_f1_is_symmetric(a in "[a-d ]{1,30}", b in "[a-d ]{1,30}") {
        let (ta, tb) = (tokenize(&a, Lang::En), tokenize(&b, Lang::En));
        prop_assume!(!ta.is_empty() && !tb.is_empty());
        for n in 1..=2 {
            let (x, y) = (rouge_n(&ta, &tb, n), rouge_n(&tb, &ta, n));
            prop_assert!((x.f1 - y.f1).abs() < 1e-12);
            prop_assert!((x.precision - y.recall).abs() < 1e-12);
        }
        let ab = rouge(&a, &b, Lang::En, RougeLVariant::Text).unwrap();
        let ba = rouge(&b, &a, Lang::En, RougeLVariant::Text).unwrap();
        prop_assert!((ab.rouge_l.f1 - ba.rouge_l.f1).abs() < 1e-12);
    }

    #[test]
    fn lcs_matches_brute_force_on_short_texts(a in "[a-c ]{1,16}", b in "[a-c ]{1,16}") {
        let (ta, tb) = (tokenize(&a, Lang::En), tokenize(&b, Lang::En));
        prop_assume!(!tb.is_empty() && ta.len() <= 10);
        prop_assert_eq!(lfag_core::metrics::lcs_len(&ta, &tb), brute_lcs(&ta, &tb));
    }
}

#[test]
fn rubric_grades_all_four_dimensions() {
    use lfag_core::metrics::rubric_grade;
    use lfag_core::providers::{GenParams, TemplateEchoGenerator};
    let s = rubric_grade("Some article text.", "Topic", &TemplateEchoGenerator, &GenParams::default()).unwrap();
    for v in [s.interest_level, s.organization, s.relevance, s.coverage] {
        assert!((1.0..=5.0).contains(&v) && v.fract() == 0.0);
    }
    assert_eq!(s.transcript.len(), 4);
}

#[test]
fn unparseable_judges_get_one_retry_then_fail() {
    use lfag_core::metrics::rubric_grade;
    use lfag_core::providers::{GenParams, ScriptedGenerator};
    let judge = ScriptedGenerator::new(["no verdict", "Score: 4", "Score: 3", "[RESULT] 5", "Score: 2"]);
    let s = rubric_grade("Text.", "Topic", &judge, &GenParams::default()).unwrap();
    assert_eq!((s.interest_level, s.organization, s.relevance, s.coverage), (4.0, 3.0, 5.0, 2.0));
    assert_eq!(judge.prompts().len(), 5);

    let mute = ScriptedGenerator::new(["I cannot grade this."]);
    let err = rubric_grade("Text.", "Topic", &mute, &GenParams::default()).unwrap_err();
    assert_eq!(err.rule_id(), "E_JUDGE_PARSE");
    assert_eq!(mute.prompts().len(), 2);
}
