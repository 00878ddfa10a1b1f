mod common;

use std::time::Instant;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::naive;
use lfag_core::hdacr::{detect, HdacrConfig, MatchKind, Verdict};
use lfag_core::providers::Providers;

#[test]
fn randomized_instances_match_the_naive_scorer() {
    let providers = Providers::fallback();
    let cfg = HdacrConfig::default();
    let mut rng = StdRng::seed_from_u64(20240601);
    let started = Instant::now();
    let mut verdicts = [0usize; 2];
    for i in 0..200 {
        let (g, r) = naive::random_instance(&mut rng);
        let report = detect(&g, &r, &cfg, &providers).unwrap();
        let (present, expected) = naive::detect(&g, &r, 0.6);
        assert_eq!(report.verdict == Verdict::HallucinationPresent, present, "instance {i}: {g} | {r}");
        verdicts[usize::from(present)] += 1;
        assert_eq!(report.scores.len(), expected.len(), "instance {i}");
        for (got, (surface, gamma)) in report.scores.iter().zip(&expected) {
            assert_eq!(&got.entity.surface, surface);
            assert!((got.gamma - gamma).abs() <= 1e-9, "instance {i} `{surface}`: {} vs {gamma}", got.gamma);
        }
    }
    assert!(started.elapsed().as_secs_f64() < 5.0, "took {:?}", started.elapsed());
    assert!(verdicts[0] > 0 && verdicts[1] > 0, "generator must exercise both verdicts: {verdicts:?}");
}

#[test]
fn covered_text_passes_and_one_unknown_entity_flips_it() {
    let providers = Providers::fallback();
    let cfg = HdacrConfig::default();
    let r = "AlphaGo defeated Fan Hui in London during October 2015. Fan Hui was the European champion.";
    let covered = "Fan Hui lost to AlphaGo in London.";
    let report = detect(covered, r, &cfg, &providers).unwrap();
    assert_eq!(report.verdict, Verdict::NoHallucination);
    assert!(report.scores.iter().all(|s| s.kind == MatchKind::Hard));

    let flipped = format!("{covered} Zbigniew Quarrington watched.");
    let report = detect(&flipped, r, &cfg, &providers).unwrap();
    assert_eq!(report.verdict, Verdict::HallucinationPresent);
    assert_eq!(report.unverifiable.len(), 1);
    assert_eq!(report.unverifiable[0].entity.surface, "zbigniew quarrington");
    assert!(report.unverifiable[0].gamma < 0.6);
}

#[test]
fn the_threshold_is_strict() {
    let providers = Providers::fallback();
    let r = "Marie Curie worked in Paris.";
    let g = "Pierre Curie worked in Paris.";
    let probe = detect(g, r, &HdacrConfig::default(), &providers).unwrap();
    let soft = probe.scores.iter().find(|s| s.kind == MatchKind::Soft).expect("one soft match");
    let at = HdacrConfig { threshold: soft.gamma, ..Default::default() };
    assert_eq!(detect(g, r, &at, &providers).unwrap().verdict, Verdict::NoHallucination);
    let above = HdacrConfig { threshold: (soft.gamma + 1e-6).min(1.0), ..Default::default() };
    assert_eq!(detect(g, r, &above, &providers).unwrap().verdict, Verdict::HallucinationPresent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_scores_are_the_mean_of_their_parts(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (g, r) = naive::random_instance(&mut rng);
        let report = detect(&g, &r, &HdacrConfig::default(), &Providers::fallback()).unwrap();
        for s in &report.scores {
            match s.kind {
                MatchKind::Hard => prop_assert_eq!(s.gamma, 1.0),
                MatchKind::Soft => {
                    let (a, b) = (s.gamma_sbert.unwrap(), s.gamma_bm25.unwrap());
                    prop_assert!((s.gamma - (a + b) / 2.0).abs() <= 1e-12);
                    prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
                }
            }
        }
        let below = report.scores.iter().filter(|s| s.gamma < report.threshold).count();
        prop_assert_eq!(below, report.unverifiable.len());
        prop_assert_eq!(report.verdict == Verdict::HallucinationPresent, below > 0);
    }
}
