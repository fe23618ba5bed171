mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use webextract::dsl::eval_guard;
use webextract::metrics::{Example, ExampleSet};
use webextract::nlp::Nlp;
use webextract::synth::{brute_force_synthesize, synthesize, synthesize_branch, SynthConfig};
use webextract::webtree::parse_html_str;

#[test]
fn empty_negative_block_keeps_every_guard_true_on_positives() {
    let mut e = common::motivating_examples();
    e.examples.push(common::motivating_heldout());
    let cfg = common::motivating_config();
    let nlp = common::motivating_nlp();
    let (free, _) = synthesize_branch(&e, &[0, 1], &[], &cfg, &nlp).unwrap();
    let (held, _) = synthesize_branch(&e, &[0, 1], &[2], &cfg, &nlp).unwrap();
    assert!(!free.is_empty());
    for (g, _) in free.pairs() {
        for ex in &e.examples[..2] {
            assert!(eval_guard(g, &ex.page, &nlp, &e.ctx).unwrap().0);
        }
    }
    // Rejecting a page only removes guards; the extraction optimum is the same.
    if !held.is_empty() {
        assert_eq!(free.best.value(), held.best.value());
    }
    let all: BTreeSet<_> = free.pairs().collect();
    assert!(held.pairs().all(|p| all.contains(&p)));
    assert!(held.count() < free.count());
    assert!(free.pairs().any(|(g, _)| eval_guard(g, &e.examples[2].page, &nlp, &e.ctx).unwrap().0));
}

#[test]
fn identical_pages_cannot_be_separated() {
    let html = "<h2>Service</h2><ul><li>PLDI'21 (PC)</li></ul>";
    let w = Arc::new(parse_html_str(html));
    let e = ExampleSet {
        ctx: common::motivating_ctx(),
        examples: vec![
            Example::new("a", w.clone(), common::set(&["PLDI'21 (PC)"])),
            Example::new("b", w, common::set(&["PLDI'21 (PC)"])),
        ],
    };
    let cfg = SynthConfig { d_g: 3, d_e: 3, ..SynthConfig::default() };
    let nlp = Nlp::baseline();
    let (r, _) = synthesize_branch(&e, &[0], &[1], &cfg, &nlp).unwrap();
    assert!(r.is_empty());
    assert_eq!(r.count(), 0);
}

#[test]
fn motivating_synthesis_is_deterministic() {
    let e = common::motivating_examples();
    let cfg = common::motivating_config();
    let nlp = common::motivating_nlp();
    let a = synthesize(&e, &cfg, &nlp).unwrap();
    let b = synthesize(&e, &cfg, &nlp).unwrap();
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn matches_oracle_on_small_instances() {
    let nlp = Nlp::baseline();
    for seed in 0..6 {
        let (e, cfg) = common::random_instance(seed);
        let s = synthesize(&e, &cfg, &nlp).unwrap();
        let o = brute_force_synthesize(&e, &cfg, &nlp).unwrap();
        common::same_set(&s, &o).unwrap_or_else(|m| panic!("seed {seed}: {m}"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampled_programs_reach_the_reported_f1(seed in 0u64..500, draw in 0u64..1000) {
        let nlp = Nlp::baseline();
        let (e, cfg) = common::random_instance(seed);
        let s = synthesize(&e, &cfg, &nlp).unwrap();
        prop_assert!(s.count() > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        for _ in 0..5 {
            let p = s.sample(&mut rng).unwrap();
            prop_assert!(s.contains(&p));
            prop_assert!((common::micro_f1(&p, &e, &nlp) - s.f1.value()).abs() < 1e-12);
        }
    }

    #[test]
    fn pruning_and_decomposition_do_not_change_the_set(seed in 0u64..500) {
        let nlp = Nlp::baseline();
        let (e, cfg) = common::random_instance(seed);
        let base = synthesize(&e, &cfg, &nlp).unwrap();
        let np = synthesize(&e, &SynthConfig { no_prune: true, ..cfg.clone() }, &nlp).unwrap();
        prop_assert!(common::same_set(&base, &np).is_ok());
        let nd = synthesize(&e, &SynthConfig { no_decomp: true, ..cfg.clone() }, &nlp).unwrap();
        prop_assert!(common::same_set(&base, &nd).is_ok());
        prop_assert!(base.stats.nodes_expanded() <= np.stats.nodes_expanded());
    }

    #[test]
    fn file_round_trip_preserves_the_set(seed in 0u64..500) {
        let nlp = Nlp::baseline();
        let (e, cfg) = common::random_instance(seed);
        let s = synthesize(&e, &cfg, &nlp).unwrap();
        let back = webextract::synth::OptimalSet::from_json(&s.to_json()).unwrap();
        prop_assert!(common::same_set(&s, &back).is_ok());
    }
}
