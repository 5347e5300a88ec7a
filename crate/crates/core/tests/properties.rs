use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchql::bench::{synthetic_case, SynthParams};
use sketchql::engine::{run_batch, BatchLimits, BatchStatus, EngineConfig, Mode, Session};
use sketchql::lang::{matches, parse_completion, parse_sketch, print_sketch};
use sketchql::sampler::{SamplerConfig, Skeleton, State};
use sketchql::softsem::{precompute_theta, score_completion};
use sketchql::{load_database, Status};

fn quick(seed: u64) -> EngineConfig {
    EngineConfig {
        sampler: SamplerConfig {
            sample_count: 20,
            mh_steps: 50,
            seed,
            ..SamplerConfig::default()
        },
        lambda: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn compiled_score_matches_ast_score(case_seed in 0u64..10_000, draw_seed: u64, lambda in -0.2f64..0.2) {
        let case = synthetic_case(case_seed, &SynthParams::default());
        let theta = precompute_theta::<f64>(&case.sketch, &case.catalog);
        let sk = Skeleton::compile(&case.sketch, &case.catalog, &theta, lambda, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let mut pos = Vec::new();
        for _ in 0..20 {
            let (chain, _) = sk.propose_chain(&mut rng);
            let columns = sk
                .column_units()
                .iter()
                .map(|u| u.choices[rng.gen_range(0..u.choices.len())])
                .collect();
            let st = State { columns, chain };
            let fast = sk.score(&st, &mut pos);
            let c = sk.completion(&st);
            let slow = score_completion(&c, &theta, &case.catalog, lambda);
            prop_assert!(fast == slow || (fast - slow).abs() < 1e-9, "{} vs {}", fast, slow);
            prop_assert!(matches(&case.sketch, &c));
        }
    }

    #[test]
    fn printed_sketches_parse_back(case_seed in 0u64..10_000) {
        let case = synthetic_case(case_seed, &SynthParams::default());
        let text = print_sketch(&case.sketch);
        prop_assert_eq!(parse_sketch(&text, &case.catalog).unwrap(), case.sketch.clone());
        let text = print_sketch(&case.truth);
        prop_assert_eq!(parse_completion(&text, &case.catalog).unwrap(), case.truth.clone());
    }

    #[test]
    fn samples_derive_from_the_sketch(case_seed in 0u64..10_000, seed: u64) {
        let case = synthetic_case(case_seed, &SynthParams::default());
        let theta = precompute_theta::<f64>(&case.sketch, &case.catalog);
        let cfg = quick(seed).sampler;
        let sk = Skeleton::compile(&case.sketch, &case.catalog, &theta, 0.0, cfg.max_join_depth).unwrap();
        for s in sk.sample(&[], &cfg, seed).unwrap() {
            prop_assert!(matches(&case.sketch, &s));
            prop_assert!(score_completion(&s, &theta, &case.catalog, 0.0).is_finite());
        }
    }

    #[test]
    fn accepted_steps_grow_the_sketch(case_seed in 0u64..10_000) {
        let case = synthetic_case(case_seed, &SynthParams::default());
        let out = run_batch::<f64>(case.catalog.clone(), &case.sketch, &case.truth, &quick(case_seed), Mode::Full, &BatchLimits { max_iterations: 500, time_budget: None }).unwrap();
        prop_assert_eq!(out.status, BatchStatus::Complete);
        let mut last = case.sketch.size();
        for r in out.trace.iter().filter(|r| r.answer) {
            let p = parse_sketch(&r.result, &case.catalog).unwrap();
            prop_assert!(p.size() > last);
            prop_assert!(case.truth.size() >= p.size());
            last = p.size();
        }
    }
}

#[test]
fn single_precision_session_reaches_the_same_answer() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/library");
    let cat = Arc::new(load_database(&dir.join("schema.json"), &dir).unwrap());
    let sketch = std::fs::read_to_string(dir.join("author.sketch")).unwrap();
    let truth = parse_completion(&std::fs::read_to_string(dir.join("author.truth")).unwrap(), &cat).unwrap();
    let mut s = Session::<f32>::start_text(cat, &sketch, quick(5)).unwrap();
    while s.status() == Status::AwaitingAnswer {
        let yes = matches(&s.pending().unwrap().question.sketch, &truth);
        s.answer(yes).unwrap();
    }
    assert_eq!(s.completion(), Some(truth));
}
