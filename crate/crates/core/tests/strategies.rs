//! Serialization round-trips, parser robustness and generation plumbing.

use medthink::data::vocab::END_ID;
use medthink::data::{build_vocab, synth_generate, Image, SynthOptions, Vocab, VqaSample};
use medthink::model::{MedThinkModel, ModelConfig};
use medthink::strategies::{
    contains_keyword, generate, make_target, parse_output, parse_stage1, stage2_input, two_stage_generate,
    Strategy as Answering,
};
use proptest::prelude::*;

fn phrase() -> impl Strategy<Value = String> {
    proptest::collection::vec("[A-Za-z0-9,.?'():-]{1,8}", 1..8).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serialize_then_parse_is_identity(a in phrase(), r in phrase()) {
        prop_assume!(!contains_keyword(&a) && !contains_keyword(&r));
        for s in Answering::ALL {
            let text = make_target(s, &a, &r).unwrap();
            let out = parse_output(s, &text);
            prop_assert!(out.parse_ok, "{} {:?}", s, text);
            prop_assert_eq!(&out.answer, &a);
            if s == Answering::NoRationale {
                prop_assert_eq!(out.rationale, None);
            } else {
                prop_assert_eq!(out.rationale.as_deref(), Some(r.as_str()));
            }
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in any::<String>()) {
        for s in Answering::ALL {
            let out = parse_output(s, &text);
            prop_assert!(!out.parse_ok || !out.answer.is_empty());
            if !contains_keyword(&text) {
                prop_assert!(!out.parse_ok);
                prop_assert_eq!(out.answer, text.trim());
            }
        }
        let _ = parse_stage1(&text);
    }
}

struct Fixture {
    samples: Vec<VqaSample>,
    vocab: Vocab,
}

fn fixture() -> Fixture {
    let samples = synth_generate(21, 60, &SynthOptions::default()).unwrap();
    let vocab = build_vocab(&samples, 1).unwrap();
    Fixture { samples, vocab }
}

fn model(vocab: &Vocab, seed: u64) -> MedThinkModel<f64> {
    MedThinkModel::new(ModelConfig {
        seed,
        ..ModelConfig::toy(vocab.len())
    })
    .unwrap()
}

fn image(s: &VqaSample) -> Image {
    s.image.inline().unwrap().clone()
}

#[test]
fn greedy_generation_is_deterministic_and_bounded() {
    let f = fixture();
    let m = model(&f.vocab, 3);
    for s in &f.samples[..10] {
        let a = generate(&m, &f.vocab, Answering::Explanation, &s.question, &image(s), 40).unwrap();
        let b = generate(&m, &f.vocab, Answering::Explanation, &s.question, &image(s), 40).unwrap();
        assert_eq!(a, b);
        assert!(a.tokens.len() <= 32);
        if let Some(end) = a.tokens.iter().position(|&t| t == END_ID) {
            assert_eq!(end, a.tokens.len() - 1, "tokens after the end token");
        }
        let one = generate(&m, &f.vocab, Answering::Explanation, &s.question, &image(s), 1).unwrap();
        assert_eq!(one.tokens.len(), 1);
        assert_eq!(one.tokens[0], a.tokens[0]);
    }
}

#[test]
fn mismatched_vocabulary_is_a_checkpoint_error() {
    let f = fixture();
    let m = MedThinkModel::<f64>::new(ModelConfig::toy(f.vocab.len() + 1)).unwrap();
    let s = &f.samples[0];
    let err = generate(&m, &f.vocab, Answering::NoRationale, &s.question, &image(s), 5).unwrap_err();
    assert!(matches!(err, medthink::Error::Checkpoint(_)), "{err}");
}

#[test]
fn two_stage_passes_rationale_verbatim() {
    let f = fixture();
    let (m1, m2) = (model(&f.vocab, 1), model(&f.vocab, 2));
    for s in &f.samples[..50] {
        let out = two_stage_generate(&m1, &m2, &f.vocab, &s.question, &image(s), 32).unwrap();
        let r = out.stage1.rationale.as_deref().unwrap();
        assert!(out.stage2_input.contains(r));
        assert_eq!(out.stage2_input, stage2_input(&s.question, r));
        assert_eq!(out.output.rationale.as_deref(), Some(r));
        assert_eq!(out.output.answer, out.stage2.answer);
    }
}

#[test]
fn two_stage_matches_manual_composition() {
    let f = fixture();
    let (m1, m2) = (model(&f.vocab, 4), model(&f.vocab, 5));
    let copy = m1.clone();
    for s in &f.samples[..20] {
        let img = image(s);
        let first = generate(&m1, &f.vocab, Answering::TwoStageReasoning, &s.question, &img, 32).unwrap();
        let input = stage2_input(&s.question, first.rationale.as_deref().unwrap());
        let second = generate(&m2, &f.vocab, Answering::NoRationale, &input, &img, 32).unwrap();
        let out = two_stage_generate(&m1, &m2, &f.vocab, &s.question, &img, 32).unwrap();
        assert_eq!(out.output.answer, second.answer);
        assert_eq!(out.stage1, first);
        let again = two_stage_generate(&copy, &m2, &f.vocab, &s.question, &img, 32).unwrap();
        assert_eq!(again.output.answer, out.output.answer);
    }
}
