//! Fusion invariants over random models and inputs.

use medthink::data::Image;
use medthink::model::{MedThinkModel, ModelConfig};
use proptest::prelude::*;

fn config(m: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        vocab_size: 24,
        d: 16,
        n_max: 12,
        m,
        enc_layers: 1,
        dec_layers: 1,
        heads: 2,
        image_side: 4,
        seed,
    }
}

/// Random model with parameters stretched by `scale` so gates and attention
/// range from near-uniform to saturated.
fn model(m: usize, seed: u64, scale: f64) -> MedThinkModel<f64> {
    let mut model = MedThinkModel::<f64>::new(config(m, seed)).unwrap();
    for p in model.params_mut() {
        *p = p.map(|x| x * scale);
    }
    model
}

fn inputs() -> impl Strategy<Value = (Vec<u32>, Vec<u8>)> {
    (
        proptest::collection::vec(4u32..24, 1..=12),
        proptest::collection::vec(any::<u8>(), 16),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fusion_invariants(
        seed in any::<u64>(),
        scale in prop_oneof![Just(1.0), 1.0f64..50.0, 50.0f64..2000.0],
        (ids, pixels) in inputs(),
    ) {
        let model = model(4, seed, scale);
        let image = Image::new(4, 4, pixels).unwrap();
        let trace = model.fusion_trace(&ids, &image).unwrap();
        let (n, m) = trace.weights.dims2().unwrap();
        prop_assert_eq!((n, m), (ids.len(), 4));
        for r in 0..n {
            let s: f64 = trace.weights.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9, "row {} sums to {}", r, s);
        }
        for &l in trace.gate.data() {
            prop_assert!(l > 0.0 && l < 1.0, "lambda {}", l);
        }
        for ((&f, &t), &h) in trace.fused.data().iter().zip(trace.text.data()).zip(trace.attended.data()) {
            prop_assert!(t.min(h) <= f && f <= t.max(h), "{} not between {} and {}", f, t, h);
        }
    }

    #[test]
    fn single_patch_attention_returns_value_row(
        seed in any::<u64>(),
        scale in 1.0f64..100.0,
        (ids, pixels) in inputs(),
    ) {
        let model = model(1, seed, scale);
        let image = Image::new(4, 4, pixels).unwrap();
        let trace = model.fusion_trace(&ids, &image).unwrap();
        let value = trace.image.matmul(model.param("fusion.value").unwrap()).unwrap();
        prop_assert!(trace.weights.data().iter().all(|&w| w == 1.0));
        for r in 0..ids.len() {
            prop_assert_eq!(trace.attended.row(r), value.row(0));
        }
    }
}
