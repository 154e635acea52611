//! Finite-difference checks for every backward rule and for the full model.

use std::time::Instant;

use medthink::data::Image;
use medthink::model::{Example, Graph, MedThinkModel, ModelConfig};
use medthink::numerics::{grad_check, GradCheckOptions, Tape, Tensor, Var};
use medthink::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces a matrix to a scalar with fixed random weights so every entry's
/// gradient is distinct.
fn weighted_sum(tape: &mut Tape<f64>, x: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random(&mut rng, &shape));
    let y = tape.mul(x, w)?;
    Ok(tape.sum(y))
}

fn check(params: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Sync) {
    let opts = GradCheckOptions {
        eps: 1e-5,
        tol: 1e-5,
        floor: 1e-5,
    };
    let report = grad_check(f, &params, opts).unwrap();
    assert!(report.passed(), "max relative error {}", report.max_rel_error);
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=8, 1usize..=8, 1usize..=8, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matmul_and_transpose((p, q, r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(vec![random(&mut rng, &[p, q]), random(&mut rng, &[r, q])], |t, v| {
            let bt = t.transpose(v[1])?;
            let y = t.matmul(v[0], bt)?;
            weighted_sum(t, y, seed)
        });
    }

    #[test]
    fn elementwise_ops((p, q, _r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(vec![random(&mut rng, &[p, q]), random(&mut rng, &[p, q]), random(&mut rng, &[q])], |t, v| {
            let a = t.add(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            let c = t.mul(b, v[1])?;
            let d = t.add_row(c, v[2])?;
            let e = t.scale(d, -1.7);
            let s = t.sigmoid(e);
            let g = t.gelu(s);
            weighted_sum(t, g, seed)
        });
    }

    #[test]
    fn softmax_variants((p, _q, _r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(vec![random(&mut rng, &[p, p])], |t, v| {
            let a = t.softmax_rows(v[0])?;
            let b = t.causal_softmax_rows(v[0])?;
            let c = t.add(a, b)?;
            weighted_sum(t, c, seed)
        });
    }

    #[test]
    fn layer_norm((p, q, _r, seed) in dims()) {
        prop_assume!(q >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(vec![random(&mut rng, &[p, q]), random(&mut rng, &[q]), random(&mut rng, &[q])], |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2])?;
            weighted_sum(t, y, seed)
        });
    }

    #[test]
    fn gather_slice_concat((p, q, r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<usize> = (0..r).map(|_| rng.random_range(0..p)).collect();
        check(vec![random(&mut rng, &[p, q])], move |t, v| {
            let g = t.gather(v[0], &ids)?;
            let left = t.slice_cols(g, 0, q.div_ceil(2))?;
            let right = t.slice_cols(g, q / 2, q - q / 2)?;
            let c = t.concat_cols(&[right, left, g])?;
            weighted_sum(t, c, seed)
        });
    }

    #[test]
    fn lerp_inside_unit_interval((p, q, _r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(vec![random(&mut rng, &[p, q]), random(&mut rng, &[p, q]), random(&mut rng, &[p, q])], |t, v| {
            let w = t.sigmoid(v[2]);
            let y = t.lerp(v[0], v[1], w)?;
            weighted_sum(t, y, seed)
        });
    }

    #[test]
    fn nll((p, q, _r, seed) in dims()) {
        prop_assume!(q >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets: Vec<usize> = (0..p).map(|_| rng.random_range(0..q)).collect();
        let mut mask: Vec<bool> = (0..p).map(|_| rng.random_bool(0.3)).collect();
        mask[0] = false;
        check(vec![random(&mut rng, &[p, q])], move |t, v| t.nll_sum(v[0], &targets, &mask));
    }

    #[test]
    fn shared_input_accumulates((p, q, _r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        check(vec![random(&mut rng, &[p, q])], |t, v| {
            let sq = t.mul(v[0], v[0])?;
            let s = t.sigmoid(v[0]);
            let y = t.add(sq, s)?;
            weighted_sum(t, y, seed)
        });
    }
}

fn toy_batch(model: &MedThinkModel<f64>) -> Vec<Example<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    (0..2)
        .map(|_| {
            let img = Image::new(4, 4, (0..16).map(|_| rng.random()).collect()).unwrap();
            let mut input = vec![1u32];
            input.extend((0..5).map(|_| rng.random_range(7..32u32)));
            input.push(2);
            let mut target = vec![1u32];
            target.extend((0..6).map(|_| rng.random_range(4..32u32)));
            target.push(2);
            Example {
                input,
                patches: model.patches(&img).unwrap(),
                target,
            }
        })
        .collect()
}

/// Mean NLL over both examples, built from the parameter vars grad_check supplies.
fn batch_mean_loss(model: &MedThinkModel<f64>, batch: &[Example<f64>], tape: &mut Tape<f64>, vars: &[Var]) -> Result<Var> {
    let graph = Graph::new(model, vars)?;
    let mut total = None;
    let mut count = 0;
    for ex in batch {
        let (sum, n) = graph.example_loss(tape, ex)?;
        count += n;
        total = Some(match total {
            None => sum,
            Some(acc) => tape.add(acc, sum)?,
        });
    }
    Ok(tape.scale(total.expect("non-empty batch"), 1.0 / count as f64))
}

#[test]
fn full_model_gradient_check() {
    let config = ModelConfig {
        vocab_size: 32,
        d: 16,
        n_max: 8,
        m: 4,
        enc_layers: 1,
        dec_layers: 1,
        heads: 2,
        image_side: 4,
        seed: 11,
    };
    let model = MedThinkModel::<f64>::new(config).unwrap();
    let batch = toy_batch(&model);
    let start = Instant::now();
    let report = grad_check(
        |tape, vars| batch_mean_loss(&model, &batch, tape, vars),
        model.params(),
        GradCheckOptions {
            eps: 1e-4,
            tol: 1e-4,
            floor: 1e-6,
        },
    )
    .unwrap();
    let names: Vec<&str> = model.param_names().collect();
    for t in &report.tensors {
        eprintln!("{:<28} rel {:.3e} abs {:.3e}", names[t.index], t.max_rel_error, t.max_abs_error);
    }
    eprintln!("elapsed {:?}", start.elapsed());
    assert!(report.passed(), "max relative error {}", report.max_rel_error);
}
