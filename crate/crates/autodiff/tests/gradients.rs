use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeedit_autodiff::cases::{self, Domain};
use shapeedit_autodiff::{check_gradients, Graph, Result, Tensor, Var};

fn sample(rng: &mut ChaCha8Rng, n: usize, domain: Domain) -> Vec<f64> {
    (0..n)
        .map(|_| match domain {
            Domain::Any => rng.random_range(-2.0..2.0),
            Domain::AwayFromZero => {
                let m: f64 = rng.random_range(0.1..2.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
            Domain::Positive => rng.random_range(0.2..2.0),
        })
        .collect()
}

#[test]
fn every_op_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in cases::all() {
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let x = Tensor::vector(sample(&mut rng, case.input_len, case.domain));
            worst = worst.max(check_gradients(case.f, &x, 1e-5).unwrap());
        }
        assert!(worst < 1e-4, "{}: max relative error {worst:e}", case.name);
    }
}

#[test]
fn sum_of_squares_check_is_tight() {
    let x = Tensor::vector(vec![0.5, -1.5, 2.0, 3.0]);
    let err = check_gradients(
        |g, x| {
            let y = g.mul(x, x)?;
            Ok(g.sum(y))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err:e}");
}

// 2 -> 3 -> 2 -> 1 with biases: 20 weights.
fn three_layer(g: &mut Graph, w: Var) -> Result<Var> {
    let take = |g: &mut Graph, start: usize, shape: Vec<usize>| -> Result<Var> {
        let n = shape.iter().product();
        let s = g.slice(w, start, n)?;
        g.reshape(s, shape)
    };
    let input = g.constant(&Tensor::matrix(1, 2, vec![0.7, -1.3])?);
    let w1 = take(g, 0, vec![2, 3])?;
    let b1 = take(g, 6, vec![3])?;
    let w2 = take(g, 9, vec![3, 2])?;
    let b2 = take(g, 15, vec![2])?;
    let w3 = take(g, 17, vec![2, 1])?;
    let b3 = take(g, 19, vec![1])?;
    let h = g.matmul(input, w1)?;
    let h = g.add_row(h, b1)?;
    let h = g.tanh(h);
    let h = g.matmul(h, w2)?;
    let h = g.add_row(h, b2)?;
    let h = g.sigmoid(h);
    let h = g.matmul(h, w3)?;
    let h = g.add_row(h, b3)?;
    let h = g.mul(h, h)?;
    Ok(g.sum(h))
}

#[test]
fn random_three_layer_network_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let w = Tensor::vector((0..20).map(|_| rng.random_range(-1.0..1.0)).collect());
        let err = check_gradients(three_layer, &w, 1e-5).unwrap();
        assert!(err < 1e-4, "{err:e}");
    }
}

#[test]
fn gradients_are_linear_in_the_loss() {
    let x0 = Tensor::vector(vec![0.3, -0.4, 1.1]);
    let loss_a = |g: &mut Graph, x: Var| -> Result<Var> {
        let t = g.tanh(x);
        cases::readout(g, t)
    };
    let loss_b = |g: &mut Graph, x: Var| -> Result<Var> {
        let e = g.exp(x);
        let n = g.l2_normalize(e)?;
        cases::readout(g, n)
    };
    let grad_of = |f: &dyn Fn(&mut Graph, Var) -> Result<Var>| {
        let mut g = Graph::new();
        let x = g.param(&x0);
        let l = f(&mut g, x).unwrap();
        g.backward(l).unwrap();
        g.grad_or_zeros(x)
    };
    let ga = grad_of(&loss_a);
    let gb = grad_of(&loss_b);
    let gsum = grad_of(&|g: &mut Graph, x: Var| {
        let a = loss_a(g, x)?;
        let b = loss_b(g, x)?;
        g.add(a, b)
    });
    for i in 0..3 {
        assert!((gsum[i] - ga[i] - gb[i]).abs() < 1e-14);
    }
}

#[test]
fn identical_inputs_give_bit_identical_gradients() {
    let run = || {
        let mut g = Graph::new();
        let w = g.param(&Tensor::vector(
            (0..20).map(|i| (i as f64 * 0.37).sin()).collect(),
        ));
        let l = three_layer(&mut g, w).unwrap();
        g.backward(l).unwrap();
        (
            g.scalar(l).to_bits(),
            g.grad_or_zeros(w)
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_rows_stay_on_simplex(z in proptest::collection::vec(-30.0f64..30.0, 6), tau in 0.05f64..5.0) {
            let mut g = Graph::new();
            let m = g.constant(&Tensor::matrix(2, 3, z).unwrap());
            let t = g.scalar_const(tau);
            let p = g.softmax_temperature(m, t).unwrap();
            for row in g.value(p).chunks(3) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|x| *x >= 0.0));
            }
        }

        #[test]
        fn normalized_vectors_have_unit_norm(v in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let mut g = Graph::new();
            let x = g.vector_const(&v);
            let n = g.l2_normalize(x).unwrap();
            let s: f64 = g.value(n).iter().map(|x| x * x).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
