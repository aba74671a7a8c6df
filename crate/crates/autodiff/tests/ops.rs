use shapeedit_autodiff::{Error, Graph, Tensor};

#[test]
fn cosine_of_vector_with_itself_is_one() {
    let mut g = Graph::new();
    let v = g.vector_const(&[0.3, -1.2, 4.0]);
    let c = g.cosine_similarity(v, v).unwrap();
    assert!((g.scalar(c) - 1.0).abs() < 1e-15);
}

#[test]
fn softmax_with_temperature_is_normalized() {
    let mut g = Graph::new();
    let logits = g.vector_const(&[3.0, -2.0, 0.5, 10.0]);
    for tau in [0.01, 0.5, 1.0, 7.0] {
        let t = g.scalar_const(tau);
        let p = g.softmax_temperature(logits, t).unwrap();
        let s: f64 = g.value(p).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(g.value(p).iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn dot_direct_arithmetic() {
    let mut g = Graph::new();
    let a = g.vector_const(&[1.0, 0.0]);
    let b = g.vector_const(&[0.6, 0.8]);
    let d = g.dot(a, b).unwrap();
    assert!((g.scalar(d) - 0.6).abs() < 1e-15);
}

#[test]
fn sum_of_squares_gradient() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0, 3.0]));
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
}

#[test]
fn cosine_gradient_lies_in_tangent_space() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![0.6, 0.0, 0.8]));
    let c = g.vector_const(&[0.1, -2.0, 0.7]);
    let cs = g.cosine_similarity(x, c).unwrap();
    g.backward(cs).unwrap();
    let grad = g.grad(x).unwrap();
    let radial: f64 = grad.iter().zip([0.6, 0.0, 0.8]).map(|(a, b)| a * b).sum();
    assert!(radial.abs() < 1e-10, "radial component {radial}");
}

#[test]
fn backward_twice_is_an_error_until_reset() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0]));
    let loss = g.sum(x);
    g.backward(loss).unwrap();
    assert!(matches!(g.backward(loss), Err(Error::Contract(_))));
    g.reset();
    g.backward(loss).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

#[test]
fn shape_and_domain_errors() {
    let mut g = Graph::new();
    let a = g.vector_const(&[1.0, 2.0]);
    let b = g.vector_const(&[1.0, 2.0, 3.0]);
    assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
    assert!(matches!(g.dot(a, b), Err(Error::Shape { .. })));
    let m = g.constant(&Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
    assert!(matches!(g.matmul(m, m), Err(Error::Shape { .. })));

    let z = g.vector_const(&[0.0, 0.0]);
    assert!(matches!(g.l2_normalize(z), Err(Error::Domain { .. })));
    let neg = g.vector_const(&[1.0, -1.0]);
    assert!(matches!(g.log(neg), Err(Error::Domain { .. })));
    assert!(matches!(
        g.cosine_similarity(z, a),
        Err(Error::Domain { .. })
    ));
    let t = g.scalar_const(0.0);
    assert!(matches!(
        g.softmax_temperature(a, t),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn tensor_shape_must_match_values() {
    assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    let t = Tensor::matrix(2, 3, vec![1.0; 6]).unwrap();
    assert_eq!(t.numel(), 6);
    assert!(Tensor::scalar(2.0).is_scalar());
}

#[test]
fn cosine_rows_zero_convention() {
    let mut g = Graph::new();
    let a = g.param(&Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap());
    let b = g.param(&Tensor::matrix(2, 2, vec![1.0, 1.0, 3.0, 4.0]).unwrap());
    let c = g.cosine_rows(a, b).unwrap();
    assert!((g.value(c)[0] - 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(g.value(c)[1], 0.0);
    let s = g.sum(c);
    g.backward(s).unwrap();
    assert_eq!(&g.grad(a).unwrap()[2..], &[0.0, 0.0]);
    assert_eq!(&g.grad(b).unwrap()[2..], &[0.0, 0.0]);
}

#[test]
fn abs_subgradient_is_zero_at_kink() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![0.0, -2.0, 3.0]));
    let a = g.abs(x);
    let s = g.sum(a);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, -1.0, 1.0]);
}

#[test]
fn constant_branches_receive_no_gradient() {
    let mut g = Graph::new();
    let x = g.param(&Tensor::vector(vec![1.0, 2.0]));
    let c = g.vector_const(&[3.0, 4.0]);
    let p = g.mul(x, c).unwrap();
    let s = g.sum(p);
    g.backward(s).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad(x).unwrap(), &[3.0, 4.0]);
}
