use contig_autodiff::{AdError, BatchNorm1d, Graph, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Builds `sum(f(inputs) * weights)` so that every output element carries a
/// distinct, generic weight.
type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

fn projected_loss(g: &mut Graph, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.value(out).shape().to_vec();
    let w = random(&mut rng, &shape, -1.0, 1.0);
    let w = g.constant(w);
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

fn eval(inputs: &[Tensor], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let loss = projected_loss(&mut g, out, 99);
    g.value(loss).item()
}

/// Norm-wise relative error between the analytic gradient and a central
/// finite-difference estimate, maximised over inputs.
fn max_rel_error(inputs: &[Tensor], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let loss = projected_loss(&mut g, out, 99);
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(|t| t.data().to_vec()).unwrap_or(vec![0.0; inputs[k].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            numeric.push((eval(&plus, build) - eval(&minus, build)) / (2.0 * H));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let denom = na.max(nn);
        let rel = if denom == 0.0 { 0.0 } else { diff / denom };
        worst = worst.max(rel);
    }
    worst
}

fn check(name: &str, inputs: &[Tensor], build: &Build) {
    let err = max_rel_error(inputs, build);
    assert!(err < 1e-6, "{name}: relative gradient error {err:e}");
}

#[test]
fn matmul_examples() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    match g.matmul(a, b) {
        Err(AdError::Shape { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = [random(&mut rng, &[3, 4], -2.0, 2.0), random(&mut rng, &[4, 2], -2.0, 2.0)];
    check("matmul", &inputs, &|g, v| g.matmul(v[0], v[1]).unwrap());
}

#[test]
fn cosine_examples() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap());
    let s = g.cosine_similarity(a, a).unwrap();
    assert!((g.value(s).get(0, 0) - 1.0).abs() < 1e-15);
    assert!((g.value(s).get(1, 1) - 1.0).abs() < 1e-15);

    let a = g.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap());
    let s = g.cosine_similarity(a, b).unwrap();
    assert_eq!(g.value(s).data(), &[0.0]);

    let a = g.constant(Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
    let s = g.cosine_similarity(a, b).unwrap();
    assert!((g.value(s).item() - 0.70710678).abs() < 1e-8);
}

#[test]
fn cosine_rejects_zero_rows() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
    let b = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    assert!(matches!(
        g.cosine_similarity(a, b),
        Err(AdError::DegenerateEmbedding { row: 1, .. })
    ));
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let x = g.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0, 6.0]);

    // second call accumulates
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[4.0, 8.0, 12.0]);
    g.zero_grad();
    assert!(g.grad(x).is_none());
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let x = g.param(Tensor::zeros(&[2, 2]));
    let y = g.relu(x);
    assert!(matches!(g.backward(y), Err(AdError::NonScalarLoss(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::filled(&[1, 2], 2.0));
    let c = g.constant(Tensor::filled(&[1, 2], 3.0));
    let p = g.mul(x, c).unwrap();
    let s = g.sum(p);
    g.backward(s).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad(x).unwrap().data(), &[3.0, 3.0]);
}

#[test]
fn elementwise_primitives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, &[3, 4], -2.0, 2.0);
    let b = random(&mut rng, &[3, 4], -2.0, 2.0);
    let pos = random(&mut rng, &[3, 4], 0.2, 2.0);
    let bias = random(&mut rng, &[1, 4], -2.0, 2.0);
    check("add", &[a.clone(), b.clone()], &|g, v| g.add(v[0], v[1]).unwrap());
    check("sub", &[a.clone(), b.clone()], &|g, v| g.sub(v[0], v[1]).unwrap());
    check("mul", &[a.clone(), b.clone()], &|g, v| g.mul(v[0], v[1]).unwrap());
    check("add_row", &[a.clone(), bias], &|g, v| g.add_row(v[0], v[1]).unwrap());
    check("scale", &[a.clone()], &|g, v| g.scale(v[0], -1.7));
    check("relu", &[a.clone()], &|g, v| g.relu(v[0]));
    check("exp", &[a.clone()], &|g, v| g.exp(v[0]));
    check("log", &[pos], &|g, v| g.log(v[0]).unwrap());
    check("transpose", &[a.clone()], &|g, v| g.transpose(v[0]).unwrap());
}

#[test]
fn reductions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, &[3, 4], -2.0, 2.0);
    let sq = random(&mut rng, &[4, 4], -2.0, 2.0);
    check("sum", &[a.clone()], &|g, v| {
        let e = g.exp(v[0]);
        g.sum(e)
    });
    check("mean", &[a.clone()], &|g, v| {
        let e = g.exp(v[0]);
        g.mean(e)
    });
    check("softmax_rows", &[a.clone()], &|g, v| g.softmax_rows(v[0]).unwrap());
    check("logsumexp_rows", &[a.clone()], &|g, v| g.logsumexp_rows(v[0], false).unwrap());
    check("logsumexp_rows_offdiag", &[sq.clone()], &|g, v| g.logsumexp_rows(v[0], true).unwrap());
    check("diag", &[sq], &|g, v| g.diag(v[0]).unwrap());
}

#[test]
fn row_plumbing_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random(&mut rng, &[4, 3], -2.0, 2.0);
    let b = random(&mut rng, &[2, 3], -2.0, 2.0);
    check("select_rows", &[a.clone()], &|g, v| g.select_rows(v[0], &[2, 0, 2]).unwrap());
    check("concat_rows", &[a.clone(), b], &|g, v| g.concat_rows(&[v[0], v[1], v[0]]).unwrap());
    let c = random(&mut rng, &[4, 2], -2.0, 2.0);
    check("concat_cols", &[a, c], &|g, v| g.concat_cols(&[v[0], v[1], v[0]]).unwrap());
}

#[test]
fn cosine_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random(&mut rng, &[4, 5], -2.0, 2.0);
    let b = random(&mut rng, &[3, 5], -2.0, 2.0);
    check("cosine", &[a.clone(), b], &|g, v| g.cosine_similarity(v[0], v[1]).unwrap());
    check("cosine_self", &[a], &|g, v| g.cosine_similarity(v[0], v[0]).unwrap());
}

#[test]
fn batchnorm_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&mut rng, &[5, 3], -2.0, 2.0);
    let gamma = random(&mut rng, &[1, 3], -2.0, 2.0);
    let beta = random(&mut rng, &[1, 3], -2.0, 2.0);
    check("batchnorm_train", &[x.clone(), gamma.clone(), beta.clone()], &|g, v| {
        g.batchnorm_train(v[0], v[1], v[2], 1e-5).unwrap().0
    });
    check("batchnorm_eval", &[x, gamma, beta], &|g, v| {
        g.batchnorm_eval(v[0], v[1], v[2], &[0.1, -0.3, 0.5], &[1.5, 0.7, 2.0], 1e-5).unwrap()
    });
}

#[test]
fn batchnorm_running_statistics() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![3.0, 4.0]]).unwrap());
    let gamma = g.constant(Tensor::filled(&[1, 2], 1.0));
    let beta = g.constant(Tensor::zeros(&[1, 2]));
    let mut bn = BatchNorm1d::new(2);
    let y = bn.forward(&mut g, x, gamma, beta, true).unwrap();
    // batch mean (2, 2), unbiased var (2, 8)
    assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
    assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
    assert!((bn.running_var[1] - (0.9 + 0.8)).abs() < 1e-15);
    // normalized with biased variance: (1-2)/sqrt(1+eps)
    let expect = -1.0 / (1.0f64 + 1e-5).sqrt();
    assert!((g.value(y).get(0, 0) - expect).abs() < 1e-12);

    let before = bn.clone();
    let _ = bn.forward(&mut g, x, gamma, beta, false).unwrap();
    assert_eq!(bn, before);
}

#[test]
fn batchnorm_train_needs_two_rows() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 2]));
    let gamma = g.constant(Tensor::filled(&[1, 2], 1.0));
    let beta = g.constant(Tensor::zeros(&[1, 2]));
    assert!(g.batchnorm_train(x, gamma, beta, 1e-5).is_err());
}

#[test]
fn fan_out_accumulates_like_unrolled_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, &[3, 3], -2.0, 2.0);
    let w = random(&mut rng, &[3, 3], -2.0, 2.0);

    // shared: y = relu(x W) * (x W) + x W
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let wv = g.constant(w.clone());
    let h = g.matmul(xv, wv).unwrap();
    let r = g.relu(h);
    let p = g.mul(r, h).unwrap();
    let y = g.add(p, h).unwrap();
    let l = g.sum(y);
    g.backward(l).unwrap();
    let shared = g.grad(xv).unwrap().clone();

    // unrolled: three independent copies of x, gradients summed
    let mut g = Graph::new();
    let copies: Vec<Var> = (0..3).map(|_| g.param(x.clone())).collect();
    let wv = g.constant(w);
    let hs: Vec<Var> = copies.iter().map(|&c| g.matmul(c, wv).unwrap()).collect();
    let r = g.relu(hs[0]);
    let p = g.mul(r, hs[1]).unwrap();
    let y = g.add(p, hs[2]).unwrap();
    let l = g.sum(y);
    g.backward(l).unwrap();
    let mut unrolled = vec![0.0; 9];
    for c in copies {
        for (u, v) in unrolled.iter_mut().zip(g.grad(c).unwrap().data()) {
            *u += v;
        }
    }
    for (a, b) in shared.data().iter().zip(&unrolled) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(&mut rng, &[4, 6], -2.0, 2.0);
        let b = random(&mut rng, &[4, 6], -2.0, 2.0);
        let mut g = Graph::new();
        let (va, vb) = (g.param(a), g.param(b));
        let s = g.cosine_similarity(va, vb).unwrap();
        let l = g.logsumexp_rows(s, false).unwrap();
        let l = g.sum(l);
        g.backward(l).unwrap();
        (g.value(l).item(), g.grad(va).unwrap().clone(), g.grad(vb).unwrap().clone())
    };
    let (l1, a1, b1) = run();
    let (l2, a2, b2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-20.0f64..20.0, 12)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(3, 4, vals).unwrap());
        let s = g.softmax_rows(x).unwrap();
        for r in 0..3 {
            let total: f64 = g.value(s).row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_is_bounded_and_scale_invariant(
        vals in proptest::collection::vec(-5.0f64..5.0, 8),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(vals[..4].iter().map(|v| v * v).sum::<f64>() > 1e-6);
        prop_assume!(vals[4..].iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 4, vals[..4].to_vec()).unwrap());
        let b = g.constant(Tensor::matrix(1, 4, vals[4..].to_vec()).unwrap());
        let scaled = g.constant(Tensor::matrix(1, 4, vals[..4].iter().map(|v| v * c).collect()).unwrap());
        let s1 = g.cosine_similarity(a, b).unwrap();
        let s2 = g.cosine_similarity(scaled, b).unwrap();
        let (v1, v2) = (g.value(s1).item(), g.value(s2).item());
        prop_assert!(v1.abs() <= 1.0 + 1e-12);
        prop_assert!((v1 - v2).abs() < 1e-12);
    }
}
