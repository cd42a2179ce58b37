mod common;

use common::*;
use proptest::prelude::*;
use stpf_core::gradcheck::{finite_diff_check, finite_diff_check_many};
use stpf_core::{Error, Graph, Tensor};

fn conv2d(x: &Tensor<f64>, k: &Tensor<f64>, b: Option<&Tensor<f64>>) -> Tensor<f64> {
    let mut g = Graph::new();
    let (xv, kv) = (g.constant(x.clone()), g.constant(k.clone()));
    let bv = b.map(|b| g.constant(b.clone()));
    let y = g.conv2d_same(xv, kv, bv).unwrap();
    g.value(y).clone()
}

fn conv3d(x: &Tensor<f64>, k: &Tensor<f64>, b: Option<&Tensor<f64>>) -> Tensor<f64> {
    let mut g = Graph::new();
    let (xv, kv) = (g.constant(x.clone()), g.constant(k.clone()));
    let bv = b.map(|b| g.constant(b.clone()));
    let y = g.conv3d_same(xv, kv, bv).unwrap();
    g.value(y).clone()
}

fn odd() -> impl Strategy<Value = usize> {
    prop_oneof![Just(1usize), Just(3), Just(5)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn conv2d_matches_direct_loops(
        b in 1usize..3, c in 1usize..4, o in 1usize..4, h in 1usize..7, w in 1usize..7,
        kh in odd(), kw in odd(), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x = uniform(&[b, c, h, w], &mut r, -1.0, 1.0);
        let k = uniform(&[o, c, kh, kw], &mut r, -1.0, 1.0);
        let bias = uniform(&[o], &mut r, -1.0, 1.0);
        let got = conv2d(&x, &k, Some(&bias));
        let want = conv_same_ref(&x, &k, Some(bias.data()));
        prop_assert_eq!(got.shape(), want.shape());
        prop_assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn conv3d_matches_direct_loops(
        c in 1usize..3, o in 1usize..3, d in 1usize..5, h in 1usize..5, w in 1usize..5,
        kd in odd(), kh in odd(), kw in odd(), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x = uniform(&[2, c, d, h, w], &mut r, -1.0, 1.0);
        let k = uniform(&[o, c, kd, kh, kw], &mut r, -1.0, 1.0);
        let got = conv3d(&x, &k, None);
        let want = conv_same_ref(&x, &k, None);
        prop_assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn conv_is_linear_in_input(a in -3.0f64..3.0, bcoef in -3.0f64..3.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = uniform(&[1, 2, 4, 5], &mut r, -1.0, 1.0);
        let y = uniform(&[1, 2, 4, 5], &mut r, -1.0, 1.0);
        let k = uniform(&[3, 2, 3, 3], &mut r, -1.0, 1.0);
        let mix = Tensor::from_fn(x.shape(), |i| a * x.data()[i] + bcoef * y.data()[i]);
        let lhs = conv2d(&mix, &k, None);
        let (cx, cy) = (conv2d(&x, &k, None), conv2d(&y, &k, None));
        let rhs = Tensor::from_fn(lhs.shape(), |i| a * cx.data()[i] + bcoef * cy.data()[i]);
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn elementwise_gradients(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = uniform(&[2, 3], &mut r, -2.0, 2.0);
        let b = uniform(&[2, 3], &mut r, -2.0, 2.0);
        let report = finite_diff_check_many(
            |g, v| {
                let s = g.sigmoid(v[0]);
                let t = g.tanh(v[1]);
                let p = g.mul(s, t)?;
                let q = g.sub(p, v[0])?;
                let q2 = g.mul(q, q)?;
                Ok(g.sum(q2))
            },
            &[a, b],
            1e-5,
        ).unwrap();
        prop_assert!(report.max_rel_error < 1e-7, "{:?}", report);
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut r = rng(3);
    let x = uniform(&[2, 2, 3, 4], &mut r, -1.0, 1.0);
    let k = uniform(&[3, 2, 3, 3], &mut r, -1.0, 1.0);
    let b = uniform(&[3], &mut r, -1.0, 1.0);
    let report = finite_diff_check_many(
        |g, v| {
            let y = g.conv2d_same(v[0], v[1], Some(v[2]))?;
            let y = g.tanh(y);
            Ok(g.sum(y))
        },
        &[x, k, b],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");

    let x = uniform(&[1, 2, 3, 3, 3], &mut r, -1.0, 1.0);
    let k = uniform(&[2, 2, 3, 3, 3], &mut r, -1.0, 1.0);
    let report = finite_diff_check_many(
        |g, v| {
            let y = g.conv3d_same(v[0], v[1], None)?;
            let y2 = g.mul(y, y)?;
            Ok(g.sum(y2))
        },
        &[x, k],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn batch_norm_gradients() {
    let mut r = rng(9);
    let x = uniform(&[3, 2, 2, 3], &mut r, -1.0, 2.0);
    let gamma = uniform(&[2], &mut r, 0.5, 1.5);
    let beta = uniform(&[2], &mut r, -0.5, 0.5);
    let target = uniform(&[3, 2, 2, 3], &mut r, -1.0, 1.0);
    let report = finite_diff_check_many(
        |g, v| {
            let (y, _) = g.batch_norm(
                v[0],
                v[1],
                v[2],
                stpf_core::autodiff::NormStats::Batch { epsilon: 1e-3 },
            )?;
            g.masked_mse(y, &target, &[true, false, true, true, true, true])
        },
        &[x, gamma, beta],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn relu_gradient_away_from_kink() {
    let x = Tensor::new(vec![4], vec![-1.5, -0.2, 0.3, 2.0]).unwrap();
    let err = finite_diff_check(
        |g, v| {
            let y = g.relu(v);
            let y2 = g.mul(y, y)?;
            Ok(g.sum(y2))
        },
        &x,
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-8);
}

#[test]
fn shape_mismatch_is_a_dimension_error() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(g.add(a, b), Err(Error::Dimension(_))));
    let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let k = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(matches!(g.conv2d_same(x, k, None), Err(Error::Dimension(_))));
}

#[test]
fn relu_propagates_nan() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(Tensor::new(vec![2], vec![f32::NAN, -1.0]).unwrap());
    let y = g.relu(x);
    assert!(g.value(y).data()[0].is_nan());
    assert_eq!(g.value(y).data()[1], 0.0);
}
