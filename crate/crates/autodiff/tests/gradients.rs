use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xsrl_autodiff::{check_gradients, mlp_layers, Graph, NodeId, ParamSet, Primitive, Result, Tolerance};

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.5..1.5))
}

/// Reduces any node to a scalar with a fixed random projection so every
/// output entry contributes a distinct weight.
fn project(g: &mut Graph, y: NodeId, rng: &mut ChaCha8Rng) -> Result<NodeId> {
    let (r, c) = g.value(y).dim();
    let w = g.constant(random(rng, r, c));
    let p = g.mul(y, w)?;
    let s = g.sum_cols(p)?;
    g.mean_rows(s)
}

fn check_primitive(kind: Primitive, shapes: &[(usize, usize)], trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let inputs: Vec<_> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
        let proj_seed = rng.random::<u64>();
        let report = check_gradients(
            &inputs,
            |g, ids| {
                let y = g.apply(kind, ids)?;
                project(g, y, &mut ChaCha8Rng::seed_from_u64(proj_seed))
            },
            Tolerance::default(),
        )
        .unwrap();
        assert!(
            report.passed(),
            "{} trial {trial}: max rel error {:e}",
            kind.name(),
            report.max_rel_error
        );
    }
}

#[test]
fn every_primitive_matches_finite_differences() {
    let cases: Vec<(Primitive, Vec<(usize, usize)>)> = vec![
        (Primitive::Affine, vec![(3, 4), (4, 5), (1, 5)]),
        (Primitive::Concat, vec![(3, 2), (3, 4), (3, 1)]),
        (Primitive::LeakyRelu { slope: 0.01 }, vec![(4, 3)]),
        (Primitive::Tanh, vec![(4, 3)]),
        (Primitive::Add, vec![(3, 4), (1, 4)]),
        (Primitive::Sub, vec![(3, 4), (3, 1)]),
        (Primitive::Mul, vec![(3, 4), (1, 1)]),
        (Primitive::Mul, vec![(3, 4), (3, 4)]),
        (Primitive::Scale(-0.7), vec![(2, 3)]),
        (Primitive::AddScalar(2.0), vec![(2, 3)]),
        (Primitive::SquaredNorm, vec![(4, 3)]),
        (Primitive::SumCols, vec![(4, 3)]),
        (Primitive::MeanRows, vec![(4, 3)]),
        (Primitive::GaussianLogDensity, vec![(3, 2), (3, 2), (3, 2)]),
        (Primitive::Softplus, vec![(4, 3)]),
        (Primitive::Exp, vec![(4, 3)]),
        (Primitive::Clamp { lo: -0.5, hi: 0.5 }, vec![(4, 3)]),
        (Primitive::Minimum, vec![(4, 3), (4, 3)]),
    ];
    for (i, (kind, shapes)) in cases.into_iter().enumerate() {
        check_primitive(kind, &shapes, 100, 1000 + i as u64);
    }
}

#[test]
fn three_layer_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let net = ParamSet::dense("mlp", mlp_layers(5, &[8, 6], 3), &mut rng);
        let x = random(&mut rng, 4, 5);
        let mut inputs = vec![x];
        inputs.extend(net.values().cloned());
        let report = check_gradients(
            &inputs,
            |g, ids| {
                let mut h = ids[0];
                let depth = net.layers().len();
                for i in 0..depth {
                    h = g.affine(h, ids[1 + 2 * i], ids[2 + 2 * i])?;
                    if i + 1 < depth {
                        h = g.leaky_relu(h, 0.01)?;
                    }
                }
                h = g.tanh(h)?;
                let n = g.squared_norm(h)?;
                g.mean_rows(n)
            },
            Tolerance::default(),
        )
        .unwrap();
        assert!(report.passed(), "max rel {:e}", report.max_rel_error);
    }
}

#[test]
fn kink_inside_the_step_is_not_a_failure() {
    let x = Array2::from_shape_vec((1, 3), vec![0.0, 0.5, -0.5]).unwrap();
    let report = check_gradients(
        &[x],
        |g, ids| {
            let y = g.leaky_relu(ids[0], 0.01)?;
            let s = g.sum_cols(y)?;
            g.mean_rows(s)
        },
        Tolerance::default(),
    )
    .unwrap();
    assert!(report.passed());
    assert_eq!((report.kinks, report.checked), (1, 3));
}

#[test]
fn wrong_gradient_is_caught() {
    // a forward value that depends on the input only through a constant
    // copy has a zero backward gradient but a nonzero numeric one
    let x = Array2::from_elem((1, 1), 0.3);
    let report = check_gradients(
        &[x],
        |g, ids| {
            let copy = g.constant(g.value(ids[0]).clone());
            let y = g.mul(copy, copy)?;
            g.mean_rows(y)
        },
        Tolerance::default(),
    )
    .unwrap();
    assert_eq!(report.failures, 1);
}

fn mlp_loss(net: &ParamSet, x: &Array2<f64>) -> (Graph, NodeId) {
    let mut g = Graph::new();
    let b = net.bind(&mut g, true);
    let xi = g.constant(x.clone());
    let y = net.forward(&mut g, &b, xi).unwrap();
    let n = g.squared_norm(y).unwrap();
    let l = g.mean_rows(n).unwrap();
    (g, l)
}

#[test]
fn backward_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = ParamSet::dense("m", mlp_layers(6, &[16, 16], 4), &mut rng);
    let x = random(&mut rng, 8, 6);
    let (mut g1, l1) = mlp_loss(&net, &x);
    let (mut g2, l2) = mlp_loss(&net, &x);
    let a = g1.backward(l1).unwrap();
    let b = g2.backward(l2).unwrap();
    for ((_, la, ga), (_, lb, gb)) in a.iter().zip(b.iter()) {
        assert_eq!(la, lb);
        assert!(ga.iter().zip(gb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn node_count_equals_applications() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = ParamSet::dense("m", mlp_layers(3, &[4, 4], 2), &mut rng);
    let (g, _) = mlp_loss(&net, &random(&mut rng, 2, 3));
    // 3 affine + 2 leaky + squared norm + mean
    assert_eq!(g.primitive_count(), 7);
    assert_eq!(g.len(), 7 + net.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn squared_norm_gradient_is_twice_input(xs in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        let mut g = Graph::new();
        let x = g.param("x", Array2::from_shape_vec((1, xs.len()), xs.clone()).unwrap());
        let n = g.squared_norm(x).unwrap();
        let grads = g.backward(n).unwrap();
        let gx = grads.get(x).unwrap();
        for (a, b) in gx.iter().zip(&xs) {
            prop_assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn softplus_is_positive_and_exceeds_relu(x in -50.0f64..50.0) {
        let mut g = Graph::new();
        let v = g.constant(Array2::from_elem((1, 1), x));
        let y = g.softplus(v).unwrap();
        let s = g.scalar_value(y);
        prop_assert!(s > 0.0 || x < -30.0);
        prop_assert!(s >= x.max(0.0));
    }
}
