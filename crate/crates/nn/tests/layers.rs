mod common;

use common::{random_vec, roll};
use tttk_nn::bcr::Bcr;
use tttk_nn::layers::{Activation, Conv1dSpec, Conv2dSpec};
use tttk_nn::{BcrSpec, Graph, ParamLayout, Params};

fn conv1d_naive(x: &[f64], w: &[f64], b: &[f64], (batch, n, ci, co, k, dil): (usize, usize, usize, usize, usize, usize)) -> Vec<f64> {
    let mut y = vec![0.0; batch * n * co];
    let c = (k / 2) as isize;
    for s in 0..batch {
        for i in 0..n {
            for o in 0..co {
                let mut acc = b[o];
                for t in 0..k {
                    let j = (i as isize + (t as isize - c) * dil as isize).rem_euclid(n as isize) as usize;
                    for a in 0..ci {
                        acc += w[(t * ci + a) * co + o] * x[(s * n + j) * ci + a];
                    }
                }
                y[(s * n + i) * co + o] = acc;
            }
        }
    }
    y
}

fn conv2d_naive(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    (batch, n0, n1, ci, co, k0, k1): (usize, usize, usize, usize, usize, usize, usize),
    periodic_second: bool,
) -> Vec<f64> {
    let mut y = vec![0.0; batch * n0 * n1 * co];
    for s in 0..batch {
        for i in 0..n0 {
            for j in 0..n1 {
                for o in 0..co {
                    let mut acc = b[o];
                    for t0 in 0..k0 {
                        let ii = (i as isize + t0 as isize - (k0 / 2) as isize).rem_euclid(n0 as isize) as usize;
                        for t1 in 0..k1 {
                            let jj = j as isize + t1 as isize - (k1 / 2) as isize;
                            let jj = if periodic_second {
                                jj.rem_euclid(n1 as isize)
                            } else if (0..n1 as isize).contains(&jj) {
                                jj
                            } else {
                                continue;
                            } as usize;
                            for a in 0..ci {
                                acc += w[((t0 * k1 + t1) * ci + a) * co + o] * x[((s * n0 + ii) * n1 + jj) * ci + a];
                            }
                        }
                    }
                    y[((s * n0 + i) * n1 + j) * co + o] = acc;
                }
            }
        }
    }
    y
}

#[test]
fn conv1d_matches_direct_summation() {
    for (seed, &(batch, n, ci, co, k, dil)) in [(2, 12, 3, 4, 3, 1), (3, 16, 5, 2, 5, 2), (1, 7, 4, 6, 1, 1), (2, 8, 2, 3, 9, 3)]
        .iter()
        .enumerate()
    {
        let mut layout = ParamLayout::default();
        let conv = Conv1dSpec::new(ci, co, k, Activation::Id).dilated(dil).register(&mut layout, "c").unwrap();
        let params = Params::<f64>::uniform(&layout, 1.0, seed as u64);
        let x = random_vec(batch * n * ci, 100 + seed as u64);
        let mut g = Graph::new(&params);
        let xv = g.input(vec![batch, n, ci], x.clone()).unwrap();
        let y = conv.apply(&mut g, xv).unwrap();
        let want = conv1d_naive(&x, params.get(conv.weight), params.get(conv.bias), (batch, n, ci, co, k, dil));
        let diff = g.value(y).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "{diff}");
    }
}

#[test]
fn conv1d_identity_and_shift() {
    let (n, c) = (10, 3);
    let x = random_vec(n * c, 5);
    let mut layout = ParamLayout::default();
    let id = Conv1dSpec::new(c, c, 1, Activation::Id).register(&mut layout, "id").unwrap();
    let shift = Conv1dSpec::new(c, c, 3, Activation::Id).register(&mut layout, "shift").unwrap();
    let mut params = Params::<f64>::zeros(&layout);
    for a in 0..c {
        params.values[id.weight.index()][a * c + a] = 1.0;
        // tap 2 reads x[i + 1]
        params.values[shift.weight.index()][(2 * c + a) * c + a] = 1.0;
    }
    let mut g = Graph::new(&params);
    let xv = g.input(vec![1, n, c], x.clone()).unwrap();
    let y = id.apply(&mut g, xv).unwrap();
    assert_eq!(g.value(y), &x[..]);
    let z = shift.apply(&mut g, xv).unwrap();
    assert_eq!(g.value(z), &roll(&x, 1, n, c, n - 1)[..]);
}

#[test]
fn conv2d_matches_direct_summation() {
    for (seed, &(batch, n0, n1, ci, co, k)) in [(2, 8, 5, 2, 3, 3), (1, 6, 4, 3, 2, 5), (2, 5, 3, 1, 4, 1)].iter().enumerate() {
        let mut layout = ParamLayout::default();
        let conv = Conv2dSpec::new(ci, co, k, Activation::Id).register(&mut layout, "c").unwrap();
        let params = Params::<f64>::uniform(&layout, 1.0, seed as u64);
        let x = random_vec(batch * n0 * n1 * ci, 200 + seed as u64);
        let mut g = Graph::new(&params);
        let xv = g.input(vec![batch, n0, n1, ci], x.clone()).unwrap();
        let y = conv.apply(&mut g, xv).unwrap();
        let want = conv2d_naive(&x, params.get(conv.weight), params.get(conv.bias), (batch, n0, n1, ci, co, k, k), false);
        let diff = g.value(y).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12, "{diff}");
    }
}

#[test]
fn conv2d_identity_kernel() {
    let (n0, n1, c) = (6, 4, 2);
    let mut layout = ParamLayout::default();
    let conv = Conv2dSpec::new(c, c, 3, Activation::Id).register(&mut layout, "c").unwrap();
    let mut params = Params::<f64>::zeros(&layout);
    for a in 0..c {
        params.values[conv.weight.index()][((3 + 1) * c + a) * c + a] = 1.0;
    }
    let x = random_vec(n0 * n1 * c, 9);
    let mut g = Graph::new(&params);
    let xv = g.input(vec![1, n0, n1, c], x.clone()).unwrap();
    let y = conv.apply(&mut g, xv).unwrap();
    assert_eq!(g.value(y), &x[..]);
}

#[test]
fn zero_padding_invisible_for_interior_support() {
    let (n0, n1, ci, co) = (7, 6, 2, 3);
    let mut layout = ParamLayout::default();
    let conv = Conv2dSpec::new(ci, co, 3, Activation::Id).register(&mut layout, "c").unwrap();
    let params = Params::<f64>::uniform(&layout, 1.0, 4);
    let mut x = random_vec(n0 * n1 * ci, 10);
    for i in 0..n0 {
        for j in [0, n1 - 1] {
            for a in 0..ci {
                x[(i * n1 + j) * ci + a] = 0.0;
            }
        }
    }
    let mut g = Graph::new(&params);
    let xv = g.input(vec![1, n0, n1, ci], x.clone()).unwrap();
    let y = conv.apply(&mut g, xv).unwrap();
    let periodic = conv2d_naive(&x, params.get(conv.weight), params.get(conv.bias), (1, n0, n1, ci, co, 3, 3), true);
    let diff = g.value(y).iter().zip(&periodic).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn haar_merge_inverts_split() {
    let (n, c) = (16, 3);
    let params = Params::<f64>::zeros(&ParamLayout::default());
    let x = random_vec(2 * n * c, 11);
    for p in [1, 2, 4, 8] {
        let mut g = Graph::new(&params);
        let xv = g.input(vec![2, n, c], x.clone()).unwrap();
        let s = g.haar_sum(xv, p).unwrap();
        let d = g.haar_diff(xv, p).unwrap();
        let y = g.haar_merge(s, d, p).unwrap();
        let diff = g.value(y).iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-15, "p={p}: {diff}");
        // the pair is orthonormal up to the redundancy factor 2
        let energy: f64 = g.value(s).iter().chain(g.value(d)).map(|v| v * v).sum();
        let want: f64 = 2.0 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((energy - want).abs() <= 1e-12 * want);
    }
    let mut g = Graph::new(&params);
    let xv = g.input(vec![2, n, c], x).unwrap();
    assert!(g.haar_sum(xv, n).is_err());
}

fn bcr_case(seed: u64) -> (Bcr, ParamLayout) {
    let mut layout = ParamLayout::default();
    let spec = BcrSpec::new(3, 2, 16);
    assert_eq!(spec.levels, 4);
    let _ = seed;
    (Bcr::register(spec, 16, &mut layout, "bcr").unwrap(), layout)
}

#[test]
fn bcr_zero_weights_give_zero() {
    let (bcr, layout) = bcr_case(0);
    let params = Params::<f64>::zeros(&layout);
    let mut g = Graph::new(&params);
    let xv = g.input(vec![2, 16, 3], random_vec(96, 1)).unwrap();
    let y = bcr.apply(&mut g, xv).unwrap();
    assert!(g.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn bcr_count_matches_layout() {
    for (c, k, n) in [(3, 2, 16), (4, 1, 24), (5, 3, 40), (30, 6, 160)] {
        let mut layout = ParamLayout::default();
        let spec = BcrSpec::new(c, k, n);
        let bcr = Bcr::register(spec, n, &mut layout, "b").unwrap();
        assert_eq!(layout.count(), spec.param_count(n));
        assert_eq!(bcr.param_count(), spec.param_count(n));
    }
    assert!(BcrSpec { levels: 4, ..BcrSpec::new(3, 2, 24) }.validate(24).is_err());
}

#[test]
fn bcr_commutes_with_circular_shift() {
    let (bcr, layout) = bcr_case(0);
    let (b, n, c) = (2, 16, 3);
    for seed in 0..5 {
        let params = Params::<f64>::uniform(&layout, 0.5, seed);
        let x = random_vec(b * n * c, 30 + seed);
        let run = |x: Vec<f64>| {
            let mut g = Graph::new(&params);
            let xv = g.input(vec![b, n, c], x).unwrap();
            let y = bcr.apply(&mut g, xv).unwrap();
            g.value(y).to_vec()
        };
        for k in [1, 3, 8] {
            assert_eq!(run(roll(&x, b, n, c, k)), roll(&run(x.clone()), b, n, c, k), "seed {seed} shift {k}");
        }
    }
}

#[test]
fn conv1d_commutes_with_circular_shift() {
    let mut layout = ParamLayout::default();
    let conv = Conv1dSpec::new(3, 4, 5, Activation::Relu).dilated(2).register(&mut layout, "c").unwrap();
    let params = Params::<f64>::uniform(&layout, 1.0, 3);
    let x = random_vec(2 * 12 * 3, 8);
    let run = |x: Vec<f64>| {
        let mut g = Graph::new(&params);
        let xv = g.input(vec![2, 12, 3], x).unwrap();
        let y = conv.apply(&mut g, xv).unwrap();
        g.value(y).to_vec()
    };
    assert_eq!(run(roll(&x, 2, 12, 3, 5)), roll(&run(x), 2, 12, 4, 5));
}

#[test]
fn shape_mismatch_is_reported() {
    let mut layout = ParamLayout::default();
    let conv = Conv1dSpec::new(3, 4, 3, Activation::Id).register(&mut layout, "c").unwrap();
    let params = Params::<f64>::zeros(&layout);
    let mut g = Graph::new(&params);
    let xv = g.input(vec![1, 8, 2], vec![0.0; 16]).unwrap();
    assert!(conv.apply(&mut g, xv).is_err());
    assert!(g.input(vec![2, 2], vec![0.0; 3]).is_err());
    assert!(Conv1dSpec::new(3, 4, 2, Activation::Id).validate().is_err());
    assert!(Conv2dSpec::new(3, 4, 4, Activation::Id).validate().is_err());
}
