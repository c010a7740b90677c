mod common;

use common::{grad_check, random_vec, GradReport};
use tttk_nn::bcr::Bcr;
use tttk_nn::layers::{Activation, Conv1dSpec, Conv2dSpec};
use tttk_nn::{Architecture, BcrSpec, ForwardNetSpec, Graph, InverseNetSpec, Net, ParamLayout};

const TOL: f64 = 1e-6;

fn check(name: &str, r: GradReport, probes: usize) {
    println!("{name}: checked {} skipped {} max rel {:.2e}", r.checked, r.skipped, r.max_rel);
    assert_eq!(r.checked, probes, "{name}: too many probes straddled a kink");
    assert!(r.max_rel <= TOL, "{name}: {:.3e}", r.max_rel);
}

#[test]
fn conv1d_gradients() {
    for (seed, act) in [(1, Activation::Id), (2, Activation::Relu)] {
        let mut layout = ParamLayout::default();
        let a = Conv1dSpec::new(3, 4, 3, act).dilated(2).register(&mut layout, "a").unwrap();
        let b = Conv1dSpec::new(4, 2, 5, Activation::Id).register(&mut layout, "b").unwrap();
        let x = random_vec(2 * 10 * 3, seed);
        let total = layout.count();
        let r = grad_check(
            &layout,
            |g: &mut Graph<'_, f64>| {
                let xv = g.input(vec![2, 10, 3], x.clone())?;
                let h = a.apply(g, xv)?;
                b.apply(g, h)
            },
            total,
            seed,
        );
        check("conv1d", r, total);
    }
}

#[test]
fn conv2d_gradients() {
    let mut layout = ParamLayout::default();
    let a = Conv2dSpec::new(2, 3, 3, Activation::Relu).register(&mut layout, "a").unwrap();
    let b = Conv2dSpec::new(3, 1, 3, Activation::Id).register(&mut layout, "b").unwrap();
    let x = random_vec(2 * 6 * 4 * 2, 3);
    let total = layout.count();
    let r = grad_check(
        &layout,
        |g: &mut Graph<'_, f64>| {
            let xv = g.input(vec![2, 6, 4, 2], x.clone())?;
            let h = a.apply(g, xv)?;
            b.apply(g, h)
        },
        total,
        4,
    );
    check("conv2d", r, total);
}

#[test]
fn structural_op_gradients() {
    // each op sits between two convolutions so its backward rule is exercised
    let mut layout = ParamLayout::default();
    let a = Conv1dSpec::new(2, 3, 3, Activation::Id).register(&mut layout, "a").unwrap();
    let b = Conv1dSpec::new(2, 3, 3, Activation::Id).register(&mut layout, "b").unwrap();
    let c = Conv1dSpec::new(6, 2, 3, Activation::Id).register(&mut layout, "c").unwrap();
    let x = random_vec(2 * 8 * 2, 5);
    let total = layout.count();
    let r = grad_check(
        &layout,
        |g: &mut Graph<'_, f64>| {
            let xv = g.input(vec![2, 8, 2], x.clone())?;
            let ha = a.apply(g, xv)?;
            let hb = b.apply(g, xv)?;
            let s = g.haar_sum(ha, 2)?;
            let d = g.haar_diff(hb, 1)?;
            let m = g.haar_merge(s, d, 4)?;
            let sum = g.add(m, ha)?;
            let cat = g.concat(sum, d)?;
            let r = g.reshape(cat, vec![2, 8, 6])?;
            let y = c.apply(g, r)?;
            g.reshape(y, vec![2, 16])
        },
        total,
        6,
    );
    check("structural", r, total);
}

#[test]
fn bcr_gradients() {
    let mut layout = ParamLayout::default();
    let lift = Conv1dSpec::new(2, 3, 1, Activation::Id).register(&mut layout, "lift").unwrap();
    let bcr = Bcr::register(BcrSpec::new(3, 3, 24), 24, &mut layout, "bcr").unwrap();
    let x = random_vec(2 * 24 * 2, 7);
    for seed in [8, 9] {
        let r = grad_check(
            &layout,
            |g: &mut Graph<'_, f64>| {
                let xv = g.input(vec![2, 24, 2], x.clone())?;
                let h = lift.apply(g, xv)?;
                bcr.apply(g, h)
            },
            25,
            seed,
        );
        check("bcr", r, 25);
    }
}

fn net_check(arch: Architecture, probes: usize, seed: u64) {
    let net = Net::new(arch).unwrap();
    let [a, b] = net.input_shape();
    let x = random_vec(2 * a * b, seed);
    let r = grad_check(
        net.layout(),
        |g: &mut Graph<'_, f64>| {
            let xv = g.input(vec![2, a, b], x.clone())?;
            net.build(g, xv)
        },
        probes,
        seed,
    );
    check("net", r, probes);
}

#[test]
fn inverse_net_gradients() {
    let spec = InverseNetSpec::with_sizes(16, 5, 3, 3, 3);
    net_check(Architecture::Inverse(spec), 60, 11);
}

#[test]
fn forward_net_gradients() {
    let spec = ForwardNetSpec::with_sizes(16, 5, 3, 3);
    net_check(Architecture::Forward(spec), 60, 12);
}
