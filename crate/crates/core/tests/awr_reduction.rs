//! With `h ≡ 1` and the L2 loss, CAWR must track a from-scratch AWR loop bit for bit.

mod common;

use cawr::approx::OptimizerKind;
use cawr::mdp::{Axis, Discretizer};
use cawr::policy::ApproxSpec;

#[test]
fn constant_priority_l2_is_plain_awr_mlp_adam() {
    let adam = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    assert_eq!(common::awr_divergence(adam, ApproxSpec::Mlp { hidden: vec![8] }, &[0, 7]), None);
}

#[test]
fn constant_priority_l2_is_plain_awr_mlp_sgd() {
    let sgd = OptimizerKind::Sgd { momentum: 0.0 };
    assert_eq!(common::awr_divergence(sgd, ApproxSpec::Mlp { hidden: vec![8, 8] }, &[0, 7]), None);
}

#[test]
fn constant_priority_l2_is_plain_awr_tabular() {
    let states = Discretizer::new(vec![Axis::integers(4), Axis::integers(3)]).unwrap();
    let actions = Discretizer::new(vec![Axis::integer_range(-1, 1); 2]).unwrap();
    let adam = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    assert_eq!(common::awr_divergence(adam, ApproxSpec::Tabular { states, actions }, &[1]), None);
}
