mod common;

use common::{fd_expectile_scalar, fd_policy_objective, fd_scalar_loss, fd_value_losses, losses};

const PROBES: usize = 100;

#[test]
fn scalar_losses_match_finite_differences() {
    for (i, loss) in losses().iter().enumerate() {
        let t = fd_scalar_loss(loss, PROBES, i as u64);
        assert!(t.ok(), "{:?}", t.first_failure);
        assert_eq!(t.probes, PROBES);
    }
}

#[test]
fn curvature_matches_finite_differences() {
    for loss in losses() {
        for k in 0..PROBES {
            let u = -3.9 + 7.8 * (k as f64 + 0.5) / PROBES as f64;
            if u.abs() < 1e-2 || (u.abs() - 0.2).abs() < 1e-2 {
                continue;
            }
            let h = 1e-6;
            let fd = (loss.grad(u + h) - loss.grad(u - h)) / (2.0 * h);
            assert!((loss.second(u) - fd).abs() <= 1e-4 * loss.second(u).abs().max(1.0), "{} at {u}", loss.name());
        }
    }
}

#[test]
fn policy_objective_matches_finite_differences() {
    for (i, loss) in losses().iter().enumerate() {
        let t = fd_policy_objective(loss, PROBES, 10 + i as u64);
        assert!(t.ok(), "{:?}", t.first_failure);
    }
}

#[test]
fn expectile_scalar_matches_finite_differences() {
    let t = fd_expectile_scalar(PROBES, 3);
    assert!(t.ok(), "{:?}", t.first_failure);
}

#[test]
fn value_losses_match_finite_differences() {
    let (v, q) = fd_value_losses(PROBES, 4);
    assert!(v.ok(), "{:?}", v.first_failure);
    assert!(q.ok(), "{:?}", q.first_failure);
}
