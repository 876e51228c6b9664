use super::*;
use crate::ball_plate::{linearize_discretize, BallPlateParams};
use crate::formulations::{WeightSet, DEFAULT_SIGMA};
use crate::harmonic::{is_admissible_harmonic, state_parts_from_inputs, HarmonicParams};
use crate::solver::WarmStart;
use nalgebra::{DMatrix, DVector};

fn ball_plate() -> LtiModel {
    linearize_discretize(&BallPlateParams::default())
}

fn paper_weights(n: usize) -> WeightSet {
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
        10.0, 0.05, 0.05, 0.05, 10.0, 0.05, 0.05, 0.05,
    ]));
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5]));
    WeightSet::tracking(q.clone(), r.clone(), q * n as f64, r * n as f64).unwrap()
}

fn resting(p1: f64, p2: f64) -> SteadyStatePair {
    let mut x = DVector::zeros(8);
    x[0] = p1;
    x[4] = p2;
    SteadyStatePair::new(x, DVector::zeros(2))
}

/// Two-state single-input toy with an invertible `I - A`, so the steady
/// manifold is the line `x(u) = (I - A)^{-1} B u`.
fn toy_model() -> LtiModel {
    let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.9]);
    let b = DMatrix::from_row_slice(2, 1, &[0.1, 0.2]);
    let mut e = DMatrix::zeros(3, 2);
    e[(0, 0)] = 1.0;
    e[(1, 1)] = 1.0;
    let mut f = DMatrix::zeros(3, 1);
    f[(2, 0)] = 1.0;
    LtiModel::new(
        a,
        b,
        e,
        f,
        DVector::from_element(3, -1.0),
        DVector::from_element(3, 1.0),
    )
    .unwrap()
}

#[test]
fn strictly_admissible_reference_is_returned_unchanged() {
    let model = ball_plate();
    let weights = paper_weights(15);
    let reference = resting(0.2, -0.1);
    let res = optimal_reachable_steady(&model, &weights, DEFAULT_SIGMA, &reference).unwrap();
    match &res.target {
        ReachableTarget::Steady(p) => {
            assert!((p.x.clone() - &reference.x).amax() < 1e-9);
            assert!(p.u.amax() < 1e-9);
        }
        other => panic!("wrong target kind {other:?}"),
    }
    assert!(res.objective_value.abs() < 1e-9);
}

#[test]
fn out_of_band_position_clamps_to_the_tightened_bound() {
    let model = ball_plate();
    let weights = paper_weights(15);
    let sigma = DEFAULT_SIGMA;
    let reference = resting(0.4, -0.1);
    let res = optimal_reachable_steady(&model, &weights, sigma, &reference).unwrap();
    match &res.target {
        ReachableTarget::Steady(p) => {
            assert!((p.x[0] - (0.3 - sigma)).abs() < 1e-8);
            assert!((p.x[4] + 0.1).abs() < 1e-8);
            for i in [1, 2, 3, 5, 6, 7] {
                assert!(p.x[i].abs() < 1e-8, "component {i} should rest");
            }
            assert!(p.u.amax() < 1e-8);
            assert!(model.is_admissible_steady(p, sigma).unwrap());
        }
        other => panic!("wrong target kind {other:?}"),
    }
}

#[test]
fn objective_scaling_preserves_the_minimizer() {
    let model = ball_plate();
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![
        10.0, 0.05, 0.05, 0.05, 10.0, 0.05, 0.05, 0.05,
    ]));
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5]));
    let reference = resting(0.45, 0.2);
    let w1 = WeightSet::tracking(q.clone(), r.clone(), q.clone() * 15.0, r.clone() * 15.0).unwrap();
    let w2 = WeightSet::tracking(q.clone(), r.clone(), q * 15.0 * 7.0, r * 15.0 * 7.0).unwrap();
    let r1 = optimal_reachable_steady(&model, &w1, 1e-4, &reference).unwrap();
    let r2 = optimal_reachable_steady(&model, &w2, 1e-4, &reference).unwrap();
    match (&r1.target, &r2.target) {
        (ReachableTarget::Steady(a), ReachableTarget::Steady(b)) => {
            assert!((a.x.clone() - &b.x).amax() < 1e-7);
        }
        _ => unreachable!(),
    }
    assert!((r2.objective_value - 7.0 * r1.objective_value).abs() < 1e-6);
}

#[test]
fn steady_oracle_matches_dense_grid_on_toy_model() {
    let model = toy_model();
    let t = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let s = DMatrix::from_element(1, 1, 0.7);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1);
    let weights = WeightSet::new(
        q.clone(),
        r.clone(),
        t.clone(),
        s.clone(),
        t.clone(),
        s.clone(),
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
    )
    .unwrap();
    let sigma = 1e-3;
    let steady_x = (DMatrix::identity(2, 2) - &model.a)
        .lu()
        .solve(&model.b)
        .unwrap();

    for (rx, ru) in [
        (DVector::from_vec(vec![0.3, 0.5]), 0.1),
        (DVector::from_vec(vec![-2.0, 1.5]), -0.4),
        (DVector::from_vec(vec![5.0, 5.0]), 2.0),
    ] {
        let reference = SteadyStatePair::new(rx.clone(), DVector::from_element(1, ru));
        let oracle = optimal_reachable_steady(&model, &weights, sigma, &reference).unwrap();

        // Dense grid over the 1-dimensional steady manifold; the feasible
        // interval of `u` follows from the band rows, with the endpoints
        // included so clamped minima are hit exactly.
        let mut u_max = 1.0 - sigma;
        for i in 0..2 {
            u_max = u_max.min((1.0 - sigma) / steady_x[i].abs());
        }
        let samples = 200_000usize;
        let mut best_u = f64::NAN;
        let mut best_val = f64::INFINITY;
        for k in 0..=samples {
            let u = -u_max + 2.0 * u_max * (k as f64) / (samples as f64);
            let x = &steady_x * u;
            let dx = &x - &rx;
            let du = u - ru;
            let val = (&t * &dx).dot(&dx) + s[(0, 0)] * du * du;
            if val < best_val {
                best_val = val;
                best_u = u;
            }
        }
        match &oracle.target {
            ReachableTarget::Steady(p) => {
                assert!((p.u[0] - best_u).abs() < 1e-4, "input {} vs {}", p.u[0], best_u);
                assert!((oracle.objective_value - best_val).abs() < 1e-4);
            }
            other => panic!("wrong target kind {other:?}"),
        }
    }
}

#[test]
fn periodic_oracle_returns_admissible_windows_unchanged() {
    let model = ball_plate();
    let weights = paper_weights(1);
    // Build an admissible periodic trajectory from the harmonic machinery.
    let period = 20usize;
    let w = 2.0 * std::f64::consts::PI / period as f64;
    let u_sine = DVector::from_vec(vec![0.01, 0.0]);
    let u_cosine = DVector::from_vec(vec![0.0, 0.008]);
    let (x_sine, x_cosine) = state_parts_from_inputs(&model, &u_sine, &u_cosine, w).unwrap();
    let mut bias = DVector::zeros(8);
    bias[0] = 0.05;
    let xh = HarmonicParams::new(bias, x_sine, x_cosine, w);
    let uh = HarmonicParams::new(DVector::zeros(2), u_sine, u_cosine, w);
    assert!(is_admissible_harmonic(&xh, &uh, &model, 1e-3, 3 * period).unwrap());
    let window: Vec<SteadyStatePair> = (0..period)
        .map(|t| SteadyStatePair::new(xh.evaluate(t), uh.evaluate(t)))
        .collect();

    let res = optimal_reachable_periodic(&model, &weights, 1e-4, &window).unwrap();
    assert!(res.objective_value.abs() < 1e-9);
    match &res.target {
        ReachableTarget::Periodic(traj) => {
            for (a, b) in traj.iter().zip(window.iter()) {
                assert!((a.x.clone() - &b.x).amax() < 1e-7);
                assert!((a.u.clone() - &b.u).amax() < 1e-7);
            }
        }
        other => panic!("wrong target kind {other:?}"),
    }
}

#[test]
fn periodic_oracle_with_constant_window_matches_steady_oracle() {
    let model = ball_plate();
    let weights = paper_weights(1);
    let reference = resting(0.5, -0.15);
    let window: Vec<SteadyStatePair> = vec![reference.clone(); 12];
    let periodic = optimal_reachable_periodic(&model, &weights, 1e-4, &window).unwrap();
    let steady = optimal_reachable_steady(&model, &weights, 1e-4, &reference).unwrap();
    let steady_pair = match &steady.target {
        ReachableTarget::Steady(p) => p,
        other => panic!("wrong target kind {other:?}"),
    };
    match &periodic.target {
        ReachableTarget::Periodic(traj) => {
            for pair in traj {
                assert!((pair.x.clone() - &steady_pair.x).amax() < 1e-6);
                assert!((pair.u.clone() - &steady_pair.u).amax() < 1e-6);
            }
        }
        other => panic!("wrong target kind {other:?}"),
    }
    assert!((periodic.objective_value - 12.0 * steady.objective_value).abs() < 1e-6);
}

#[test]
fn periodic_oracle_result_satisfies_wrap_and_band() {
    let model = ball_plate();
    let weights = paper_weights(1);
    let sigma = 1e-4;
    // Partially out-of-band sinusoidal desired window.
    let period = 25usize;
    let window: Vec<SteadyStatePair> = (0..period)
        .map(|t| {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / period as f64;
            let mut p = resting(0.22 + 0.15 * phase.sin(), 0.1 * phase.cos());
            p.x[1] = 0.15 * 2.0 * std::f64::consts::PI / (period as f64 * 0.2) * phase.cos();
            p
        })
        .collect();
    let res = optimal_reachable_periodic(&model, &weights, sigma, &window).unwrap();
    let traj = match &res.target {
        ReachableTarget::Periodic(t) => t,
        other => panic!("wrong target kind {other:?}"),
    };
    assert!(res.objective_value > 1e-4, "window should not be admissible");
    for k in 0..period {
        let next = &traj[(k + 1) % period];
        let wrap = model.propagate(&traj[k].x, &traj[k].u) - &next.x;
        assert!(wrap.amax() < 1e-8, "wrap/chain row violated at {k}");
        let y = model.output(&traj[k].x, &traj[k].u);
        for i in 0..model.n_y() {
            assert!(y[i] <= model.y_hi[i] - sigma + 1e-8);
            assert!(y[i] >= model.y_lo[i] + sigma - 1e-8);
        }
    }
}

#[test]
fn harmonic_oracle_center_is_steady_with_zero_oscillation() {
    let model = ball_plate();
    let weights = paper_weights(8);
    for (p1, p2) in [(0.1, 0.05), (0.45, -0.2), (-0.6, 0.31)] {
        let reference = resting(p1, p2);
        let res =
            optimal_reachable_harmonic(&model, &weights, 1e-4, 0.3254, &reference).unwrap();
        match &res.target {
            ReachableTarget::Harmonic { x, u } => {
                assert!(x.sine.norm() < 1e-6);
                assert!(x.cosine.norm() < 1e-6);
                assert!(u.sine.norm() < 1e-6);
                assert!(u.cosine.norm() < 1e-6);
                let center = SteadyStatePair::new(x.bias.clone(), u.bias.clone());
                assert!(model.is_admissible_steady(&center, 1e-4 - 1e-9).unwrap());
            }
            other => panic!("wrong target kind {other:?}"),
        }
    }
}

#[test]
fn harmonic_oracle_matches_steady_oracle_with_shared_weights() {
    let model = ball_plate();
    let weights = paper_weights(8);
    for (p1, p2) in [(0.2, -0.1), (0.5, 0.0)] {
        let reference = resting(p1, p2);
        let h = optimal_reachable_harmonic(&model, &weights, 1e-4, 0.3254, &reference).unwrap();
        let st = optimal_reachable_steady(&model, &weights, 1e-4, &reference).unwrap();
        let (hx, hu) = match &h.target {
            ReachableTarget::Harmonic { x, u } => (x.bias.clone(), u.bias.clone()),
            other => panic!("wrong target kind {other:?}"),
        };
        let sp = match &st.target {
            ReachableTarget::Steady(p) => p,
            other => panic!("wrong target kind {other:?}"),
        };
        assert!((hx - &sp.x).amax() < 1e-6);
        assert!((hu - &sp.u).amax() < 1e-6);
        assert!((h.objective_value - st.objective_value).abs() < 1e-6);
    }
}

#[test]
fn harmonic_oracle_returns_strictly_admissible_reference_unchanged() {
    let model = ball_plate();
    let weights = paper_weights(8);
    let reference = resting(0.25, -0.22);
    let res = optimal_reachable_harmonic(&model, &weights, 1e-4, 1.1, &reference).unwrap();
    match &res.target {
        ReachableTarget::Harmonic { x, u } => {
            assert!((x.bias.clone() - &reference.x).amax() < 1e-7);
            assert!(u.bias.amax() < 1e-7);
        }
        other => panic!("wrong target kind {other:?}"),
    }
    assert!(res.objective_value.abs() < 1e-8);
}

#[test]
fn objective_is_invariant_under_perturbed_restart() {
    let model = ball_plate();
    let weights = paper_weights(15);
    let reference = resting(0.4, 0.2);
    let prog = steady_program(&model, &weights, 1e-4, &reference).unwrap();
    let base = solve_oracle(&prog).unwrap();
    let mut cfg = SolverConfig::oracle();
    let mut x = base.x.clone();
    let mut y = base.y.clone();
    for i in 0..x.len() {
        x[i] += 0.05 * ((i * 7 % 13) as f64 - 6.0) / 6.0;
    }
    for i in 0..y.len() {
        y[i] *= 0.9;
    }
    cfg.warm_start = Some(WarmStart { x, y });
    let perturbed = solve(&prog, &cfg).unwrap();
    assert!((perturbed.objective - base.objective).abs() < 1e-8);
}

#[test]
fn empty_band_is_reported() {
    let model = ball_plate();
    let weights = paper_weights(15);
    let reference = resting(0.0, 0.0);
    // Narrowest half-band is 0.1 on the velocity and input rows.
    assert!(matches!(
        optimal_reachable_steady(&model, &weights, 0.2, &reference),
        Err(Error::EmptySigmaBand)
    ));
}
