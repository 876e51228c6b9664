use super::*;
use crate::ball_plate::linearize_discretize;
use crate::formulations::DEFAULT_SIGMA;
use nalgebra::DMatrix;

fn ball_plate() -> LtiModel {
    linearize_discretize(&BallPlateParams::default())
}

fn paper_weights(n: usize) -> WeightSet {
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        10.0, 0.05, 0.05, 0.05, 10.0, 0.05, 0.05, 0.05,
    ]));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.5]));
    WeightSet::tracking(q.clone(), r.clone(), q * n as f64, r * n as f64).unwrap()
}

fn resting(p1: f64, p2: f64) -> SteadyStatePair {
    let mut x = nalgebra::DVector::zeros(8);
    x[0] = p1;
    x[4] = p2;
    SteadyStatePair::new(x, nalgebra::DVector::zeros(2))
}

fn fast_solver() -> SolverConfig {
    SolverConfig {
        rho: 50.0,
        polish: true,
        eps_abs: 1e-7,
        eps_rel: 0.0,
        ..Default::default()
    }
}

#[test]
fn equilibrium_start_stays_put() {
    let model = ball_plate();
    let weights = paper_weights(6);
    let cfg = FormulationConfig::new(6);
    let reference = resting(0.1, -0.05);
    let schedule = ReferenceSchedule::steady(reference.clone());
    let setup = SimulationSetup::new(
        ControllerKind::Mpct,
        &model,
        &weights,
        &cfg,
        Plant::Linear,
        &schedule,
        reference.x.clone(),
        20,
    )
    .with_solver(fast_solver());
    let trace = run_closed_loop(&setup).unwrap();
    assert!(!trace.aborted_infeasible);
    assert_eq!(trace.steps.len(), 20);
    for step in &trace.steps {
        assert!((step.state.clone() - &reference.x).amax() < 1e-5);
        assert!(step.input.amax() < 1e-5);
        assert_eq!(step.status, SolverStatus::Solved);
    }
    assert!((trace.final_state.clone() - &reference.x).amax() < 1e-5);
}

#[test]
fn midrun_switch_to_non_admissible_reference_converges_to_oracle() {
    let model = ball_plate();
    let weights = paper_weights(15);
    let cfg = FormulationConfig::new(15);
    let schedule = ReferenceSchedule::new(vec![
        Segment {
            start: 0,
            payload: SegmentPayload::Steady(resting(0.1, 0.0)),
        },
        Segment {
            start: 30,
            payload: SegmentPayload::Steady(resting(0.45, -0.05)),
        },
    ])
    .unwrap();
    let setup = SimulationSetup::new(
        ControllerKind::Mpct,
        &model,
        &weights,
        &cfg,
        Plant::Linear,
        &schedule,
        nalgebra::DVector::zeros(8),
        180,
    )
    .with_solver(fast_solver());
    let trace = run_closed_loop(&setup).unwrap();
    assert!(!trace.aborted_infeasible);
    assert_eq!(trace.steps.len(), 180);
    for step in &trace.steps {
        assert_ne!(step.status, SolverStatus::PrimalInfeasibleCertificate);
    }
    let oracle =
        optimal_reachable_steady(&model, &weights, cfg.sigma, &resting(0.45, -0.05)).unwrap();
    let dist = distance_to_target(&oracle.target, 180, &trace.final_state);
    assert!(dist < 1e-3, "final distance {dist}");
    // Weak form of asymptotic convergence.
    let last = trace.steps.last().unwrap();
    assert!(last.dist_to_reachable < trace.steps[30].dist_to_reachable);
}

#[test]
fn metrics_on_a_constant_trace() {
    let model = ball_plate();
    let weights = paper_weights(6);
    let cfg = FormulationConfig::new(6);
    let reference = resting(0.1, -0.05);
    let schedule = ReferenceSchedule::steady(reference.clone());
    let setup = SimulationSetup::new(
        ControllerKind::Mpct,
        &model,
        &weights,
        &cfg,
        Plant::Linear,
        &schedule,
        reference.x.clone(),
        10,
    )
    .with_solver(fast_solver());
    let trace = run_closed_loop(&setup).unwrap();
    let target = ReachableTarget::Steady(reference.clone());
    let metrics = convergence_metrics(&trace, &model, &target, 0.01, &[0, 4]);
    assert!(metrics.final_distance < 1e-6);
    assert_eq!(metrics.settling_step, Some(0));
    assert!(metrics.max_constraint_violation < 1e-6);
    assert!((metrics.peak_abs_state[0] - 0.1).abs() < 1e-6);
}

#[test]
fn incompatible_schedules_are_rejected() {
    let model = ball_plate();
    let weights = paper_weights(4);
    let cfg = FormulationConfig::new(4);
    let periodic_payload =
        SegmentPayload::Periodic((0..5).map(|_| resting(0.0, 0.0)).collect());
    let schedule = ReferenceSchedule::new(vec![Segment {
        start: 0,
        payload: periodic_payload,
    }])
    .unwrap();
    let setup = SimulationSetup::new(
        ControllerKind::Mpct,
        &model,
        &weights,
        &cfg,
        Plant::Linear,
        &schedule,
        nalgebra::DVector::zeros(8),
        5,
    );
    assert!(matches!(
        run_closed_loop(&setup),
        Err(Error::IncompatibleSchedule(_))
    ));

    // Periodic controller whose formulation period disagrees with the window.
    let cfg = FormulationConfig::new(4).with_period(7);
    let schedule = ReferenceSchedule::periodic((0..5).map(|_| resting(0.0, 0.0)).collect()).unwrap();
    let setup = SimulationSetup::new(
        ControllerKind::PeriodicMpct,
        &model,
        &weights,
        &cfg,
        Plant::Linear,
        &schedule,
        nalgebra::DVector::zeros(8),
        5,
    );
    assert!(matches!(
        run_closed_loop(&setup),
        Err(Error::IncompatibleSchedule(_))
    ));
}

#[test]
fn schedule_validation() {
    assert!(ReferenceSchedule::new(vec![]).is_err());
    assert!(ReferenceSchedule::new(vec![Segment {
        start: 3,
        payload: SegmentPayload::Steady(resting(0.0, 0.0)),
    }])
    .is_err());
    assert!(ReferenceSchedule::new(vec![
        Segment {
            start: 0,
            payload: SegmentPayload::Steady(resting(0.0, 0.0)),
        },
        Segment {
            start: 0,
            payload: SegmentPayload::Steady(resting(0.1, 0.0)),
        },
    ])
    .is_err());
    // Mixed periods are rejected.
    assert!(ReferenceSchedule::new(vec![
        Segment {
            start: 0,
            payload: SegmentPayload::Periodic((0..4).map(|_| resting(0.0, 0.0)).collect()),
        },
        Segment {
            start: 10,
            payload: SegmentPayload::Periodic((0..5).map(|_| resting(0.0, 0.0)).collect()),
        },
    ])
    .is_err());
}

#[test]
fn infeasible_start_aborts_with_flagged_trace() {
    let model = ball_plate();
    let weights = paper_weights(1);
    let cfg = FormulationConfig::new(1);
    // Equality-terminal MPC with a one-step-unreachable target.
    let schedule = ReferenceSchedule::steady(resting(0.25, 0.0));
    let setup = SimulationSetup::new(
        ControllerKind::EqualityMpc,
        &model,
        &weights,
        &cfg,
        Plant::Linear,
        &schedule,
        nalgebra::DVector::zeros(8),
        10,
    )
    .with_solver(fast_solver());
    let trace = run_closed_loop(&setup).unwrap();
    assert!(trace.aborted_infeasible);
    assert!(trace.steps.is_empty());
}

#[test]
fn nonlinear_plant_runs_stay_within_bounds() {
    let model = ball_plate();
    let weights = paper_weights(15);
    let cfg = FormulationConfig::new(15);
    let schedule = ReferenceSchedule::steady(resting(0.2, -0.1));
    let setup = SimulationSetup::new(
        ControllerKind::Mpct,
        &model,
        &weights,
        &cfg,
        Plant::BallPlate(BallPlateParams::default()),
        &schedule,
        nalgebra::DVector::zeros(8),
        60,
    )
    .with_solver(fast_solver());
    let trace = run_closed_loop(&setup).unwrap();
    assert!(!trace.aborted_infeasible);
    let target = ReachableTarget::Steady(resting(0.2, -0.1));
    let metrics = convergence_metrics(&trace, &model, &target, 0.01, &[0, 4]);
    assert!(metrics.max_constraint_violation < 1e-3);
}

#[test]
fn sigma_default_is_small() {
    assert_eq!(DEFAULT_SIGMA, 1e-4);
}
