//! Randomized property suites over the ball-and-plate benchmark: recursive
//! feasibility under online reference switches, the full-turn-frequency
//! equivalence of the harmonic controller, the steady characterization of
//! the harmonic reachable reference, and the sampling oracle for the
//! harmonic admissibility sets. Shared by the acceptance tests and the CLI
//! `check` subcommand; all randomness is seeded.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ball_plate::{linearize_discretize, BallPlateParams};
use crate::formulations::{
    build_hmpc, build_mpct, ControllerKind, FormulationConfig, WeightSet, DEFAULT_SIGMA,
};
use crate::harmonic::{
    constraint_margins, is_admissible_harmonic, rotate_phase, state_parts_from_inputs,
    HarmonicParams,
};
use crate::model::{LtiModel, SteadyStatePair};
use crate::reachable::{
    optimal_reachable_harmonic, optimal_reachable_steady, ReachableTarget,
};
use crate::simulator::{
    run_closed_loop, Plant, ReferenceSchedule, Segment, SegmentPayload, SimulationSetup,
};
use crate::solver::{solve, SolverConfig, SolverStatus};

/// Outcome of one suite run.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// One line per failed case; empty when passed.
    pub failures: Vec<String>,
    /// Informational lines (aggregates, worst margins).
    pub details: Vec<String>,
    /// Worst output-band violation over all linear-plant trajectories the
    /// suite produced; NaN when the suite runs no closed loops.
    pub max_constraint_violation: f64,
    pub elapsed: Duration,
}

impl SuiteReport {
    fn finish(mut self, started: Instant) -> Self {
        self.passed = self.failures.is_empty();
        self.elapsed = started.elapsed();
        self
    }

    fn new(name: &str, cases: usize) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            cases,
            failures: Vec::new(),
            details: Vec::new(),
            max_constraint_violation: f64::NAN,
            elapsed: Duration::ZERO,
        }
    }
}

/// Names accepted by [`run_by_name`].
pub fn available() -> &'static [&'static str] {
    &[
        "recursive_feasibility_mpct",
        "recursive_feasibility_periodic",
        "recursive_feasibility_hmpc",
        "hmpc_mpct_equivalence_w2pi",
        "harmonic_reachable_center",
        "harmonic_admissibility_oracle",
    ]
}

/// Runs a suite at its standard size; `None` for an unknown name.
pub fn run_by_name(name: &str, seed: u64) -> Option<SuiteReport> {
    match name {
        "recursive_feasibility_mpct" => {
            Some(recursive_feasibility(ControllerKind::Mpct, seed, 50))
        }
        "recursive_feasibility_periodic" => {
            Some(recursive_feasibility(ControllerKind::PeriodicMpct, seed, 50))
        }
        "recursive_feasibility_hmpc" => {
            Some(recursive_feasibility(ControllerKind::Hmpc, seed, 50))
        }
        "hmpc_mpct_equivalence_w2pi" => Some(hmpc_mpct_equivalence_w2pi(seed, 20)),
        "harmonic_reachable_center" => Some(harmonic_reachable_center(seed, 100)),
        "harmonic_admissibility_oracle" => Some(harmonic_admissibility_oracle(seed, 200)),
        _ => None,
    }
}

/// Benchmark stage weights.
pub fn ball_plate_stage_weights() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            10.0, 0.05, 0.05, 0.05, 10.0, 0.05, 0.05, 0.05,
        ])),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5])),
    )
}

/// Solver settings for the property runs: absolute tolerance tight enough
/// to keep closed-loop constraint violations below 1e-6, polish for
/// near-exact iterates.
pub fn property_solver() -> SolverConfig {
    SolverConfig {
        rho: 20.0,
        eps_abs: 1e-7,
        eps_rel: 1e-6,
        polish: true,
        max_iter: 20_000,
        ..Default::default()
    }
}

/// Near-exact settings for the equivalence checks: the loop may stall on
/// the absolute tolerance, in which case the polish step supplies the
/// terminal precision (or the run is reported as not solved).
fn equivalence_solver() -> SolverConfig {
    SolverConfig {
        rho: 20.0,
        eps_abs: 1e-9,
        eps_rel: 0.0,
        polish: true,
        max_iter: 20_000,
        ..Default::default()
    }
}

/// States drawn from a box small enough to be (almost always) feasible for
/// all three benchmark controllers: the plate input bound is only 0.1
/// rad/s^2, so leveling a tilted plate takes seconds and even modest tilts
/// doom the ball velocity constraint.
fn sample_x0(rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut x = DVector::zeros(8);
    for axis in 0..2 {
        let o = 4 * axis;
        x[o] = rng.random_range(-0.15..0.15);
        x[o + 1] = rng.random_range(-0.03..0.03);
        x[o + 2] = rng.random_range(-0.02..0.02);
        x[o + 3] = rng.random_range(-0.02..0.02);
    }
    x
}

/// Arbitrary desired pair, frequently neither steady nor inside the band.
fn sample_reference(rng: &mut ChaCha8Rng) -> SteadyStatePair {
    let mut x = DVector::zeros(8);
    for axis in 0..2 {
        let o = 4 * axis;
        x[o] = rng.random_range(-0.5..0.5);
        x[o + 1] = rng.random_range(-0.08..0.08);
        x[o + 2] = rng.random_range(-0.6..0.6);
        x[o + 3] = rng.random_range(-0.1..0.1);
    }
    let u = DVector::from_fn(2, |_, _| rng.random_range(-0.15..0.15));
    SteadyStatePair::new(x, u)
}

fn sample_periodic_window(
    rng: &mut ChaCha8Rng,
    model: &LtiModel,
    period: usize,
) -> Vec<SteadyStatePair> {
    if rng.random_bool(0.5) {
        // Harmonic trajectory of the model, randomly scaled; sometimes far
        // beyond the band.
        let w = 2.0 * std::f64::consts::PI / period as f64;
        let scale = rng.random_range(0.2..2.5);
        let u_sine = DVector::from_fn(2, |_, _| rng.random_range(-0.01..0.01) * scale);
        let u_cosine = DVector::from_fn(2, |_, _| rng.random_range(-0.01..0.01) * scale);
        let (x_sine, x_cosine) =
            state_parts_from_inputs(model, &u_sine, &u_cosine, w).expect("rotation solvable");
        let mut bias = DVector::zeros(8);
        bias[0] = rng.random_range(-0.4..0.4);
        bias[4] = rng.random_range(-0.4..0.4);
        let xh = HarmonicParams::new(bias, x_sine, x_cosine, w);
        let uh = HarmonicParams::new(DVector::zeros(2), u_sine, u_cosine, w);
        (0..period)
            .map(|t| SteadyStatePair::new(xh.evaluate(t), uh.evaluate(t)))
            .collect()
    } else {
        // White-noise window; wildly non-admissible.
        (0..period).map(|_| sample_reference(rng)).collect()
    }
}

fn benchmark_setup(kind: ControllerKind) -> (LtiModel, WeightSet, FormulationConfig) {
    let model = linearize_discretize(&BallPlateParams::default());
    let (q, r) = ball_plate_stage_weights();
    match kind {
        ControllerKind::Mpct | ControllerKind::EqualityMpc => {
            let weights = WeightSet::tracking(q.clone(), r.clone(), &q * 15.0, &r * 15.0)
                .expect("benchmark weights are positive definite");
            (model, weights, FormulationConfig::new(15))
        }
        ControllerKind::PeriodicMpct => {
            let weights = WeightSet::tracking(q.clone(), r.clone(), q.clone(), r.clone())
                .expect("benchmark weights are positive definite");
            (model, weights, FormulationConfig::new(15).with_period(25))
        }
        ControllerKind::Hmpc => {
            let weights = WeightSet::tracking(q.clone(), r.clone(), &q * 8.0, &r * 8.0)
                .expect("benchmark weights are positive definite");
            (model, weights, FormulationConfig::new(8).with_frequency(0.3254))
        }
    }
}

/// Nominal-plant recursive feasibility: random feasible starts, reference
/// switches every 20 steps (admissible and not), 100 steps each; any
/// infeasibility certificate after a feasible start is a failure.
pub fn recursive_feasibility(kind: ControllerKind, seed: u64, runs: usize) -> SuiteReport {
    let started = Instant::now();
    let name = format!("recursive_feasibility_{kind}");
    let mut report = SuiteReport::new(&name, runs);
    let (model, weights, cfg) = benchmark_setup(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation: f64 = 0.0;
    let mut max_iterations = 0usize;
    let mut resamples = 0usize;
    let period = cfg.period.unwrap_or(0);

    'runs: for run in 0..runs {
        let make_schedule = |rng: &mut ChaCha8Rng| -> ReferenceSchedule {
            let segments = (0..5)
                .map(|i| Segment {
                    start: i * 20,
                    payload: match kind {
                        ControllerKind::PeriodicMpct => {
                            SegmentPayload::Periodic(sample_periodic_window(rng, &model, period))
                        }
                        _ => SegmentPayload::Steady(sample_reference(rng)),
                    },
                })
                .collect();
            ReferenceSchedule::new(segments).expect("schedule is well-formed")
        };

        // Resample the start until the initial problem solves cleanly; the
        // theorems assume a feasible start, and a stalled first solve is
        // ambiguous (neither a certificate nor a usable point).
        let mut attempts = 0;
        let trace = loop {
            let x0 = sample_x0(&mut rng);
            let schedule = make_schedule(&mut rng);
            let setup = SimulationSetup::new(
                kind,
                &model,
                &weights,
                &cfg,
                Plant::Linear,
                &schedule,
                x0,
                100,
            )
            .with_solver(property_solver())
            .without_reachable_targets();
            let probe = SimulationSetup { steps: 1, ..setup.clone() };
            let feasible_start = match run_closed_loop(&probe) {
                Ok(t) => !t.aborted_infeasible
                    && t.steps.first().map_or(false, |s| s.status == SolverStatus::Solved),
                Err(e) => {
                    report.failures.push(format!("run {run}: setup error: {e}"));
                    continue 'runs;
                }
            };
            if !feasible_start {
                attempts += 1;
                resamples += 1;
                if attempts > 40 {
                    report
                        .failures
                        .push(format!("run {run}: no feasible start found in 40 draws"));
                    continue 'runs;
                }
                continue;
            }
            match run_closed_loop(&setup) {
                Ok(t) => break t,
                Err(e) => {
                    report.failures.push(format!("run {run}: setup error: {e}"));
                    continue 'runs;
                }
            }
        };

        if trace.aborted_infeasible {
            report.failures.push(format!(
                "run {run}: infeasibility certificate at step {} after a feasible start",
                trace.steps.len()
            ));
            continue;
        }
        for step in &trace.steps {
            max_iterations = max_iterations.max(step.iterations);
            if step.status == SolverStatus::MaxIterReached && step.primal_residual > 1e-4 {
                report.failures.push(format!(
                    "run {run} step {}: solver stalled with primal residual {:.2e}",
                    step.time, step.primal_residual
                ));
            }
            max_violation =
                max_violation.max(model.constraint_violation(&step.state, &step.input));
        }
    }

    report.max_constraint_violation = max_violation;
    report.details.push(format!(
        "{runs} runs x 100 steps, {resamples} start resamples, max violation {max_violation:.2e}, max iterations {max_iterations}"
    ));
    report.finish(started)
}

/// At `w = 2 pi` the harmonic artificial reference collapses to a steady
/// pair split across its center and cosine parts; doubling the four
/// harmonic offset weights makes the split reproduce the tracking offset
/// cost exactly, so both controllers share one optimizer. Verified on
/// random feasible states against interior steady references.
pub fn hmpc_mpct_equivalence_w2pi(seed: u64, cases: usize) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("hmpc_mpct_equivalence_w2pi", cases);
    let model = linearize_discretize(&BallPlateParams::default());
    let (q, r) = ball_plate_stage_weights();
    let t = &q * 8.0;
    let s = &r * 8.0;
    let mpct_w = WeightSet::tracking(q.clone(), r.clone(), t.clone(), s.clone()).unwrap();
    let hmpc_w = WeightSet::new(
        q.clone(),
        r.clone(),
        t.clone(),
        s.clone(),
        &t * 2.0,
        &s * 2.0,
        &t * 2.0,
        &s * 2.0,
    )
    .unwrap();
    let mpct_cfg = FormulationConfig::new(8);
    let hmpc_cfg = FormulationConfig::new(8).with_frequency(2.0 * std::f64::consts::PI);
    let solver = equivalence_solver();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_input: f64 = 0.0;
    let mut worst_cost: f64 = 0.0;

    let mut case = 0usize;
    let mut draws = 0usize;
    while case < cases {
        draws += 1;
        if draws > 20 * cases {
            report
                .failures
                .push("could not draw enough feasible states".to_string());
            break;
        }
        let mut x0 = DVector::zeros(8);
        for axis in 0..2 {
            let o = 4 * axis;
            x0[o] = rng.random_range(-0.1..0.1);
            x0[o + 1] = rng.random_range(-0.03..0.03);
            x0[o + 2] = rng.random_range(-0.02..0.02);
            x0[o + 3] = rng.random_range(-0.02..0.02);
        }
        let mut xr = DVector::zeros(8);
        xr[0] = rng.random_range(-0.15..0.15);
        xr[4] = rng.random_range(-0.15..0.15);
        let reference = SteadyStatePair::new(xr, DVector::zeros(2));

        let mp = match build_mpct(&model, &mpct_w, &mpct_cfg, &x0, &reference) {
            Ok(b) => b,
            Err(e) => {
                report.failures.push(format!("case {case}: build error {e}"));
                break;
            }
        };
        let mp_res = solve(&mp.program, &solver).expect("valid program");
        if mp_res.status != SolverStatus::Solved {
            continue; // infeasible draw
        }
        let hm = build_hmpc(&model, &hmpc_w, &hmpc_cfg, &x0, &reference).unwrap();
        let hm_res = solve(&hm.program, &solver).expect("valid program");
        if hm_res.status != SolverStatus::Solved {
            report.failures.push(format!(
                "case {case}: harmonic solve not solved ({:?}, prim {:.2e})",
                hm_res.status, hm_res.primal_residual
            ));
            case += 1;
            continue;
        }
        let mp_dec = mp.decode(&mp_res).unwrap();
        let hm_dec = hm.decode(&hm_res).unwrap();
        let d_input = (hm_dec.first_input - mp_dec.first_input).amax();
        let d_cost = (hm_res.objective - mp_res.objective).abs();
        worst_input = worst_input.max(d_input);
        worst_cost = worst_cost.max(d_cost);
        if d_input >= 1e-4 {
            report
                .failures
                .push(format!("case {case}: first-input deviation {d_input:.3e}"));
        }
        if d_cost >= 1e-6 {
            report
                .failures
                .push(format!("case {case}: optimal-cost deviation {d_cost:.3e}"));
        }
        case += 1;
    }

    report.details.push(format!(
        "{case} states, worst first-input deviation {worst_input:.3e}, worst cost deviation {worst_cost:.3e}"
    ));
    report.finish(started)
}

/// The optimal reachable harmonic reference has zero sine/cosine parts and
/// its center solves the steady problem with the same weights.
pub fn harmonic_reachable_center(seed: u64, cases: usize) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("harmonic_reachable_center", cases);
    let model = linearize_discretize(&BallPlateParams::default());
    let (q, r) = ball_plate_stage_weights();
    let weights = WeightSet::tracking(q.clone(), r.clone(), &q * 8.0, &r * 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_osc: f64 = 0.0;
    let mut worst_center: f64 = 0.0;

    for case in 0..cases {
        let mut xr = DVector::zeros(8);
        for axis in 0..2 {
            let o = 4 * axis;
            xr[o] = rng.random_range(-0.6..0.6);
            xr[o + 1] = rng.random_range(-0.2..0.2);
            xr[o + 2] = rng.random_range(-1.0..1.0);
            xr[o + 3] = rng.random_range(-0.2..0.2);
        }
        let ur = DVector::from_fn(2, |_, _| rng.random_range(-0.2..0.2));
        let reference = SteadyStatePair::new(xr, ur);
        let freq = rng.random_range(0.05..3.0);

        let harmonic =
            match optimal_reachable_harmonic(&model, &weights, DEFAULT_SIGMA, freq, &reference) {
                Ok(h) => h,
                Err(e) => {
                    report
                        .failures
                        .push(format!("case {case}: harmonic oracle error {e}"));
                    continue;
                }
            };
        let steady = optimal_reachable_steady(&model, &weights, DEFAULT_SIGMA, &reference)
            .expect("steady oracle solvable");
        let (hx, hu) = match &harmonic.target {
            ReachableTarget::Harmonic { x, u } => (x.clone(), u.clone()),
            _ => unreachable!(),
        };
        let sp = match &steady.target {
            ReachableTarget::Steady(p) => p.clone(),
            _ => unreachable!(),
        };
        let osc = hx
            .sine
            .norm()
            .max(hx.cosine.norm())
            .max(hu.sine.norm())
            .max(hu.cosine.norm());
        let center = (hx.bias - sp.x).amax().max((hu.bias - sp.u).amax());
        worst_osc = worst_osc.max(osc);
        worst_center = worst_center.max(center);
        if osc >= 1e-6 {
            report
                .failures
                .push(format!("case {case} (w={freq:.3}): oscillation norm {osc:.3e}"));
        }
        if center >= 1e-6 {
            report
                .failures
                .push(format!("case {case} (w={freq:.3}): center deviation {center:.3e}"));
        }
    }

    report.details.push(format!(
        "{cases} references, worst oscillation {worst_osc:.3e}, worst center deviation {worst_center:.3e}"
    ));
    report.finish(started)
}

fn random_controllable_model(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let n_x = rng.random_range(2..=5usize);
        let n_u = rng.random_range(1..=2usize);
        let mut a = DMatrix::from_fn(n_x, n_x, |_, _| rng.random_range(-1.0..1.0));
        let radius = a
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        if radius < 1e-6 {
            continue;
        }
        a *= rng.random_range(0.3..0.85) / radius;
        let b = DMatrix::from_fn(n_x, n_u, |_, _| rng.random_range(-1.0..1.0));
        // Controllability check via the rank of [B, AB, ...].
        let mut ctrb = DMatrix::zeros(n_x, n_x * n_u);
        let mut power = b.clone();
        for j in 0..n_x {
            ctrb.view_mut((0, j * n_u), (n_x, n_u)).copy_from(&power);
            power = &a * &power;
        }
        if ctrb.rank(1e-9) == n_x {
            return (a, b);
        }
    }
}

/// Constructs members of the harmonic dynamics-and-constraint sets on random
/// systems and checks them against the time-sampling oracle over horizon
/// 1000; then breaks one margin by at least 1e-3 (phase-aligned so the peak
/// lands on a sample) and checks that the oracle rejects.
pub fn harmonic_admissibility_oracle(seed: u64, cases: usize) -> SuiteReport {
    let started = Instant::now();
    let mut report = SuiteReport::new("harmonic_admissibility_oracle", cases);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for case in 0..cases {
        let (a, b) = random_controllable_model(&mut rng);
        let (n_x, n_u) = (a.nrows(), b.ncols());
        let n_y = rng.random_range(1..=4usize);
        let e = DMatrix::from_fn(n_y, n_x, |_, _| rng.random_range(-1.0..1.0));
        let f = DMatrix::from_fn(n_y, n_u, |_, _| rng.random_range(-1.0..1.0));
        let freq = rng.random_range(0.1..3.0);

        let u_bias = DVector::from_fn(n_u, |_, _| rng.random_range(-1.0..1.0));
        let u_sine = DVector::from_fn(n_u, |_, _| rng.random_range(-1.0..1.0));
        let u_cosine = DVector::from_fn(n_u, |_, _| rng.random_range(-1.0..1.0));
        let x_bias = match (DMatrix::identity(n_x, n_x) - &a).lu().solve(&(&b * &u_bias)) {
            Some(x) => x,
            None => {
                report
                    .failures
                    .push(format!("case {case}: singular bias system"));
                continue;
            }
        };
        let model_free = LtiModel {
            a: a.clone(),
            b: b.clone(),
            e: e.clone(),
            f: f.clone(),
            y_lo: DVector::from_element(n_y, -1.0),
            y_hi: DVector::from_element(n_y, 1.0),
        };
        let (x_sine, x_cosine) =
            match state_parts_from_inputs(&model_free, &u_sine, &u_cosine, freq) {
                Ok(parts) => parts,
                Err(err) => {
                    report
                        .failures
                        .push(format!("case {case}: rotation solve failed: {err}"));
                    continue;
                }
            };
        let xh = HarmonicParams::new(x_bias.clone(), x_sine.clone(), x_cosine.clone(), freq);
        let uh = HarmonicParams::new(u_bias.clone(), u_sine.clone(), u_cosine.clone(), freq);

        let y_bias = &e * &x_bias + &f * &u_bias;
        let y_sine = &e * &x_sine + &f * &u_sine;
        let y_cosine = &e * &x_cosine + &f * &u_cosine;
        let swings: Vec<f64> = (0..n_y).map(|i| y_sine[i].hypot(y_cosine[i])).collect();

        // Member: bounds enclosing the signal with positive slack.
        let y_hi = DVector::from_fn(n_y, |i, _| {
            y_bias[i] + swings[i] + rng.random_range(0.01..1.0)
        });
        let y_lo = DVector::from_fn(n_y, |i, _| {
            y_bias[i] - swings[i] - rng.random_range(0.01..1.0)
        });
        let model = LtiModel {
            a: a.clone(),
            b: b.clone(),
            e: e.clone(),
            f: f.clone(),
            y_lo,
            y_hi,
        };
        let margins = constraint_margins(&xh, &uh, &model, 0.0).expect("dims match");
        if margins.iter().any(|m| m.min() < 0.0) {
            report
                .failures
                .push(format!("case {case}: member construction has negative margin"));
            continue;
        }
        match is_admissible_harmonic(&xh, &uh, &model, 0.0, 1000) {
            Ok(true) => {}
            Ok(false) => {
                report.failures.push(format!(
                    "case {case}: member of the sets rejected by the sampling oracle"
                ));
            }
            Err(err) => {
                report.failures.push(format!("case {case}: oracle error {err}"));
            }
        }

        // Violator: break the upper margin of the output with the largest
        // swing and rotate its peak onto t = 0.
        let (j, swing) = swings
            .iter()
            .cloned()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if swing < 1e-3 {
            // Oscillation too weak to violate a margin meaningfully.
            continue;
        }
        let deficit = 1e-3 + rng.random_range(0.0..0.1);
        let mut y_hi = DVector::from_fn(n_y, |i, _| {
            y_bias[i] + swings[i] + rng.random_range(0.01..1.0)
        });
        let y_lo = DVector::from_fn(n_y, |i, _| {
            y_bias[i] - swings[i] - rng.random_range(0.01..1.0)
        });
        y_hi[j] = y_bias[j] + swing - deficit;
        let model = LtiModel {
            a: a.clone(),
            b: b.clone(),
            e,
            f,
            y_lo,
            y_hi,
        };
        let phase = y_sine[j].atan2(y_cosine[j]);
        let x_rot = rotate_phase(&xh, -phase);
        let u_rot = rotate_phase(&uh, -phase);
        match is_admissible_harmonic(&x_rot, &u_rot, &model, 0.0, 1000) {
            Ok(false) => {}
            Ok(true) => {
                report.failures.push(format!(
                    "case {case}: margin deficit {deficit:.2e} went undetected"
                ));
            }
            Err(err) => {
                report.failures.push(format!("case {case}: oracle error {err}"));
            }
        }
    }

    report.finish(started)
}
