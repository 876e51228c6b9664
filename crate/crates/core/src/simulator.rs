//! Receding-horizon closed-loop engine: per step, retarget the built
//! program, solve warm-started, apply the first optimal input to the plant
//! and log everything. Supports online reference changes mid-run; on an
//! infeasibility certificate the run aborts with a flagged trace.

use nalgebra::DVector;

use crate::ball_plate::{plant_step, BallPlateParams};
use crate::formulations::{
    build_equality_mpc, build_hmpc, build_mpct, build_periodic_mpct, ArtificialRef, BuiltProgram,
    ControllerKind, FormulationConfig, ReferenceInput, WeightSet,
};
use crate::model::{LtiModel, SteadyStatePair};
use crate::reachable::{
    optimal_reachable_harmonic, optimal_reachable_periodic, optimal_reachable_steady,
    ReachableTarget,
};
use crate::solver::{Solver, SolverConfig, SolverResult, SolverStatus};
use crate::Error;

/// Plant the loop is closed against.
#[derive(Debug, Clone)]
pub enum Plant {
    /// The prediction model itself (nominal conditions).
    Linear,
    /// The nonlinear ball-and-plate dynamics.
    BallPlate(BallPlateParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentPayload {
    Steady(SteadyStatePair),
    /// A full period of desired pairs; index `k` is the reference at times
    /// `t` with `t mod T_p == k` (absolute phase).
    Periodic(Vec<SteadyStatePair>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub payload: SegmentPayload,
}

/// Time-indexed desired reference, changeable online. Segment start times
/// are strictly increasing with the first at zero; periodic payloads must
/// all share one period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSchedule {
    segments: Vec<Segment>,
}

impl ReferenceSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self, Error> {
        if segments.is_empty() {
            return Err(Error::IncompatibleSchedule("schedule is empty".into()));
        }
        if segments[0].start != 0 {
            return Err(Error::IncompatibleSchedule(
                "first segment must start at time 0".into(),
            ));
        }
        let mut period: Option<usize> = None;
        for pair in segments.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(Error::IncompatibleSchedule(
                    "segment start times must be strictly increasing".into(),
                ));
            }
        }
        for seg in &segments {
            if let SegmentPayload::Periodic(window) = &seg.payload {
                if window.len() < 2 {
                    return Err(Error::IncompatibleSchedule(
                        "periodic payload needs at least 2 entries".into(),
                    ));
                }
                match period {
                    None => period = Some(window.len()),
                    Some(p) if p != window.len() => {
                        return Err(Error::IncompatibleSchedule(
                            "periodic payloads must share one period".into(),
                        ));
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { segments })
    }

    /// Single steady reference for the whole run.
    pub fn steady(pair: SteadyStatePair) -> Self {
        Self {
            segments: vec![Segment {
                start: 0,
                payload: SegmentPayload::Steady(pair),
            }],
        }
    }

    /// Single periodic reference for the whole run.
    pub fn periodic(window: Vec<SteadyStatePair>) -> Result<Self, Error> {
        Self::new(vec![Segment {
            start: 0,
            payload: SegmentPayload::Periodic(window),
        }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn segment_index_at(&self, t: usize) -> usize {
        match self.segments.iter().rposition(|s| s.start <= t) {
            Some(i) => i,
            None => 0,
        }
    }

    pub fn payload_at(&self, t: usize) -> &SegmentPayload {
        &self.segments[self.segment_index_at(t)].payload
    }

    /// Desired window rotated to time `t`: entry `k` is the reference at
    /// `t + k`.
    fn window_at(window: &[SteadyStatePair], t: usize) -> Vec<SteadyStatePair> {
        let p = window.len();
        (0..p).map(|k| window[(t + k) % p].clone()).collect()
    }
}

/// One logged step of a closed-loop run.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub time: usize,
    /// Plant state before applying the input.
    pub state: DVector<f64>,
    /// Applied input (the decoded first optimal input).
    pub input: DVector<f64>,
    pub status: SolverStatus,
    pub iterations: usize,
    /// Worst constraint violation of the solver iterate at termination.
    pub primal_residual: f64,
    pub artificial: ArtificialRef,
    /// Stage cost of the applied pair against the artificial reference.
    pub stage_cost: f64,
    /// Euclidean distance of the state to the reachable target, when
    /// targets are computed.
    pub dist_to_reachable: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub steps: Vec<TraceStep>,
    /// Plant state after the last applied input.
    pub final_state: DVector<f64>,
    /// Set when a solve returned an infeasibility certificate and the run
    /// stopped early.
    pub aborted_infeasible: bool,
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone)]
pub struct SimulationSetup<'a> {
    pub kind: ControllerKind,
    pub model: &'a LtiModel,
    pub weights: &'a WeightSet,
    pub cfg: &'a FormulationConfig,
    pub plant: Plant,
    pub schedule: &'a ReferenceSchedule,
    pub x0: DVector<f64>,
    pub steps: usize,
    pub solver: SolverConfig,
    /// Compute per-segment reachable targets for distance logging; turn off
    /// to skip the oracle solves.
    pub reachable_targets: bool,
}

impl<'a> SimulationSetup<'a> {
    pub fn new(
        kind: ControllerKind,
        model: &'a LtiModel,
        weights: &'a WeightSet,
        cfg: &'a FormulationConfig,
        plant: Plant,
        schedule: &'a ReferenceSchedule,
        x0: DVector<f64>,
        steps: usize,
    ) -> Self {
        Self {
            kind,
            model,
            weights,
            cfg,
            plant,
            schedule,
            x0,
            steps,
            solver: SolverConfig::default(),
            reachable_targets: true,
        }
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    pub fn without_reachable_targets(mut self) -> Self {
        self.reachable_targets = false;
        self
    }
}

fn payload_compatible(kind: ControllerKind, payload: &SegmentPayload) -> bool {
    matches!(
        (kind, payload),
        (
            ControllerKind::EqualityMpc | ControllerKind::Mpct | ControllerKind::Hmpc,
            SegmentPayload::Steady(_)
        ) | (ControllerKind::PeriodicMpct, SegmentPayload::Periodic(_))
    )
}

fn segment_target(
    setup: &SimulationSetup,
    payload: &SegmentPayload,
) -> Result<Option<ReachableTarget>, Error> {
    if !setup.reachable_targets {
        return Ok(None);
    }
    let target = match (setup.kind, payload) {
        (ControllerKind::EqualityMpc, SegmentPayload::Steady(p)) => {
            ReachableTarget::Steady(p.clone())
        }
        (ControllerKind::Mpct, SegmentPayload::Steady(p)) => {
            optimal_reachable_steady(setup.model, setup.weights, setup.cfg.sigma, p)?.target
        }
        (ControllerKind::Hmpc, SegmentPayload::Steady(p)) => {
            let freq = setup.cfg.frequency.unwrap_or(0.0);
            if freq > 0.0 {
                optimal_reachable_harmonic(setup.model, setup.weights, setup.cfg.sigma, freq, p)?
                    .target
            } else {
                optimal_reachable_steady(setup.model, setup.weights, setup.cfg.sigma, p)?.target
            }
        }
        (ControllerKind::PeriodicMpct, SegmentPayload::Periodic(window)) => {
            optimal_reachable_periodic(setup.model, setup.weights, setup.cfg.sigma, window)?.target
        }
        _ => unreachable!("schedule compatibility checked before targets"),
    };
    Ok(Some(target))
}

/// Distance of a state to the target at time `t`.
pub fn distance_to_target(target: &ReachableTarget, t: usize, state: &DVector<f64>) -> f64 {
    (state - target.state_at(t)).norm()
}

fn build_for(
    setup: &SimulationSetup,
    state: &DVector<f64>,
    reference: &ReferenceInput,
) -> Result<BuiltProgram, Error> {
    match (setup.kind, reference) {
        (ControllerKind::EqualityMpc, ReferenceInput::Steady(p)) => {
            build_equality_mpc(setup.model, setup.weights, setup.cfg, state, p)
        }
        (ControllerKind::Mpct, ReferenceInput::Steady(p)) => {
            build_mpct(setup.model, setup.weights, setup.cfg, state, p)
        }
        (ControllerKind::Hmpc, ReferenceInput::Steady(p)) => {
            build_hmpc(setup.model, setup.weights, setup.cfg, state, p)
        }
        (ControllerKind::PeriodicMpct, ReferenceInput::Window(w)) => {
            build_periodic_mpct(setup.model, setup.weights, setup.cfg, state, w)
        }
        _ => Err(Error::IncompatibleSchedule(
            "reference payload does not match controller kind".into(),
        )),
    }
}

/// Runs the receding-horizon loop for `setup.steps` steps.
pub fn run_closed_loop(setup: &SimulationSetup) -> Result<SimulationTrace, Error> {
    let model = setup.model;
    if setup.x0.len() != model.n_x() {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {}",
            setup.x0.len(),
            model.n_x()
        )));
    }
    for seg in setup.schedule.segments() {
        if !payload_compatible(setup.kind, &seg.payload) {
            return Err(Error::IncompatibleSchedule(format!(
                "segment at t={} does not fit controller {}",
                seg.start, setup.kind
            )));
        }
        if let SegmentPayload::Periodic(window) = &seg.payload {
            if Some(window.len()) != setup.cfg.period {
                return Err(Error::IncompatibleSchedule(
                    "schedule period differs from the formulation period".into(),
                ));
            }
        }
    }

    let mut targets: Vec<Option<ReachableTarget>> = Vec::new();
    for seg in setup.schedule.segments() {
        targets.push(segment_target(setup, &seg.payload)?);
    }

    let mut state = setup.x0.clone();
    let mut built: Option<BuiltProgram> = None;
    let mut solver: Option<Solver> = None;
    let mut previous: Option<SolverResult> = None;
    let mut steps = Vec::with_capacity(setup.steps);
    let mut aborted = false;

    for t in 0..setup.steps {
        let seg_idx = setup.schedule.segment_index_at(t);
        let payload = &setup.schedule.segments()[seg_idx].payload;
        let window_storage;
        let reference = match payload {
            SegmentPayload::Steady(p) => ReferenceInput::Steady(p),
            SegmentPayload::Periodic(w) => {
                window_storage = ReferenceSchedule::window_at(w, t);
                ReferenceInput::Window(&window_storage)
            }
        };

        match built.as_mut() {
            None => {
                let b = build_for(setup, &state, &reference)?;
                solver = Some(Solver::new(&b.program, &setup.solver)?);
                built = Some(b);
            }
            Some(b) => b.update_parameters(&state, &reference)?,
        }
        let b = built.as_ref().unwrap();
        let warm = previous.as_ref().map(|r| b.shifted_warm_start(r));
        let result = solver.as_mut().unwrap().run(&b.program, warm.as_ref());

        if result.status == SolverStatus::PrimalInfeasibleCertificate {
            aborted = true;
            break;
        }
        let decoded = b.decode(&result)?;
        let art_now = decoded.artificial.at(0);
        let dx = &state - &art_now.x;
        let du = &decoded.first_input - &art_now.u;
        let stage_cost =
            (&setup.weights.q * &dx).dot(&dx) + (&setup.weights.r * &du).dot(&du);
        let dist = targets[seg_idx]
            .as_ref()
            .map_or(f64::NAN, |tar| distance_to_target(tar, t, &state));

        steps.push(TraceStep {
            time: t,
            state: state.clone(),
            input: decoded.first_input.clone(),
            status: result.status,
            iterations: result.iterations,
            primal_residual: result.primal_residual,
            artificial: decoded.artificial,
            stage_cost,
            dist_to_reachable: dist,
        });

        state = match &setup.plant {
            Plant::Linear => model.propagate(&state, &decoded.first_input),
            Plant::BallPlate(params) => plant_step(&state, &decoded.first_input, params),
        };
        previous = Some(result);
    }

    Ok(SimulationTrace {
        steps,
        final_state: state,
        aborted_infeasible: aborted,
    })
}

/// Summary statistics pulled from a trace, all computed from logged data.
#[derive(Debug, Clone)]
pub struct ConvergenceMetrics {
    /// Distance of the post-run state to the target.
    pub final_distance: f64,
    /// First step from which the settle error stays below the threshold
    /// through the end of the run, measured over `settle_indices`.
    pub settling_step: Option<usize>,
    /// Worst violation of the output band along the plant trajectory.
    pub max_constraint_violation: f64,
    /// Per-component peak of `|x_i(t)|` over the run.
    pub peak_abs_state: Vec<f64>,
}

/// Computes convergence metrics against a reachable target. `settle_indices`
/// selects the state components whose worst-case error defines settling
/// (empty means all components).
pub fn convergence_metrics(
    trace: &SimulationTrace,
    model: &LtiModel,
    target: &ReachableTarget,
    settle_threshold: f64,
    settle_indices: &[usize],
) -> ConvergenceMetrics {
    assert!(!trace.steps.is_empty(), "trace is empty");
    let n_x = model.n_x();
    let indices: Vec<usize> = if settle_indices.is_empty() {
        (0..n_x).collect()
    } else {
        settle_indices.to_vec()
    };

    let settle_err = |t: usize, state: &DVector<f64>| -> f64 {
        let tar = target.state_at(t);
        indices
            .iter()
            .map(|&i| (state[i] - tar[i]).abs())
            .fold(0.0, f64::max)
    };

    let mut max_violation: f64 = 0.0;
    let mut peak = vec![0.0f64; n_x];
    for step in &trace.steps {
        max_violation = max_violation.max(model.constraint_violation(&step.state, &step.input));
        for i in 0..n_x {
            peak[i] = peak[i].max(step.state[i].abs());
        }
    }
    for i in 0..n_x {
        peak[i] = peak[i].max(trace.final_state[i].abs());
    }

    let n_steps = trace.steps.len();
    let mut settling_step = None;
    // Scan backwards over (step errors ..., final state error).
    let final_ok = settle_err(n_steps, &trace.final_state) < settle_threshold;
    if final_ok {
        let mut s = n_steps;
        for step in trace.steps.iter().rev() {
            if settle_err(step.time, &step.state) < settle_threshold {
                s = step.time;
            } else {
                break;
            }
        }
        settling_step = Some(s);
    }

    ConvergenceMetrics {
        final_distance: distance_to_target(target, n_steps, &trace.final_state),
        settling_step,
        max_constraint_violation: max_violation,
        peak_abs_state: peak,
    }
}

#[cfg(test)]
mod tests;
