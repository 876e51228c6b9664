//! Builders translating (model, weights, horizon, reference) into cone
//! programs for the four tracking controllers, plus receding-horizon
//! parameter updates and solution decoding.
//!
//! All builders stack the decision vector as
//!
//! ```text
//! [ x(0|t) .. x(N|t) | u(0|t) .. u(N-1|t) | artificial block ]
//! ```
//!
//! where the artificial block is empty (equality-terminal MPC), one steady
//! pair (MPCT), a full period of pairs (periodic MPCT) or the six harmonic
//! parameter vectors (HMPC). References enter only the linear cost term and,
//! for the equality-terminal controller, the terminal equality rows, so a
//! built program can be retargeted in place without refactorization.

use nalgebra::{DMatrix, DVector};

use crate::harmonic::HarmonicParams;
use crate::model::{LtiModel, SteadyStatePair};
use crate::solver::{ConeProgram, CscMatrix, SocBlock, SolverResult, SolverStatus, WarmStart};
use crate::Error;

/// Default artificial-reference band tightening, far below the benchmark
/// bound scales yet above solver tolerance.
pub const DEFAULT_SIGMA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    EqualityMpc,
    Mpct,
    PeriodicMpct,
    Hmpc,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerKind::EqualityMpc => write!(f, "equality_mpc"),
            ControllerKind::Mpct => write!(f, "mpct"),
            ControllerKind::PeriodicMpct => write!(f, "periodic_mpct"),
            ControllerKind::Hmpc => write!(f, "hmpc"),
        }
    }
}

/// Positive-definite cost matrices for every formulation: stage weights
/// `q`/`r`, steady/periodic offset weights `t`/`s`, harmonic center offsets
/// `t_e`/`s_e` and the diagonal harmonic oscillation penalties `t_h`/`s_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub t_e: DMatrix<f64>,
    pub s_e: DMatrix<f64>,
    pub t_h: DMatrix<f64>,
    pub s_h: DMatrix<f64>,
}

fn check_pd(name: &str, m: &DMatrix<f64>) -> Result<(), Error> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Config(format!("{name} must be symmetric")));
    }
    let min_eig = m
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_eig <= 0.0 {
        return Err(Error::Config(format!(
            "{name} must be positive definite (smallest eigenvalue {min_eig:.3e})"
        )));
    }
    Ok(())
}

fn check_diagonal(name: &str, m: &DMatrix<f64>) -> Result<(), Error> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return Err(Error::Config(format!("{name} must be diagonal")));
            }
        }
    }
    Ok(())
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    check_diagonal("", m).is_ok()
}

impl WeightSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        t: DMatrix<f64>,
        s: DMatrix<f64>,
        t_e: DMatrix<f64>,
        s_e: DMatrix<f64>,
        t_h: DMatrix<f64>,
        s_h: DMatrix<f64>,
    ) -> Result<Self, Error> {
        check_pd("Q", &q)?;
        check_pd("R", &r)?;
        check_pd("T", &t)?;
        check_pd("S", &s)?;
        check_pd("T_e", &t_e)?;
        check_pd("S_e", &s_e)?;
        check_pd("T_h", &t_h)?;
        check_pd("S_h", &s_h)?;
        check_diagonal("T_h", &t_h)?;
        check_diagonal("S_h", &s_h)?;
        Ok(Self {
            q,
            r,
            t,
            s,
            t_e,
            s_e,
            t_h,
            s_h,
        })
    }

    /// Stage weights only; offsets default to identity. Sufficient for the
    /// equality-terminal controller.
    pub fn stage_only(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, Error> {
        let (nx, nu) = (q.nrows(), r.nrows());
        Self::new(
            q,
            r,
            DMatrix::identity(nx, nx),
            DMatrix::identity(nu, nu),
            DMatrix::identity(nx, nx),
            DMatrix::identity(nu, nu),
            DMatrix::identity(nx, nx),
            DMatrix::identity(nu, nu),
        )
    }

    /// Stage plus offset weights; the harmonic offsets mirror `t`/`s`.
    /// Requires diagonal `t`/`s` (the oscillation penalties must be
    /// diagonal); use [`WeightSet::new`] otherwise.
    pub fn tracking(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        t: DMatrix<f64>,
        s: DMatrix<f64>,
    ) -> Result<Self, Error> {
        let (t_h, s_h) = if is_diagonal(&t) && is_diagonal(&s) {
            (t.clone(), s.clone())
        } else {
            return Err(Error::Config(
                "tracking() requires diagonal T and S; pass explicit harmonic weights via new()"
                    .into(),
            ));
        };
        Self::new(q, r, t.clone(), s.clone(), t, s, t_h, s_h)
    }

    /// Harmonic weights; the steady offsets mirror the center offsets.
    pub fn harmonic(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        t_e: DMatrix<f64>,
        s_e: DMatrix<f64>,
        t_h: DMatrix<f64>,
        s_h: DMatrix<f64>,
    ) -> Result<Self, Error> {
        Self::new(q, r, t_e.clone(), s_e.clone(), t_e, s_e, t_h, s_h)
    }
}

/// Horizon, band tightening and the periodic/harmonic extras.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulationConfig {
    pub horizon: usize,
    pub sigma: f64,
    /// Artificial-trajectory period (periodic MPCT only).
    pub period: Option<usize>,
    /// Base frequency in radians per sample (HMPC only).
    pub frequency: Option<f64>,
}

impl FormulationConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            sigma: DEFAULT_SIGMA,
            period: None,
            frequency: None,
        }
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period = Some(period);
        self
    }

    pub fn with_frequency(mut self, freq: f64) -> Self {
        self.frequency = Some(freq);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    fn validate(&self, kind: ControllerKind) -> Result<(), Error> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be nonnegative".into()));
        }
        match kind {
            ControllerKind::PeriodicMpct => {
                if self.period.map_or(true, |p| p < 2) {
                    return Err(Error::Config(
                        "periodic MPCT requires a period of at least 2".into(),
                    ));
                }
            }
            ControllerKind::Hmpc => {
                if self.frequency.map_or(true, |w| w < 0.0) {
                    return Err(Error::Config(
                        "HMPC requires a nonnegative base frequency".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Decoded artificial reference of one solve.
#[derive(Debug, Clone, PartialEq)]
pub enum ArtificialRef {
    Steady(SteadyStatePair),
    Periodic(Vec<SteadyStatePair>),
    Harmonic {
        x: HarmonicParams,
        u: HarmonicParams,
    },
}

impl ArtificialRef {
    /// Artificial reference evaluated `k` samples ahead of the current time.
    pub fn at(&self, k: usize) -> SteadyStatePair {
        match self {
            ArtificialRef::Steady(p) => p.clone(),
            ArtificialRef::Periodic(traj) => traj[k % traj.len()].clone(),
            ArtificialRef::Harmonic { x, u } => {
                SteadyStatePair::new(x.evaluate(k), u.evaluate(k))
            }
        }
    }
}

/// Unpacked solver solution of one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSolution {
    pub predicted_states: Vec<DVector<f64>>,
    pub predicted_inputs: Vec<DVector<f64>>,
    pub artificial: ArtificialRef,
    pub first_input: DVector<f64>,
}

/// Desired reference passed to parameter updates.
#[derive(Debug, Clone, Copy)]
pub enum ReferenceInput<'a> {
    Steady(&'a SteadyStatePair),
    Window(&'a [SteadyStatePair]),
}

/// Positions of the decision-vector blocks of a built program.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub horizon: usize,
    pub period: usize,
    pub frequency: f64,
    pub sigma: f64,
    pub n: usize,
}

impl Layout {
    /// Offset of predicted state `x(k|t)`, `k` in `0..=horizon`.
    pub fn state_offset(&self, k: usize) -> usize {
        debug_assert!(k <= self.horizon);
        k * self.n_x
    }

    /// Offset of predicted input `u(k|t)`, `k` in `0..horizon`.
    pub fn input_offset(&self, k: usize) -> usize {
        debug_assert!(k < self.horizon);
        (self.horizon + 1) * self.n_x + k * self.n_u
    }

    /// Offset of the artificial block.
    pub fn artificial_offset(&self) -> usize {
        (self.horizon + 1) * self.n_x + self.horizon * self.n_u
    }
}

/// A cone program together with the layout metadata required to update its
/// parameters in place and decode its solutions.
#[derive(Debug, Clone)]
pub struct BuiltProgram {
    pub program: ConeProgram,
    pub kind: ControllerKind,
    pub layout: Layout,
    /// Non-fatal advisories, e.g. a horizon below the controllability index.
    pub warnings: Vec<String>,
    weights: WeightSet,
}

fn add_block(
    tri: &mut Vec<(usize, usize, f64)>,
    r0: usize,
    c0: usize,
    m: &DMatrix<f64>,
    scale: f64,
) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)] * scale;
            if v != 0.0 {
                tri.push((r0 + i, c0 + j, v));
            }
        }
    }
}

/// Adds a symmetric-cost block; off-diagonal placements get their mirror
/// image so `P` stays fully symmetric.
fn add_sym_block(
    tri: &mut Vec<(usize, usize, f64)>,
    r0: usize,
    c0: usize,
    m: &DMatrix<f64>,
    scale: f64,
) {
    add_block(tri, r0, c0, m, scale);
    if r0 != c0 {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)] * scale;
                if v != 0.0 {
                    tri.push((c0 + j, r0 + i, v));
                }
            }
        }
    }
}

fn add_identity(tri: &mut Vec<(usize, usize, f64)>, r0: usize, c0: usize, n: usize, scale: f64) {
    for i in 0..n {
        tri.push((r0 + i, c0 + i, scale));
    }
}

fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (m * v).dot(v)
}

struct BuildCommon {
    eq_tri: Vec<(usize, usize, f64)>,
    eq_rows: usize,
    box_tri: Vec<(usize, usize, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Initial-condition, dynamics and stage-constraint rows shared by all four
/// controllers.
fn common_rows(model: &LtiModel, layout: &Layout) -> BuildCommon {
    let (n_x, n_y, horizon) = (layout.n_x, layout.n_y, layout.horizon);
    let mut eq_tri = Vec::new();
    // x(0|t) = x(t)
    add_identity(&mut eq_tri, 0, layout.state_offset(0), n_x, 1.0);
    // x(k+1|t) = A x(k|t) + B u(k|t)
    for k in 0..horizon {
        let r0 = n_x + k * n_x;
        add_identity(&mut eq_tri, r0, layout.state_offset(k + 1), n_x, 1.0);
        add_block(&mut eq_tri, r0, layout.state_offset(k), &model.a, -1.0);
        add_block(&mut eq_tri, r0, layout.input_offset(k), &model.b, -1.0);
    }
    let eq_rows = n_x + horizon * n_x;

    // Output rows for k = 0 that involve no input are dropped: x(0|t) is
    // pinned to the measurement, so they cannot shape the control and would
    // only render the problem infeasible when a non-nominal plant drifts
    // marginally outside the band.
    let mut box_tri = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut row = 0usize;
    for k in 0..horizon {
        for i in 0..n_y {
            let input_row = (0..layout.n_u).any(|j| model.f[(i, j)] != 0.0);
            if k == 0 && !input_row {
                continue;
            }
            for j in 0..n_x {
                let v = model.e[(i, j)];
                if v != 0.0 {
                    box_tri.push((row, layout.state_offset(k) + j, v));
                }
            }
            for j in 0..layout.n_u {
                let v = model.f[(i, j)];
                if v != 0.0 {
                    box_tri.push((row, layout.input_offset(k) + j, v));
                }
            }
            lo.push(model.y_lo[i]);
            hi.push(model.y_hi[i]);
            row += 1;
        }
    }
    BuildCommon {
        eq_tri,
        eq_rows,
        box_tri,
        lo,
        hi,
    }
}

/// Stage quadratic cost against a fixed target: contributes only to `P`
/// diagonal blocks (the linear part depends on the target and is handled by
/// the parameter update).
fn stage_cost_blocks(weights: &WeightSet, layout: &Layout, p_tri: &mut Vec<(usize, usize, f64)>) {
    for k in 0..layout.horizon {
        add_sym_block(p_tri, layout.state_offset(k), layout.state_offset(k), &weights.q, 2.0);
        add_sym_block(p_tri, layout.input_offset(k), layout.input_offset(k), &weights.r, 2.0);
    }
}

fn check_band(model: &LtiModel, sigma: f64) -> Result<(), Error> {
    for i in 0..model.n_y() {
        if model.y_lo[i] + sigma > model.y_hi[i] - sigma {
            return Err(Error::EmptySigmaBand);
        }
    }
    Ok(())
}

fn horizon_warning(model: &LtiModel, horizon: usize) -> Vec<String> {
    match model.controllability_index() {
        Ok(idx) if horizon < idx => vec![format!(
            "horizon {horizon} is below the controllability index {idx}; \
             the stability guarantees assume horizon >= {idx}"
        )],
        _ => Vec::new(),
    }
}

fn check_state(model: &LtiModel, state: &DVector<f64>) -> Result<(), Error> {
    if state.len() != model.n_x() {
        return Err(Error::Dimension(format!(
            "state has length {}, expected {}",
            state.len(),
            model.n_x()
        )));
    }
    Ok(())
}

fn check_pair(model: &LtiModel, pair: &SteadyStatePair) -> Result<(), Error> {
    if pair.x.len() != model.n_x() || pair.u.len() != model.n_u() {
        return Err(Error::Dimension(format!(
            "reference pair ({}, {}) against model ({}, {})",
            pair.x.len(),
            pair.u.len(),
            model.n_x(),
            model.n_u()
        )));
    }
    Ok(())
}

/// Standard MPC with a terminal equality constraint pinning `x(N|t)` to the
/// desired reference.
pub fn build_equality_mpc(
    model: &LtiModel,
    weights: &WeightSet,
    cfg: &FormulationConfig,
    state: &DVector<f64>,
    reference: &SteadyStatePair,
) -> Result<BuiltProgram, Error> {
    cfg.validate(ControllerKind::EqualityMpc)?;
    check_state(model, state)?;
    check_pair(model, reference)?;
    let (n_x, n_u) = (model.n_x(), model.n_u());
    let horizon = cfg.horizon;
    let n = (horizon + 1) * n_x + horizon * n_u;
    let layout = Layout {
        n_x,
        n_u,
        n_y: model.n_y(),
        horizon,
        period: 0,
        frequency: 0.0,
        sigma: cfg.sigma,
        n,
    };
    let mut common = common_rows(model, &layout);

    // Terminal rows x(N|t) = x_r; the right-hand side carries the reference.
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, layout.state_offset(horizon), n_x, 1.0);
    common.eq_rows += n_x;

    let mut p_tri = Vec::new();
    stage_cost_blocks(weights, &layout, &mut p_tri);

    let program = ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q: DVector::zeros(n),
        a_eq: CscMatrix::from_triplets(common.eq_rows, n, &common.eq_tri),
        b_eq: DVector::zeros(common.eq_rows),
        a_box: CscMatrix::from_triplets(common.lo.len(), n, &common.box_tri),
        lo: DVector::from_vec(common.lo),
        hi: DVector::from_vec(common.hi),
        soc_blocks: Vec::new(),
        obj_constant: 0.0,
    };
    let mut built = BuiltProgram {
        program,
        kind: ControllerKind::EqualityMpc,
        layout,
        warnings: horizon_warning(model, horizon),
        weights: weights.clone(),
    };
    built.update_parameters(state, &ReferenceInput::Steady(reference))?;
    Ok(built)
}

/// MPC for tracking: appends a steady-state artificial reference `(x_s, u_s)`
/// kept inside the sigma-tightened band, with the offset cost pulling it
/// toward the desired reference.
pub fn build_mpct(
    model: &LtiModel,
    weights: &WeightSet,
    cfg: &FormulationConfig,
    state: &DVector<f64>,
    reference: &SteadyStatePair,
) -> Result<BuiltProgram, Error> {
    cfg.validate(ControllerKind::Mpct)?;
    check_state(model, state)?;
    check_pair(model, reference)?;
    check_band(model, cfg.sigma)?;
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let horizon = cfg.horizon;
    let n = (horizon + 1) * n_x + horizon * n_u + n_x + n_u;
    let layout = Layout {
        n_x,
        n_u,
        n_y,
        horizon,
        period: 0,
        frequency: 0.0,
        sigma: cfg.sigma,
        n,
    };
    let xs = layout.artificial_offset();
    let us = xs + n_x;
    let mut common = common_rows(model, &layout);

    // x(N|t) = x_s
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, layout.state_offset(horizon), n_x, 1.0);
    add_identity(&mut common.eq_tri, r0, xs, n_x, -1.0);
    common.eq_rows += n_x;
    // x_s = A x_s + B u_s
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, xs, n_x, 1.0);
    add_block(&mut common.eq_tri, r0, xs, &model.a, -1.0);
    add_block(&mut common.eq_tri, r0, us, &model.b, -1.0);
    common.eq_rows += n_x;

    // Sigma-tightened band on the artificial pair.
    let r0 = common.lo.len();
    add_block(&mut common.box_tri, r0, xs, &model.e, 1.0);
    add_block(&mut common.box_tri, r0, us, &model.f, 1.0);
    for i in 0..n_y {
        common.lo.push(model.y_lo[i] + cfg.sigma);
        common.hi.push(model.y_hi[i] - cfg.sigma);
    }

    // Stage cost (x(k) - x_s)' Q (.) plus the offset cost on (x_s, u_s).
    let mut p_tri = Vec::new();
    for k in 0..horizon {
        let (xo, uo) = (layout.state_offset(k), layout.input_offset(k));
        add_sym_block(&mut p_tri, xo, xo, &weights.q, 2.0);
        add_sym_block(&mut p_tri, xo, xs, &weights.q, -2.0);
        add_sym_block(&mut p_tri, xs, xs, &weights.q, 2.0);
        add_sym_block(&mut p_tri, uo, uo, &weights.r, 2.0);
        add_sym_block(&mut p_tri, uo, us, &weights.r, -2.0);
        add_sym_block(&mut p_tri, us, us, &weights.r, 2.0);
    }
    add_sym_block(&mut p_tri, xs, xs, &weights.t, 2.0);
    add_sym_block(&mut p_tri, us, us, &weights.s, 2.0);

    let program = ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q: DVector::zeros(n),
        a_eq: CscMatrix::from_triplets(common.eq_rows, n, &common.eq_tri),
        b_eq: DVector::zeros(common.eq_rows),
        a_box: CscMatrix::from_triplets(common.lo.len(), n, &common.box_tri),
        lo: DVector::from_vec(common.lo),
        hi: DVector::from_vec(common.hi),
        soc_blocks: Vec::new(),
        obj_constant: 0.0,
    };
    let mut built = BuiltProgram {
        program,
        kind: ControllerKind::Mpct,
        layout,
        warnings: horizon_warning(model, horizon),
        weights: weights.clone(),
    };
    built.update_parameters(state, &ReferenceInput::Steady(reference))?;
    Ok(built)
}

/// Periodic MPCT: the artificial reference is a full period of pairs closed
/// by a wrap-around dynamics row. `window` must be pre-rotated so index `k`
/// corresponds to the desired reference at time `t + k`.
pub fn build_periodic_mpct(
    model: &LtiModel,
    weights: &WeightSet,
    cfg: &FormulationConfig,
    state: &DVector<f64>,
    window: &[SteadyStatePair],
) -> Result<BuiltProgram, Error> {
    cfg.validate(ControllerKind::PeriodicMpct)?;
    check_state(model, state)?;
    check_band(model, cfg.sigma)?;
    let period = cfg.period.unwrap();
    if window.len() != period {
        return Err(Error::Dimension(format!(
            "reference window has {} entries, expected the period {}",
            window.len(),
            period
        )));
    }
    for pair in window {
        check_pair(model, pair)?;
    }
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let horizon = cfg.horizon;
    let n = (horizon + 1) * n_x + horizon * n_u + period * (n_x + n_u);
    let layout = Layout {
        n_x,
        n_u,
        n_y,
        horizon,
        period,
        frequency: 0.0,
        sigma: cfg.sigma,
        n,
    };
    let base = layout.artificial_offset();
    let xs = |k: usize| base + k * n_x;
    let us = |k: usize| base + period * n_x + k * n_u;
    let mut common = common_rows(model, &layout);

    // x(N|t) = x_s(N mod T_p | t)
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, layout.state_offset(horizon), n_x, 1.0);
    add_identity(&mut common.eq_tri, r0, xs(horizon % period), n_x, -1.0);
    common.eq_rows += n_x;
    // Wrap row x_s(0) = A x_s(T_p - 1) + B u_s(T_p - 1)
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, xs(0), n_x, 1.0);
    add_block(&mut common.eq_tri, r0, xs(period - 1), &model.a, -1.0);
    add_block(&mut common.eq_tri, r0, us(period - 1), &model.b, -1.0);
    common.eq_rows += n_x;
    // Chain rows x_s(k+1) = A x_s(k) + B u_s(k)
    for k in 0..period - 1 {
        let r0 = common.eq_rows;
        add_identity(&mut common.eq_tri, r0, xs(k + 1), n_x, 1.0);
        add_block(&mut common.eq_tri, r0, xs(k), &model.a, -1.0);
        add_block(&mut common.eq_tri, r0, us(k), &model.b, -1.0);
        common.eq_rows += n_x;
    }

    // Sigma-tightened band on every artificial pair.
    for k in 0..period {
        let r0 = common.lo.len();
        add_block(&mut common.box_tri, r0, xs(k), &model.e, 1.0);
        add_block(&mut common.box_tri, r0, us(k), &model.f, 1.0);
        for i in 0..n_y {
            common.lo.push(model.y_lo[i] + cfg.sigma);
            common.hi.push(model.y_hi[i] - cfg.sigma);
        }
    }

    let mut p_tri = Vec::new();
    for k in 0..horizon {
        let (xo, uo) = (layout.state_offset(k), layout.input_offset(k));
        let (xsk, usk) = (xs(k % period), us(k % period));
        add_sym_block(&mut p_tri, xo, xo, &weights.q, 2.0);
        add_sym_block(&mut p_tri, xo, xsk, &weights.q, -2.0);
        add_sym_block(&mut p_tri, xsk, xsk, &weights.q, 2.0);
        add_sym_block(&mut p_tri, uo, uo, &weights.r, 2.0);
        add_sym_block(&mut p_tri, uo, usk, &weights.r, -2.0);
        add_sym_block(&mut p_tri, usk, usk, &weights.r, 2.0);
    }
    for k in 0..period {
        add_sym_block(&mut p_tri, xs(k), xs(k), &weights.t, 2.0);
        add_sym_block(&mut p_tri, us(k), us(k), &weights.s, 2.0);
    }

    let program = ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q: DVector::zeros(n),
        a_eq: CscMatrix::from_triplets(common.eq_rows, n, &common.eq_tri),
        b_eq: DVector::zeros(common.eq_rows),
        a_box: CscMatrix::from_triplets(common.lo.len(), n, &common.box_tri),
        lo: DVector::from_vec(common.lo),
        hi: DVector::from_vec(common.hi),
        soc_blocks: Vec::new(),
        obj_constant: 0.0,
    };
    let mut built = BuiltProgram {
        program,
        kind: ControllerKind::PeriodicMpct,
        layout,
        warnings: horizon_warning(model, horizon),
        weights: weights.clone(),
    };
    built.update_parameters(state, &ReferenceInput::Window(window))?;
    Ok(built)
}

/// Harmonic MPC: the artificial reference is the harmonic pair
/// `(x_e, x_s, x_c, u_e, u_s, u_c)`, constrained to the dynamics set by
/// equality rows and to the tightened band by two 3-dimensional cone blocks
/// per output.
pub fn build_hmpc(
    model: &LtiModel,
    weights: &WeightSet,
    cfg: &FormulationConfig,
    state: &DVector<f64>,
    reference: &SteadyStatePair,
) -> Result<BuiltProgram, Error> {
    cfg.validate(ControllerKind::Hmpc)?;
    check_state(model, state)?;
    check_pair(model, reference)?;
    check_band(model, cfg.sigma)?;
    let w = cfg.frequency.unwrap();
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let horizon = cfg.horizon;
    let n = (horizon + 1) * n_x + horizon * n_u + 3 * (n_x + n_u);
    let layout = Layout {
        n_x,
        n_u,
        n_y,
        horizon,
        period: 0,
        frequency: w,
        sigma: cfg.sigma,
        n,
    };
    let base = layout.artificial_offset();
    let (xe, xsn, xc) = (base, base + n_x, base + 2 * n_x);
    let (ue, usn, uc) = (base + 3 * n_x, base + 3 * n_x + n_u, base + 3 * n_x + 2 * n_u);
    let (cw, sw) = (w.cos(), w.sin());
    let mut common = common_rows(model, &layout);

    // x(N|t) = x_e + sin(wN) x_s + cos(wN) x_c
    let r0 = common.eq_rows;
    let (s_n, c_n) = ((w * horizon as f64).sin(), (w * horizon as f64).cos());
    add_identity(&mut common.eq_tri, r0, layout.state_offset(horizon), n_x, 1.0);
    add_identity(&mut common.eq_tri, r0, xe, n_x, -1.0);
    if s_n != 0.0 {
        add_identity(&mut common.eq_tri, r0, xsn, n_x, -s_n);
    }
    if c_n != 0.0 {
        add_identity(&mut common.eq_tri, r0, xc, n_x, -c_n);
    }
    common.eq_rows += n_x;
    // Dynamics set rows: bias is a steady state, sine/cosine parts rotate.
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, xe, n_x, 1.0);
    add_block(&mut common.eq_tri, r0, xe, &model.a, -1.0);
    add_block(&mut common.eq_tri, r0, ue, &model.b, -1.0);
    common.eq_rows += n_x;
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, xsn, n_x, cw);
    add_block(&mut common.eq_tri, r0, xsn, &model.a, -1.0);
    add_identity(&mut common.eq_tri, r0, xc, n_x, -sw);
    add_block(&mut common.eq_tri, r0, usn, &model.b, -1.0);
    common.eq_rows += n_x;
    let r0 = common.eq_rows;
    add_identity(&mut common.eq_tri, r0, xsn, n_x, sw);
    add_identity(&mut common.eq_tri, r0, xc, n_x, cw);
    add_block(&mut common.eq_tri, r0, xc, &model.a, -1.0);
    add_block(&mut common.eq_tri, r0, uc, &model.b, -1.0);
    common.eq_rows += n_x;

    // Two cone blocks per output keep the harmonic output in the band.
    let mut soc_blocks = Vec::with_capacity(2 * n_y);
    for i in 0..n_y {
        let mut upper = Vec::new();
        let mut swing = Vec::new();
        for j in 0..n_x {
            let v = model.e[(i, j)];
            if v != 0.0 {
                upper.push((0usize, xe + j, -v));
                swing.push((1usize, xsn + j, v));
                swing.push((2usize, xc + j, v));
            }
        }
        for j in 0..n_u {
            let v = model.f[(i, j)];
            if v != 0.0 {
                upper.push((0usize, ue + j, -v));
                swing.push((1usize, usn + j, v));
                swing.push((2usize, uc + j, v));
            }
        }
        let mut upper_tri = upper.clone();
        upper_tri.extend(swing.iter().copied());
        soc_blocks.push(SocBlock {
            selector: CscMatrix::from_triplets(3, n, &upper_tri),
            offset: DVector::from_vec(vec![model.y_hi[i] - cfg.sigma, 0.0, 0.0]),
        });
        let mut lower_tri: Vec<(usize, usize, f64)> = upper
            .iter()
            .map(|&(r, c, v)| (r, c, -v))
            .collect();
        lower_tri.extend(swing.iter().copied());
        soc_blocks.push(SocBlock {
            selector: CscMatrix::from_triplets(3, n, &lower_tri),
            offset: DVector::from_vec(vec![-model.y_lo[i] - cfg.sigma, 0.0, 0.0]),
        });
    }

    // Stage cost against the harmonic evaluated at k, plus the offset cost.
    let mut p_tri = Vec::new();
    for k in 0..horizon {
        let (s_k, c_k) = ((w * k as f64).sin(), (w * k as f64).cos());
        let (xo, uo) = (layout.state_offset(k), layout.input_offset(k));
        add_sym_block(&mut p_tri, xo, xo, &weights.q, 2.0);
        add_sym_block(&mut p_tri, xo, xe, &weights.q, -2.0);
        add_sym_block(&mut p_tri, xo, xsn, &weights.q, -2.0 * s_k);
        add_sym_block(&mut p_tri, xo, xc, &weights.q, -2.0 * c_k);
        add_sym_block(&mut p_tri, xe, xe, &weights.q, 2.0);
        add_sym_block(&mut p_tri, xe, xsn, &weights.q, 2.0 * s_k);
        add_sym_block(&mut p_tri, xe, xc, &weights.q, 2.0 * c_k);
        add_sym_block(&mut p_tri, xsn, xsn, &weights.q, 2.0 * s_k * s_k);
        add_sym_block(&mut p_tri, xsn, xc, &weights.q, 2.0 * s_k * c_k);
        add_sym_block(&mut p_tri, xc, xc, &weights.q, 2.0 * c_k * c_k);

        add_sym_block(&mut p_tri, uo, uo, &weights.r, 2.0);
        add_sym_block(&mut p_tri, uo, ue, &weights.r, -2.0);
        add_sym_block(&mut p_tri, uo, usn, &weights.r, -2.0 * s_k);
        add_sym_block(&mut p_tri, uo, uc, &weights.r, -2.0 * c_k);
        add_sym_block(&mut p_tri, ue, ue, &weights.r, 2.0);
        add_sym_block(&mut p_tri, ue, usn, &weights.r, 2.0 * s_k);
        add_sym_block(&mut p_tri, ue, uc, &weights.r, 2.0 * c_k);
        add_sym_block(&mut p_tri, usn, usn, &weights.r, 2.0 * s_k * s_k);
        add_sym_block(&mut p_tri, usn, uc, &weights.r, 2.0 * s_k * c_k);
        add_sym_block(&mut p_tri, uc, uc, &weights.r, 2.0 * c_k * c_k);
    }
    add_sym_block(&mut p_tri, xe, xe, &weights.t_e, 2.0);
    add_sym_block(&mut p_tri, ue, ue, &weights.s_e, 2.0);
    add_sym_block(&mut p_tri, xsn, xsn, &weights.t_h, 2.0);
    add_sym_block(&mut p_tri, xc, xc, &weights.t_h, 2.0);
    add_sym_block(&mut p_tri, usn, usn, &weights.s_h, 2.0);
    add_sym_block(&mut p_tri, uc, uc, &weights.s_h, 2.0);

    let program = ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q: DVector::zeros(n),
        a_eq: CscMatrix::from_triplets(common.eq_rows, n, &common.eq_tri),
        b_eq: DVector::zeros(common.eq_rows),
        a_box: CscMatrix::from_triplets(common.lo.len(), n, &common.box_tri),
        lo: DVector::from_vec(common.lo),
        hi: DVector::from_vec(common.hi),
        soc_blocks,
        obj_constant: 0.0,
    };
    let mut built = BuiltProgram {
        program,
        kind: ControllerKind::Hmpc,
        layout,
        warnings: horizon_warning(model, horizon),
        weights: weights.clone(),
    };
    built.update_parameters(state, &ReferenceInput::Steady(reference))?;
    Ok(built)
}

impl BuiltProgram {
    /// Retargets the program to a new state and reference. Only `q`, `b_eq`
    /// and the objective constant change; the sparsity pattern and any
    /// cached factorization remain valid.
    pub fn update_parameters(
        &mut self,
        state: &DVector<f64>,
        reference: &ReferenceInput,
    ) -> Result<(), Error> {
        let lay = &self.layout;
        if state.len() != lay.n_x {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                state.len(),
                lay.n_x
            )));
        }
        self.program.b_eq.fill(0.0);
        self.program
            .b_eq
            .rows_mut(0, lay.n_x)
            .copy_from(state);
        self.program.q.fill(0.0);

        match (self.kind, reference) {
            (ControllerKind::EqualityMpc, ReferenceInput::Steady(r)) => {
                if r.x.len() != lay.n_x || r.u.len() != lay.n_u {
                    return Err(Error::Dimension("reference pair size mismatch".into()));
                }
                // Terminal rows sit after the initial and dynamics rows.
                let terminal = lay.n_x + lay.horizon * lay.n_x;
                self.program
                    .b_eq
                    .rows_mut(terminal, lay.n_x)
                    .copy_from(&r.x);
                let qx = &self.weights.q * &r.x * -2.0;
                let qu = &self.weights.r * &r.u * -2.0;
                for k in 0..lay.horizon {
                    self.program
                        .q
                        .rows_mut(lay.state_offset(k), lay.n_x)
                        .copy_from(&qx);
                    self.program
                        .q
                        .rows_mut(lay.input_offset(k), lay.n_u)
                        .copy_from(&qu);
                }
                self.program.obj_constant = lay.horizon as f64
                    * (quad_form(&self.weights.q, &r.x) + quad_form(&self.weights.r, &r.u));
            }
            (ControllerKind::Mpct, ReferenceInput::Steady(r)) => {
                if r.x.len() != lay.n_x || r.u.len() != lay.n_u {
                    return Err(Error::Dimension("reference pair size mismatch".into()));
                }
                let base = lay.artificial_offset();
                self.program
                    .q
                    .rows_mut(base, lay.n_x)
                    .copy_from(&(&self.weights.t * &r.x * -2.0));
                self.program
                    .q
                    .rows_mut(base + lay.n_x, lay.n_u)
                    .copy_from(&(&self.weights.s * &r.u * -2.0));
                self.program.obj_constant =
                    quad_form(&self.weights.t, &r.x) + quad_form(&self.weights.s, &r.u);
            }
            (ControllerKind::PeriodicMpct, ReferenceInput::Window(window)) => {
                if window.len() != lay.period {
                    return Err(Error::Dimension(format!(
                        "reference window has {} entries, expected {}",
                        window.len(),
                        lay.period
                    )));
                }
                let base = lay.artificial_offset();
                let mut constant = 0.0;
                for (k, pair) in window.iter().enumerate() {
                    if pair.x.len() != lay.n_x || pair.u.len() != lay.n_u {
                        return Err(Error::Dimension("reference pair size mismatch".into()));
                    }
                    self.program
                        .q
                        .rows_mut(base + k * lay.n_x, lay.n_x)
                        .copy_from(&(&self.weights.t * &pair.x * -2.0));
                    self.program
                        .q
                        .rows_mut(base + lay.period * lay.n_x + k * lay.n_u, lay.n_u)
                        .copy_from(&(&self.weights.s * &pair.u * -2.0));
                    constant += quad_form(&self.weights.t, &pair.x)
                        + quad_form(&self.weights.s, &pair.u);
                }
                self.program.obj_constant = constant;
            }
            (ControllerKind::Hmpc, ReferenceInput::Steady(r)) => {
                if r.x.len() != lay.n_x || r.u.len() != lay.n_u {
                    return Err(Error::Dimension("reference pair size mismatch".into()));
                }
                let base = lay.artificial_offset();
                self.program
                    .q
                    .rows_mut(base, lay.n_x)
                    .copy_from(&(&self.weights.t_e * &r.x * -2.0));
                self.program
                    .q
                    .rows_mut(base + 3 * lay.n_x, lay.n_u)
                    .copy_from(&(&self.weights.s_e * &r.u * -2.0));
                self.program.obj_constant =
                    quad_form(&self.weights.t_e, &r.x) + quad_form(&self.weights.s_e, &r.u);
            }
            _ => {
                return Err(Error::IncompatibleSchedule(format!(
                    "{} cannot take this reference payload",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    /// Unpacks the stacked solution. Accepts solved and max-iteration
    /// results; an infeasibility certificate carries no decodable point.
    pub fn decode(&self, result: &SolverResult) -> Result<DecodedSolution, Error> {
        if result.status == SolverStatus::PrimalInfeasibleCertificate {
            return Err(Error::Undecodable(result.status));
        }
        let lay = &self.layout;
        let x = &result.x;
        let states: Vec<DVector<f64>> = (0..=lay.horizon)
            .map(|k| x.rows(lay.state_offset(k), lay.n_x).into_owned())
            .collect();
        let inputs: Vec<DVector<f64>> = (0..lay.horizon)
            .map(|k| x.rows(lay.input_offset(k), lay.n_u).into_owned())
            .collect();
        let base = lay.artificial_offset();
        let artificial = match self.kind {
            ControllerKind::EqualityMpc => ArtificialRef::Steady(SteadyStatePair::new(
                states[lay.horizon].clone(),
                DVector::zeros(lay.n_u),
            )),
            ControllerKind::Mpct => ArtificialRef::Steady(SteadyStatePair::new(
                x.rows(base, lay.n_x).into_owned(),
                x.rows(base + lay.n_x, lay.n_u).into_owned(),
            )),
            ControllerKind::PeriodicMpct => {
                let traj = (0..lay.period)
                    .map(|k| {
                        SteadyStatePair::new(
                            x.rows(base + k * lay.n_x, lay.n_x).into_owned(),
                            x.rows(base + lay.period * lay.n_x + k * lay.n_u, lay.n_u)
                                .into_owned(),
                        )
                    })
                    .collect();
                ArtificialRef::Periodic(traj)
            }
            ControllerKind::Hmpc => {
                let xh = HarmonicParams::new(
                    x.rows(base, lay.n_x).into_owned(),
                    x.rows(base + lay.n_x, lay.n_x).into_owned(),
                    x.rows(base + 2 * lay.n_x, lay.n_x).into_owned(),
                    lay.frequency,
                );
                let ub = base + 3 * lay.n_x;
                let uh = HarmonicParams::new(
                    x.rows(ub, lay.n_u).into_owned(),
                    x.rows(ub + lay.n_u, lay.n_u).into_owned(),
                    x.rows(ub + 2 * lay.n_u, lay.n_u).into_owned(),
                    lay.frequency,
                );
                ArtificialRef::Harmonic { x: xh, u: uh }
            }
        };
        let first_input = inputs[0].clone();
        Ok(DecodedSolution {
            predicted_states: states,
            predicted_inputs: inputs,
            artificial,
            first_input,
        })
    }

    /// Receding-horizon warm start from the previous step's solution: the
    /// predicted trajectory shifts one step with the last block duplicated,
    /// periodic artificial pairs rotate by one, and harmonic sine/cosine
    /// parts advance by one sample of phase. Duals carry over unchanged.
    pub fn shifted_warm_start(&self, previous: &SolverResult) -> WarmStart {
        let lay = &self.layout;
        let prev = &previous.x;
        let mut x = prev.clone();
        for k in 0..lay.horizon {
            let src = lay.state_offset(k + 1);
            let dst = lay.state_offset(k);
            for i in 0..lay.n_x {
                x[dst + i] = prev[src + i];
            }
        }
        for k in 0..lay.horizon.saturating_sub(1) {
            let src = lay.input_offset(k + 1);
            let dst = lay.input_offset(k);
            for i in 0..lay.n_u {
                x[dst + i] = prev[src + i];
            }
        }
        let base = lay.artificial_offset();
        match self.kind {
            ControllerKind::EqualityMpc | ControllerKind::Mpct => {}
            ControllerKind::PeriodicMpct => {
                let p = lay.period;
                for k in 0..p {
                    let src = base + ((k + 1) % p) * lay.n_x;
                    let dst = base + k * lay.n_x;
                    for i in 0..lay.n_x {
                        x[dst + i] = prev[src + i];
                    }
                    let usrc = base + p * lay.n_x + ((k + 1) % p) * lay.n_u;
                    let udst = base + p * lay.n_x + k * lay.n_u;
                    for i in 0..lay.n_u {
                        x[udst + i] = prev[usrc + i];
                    }
                }
            }
            ControllerKind::Hmpc => {
                let (cw, sw) = (lay.frequency.cos(), lay.frequency.sin());
                let rotate = |x: &mut DVector<f64>, s_off: usize, c_off: usize, len: usize| {
                    for i in 0..len {
                        let s = prev[s_off + i];
                        let c = prev[c_off + i];
                        x[s_off + i] = s * cw - c * sw;
                        x[c_off + i] = s * sw + c * cw;
                    }
                };
                rotate(&mut x, base + lay.n_x, base + 2 * lay.n_x, lay.n_x);
                let ub = base + 3 * lay.n_x;
                rotate(&mut x, ub + lay.n_u, ub + 2 * lay.n_u, lay.n_u);
            }
        }
        WarmStart {
            x,
            y: previous.y.clone(),
        }
    }
}

#[cfg(test)]
mod tests;
