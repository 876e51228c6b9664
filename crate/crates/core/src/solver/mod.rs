//! First-order operator-splitting (ADMM) solver for sparse convex programs
//! with a quadratic objective, linear equalities, box rows and 3-dimensional
//! second-order cone blocks.
//!
//! The problem solved is
//!
//! ```text
//! min  (1/2) x' P x + q' x
//! s.t. A_eq x = b_eq
//!      lo <= A_box x <= hi
//!      G_j x + h_j in K,  K = {(z0, z1): ||z1|| <= z0, z1 in R^2}
//! ```
//!
//! All constraint operators are stacked into one matrix `A` and the iteration
//! alternates a regularized KKT solve with a projection onto the constraint
//! set. The KKT matrix depends only on `P`, `A`, `rho` and the regularization,
//! so it is factored once per problem structure and reused across
//! receding-horizon parameter updates (which only touch `q`, `b_eq`, `lo`,
//! `hi`). An optional active-set polish step refines solutions to
//! near-machine precision when the cone blocks are inactive or at their apex.

pub mod ldl;
pub mod sparse;

use nalgebra::DVector;

use crate::Error;
pub use sparse::CscMatrix;

/// ADMM proximal regularization on the x-update.
const SIGMA_REG: f64 = 1e-6;
/// Fixed penalty weight of the equality rows relative to `rho`. Equality
/// rows want much stiffer enforcement than the inequality rows; this is the
/// standard structural choice of ADMM QP solvers and is not adapted online.
const RHO_EQ_WEIGHT: f64 = 1e3;
/// Iteration interval for the infeasibility diagnostics.
const INFEAS_CHECK_INTERVAL: usize = 25;
/// Tolerance of the primal-infeasibility certificate.
const EPS_PINF: f64 = 1e-6;
/// Growth threshold on the dual sequence that flags divergence.
const DUAL_GROWTH_LIMIT: f64 = 1e8;
/// Regularization of the polish KKT system.
const POLISH_REG: f64 = 1e-9;
const POLISH_REFINE_STEPS: usize = 3;
/// Iteration cadence of in-loop polish attempts.
const POLISH_ATTEMPT_INTERVAL: usize = 250;
/// Bound on add/drop rounds of the polish active-set iteration.
const POLISH_ACTIVE_SET_ROUNDS: usize = 6;
/// Fixed over-relaxation of the splitting step.
const RELAXATION: f64 = 1.6;

/// One second-order cone block `G x + h in K` with `G` of shape `3 x n`.
/// Row 0 maps to the cone scalar `z0`, rows 1..3 to `z1 in R^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    pub selector: CscMatrix,
    pub offset: DVector<f64>,
}

/// Sparse convex program shared by all four controller formulations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    /// Full symmetric quadratic-cost matrix (`n x n`, PSD).
    pub p: CscMatrix,
    pub q: DVector<f64>,
    pub a_eq: CscMatrix,
    pub b_eq: DVector<f64>,
    pub a_box: CscMatrix,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub soc_blocks: Vec<SocBlock>,
    /// Constant completing the square so [`ConeProgram::objective`] reports
    /// the formulation's true cost.
    pub obj_constant: f64,
}

impl ConeProgram {
    pub fn n(&self) -> usize {
        self.p.ncols
    }

    pub fn m_eq(&self) -> usize {
        self.a_eq.nrows
    }

    pub fn m_box(&self) -> usize {
        self.a_box.nrows
    }

    /// Total stacked constraint rows.
    pub fn m_total(&self) -> usize {
        self.m_eq() + self.m_box() + 3 * self.soc_blocks.len()
    }

    /// `(1/2) x' P x + q' x + obj_constant`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let mut px = DVector::zeros(self.n());
        self.p.mul_vec(x, &mut px);
        0.5 * px.dot(x) + self.q.dot(x) + self.obj_constant
    }

    /// Vertical stack of all constraint operators.
    pub fn stacked_constraints(&self) -> CscMatrix {
        let mut blocks: Vec<&CscMatrix> = vec![&self.a_eq, &self.a_box];
        for b in &self.soc_blocks {
            blocks.push(&b.selector);
        }
        CscMatrix::vstack(&blocks)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.n();
        if self.p.nrows != n {
            return Err(Error::Structure("P must be square".into()));
        }
        if self.q.len() != n {
            return Err(Error::Structure("q length must match P".into()));
        }
        if self.a_eq.ncols != n || self.a_box.ncols != n {
            return Err(Error::Structure(
                "constraint matrices must have n columns".into(),
            ));
        }
        if self.b_eq.len() != self.m_eq() {
            return Err(Error::Structure("b_eq length mismatch".into()));
        }
        if self.lo.len() != self.m_box() || self.hi.len() != self.m_box() {
            return Err(Error::Structure("box bound length mismatch".into()));
        }
        for i in 0..self.m_box() {
            if !(self.lo[i] <= self.hi[i]) {
                return Err(Error::Structure(format!(
                    "box row {i} has lo > hi ({} > {})",
                    self.lo[i], self.hi[i]
                )));
            }
        }
        for (j, b) in self.soc_blocks.iter().enumerate() {
            if b.selector.nrows != 3 || b.selector.ncols != n || b.offset.len() != 3 {
                return Err(Error::Structure(format!(
                    "SOC block {j} must select exactly 3 scalars"
                )));
            }
        }
        let finite = self.p.values.iter().all(|v| v.is_finite())
            && self.q.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite())
            && self.lo.iter().all(|v| v.is_finite())
            && self.hi.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Structure("non-finite problem data".into()));
        }
        // Symmetry of P, checked entry-wise against the transpose pattern.
        let dense_ok = {
            let pd = self.p.to_dense();
            let scale = pd.amax().max(1.0);
            (&pd - pd.transpose()).amax() <= 1e-12 * scale
        };
        if !dense_ok {
            return Err(Error::Structure("P is not symmetric".into()));
        }
        Ok(())
    }
}

/// Component-wise clamp of `v` into `[lo, hi]`.
pub fn project_box(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]))
}

/// Euclidean projection onto `{(z0, z1): ||z1|| <= z0}`.
pub fn project_soc(y0: f64, y1: [f64; 2]) -> (f64, [f64; 2]) {
    let norm = y1[0].hypot(y1[1]);
    if norm <= y0 {
        (y0, y1)
    } else if norm <= -y0 {
        (0.0, [0.0, 0.0])
    } else {
        let scale = 0.5 * (norm + y0);
        (scale, [scale * y1[0] / norm, scale * y1[1] / norm])
    }
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Solved,
    MaxIterReached,
    PrimalInfeasibleCertificate,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverStatus::Solved => write!(f, "solved"),
            SolverStatus::MaxIterReached => write!(f, "max_iter"),
            SolverStatus::PrimalInfeasibleCertificate => write!(f, "infeasible"),
        }
    }
}

/// Primal/dual pair used to warm start a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// ADMM penalty parameter; fixed over the iteration.
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub warm_start: Option<WarmStart>,
    /// Attempt an active-set refinement after convergence.
    pub polish: bool,
    /// Record (iteration, primal residual, dual residual) triples.
    pub log_iterations: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 20_000,
            eps_abs: 1e-6,
            eps_rel: 1e-4,
            warm_start: None,
            polish: false,
            log_iterations: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.rho <= 0.0 || self.eps_abs <= 0.0 || self.eps_rel < 0.0 || self.max_iter == 0 {
            return Err(Error::Config(
                "solver config requires rho > 0, eps_abs > 0, eps_rel >= 0, max_iter >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Oracle-grade settings used by the reachable-reference solves. The
    /// penalty is raised above the default: these problems carry offset
    /// weights well above unit scale and the absolute 1e-9 target is
    /// otherwise far too slow.
    pub fn oracle() -> Self {
        Self {
            rho: 50.0,
            eps_abs: 1e-9,
            eps_rel: 0.0,
            max_iter: 150_000,
            polish: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub x: DVector<f64>,
    /// Stacked dual variables, ordered (equality, box, cone) rows.
    pub y: DVector<f64>,
    pub iterations: usize,
    /// Worst constraint violation of `x` at termination.
    pub primal_residual: f64,
    /// `||P x + q + A' y||_inf` at termination.
    pub dual_residual: f64,
    pub objective: f64,
    /// Filled when `log_iterations` is set.
    pub iteration_log: Vec<(usize, f64, f64)>,
}

/// Worst violation of the program's constraints at the point `ax = A x`
/// (stacked constraint values).
fn stacked_violation(prog: &ConeProgram, ax: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    let m_eq = prog.m_eq();
    for i in 0..m_eq {
        worst = worst.max((ax[i] - prog.b_eq[i]).abs());
    }
    for i in 0..prog.m_box() {
        let v = ax[m_eq + i];
        worst = worst.max(prog.lo[i] - v).max(v - prog.hi[i]);
    }
    let cone_base = m_eq + prog.m_box();
    for (j, blk) in prog.soc_blocks.iter().enumerate() {
        let o = cone_base + 3 * j;
        let z0 = ax[o] + blk.offset[0];
        let z1 = ax[o + 1] + blk.offset[1];
        let z2 = ax[o + 2] + blk.offset[2];
        worst = worst.max(z1.hypot(z2) - z0);
    }
    worst
}

/// Standard primal/dual residual pair used by the stopping rule, computed at
/// an arbitrary primal/dual candidate.
pub fn kkt_residuals(prog: &ConeProgram, x: &DVector<f64>, duals: &DVector<f64>) -> (f64, f64) {
    let a = prog.stacked_constraints();
    let mut ax = DVector::zeros(a.nrows);
    a.mul_vec(x, &mut ax);
    let primal = stacked_violation(prog, &ax);

    let mut dual_vec = DVector::zeros(prog.n());
    prog.p.mul_vec(x, &mut dual_vec);
    dual_vec += &prog.q;
    let mut aty = DVector::zeros(prog.n());
    a.mul_vec_transpose(duals, &mut aty);
    dual_vec += &aty;
    (primal, dual_vec.amax())
}

/// One-shot solve; builds a [`Solver`] and runs it.
pub fn solve(prog: &ConeProgram, cfg: &SolverConfig) -> Result<SolverResult, Error> {
    let mut solver = Solver::new(prog, cfg)?;
    Ok(solver.run(prog, cfg.warm_start.as_ref()))
}

/// ADMM workspace holding the factored KKT system. Reusable across solves of
/// programs with identical `P` and constraint matrices (only `q`, `b_eq`,
/// `lo`, `hi` and SOC offsets may change).
pub struct Solver {
    n: usize,
    m: usize,
    a: CscMatrix,
    kkt_upper: CscMatrix,
    kkt: ldl::LdlFactor,
    /// Per-row penalty: `RHO_EQ_WEIGHT * rho` on equality rows, `rho`
    /// elsewhere; fixed over the iteration.
    rho_rows: Vec<f64>,
    cfg: SolverConfig,
}

impl Solver {
    pub fn new(prog: &ConeProgram, cfg: &SolverConfig) -> Result<Self, Error> {
        prog.validate()?;
        cfg.validate()?;
        let n = prog.n();
        let a = prog.stacked_constraints();
        let m = a.nrows;

        let mut triplets: Vec<(usize, usize, f64)> =
            Vec::with_capacity(prog.p.nnz() / 2 + a.nnz() + n + m);
        for (r, c, v) in prog.p.iter() {
            if r <= c {
                triplets.push((r, c, v));
            }
        }
        for j in 0..n {
            triplets.push((j, j, SIGMA_REG));
        }
        for (r, c, v) in a.iter() {
            triplets.push((c, n + r, v));
        }
        let m_eq = prog.m_eq();
        let rho_rows: Vec<f64> = (0..m)
            .map(|i| {
                if i < m_eq {
                    RHO_EQ_WEIGHT * cfg.rho
                } else {
                    cfg.rho
                }
            })
            .collect();
        for (i, &rho_i) in rho_rows.iter().enumerate() {
            triplets.push((n + i, n + i, -1.0 / rho_i));
        }
        let kkt_upper = CscMatrix::from_triplets(n + m, n + m, &triplets);
        let sym = ldl::symbolic(&kkt_upper)?;
        let kkt = ldl::factor(&kkt_upper, &sym)?;
        Ok(Self {
            n,
            m,
            a,
            kkt_upper,
            kkt,
            rho_rows,
            cfg: cfg.clone(),
        })
    }

    /// Symmetric matvec with the KKT matrix stored as its upper triangle.
    fn kkt_matvec(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for (r, c, val) in self.kkt_upper.iter() {
            out[r] += val * v[c];
            if r != c {
                out[c] += val * v[r];
            }
        }
    }

    /// Solves the KKT system with one iterative-refinement pass; the stiff
    /// equality-row penalties push the matrix conditioning to a range where
    /// a single raw LDL solve caps the achievable residuals.
    fn kkt_solve_refined(
        &self,
        rhs: &mut DVector<f64>,
        rhs0: &mut DVector<f64>,
        scratch: &mut DVector<f64>,
    ) {
        rhs0.copy_from(rhs);
        self.kkt.solve_in_place(rhs);
        self.kkt_matvec(rhs, scratch);
        for i in 0..rhs.len() {
            scratch[i] = rhs0[i] - scratch[i];
        }
        self.kkt.solve_in_place(scratch);
        *rhs += &*scratch;
    }

    /// Projects the stacked constraint-space point `w` onto the constraint
    /// set in place.
    fn project_constraint_set(&self, prog: &ConeProgram, w: &mut DVector<f64>) {
        let m_eq = prog.m_eq();
        for i in 0..m_eq {
            w[i] = prog.b_eq[i];
        }
        for i in 0..prog.m_box() {
            w[m_eq + i] = w[m_eq + i].clamp(prog.lo[i], prog.hi[i]);
        }
        let cone_base = m_eq + prog.m_box();
        for (j, blk) in prog.soc_blocks.iter().enumerate() {
            let o = cone_base + 3 * j;
            let (z0, z1) = project_soc(
                w[o] + blk.offset[0],
                [w[o + 1] + blk.offset[1], w[o + 2] + blk.offset[2]],
            );
            w[o] = z0 - blk.offset[0];
            w[o + 1] = z1[0] - blk.offset[1];
            w[o + 2] = z1[1] - blk.offset[2];
        }
    }

    /// Support function of the constraint set in the direction `e`, or
    /// `None` when unbounded (direction outside the cone polars).
    fn support(&self, prog: &ConeProgram, e: &DVector<f64>) -> Option<f64> {
        let m_eq = prog.m_eq();
        let mut s = 0.0;
        for i in 0..m_eq {
            s += prog.b_eq[i] * e[i];
        }
        for i in 0..prog.m_box() {
            let v = e[m_eq + i];
            s += if v > 0.0 {
                prog.hi[i] * v
            } else {
                prog.lo[i] * v
            };
        }
        let cone_base = m_eq + prog.m_box();
        for (j, blk) in prog.soc_blocks.iter().enumerate() {
            let o = cone_base + 3 * j;
            let (e0, e1, e2) = (e[o], e[o + 1], e[o + 2]);
            if e1.hypot(e2) > -e0 + 1e-9 {
                return None;
            }
            s -= blk.offset[0] * e0 + blk.offset[1] * e1 + blk.offset[2] * e2;
        }
        Some(s)
    }

    /// Runs the ADMM iteration. `warm` overrides the config's warm start.
    pub fn run(&mut self, prog: &ConeProgram, warm: Option<&WarmStart>) -> SolverResult {
        let (n, m) = (self.n, self.m);
        debug_assert_eq!(prog.n(), n);
        debug_assert_eq!(prog.m_total(), m);
        let cfg = &self.cfg;

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(m);
        if let Some(w) = warm.or(cfg.warm_start.as_ref()) {
            if w.x.len() == n && w.y.len() == m {
                x.copy_from(&w.x);
                y.copy_from(&w.y);
            }
        }
        let mut ax = DVector::zeros(m);
        self.a.mul_vec(&x, &mut ax);
        let mut z = ax.clone();
        self.project_constraint_set(prog, &mut z);

        let mut rhs = DVector::zeros(n + m);
        let mut rhs0 = DVector::zeros(n + m);
        let mut kkt_scratch = DVector::zeros(n + m);
        let mut relaxed = DVector::zeros(m);
        let mut px = DVector::zeros(n);
        let mut aty = DVector::zeros(n);
        let mut status = SolverStatus::MaxIterReached;
        let mut iterations = cfg.max_iter;
        let mut prim = f64::INFINITY;
        let mut dual = f64::INFINITY;
        let mut y_prev_check = y.clone();
        let mut log = Vec::new();

        let mut best: Option<(f64, DVector<f64>, DVector<f64>, f64, f64)> = None;

        for k in 1..=cfg.max_iter {
            for i in 0..n {
                rhs[i] = SIGMA_REG * x[i] - prog.q[i];
            }
            for i in 0..m {
                rhs[n + i] = z[i] - y[i] / self.rho_rows[i];
            }
            self.kkt_solve_refined(&mut rhs, &mut rhs0, &mut kkt_scratch);
            for i in 0..n {
                x[i] = rhs[i];
            }
            self.a.mul_vec(&x, &mut ax);
            for i in 0..m {
                relaxed[i] = RELAXATION * ax[i] + (1.0 - RELAXATION) * z[i];
                z[i] = relaxed[i] + y[i] / self.rho_rows[i];
            }
            self.project_constraint_set(prog, &mut z);
            for i in 0..m {
                y[i] += self.rho_rows[i] * (relaxed[i] - z[i]);
            }

            prim = stacked_violation(prog, &ax);
            prog.p.mul_vec(&x, &mut px);
            self.a.mul_vec_transpose(&y, &mut aty);
            let mut dual_inf: f64 = 0.0;
            for i in 0..n {
                dual_inf = dual_inf.max((px[i] + prog.q[i] + aty[i]).abs());
            }
            dual = dual_inf;
            if cfg.log_iterations {
                log.push((k, prim, dual));
            }

            // The relative term speeds up large-scale stopping but the
            // solved contract promises violations within 10 * eps_abs.
            let eps_prim =
                (cfg.eps_abs + cfg.eps_rel * ax.amax().max(z.amax())).min(10.0 * cfg.eps_abs);
            let eps_dual =
                cfg.eps_abs + cfg.eps_rel * px.amax().max(aty.amax()).max(prog.q.amax());
            if prim <= eps_prim && dual <= eps_dual {
                status = SolverStatus::Solved;
                iterations = k;
                break;
            }

            // A moderately converged iterate usually identifies the active
            // set; an accepted polish that meets the strict tolerances ends
            // the solve orders of magnitude earlier than the plain loop.
            if cfg.polish && k % POLISH_ATTEMPT_INTERVAL == 0 {
                let trigger = (100.0 * cfg.eps_abs).max(1e-4);
                if prim <= trigger && dual <= trigger.max(eps_dual * 100.0) {
                    if let Some((x_hat, y_hat, p_prim, p_dual)) =
                        self.try_polish(prog, &x, &y, prim, dual)
                    {
                        if p_prim <= eps_prim && p_dual <= eps_dual {
                            let objective = prog.objective(&x_hat);
                            return SolverResult {
                                status: SolverStatus::Solved,
                                objective,
                                x: x_hat,
                                y: y_hat,
                                iterations: k,
                                primal_residual: p_prim,
                                dual_residual: p_dual,
                                iteration_log: log,
                            };
                        }
                    }
                }
            }

            let score = prim.max(dual);
            let improved = best.as_ref().map_or(true, |(s, ..)| score < *s);
            if improved {
                best = Some((score, x.clone(), y.clone(), prim, dual));
            }

            if k % INFEAS_CHECK_INTERVAL == 0 {
                let dy = &y - &y_prev_check;
                y_prev_check.copy_from(&y);
                let ndy = dy.amax();
                if ndy > 1e-10 {
                    let e = dy / ndy;
                    self.a.mul_vec_transpose(&e, &mut aty);
                    if aty.amax() <= EPS_PINF {
                        if let Some(support) = self.support(prog, &e) {
                            if support <= -EPS_PINF {
                                status = SolverStatus::PrimalInfeasibleCertificate;
                                iterations = k;
                                break;
                            }
                        }
                    }
                }
                if y.amax() > DUAL_GROWTH_LIMIT {
                    status = SolverStatus::PrimalInfeasibleCertificate;
                    iterations = k;
                    break;
                }
            }
        }

        if status == SolverStatus::MaxIterReached {
            if let Some((_, bx, by, bp, bd)) = best {
                if bp.max(bd) < prim.max(dual) {
                    x = bx;
                    y = by;
                    prim = bp;
                    dual = bd;
                }
            }
        }

        let mut result = SolverResult {
            status,
            objective: prog.objective(&x),
            x,
            y,
            iterations,
            primal_residual: prim,
            dual_residual: dual,
            iteration_log: log,
        };

        if result.status != SolverStatus::PrimalInfeasibleCertificate && cfg.polish {
            if let Some((px_hat, py_hat, p_prim, p_dual)) = self.try_polish(
                prog,
                &result.x,
                &result.y,
                result.primal_residual,
                result.dual_residual,
            ) {
                result.objective = prog.objective(&px_hat);
                result.x = px_hat;
                result.y = py_hat;
                result.primal_residual = p_prim;
                result.dual_residual = p_dual;
                if p_prim <= cfg.eps_abs && p_dual <= cfg.eps_abs {
                    result.status = SolverStatus::Solved;
                }
            }
        }
        result
    }

    /// Active-set refinement: pins the guessed active rows, solves the
    /// resulting equality-constrained problem exactly, then iterates the
    /// guess (dropping wrong-signed rows, adding violated ones) a bounded
    /// number of rounds. Returns a replacement candidate only when it
    /// improves both residuals and carries consistent multipliers; cone
    /// blocks on their smooth boundary make the active set non-polyhedral,
    /// in which case polish is skipped.
    fn try_polish(
        &self,
        prog: &ConeProgram,
        x_cur: &DVector<f64>,
        y_cur: &DVector<f64>,
        prim_cur: f64,
        dual_cur: f64,
    ) -> Option<(DVector<f64>, DVector<f64>, f64, f64)> {
        let m_eq = prog.m_eq();
        let m_box = prog.m_box();
        let cone_base = m_eq + m_box;
        let act_tol = 1e-12;

        // Initial guess from the dual iterate: (box row, at-upper) pairs.
        let mut active_box: Vec<(usize, bool)> = Vec::new();
        for i in 0..m_box {
            let yi = y_cur[m_eq + i];
            if yi > act_tol {
                active_box.push((i, true));
            } else if yi < -act_tol {
                active_box.push((i, false));
            }
        }
        // Cone blocks: inactive (dual ~ 0) are dropped; apex blocks are
        // pinned to z = 0; anything else aborts the polish.
        let mut apex_blocks: Vec<usize> = Vec::new();
        let mut w_scratch = DVector::zeros(self.m);
        self.a.mul_vec(x_cur, &mut w_scratch);
        for (j, blk) in prog.soc_blocks.iter().enumerate() {
            let o = cone_base + 3 * j;
            let ynorm = y_cur[o]
                .abs()
                .max(y_cur[o + 1].abs())
                .max(y_cur[o + 2].abs());
            if ynorm <= act_tol {
                continue;
            }
            let z0 = w_scratch[o] + blk.offset[0];
            let z1 = w_scratch[o + 1] + blk.offset[1];
            let z2 = w_scratch[o + 2] + blk.offset[2];
            let znorm = (z0 * z0 + z1 * z1 + z2 * z2).sqrt();
            if znorm <= (10.0 * self.cfg.eps_abs).max(1e-7) {
                apex_blocks.push(j);
            } else {
                return None;
            }
        }

        for _round in 0..POLISH_ACTIVE_SET_ROUNDS {
            let (x_hat, nu) = self.solve_pinned(prog, &active_box, &apex_blocks)?;

            // Drop wrong-signed rows, add rows the candidate violates.
            let mut next: Vec<(usize, bool)> = Vec::new();
            let mut membership = vec![false; m_box];
            let mut changed = false;
            for (k, &(i, upper)) in active_box.iter().enumerate() {
                let v = nu[m_eq + k];
                if (upper && v < -1e-9) || (!upper && v > 1e-9) {
                    changed = true;
                } else {
                    next.push((i, upper));
                    membership[i] = true;
                }
            }
            let mut box_vals = DVector::zeros(m_box);
            prog.a_box.mul_vec(&x_hat, &mut box_vals);
            for i in 0..m_box {
                if membership[i] {
                    continue;
                }
                if box_vals[i] > prog.hi[i] + 1e-9 {
                    next.push((i, true));
                    changed = true;
                } else if box_vals[i] < prog.lo[i] - 1e-9 {
                    next.push((i, false));
                    changed = true;
                }
            }
            if changed {
                next.sort_unstable();
                active_box = next;
                continue;
            }

            // Apex multipliers must lie in the polar cone.
            for (k, _) in apex_blocks.iter().enumerate() {
                let o = m_eq + active_box.len() + 3 * k;
                let (v0, v1, v2) = (nu[o], nu[o + 1], nu[o + 2]);
                if v1.hypot(v2) > -v0 + 1e-9 * (1.0 + v0.abs()) {
                    return None;
                }
            }

            // Reassemble the full dual vector and accept on improvement.
            let mut y_hat = DVector::zeros(self.m);
            for i in 0..m_eq {
                y_hat[i] = nu[i];
            }
            for (k, &(i, _)) in active_box.iter().enumerate() {
                y_hat[m_eq + i] = nu[m_eq + k];
            }
            for (k, &j) in apex_blocks.iter().enumerate() {
                let o = m_eq + active_box.len() + 3 * k;
                for r in 0..3 {
                    y_hat[cone_base + 3 * j + r] = nu[o + r];
                }
            }
            let (p_prim, p_dual) = kkt_residuals(prog, &x_hat, &y_hat);
            if p_prim <= prim_cur && p_dual <= dual_cur {
                return Some((x_hat, y_hat, p_prim, p_dual));
            }
            return None;
        }
        None
    }

    /// Solves the equality-constrained problem with the given active box
    /// rows and apex cone blocks pinned (regularized KKT plus iterative
    /// refinement). Returns the primal point and the active multipliers.
    fn solve_pinned(
        &self,
        prog: &ConeProgram,
        active_box: &[(usize, bool)],
        apex_blocks: &[usize],
    ) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.n;
        let m_eq = prog.m_eq();
        let mut tri: Vec<(usize, usize, f64)> = Vec::new();
        let mut b_act: Vec<f64> = Vec::new();
        for (r, c, v) in prog.a_eq.iter() {
            tri.push((r, c, v));
        }
        let mut row = m_eq;
        b_act.extend(prog.b_eq.iter());
        for &(i, upper) in active_box {
            for p in 0..prog.a_box.ncols {
                for idx in prog.a_box.col_ptr[p]..prog.a_box.col_ptr[p + 1] {
                    if prog.a_box.row_idx[idx] == i {
                        tri.push((row, p, prog.a_box.values[idx]));
                    }
                }
            }
            b_act.push(if upper { prog.hi[i] } else { prog.lo[i] });
            row += 1;
        }
        for &j in apex_blocks {
            let blk = &prog.soc_blocks[j];
            for (r, c, v) in blk.selector.iter() {
                tri.push((row + r, c, v));
            }
            for r in 0..3 {
                b_act.push(-blk.offset[r]);
            }
            row += 3;
        }
        let m_act = row;
        let a_act = CscMatrix::from_triplets(m_act, n, &tri);

        let mut kkt_tri: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in prog.p.iter() {
            if r <= c {
                kkt_tri.push((r, c, v));
            }
        }
        for j in 0..n {
            kkt_tri.push((j, j, POLISH_REG));
        }
        for (r, c, v) in a_act.iter() {
            kkt_tri.push((c, n + r, v));
        }
        for i in 0..m_act {
            kkt_tri.push((n + i, n + i, -POLISH_REG));
        }
        let kkt_upper = CscMatrix::from_triplets(n + m_act, n + m_act, &kkt_tri);
        let sym = ldl::symbolic(&kkt_upper).ok()?;
        let fac = ldl::factor(&kkt_upper, &sym).ok()?;

        let mut sol = DVector::zeros(n + m_act);
        for i in 0..n {
            sol[i] = -prog.q[i];
        }
        for i in 0..m_act {
            sol[n + i] = b_act[i];
        }
        fac.solve_in_place(&mut sol);

        let mut x_hat = DVector::from_fn(n, |i, _| sol[i]);
        let mut nu = DVector::from_fn(m_act, |i, _| sol[n + i]);
        let mut px = DVector::zeros(n);
        let mut residual = DVector::zeros(n + m_act);
        for _ in 0..POLISH_REFINE_STEPS {
            prog.p.mul_vec(&x_hat, &mut px);
            let mut atn = DVector::zeros(n);
            a_act.mul_vec_transpose(&nu, &mut atn);
            for i in 0..n {
                residual[i] = -prog.q[i] - px[i] - atn[i];
            }
            let mut ax_hat = DVector::zeros(m_act);
            a_act.mul_vec(&x_hat, &mut ax_hat);
            for i in 0..m_act {
                residual[n + i] = b_act[i] - ax_hat[i];
            }
            fac.solve_in_place(&mut residual);
            for i in 0..n {
                x_hat[i] += residual[i];
            }
            for i in 0..m_act {
                nu[i] += residual[n + i];
            }
        }
        Some((x_hat, nu))
    }
}
